"""Shared per-pixel numerics: forward transforms and their hand-derived adjoints.

Every color transform used by the public modules lives here exactly once, as a
``*_fwd`` function returning ``(output, ctx)`` and a matching ``*_bwd`` that
consumes the ctx.  Non-differentiable points (clamp bounds, ReLU knots,
min/max ties) use subgradient 0; the stored ctx carries enough information to
audit how close a forward pass came to any of those kinks.

All functions operate on raw float64 arrays; shapes are ``(H, W, 3)`` for RGB
and ``(H, W)`` for planes/parameters unless noted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi
SIXTH = np.pi / 3.0  # one hue sector (60 degrees)


def expit(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def clip01(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0.0, 1.0)


def _scatter_channel(dst: np.ndarray, idx: np.ndarray, val: np.ndarray) -> None:
    """dst[..., idx] += val for a per-pixel channel index array."""
    for j in range(3):
        dst[..., j] += val * (idx == j)


def _mat3_vec(mat: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """(..., 3, 3) @ (..., 3) without einsum overhead."""
    out = np.empty_like(vec)
    for i in range(3):
        out[..., i] = (
            mat[..., i, 0] * vec[..., 0]
            + mat[..., i, 1] * vec[..., 1]
            + mat[..., i, 2] * vec[..., 2]
        )
    return out


def _mat3t_vec(mat: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """(..., 3, 3) transposed @ (..., 3)."""
    out = np.empty_like(vec)
    for j in range(3):
        out[..., j] = (
            mat[..., 0, j] * vec[..., 0]
            + mat[..., 1, j] * vec[..., 1]
            + mat[..., 2, j] * vec[..., 2]
        )
    return out


def _outer3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(..., 3) outer (..., 3) -> (..., 3, 3)."""
    out = np.empty(a.shape + (3,), dtype=a.dtype)
    for i in range(3):
        for j in range(3):
            out[..., i, j] = a[..., i] * b[..., j]
    return out


def _gather_channel(src: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return np.take_along_axis(src, idx[..., None], axis=-1)[..., 0]


# ---------------------------------------------------------------------------
# RGB <-> HSV
# ---------------------------------------------------------------------------

@dataclass
class DecomposeCtx:
    rgb: np.ndarray
    imax: np.ndarray
    imin: np.ndarray
    cmax: np.ndarray
    cmin: np.ndarray
    delta: np.ndarray


def decompose_fwd(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, DecomposeCtx]:
    """Standard HSV decomposition: V = Cmax, S = (Cmax-Cmin)/Cmax, H in [0, 2*pi).

    Conventions for degenerate pixels: S = 0 when Cmax = 0, H = 0 when
    Cmax = Cmin.  Ties take the first channel (argmax/argmin order R, G, B).
    """
    imax = np.argmax(rgb, axis=-1)
    imin = np.argmin(rgb, axis=-1)
    cmax = _gather_channel(rgb, imax)
    cmin = _gather_channel(rgb, imin)
    delta = cmax - cmin

    v = cmax
    safe_cmax = np.where(cmax > 0.0, cmax, 1.0)
    s = np.where(cmax > 0.0, delta / safe_cmax, 0.0)

    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    safe_d = np.where(delta > 0.0, delta, 1.0)
    hr = ((g - b) / safe_d) % 6.0
    hg = (b - r) / safe_d + 2.0
    hb = (r - g) / safe_d + 4.0
    hsel = np.choose(imax, [hr, hg, hb])
    h = np.where(delta > 0.0, SIXTH * hsel, 0.0)

    return h, s, v, DecomposeCtx(rgb, imax, imin, cmax, cmin, delta)


def decompose_bwd(
    ctx: DecomposeCtx, dh: np.ndarray | None, ds: np.ndarray | None, dv: np.ndarray | None
) -> np.ndarray:
    drgb = np.zeros_like(ctx.rgb)
    chromatic = ctx.delta > 0.0
    lit = ctx.cmax > 0.0

    if dv is not None:
        _scatter_channel(drgb, ctx.imax, dv)

    if ds is not None:
        safe_cmax = np.where(lit, ctx.cmax, 1.0)
        _scatter_channel(drgb, ctx.imax, np.where(lit, ds * ctx.cmin / safe_cmax**2, 0.0))
        _scatter_channel(drgb, ctx.imin, np.where(lit, -ds / safe_cmax, 0.0))

    if dh is not None:
        safe_d = np.where(chromatic, ctx.delta, 1.0)
        r, g, b = ctx.rgb[..., 0], ctx.rgb[..., 1], ctx.rgb[..., 2]
        n = np.choose(ctx.imax, [g - b, b - r, r - g])
        dh_eff = np.where(chromatic, dh * SIXTH, 0.0)
        # d h / d numerator and d h / d delta
        dn = dh_eff / safe_d
        dd = -dh_eff * n / safe_d**2
        _scatter_channel(drgb, (ctx.imax + 1) % 3, dn)
        _scatter_channel(drgb, (ctx.imax + 2) % 3, -dn)
        _scatter_channel(drgb, ctx.imax, dd)
        _scatter_channel(drgb, ctx.imin, -dd)

    return drgb


@dataclass
class ComposeCtx:
    sector: np.ndarray
    t: np.ndarray
    s: np.ndarray
    v: np.ndarray
    hp: np.ndarray


# per-sector role of each RGB channel: 0 -> v, 1 -> x + m, 2 -> m
_ROLE_R = np.array([0, 1, 2, 2, 1, 0])
_ROLE_G = np.array([1, 0, 0, 1, 2, 2])
_ROLE_B = np.array([2, 2, 1, 0, 0, 1])


def compose_fwd(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, ComposeCtx]:
    """Inverse HSV conversion; exact round trip for S > 0, V > 0 pixels."""
    hp = (h / SIXTH) % 6.0
    sector = np.minimum(hp.astype(np.int64), 5)
    t = hp % 2.0 - 1.0
    c = v * s
    xval = c * (1.0 - np.abs(t))
    m = v - c

    chan_c = v
    chan_x = xval + m
    chan_m = m
    choices = [chan_c, chan_x, chan_m]
    rgb = np.stack(
        [
            np.choose(_ROLE_R[sector], choices),
            np.choose(_ROLE_G[sector], choices),
            np.choose(_ROLE_B[sector], choices),
        ],
        axis=-1,
    )
    return rgb, ComposeCtx(sector, t, s, v, hp)


def compose_bwd(ctx: ComposeCtx, drgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    roles = np.stack(
        [_ROLE_R[ctx.sector], _ROLE_G[ctx.sector], _ROLE_B[ctx.sector]], axis=-1
    )
    d_c = np.where(roles == 0, drgb, 0.0).sum(axis=-1)
    d_x = np.where(roles == 1, drgb, 0.0).sum(axis=-1)
    d_m = np.where(roles == 2, drgb, 0.0).sum(axis=-1)

    a = np.abs(ctx.t)
    s, v = ctx.s, ctx.v
    dv = d_c + d_x * (1.0 - s * a) + d_m * (1.0 - s)
    ds = d_x * (-v * a) + d_m * (-v)
    dh = d_x * (-v * s * np.sign(ctx.t)) / SIXTH
    return dh, ds, dv


# ---------------------------------------------------------------------------
# Value curve (stack of parameterized ReLUs)
# ---------------------------------------------------------------------------

@dataclass
class ValueCurveCtx:
    shifted: np.ndarray  # (H, W, m), x - knot
    gate: np.ndarray     # (H, W) bool, pre-clamp inside (0, 1)
    phi: np.ndarray
    pre: np.ndarray


def value_curve_fwd(
    x: np.ndarray, v_min: np.ndarray, phi: np.ndarray
) -> tuple[np.ndarray, ValueCurveCtx]:
    """out = clamp01(V_min + sum_i phi_i * max(x - (i-1)/m, 0)) per pixel."""
    m = phi.shape[-1]
    knots = np.arange(m, dtype=x.dtype) / m
    shifted = x[..., None] - knots
    relus = np.maximum(shifted, 0.0)
    pre = v_min + (phi * relus).sum(axis=-1)
    out = clip01(pre)
    gate = (pre > 0.0) & (pre < 1.0)
    return out, ValueCurveCtx(shifted, gate, phi, pre)


def value_curve_bwd(
    ctx: ValueCurveCtx, dout: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (dx, dv_min, dphi)."""
    du = dout * ctx.gate
    dv_min = du
    dphi = du[..., None] * np.maximum(ctx.shifted, 0.0)
    dx = du * (ctx.phi * (ctx.shifted > 0.0)).sum(axis=-1)
    return dx, dv_min, dphi


# ---------------------------------------------------------------------------
# Saturation transform (per-pixel contrast about the channel median)
# ---------------------------------------------------------------------------

@dataclass
class SatCtx:
    rgb: np.ndarray
    imax: np.ndarray
    imin: np.ndarray
    cmed: np.ndarray
    sigma_raw: np.ndarray
    s_eff: np.ndarray
    s_gate: np.ndarray  # clip(sigma) slope
    gates: np.ndarray   # (H, W, 3) pre-clamp inside (0, 1)
    pre: np.ndarray


def sat_transform_fwd(rgb: np.ndarray, sigma: np.ndarray) -> tuple[np.ndarray, SatCtx]:
    """out_ch = clamp01(x_ch + (x_ch - C_med) * clip(sigma)), C_med = (Cmin+Cmax)/2."""
    imax = np.argmax(rgb, axis=-1)
    imin = np.argmin(rgb, axis=-1)
    cmed = 0.5 * (_gather_channel(rgb, imax) + _gather_channel(rgb, imin))
    s_eff = np.clip(sigma, -1.0, 1.0)
    s_gate = (np.abs(sigma) < 1.0).astype(np.float64)
    pre = rgb + (rgb - cmed[..., None]) * s_eff[..., None]
    out = clip01(pre)
    gates = (pre > 0.0) & (pre < 1.0)
    return out, SatCtx(rgb, imax, imin, cmed, np.asarray(sigma), s_eff, s_gate, gates, pre)


def sat_transform_bwd(ctx: SatCtx, dout: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Returns (drgb, dsigma)."""
    du = dout * ctx.gates
    dsigma = (du * (ctx.rgb - ctx.cmed[..., None])).sum(axis=-1) * ctx.s_gate
    drgb = du * (1.0 + ctx.s_eff[..., None])
    dcmed = -du.sum(axis=-1) * ctx.s_eff
    _scatter_channel(drgb, ctx.imax, 0.5 * dcmed)
    _scatter_channel(drgb, ctx.imin, 0.5 * dcmed)
    return drgb, dsigma


# ---------------------------------------------------------------------------
# Per-pixel 3x4 affine (rotation part + translation)
# ---------------------------------------------------------------------------

@dataclass
class AffineCtx:
    rgb: np.ndarray
    rot: np.ndarray    # (H, W, 3, 3)
    gates: np.ndarray
    pre: np.ndarray


def affine_transform_fwd(rgb: np.ndarray, delta: np.ndarray) -> tuple[np.ndarray, AffineCtx]:
    """out = clamp01(R @ x + t) with delta = [R | t] per pixel."""
    rot = delta[..., :, :3]
    t = delta[..., :, 3]
    pre = _mat3_vec(rot, rgb) + t
    out = clip01(pre)
    gates = (pre > 0.0) & (pre < 1.0)
    return out, AffineCtx(rgb, rot, gates, pre)


def affine_transform_bwd(ctx: AffineCtx, dout: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Returns (drgb, ddelta)."""
    du = dout * ctx.gates
    ddelta = np.empty(ctx.rot.shape[:-2] + (3, 4), dtype=du.dtype)
    ddelta[..., :, :3] = _outer3(du, ctx.rgb)
    ddelta[..., :, 3] = du
    drgb = _mat3t_vec(ctx.rot, du)
    return drgb, ddelta


# ---------------------------------------------------------------------------
# Attentive blend
# ---------------------------------------------------------------------------

@dataclass
class AttentiveCtx:
    base: np.ndarray
    refined_in: np.ndarray
    alpha: np.ndarray
    rot: np.ndarray
    ref: np.ndarray
    gates: np.ndarray
    pre: np.ndarray


def attentive_fwd(
    base: np.ndarray, refined_in: np.ndarray, a_raw: np.ndarray, w_ref: np.ndarray
) -> tuple[np.ndarray, AttentiveCtx]:
    """out = clamp01(base * alpha + (W_ref @ x + t) * (1 - alpha)), alpha = logistic(a_raw)."""
    alpha = expit(a_raw)
    rot = w_ref[..., :, :3]
    t = w_ref[..., :, 3]
    ref = _mat3_vec(rot, refined_in) + t
    pre = base * alpha[..., None] + ref * (1.0 - alpha[..., None])
    out = clip01(pre)
    gates = (pre > 0.0) & (pre < 1.0)
    return out, AttentiveCtx(base, refined_in, alpha, rot, ref, gates, pre)


def attentive_bwd(
    ctx: AttentiveCtx, dout: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (drefined_in, da_raw, dw_ref); the base image is a constant input."""
    du = dout * ctx.gates
    one_m = (1.0 - ctx.alpha)[..., None]
    dalpha = (du * (ctx.base - ctx.ref)).sum(axis=-1)
    da_raw = dalpha * ctx.alpha * (1.0 - ctx.alpha)
    du_scaled = du * one_m
    dw_ref = np.empty(ctx.rot.shape[:-2] + (3, 4), dtype=du.dtype)
    dw_ref[..., :, :3] = _outer3(du_scaled, ctx.refined_in)
    dw_ref[..., :, 3] = du_scaled
    drefined = _mat3t_vec(ctx.rot, du_scaled)
    return drefined, da_raw, dw_ref


# ---------------------------------------------------------------------------
# Separable Gaussian blur with clamp-to-edge padding
# ---------------------------------------------------------------------------

def gaussian_kernel(std: float, k: int) -> np.ndarray:
    if k % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {k}")
    if std <= 0.0:
        raise ValueError(f"std must be positive, got {std}")
    offsets = np.arange(k, dtype=np.float64) - k // 2
    w = np.exp(-0.5 * (offsets / std) ** 2)
    return w / w.sum()


def _blur_axis(x: np.ndarray, w: np.ndarray, axis: int) -> np.ndarray:
    k = len(w)
    p = k // 2
    moved = np.moveaxis(x, axis, 0)
    pad = [(p, p)] + [(0, 0)] * (moved.ndim - 1)
    padded = np.pad(moved, pad, mode="edge")
    n = moved.shape[0]
    out = np.zeros_like(moved)
    for j in range(k):
        out += w[j] * padded[j : j + n]
    return np.moveaxis(out, 0, axis)


def _blur_axis_adjoint(g: np.ndarray, w: np.ndarray, axis: int) -> np.ndarray:
    k = len(w)
    p = k // 2
    moved = np.moveaxis(g, axis, 0)
    n = moved.shape[0]
    gp = np.zeros((n + 2 * p,) + moved.shape[1:])
    for j in range(k):
        gp[j : j + n] += w[j] * moved
    out = gp[p : p + n].copy()
    out[0] += gp[:p].sum(axis=0)
    out[-1] += gp[p + n :].sum(axis=0)
    return np.moveaxis(out, 0, axis)


def blur2d(x: np.ndarray, std: float, k: int) -> np.ndarray:
    w = gaussian_kernel(std, k).astype(x.dtype)
    return _blur_axis(_blur_axis(x, w, 0), w, 1)


def blur2d_adjoint(g: np.ndarray, std: float, k: int) -> np.ndarray:
    w = gaussian_kernel(std, k).astype(g.dtype)
    return _blur_axis_adjoint(_blur_axis_adjoint(g, w, 1), w, 0)
