"""RGB <-> HSV conversion and the smoothed V/S/H supervision maps.

The smoothed maps are low-frequency surrogates of the raw HSV channels:

* value: Gaussian-blurred V plane (std 1.5, kernel 5),
* saturation: a nine-step selective-color pass that desaturates the six
  chromatic sectors and boosts blacks/whites/neutrals, rendered as one
  gray plane,
* hue: the image re-rendered with V fixed to 0.8 and S fixed to 0.5 so
  hue is the only surviving degree of freedom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _ops
from .image import HsvImage, PlaneImage, RgbImage

SMOOTH_VALUE_STD = 1.5
SMOOTH_VALUE_KERNEL = 5
SMOOTH_HUE_V = 0.8
SMOOTH_HUE_S = 0.5

# selective-color pass: six chromatic sectors desaturated, then blacks,
# whites and neutrals boosted
_SECTOR_CENTERS = {
    "red": 0.0,
    "green": 2.0 * np.pi / 3.0,
    "blue": 4.0 * np.pi / 3.0,
    "cyan": np.pi,
    "magenta": 5.0 * np.pi / 3.0,
    "yellow": np.pi / 3.0,
}
_STEP_ORDER = ("red", "green", "blue", "cyan", "magenta", "yellow", "black", "white", "neutral")
_STEP_SIGMA = np.array([-1.0] * 6 + [1.0] * 3)
_SECTOR_HALF_WIDTH = np.pi / 6.0  # sectors are 60 degrees wide
_RAMP_WIDTH = 0.05  # transition width of the black/white/neutral memberships


def rgb_to_hsv(img: RgbImage) -> HsvImage:
    h, s, v, _ = _ops.decompose_fwd(img.data)
    return HsvImage(PlaneImage(h), PlaneImage(s), PlaneImage(v))


def hsv_to_rgb(img: HsvImage) -> RgbImage:
    rgb, _ = _ops.compose_fwd(img.h.data, img.s.data, img.v.data)
    return RgbImage(rgb)


def gaussian_blur(p: PlaneImage, std: float, k: int) -> PlaneImage:
    """Separable normalized Gaussian, clamp-to-edge boundary handling."""
    return PlaneImage(_ops.blur2d(p.data, std, k))


def smooth_value_map(img: RgbImage) -> PlaneImage:
    plane, _ = smooth_value_fwd(img.data)
    return PlaneImage(plane)


def smooth_saturation_map(img: RgbImage) -> PlaneImage:
    plane, _ = smooth_sat_fwd(img.data)
    return PlaneImage(plane)


def smooth_hue_map(img: RgbImage) -> RgbImage:
    rgb, _ = smooth_hue_fwd(img.data)
    return RgbImage(rgb)


# ---------------------------------------------------------------------------
# Raw forward/backward pairs (consumed by the fitting engine)
# ---------------------------------------------------------------------------

def smooth_value_fwd(rgb: np.ndarray) -> tuple[np.ndarray, _ops.DecomposeCtx]:
    _, _, v, ctx = _ops.decompose_fwd(rgb)
    return _ops.blur2d(v, SMOOTH_VALUE_STD, SMOOTH_VALUE_KERNEL), ctx


def smooth_value_bwd(ctx: _ops.DecomposeCtx, dplane: np.ndarray) -> np.ndarray:
    dv = _ops.blur2d_adjoint(dplane, SMOOTH_VALUE_STD, SMOOTH_VALUE_KERNEL)
    return _ops.decompose_bwd(ctx, None, None, dv)


@dataclass
class SmoothHueCtx:
    dec: _ops.DecomposeCtx
    comp: _ops.ComposeCtx


def smooth_hue_fwd(rgb: np.ndarray) -> tuple[np.ndarray, SmoothHueCtx]:
    h, _, _, dec = _ops.decompose_fwd(rgb)
    out, comp = _ops.compose_fwd(
        h, np.full_like(h, SMOOTH_HUE_S), np.full_like(h, SMOOTH_HUE_V)
    )
    return out, SmoothHueCtx(dec, comp)


def smooth_hue_bwd(ctx: SmoothHueCtx, dout: np.ndarray) -> np.ndarray:
    dh, _, _ = _ops.compose_bwd(ctx.comp, dout)
    return _ops.decompose_bwd(ctx.dec, dh, None, None)


def _ramp(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """clip(x, 0, 1) together with its slope gate."""
    return np.clip(x, 0.0, 1.0), ((x > 0.0) & (x < 1.0)).astype(np.float64)


@dataclass
class RoiCtx:
    h: np.ndarray
    s: np.ndarray
    v: np.ndarray
    wrapped: np.ndarray       # (6, H, W) signed hue offsets per sector
    tri: np.ndarray           # (6, H, W)
    black_gate: np.ndarray
    lows: np.ndarray
    lows_gate: np.ndarray
    vhigh: np.ndarray
    vhigh_gate: np.ndarray
    vlo: np.ndarray
    vlo_gate: np.ndarray
    vhi: np.ndarray
    vhi_gate: np.ndarray


def roi_weights_fwd(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, RoiCtx]:
    """Per-pixel membership weight of each selective-color step.

    Chromatic sectors use a triangular weight over hue distance scaled by S;
    black/white/neutral use V and S memberships with a narrow linear ramp at
    the region boundary so the pass stays differentiable.
    """
    weights = np.empty((9,) + h.shape, dtype=h.dtype)
    wrapped = np.empty((6,) + h.shape, dtype=h.dtype)
    tri = np.empty((6,) + h.shape, dtype=h.dtype)
    for i, name in enumerate(_STEP_ORDER[:6]):
        off = (h - _SECTOR_CENTERS[name] + np.pi) % (2.0 * np.pi) - np.pi
        wrapped[i] = off
        tri[i] = np.maximum(0.0, 1.0 - np.abs(off) / _SECTOR_HALF_WIDTH)
        weights[i] = tri[i] * s

    black, black_gate = _ramp((0.25 - v) / _RAMP_WIDTH)
    lows, lows_gate = _ramp((0.1 - s) / _RAMP_WIDTH)
    vhigh, vhigh_gate = _ramp((v - 0.75) / _RAMP_WIDTH)
    vlo, vlo_gate = _ramp((v - 0.25) / _RAMP_WIDTH)
    vhi, vhi_gate = _ramp((0.75 - v) / _RAMP_WIDTH)
    weights[6] = black
    weights[7] = vhigh * lows
    weights[8] = lows * vlo * vhi

    ctx = RoiCtx(
        h, s, v, wrapped, tri,
        black_gate, lows, lows_gate, vhigh, vhigh_gate, vlo, vlo_gate, vhi, vhi_gate,
    )
    return weights, ctx


def roi_weights_bwd(
    ctx: RoiCtx, dw: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    dh = np.zeros_like(ctx.h)
    ds = np.zeros_like(ctx.s)
    dv = np.zeros_like(ctx.v)
    inv = 1.0 / _RAMP_WIDTH
    for i in range(6):
        on = ctx.tri[i] > 0.0
        dh += np.where(
            on, dw[i] * ctx.s * (-np.sign(ctx.wrapped[i]) / _SECTOR_HALF_WIDTH), 0.0
        )
        ds += dw[i] * ctx.tri[i]

    dv += dw[6] * ctx.black_gate * (-inv)

    ds += dw[7] * ctx.vhigh * ctx.lows_gate * (-inv)
    dv += dw[7] * ctx.lows * ctx.vhigh_gate * inv

    ds += dw[8] * ctx.vlo * ctx.vhi * ctx.lows_gate * (-inv)
    dv += dw[8] * ctx.lows * ctx.vhi * ctx.vlo_gate * inv
    dv += dw[8] * ctx.lows * ctx.vlo * ctx.vhi_gate * (-inv)
    return dh, ds, dv


@dataclass
class SmoothSatCtx:
    dec: _ops.DecomposeCtx
    roi: RoiCtx
    steps: list


def smooth_sat_fwd(rgb: np.ndarray) -> tuple[np.ndarray, SmoothSatCtx]:
    h0, s0, v0, dec = _ops.decompose_fwd(rgb)
    weights, roi = roi_weights_fwd(h0, s0, v0)
    x = rgb
    steps = []
    for t in range(9):
        x, sctx = _ops.sat_transform_fwd(x, float(_STEP_SIGMA[t]) * weights[t])
        steps.append(sctx)
    return x.mean(axis=-1), SmoothSatCtx(dec, roi, steps)


def smooth_sat_bwd(ctx: SmoothSatCtx, dplane: np.ndarray) -> np.ndarray:
    dx = np.repeat(dplane[..., None] / 3.0, 3, axis=-1)
    dw = np.empty((9,) + dplane.shape, dtype=dplane.dtype)
    for t in range(8, -1, -1):
        dx, dsigma = _ops.sat_transform_bwd(ctx.steps[t], dx)
        dw[t] = float(_STEP_SIGMA[t]) * dsigma
    dh, ds, dv = roi_weights_bwd(ctx.roi, dw)
    return dx + _ops.decompose_bwd(ctx.dec, dh, ds, dv)
