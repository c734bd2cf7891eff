"""Objective evaluation with hand-derived gradients for grid fitting.

The fitting objective is evaluated on two streams (a low-resolution stream
capped at 256 px and the working-resolution stream).  This module runs the
pipeline while recording the per-stage contexts from :mod:`dccf._ops`, then
back-propagates the loss to every grid parameter:

    grid params --bilinear upsample--> per-pixel params --pipeline--> losses

The adjoint of the upsampling is a matrix transpose; every per-pixel step has
a closed-form backward next to its forward in ``_ops``/``colorspace``.

Parameters travel as a flat dict keyed by channel name (``val.v_min``,
``val.phi``, ``sat.sigma``, ``hue.delta``, ``attn.a_raw``, ``attn.w_ref``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _ops, colorspace, resample
from .filters import (
    AttentiveFilterMap,
    FilterStack,
    HueFilterMap,
    SaturationFilterMap,
    ValueFilterMap,
)
from .image import Mask, RgbImage
from .losses import MIN_FG_AREA, LossWeights

PARAM_KEYS = ("val.v_min", "val.phi", "sat.sigma", "hue.delta", "attn.a_raw", "attn.w_ref")

LOW_STREAM_MAX_SIDE = 256


def stack_to_params(stack: FilterStack) -> dict[str, np.ndarray]:
    return {
        "val.v_min": stack.val.v_min.copy(),
        "val.phi": stack.val.phi.copy(),
        "sat.sigma": stack.sat.sigma.copy(),
        "hue.delta": stack.hue.delta.copy(),
        "attn.a_raw": stack.attn.a_raw.copy(),
        "attn.w_ref": stack.attn.w_ref.copy(),
    }


def params_to_stack(params: dict[str, np.ndarray], order: tuple[str, str, str]) -> FilterStack:
    return FilterStack(
        val=ValueFilterMap(params["val.v_min"].copy(), params["val.phi"].copy()),
        sat=SaturationFilterMap(params["sat.sigma"].copy()),
        hue=HueFilterMap(params["hue.delta"].copy()),
        attn=AttentiveFilterMap(params["attn.a_raw"].copy(), params["attn.w_ref"].copy()),
        order=tuple(order),
    )


def zeros_like_params(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


def copy_params(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in params.items()}


# ---------------------------------------------------------------------------
# Pipeline forward with tape
# ---------------------------------------------------------------------------

@dataclass
class StageTape:
    channel: str
    dec_prev: _ops.DecomposeCtx
    comp: _ops.ComposeCtx
    value: Optional[_ops.ValueCurveCtx] = None
    sat: Optional[_ops.SatCtx] = None
    dec_filtered: Optional[_ops.DecomposeCtx] = None
    affine: Optional[_ops.AffineCtx] = None


@dataclass
class StreamTape:
    image: np.ndarray
    up: dict[str, np.ndarray]
    stages: list[StageTape]
    outputs: list[np.ndarray]  # i1, i2, i3
    i4: np.ndarray
    attn: _ops.AttentiveCtx


def pipeline_forward(
    image: np.ndarray, up: dict[str, np.ndarray], order: tuple[str, str, str]
) -> StreamTape:
    current = image
    stages: list[StageTape] = []
    outputs: list[np.ndarray] = []
    for channel in order:
        h, s, v, dec_prev = _ops.decompose_fwd(current)
        if channel == "V":
            v_new, vctx = _ops.value_curve_fwd(v, up["val.v_min"], up["val.phi"])
            out, comp = _ops.compose_fwd(h, s, v_new)
            stages.append(StageTape("V", dec_prev, comp, value=vctx))
        elif channel == "S":
            filtered, sctx = _ops.sat_transform_fwd(current, up["sat.sigma"])
            _, s_new, _, dec_f = _ops.decompose_fwd(filtered)
            out, comp = _ops.compose_fwd(h, s_new, v)
            stages.append(StageTape("S", dec_prev, comp, sat=sctx, dec_filtered=dec_f))
        else:
            filtered, actx = _ops.affine_transform_fwd(current, up["hue.delta"])
            h_new, _, _, dec_f = _ops.decompose_fwd(filtered)
            out, comp = _ops.compose_fwd(h_new, s, v)
            stages.append(StageTape("H", dec_prev, comp, affine=actx, dec_filtered=dec_f))
        outputs.append(out)
        current = out
    i4, attn = _ops.attentive_fwd(image, current, up["attn.a_raw"], up["attn.w_ref"])
    return StreamTape(image, up, stages, outputs, i4, attn)


def pipeline_backward(
    tape: StreamTape, d_outputs: list[np.ndarray], d_i4: np.ndarray
) -> dict[str, np.ndarray]:
    """Backward through the attentive blend and the three chromatic stages.

    ``d_outputs`` holds the loss gradients w.r.t. i1..i3; ``d_i4`` w.r.t. the
    final image.  Returns gradients w.r.t. the upsampled parameter planes.
    """
    grads = {k: np.zeros_like(v) for k, v in tape.up.items()}
    d_stage = [d.copy() for d in d_outputs]

    d_refined, d_a_raw, d_w_ref = _ops.attentive_bwd(tape.attn, d_i4)
    grads["attn.a_raw"] += d_a_raw
    grads["attn.w_ref"] += d_w_ref
    d_stage[2] += d_refined

    for k in range(2, -1, -1):
        st = tape.stages[k]
        dh, ds, dv = _ops.compose_bwd(st.comp, d_stage[k])
        if st.channel == "V":
            dx, dv_min, dphi = _ops.value_curve_bwd(st.value, dv)
            grads["val.v_min"] += dv_min
            grads["val.phi"] += dphi
            d_prev = _ops.decompose_bwd(st.dec_prev, dh, ds, dx)
        elif st.channel == "S":
            d_filtered = _ops.decompose_bwd(st.dec_filtered, None, ds, None)
            d_prev_sat, d_sigma = _ops.sat_transform_bwd(st.sat, d_filtered)
            grads["sat.sigma"] += d_sigma
            d_prev = _ops.decompose_bwd(st.dec_prev, dh, None, dv) + d_prev_sat
        else:
            d_filtered = _ops.decompose_bwd(st.dec_filtered, dh, None, None)
            d_prev_aff, d_delta = _ops.affine_transform_bwd(st.affine, d_filtered)
            grads["hue.delta"] += d_delta
            d_prev = _ops.decompose_bwd(st.dec_prev, None, ds, dv) + d_prev_aff
        if k > 0:
            d_stage[k - 1] += d_prev
    return grads


# ---------------------------------------------------------------------------
# Full objective (both streams + losses)
# ---------------------------------------------------------------------------

@dataclass
class _Stream:
    image: np.ndarray
    gt: np.ndarray
    area: float
    # cached ground-truth smooth maps (smooth mode only)
    gt_smooth_value: Optional[np.ndarray] = None
    gt_smooth_sat: Optional[np.ndarray] = None
    gt_smooth_hue: Optional[np.ndarray] = None
    gt_hsv: Optional[tuple[np.ndarray, np.ndarray, np.ndarray]] = None


class Objective:
    """Precomputed state for repeated loss/gradient evaluation during a fit."""

    def __init__(
        self,
        composite: RgbImage,
        gt: RgbImage,
        mask: Mask,
        grid_width: int,
        grid_height: int,
        weights: LossWeights,
        mode: str,
        order: tuple[str, str, str],
    ):
        if composite.data.shape != gt.data.shape:
            raise ValueError("composite and ground truth differ in size")
        if mask.data.shape != composite.data.shape[:2]:
            raise ValueError("mask does not match image size")
        self.weights = weights
        self.mode = mode
        self.order = tuple(order)
        self.grid_width = grid_width
        self.grid_height = grid_height

        h_px, w_px = composite.data.shape[:2]
        low_h, low_w = resample.fit_max_side(h_px, w_px, LOW_STREAM_MAX_SIDE)
        self.same_stream = (low_h, low_w) == (h_px, w_px)

        self.high = self._make_stream(composite.data, gt.data, mask.data, h_px, w_px)
        if self.same_stream:
            self.low = self.high
        else:
            comp_low = resample.downsample_area(composite.data, low_h, low_w)
            gt_low = resample.downsample_area(gt.data, low_h, low_w)
            mask_low = resample.downsample_area(mask.data, low_h, low_w)
            self.low = self._make_stream(comp_low, gt_low, mask_low, low_h, low_w)
        self._prepare_gt_caches()

    def _make_stream(self, image, gt, mask, h_px, w_px) -> _Stream:
        return _Stream(image=image, gt=gt, area=max(MIN_FG_AREA, float(mask.sum())))

    def _prepare_gt_caches(self) -> None:
        if self.mode == "smooth":
            sv, _ = colorspace.smooth_value_fwd(self.low.gt)
            ss, _ = colorspace.smooth_sat_fwd(self.low.gt)
            sh, _ = colorspace.smooth_hue_fwd(self.low.gt)
            self.low.gt_smooth_value = sv
            self.low.gt_smooth_sat = ss
            self.low.gt_smooth_hue = sh
        elif self.mode == "standard":
            h, s, v, _ = _ops.decompose_fwd(self.low.gt)
            self.low.gt_hsv = (h, s, v)

    # -- upsampling ---------------------------------------------------------

    def _upsample(self, stream: _Stream, params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        h_px, w_px = stream.image.shape[:2]
        return {k: resample.upsample_bilinear(v, h_px, w_px) for k, v in params.items()}

    def _upsample_adjoint(self, stream: _Stream, grads_up: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        return {
            k: resample.upsample_bilinear_adjoint(v, self.grid_height, self.grid_width)
            for k, v in grads_up.items()
        }

    # -- loss ---------------------------------------------------------------

    def loss_and_grads(
        self, params: dict[str, np.ndarray], want_grads: bool = True
    ) -> tuple[float, Optional[dict[str, np.ndarray]]]:
        w = self.weights
        tape_high = pipeline_forward(self.high.image, self._upsample(self.high, params), self.order)
        if self.same_stream:
            tape_low = tape_high
        else:
            tape_low = pipeline_forward(self.low.image, self._upsample(self.low, params), self.order)

        loss = 0.0
        # RGB terms on I3 and I4, both streams
        rgb_pairs = []  # (stream, tape, weight)
        if self.same_stream:
            rgb_pairs.append((self.high, tape_high, w.rgb_low + w.rgb_high))
        else:
            rgb_pairs.append((self.low, tape_low, w.rgb_low))
            rgb_pairs.append((self.high, tape_high, w.rgb_high))
        for stream, tape, weight in rgb_pairs:
            r3 = tape.outputs[2] - stream.gt
            r4 = tape.i4 - stream.gt
            loss += weight * ((r3 * r3).sum() + (r4 * r4).sum()) / stream.area

        aux = None
        if self.mode != "rgb_only":
            aux = self._aux_forward(tape_low)
            loss += w.value * aux["value"][0] + w.saturation * aux["sat"][0] + w.hue * aux["hue"][0]

        tv_total, tv_grads = _tv_value_and_grad(params, want_grads)
        loss += w.tv_weight * tv_total

        if not want_grads:
            return float(loss), None

        grads = zeros_like_params(params)

        # backward per stream
        for stream, tape, weight in rgb_pairs:
            d_outputs = [np.zeros_like(tape.outputs[0]) for _ in range(3)]
            d_outputs[2] += (2.0 * weight / stream.area) * (tape.outputs[2] - stream.gt)
            d_i4 = (2.0 * weight / stream.area) * (tape.i4 - stream.gt)
            if aux is not None and tape is tape_low:
                self._aux_backward(tape_low, aux, d_outputs)
            grads_up = pipeline_backward(tape, d_outputs, d_i4)
            acc = self._upsample_adjoint(stream, grads_up)
            for k in grads:
                grads[k] += acc[k]
        # aux loss on a separate low tape when streams differ
        if aux is not None and not self.same_stream:
            d_outputs = [np.zeros_like(tape_low.outputs[0]) for _ in range(3)]
            self._aux_backward(tape_low, aux, d_outputs)
            d_i4 = np.zeros_like(tape_low.i4)
            grads_up = pipeline_backward(tape_low, d_outputs, d_i4)
            acc = self._upsample_adjoint(self.low, grads_up)
            for k in grads:
                grads[k] += acc[k]

        for k in grads:
            grads[k] += w.tv_weight * tv_grads[k]
        return float(loss), grads

    # -- auxiliary HSV losses on the low stream -----------------------------

    def _aux_forward(self, tape: StreamTape) -> dict:
        """Returns {name: (loss_value, ctx...)} for value/sat/hue aux terms."""
        stream = self.low
        area = stream.area
        idx = {ch: self.order.index(ch) for ch in ("V", "S", "H")}
        out: dict = {"idx": idx}
        if self.mode == "smooth":
            sv, sv_ctx = colorspace.smooth_value_fwd(tape.outputs[idx["V"]])
            rv = sv - stream.gt_smooth_value
            out["value"] = (float((rv * rv).sum() / area), sv_ctx, rv)

            ss, ss_ctx = colorspace.smooth_sat_fwd(tape.outputs[idx["S"]])
            rs = ss - stream.gt_smooth_sat
            out["sat"] = (float((rs * rs).sum() / area), ss_ctx, rs)

            sh, sh_ctx = colorspace.smooth_hue_fwd(tape.outputs[idx["H"]])
            rh = sh - stream.gt_smooth_hue
            out["hue"] = (float((rh * rh).sum() / area), sh_ctx, rh)
        else:
            hg, sg, vg = stream.gt_hsv
            _, _, vp, v_ctx = _ops.decompose_fwd(tape.outputs[idx["V"]])
            rv = vp - vg
            out["value"] = (float((rv * rv).sum() / area), v_ctx, rv)

            _, sp, _, s_ctx = _ops.decompose_fwd(tape.outputs[idx["S"]])
            rs = sp - sg
            out["sat"] = (float((rs * rs).sum() / area), s_ctx, rs)

            hp, _, _, h_ctx = _ops.decompose_fwd(tape.outputs[idx["H"]])
            dh_angle = hp - hg
            out["hue"] = (float((1.0 - np.cos(dh_angle)).sum() / area), h_ctx, dh_angle)
        return out

    def _aux_backward(self, tape: StreamTape, aux: dict, d_outputs: list[np.ndarray]) -> None:
        w = self.weights
        area = self.low.area
        idx = aux["idx"]
        if self.mode == "smooth":
            _, sv_ctx, rv = aux["value"]
            d_outputs[idx["V"]] += colorspace.smooth_value_bwd(
                sv_ctx, (2.0 * w.value / area) * rv
            )
            _, ss_ctx, rs = aux["sat"]
            d_outputs[idx["S"]] += colorspace.smooth_sat_bwd(
                ss_ctx, (2.0 * w.saturation / area) * rs
            )
            _, sh_ctx, rh = aux["hue"]
            d_outputs[idx["H"]] += colorspace.smooth_hue_bwd(
                sh_ctx, (2.0 * w.hue / area) * rh
            )
        else:
            _, v_ctx, rv = aux["value"]
            d_outputs[idx["V"]] += _ops.decompose_bwd(
                v_ctx, None, None, (2.0 * w.value / area) * rv
            )
            _, s_ctx, rs = aux["sat"]
            d_outputs[idx["S"]] += _ops.decompose_bwd(
                s_ctx, None, (2.0 * w.saturation / area) * rs, None
            )
            _, h_ctx, dh_angle = aux["hue"]
            d_outputs[idx["H"]] += _ops.decompose_bwd(
                h_ctx, (w.hue / area) * np.sin(dh_angle), None, None
            )


def _tv_value_and_grad(
    params: dict[str, np.ndarray], want_grads: bool
) -> tuple[float, dict[str, np.ndarray]]:
    cells = params["sat.sigma"].shape[0] * params["sat.sigma"].shape[1]
    total = 0.0
    grads: dict[str, np.ndarray] = {}
    for key, arr in params.items():
        flat = arr.reshape(arr.shape[0], arr.shape[1], -1)
        d0 = np.diff(flat, axis=0)
        d1 = np.diff(flat, axis=1)
        total += np.abs(d0).sum() + np.abs(d1).sum()
        if want_grads:
            g = np.zeros_like(flat)
            s0 = np.sign(d0)
            g[1:] += s0
            g[:-1] -= s0
            s1 = np.sign(d1)
            g[:, 1:] += s1
            g[:, :-1] -= s1
            grads[key] = (g / cells).reshape(arr.shape)
    return total / cells, grads


# ---------------------------------------------------------------------------
# Kink-margin audit (support for finite-difference verification)
# ---------------------------------------------------------------------------

def _tie_margins(rgb: np.ndarray) -> np.ndarray:
    """Per-pixel distance to the nearest min/max channel tie."""
    srt = np.sort(rgb, axis=-1)
    return np.minimum(srt[..., 1] - srt[..., 0], srt[..., 2] - srt[..., 1])


def _clamp_margins(pre: np.ndarray) -> np.ndarray:
    dist = np.minimum(np.abs(pre), np.abs(1.0 - pre))
    if dist.ndim == 3:
        dist = dist.min(axis=-1)
    return dist


# Hue-valued quantities move faster than RGB-valued ones under a parameter
# perturbation (the hue formula amplifies by ~1/channel-spread), so their
# kink distances are shrunk before merging into the common margin map.
HUE_MARGIN_SCALE = 2.5


def _sector_margins(ctx: _ops.ComposeCtx) -> np.ndarray:
    frac = ctx.hp % 1.0
    dist = np.minimum(frac, 1.0 - frac)
    return np.where(ctx.s > 1e-3, dist, np.inf) / HUE_MARGIN_SCALE


def _sat_clip_margins(sigma_raw: np.ndarray, plateau_stable: bool) -> np.ndarray:
    """Distance of sigma to the clip bound at +-1.

    For region-weighted steps the weight cannot exceed 1, so pixels sitting
    exactly at |sigma| = 1 are on a flat plateau and stable; free grid
    parameters get the plain distance.
    """
    dist = np.abs(1.0 - np.abs(sigma_raw))
    if plateau_stable:
        return np.where(np.abs(sigma_raw) >= 1.0, np.inf, dist)
    return dist


def stream_margin_map(obj: Objective, params: dict[str, np.ndarray], stream: _Stream) -> np.ndarray:
    """Per-pixel distance to the nearest subgradient kink over one stream's pass.

    Finite-difference checks are only meaningful for parameters whose
    influence region stays away from clamp bounds, channel ties, hue sector
    edges, curve knots and region-weight ramps; this map lets a verifier
    exclude the affected grid cells.
    """
    up = obj._upsample(stream, params)
    tape = pipeline_forward(stream.image, up, obj.order)
    margin = np.full(stream.image.shape[:2], np.inf)

    def add(m: np.ndarray) -> None:
        nonlocal margin
        margin = np.minimum(margin, m)

    for k, st in enumerate(tape.stages):
        add(_tie_margins(st.dec_prev.rgb))
        add(_sector_margins(st.comp))
        if st.channel == "V":
            add(_clamp_margins(st.value.pre))
            if k > 0:  # first-stage curve input is a constant w.r.t. params
                add(np.abs(st.value.shifted).min(axis=-1))
        elif st.channel == "S":
            add(_clamp_margins(st.sat.pre))
            add(_sat_clip_margins(st.sat.sigma_raw, plateau_stable=False))
            add(_tie_margins(st.dec_filtered.rgb))
        else:
            add(_clamp_margins(st.affine.pre))
            add(_tie_margins(st.dec_filtered.rgb))
    add(_clamp_margins(tape.attn.pre))

    if obj.mode != "rgb_only" and stream is obj.low:
        idx = {ch: obj.order.index(ch) for ch in ("V", "S", "H")}
        if obj.mode == "standard":
            for ch in ("V", "S", "H"):
                add(_tie_margins(tape.outputs[idx[ch]]))
        else:
            add(_tie_margins(tape.outputs[idx["V"]]))
            _, hctx = colorspace.smooth_hue_fwd(tape.outputs[idx["H"]])
            add(_tie_margins(hctx.dec.rgb))
            add(_sector_margins(hctx.comp))
            _, ss_ctx = colorspace.smooth_sat_fwd(tape.outputs[idx["S"]])
            roi = ss_ctx.roi
            off = np.abs(roi.wrapped)
            tri_kinks = np.minimum(off, np.abs(off - colorspace._SECTOR_HALF_WIDTH))
            add(np.where(roi.s > 1e-3, tri_kinks.min(axis=0), np.inf) / HUE_MARGIN_SCALE)
            for arr, values in ((roi.v, (0.2, 0.25, 0.75, 0.8)), (roi.s, (0.05, 0.1))):
                for t in values:
                    add(np.abs(arr - t))
            for step in ss_ctx.steps:
                add(_tie_margins(step.rgb))
                add(_clamp_margins(step.pre))
                add(_sat_clip_margins(step.sigma_raw, plateau_stable=True))
    return margin


def audit_margins(obj: Objective, params: dict[str, np.ndarray]) -> float:
    """Smallest kink margin over all streams; see :func:`stream_margin_map`."""
    streams = [obj.high] if obj.same_stream else [obj.high, obj.low]
    return float(min(stream_margin_map(obj, params, s).min() for s in streams))
