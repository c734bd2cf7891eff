"""Fitting objective: foreground-normalized MSE, auxiliary HSV losses, TV term.

The RGB loss is evaluated on both the intermediate chromatic result and the
final attentive result, on a low-resolution stream and the working-resolution
stream.  The HSV auxiliary losses are computed on the low stream only;
each one compares the stage image that filtered its channel against the
reference, either on the raw HSV planes (``standard``) or on the smoothed
supervision maps (``smooth``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _ops, colorspace
from .assembly import PipelineTrace
from .filters import AttentiveFilterMap, FilterStack, HueFilterMap, SaturationFilterMap, ValueFilterMap
from .image import Mask, RgbImage, require_same_shape

MIN_FG_AREA = 100.0  # pixels; floor of the mask-area normalizer

MODES = ("smooth", "standard", "rgb_only")


@dataclass(frozen=True)
class LossWeights:
    """Weights of the five loss terms plus the TV regularizer."""

    rgb_low: float = 1.0
    rgb_high: float = 1.0
    value: float = 0.1
    saturation: float = 0.1
    hue: float = 0.1
    tv_weight: float = 1e-3

    def __post_init__(self) -> None:
        for name in ("rgb_low", "rgb_high", "value", "saturation", "hue", "tv_weight"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")


def norm_area(mask: Mask) -> float:
    return max(MIN_FG_AREA, float(mask.data.sum()))


def fg_mse(pred: RgbImage, gt: RgbImage, mask: Mask) -> float:
    """Sum of squared errors over all pixels, normalized by foreground area."""
    require_same_shape(pred, gt)
    require_same_shape(pred, mask, "image and mask")
    diff = pred.data - gt.data
    return float((diff * diff).sum() / norm_area(mask))


def _sse(a: np.ndarray, b: np.ndarray, area: float) -> float:
    d = a - b
    return float((d * d).sum() / area)


def _value_loss(pred: RgbImage, gt: RgbImage, area: float, mode: str) -> float:
    if mode == "standard":
        _, _, vp, _ = _ops.decompose_fwd(pred.data)
        _, _, vg, _ = _ops.decompose_fwd(gt.data)
        return _sse(vp, vg, area)
    sp, _ = colorspace.smooth_value_fwd(pred.data)
    sg, _ = colorspace.smooth_value_fwd(gt.data)
    return _sse(sp, sg, area)


def _sat_loss(pred: RgbImage, gt: RgbImage, area: float, mode: str) -> float:
    if mode == "standard":
        _, sp, _, _ = _ops.decompose_fwd(pred.data)
        _, sg, _, _ = _ops.decompose_fwd(gt.data)
        return _sse(sp, sg, area)
    mp, _ = colorspace.smooth_sat_fwd(pred.data)
    mg, _ = colorspace.smooth_sat_fwd(gt.data)
    return _sse(mp, mg, area)


def _hue_loss(pred: RgbImage, gt: RgbImage, area: float, mode: str) -> float:
    if mode == "standard":
        # hue is an angle: cosine distance avoids the wrap-around
        hp, _, _, _ = _ops.decompose_fwd(pred.data)
        hg, _, _, _ = _ops.decompose_fwd(gt.data)
        return float((1.0 - np.cos(hp - hg)).sum() / area)
    mp, _ = colorspace.smooth_hue_fwd(pred.data)
    mg, _ = colorspace.smooth_hue_fwd(gt.data)
    return _sse(mp, mg, area)


def aux_hsv_losses(
    pred: RgbImage, gt: RgbImage, mask: Mask, mode: str
) -> tuple[float, float, float]:
    """(L_val, L_sat, L_hue) between pred and gt.

    ``standard`` compares the raw V and S planes with foreground-normalized
    MSE and the hue angles with cosine distance 1 - cos(H_pred - H_gt);
    ``smooth`` compares the smoothed supervision maps, hue included, with
    plain euclidean distance.
    """
    if mode not in ("smooth", "standard"):
        raise ValueError(f"mode must be 'smooth' or 'standard', got {mode!r}")
    require_same_shape(pred, gt)
    require_same_shape(pred, mask, "image and mask")
    area = norm_area(mask)
    return (
        _value_loss(pred, gt, area, mode),
        _sat_loss(pred, gt, area, mode),
        _hue_loss(pred, gt, area, mode),
    )


def tv_reg(fmap) -> float:
    """Anisotropic total variation of the parameter grid, averaged per cell."""
    channels = _map_channels(fmap)
    cells = channels[0].shape[0] * channels[0].shape[1]
    total = 0.0
    for arr in channels:
        flat = arr.reshape(arr.shape[0], arr.shape[1], -1)
        total += np.abs(np.diff(flat, axis=0)).sum()
        total += np.abs(np.diff(flat, axis=1)).sum()
    return float(total / cells)


def _map_channels(fmap) -> list[np.ndarray]:
    if isinstance(fmap, ValueFilterMap):
        return [fmap.v_min, fmap.phi]
    if isinstance(fmap, SaturationFilterMap):
        return [fmap.sigma]
    if isinstance(fmap, HueFilterMap):
        return [fmap.delta]
    if isinstance(fmap, AttentiveFilterMap):
        return [fmap.a_raw, fmap.w_ref]
    raise TypeError(f"not a filter map: {type(fmap).__name__}")


def stack_tv(stack: FilterStack) -> float:
    return (
        tv_reg(stack.val) + tv_reg(stack.sat) + tv_reg(stack.hue) + tv_reg(stack.attn)
    )


@dataclass(frozen=True)
class LossTerms:
    rgb_low: float
    rgb_high: float
    value: float
    saturation: float
    hue: float
    tv: float

    def weighted_total(self, w: LossWeights) -> float:
        return (
            w.rgb_low * self.rgb_low
            + w.rgb_high * self.rgb_high
            + w.value * self.value
            + w.saturation * self.saturation
            + w.hue * self.hue
            + w.tv_weight * self.tv
        )


def loss_terms(
    trace_low: PipelineTrace,
    trace_high: PipelineTrace,
    gt_low: RgbImage,
    gt_high: RgbImage,
    mask_low: Mask,
    mask_high: Mask,
    stack: FilterStack,
    mode: str = "smooth",
) -> LossTerms:
    """All loss terms; RGB losses cover I3 and I4 with equal weight."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    rgb_low = fg_mse(trace_low.i3, gt_low, mask_low) + fg_mse(trace_low.i4, gt_low, mask_low)
    rgb_high = fg_mse(trace_high.i3, gt_high, mask_high) + fg_mse(
        trace_high.i4, gt_high, mask_high
    )
    l_val = l_sat = l_hue = 0.0
    if mode != "rgb_only":
        area = norm_area(mask_low)
        order = stack.order
        l_val = _value_loss(trace_low.stage_for_channel("V", order), gt_low, area, mode)
        l_sat = _sat_loss(trace_low.stage_for_channel("S", order), gt_low, area, mode)
        l_hue = _hue_loss(trace_low.stage_for_channel("H", order), gt_low, area, mode)
    return LossTerms(rgb_low, rgb_high, l_val, l_sat, l_hue, stack_tv(stack))


def total_loss(
    trace_low: PipelineTrace,
    trace_high: PipelineTrace,
    gt_low: RgbImage,
    gt_high: RgbImage,
    masks: tuple[Mask, Mask],
    stack: FilterStack,
    weights: LossWeights,
    mode: str = "smooth",
) -> float:
    terms = loss_terms(
        trace_low, trace_high, gt_low, gt_high, masks[0], masks[1], stack, mode
    )
    return terms.weighted_total(weights)
