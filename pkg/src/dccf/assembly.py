"""Low-resolution-predict / full-resolution-apply assembly.

Filter maps are bilinearly upsampled to the image resolution; each chromatic
filter is applied in turn and only its designated HSV channel survives
(split-and-concat), so a hue filter can never corrupt the value or saturation
planes established by earlier stages.  The attentive blend always runs last.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _ops, filters, resample
from .filters import (
    AttentiveFilterMap,
    FilterStack,
    HueFilterMap,
    SaturationFilterMap,
    ValueFilterMap,
)
from .image import PlaneImage, RgbImage


@dataclass(frozen=True)
class PipelineTrace:
    """Stage outputs: i1..i3 follow stack.order, i4 is the attentive result.

    v1, s2 and h3 are the filtered planes captured at the V, S and H stages
    (named after their position in the default V->S->H order).
    """

    i1: RgbImage
    i2: RgbImage
    i3: RgbImage
    i4: RgbImage
    v1: PlaneImage
    s2: PlaneImage
    h3: PlaneImage

    def stage(self, index: int) -> RgbImage:
        if index not in (1, 2, 3, 4):
            raise ValueError(f"stage must be in 1..4, got {index}")
        return (self.i1, self.i2, self.i3, self.i4)[index - 1]

    def stage_for_channel(self, channel: str, order: tuple[str, str, str]) -> RgbImage:
        """The image produced by the stage that filtered the given channel."""
        return self.stage(order.index(channel) + 1)


def upsample_filter_map(fmap, width: int, height: int):
    """Bilinear per-parameter upsampling to (width, height), cell-center convention."""
    if width < 1 or height < 1:
        raise ValueError(f"target resolution must be >= 1, got {width}x{height}")

    def up(arr: np.ndarray) -> np.ndarray:
        return resample.upsample_bilinear(arr, height, width)

    if isinstance(fmap, ValueFilterMap):
        return ValueFilterMap(up(fmap.v_min), up(fmap.phi))
    if isinstance(fmap, SaturationFilterMap):
        return SaturationFilterMap(up(fmap.sigma))
    if isinstance(fmap, HueFilterMap):
        return HueFilterMap(up(fmap.delta))
    if isinstance(fmap, AttentiveFilterMap):
        return AttentiveFilterMap(up(fmap.a_raw), up(fmap.w_ref))
    raise TypeError(f"not a filter map: {type(fmap).__name__}")


def upsample_stack(stack: FilterStack, width: int, height: int) -> FilterStack:
    return replace(
        stack,
        val=upsample_filter_map(stack.val, width, height),
        sat=upsample_filter_map(stack.sat, width, height),
        hue=upsample_filter_map(stack.hue, width, height),
        attn=upsample_filter_map(stack.attn, width, height),
    )


def assemble_stage(prev: RgbImage, filtered: RgbImage, channel: str) -> RgbImage:
    """Keep only the chosen HSV channel of ``filtered``; the rest comes from ``prev``."""
    if prev.data.shape != filtered.data.shape:
        raise ValueError("prev and filtered images differ in size")
    if channel not in filters.CHANNELS:
        raise ValueError(f"channel must be one of {filters.CHANNELS}, got {channel!r}")
    hp, sp, vp, _ = _ops.decompose_fwd(prev.data)
    hf, sf, vf, _ = _ops.decompose_fwd(filtered.data)
    h = hf if channel == "H" else hp
    s = sf if channel == "S" else sp
    v = vf if channel == "V" else vp
    out, _ = _ops.compose_fwd(h, s, v)
    return RgbImage(out)


def run_pipeline(image: RgbImage, stack: FilterStack) -> PipelineTrace:
    """Apply the stack to an image of any resolution.

    Maps are upsampled internally; the three chromatic filters run in
    ``stack.order`` with channel extraction after each, then the attentive
    blend produces the final image.
    """
    h_px, w_px = image.data.shape[:2]
    up = upsample_stack(stack, w_px, h_px)

    planes: dict[str, np.ndarray] = {}
    stages: list[np.ndarray] = []
    current = image.data

    for channel in stack.order:
        hp, sp, vp, _ = _ops.decompose_fwd(current)
        if channel == "V":
            v_new, _ = _ops.value_curve_fwd(vp, up.val.v_min, up.val.phi)
            out, _ = _ops.compose_fwd(hp, sp, v_new)
            planes["V"] = v_new
        elif channel == "S":
            filtered, _ = _ops.sat_transform_fwd(current, up.sat.sigma)
            _, s_new, _, _ = _ops.decompose_fwd(filtered)
            out, _ = _ops.compose_fwd(hp, s_new, vp)
            planes["S"] = s_new
        else:
            filtered, _ = _ops.affine_transform_fwd(current, up.hue.delta)
            h_new, _, _, _ = _ops.decompose_fwd(filtered)
            out, _ = _ops.compose_fwd(h_new, sp, vp)
            planes["H"] = h_new
        stages.append(out)
        current = out

    refined, _ = _ops.attentive_fwd(image.data, current, up.attn.a_raw, up.attn.w_ref)

    return PipelineTrace(
        i1=RgbImage(stages[0]),
        i2=RgbImage(stages[1]),
        i3=RgbImage(stages[2]),
        i4=RgbImage(refined),
        v1=PlaneImage(planes["V"]),
        s2=PlaneImage(planes["S"]),
        h3=PlaneImage(planes["H"]),
    )
