"""The four per-pixel color filters and their parameter grids.

Each filter map is a low-resolution grid; every cell stores the parameters of
one per-pixel transformation:

* value: a monotone-by-parts curve built from m parameterized ReLUs,
* saturation: a single contrast factor about the per-pixel channel median,
* hue: a 3x4 affine (rotation part + translation) in RGB,
* attentive: a logistic blend weight plus a 3x4 refinement affine.

Applying a filter requires the map to be upsampled to the image resolution
first (see :mod:`dccf.assembly`).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _ops
from .image import PlaneImage, RgbImage

DEFAULT_CURVE_KNOTS = 8
IDENTITY_A_RAW = -16.0  # logistic(-16) ~ 1.1e-7, effectively zero blend weight

CHANNELS = ("V", "S", "H")


def _require_grid(shape: tuple[int, int], arr: np.ndarray, name: str) -> None:
    if arr.shape[:2] != shape:
        raise ValueError(f"{name} grid shape {arr.shape[:2]} != {shape}")


@dataclass(frozen=True)
class ValueFilterMap:
    """Per-cell (V_min, phi_1..m) parameters of the value curve."""

    v_min: np.ndarray  # (Hg, Wg)
    phi: np.ndarray    # (Hg, Wg, m)

    @property
    def grid_height(self) -> int:
        return self.v_min.shape[0]

    @property
    def grid_width(self) -> int:
        return self.v_min.shape[1]

    @property
    def m(self) -> int:
        return self.phi.shape[2]


@dataclass(frozen=True)
class SaturationFilterMap:
    sigma: np.ndarray  # (Hg, Wg)

    @property
    def grid_height(self) -> int:
        return self.sigma.shape[0]

    @property
    def grid_width(self) -> int:
        return self.sigma.shape[1]


@dataclass(frozen=True)
class HueFilterMap:
    delta: np.ndarray  # (Hg, Wg, 3, 4), [R | t] per cell

    @property
    def grid_height(self) -> int:
        return self.delta.shape[0]

    @property
    def grid_width(self) -> int:
        return self.delta.shape[1]


@dataclass(frozen=True)
class AttentiveFilterMap:
    a_raw: np.ndarray  # (Hg, Wg), alpha = logistic(a_raw)
    w_ref: np.ndarray  # (Hg, Wg, 3, 4)

    @property
    def grid_height(self) -> int:
        return self.a_raw.shape[0]

    @property
    def grid_width(self) -> int:
        return self.a_raw.shape[1]

    def alpha(self) -> np.ndarray:
        return _ops.expit(self.a_raw)


@dataclass(frozen=True)
class FilterStack:
    """The four filter maps plus the order the chromatic filters run in."""

    val: ValueFilterMap
    sat: SaturationFilterMap
    hue: HueFilterMap
    attn: AttentiveFilterMap
    order: tuple[str, str, str] = CHANNELS

    def __post_init__(self) -> None:
        shape = (self.val.grid_height, self.val.grid_width)
        _require_grid(shape, self.sat.sigma, "saturation")
        _require_grid(shape, self.hue.delta, "hue")
        _require_grid(shape, self.attn.a_raw, "attentive")
        if sorted(self.order) != sorted(CHANNELS):
            raise ValueError(f"order must be a permutation of {CHANNELS}, got {self.order}")

    @property
    def grid_height(self) -> int:
        return self.val.grid_height

    @property
    def grid_width(self) -> int:
        return self.val.grid_width

    def with_order(self, order: tuple[str, str, str]) -> "FilterStack":
        return replace(self, order=tuple(order))


def identity_stack(
    grid_width: int, grid_height: int, m: int = DEFAULT_CURVE_KNOTS
) -> FilterStack:
    """A stack whose pipeline reproduces the input image.

    The attentive blend weight cannot be exactly zero (it is produced by a
    logistic), so a_raw is set to a large negative constant; the residual
    alpha ~ 1e-7 is far below the 1e-6 identity tolerance.
    """
    if grid_width < 1 or grid_height < 1:
        raise ValueError("grid dimensions must be >= 1")
    shape = (grid_height, grid_width)
    phi = np.zeros(shape + (m,))
    phi[..., 0] = 1.0
    eye = np.zeros(shape + (3, 4))
    eye[..., :, :3] = np.eye(3)
    return FilterStack(
        val=ValueFilterMap(np.zeros(shape), phi),
        sat=SaturationFilterMap(np.zeros(shape)),
        hue=HueFilterMap(eye.copy()),
        attn=AttentiveFilterMap(np.full(shape, IDENTITY_A_RAW), eye.copy()),
    )


def hue_rotation_matrix(theta: float) -> np.ndarray:
    """Rotation of RGB space about the gray diagonal (1,1,1)/sqrt(3) by theta.

    Gray vectors are fixed points; a rotation of 2*pi/3 permutes the primaries
    R -> G -> B -> R.
    """
    axis = np.ones(3) / np.sqrt(3.0)
    k = np.array([
        [0.0, -axis[2], axis[1]],
        [axis[2], 0.0, -axis[0]],
        [-axis[1], axis[0], 0.0],
    ])
    return (
        np.cos(theta) * np.eye(3)
        + np.sin(theta) * k
        + (1.0 - np.cos(theta)) * np.outer(axis, axis)
    )


# ---------------------------------------------------------------------------
# Filter application (maps must already match the target resolution)
# ---------------------------------------------------------------------------

def apply_value_curve(v: PlaneImage, f: ValueFilterMap) -> PlaneImage:
    if f.v_min.shape != v.data.shape:
        raise ValueError(
            f"value map resolution {f.v_min.shape} != plane {v.data.shape}"
        )
    out, _ = _ops.value_curve_fwd(v.data, f.v_min, f.phi)
    return PlaneImage(out)


def apply_saturation(img: RgbImage, f: SaturationFilterMap) -> RgbImage:
    if f.sigma.shape != img.data.shape[:2]:
        raise ValueError(
            f"saturation map resolution {f.sigma.shape} != image {img.data.shape[:2]}"
        )
    out, _ = _ops.sat_transform_fwd(img.data, f.sigma)
    return RgbImage(out)


def apply_hue_affine(img: RgbImage, f: HueFilterMap) -> RgbImage:
    if f.delta.shape[:2] != img.data.shape[:2]:
        raise ValueError(
            f"hue map resolution {f.delta.shape[:2]} != image {img.data.shape[:2]}"
        )
    out, _ = _ops.affine_transform_fwd(img.data, f.delta)
    return RgbImage(out)


def apply_attentive(base: RgbImage, refined: RgbImage, f: AttentiveFilterMap) -> RgbImage:
    if base.data.shape != refined.data.shape:
        raise ValueError("base and refined images differ in size")
    if f.a_raw.shape != base.data.shape[:2]:
        raise ValueError(
            f"attentive map resolution {f.a_raw.shape} != image {base.data.shape[:2]}"
        )
    out, _ = _ops.attentive_fwd(base.data, refined.data, f.a_raw, f.w_ref)
    return RgbImage(out)
