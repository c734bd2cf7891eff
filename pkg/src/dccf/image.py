"""Dense float image buffers.

Conventions used across the package:

* RGB data is stored row-major as ``(height, width, 3)`` float64 in [0, 1].
* Single planes are ``(height, width)`` float64; V and S planes live in
  [0, 1], hue planes in [0, 2*pi).
* Buffers are treated as immutable once wrapped; operations return new
  images instead of mutating inputs, so concurrent use is safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


def _as_float(data: np.ndarray) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    return arr


@dataclass(frozen=True)
class RgbImage:
    """A 3-channel image, values in [0, 1]."""

    data: np.ndarray  # (H, W, 3)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @classmethod
    def from_array(cls, data: np.ndarray) -> "RgbImage":
        arr = _as_float(data)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) array, got shape {arr.shape}")
        return cls(arr)

    def validate(self) -> "RgbImage":
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) array, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("image contains non-finite values")
        if self.data.min() < 0.0 or self.data.max() > 1.0:
            raise ValueError("image values outside [0, 1]")
        return self


@dataclass(frozen=True)
class PlaneImage:
    """A single-channel image plane."""

    data: np.ndarray  # (H, W)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @classmethod
    def from_array(cls, data: np.ndarray) -> "PlaneImage":
        arr = _as_float(data)
        if arr.ndim != 2:
            raise ValueError(f"expected (H, W) array, got shape {arr.shape}")
        return cls(arr)

    def validate_unit(self) -> "PlaneImage":
        if not np.all(np.isfinite(self.data)):
            raise ValueError("plane contains non-finite values")
        if self.data.min() < 0.0 or self.data.max() > 1.0:
            raise ValueError("plane values outside [0, 1]")
        return self


@dataclass(frozen=True)
class HsvImage:
    """Hue (radians in [0, 2*pi)), saturation and value planes of equal size."""

    h: PlaneImage
    s: PlaneImage
    v: PlaneImage

    def __post_init__(self) -> None:
        if not (self.h.data.shape == self.s.data.shape == self.v.data.shape):
            raise ValueError("H, S, V planes must share dimensions")

    @property
    def width(self) -> int:
        return self.h.width

    @property
    def height(self) -> int:
        return self.h.height


@dataclass(frozen=True)
class Mask:
    """Foreground mask; binary {0, 1} normally, soft values in [0, 1] permitted."""

    data: np.ndarray  # (H, W)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def area(self) -> float:
        return float(self.data.sum())

    @classmethod
    def from_array(cls, data: np.ndarray) -> "Mask":
        arr = _as_float(data)
        if arr.ndim != 2:
            raise ValueError(f"expected (H, W) array, got shape {arr.shape}")
        return cls(arr)

    @classmethod
    def full(cls, height: int, width: int) -> "Mask":
        return cls(np.ones((height, width)))


def require_same_shape(a, b, what: str = "images") -> None:
    if a.data.shape[:2] != b.data.shape[:2]:
        raise ValueError(
            f"{what} differ in size: {a.data.shape[:2]} vs {b.data.shape[:2]}"
        )


def mse(a: RgbImage, b: RgbImage) -> float:
    """Plain mean squared error over all pixels and channels, [0, 1] scale."""
    require_same_shape(a, b)
    diff = a.data - b.data
    return float(np.mean(diff * diff))


def psnr(a: RgbImage, b: RgbImage) -> float:
    """Peak signal-to-noise ratio in dB with peak 1.0; inf for identical images."""
    err = mse(a, b)
    if err == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / err))
