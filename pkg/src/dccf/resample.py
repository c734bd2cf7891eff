"""Separable resampling: bilinear interpolation at cell centers and area averaging.

Both resamplers are expressed as dense row/column matrices so the exact
adjoint (needed when back-propagating through filter-map upsampling) is a
plain transpose.
"""

from __future__ import annotations

import numpy as np


def bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) interpolation matrix, cell-center convention, edge clamp.

    Output sample i sits at (i + 0.5) / n_out in normalized coordinates and
    reads the input at u = (i + 0.5) * n_in / n_out - 0.5, clamped to the
    valid range.
    """
    if n_out < 1:
        raise ValueError(f"output size must be >= 1, got {n_out}")
    mat = np.zeros((n_out, n_in))
    u = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    u = np.clip(u, 0.0, n_in - 1.0)
    i0 = np.floor(u).astype(np.int64)
    i0 = np.minimum(i0, n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    f = u - i0
    rows = np.arange(n_out)
    np.add.at(mat, (rows, i0), 1.0 - f)
    np.add.at(mat, (rows, i1), f)
    return mat


def area_matrix(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) exact box-average matrix (fractional overlap weights)."""
    if n_out < 1:
        raise ValueError(f"output size must be >= 1, got {n_out}")
    mat = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        lo = i * scale
        hi = (i + 1) * scale
        j0 = int(np.floor(lo))
        j1 = int(np.ceil(hi))
        for j in range(j0, min(j1, n_in)):
            overlap = min(hi, j + 1) - max(lo, j)
            if overlap > 0:
                mat[i, j] = overlap / scale
    return mat


def _lerp_indices(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if n_out < 1:
        raise ValueError(f"output size must be >= 1, got {n_out}")
    u = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    u = np.clip(u, 0.0, n_in - 1.0)
    i0 = np.minimum(np.floor(u).astype(np.int64), n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, u - i0


def _axis_lerp(arr: np.ndarray, i0: np.ndarray, i1: np.ndarray, f: np.ndarray, axis: int) -> np.ndarray:
    a = np.take(arr, i0, axis=axis)
    b = np.take(arr, i1, axis=axis)
    shape = [1] * arr.ndim
    shape[axis] = len(f)
    # difference form keeps constant inputs bit-exact
    return a + f.reshape(shape).astype(arr.dtype) * (b - a)


def upsample_bilinear(channels: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinearly resample the leading two axes of (H_in, W_in, ...) to (height, width)."""
    r0, r1, fr = _lerp_indices(channels.shape[0], height)
    c0, c1, fc = _lerp_indices(channels.shape[1], width)
    return _axis_lerp(_axis_lerp(channels, r0, r1, fr, 0), c0, c1, fc, 1)


def _axis_lerp_adjoint(grad: np.ndarray, n_in: int, axis: int) -> np.ndarray:
    i0, i1, f = _lerp_indices(n_in, grad.shape[axis])
    moved = np.moveaxis(grad, axis, 0)
    shape = (len(f),) + (1,) * (moved.ndim - 1)
    f = f.astype(grad.dtype)
    out = np.zeros((n_in,) + moved.shape[1:], dtype=grad.dtype)
    # two nonzeros per output sample: scatter-add beats a dense matmul
    np.add.at(out, i0, (1.0 - f).reshape(shape) * moved)
    np.add.at(out, i1, f.reshape(shape) * moved)
    return np.moveaxis(out, 0, axis)


def upsample_bilinear_adjoint(grad: np.ndarray, in_h: int, in_w: int) -> np.ndarray:
    """Transpose of :func:`upsample_bilinear` for gradient accumulation."""
    return _axis_lerp_adjoint(_axis_lerp_adjoint(grad, in_w, 1), in_h, 0)


def downsample_area(channels: np.ndarray, height: int, width: int) -> np.ndarray:
    """Exact area-average resample of the leading two axes."""
    rh = area_matrix(channels.shape[0], height)
    rw = area_matrix(channels.shape[1], width)
    return apply_separable(channels, rh, rw)


def apply_separable(channels: np.ndarray, rh: np.ndarray, rw: np.ndarray) -> np.ndarray:
    """Apply row/column matrices to the two leading axes of an array."""
    rh = rh.astype(channels.dtype, copy=False)
    rw = rw.astype(channels.dtype, copy=False)
    trailing = channels.shape[2:]
    flat = channels.reshape(channels.shape[0], -1)
    tmp = rh @ flat  # (H_out, W_in * C)
    tmp = tmp.reshape(rh.shape[0], channels.shape[1], -1)
    out = np.einsum("wj,hjc->hwc", rw, tmp)
    return out.reshape((rh.shape[0], rw.shape[0]) + trailing)


def fit_max_side(height: int, width: int, max_side: int) -> tuple[int, int]:
    """Target dims scaled so max(height, width) <= max_side, aspect preserved."""
    side = max(height, width)
    if side <= max_side:
        return height, width
    scale = max_side / side
    return max(1, round(height * scale)), max(1, round(width * scale))
