"""Image and filter-stack files: PNG/PPM codecs, mask loading, stack container.

The stack container is a little-endian binary file:

    magic "DCCF" | version u16 | grid_w u32 | grid_h u32 | m u16 | order 3s
    followed by float32 parameter planes, each grid_h x grid_w row-major, in
    fixed order: V_min, phi_1..phi_m, sigma, the 12 hue affine entries
    (row-major 3x4), a_raw, the 12 refinement affine entries.

All file writes go through a temp file + rename so readers never observe a
partially written file.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageFormatError, StackFormatError
from .filters import (
    AttentiveFilterMap,
    FilterStack,
    HueFilterMap,
    SaturationFilterMap,
    ValueFilterMap,
)
from .image import Mask, PlaneImage, RgbImage

STACK_MAGIC = b"DCCF"
STACK_VERSION = 1


def _atomic_write(path: Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def to_uint8(data: np.ndarray) -> np.ndarray:
    """Quantize [0, 1] floats to 8 bit, rounding half up."""
    return np.floor(np.clip(data, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


# ---------------------------------------------------------------------------
# Images
# ---------------------------------------------------------------------------

def load_image(path) -> RgbImage:
    """Decode a PNG or binary PPM (P6, 8-bit) file to floats in [0, 1]."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ImageFormatError(f"cannot read {path}: {exc}") from exc
    if raw[:2] == b"P6":
        return RgbImage(_decode_ppm(raw, path))
    return RgbImage(_decode_pil(raw, path, "RGB"))


def _decode_pil(raw: bytes, path: Path, mode: str) -> np.ndarray:
    import io as _io

    try:
        with Image.open(_io.BytesIO(raw)) as img:
            img = img.convert(mode)
            arr = np.asarray(img, dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageFormatError(f"cannot decode {path}: {exc}") from exc
    return arr


def _decode_ppm(raw: bytes, path: Path) -> np.ndarray:
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError(f"corrupt PPM header in {path}")
        fields.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise ImageFormatError(f"corrupt PPM header in {path}") from exc
    if width < 1 or height < 1:
        raise ImageFormatError(f"corrupt PPM header in {path}")
    if maxval != 255:
        raise ImageFormatError(f"unsupported PPM bit depth (maxval {maxval}) in {path}")
    expected = width * height * 3
    pixels = raw[pos : pos + expected]
    if len(pixels) != expected:
        raise ImageFormatError(f"truncated PPM data in {path}")
    arr = np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, 3)
    return arr.astype(np.float64) / 255.0


def decode_image_bytes(raw: bytes, name: str = "<upload>") -> RgbImage:
    if raw[:2] == b"P6":
        return RgbImage(_decode_ppm(raw, Path(name)))
    return RgbImage(_decode_pil(raw, Path(name), "RGB"))


def decode_mask_bytes(raw: bytes, name: str = "<upload>", soft: bool = False) -> Mask:
    if raw[:2] == b"P6":
        gray = _decode_ppm(raw, Path(name)).mean(axis=-1)
    else:
        gray = _decode_pil(raw, Path(name), "L")
    if soft:
        return Mask(gray)
    return Mask((gray >= 0.5).astype(np.float64))


def save_image(img: RgbImage, path) -> None:
    """Encode as PNG or binary PPM depending on the file extension."""
    path = Path(path)
    data = to_uint8(img.data)
    if path.suffix.lower() in (".ppm", ".pnm"):
        header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
        _atomic_write(path, header + data.tobytes())
        return
    _atomic_write(path, encode_png(data))


def encode_png(u8: np.ndarray) -> bytes:
    import io as _io

    buf = _io.BytesIO()
    mode = "L" if u8.ndim == 2 else "RGB"
    Image.fromarray(u8, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def save_plane(plane: PlaneImage, path) -> None:
    _atomic_write(Path(path), encode_png(to_uint8(plane.data)))


def load_mask(path, soft: bool = False, threshold: float = 0.5) -> Mask:
    """Load a grayscale mask; hard-thresholded at 0.5 (>= is foreground) unless soft."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ImageFormatError(f"cannot read {path}: {exc}") from exc
    if raw[:2] == b"P6":
        gray = _decode_ppm(raw, path).mean(axis=-1)
    else:
        gray = _decode_pil(raw, path, "L")
    if soft:
        return Mask(gray)
    return Mask((gray >= threshold).astype(np.float64))


# ---------------------------------------------------------------------------
# Filter-stack container
# ---------------------------------------------------------------------------

def _stack_planes(stack: FilterStack) -> list[np.ndarray]:
    planes = [stack.val.v_min]
    planes += [stack.val.phi[..., i] for i in range(stack.val.m)]
    planes.append(stack.sat.sigma)
    planes += [stack.hue.delta[..., i, j] for i in range(3) for j in range(4)]
    planes.append(stack.attn.a_raw)
    planes += [stack.attn.w_ref[..., i, j] for i in range(3) for j in range(4)]
    return planes


def save_stack(stack: FilterStack, path) -> None:
    header = STACK_MAGIC + struct.pack(
        "<HIIH3s",
        STACK_VERSION,
        stack.grid_width,
        stack.grid_height,
        stack.val.m,
        "".join(stack.order).encode("ascii"),
    )
    body = b"".join(
        np.ascontiguousarray(p, dtype="<f4").tobytes() for p in _stack_planes(stack)
    )
    _atomic_write(Path(path), header + body)


def load_stack(path) -> FilterStack:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise StackFormatError(f"cannot read {path}: {exc}") from exc
    if raw[:4] != STACK_MAGIC:
        raise StackFormatError(f"bad magic in {path}")
    header_size = 4 + struct.calcsize("<HIIH3s")
    if len(raw) < header_size:
        raise StackFormatError(f"truncated header in {path}")
    version, grid_w, grid_h, m, order_bytes = struct.unpack(
        "<HIIH3s", raw[4:header_size]
    )
    if version != STACK_VERSION:
        raise StackFormatError(f"unsupported version {version} in {path}")
    try:
        order = tuple(order_bytes.decode("ascii"))
    except UnicodeDecodeError as exc:
        raise StackFormatError(f"corrupt order field in {path}") from exc
    if sorted(order) != ["H", "S", "V"]:
        raise StackFormatError(f"corrupt order field {order!r} in {path}")
    n_planes = 1 + m + 1 + 12 + 1 + 12
    expected = header_size + n_planes * grid_w * grid_h * 4
    if len(raw) != expected:
        raise StackFormatError(
            f"truncated stack in {path}: {len(raw)} bytes, expected {expected}"
        )
    planes = np.frombuffer(raw[header_size:], dtype="<f4").reshape(
        n_planes, grid_h, grid_w
    ).astype(np.float64)

    pos = 0

    def take(n: int) -> np.ndarray:
        nonlocal pos
        out = planes[pos : pos + n]
        pos += n
        return out

    v_min = take(1)[0]
    phi = np.moveaxis(take(m), 0, -1)
    sigma = take(1)[0]
    delta = np.moveaxis(take(12), 0, -1).reshape(grid_h, grid_w, 3, 4)
    a_raw = take(1)[0]
    w_ref = np.moveaxis(take(12), 0, -1).reshape(grid_h, grid_w, 3, 4)
    return FilterStack(
        val=ValueFilterMap(v_min, phi),
        sat=SaturationFilterMap(sigma),
        hue=HueFilterMap(delta),
        attn=AttentiveFilterMap(a_raw, w_ref),
        order=order,  # type: ignore[arg-type]
    )
