"""Shared test fixtures and deterministic image generators."""

from __future__ import annotations

import numpy as np
import pytest

from dccf.image import Mask, RgbImage


def random_image(rng: np.random.Generator, h: int, w: int, lo: float = 0.0, hi: float = 1.0) -> RgbImage:
    return RgbImage(rng.uniform(lo, hi, (h, w, 3)))


def disk_mask(h: int, w: int, frac: float = 0.35) -> Mask:
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = h / 2.0, w / 2.0
    r = frac * min(h, w)
    return Mask(((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r).astype(np.float64))


def textured_image(rng: np.random.Generator, h: int, w: int) -> RgbImage:
    """Photo-like test content: smooth color fields, texture, and edges.

    Includes saturated regions, near-gray regions (where raw S/H channels are
    noisy) and sharp boundaries, so it exercises the same failure modes as
    real composites.
    """
    yy, xx = np.mgrid[0:h, 0:w]
    u, v = yy / h, xx / w
    img = np.empty((h, w, 3))
    for c in range(3):
        f1, f2 = rng.uniform(1.0, 4.0, 2)
        p1, p2 = rng.uniform(0, 2 * np.pi, 2)
        base = 0.5 + 0.25 * np.sin(2 * np.pi * f1 * u + p1) * np.cos(2 * np.pi * f2 * v + p2)
        img[..., c] = base
    # block edges: random axis-aligned color patches
    for _ in range(6):
        y0, x0 = rng.integers(0, h - 2), rng.integers(0, w - 2)
        y1 = int(rng.integers(y0 + 1, h))
        x1 = int(rng.integers(x0 + 1, w))
        img[y0:y1, x0:x1] = 0.6 * img[y0:y1, x0:x1] + 0.4 * rng.uniform(0.1, 0.9, 3)
    # high-frequency texture and a near-gray strip
    img += rng.normal(0.0, 0.02, img.shape)
    strip = slice(0, max(2, h // 6))
    gray = img[strip].mean(axis=-1, keepdims=True)
    img[strip] = 0.9 * gray + 0.1 * img[strip]
    return RgbImage(np.clip(img, 0.03, 0.97))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
