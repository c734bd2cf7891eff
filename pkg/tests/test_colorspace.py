import numpy as np
import pytest

from dccf.colorspace import (
    gaussian_blur,
    hsv_to_rgb,
    rgb_to_hsv,
    smooth_hue_map,
    smooth_saturation_map,
    smooth_value_map,
)
from dccf.image import HsvImage, PlaneImage, RgbImage

from conftest import random_image


def one_pixel(r, g, b):
    return RgbImage(np.array([[[r, g, b]]], dtype=np.float64))


class TestRgbToHsv:
    def test_pure_red(self):
        hsv = rgb_to_hsv(one_pixel(1, 0, 0))
        assert hsv.h.data[0, 0] == 0.0
        assert hsv.s.data[0, 0] == 1.0
        assert hsv.v.data[0, 0] == 1.0

    def test_achromatic_convention(self):
        hsv = rgb_to_hsv(one_pixel(0.5, 0.5, 0.5))
        assert hsv.h.data[0, 0] == 0.0
        assert hsv.s.data[0, 0] == 0.0
        assert hsv.v.data[0, 0] == 0.5

    def test_blueish_pixel(self):
        # hand-evaluated: Cmax=B branch, H = pi/3 * ((0.2-0.4)/0.6 + 4) = 11*pi/9
        hsv = rgb_to_hsv(one_pixel(0.2, 0.4, 0.8))
        assert hsv.h.data[0, 0] == pytest.approx(3.8397243543875246, abs=1e-12)
        assert hsv.s.data[0, 0] == pytest.approx(0.75)
        assert hsv.v.data[0, 0] == pytest.approx(0.8)

    def test_black_pixel_s_zero(self):
        hsv = rgb_to_hsv(one_pixel(0, 0, 0))
        assert hsv.s.data[0, 0] == 0.0
        assert hsv.v.data[0, 0] == 0.0


class TestHsvToRgb:
    def test_pure_red(self):
        img = hsv_to_rgb(
            HsvImage(
                PlaneImage(np.zeros((1, 1))),
                PlaneImage(np.ones((1, 1))),
                PlaneImage(np.ones((1, 1))),
            )
        )
        np.testing.assert_allclose(img.data[0, 0], [1, 0, 0], atol=1e-15)

    def test_zero_saturation_is_gray(self):
        h = np.array([[1.3, 4.0]])
        v = np.array([[0.25, 0.8]])
        img = hsv_to_rgb(HsvImage(PlaneImage(h), PlaneImage(np.zeros((1, 2))), PlaneImage(v)))
        for ch in range(3):
            np.testing.assert_allclose(img.data[..., ch], v, atol=1e-15)

    def test_round_trip_of_derived_example(self):
        img = hsv_to_rgb(
            HsvImage(
                PlaneImage(np.full((1, 1), 3.8397243543875246)),
                PlaneImage(np.full((1, 1), 0.75)),
                PlaneImage(np.full((1, 1), 0.8)),
            )
        )
        np.testing.assert_allclose(img.data[0, 0], [0.2, 0.4, 0.8], atol=1e-12)

    def test_round_trip_property(self, rng):
        img = random_image(rng, 48, 37, lo=0.02, hi=1.0)
        back = hsv_to_rgb(rgb_to_hsv(img))
        assert np.abs(back.data - img.data).max() <= 1e-6


class TestGaussianBlur:
    def test_constant_plane_preserved(self):
        p = PlaneImage(np.full((9, 7), 0.37))
        out = gaussian_blur(p, std=1.5, k=5)
        np.testing.assert_allclose(out.data, 0.37, atol=1e-12)

    def test_impulse_gives_normalized_stamp(self):
        p = np.zeros((11, 11))
        p[5, 5] = 1.0
        out = gaussian_blur(PlaneImage(p), std=1.5, k=5).data
        # independent kernel evaluation
        off = np.arange(-2, 3)
        w = np.exp(-0.5 * (off / 1.5) ** 2)
        w /= w.sum()
        stamp = np.outer(w, w)
        np.testing.assert_allclose(out[3:8, 3:8], stamp, atol=1e-12)
        assert out.sum() == pytest.approx(1.0)

    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError):
            gaussian_blur(PlaneImage(np.zeros((4, 4))), std=1.0, k=4)

    def test_nonpositive_std_rejected(self):
        with pytest.raises(ValueError):
            gaussian_blur(PlaneImage(np.zeros((4, 4))), std=0.0, k=5)


class TestSmoothValueMap:
    def test_constant_gray(self):
        img = RgbImage(np.full((8, 8, 3), 0.5))
        np.testing.assert_allclose(smooth_value_map(img).data, 0.5, atol=1e-12)

    def test_pure_red_field(self):
        img = RgbImage(np.zeros((6, 6, 3)))
        img.data[..., 0] = 1.0
        np.testing.assert_allclose(smooth_value_map(img).data, 1.0, atol=1e-12)

    def test_step_edge_smoothed(self):
        img = np.zeros((8, 16, 3))
        img[:, 8:] = 0.9
        out = smooth_value_map(RgbImage(img)).data
        tv_before = np.abs(np.diff(img.max(axis=-1), axis=1)).sum()
        tv_after = np.abs(np.diff(out, axis=1)).sum()
        assert tv_after <= tv_before + 1e-9  # equality for a monotone step
        assert 0.0 < out[0, 8] < 0.9

    def test_output_in_unit_range(self, rng):
        out = smooth_value_map(random_image(rng, 16, 16)).data
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestSmoothSaturationMap:
    def test_achromatic_is_uniform(self):
        img = RgbImage(np.full((6, 6, 3), 0.2))
        out = smooth_saturation_map(img).data
        np.testing.assert_allclose(out, 0.2, atol=1e-12)

    def test_saturated_red_brighter_than_dark_gray(self):
        red = RgbImage(np.zeros((8, 8, 3)))
        red.data[..., 0] = 1.0
        gray = RgbImage(np.full((8, 8, 3), 0.3))
        assert smooth_saturation_map(red).data.mean() > smooth_saturation_map(gray).data.mean()

    def test_output_in_unit_range(self, rng):
        out = smooth_saturation_map(random_image(rng, 16, 16)).data
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestSmoothHueMap:
    def test_pure_red_rendering(self):
        out = smooth_hue_map(one_pixel(1, 0, 0))
        np.testing.assert_allclose(out.data[0, 0], [0.8, 0.4, 0.4], atol=1e-12)

    def test_invariant_to_value_and_saturation(self):
        # same hue, different V and S -> identical rendering
        a = smooth_hue_map(one_pixel(0.9, 0.45, 0.45)).data
        b = smooth_hue_map(one_pixel(0.4, 0.3, 0.3)).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_gray_matches_red_hue_class(self):
        gray = smooth_hue_map(one_pixel(0.5, 0.5, 0.5)).data
        red = smooth_hue_map(one_pixel(1, 0, 0)).data
        np.testing.assert_allclose(gray, red, atol=1e-12)

    def test_random_invariance_property(self, rng):
        img = random_image(rng, 12, 12, lo=0.05, hi=0.95)
        hsv = rgb_to_hsv(img)
        scaled = hsv_to_rgb(
            HsvImage(
                hsv.h,
                PlaneImage(np.clip(hsv.s.data * 0.5 + 0.2, 0, 1)),
                PlaneImage(np.clip(hsv.v.data * 0.7 + 0.1, 0, 1)),
            )
        )
        a = smooth_hue_map(img).data
        b = smooth_hue_map(scaled).data
        chroma = rgb_to_hsv(img).s.data > 1e-6  # gray pixels snap to hue 0
        np.testing.assert_allclose(a[chroma], b[chroma], atol=1e-9)
