import numpy as np
import pytest

from dccf.assembly import assemble_stage, run_pipeline, upsample_filter_map, upsample_stack
from dccf.colorspace import rgb_to_hsv
from dccf.filters import (
    AttentiveFilterMap,
    HueFilterMap,
    SaturationFilterMap,
    ValueFilterMap,
    hue_rotation_matrix,
    identity_stack,
)
from dccf.image import RgbImage

from conftest import random_image


def rotation_stack(grid_w, grid_h, theta):
    stack = identity_stack(grid_w, grid_h)
    delta = stack.hue.delta.copy()
    delta[..., :, :3] = hue_rotation_matrix(theta)
    return stack.__class__(stack.val, stack.sat, HueFilterMap(delta), stack.attn, stack.order)


class TestUpsampleFilterMap:
    def test_value_map_channels(self, rng):
        f = ValueFilterMap(rng.uniform(0, 1, (2, 2)), rng.uniform(0, 1, (2, 2, 8)))
        up = upsample_filter_map(f, 9, 5)
        assert up.v_min.shape == (5, 9)
        assert up.phi.shape == (5, 9, 8)

    def test_constant_map_exact(self):
        f = SaturationFilterMap(np.full((3, 3), 0.25))
        up = upsample_filter_map(f, 64, 32)
        assert (up.sigma == 0.25).all()

    def test_sigma_ramp_derived(self):
        f = SaturationFilterMap(np.array([[0.0, 1.0]]))
        up = upsample_filter_map(f, 4, 1)
        np.testing.assert_allclose(up.sigma[0], [0.0, 0.25, 0.75, 1.0], atol=1e-15)

    def test_rejects_empty_target(self):
        with pytest.raises(ValueError):
            upsample_filter_map(SaturationFilterMap(np.zeros((2, 2))), 0, 3)


class TestAssembleStage:
    def test_no_change_when_filtered_equals_prev(self, rng):
        img = random_image(rng, 8, 8)
        for channel in ("V", "S", "H"):
            out = assemble_stage(img, img, channel)
            assert np.abs(out.data - img.data).max() <= 1e-6

    def test_hue_stage_keeps_gray_gray(self):
        gray = RgbImage(np.full((4, 4, 3), 0.5))
        shifted = RgbImage(np.clip(gray.data + np.array([0.2, -0.1, 0.0]), 0, 1))
        out = assemble_stage(gray, shifted, "H")
        np.testing.assert_allclose(out.data, 0.5, atol=1e-12)

    def test_hue_stage_planes(self, rng):
        img = random_image(rng, 10, 10, lo=0.2, hi=0.9)
        rot = hue_rotation_matrix(2 * np.pi / 3)
        filtered = RgbImage(np.clip(np.einsum("ij,hwj->hwi", rot, img.data), 0, 1))
        out = assemble_stage(img, filtered, "H")
        hsv_out = rgb_to_hsv(out)
        hsv_prev = rgb_to_hsv(img)
        hsv_filt = rgb_to_hsv(filtered)
        assert np.abs(hsv_out.v.data - hsv_prev.v.data).max() <= 1e-6
        assert np.abs(hsv_out.s.data - hsv_prev.s.data).max() <= 1e-6
        # compare hue as angles
        dh = np.angle(np.exp(1j * (hsv_out.h.data - hsv_filt.h.data)))
        assert np.abs(dh).max() <= 1e-6

    def test_bad_channel(self, rng):
        img = random_image(rng, 2, 2)
        with pytest.raises(ValueError):
            assemble_stage(img, img, "X")

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError):
            assemble_stage(random_image(rng, 2, 2), random_image(rng, 3, 3), "V")


class TestRunPipeline:
    def test_identity(self, rng):
        img = random_image(rng, 40, 30)
        trace = run_pipeline(img, identity_stack(8, 8))
        for stage in (trace.i1, trace.i2, trace.i3, trace.i4):
            assert np.abs(stage.data - img.data).max() <= 1e-6

    def test_hue_rotation_disentangled(self, rng):
        img = random_image(rng, 16, 16, lo=0.15, hi=0.9)
        trace = run_pipeline(img, rotation_stack(4, 4, 2 * np.pi / 3))
        hsv_in = rgb_to_hsv(img)
        hsv_out = rgb_to_hsv(trace.i3)
        assert np.abs(hsv_out.v.data - hsv_in.v.data).max() <= 1e-6
        assert np.abs(hsv_out.s.data - hsv_in.s.data).max() <= 1e-6
        moved = np.abs(np.angle(np.exp(1j * (hsv_out.h.data - hsv_in.h.data))))
        assert moved.mean() > 0.5  # hue actually rotated

    def test_any_order_runs(self, rng):
        img = random_image(rng, 12, 12)
        stack = identity_stack(3, 3).with_order(("H", "V", "S"))
        trace = run_pipeline(img, stack)
        assert np.abs(trace.i4.data - img.data).max() <= 1e-6
        assert trace.v1.data.shape == (12, 12)

    def test_disentanglement_between_stages(self, rng):
        for _ in range(5):
            img = random_image(rng, 12, 12, lo=0.2, hi=0.9)
            stack = identity_stack(3, 3)
            delta = stack.hue.delta.copy()
            delta[..., :, :3] += rng.normal(0, 0.15, delta[..., :, :3].shape)
            delta[..., :, 3] += rng.normal(0, 0.05, delta[..., :, 3].shape)
            stack = stack.__class__(stack.val, stack.sat, HueFilterMap(delta), stack.attn, stack.order)
            trace = run_pipeline(img, stack)
            hsv2 = rgb_to_hsv(trace.i2)
            hsv3 = rgb_to_hsv(trace.i3)
            assert np.abs(hsv3.v.data - hsv2.v.data).max() <= 1e-6
            assert np.abs(hsv3.s.data - hsv2.s.data).max() <= 1e-6

    def test_deterministic(self, rng):
        img = random_image(rng, 20, 20)
        stack = identity_stack(4, 4)
        t1 = run_pipeline(img, stack)
        t2 = run_pipeline(img, stack)
        assert (t1.i4.data == t2.i4.data).all()
        assert (t1.h3.data == t2.h3.data).all()

    def test_constant_maps_grid_size_irrelevant(self, rng):
        """Constant maps commute with upsampling: any grid size, same output."""
        img = random_image(rng, 33, 47)
        small = identity_stack(1, 1)
        big = identity_stack(16, 16)
        sigma_small = SaturationFilterMap(np.full((1, 1), 0.3))
        sigma_big = SaturationFilterMap(np.full((16, 16), 0.3))
        s1 = small.__class__(small.val, sigma_small, small.hue, small.attn, small.order)
        s2 = big.__class__(big.val, sigma_big, big.hue, big.attn, big.order)
        t1 = run_pipeline(img, s1)
        t2 = run_pipeline(img, s2)
        assert (t1.i4.data == t2.i4.data).all()

    def test_low_res_then_upsample_differs_in_general(self, rng):
        from dccf.resample import downsample_area, upsample_bilinear

        img = random_image(rng, 64, 64, lo=0.1, hi=0.9)
        stack = identity_stack(4, 4)
        sigma = SaturationFilterMap(rng.uniform(-0.5, 0.5, (4, 4)))
        stack = stack.__class__(stack.val, sigma, stack.hue, stack.attn, stack.order)
        full = run_pipeline(img, stack).i4.data
        low_img = RgbImage(downsample_area(img.data, 32, 32))
        low = run_pipeline(low_img, stack).i4.data
        lifted = upsample_bilinear(low, 64, 64)
        assert np.abs(lifted - full).max() > 1e-3
