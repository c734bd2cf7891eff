import numpy as np
import pytest

from dccf import _grad
from dccf.assembly import run_pipeline
from dccf.errors import NumericalError
from dccf.filters import identity_stack
from dccf.image import Mask, RgbImage, psnr
from dccf.losses import LossWeights, total_loss
from dccf.optimizer import (
    FitConfig,
    analytic_gradients,
    finite_diff_oracle,
    fit,
    objective_loss,
    synth_perturb,
)

import gradcheck_util
from conftest import disk_mask, random_image, textured_image


class TestObjectiveConsistency:
    @pytest.mark.parametrize("mode", ["rgb_only", "standard", "smooth"])
    def test_engine_matches_public_total_loss(self, rng, mode):
        comp = random_image(rng, 40, 32)
        gt = random_image(rng, 40, 32)
        mask = Mask((rng.uniform(0, 1, (40, 32)) > 0.4).astype(float))
        stack = identity_stack(4, 4)
        cfg = FitConfig(grid_width=4, grid_height=4, mode=mode)
        engine = objective_loss(stack, comp, gt, mask, cfg)
        trace = run_pipeline(comp, stack)
        public = total_loss(trace, trace, gt, gt, (mask, mask), stack, cfg.weights, mode)
        assert engine == pytest.approx(public, rel=1e-12)

    def test_two_stream_split(self, rng):
        # working image larger than the low-stream cap: streams must differ
        comp = random_image(rng, 300, 280)
        gt = random_image(rng, 300, 280)
        mask = Mask(np.ones((300, 280)))
        cfg = FitConfig(grid_width=4, grid_height=4, mode="rgb_only")
        obj = _grad.Objective(comp, gt, mask, 4, 4, cfg.weights, "rgb_only", cfg.order)
        assert not obj.same_stream
        assert max(obj.low.image.shape[:2]) == 256


class TestGradients:
    def test_zero_gradients_at_exact_fit(self, rng):
        img = random_image(rng, 24, 24, lo=0.2, hi=0.8)
        mask = Mask(np.ones((24, 24)))
        stack = identity_stack(4, 4)
        cfg = FitConfig(grid_width=4, grid_height=4, mode="rgb_only")
        grads = analytic_gradients(stack, img, img, mask, cfg)
        for key, g in grads.items():
            if key == "attn.a_raw":
                continue  # pinned near zero blend weight; gradient is negligible
            assert np.abs(g).max() <= 1e-12, key

    def test_phi_gradient_is_relu_times_chain(self, rng):
        # direct V-stage check: d loss / d phi_i per pixel carries max(x - k_i, 0)
        from dccf import _ops

        x = rng.uniform(0.1, 0.9, (6, 6))
        v_min = np.zeros((6, 6))
        phi = np.zeros((6, 6, 8))
        phi[..., 0] = 1.0
        out, ctx = _ops.value_curve_fwd(x, v_min, phi)
        dout = rng.normal(size=out.shape)
        _, _, dphi = _ops.value_curve_bwd(ctx, dout)
        expected = dout[..., None] * np.maximum(x[..., None] - np.arange(8) / 8.0, 0.0)
        np.testing.assert_allclose(dphi, expected, atol=1e-12)

    def test_quadratic_entry_fd_exact(self, rng):
        # the loss is exactly quadratic in the refinement translation for
        # interior pixels, so the central difference is exact up to roundoff
        comp = gradcheck_util.kink_safe_image(rng, 16, 16)
        gt = gradcheck_util.kink_safe_image(rng, 16, 16)
        mask = Mask(np.ones((16, 16)))
        cfg = FitConfig(grid_width=2, grid_height=2, mode="rgb_only")
        stack = identity_stack(2, 2)
        entry = [("attn.w_ref", 3)]  # translation entry of cell (0, 0)
        fd = finite_diff_oracle(stack, comp, gt, mask, cfg, h=1e-4, entries=entry)
        an = analytic_gradients(stack, comp, gt, mask, cfg)
        f = fd["attn.w_ref"].reshape(-1)[3]
        a = an["attn.w_ref"].reshape(-1)[3]
        assert f == pytest.approx(a, rel=1e-9)

    @pytest.mark.parametrize("mode", ["rgb_only", "standard", "smooth"])
    def test_analytic_matches_fd(self, mode):
        rng = np.random.default_rng(7 if mode == "smooth" else 11)
        errors = []
        for _ in range(3):
            errors += gradcheck_util.run_probe(
                rng, image_size=32, grid=8, mode=mode, entries_per_point=8
            )
        assert len(errors) >= 8
        assert max(errors) <= 1e-4

    def test_analytic_matches_fd_nondefault_order(self):
        rng = np.random.default_rng(23)
        errors = gradcheck_util.run_probe(
            rng, image_size=32, grid=8, mode="standard", entries_per_point=10,
            order=("H", "V", "S"),
        )
        assert errors and max(errors) <= 1e-4


class TestSynthPerturb:
    def test_identity_spec(self, rng):
        gt = random_image(rng, 12, 12)
        mask = disk_mask(12, 12)
        out = synth_perturb(gt, mask, theta=0.0, sigma=0.0, gamma=1.0)
        np.testing.assert_allclose(out.data, gt.data, atol=1e-12)

    def test_third_turn_red_to_green(self):
        gt = RgbImage(np.zeros((6, 6, 3)))
        gt.data[..., 0] = 1.0
        mask = Mask(np.ones((6, 6)))
        out = synth_perturb(gt, mask, theta=2 * np.pi / 3)
        expected = np.zeros((6, 6, 3))
        expected[..., 1] = 1.0
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_hue_only_preserves_value_and_saturation(self, rng):
        from dccf.colorspace import rgb_to_hsv

        gt = random_image(rng, 16, 16, lo=0.1, hi=0.95)
        mask = Mask(np.ones((16, 16)))
        out = synth_perturb(gt, mask, theta=0.7)
        hsv_in = rgb_to_hsv(gt)
        hsv_out = rgb_to_hsv(out)
        assert np.abs(hsv_out.v.data - hsv_in.v.data).max() <= 1e-6
        assert np.abs(hsv_out.s.data - hsv_in.s.data).max() <= 1e-6

    def test_background_untouched(self, rng):
        gt = random_image(rng, 16, 16)
        mask = disk_mask(16, 16)
        out = synth_perturb(gt, mask, theta=1.0, sigma=0.3, gamma=1.5)
        bg = mask.data == 0
        np.testing.assert_allclose(out.data[bg], gt.data[bg], atol=1e-15)

    def test_gamma_validation(self, rng):
        with pytest.raises(ValueError):
            synth_perturb(random_image(rng, 4, 4), Mask(np.ones((4, 4))), gamma=0.0)


class TestFit:
    def test_identity_is_stationary_on_identical_pair(self, rng):
        img = random_image(rng, 32, 32)
        mask = Mask(np.ones((32, 32)))
        cfg = FitConfig(grid_width=4, grid_height=4, max_iters=5, mode="rgb_only")
        stack, report = fit(img, img, mask, cfg)
        assert report.loss_history[0] <= 1e-12
        assert min(report.loss_history) <= report.loss_history[0]
        assert report.final_mse <= 1e-12

    def test_single_iteration_history(self, rng):
        img = random_image(rng, 16, 16)
        mask = Mask(np.ones((16, 16)))
        cfg = FitConfig(grid_width=2, grid_height=2, max_iters=1, mode="rgb_only")
        _, report = fit(img, img, mask, cfg)
        assert len(report.loss_history) == 1
        assert report.iterations_run == 1

    def test_deterministic(self, rng):
        gt = textured_image(rng, 48, 48)
        mask = disk_mask(48, 48)
        comp = synth_perturb(gt, mask, theta=0.4, sigma=0.2, gamma=1.2)
        cfg = FitConfig(grid_width=8, grid_height=8, max_iters=8, mode="smooth")
        _, r1 = fit(comp, gt, mask, cfg)
        _, r2 = fit(comp, gt, mask, cfg)
        assert r1.loss_history == r2.loss_history

    def test_best_loss_monotone(self, rng):
        gt = textured_image(rng, 32, 32)
        mask = disk_mask(32, 32)
        comp = synth_perturb(gt, mask, theta=0.5, sigma=0.3, gamma=1.3)
        cfg = FitConfig(grid_width=4, grid_height=4, max_iters=30, mode="rgb_only")
        _, report = fit(comp, gt, mask, cfg)
        best = np.minimum.accumulate(report.loss_history)
        assert (np.diff(best) <= 0).all()
        assert report.loss_history[-1] < report.loss_history[0]

    def test_small_recovery(self, rng):
        gt = textured_image(rng, 64, 64)
        mask = disk_mask(64, 64)
        comp = synth_perturb(gt, mask, theta=np.deg2rad(20), sigma=0.3, gamma=1.2)
        cfg = FitConfig(grid_width=16, grid_height=16, max_iters=120, mode="smooth")
        stack, report = fit(comp, gt, mask, cfg)
        assert report.final_psnr >= 33.0
        trace = run_pipeline(comp, stack)
        assert psnr(trace.i4, gt) == pytest.approx(report.final_psnr)

    def test_numerical_abort_reports_channel(self, rng):
        img = random_image(rng, 8, 8)
        mask = Mask(np.ones((8, 8)))
        bad = np.full((2, 2), np.nan)
        stack = identity_stack(2, 2)
        params = _grad.stack_to_params(stack)
        params["sat.sigma"] = bad
        obj = _grad.Objective(img, img, mask, 2, 2, LossWeights(), "rgb_only", stack.order)
        loss, grads = obj.loss_and_grads(params)
        from dccf.optimizer import _check_finite

        with pytest.raises(NumericalError, match="iteration 3"):
            _check_finite(loss, grads, 3)
