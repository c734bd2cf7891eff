"""Desk-scale fitting: gradient descent of the filter grids against a reference.

A fit starts from the identity stack and runs heavy-ball gradient descent on
the full objective; the step size is fixed but halves whenever the loss
increases.  The best-loss parameters seen are returned.  Everything is
deterministic: there is no stochasticity in the updates, so identical inputs
(and seed) reproduce the loss history bit for bit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import _grad, _ops
from .assembly import run_pipeline
from .errors import NumericalError
from .filters import FilterStack, identity_stack
from .image import Mask, RgbImage, mse, psnr
from .losses import MODES, LossWeights


@dataclass(frozen=True)
class FitConfig:
    grid_width: int = 64
    grid_height: int = 64
    weights: LossWeights = field(default_factory=LossWeights)
    mode: str = "smooth"
    step: float = 4.0
    momentum: float = 0.9
    max_iters: int = 500
    seed: int = 0
    order: tuple[str, str, str] = ("V", "S", "H")
    curve_knots: int = 8
    precision: str = "single"  # fit arithmetic; gradients are verified in double

    def __post_init__(self) -> None:
        if self.grid_width < 1 or self.grid_height < 1:
            raise ValueError("grid dimensions must be positive")
        if self.step <= 0.0:
            raise ValueError("step must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.precision not in ("single", "double"):
            raise ValueError(f"precision must be 'single' or 'double', got {self.precision!r}")


@dataclass(frozen=True)
class FitReport:
    loss_history: list[float]
    final_mse: float
    final_psnr: float
    iterations_run: int
    wall_time: float


def _check_finite(loss: float, grads: dict[str, np.ndarray], iteration: int) -> None:
    if np.isfinite(loss) and all(np.isfinite(g).all() for g in grads.values()):
        return
    channel = "loss"
    for key, g in grads.items():
        if not np.isfinite(g).all():
            channel = key
            break
    raise NumericalError(
        f"non-finite loss at iteration {iteration} (parameter channel: {channel})"
    )


def fit(
    composite: RgbImage, gt: RgbImage, mask: Mask, cfg: FitConfig
) -> tuple[FilterStack, FitReport]:
    """Fit a filter stack so the pipelined composite matches the reference."""
    start = time.perf_counter()
    dtype = np.float32 if cfg.precision == "single" else np.float64
    objective = _grad.Objective(
        RgbImage(composite.data.astype(dtype)),
        RgbImage(gt.data.astype(dtype)),
        Mask(mask.data.astype(dtype)),
        cfg.grid_width, cfg.grid_height, cfg.weights, cfg.mode, cfg.order,
    )
    stack0 = identity_stack(cfg.grid_width, cfg.grid_height, cfg.curve_knots)
    params = {k: v.astype(dtype) for k, v in _grad.stack_to_params(stack0).items()}
    velocity = _grad.zeros_like_params(params)

    step = cfg.step
    history: list[float] = []
    best_loss = np.inf
    best_params = _grad.copy_params(params)
    prev_loss = np.inf
    prev_params = _grad.copy_params(params)

    for iteration in range(cfg.max_iters):
        loss, grads = objective.loss_and_grads(params)
        _check_finite(loss, grads, iteration)
        history.append(loss)
        if loss < best_loss:
            best_loss = loss
            best_params = _grad.copy_params(params)
        if loss > prev_loss:
            # overshoot: halve the step, drop momentum, retry from the last
            # accepted point
            step *= 0.5
            params = _grad.copy_params(prev_params)
            velocity = _grad.zeros_like_params(params)
            continue
        prev_loss = loss
        prev_params = _grad.copy_params(params)
        for key in params:
            velocity[key] = cfg.momentum * velocity[key] - step * grads[key]
            params[key] = params[key] + velocity[key]

    best64 = {k: v.astype(np.float64) for k, v in best_params.items()}
    stack = _grad.params_to_stack(best64, cfg.order)
    trace = run_pipeline(composite, stack)
    report = FitReport(
        loss_history=history,
        final_mse=mse(trace.i4, gt),
        final_psnr=psnr(trace.i4, gt),
        iterations_run=len(history),
        wall_time=time.perf_counter() - start,
    )
    return stack, report


def analytic_gradients(
    stack: FilterStack, composite: RgbImage, gt: RgbImage, mask: Mask, cfg: FitConfig
) -> dict[str, np.ndarray]:
    """Exact gradients of the objective w.r.t. every parameter channel.

    Clamp bounds and ReLU knots use subgradient 0.
    """
    objective = _grad.Objective(
        composite, gt, mask,
        stack.grid_width, stack.grid_height, cfg.weights, cfg.mode, stack.order,
    )
    _, grads = objective.loss_and_grads(_grad.stack_to_params(stack))
    return grads


def objective_loss(
    stack: FilterStack, composite: RgbImage, gt: RgbImage, mask: Mask, cfg: FitConfig
) -> float:
    objective = _grad.Objective(
        composite, gt, mask,
        stack.grid_width, stack.grid_height, cfg.weights, cfg.mode, stack.order,
    )
    loss, _ = objective.loss_and_grads(_grad.stack_to_params(stack), want_grads=False)
    return loss


def finite_diff_oracle(
    stack: FilterStack,
    composite: RgbImage,
    gt: RgbImage,
    mask: Mask,
    cfg: FitConfig,
    h: float = 1e-4,
    entries: list[tuple[str, int]] | None = None,
) -> dict[str, np.ndarray]:
    """Central-difference gradients (L(p+h) - L(p-h)) / 2h per parameter.

    ``entries`` restricts the probe to (channel, flat index) pairs; the full
    parameter set is differenced when omitted.
    """
    if h <= 0.0:
        raise ValueError("h must be positive")
    objective = _grad.Objective(
        composite, gt, mask,
        stack.grid_width, stack.grid_height, cfg.weights, cfg.mode, stack.order,
    )
    params = _grad.stack_to_params(stack)
    grads = _grad.zeros_like_params(params)
    if entries is None:
        entries = [
            (key, idx) for key in _grad.PARAM_KEYS for idx in range(params[key].size)
        ]
    for key, idx in entries:
        flat = params[key].reshape(-1)
        original = flat[idx]
        flat[idx] = original + h
        up, _ = objective.loss_and_grads(params, want_grads=False)
        flat[idx] = original - h
        down, _ = objective.loss_and_grads(params, want_grads=False)
        flat[idx] = original
        grads[key].reshape(-1)[idx] = (up - down) / (2.0 * h)
    return grads


def kink_margin(
    stack: FilterStack, composite: RgbImage, gt: RgbImage, mask: Mask, cfg: FitConfig
) -> float:
    """Distance of the forward pass to the nearest subgradient kink.

    Finite-difference checks are only meaningful at points whose margin
    comfortably exceeds the probe step; see the gradient-verification tests.
    """
    objective = _grad.Objective(
        composite, gt, mask,
        stack.grid_width, stack.grid_height, cfg.weights, cfg.mode, stack.order,
    )
    return _grad.audit_margins(objective, _grad.stack_to_params(stack))


def synth_perturb(
    gt: RgbImage, mask: Mask, theta: float = 0.0, sigma: float = 0.0, gamma: float = 1.0
) -> RgbImage:
    """Generate a composite by perturbing the foreground of a reference image.

    Foreground pixels get V <- V**gamma, then the saturation transform with
    the given sigma, then an exact hue rotation by theta radians (the hue
    plane is shifted mod 2*pi, so V and S are untouched by the rotation).
    """
    if gamma <= 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if mask.data.shape != gt.data.shape[:2]:
        raise ValueError("mask does not match image size")
    h, s, v, _ = _ops.decompose_fwd(gt.data)
    rgb, _ = _ops.compose_fwd(h, s, v ** gamma)
    rgb, _ = _ops.sat_transform_fwd(rgb, np.full(v.shape, float(sigma)))
    h2, s2, v2, _ = _ops.decompose_fwd(rgb)
    rgb, _ = _ops.compose_fwd((h2 + theta) % (2.0 * np.pi), s2, v2)
    m = mask.data[..., None]
    return RgbImage(rgb * m + gt.data * (1.0 - m))
