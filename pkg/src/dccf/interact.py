"""Blending user color intentions into fitted filter maps.

Each blend is a per-cell convex combination of the fitted parameters and a
global user parameter, so strength 0 keeps the model's prediction and
strength 1 applies the user's adjustment everywhere.  Blended hue rotations
combine matrix entries directly (the result is not re-orthogonalized);
translation parts are left untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .filters import (
    FilterStack,
    HueFilterMap,
    SaturationFilterMap,
    ValueFilterMap,
    hue_rotation_matrix,
)


def _check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")


def blend_hue(f: HueFilterMap, theta_deg: float, alpha: float) -> HueFilterMap:
    """Blend a global hue rotation (theta in degrees, [0, 360]) into the map."""
    if not 0.0 <= theta_deg <= 360.0:
        raise ValueError(f"theta must be in [0, 360] degrees, got {theta_deg}")
    _check_alpha(alpha)
    user_rot = hue_rotation_matrix(np.deg2rad(theta_deg))
    delta = f.delta.copy()
    delta[..., :, :3] = alpha * user_rot + (1.0 - alpha) * delta[..., :, :3]
    return HueFilterMap(delta)


def blend_value(
    f: ValueFilterMap, user_v_min: float, user_phi: np.ndarray, alpha: float
) -> ValueFilterMap:
    """Blend a global value curve (V_min, phi_1..m) into the map."""
    _check_alpha(alpha)
    user_phi = np.asarray(user_phi, dtype=np.float64)
    if user_phi.shape != (f.m,):
        raise ValueError(f"user curve has {user_phi.shape[0]} knots, map has {f.m}")
    return ValueFilterMap(
        v_min=alpha * user_v_min + (1.0 - alpha) * f.v_min,
        phi=alpha * user_phi + (1.0 - alpha) * f.phi,
    )


def blend_saturation(f: SaturationFilterMap, sigma_user: float, alpha: float) -> SaturationFilterMap:
    if not -1.0 <= sigma_user <= 1.0:
        raise ValueError(f"sigma must be in [-1, 1], got {sigma_user}")
    _check_alpha(alpha)
    return SaturationFilterMap(alpha * sigma_user + (1.0 - alpha) * f.sigma)


@dataclass(frozen=True)
class Adjustments:
    """A full set of user adjustments; zero strengths leave the stack unchanged.

    The value curve is optional (``val_phi`` None skips the value blend); the
    CLI and the adjustment service both apply their edits through this one
    code path so their rendered outputs agree exactly.
    """

    hue_theta: float = 0.0
    hue_alpha: float = 0.0
    sat_sigma: float = 0.0
    sat_alpha: float = 0.0
    val_v_min: float = 0.0
    val_phi: tuple[float, ...] | None = None
    val_alpha: float = 0.0

    def apply(self, stack: FilterStack) -> FilterStack:
        hue = blend_hue(stack.hue, self.hue_theta, self.hue_alpha)
        sat = blend_saturation(stack.sat, self.sat_sigma, self.sat_alpha)
        val = stack.val
        if self.val_phi is not None:
            val = blend_value(stack.val, self.val_v_min, np.asarray(self.val_phi), self.val_alpha)
        elif self.val_alpha != 0.0:
            raise ValueError("value adjustment strength given without a curve")
        return replace(stack, hue=hue, sat=sat, val=val)

    def to_dict(self) -> dict:
        d = {
            "hue": {"theta": self.hue_theta, "alpha": self.hue_alpha},
            "sat": {"sigma": self.sat_sigma, "alpha": self.sat_alpha},
        }
        if self.val_phi is not None:
            d["val"] = {
                "v_min": self.val_v_min,
                "phis": list(self.val_phi),
                "alpha": self.val_alpha,
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Adjustments":
        hue = d.get("hue") or {}
        sat = d.get("sat") or {}
        val = d.get("val") or {}
        return cls(
            hue_theta=float(hue.get("theta", 0.0)),
            hue_alpha=float(hue.get("alpha", 0.0)),
            sat_sigma=float(sat.get("sigma", 0.0)),
            sat_alpha=float(sat.get("alpha", 0.0)),
            val_v_min=float(val.get("v_min", 0.0)),
            val_phi=tuple(val["phis"]) if "phis" in val else None,
            val_alpha=float(val.get("alpha", 0.0)),
        )
