"""Comprehensible HSV color-filter engine for high-resolution image harmonization."""

from .assembly import PipelineTrace, assemble_stage, run_pipeline, upsample_filter_map
from .colorspace import (
    gaussian_blur,
    hsv_to_rgb,
    rgb_to_hsv,
    smooth_hue_map,
    smooth_saturation_map,
    smooth_value_map,
)
from .errors import DccfError, ImageFormatError, NumericalError, StackFormatError
from .filters import (
    AttentiveFilterMap,
    FilterStack,
    HueFilterMap,
    SaturationFilterMap,
    ValueFilterMap,
    apply_attentive,
    apply_hue_affine,
    apply_saturation,
    apply_value_curve,
    hue_rotation_matrix,
    identity_stack,
)
from .image import HsvImage, Mask, PlaneImage, RgbImage, mse, psnr
from .imaging_io import load_image, load_mask, load_stack, save_image, save_stack
from .interact import blend_hue, blend_saturation, blend_value
from .losses import LossWeights, aux_hsv_losses, fg_mse, total_loss, tv_reg
from .optimizer import (
    FitConfig,
    FitReport,
    analytic_gradients,
    finite_diff_oracle,
    fit,
    synth_perturb,
)

__version__ = "0.1.0"

__all__ = [
    "AttentiveFilterMap",
    "DccfError",
    "FilterStack",
    "FitConfig",
    "FitReport",
    "HsvImage",
    "HueFilterMap",
    "ImageFormatError",
    "LossWeights",
    "Mask",
    "NumericalError",
    "PipelineTrace",
    "PlaneImage",
    "RgbImage",
    "SaturationFilterMap",
    "StackFormatError",
    "ValueFilterMap",
    "analytic_gradients",
    "apply_attentive",
    "apply_hue_affine",
    "apply_saturation",
    "apply_value_curve",
    "assemble_stage",
    "aux_hsv_losses",
    "blend_hue",
    "blend_saturation",
    "blend_value",
    "fg_mse",
    "finite_diff_oracle",
    "fit",
    "gaussian_blur",
    "hsv_to_rgb",
    "hue_rotation_matrix",
    "identity_stack",
    "load_image",
    "load_mask",
    "load_stack",
    "mse",
    "psnr",
    "rgb_to_hsv",
    "run_pipeline",
    "save_image",
    "save_stack",
    "smooth_hue_map",
    "smooth_saturation_map",
    "smooth_value_map",
    "synth_perturb",
    "total_loss",
    "tv_reg",
    "upsample_filter_map",
]
