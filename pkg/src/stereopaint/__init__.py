"""Stereo image inpainting with cost-volume attention and iterative cross guidance."""

from .gaa import AttentionMap, CostVolume, GAAConfig, aggregate, attention_from_volume, build_cost_volume, gaa_forward
from .icg import compose_iteration_output, icg_run, threshold_mask
from .metrics import psnr, ssim
from .network import BranchOutput, ModelParams, build_model
from .tensor import ConvSpec, Tensor, grad_check, no_grad

__version__ = "0.1.0"

__all__ = [
    "AttentionMap", "BranchOutput", "ConvSpec", "CostVolume", "GAAConfig",
    "ModelParams", "Tensor", "aggregate", "attention_from_volume",
    "build_cost_volume", "build_model", "compose_iteration_output",
    "gaa_forward", "grad_check", "icg_run", "no_grad", "psnr", "ssim",
    "threshold_mask", "__version__",
]
