"""Single-pixel X-ray transform: simulation and TV-regularized radial reconstruction."""

from .estimators import KTransform, SinglePixelReconstructor
from .forward import MeasurementSet, PathMatrix, PathStack, build_paths, k_gradient, k_transform, simulate
from .geometry import DetectorSpec, generate_rays, generate_sources, solid_angle_fraction
from .metrics import SsimParams, compare_measurements, rmse, ssim
from .phantom import PRESETS, RadialMap, ShellPhantom, build_radial_map, embed_profile, reduce_to_profile, voxelize
from .solver import DRParams, InnerSettings, SolverError, reconstruct
from .tvprox import tv_denoise_1d

__all__ = [
    "DRParams",
    "DetectorSpec",
    "InnerSettings",
    "KTransform",
    "MeasurementSet",
    "PRESETS",
    "PathMatrix",
    "PathStack",
    "RadialMap",
    "ShellPhantom",
    "SinglePixelReconstructor",
    "SolverError",
    "SsimParams",
    "build_paths",
    "build_radial_map",
    "compare_measurements",
    "embed_profile",
    "generate_rays",
    "generate_sources",
    "k_gradient",
    "k_transform",
    "reconstruct",
    "reduce_to_profile",
    "rmse",
    "simulate",
    "solid_angle_fraction",
    "ssim",
    "tv_denoise_1d",
    "voxelize",
]
