"""Image-quality metrics for reconstructed grids and the template/TAI comparison."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .forward import MeasurementSet

__all__ = ["SsimParams", "Verdict", "ssim", "ssim_map", "rmse", "compare_measurements"]


@dataclass(frozen=True)
class SsimParams:
    """Gaussian-window SSIM settings.

    ``data_range=None`` means "use the maximum of the reference grid".
    """

    k1: float = 0.01
    k2: float = 0.03
    data_range: float | None = None
    window: int = 7
    sigma: float = 1.5

    def __post_init__(self):
        if not (self.k1 > 0 and self.k2 > 0):
            raise ValueError("k1 and k2 must be positive")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window must be a positive odd integer, got {self.window}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.data_range is not None and not self.data_range > 0:
            raise ValueError("data_range must be positive")

    def resolved(self, reference) -> "SsimParams":
        if self.data_range is not None:
            return self
        return SsimParams(self.k1, self.k2, float(np.max(reference)), self.window, self.sigma)

    def as_dict(self) -> dict:
        return asdict(self)


def _check_pair(reference, candidate):
    a = np.asarray(reference, dtype=float)
    b = np.asarray(candidate, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"grid shapes differ: {a.shape} vs {b.shape}")
    return a, b


def _local_mean(x, params: SsimParams):
    # truncate so the kernel spans exactly `window` samples per axis
    radius = params.window // 2
    return ndimage.gaussian_filter(x, params.sigma, mode="reflect", truncate=radius / params.sigma)


def ssim_map(reference, candidate, params: SsimParams | None = None) -> np.ndarray:
    """Local SSIM at every voxel (symmetric boundary extension)."""
    a, b = _check_pair(reference, candidate)
    params = (params or SsimParams()).resolved(a)
    if not params.data_range > 0:
        raise ValueError("data_range is zero; the reference grid is identically 0")
    c1 = (params.k1 * params.data_range) ** 2
    c2 = (params.k2 * params.data_range) ** 2
    mu_a = _local_mean(a, params)
    mu_b = _local_mean(b, params)
    var_a = _local_mean(a * a, params) - mu_a * mu_a
    var_b = _local_mean(b * b, params) - mu_b * mu_b
    cov = _local_mean(a * b, params) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return num / den


def ssim(reference, candidate, params: SsimParams | None = None) -> float:
    """Mean local SSIM between two grids of equal shape."""
    return float(np.mean(ssim_map(reference, candidate, params)))


def rmse(reference, candidate) -> float:
    a, b = _check_pair(reference, candidate)
    return float(np.sqrt(np.mean((a - b) ** 2)))


@dataclass(frozen=True)
class Verdict:
    accept: bool
    max_deviation: float
    worst_source: int
    tol: float

    def as_dict(self) -> dict:
        return asdict(self)


def compare_measurements(a: MeasurementSet, b: MeasurementSet, tol: float, atol_positions: float = 1e-9) -> Verdict:
    """Accept iff every source's noisy values agree within ``tol``."""
    if len(a) != len(b):
        raise ValueError(f"measurement sets have {len(a)} and {len(b)} sources")
    if len(a) and np.max(np.abs(a.positions - b.positions)) > atol_positions:
        raise ValueError("measurement sets were taken at different source positions")
    if not tol >= 0:
        raise ValueError(f"tolerance must be >= 0, got {tol}")
    if len(a) == 0:
        return Verdict(True, 0.0, -1, float(tol))
    dev = np.abs(a.noisy - b.noisy)
    worst = int(np.argmax(dev))
    return Verdict(bool(dev[worst] <= tol), float(dev[worst]), worst, float(tol))
