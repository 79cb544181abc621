"""Source placement on a sphere and the cone of rays seen by a flat detector."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DetectorSpec",
    "generate_sources",
    "detector_frame",
    "detector_points",
    "generate_rays",
    "solid_angle_fraction",
    "fill_distance",
]

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True)
class DetectorSpec:
    """Square single-pixel detector facing the grid center.

    Parameters
    ----------
    distance : float
        Source to detector-center distance, measured along the axis through
        the grid center.
    side : float
        Side length of the square.
    rays_per_axis : int
        The detector is sampled on a cell-centered ``m x m`` grid.
    """

    distance: float = 6.0
    side: float = 5.0
    rays_per_axis: int = 10

    def __post_init__(self):
        if not (self.distance > 0 and math.isfinite(self.distance)):
            raise ValueError(f"detector distance must be positive, got {self.distance}")
        if not (self.side > 0 and math.isfinite(self.side)):
            raise ValueError(f"detector side must be positive, got {self.side}")
        if int(self.rays_per_axis) != self.rays_per_axis or self.rays_per_axis < 1:
            raise ValueError(f"rays_per_axis must be a positive integer, got {self.rays_per_axis}")

    @property
    def ray_count(self) -> int:
        return self.rays_per_axis**2

    def half_angle(self) -> float:
        """Half-angle of the largest circular cone inscribed in the ray pyramid."""
        return math.atan2(0.5 * self.side, self.distance)

    def contains_unit_ball(self, source_radius: float) -> bool:
        if source_radius <= 1.0:
            return False
        return self.half_angle() >= math.asin(1.0 / source_radius)

    def check(self, source_radius: float) -> None:
        if not self.contains_unit_ball(source_radius):
            need = 2.0 * self.distance * math.tan(math.asin(min(1.0, 1.0 / source_radius)))
            raise ValueError(
                f"detector cone (side={self.side}, distance={self.distance}) does not contain "
                f"the unit ball seen from radius {source_radius}; side must be >= {need:.6g}"
            )


def generate_sources(count: int, radius: float = 3.0) -> np.ndarray:
    """Fibonacci lattice of ``count`` points on the sphere of given radius.

    Returns an array of shape ``(count, 3)``.  Point ``i`` has height
    ``1 - (2 i + 1) / count`` and azimuth ``i`` times the golden angle.
    """
    if int(count) != count or count < 1:
        raise ValueError(f"source count must be a positive integer, got {count}")
    if not radius > 1.0:
        raise ValueError(f"source radius must exceed 1 (object support), got {radius}")
    i = np.arange(count, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / count
    rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = i * GOLDEN_ANGLE
    pts = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    # renormalize so |p| == radius up to one rounding
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return radius * pts


def detector_frame(source) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unit axis pointing from the source to the grid center plus two in-plane unit vectors."""
    source = np.asarray(source, dtype=float)
    norm = np.linalg.norm(source)
    if norm == 0:
        raise ValueError("source at the grid center has no defined axis")
    axis = -source / norm
    helper = np.zeros(3)
    helper[np.argmin(np.abs(axis))] = 1.0
    e1 = helper - (helper @ axis) * axis
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return axis, e1, e2


def detector_points(source, detector: DetectorSpec) -> np.ndarray:
    """Cell-centered sample points on the detector square, shape ``(m*m, 3)``."""
    source = np.asarray(source, dtype=float)
    axis, e1, e2 = detector_frame(source)
    m = detector.rays_per_axis
    offsets = detector.side * ((np.arange(m) + 0.5) / m - 0.5)
    a, b = np.meshgrid(offsets, offsets, indexing="ij")
    center = source + detector.distance * axis
    return center + a.reshape(-1, 1) * e1 + b.reshape(-1, 1) * e2


def generate_rays(source, detector: DetectorSpec) -> np.ndarray:
    """Unit directions from ``source`` to every detector sample point, shape ``(m*m, 3)``."""
    source = np.asarray(source, dtype=float)
    detector.check(float(np.linalg.norm(source)))
    d = detector_points(source, detector) - source
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def solid_angle_fraction(source, detector: DetectorSpec) -> float:
    """Solid angle of the detector square seen from the source, divided by ``4 pi``.

    Uses the closed form for a rectangle viewed from a point on its normal
    axis; it does not depend on the source position because the detector is
    always oriented toward the grid center.
    """
    a = detector.side
    d = detector.distance
    omega = 4.0 * math.asin(a * a / (a * a + 4.0 * d * d))
    return omega / (4.0 * math.pi)


def fill_distance(detector: DetectorSpec) -> float:
    """Covering radius of the sample points on the detector square."""
    return math.sqrt(2.0) * 0.5 * detector.side / detector.rays_per_axis
