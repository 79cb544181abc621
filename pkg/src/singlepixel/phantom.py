"""Shell phantoms, voxelization and the radial-class reduction.

Grids are plain ``(n, n, n)`` float arrays indexed ``[i, j, k]`` along
``(x, y, z)`` and covering ``[-1, 1]^3``; voxel ``i`` along an axis has its
center at ``(2 i + 1 - n) / n``.  Radial profiles are 1D arrays with one
entry per radial class, ordered by increasing distance to the grid center.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "ShellPhantom",
    "PRESETS",
    "RadialMap",
    "eval_density",
    "voxelize",
    "voxel_centers",
    "build_radial_map",
    "reduce_to_profile",
    "embed_profile",
]


@dataclass(frozen=True)
class ShellPhantom:
    """Nested constant-density shells inside the unit ball.

    Parameters
    ----------
    radii : sequence of float
        Outer radius of each shell, strictly increasing, the last one <= 1.
    densities : sequence of float
        Non-negative absorption coefficient of each shell.
    """

    radii: tuple[float, ...]
    densities: tuple[float, ...]

    def __post_init__(self):
        radii = tuple(float(r) for r in self.radii)
        densities = tuple(float(d) for d in self.densities)
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "densities", densities)
        if len(radii) == 0:
            raise ValueError("a phantom needs at least one shell")
        if len(radii) != len(densities):
            raise ValueError(
                f"got {len(radii)} radii but {len(densities)} densities"
            )
        if not all(np.isfinite(radii)) or not all(np.isfinite(densities)):
            raise ValueError("shell radii and densities must be finite")
        if radii[0] <= 0 or any(b <= a for a, b in zip(radii, radii[1:])):
            raise ValueError(f"shell radii must be positive and strictly increasing, got {radii}")
        if radii[-1] > 1.0:
            raise ValueError(f"outermost radius {radii[-1]} exceeds the unit ball")
        if any(d < 0 for d in densities):
            raise ValueError(f"shell densities must be non-negative, got {densities}")

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sequence[float]]) -> "ShellPhantom":
        """Build from ``[(radius, density), ...]``."""
        pairs = [tuple(p) for p in pairs]
        if any(len(p) != 2 for p in pairs):
            raise ValueError("each shell must be a (radius, density) pair")
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    @classmethod
    def preset(cls, name: str) -> "ShellPhantom":
        try:
            return PRESETS[name]
        except KeyError:
            raise ValueError(
                f"unknown phantom preset {name!r}; choose from {sorted(PRESETS)}"
            ) from None

    def with_density(self, shell: int, density: float) -> "ShellPhantom":
        """Copy with one shell's density replaced (used to build mock objects)."""
        densities = list(self.densities)
        densities[shell] = density
        return ShellPhantom(self.radii, tuple(densities))

    def to_pairs(self) -> list[list[float]]:
        return [[r, d] for r, d in zip(self.radii, self.densities)]


PRESETS: dict[str, ShellPhantom] = {
    "sphere": ShellPhantom((0.8,), (0.8,)),
    "two-shell": ShellPhantom((0.4, 0.8), (0.8, 0.4)),
    "three-shell": ShellPhantom((0.4, 0.6, 0.8), (0.8, 0.4, 0.2)),
}


def eval_density(phantom: ShellPhantom, point) -> np.ndarray | float:
    """Density at one point (shape ``(3,)``) or many points (shape ``(..., 3)``).

    A point exactly on a shell boundary belongs to the inner shell.
    """
    pts = np.asarray(point, dtype=float)
    if pts.shape[-1] != 3:
        raise ValueError(f"points must have a trailing axis of length 3, got {pts.shape}")
    dist = np.sqrt(np.sum(pts * pts, axis=-1))
    radii = np.asarray(phantom.radii)
    # side="left" puts |p| == radius into that (inner) shell
    shell = np.searchsorted(radii, dist, side="left")
    table = np.append(np.asarray(phantom.densities), 0.0)
    out = table[shell]
    if out.ndim == 0:
        return float(out)
    return out


def voxel_centers(n: int) -> np.ndarray:
    """Center coordinates of the ``n`` voxels along one axis."""
    if n < 1:
        raise ValueError(f"grid size must be >= 1, got {n}")
    return (2.0 * np.arange(n) + 1.0 - n) / n


def voxelize(phantom: ShellPhantom, n: int) -> np.ndarray:
    """Sample the phantom at every voxel center of an ``n^3`` grid.

    Distances come from the exact integer radial keys, so voxels of one
    radial class always receive bit-identical values.
    """
    rmap = build_radial_map(n)
    radius = np.sqrt(rmap.class_key.astype(float)) / n
    values = eval_density(phantom, np.stack([radius, 0 * radius, 0 * radius], axis=-1))
    return embed_profile(values, rmap)


@dataclass(frozen=True)
class RadialMap:
    """Partition of the voxels of an ``n^3`` grid into equal-distance classes.

    ``class_key[c]`` is the exact integer
    ``(2i+1-n)^2 + (2j+1-n)^2 + (2k+1-n)^2`` shared by every voxel of class
    ``c``; the physical distance is ``sqrt(key) / n``.
    """

    n: int
    class_of_voxel: np.ndarray = field(repr=False)
    class_key: np.ndarray = field(repr=False)
    class_count: np.ndarray = field(repr=False)

    @property
    def n_classes(self) -> int:
        return len(self.class_key)

    @property
    def radii(self) -> np.ndarray:
        return np.sqrt(self.class_key.astype(float)) / self.n


def build_radial_map(n: int) -> RadialMap:
    if n < 1:
        raise ValueError(f"grid size must be >= 1, got {n}")
    odd = 2 * np.arange(n, dtype=np.int64) + 1 - n
    sq = odd * odd
    keys = sq[:, None, None] + sq[None, :, None] + sq[None, None, :]
    class_key, class_of_voxel, class_count = np.unique(
        keys, return_inverse=True, return_counts=True
    )
    class_of_voxel = class_of_voxel.reshape(n, n, n)
    for arr in (class_of_voxel, class_key, class_count):
        arr.flags.writeable = False
    return RadialMap(n, class_of_voxel, class_key, class_count)


def reduce_to_profile(grid, rmap: RadialMap) -> np.ndarray:
    """Per-class mean of a grid (projection onto radially symmetric grids)."""
    grid = np.asarray(grid, dtype=float)
    if grid.shape != (rmap.n,) * 3:
        raise ValueError(f"grid shape {grid.shape} does not match radial map n={rmap.n}")
    labels = rmap.class_of_voxel.ravel()
    values = grid.ravel()
    # mean taken around one member per class: exact when the class is constant
    first = np.zeros(rmap.n_classes)
    first[labels[::-1]] = values[::-1]
    shift = np.bincount(labels, weights=values - first[labels], minlength=rmap.n_classes)
    return first + shift / rmap.class_count


def embed_profile(profile, rmap: RadialMap) -> np.ndarray:
    profile = np.asarray(profile, dtype=float)
    if profile.shape != (rmap.n_classes,):
        raise ValueError(
            f"profile has shape {profile.shape}, expected ({rmap.n_classes},)"
        )
    return profile[rmap.class_of_voxel]
