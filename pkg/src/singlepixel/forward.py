"""Ray path lengths, the discrete single-pixel transform and its gradient.

Path lengths are computed exactly for the voxel indicator basis: every ray
is cut at all grid planes it crosses, each piece is assigned to the voxel
containing its midpoint, and the lengths are summed per radial class.  The
result for one source is a sparse ``(rays, classes)`` matrix, so the line
integral of a radial profile ``f`` along every ray is ``A @ f``.

The transform value for one source is the *mean* transmission
``exp(-A @ f)`` over its ray bundle, which keeps it in ``[0, 1]``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .geometry import DetectorSpec, generate_rays
from .phantom import RadialMap, ShellPhantom, build_radial_map, reduce_to_profile, voxelize

__all__ = [
    "PathMatrix",
    "PathStack",
    "MeasurementSet",
    "clip_to_cube",
    "trace_rays",
    "trace_ray",
    "build_path_matrix",
    "build_paths",
    "line_integral",
    "k_transform",
    "k_gradient",
    "shell_line_integrals",
    "k_transform_continuous",
    "simulate",
    "add_noise",
]


def clip_to_cube(origin, directions) -> tuple[np.ndarray, np.ndarray]:
    """Line parameters where each line ``origin + t d`` enters and leaves ``[-1, 1]^3``.

    Lines that miss the cube get ``t_enter >= t_exit``.
    """
    o = np.asarray(origin, dtype=float)
    d = np.atleast_2d(np.asarray(directions, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = (-1.0 - o) / d
        t1 = (1.0 - o) / d
    lo = np.minimum(t0, t1)
    hi = np.maximum(t0, t1)
    parallel = d == 0
    inside = np.abs(np.broadcast_to(o, d.shape)) < 1.0
    lo = np.where(parallel, np.where(inside, -np.inf, np.inf), lo)
    hi = np.where(parallel, np.where(inside, np.inf, -np.inf), hi)
    return lo.max(axis=1), hi.min(axis=1)


def trace_rays(origin, directions, rmap: RadialMap) -> sp.csr_matrix:
    """Per-class path lengths of full lines through the grid.

    Parameters
    ----------
    origin : array_like, shape (3,)
        Common point of all lines (the source).
    directions : array_like, shape (R, 3)
        Line directions; normalized internally.
    rmap : RadialMap
        Grid size and voxel classes.

    Returns
    -------
    scipy.sparse.csr_matrix, shape (R, n_classes)
    """
    o = np.asarray(origin, dtype=float)
    d = np.atleast_2d(np.asarray(directions, dtype=float))
    norms = np.linalg.norm(d, axis=1)
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        raise ValueError("ray directions must be finite and non-zero")
    d = d / norms[:, None]
    n = rmap.n
    n_rays = d.shape[0]

    t_enter, t_exit = clip_to_cube(o, d)
    hit = t_enter < t_exit
    if not np.any(hit):
        return sp.csr_matrix((n_rays, rmap.n_classes))
    rows = np.flatnonzero(hit)
    d = d[hit]
    t_enter = t_enter[hit]
    t_exit = t_exit[hit]

    planes = -1.0 + 2.0 * np.arange(n + 1) / n
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (planes[None, None, :] - o[None, :, None]) / d[:, :, None]
    t = t.reshape(len(rows), -1)
    t = np.where(np.isfinite(t), t, t_enter[:, None])
    t = np.clip(t, t_enter[:, None], t_exit[:, None])
    t = np.concatenate([t_enter[:, None], np.sort(t, axis=1), t_exit[:, None]], axis=1)

    seg = np.diff(t, axis=1)
    mid = 0.5 * (t[:, 1:] + t[:, :-1])
    keep = seg > 0
    ray_idx = np.broadcast_to(np.arange(len(rows))[:, None], seg.shape)[keep]
    mid = mid[keep]
    seg = seg[keep]
    pos = o[None, :] + mid[:, None] * d[ray_idx]
    vox = np.clip(np.floor((pos + 1.0) * (0.5 * n)).astype(np.int64), 0, n - 1)
    cls = rmap.class_of_voxel[vox[:, 0], vox[:, 1], vox[:, 2]]
    mat = sp.coo_matrix(
        (seg, (rows[ray_idx], cls)), shape=(n_rays, rmap.n_classes)
    ).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def trace_ray(origin, direction, n: int, rmap: RadialMap | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Sparse row ``(class_indices, lengths)`` for a single line."""
    if rmap is None:
        rmap = build_radial_map(n)
    elif rmap.n != n:
        raise ValueError(f"radial map is for n={rmap.n}, not n={n}")
    direction = np.asarray(direction, dtype=float)
    if direction.shape != (3,):
        raise ValueError(f"direction must be a 3-vector, got shape {direction.shape}")
    row = trace_rays(origin, direction[None, :], rmap)
    return row.indices.copy(), row.data.copy()


@dataclass(frozen=True)
class PathMatrix:
    """Per-class path lengths of every ray of one source."""

    source_id: int
    source: np.ndarray = field(repr=False)
    matrix: sp.csr_matrix = field(repr=False)

    @property
    def ray_count(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_classes(self) -> int:
        return self.matrix.shape[1]

    def rows(self):
        """Iterate over rays as ``(class_indices, lengths)`` pairs."""
        m = self.matrix
        for r in range(m.shape[0]):
            sl = slice(m.indptr[r], m.indptr[r + 1])
            yield m.indices[sl], m.data[sl]


def build_path_matrix(source, detector: DetectorSpec, rmap: RadialMap, source_id: int = 0) -> PathMatrix:
    source = np.asarray(source, dtype=float)
    directions = generate_rays(source, detector)
    return PathMatrix(source_id, source.copy(), trace_rays(source, directions, rmap))


def build_paths(sources, detector: DetectorSpec, rmap: RadialMap) -> list[PathMatrix]:
    return [build_path_matrix(s, detector, rmap, i) for i, s in enumerate(np.asarray(sources, dtype=float))]


def _row_parts(row):
    if sp.issparse(row):
        row = sp.csr_matrix(row)
        if row.shape[0] != 1:
            raise ValueError("expected a single sparse row")
        return row.indices, row.data
    classes, lengths = row
    return np.asarray(classes, dtype=np.int64), np.asarray(lengths, dtype=float)


def line_integral(profile, row) -> float:
    """``sum(length * profile[class])`` over one sparse row."""
    profile = np.asarray(profile, dtype=float)
    classes, lengths = _row_parts(row)
    if len(classes) == 0:
        return 0.0
    if classes.min() < 0 or classes.max() >= len(profile):
        raise IndexError(f"row references class {classes.max()} but profile has {len(profile)} entries")
    return float(lengths @ profile[classes])


def _check_profile(profile, n_classes: int) -> np.ndarray:
    profile = np.asarray(profile, dtype=float)
    if profile.shape != (n_classes,):
        raise ValueError(f"profile has shape {profile.shape}, expected ({n_classes},)")
    return profile


def k_transform(profile, paths: PathMatrix) -> float:
    """Mean transmission ``exp(-line integral)`` over the rays of one source."""
    profile = _check_profile(profile, paths.n_classes)
    return float(np.mean(np.exp(-(paths.matrix @ profile))))


def k_gradient(profile, paths: PathMatrix) -> np.ndarray:
    """Gradient of :func:`k_transform` with respect to the profile."""
    profile = _check_profile(profile, paths.n_classes)
    trans = np.exp(-(paths.matrix @ profile))
    return -(paths.matrix.T @ trans) / paths.ray_count


def shell_line_integrals(phantom: ShellPhantom, origin, directions) -> np.ndarray:
    """Exact line integrals of the continuous shell phantom along full lines.

    A line at impact parameter ``b`` crosses the ball of radius ``R`` over a
    chord of length ``2 sqrt(R^2 - b^2)``; each shell contributes its density
    times the difference of consecutive chords.
    """
    o = np.asarray(origin, dtype=float)
    d = np.atleast_2d(np.asarray(directions, dtype=float))
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    b2 = np.clip(o @ o - (d @ o) ** 2, 0.0, None)
    radii = np.asarray(phantom.radii)
    chords = 2.0 * np.sqrt(np.clip(radii[None, :] ** 2 - b2[:, None], 0.0, None))
    pieces = np.diff(chords, axis=1, prepend=0.0)
    return pieces @ np.asarray(phantom.densities)


def k_transform_continuous(phantom: ShellPhantom, source, detector: DetectorSpec) -> float:
    """Transform value of the continuous (not voxelized) phantom for one source."""
    directions = generate_rays(source, detector)
    return float(np.mean(np.exp(-shell_line_integrals(phantom, source, directions))))


class PathStack:
    """All sources' path matrices stacked into one sparse system.

    Evaluating every source at once is what the solver needs; the row order
    is fixed by the source order, so reductions are deterministic.
    """

    def __init__(self, paths: Sequence[PathMatrix]):
        paths = list(paths)
        if paths:
            n_classes = {p.n_classes for p in paths}
            if len(n_classes) != 1:
                raise ValueError("path matrices disagree on the number of classes")
            self.n_classes = n_classes.pop()
            self.matrix = sp.vstack([p.matrix for p in paths], format="csr")
        else:
            self.n_classes = 0
            self.matrix = sp.csr_matrix((0, 0))
        self.matrix_t = self.matrix.T.tocsr()
        self.ray_counts = np.array([p.ray_count for p in paths], dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.ray_counts)[:-1]]).astype(np.int64)
        self.sources = np.array([p.source for p in paths]).reshape(-1, 3)

    @classmethod
    def coerce(cls, paths) -> "PathStack":
        return paths if isinstance(paths, cls) else cls(paths)

    def __len__(self) -> int:
        return len(self.ray_counts)

    def transmissions(self, profile) -> np.ndarray:
        return np.exp(-(self.matrix @ profile))

    def k_values(self, profile) -> np.ndarray:
        """Transform value for every source."""
        if len(self) == 0:
            return np.zeros(0)
        trans = self.transmissions(profile)
        return np.add.reduceat(trans, self.offsets) / self.ray_counts

    def k_values_and_vjp(self, profile):
        """Transform values and a function mapping per-source weights to a profile gradient."""
        trans = self.transmissions(profile)
        k = np.add.reduceat(trans, self.offsets) / self.ray_counts if len(self) else np.zeros(0)

        def vjp(weights):
            w = np.repeat(np.asarray(weights, dtype=float) / self.ray_counts, self.ray_counts)
            return -(self.matrix_t @ (w * trans))

        return k, vjp


@dataclass
class MeasurementSet:
    """Source positions with clean and noise-perturbed transform values."""

    positions: np.ndarray
    clean: np.ndarray
    noisy: np.ndarray
    noise_level: float | None = None
    seed: int | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.clean = np.asarray(self.clean, dtype=float).ravel()
        self.noisy = np.asarray(self.noisy, dtype=float).ravel()
        if not (len(self.positions) == len(self.clean) == len(self.noisy)):
            raise ValueError("positions, clean and noisy must have one entry per source")

    def __len__(self) -> int:
        return len(self.clean)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("source_id,x,y,z,clean,noisy\n")
        for i, (p, c, g) in enumerate(zip(self.positions, self.clean, self.noisy)):
            buf.write(f"{i},{p[0]:.17g},{p[1]:.17g},{p[2]:.17g},{c:.17g},{g:.17g}\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def read_csv(cls, path) -> "MeasurementSet":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            expected = ["source_id", "x", "y", "z", "clean", "noisy"]
            if reader.fieldnames != expected:
                raise ValueError(f"{path}: expected header {','.join(expected)}, got {reader.fieldnames}")
            rows = list(reader)
        ids = [int(r["source_id"]) for r in rows]
        if ids != list(range(len(rows))):
            raise ValueError(f"{path}: source_id column must be 0..{len(rows) - 1} in order")
        pos = np.array([[float(r["x"]), float(r["y"]), float(r["z"])] for r in rows]).reshape(-1, 3)
        return cls(pos, [float(r["clean"]) for r in rows], [float(r["noisy"]) for r in rows])


def simulate(
    phantom: ShellPhantom,
    sources,
    detector: DetectorSpec,
    n: int,
    noise_level: float = 0.0,
    seed: int = 0,
    n_sim: int | None = None,
) -> MeasurementSet:
    """Synthetic measurements of a voxelized phantom.

    Clean values are computed on the phantom voxelized at ``n_sim`` (default
    ``n``, i.e. the same grid that reconstruction uses).  Noise is relative
    Gaussian: ``noisy = clean * (1 + noise_level * z)`` with ``z`` drawn in
    source order from ``numpy.random.default_rng(seed)``.
    """
    if noise_level < 0:
        raise ValueError(f"noise_level must be >= 0, got {noise_level}")
    grid_n = n if n_sim is None else n_sim
    if grid_n < n:
        raise ValueError(f"n_sim={grid_n} must be >= n={n}")
    sources = np.asarray(sources, dtype=float).reshape(-1, 3)
    rmap = build_radial_map(grid_n)
    profile = reduce_to_profile(voxelize(phantom, grid_n), rmap)
    stack = PathStack(build_paths(sources, detector, rmap))
    clean = stack.k_values(profile)
    return MeasurementSet(sources, clean, add_noise(clean, noise_level, seed), noise_level, seed)


def add_noise(clean, noise_level: float, seed: int) -> np.ndarray:
    """Relative Gaussian noise ``clean * (1 + noise_level * z)``, ``z`` drawn in order."""
    clean = np.asarray(clean, dtype=float)
    z = np.random.default_rng(seed).standard_normal(clean.shape)
    return clean * (1.0 + noise_level * z)
