"""Douglas-Rachford reconstruction of a radial profile from single-pixel data.

The objective is ``J(f) = F(f) + G(f)`` with the data misfit
``F(f) = 0.5 * sum_r (K_r(f) - g_r)^2`` and the radial TV penalty
``G(f) = alpha / N * sum_i |f[i+1] - f[i]|``.  One iteration is::

    x <- prox_{gamma G}(y)            (exact, tv_denoise_1d)
    f <- prox_{gamma F}(2 x - y)      (box-constrained L-BFGS)
    y <- y + f - x

The data prox never sees the TV term and the TV prox never sees the box, so
each stays a well-posed subproblem.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import Bounds, minimize

from .forward import MeasurementSet, PathStack, build_paths
from .geometry import DetectorSpec
from .phantom import build_radial_map
from .tvprox import tv_denoise_1d

__all__ = [
    "SolverError",
    "InnerSettings",
    "DRParams",
    "HistoryRow",
    "DRState",
    "KTransformDataTerm",
    "QuadraticDataTerm",
    "data_term",
    "data_gradient",
    "tv_term",
    "prox_data",
    "prox_data_term",
    "dr_init",
    "dr_step",
    "dr_iterate",
    "run_dr",
    "reconstruct",
]

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Raised when an inner solve produces non-finite values."""


@dataclass(frozen=True)
class InnerSettings:
    max_iters: int = 200
    tol: float = 1e-9
    memory: int = 10

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f"inner max_iters must be >= 1, got {self.max_iters}")
        if not self.tol > 0:
            raise ValueError(f"inner tol must be > 0, got {self.tol}")
        if self.memory < 1:
            raise ValueError(f"inner memory must be >= 1, got {self.memory}")


@dataclass(frozen=True)
class DRParams:
    """Douglas-Rachford settings.

    ``paper_literal_update`` replaces the reflection update
    ``y + f^{k+1} - x^{k+1}`` by ``y + f^{k+1} - x^k``.  ``early_stop``
    ends the run once ``||f^{k+1} - f^k||_inf < 1e-9`` for 20 consecutive
    iterations.
    """

    alpha: float = 0.03
    gamma: float = 1.0
    max_iters: int = 5000
    inner: InnerSettings = field(default_factory=InnerSettings)
    f_max: float = 1.0
    paper_literal_update: bool = False
    early_stop: bool = False

    def __post_init__(self):
        if not (self.alpha >= 0 and np.isfinite(self.alpha)):
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not (self.gamma > 0 and np.isfinite(self.gamma)):
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be >= 0, got {self.max_iters}")
        if not (self.f_max > 0 and np.isfinite(self.f_max)):
            raise ValueError(f"f_max must be > 0, got {self.f_max}")


EARLY_STOP_TOL = 1e-9
EARLY_STOP_PATIENCE = 20


class KTransformDataTerm:
    """``F(f) = 0.5 * sum_r (K_r(f) - g_r)^2`` over a stacked path system."""

    def __init__(self, targets, paths):
        self.paths = PathStack.coerce(paths)
        self.targets = np.asarray(targets, dtype=float).ravel()
        if len(self.targets) != len(self.paths):
            raise ValueError(
                f"{len(self.targets)} measurements but {len(self.paths)} path matrices"
            )

    @property
    def size(self) -> int:
        return self.paths.n_classes

    def value(self, f) -> float:
        if len(self.targets) == 0:
            return 0.0
        r = self.paths.k_values(f) - self.targets
        return 0.5 * float(r @ r)

    def value_and_grad(self, f):
        if len(self.targets) == 0:
            return 0.0, np.zeros_like(np.asarray(f, dtype=float))
        k, vjp = self.paths.k_values_and_vjp(f)
        r = k - self.targets
        return 0.5 * float(r @ r), vjp(r)


class QuadraticDataTerm:
    """``F(f) = 0.5 * ||f - a||^2``; a stand-in data term with a known prox."""

    def __init__(self, a):
        self.a = np.asarray(a, dtype=float)

    @property
    def size(self) -> int:
        return len(self.a)

    def value(self, f) -> float:
        d = np.asarray(f) - self.a
        return 0.5 * float(d @ d)

    def value_and_grad(self, f):
        d = np.asarray(f) - self.a
        return 0.5 * float(d @ d), d


def _targets(measurements) -> np.ndarray:
    if isinstance(measurements, MeasurementSet):
        return measurements.noisy
    return np.asarray(measurements, dtype=float).ravel()


def data_term(profile, measurements, paths) -> float:
    return KTransformDataTerm(_targets(measurements), paths).value(np.asarray(profile, dtype=float))


def data_gradient(profile, measurements, paths) -> np.ndarray:
    return KTransformDataTerm(_targets(measurements), paths).value_and_grad(np.asarray(profile, dtype=float))[1]


def tv_term(profile, alpha: float) -> float:
    """``alpha / N * sum |f[i+1] - f[i]|``."""
    profile = np.asarray(profile, dtype=float)
    return alpha / len(profile) * float(np.sum(np.abs(np.diff(profile))))


def prox_data_term(v, gamma: float, term, f_max: float = 1.0, inner: InnerSettings | None = None) -> np.ndarray:
    """``argmin_{0 <= f <= f_max} gamma * F(f) + 0.5 * ||f - v||^2`` for any data term."""
    inner = inner or InnerSettings()
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise SolverError("prox input contains non-finite values")
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    x0 = np.clip(v, 0.0, f_max)

    def fun(f):
        value, grad = term.value_and_grad(f)
        d = f - v
        out = gamma * value + 0.5 * float(d @ d), gamma * grad + d
        if not (np.isfinite(out[0]) and np.all(np.isfinite(out[1]))):
            raise SolverError("data prox objective became non-finite")
        return out

    res = minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=Bounds(np.zeros_like(v), np.full_like(v, f_max)),
        options={
            "maxcor": inner.memory,
            "maxiter": inner.max_iters,
            "gtol": inner.tol,
            "ftol": 1e-15,
        },
    )
    if not np.all(np.isfinite(res.x)):
        raise SolverError(f"data prox returned non-finite values ({res.message})")
    return np.clip(res.x, 0.0, f_max)


def prox_data(v, gamma: float, measurements, paths, f_max: float = 1.0, inner: InnerSettings | None = None) -> np.ndarray:
    term = KTransformDataTerm(_targets(measurements), paths)
    return prox_data_term(v, gamma, term, f_max, inner)


@dataclass
class HistoryRow:
    iter: int
    J: float
    F: float
    G: float
    step_norm: float


@dataclass
class DRState:
    x: np.ndarray
    f: np.ndarray
    y: np.ndarray
    iteration: int = 0
    history: list[HistoryRow] = field(default_factory=list)
    small_steps: int = 0


def dr_init(term, params: DRParams, x0=None) -> DRState:
    """Start state with ``x = f = y = x0`` (zeros by default); logs the initial objective."""
    size = term.size
    x0 = np.zeros(size) if x0 is None else np.asarray(x0, dtype=float).copy()
    if x0.shape != (size,):
        raise ValueError(f"initial profile has shape {x0.shape}, expected ({size},)")
    state = DRState(x0.copy(), x0.copy(), x0.copy())
    F = term.value(state.f)
    G = tv_term(state.f, params.alpha)
    state.history.append(HistoryRow(0, F + G, F, G, 0.0))
    return state


def dr_step(state: DRState, params: DRParams, term) -> DRState:
    """One Douglas-Rachford iteration against an arbitrary data term."""
    N = len(state.y)
    x_new = tv_denoise_1d(state.y, params.gamma * params.alpha / N)
    f_new = prox_data_term(2.0 * x_new - state.y, params.gamma, term, params.f_max, params.inner)
    if params.paper_literal_update:
        y_new = state.y + f_new - state.x
    else:
        y_new = state.y + f_new - x_new
    step = float(np.max(np.abs(f_new - state.f))) if N else 0.0
    F = term.value(f_new)
    G = tv_term(f_new, params.alpha)
    state.iteration += 1
    state.history.append(HistoryRow(state.iteration, F + G, F, G, step))
    state.small_steps = state.small_steps + 1 if step < EARLY_STOP_TOL else 0
    state.x, state.f, state.y = x_new, f_new, y_new
    return state


def dr_iterate(state: DRState, params: DRParams, measurements, paths) -> DRState:
    return dr_step(state, params, KTransformDataTerm(_targets(measurements), paths))


def run_dr(
    term,
    params: DRParams,
    x0=None,
    callback: Callable[[DRState], None] | None = None,
) -> DRState:
    state = dr_init(term, params, x0)
    for _ in range(params.max_iters):
        dr_step(state, params, term)
        if callback is not None:
            callback(state)
        if params.early_stop and state.small_steps >= EARLY_STOP_PATIENCE:
            log.info("early stop after %d iterations", state.iteration)
            break
    return state


def reconstruct(
    measurements: MeasurementSet,
    detector: DetectorSpec,
    n: int,
    params: DRParams,
    callback: Callable[[DRState], None] | None = None,
) -> tuple[np.ndarray, list[HistoryRow]]:
    """Reconstruct the radial profile on an ``n^3`` grid from measured values.

    Returns the final data-prox iterate ``f`` and the iteration history
    (row 0 holds the initial all-zero profile).
    """
    rmap = build_radial_map(n)
    paths = PathStack(build_paths(measurements.positions, detector, rmap))
    term = KTransformDataTerm(_targets(measurements), paths)
    state = run_dr(term, params, callback=callback)
    return state.f, state.history
