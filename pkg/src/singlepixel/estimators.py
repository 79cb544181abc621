"""scikit-learn style wrappers around the forward model and the solver.

``KTransform`` maps radial profiles to single-pixel values for a fixed
geometry; ``SinglePixelReconstructor`` is fitted on (source positions,
measured values) and predicts values at new source positions from the
recovered profile.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .forward import PathStack, build_paths
from .geometry import DetectorSpec
from .phantom import build_radial_map, embed_profile
from .solver import DRParams, InnerSettings, KTransformDataTerm, run_dr
from .validation import check_profiles, check_sources, check_targets

__all__ = ["KTransform", "SinglePixelReconstructor"]


def _detector(est) -> DetectorSpec:
    return DetectorSpec(est.distance, est.side, est.rays_per_axis)


class KTransform(TransformerMixin, BaseEstimator):
    """Forward transform for a fixed set of sources.

    ``fit(X)`` takes source positions of shape (R, 3) and precomputes the
    path matrices; ``transform(P)`` maps profiles of shape
    (n_samples, n_classes) to transform values of shape (n_samples, R).
    """

    def __init__(self, n=20, distance=6.0, side=5.0, rays_per_axis=10):
        self.n = n
        self.distance = distance
        self.side = side
        self.rays_per_axis = rays_per_axis

    def fit(self, X, y=None):
        X = check_sources(X)
        detector = _detector(self)
        for r in np.linalg.norm(X, axis=1):
            detector.check(float(r))
        self.radial_map_ = build_radial_map(self.n)
        self.paths_ = PathStack(build_paths(X, detector, self.radial_map_))
        self.sources_ = X
        self.n_features_in_ = 3
        return self

    def transform(self, X):
        check_is_fitted(self, "paths_")
        P = check_profiles(X, self.radial_map_.n_classes)
        return np.vstack([self.paths_.k_values(p) for p in P])


class SinglePixelReconstructor(BaseEstimator):
    """Radial-profile reconstruction by Douglas-Rachford splitting with TV.

    After ``fit`` the estimator exposes ``profile_`` (one value per radial
    class), ``grid_`` (the profile embedded in the n^3 grid), ``history_``
    and ``n_iter_``.
    """

    def __init__(
        self,
        n=20,
        alpha=0.03,
        gamma=1.0,
        max_iters=5000,
        f_max=1.0,
        inner_max_iters=200,
        inner_tol=1e-9,
        inner_memory=10,
        paper_literal_update=False,
        early_stop=False,
        distance=6.0,
        side=5.0,
        rays_per_axis=10,
    ):
        self.n = n
        self.alpha = alpha
        self.gamma = gamma
        self.max_iters = max_iters
        self.f_max = f_max
        self.inner_max_iters = inner_max_iters
        self.inner_tol = inner_tol
        self.inner_memory = inner_memory
        self.paper_literal_update = paper_literal_update
        self.early_stop = early_stop
        self.distance = distance
        self.side = side
        self.rays_per_axis = rays_per_axis

    def dr_params(self) -> DRParams:
        return DRParams(
            alpha=self.alpha,
            gamma=self.gamma,
            max_iters=self.max_iters,
            inner=InnerSettings(self.inner_max_iters, self.inner_tol, self.inner_memory),
            f_max=self.f_max,
            paper_literal_update=self.paper_literal_update,
            early_stop=self.early_stop,
        )

    def _forward(self):
        return KTransform(self.n, self.distance, self.side, self.rays_per_axis)

    def fit(self, X, y):
        params = self.dr_params()
        forward = self._forward().fit(X)
        y = check_targets(y, len(forward.sources_))
        state = run_dr(KTransformDataTerm(y, forward.paths_), params)
        self.radial_map_ = forward.radial_map_
        self.profile_ = state.f
        self.grid_ = embed_profile(state.f, self.radial_map_)
        self.history_ = state.history
        self.n_iter_ = state.iteration
        self.n_features_in_ = 3
        return self

    def predict(self, X):
        """Transform values of the fitted profile at source positions ``X``."""
        check_is_fitted(self, "profile_")
        return self._forward().fit(X).transform(self.profile_)[0]

    def score(self, X, y):
        """Negative mean squared misfit (higher is better)."""
        y = check_targets(y, len(check_sources(X)))
        return -float(np.mean((self.predict(X) - y) ** 2))
