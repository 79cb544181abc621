"""Exact 1D total-variation proximal operator.

Solves ``argmin_x 0.5 * ||y - x||^2 + lam * sum_i |x[i+1] - x[i]|`` with
Condat's direct (non-iterative) algorithm.  The sweep tracks the range of
admissible values ``[vmin, vmax]`` for the current constant segment together
with the dual running sums, and emits a segment as soon as one bound can no
longer be kept.
"""

from __future__ import annotations

import numpy as np

__all__ = ["tv_denoise_1d", "tv_objective", "tv_dual", "check_optimality"]


def _condat(y, lam, out):
    n = len(y)
    k = 0
    k0 = 0
    kplus = 0
    kminus = 0
    umin = lam
    umax = -lam
    vmin = y[0] - lam
    vmax = y[0] + lam
    twolam = 2.0 * lam
    while True:
        if k == n - 1:
            # right boundary: the last segment must close with zero dual
            if umin < 0.0:
                while True:
                    out[k0] = vmin
                    k0 += 1
                    if k0 > kminus:
                        break
                k = k0
                kminus = k0
                vmin = y[k0]
                umin = lam
                umax = vmin + umin - vmax
            elif umax > 0.0:
                while True:
                    out[k0] = vmax
                    k0 += 1
                    if k0 > kplus:
                        break
                k = k0
                kplus = k0
                vmax = y[k0]
                umax = -lam
                umin = vmax + umax - vmin
            else:
                vmin += umin / (k - k0 + 1)
                for i in range(k0, k + 1):
                    out[i] = vmin
                return
            continue
        umin += y[k + 1] - vmin
        if umin < -lam:
            # negative jump
            while True:
                out[k0] = vmin
                k0 += 1
                if k0 > kminus:
                    break
            k = k0
            kminus = k0
            kplus = k0
            vmin = y[k0]
            vmax = vmin + twolam
            umin = lam
            umax = -lam
            continue
        umax += y[k + 1] - vmax
        if umax > lam:
            # positive jump
            while True:
                out[k0] = vmax
                k0 += 1
                if k0 > kplus:
                    break
            k = k0
            kminus = k0
            kplus = k0
            vmax = y[k0]
            vmin = vmax - twolam
            umin = lam
            umax = -lam
            continue
        k += 1
        if umin >= lam:
            kminus = k
            vmin += (umin - lam) / (kminus - k0 + 1)
            umin = lam
        if umax <= -lam:
            kplus = k
            vmax += (umax + lam) / (kplus - k0 + 1)
            umax = -lam


def tv_denoise_1d(y, lam: float) -> np.ndarray:
    """Proximal operator of ``lam * TV`` evaluated at ``y``.

    Parameters
    ----------
    y : array_like, shape (N,)
        Input signal, N >= 1, finite.
    lam : float
        Non-negative TV weight.

    Returns
    -------
    numpy.ndarray
        The unique minimizer.  ``lam == 0`` returns an exact copy of ``y``.
    """
    y = np.array(y, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("input signal must have at least one sample")
    if not np.all(np.isfinite(y)):
        raise ValueError("input signal must be finite")
    lam = float(lam)
    if not (lam >= 0 and np.isfinite(lam)):
        raise ValueError(f"TV weight must be finite and >= 0, got {lam}")
    if lam == 0.0 or y.size == 1:
        return y
    out = [0.0] * y.size
    _condat(y.tolist(), lam, out)
    return np.array(out)


def tv_objective(x, y, lam: float) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return 0.5 * float(np.sum((y - x) ** 2)) + lam * float(np.sum(np.abs(np.diff(x))))


def tv_dual(x, y) -> np.ndarray:
    """Running sums of the residual ``y - x``; the last entry is the total."""
    return np.cumsum(np.asarray(y, dtype=float) - np.asarray(x, dtype=float))


def check_optimality(x, y, lam: float, tol: float = 1e-9) -> bool:
    """First-order certificate for a claimed TV-prox solution.

    The running residual sums ``u`` must satisfy ``|u[k]| <= lam`` for every
    interior index, equal ``-lam`` where ``x`` steps up and ``+lam`` where it
    steps down, and the total residual must vanish.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = tv_dual(x, y)
    scale = tol * max(1.0, lam, float(np.max(np.abs(y))) if y.size else 1.0)
    if abs(u[-1]) > scale:
        return False
    inner = u[:-1]
    step = np.diff(x)
    jump_tol = scale
    if np.any(np.abs(inner) > lam + scale):
        return False
    up = step > jump_tol
    down = step < -jump_tol
    if np.any(np.abs(inner[up] + lam) > scale):
        return False
    if np.any(np.abs(inner[down] - lam) > scale):
        return False
    return True
