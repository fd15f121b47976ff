"""Pathwise stochastic calculus on grid processes.

Everything here consumes plain grid data; no measure or volatility spec
enters any signature.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .measures import TimeGrid

__all__ = [
    "GridMismatchError",
    "GridProcess",
    "IntegralResult",
    "ito_sum",
    "stopping_partition",
    "ito_epsilon",
    "ito_limsup",
    "qv_from_integral",
    "epsilon_error_bound",
]


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GridProcess:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 1 or len(v) != self.grid.N + 1:
            raise GridMismatchError(
                f"process has {v.shape} values, grid needs {self.grid.N + 1}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("grid process values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class IntegralResult:
    path: GridProcess
    epsilon_used: np.ndarray
    cauchy_gaps: np.ndarray
    converged: bool
    tol: float
    stabilized_at: int | None
    sup_errors: np.ndarray
    error_bounds: np.ndarray

    def rows(self):
        """``(n, eps, cauchy_gap, sup_error, error_bound)`` per level; gap is None at n=1."""
        for i, eps in enumerate(self.epsilon_used):
            gap = None if i == 0 else float(self.cauchy_gaps[i - 1])
            yield i + 1, float(eps), gap, float(self.sup_errors[i]), float(self.error_bounds[i])


def _check_pair(eta: GridProcess, X: GridProcess) -> None:
    if not eta.grid.same_as(X.grid):
        raise GridMismatchError("integrand and integrator live on different grids")


def _left_sum(eta: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.zeros(len(x))
    np.cumsum(eta[:-1] * np.diff(x), out=out[1:])
    return out


def ito_sum(eta: GridProcess, X: GridProcess) -> GridProcess:
    """Left-endpoint sums ``M_k = sum_{j<k} eta_j (X_{j+1} - X_j)``."""
    _check_pair(eta, X)
    return GridProcess(X.grid, _left_sum(eta.values, X.values))


def stopping_partition(eta: GridProcess, eps: float) -> np.ndarray:
    """Indices where ``eta`` has moved by at least ``eps`` since the last cut, capped at N."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    return kernels.hold(eta.values, float(eps))[1]


def ito_epsilon(eta: GridProcess, X: GridProcess, eps: float) -> GridProcess:
    """Riemann sums with the integrand frozen on each eps-stopping cell."""
    _check_pair(eta, X)
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    held, _ = kernels.hold(eta.values, float(eps))
    return GridProcess(X.grid, _left_sum(held, X.values))


def epsilon_error_bound(X: GridProcess, eps: float) -> float:
    return float(eps * np.sum(np.abs(np.diff(X.values))))


def ito_limsup(
    eta: GridProcess, X: GridProcess, n_max: int = 20, tol: float = 0.0
) -> IntegralResult:
    """Approximants at eps = 2^-1 .. 2^-n_max; the last one is the integral.

    On a finite grid the sequence is eventually constant, equal to
    ``ito_sum`` once eps drops below every step move of ``eta``.
    ``stabilized_at`` is the first n from which all approximants equal
    ``ito_sum`` exactly (None if that never happens within n_max).
    """
    _check_pair(eta, X)
    if n_max < 2:
        raise ValueError("n_max must be at least 2")
    eps = np.ldexp(1.0, -np.arange(1, n_max + 1))
    held = kernels.hold_levels(eta.values, eps)
    x = X.values
    approx = np.stack([_left_sum(row, x) for row in held])
    exact = _left_sum(eta.values, x)

    gaps = np.max(np.abs(np.diff(approx, axis=0)), axis=1)
    sup_err = np.max(np.abs(approx - exact), axis=1)
    bounds = eps * np.sum(np.abs(np.diff(x)))
    stable = None
    for i in range(n_max - 1, -1, -1):
        if not np.array_equal(approx[i], exact):
            break
        stable = i + 1
    return IntegralResult(
        path=GridProcess(X.grid, approx[-1]),
        epsilon_used=eps,
        cauchy_gaps=gaps,
        converged=bool(gaps[-1] <= tol),
        tol=float(tol),
        stabilized_at=stable,
        sup_errors=sup_err,
        error_bounds=bounds,
    )


def qv_from_integral(X: GridProcess) -> GridProcess:
    """Quadratic variation as ``X_k^2 - X_0^2 - 2 * int_0^{t_k} X dX``."""
    x = X.values
    return GridProcess(X.grid, x * x - x[0] * x[0] - 2.0 * _left_sum(x, x))
