"""Deterministic Gauss-Legendre quadrature with node-doubling refinement.

Used for ensemble averages, normalization checks and the marginal CDFs that
back the distribution tests.  Everything here is repeatable bit-for-bit:
fixed node sets, no randomness, no adaptivity driven by timing.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_trapezoid

__all__ = [
    "QuadratureNonConvergence",
    "gauss_legendre_nodes",
    "integrate_1d",
    "integrate_2d",
    "GridCDF",
    "ks_statistic",
    "ks_critical_value",
]


class QuadratureNonConvergence(RuntimeError):
    """Refinement exhausted its budget without meeting the tolerance."""


@lru_cache(maxsize=32)
def gauss_legendre_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _map_nodes(n: int, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss_legendre_nodes(n)
    half = 0.5 * (hi - lo)
    return half * x + 0.5 * (hi + lo), half * w


def integrate_1d(f, lo: float, hi: float, abs_tol: float = 1e-8,
                 n_start: int = 32, n_max: int = 8192) -> float:
    """Integrate a vectorised callable, doubling the node count until two
    successive estimates agree to abs_tol."""
    n = n_start
    x, w = _map_nodes(n, lo, hi)
    prev = float(np.dot(w, f(x)))
    while n < n_max:
        n *= 2
        x, w = _map_nodes(n, lo, hi)
        cur = float(np.dot(w, f(x)))
        if abs(cur - prev) <= abs_tol:
            return cur
        prev = cur
    raise QuadratureNonConvergence(
        f"1-D quadrature did not reach abs_tol={abs_tol} within {n_max} nodes")


def integrate_2d(f, box, abs_tol: float = 1e-8,
                 n_start: int = 32, n_max: int = 1024) -> float:
    """Tensor-product integration of f(points (m,2)) over box [(x0,x1),(y0,y1)]."""
    (x0, x1), (y0, y1) = box

    def estimate(n: int) -> float:
        gx, wx = _map_nodes(n, x0, x1)
        gy, wy = _map_nodes(n, y0, y1)
        X, Y = np.meshgrid(gx, gy, indexing="ij")
        vals = f(np.column_stack([X.ravel(), Y.ravel()])).reshape(n, n)
        return float(wx @ vals @ wy)

    n = n_start
    prev = estimate(n)
    while n < n_max:
        n *= 2
        cur = estimate(n)
        if abs(cur - prev) <= abs_tol:
            return cur
        prev = cur
    raise QuadratureNonConvergence(
        f"2-D quadrature did not reach abs_tol={abs_tol} within {n_max}^2 nodes")


class GridCDF:
    """Cumulative distribution of a 1-D density tabulated on a dense grid.

    The density is integrated with the trapezoid rule on ``n_grid`` points and
    renormalised; evaluation interpolates linearly, which keeps the CDF
    monotone.  Accuracy is far below the resolution of any sample statistic
    computed against it.
    """

    def __init__(self, density_fn, lo: float, hi: float, n_grid: int = 16385):
        self.grid = np.linspace(lo, hi, n_grid)
        dens = np.asarray(density_fn(self.grid), dtype=float)
        if np.any(dens < -1e-12):
            raise ValueError("density must be nonnegative")
        cdf = np.concatenate([[0.0], cumulative_trapezoid(dens, self.grid)])
        total = cdf[-1]
        if total <= 0:
            raise ValueError("density integrates to zero on the grid")
        self.total_mass = total
        self.cdf = cdf / total

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.interp(np.asarray(x, dtype=float), self.grid, self.cdf,
                         left=0.0, right=1.0)


def ks_statistic(samples: np.ndarray, cdf) -> float:
    """One-sample Kolmogorov-Smirnov statistic against a callable CDF."""
    s = np.sort(np.asarray(samples, dtype=float))
    n = len(s)
    if n == 0:
        raise ValueError("need at least one sample")
    f = cdf(s)
    i = np.arange(1, n + 1)
    return float(max(np.max(np.abs(f - i / n)), np.max(np.abs(f - (i - 1) / n))))


def ks_critical_value(n: int, alpha: float = 0.01) -> float:
    """Asymptotic one-sample KS critical value at significance alpha."""
    return float(np.sqrt(-0.5 * np.log(alpha / 2.0)) / np.sqrt(n))
