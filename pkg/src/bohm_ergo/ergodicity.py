"""Ergodicity diagnostics for oscillator superpositions.

Two complementary views: the exact time-averaged density with its decaying
cross terms (the wave side), and configuration-space coverage plus recurrence
of individual trajectories (the particle side).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .quadrature import gauss_legendre_nodes
from .wavemodels import Configuration, OscillatorSuperposition2D
from .dynamics import Trajectory

__all__ = [
    "DegenerateFrequencies",
    "CoverageGrid",
    "ErgodicReport",
    "time_averaged_density",
    "cross_term_residual",
    "coverage_fraction",
    "recurrence_metric",
    "trajectory_time_average",
    "find_unvisited_accessible_cell",
]


class DegenerateFrequencies(RuntimeError):
    """Two distinct terms share an energy: their cross term never decays."""


def _check_gaps(sup: OscillatorSuperposition2D):
    scale = max(abs(sup.energy(n1, n2)) for n1, n2, _ in sup.terms)
    for gap in sup.level_gaps():
        if abs(gap) <= 1e-12 * max(scale, 1.0):
            raise DegenerateFrequencies(
                "distinct terms are degenerate; their cross term does not decay")


def time_averaged_density(sup: OscillatorSuperposition2D, point, T: float):
    """(1/T) integral of |psi|^2 dt, evaluated in closed form.

    The diagonal part is stationary; each cross term carries the exact factor
    (1/T) int_0^T exp(-i dE t / hbar) dt, which decays like 1/T.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    _check_gaps(sup)
    if isinstance(point, Configuration):
        pts = point.as_array()[None, :]
        scalar = True
    else:
        pts = np.atleast_2d(np.asarray(point, dtype=float))
        scalar = False

    ux, uy, _, _ = sup._axis_functions(pts, want_grad=False)
    hbar = sup.constants.hbar
    out = np.zeros(pts.shape[0])
    terms = sup.terms
    for j, (n1j, n2j, cj) in enumerate(terms):
        fj = ux[n1j] * uy[n2j]
        out += abs(cj) ** 2 * fj**2
        for n1k, n2k, ck in terms[j + 1:]:
            fk = ux[n1k] * uy[n2k]
            delta = (sup.energy(n1j, n2j) - sup.energy(n1k, n2k)) / hbar
            mu = (np.exp(-1j * delta * T) - 1.0) / (-1j * delta * T)
            out += 2.0 * np.real(cj * np.conj(ck) * mu) * fj * fk
    return float(out[0]) if scalar else out


def _diagnostic_bounds(sup: OscillatorSuperposition2D, margin: float = 1.2):
    half = margin * max(sup.turning_radius(0), sup.turning_radius(1))
    return ((-half, half), (-half, half))


def cross_term_residual(sup: OscillatorSuperposition2D, T: float,
                        bounds=None, n_nodes: int = 256) -> float:
    """L2 norm, over the accessible rectangle, of the time-averaged density
    minus its stationary part."""
    if not T > 0:
        raise ValueError("T must be positive")
    _check_gaps(sup)
    (x0, x1), (y0, y1) = bounds if bounds is not None else _diagnostic_bounds(sup)
    nodes, weights = gauss_legendre_nodes(n_nodes)
    gx = 0.5 * (x1 - x0) * nodes + 0.5 * (x1 + x0)
    gy = 0.5 * (y1 - y0) * nodes + 0.5 * (y1 + y0)
    wx = 0.5 * (x1 - x0) * weights
    wy = 0.5 * (y1 - y0) * weights
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    resid = time_averaged_density(sup, pts, T) - sup.stationary_density_many(pts)
    sq = (resid**2).reshape(len(gx), len(gy))
    return float(math.sqrt(max(wx @ sq @ wy, 0.0)))


@dataclass
class CoverageGrid:
    """Occupancy grid over a configuration-space rectangle.

    ``accessible`` marks cells whose long-horizon averaged density clears the
    accessibility threshold; ``visited`` accumulates cells entered by marked
    trajectory polylines.
    """

    bounds: tuple[tuple[float, float], tuple[float, float]]
    resolution: int
    accessible: np.ndarray
    access_threshold: float
    visited: np.ndarray = field(default=None)
    outside_points: int = 0

    def __post_init__(self):
        if self.resolution < 8:
            raise ValueError("resolution must be at least 8")
        if self.visited is None:
            self.visited = np.zeros((self.resolution, self.resolution), dtype=bool)

    @classmethod
    def for_superposition(cls, sup: OscillatorSuperposition2D,
                          resolution: int = 64, margin: float = 1.2,
                          access_ratio: float = 1e-4) -> "CoverageGrid":
        bounds = _diagnostic_bounds(sup, margin)
        (x0, x1), (y0, y1) = bounds
        cx = x0 + (np.arange(resolution) + 0.5) * (x1 - x0) / resolution
        cy = y0 + (np.arange(resolution) + 0.5) * (y1 - y0) / resolution
        X, Y = np.meshgrid(cx, cy, indexing="ij")
        dens = sup.stationary_density_many(
            np.column_stack([X.ravel(), Y.ravel()])).reshape(resolution, resolution)
        threshold = access_ratio * float(np.max(dens))
        return cls(bounds=bounds, resolution=resolution,
                   accessible=dens > threshold, access_threshold=threshold)

    # -- cell geometry ------------------------------------------------------

    def cell_size(self) -> tuple[float, float]:
        (x0, x1), (y0, y1) = self.bounds
        return (x1 - x0) / self.resolution, (y1 - y0) / self.resolution

    def cell_bounds(self, i: int, j: int):
        (x0, _), (y0, _) = self.bounds
        dx, dy = self.cell_size()
        return ((x0 + i * dx, x0 + (i + 1) * dx), (y0 + j * dy, y0 + (j + 1) * dy))

    def _cell_index(self, x: float, y: float) -> tuple[int, int] | None:
        (x0, x1), (y0, y1) = self.bounds
        if not (x0 <= x <= x1 and y0 <= y <= y1):
            return None
        dx, dy = self.cell_size()
        i = min(int((x - x0) / dx), self.resolution - 1)
        j = min(int((y - y0) / dy), self.resolution - 1)
        return i, j

    # -- marking --------------------------------------------------------------

    def mark(self, trajectory) -> int:
        """Mark every cell entered by the polyline through the recorded samples.

        Returns the number of recorded points falling outside the grid bounds
        (segments are clipped, the count is also accumulated on the grid).
        """
        coords = trajectory.coords if isinstance(trajectory, Trajectory) else np.asarray(trajectory)
        coords = np.atleast_2d(coords)
        (x0, x1), (y0, y1) = self.bounds
        dx, dy = self.cell_size()
        outside = int(np.sum(~((coords[:, 0] >= x0) & (coords[:, 0] <= x1)
                               & (coords[:, 1] >= y0) & (coords[:, 1] <= y1))))
        self.outside_points += outside

        xs, ys = coords[:, 0], coords[:, 1]
        for k in range(len(coords) - 1):
            ax, ay, bx, by = xs[k], ys[k], xs[k + 1], ys[k + 1]
            ca = self._cell_index(ax, ay)
            cb = self._cell_index(bx, by)
            if ca == cb and ca is not None:
                self.visited[ca] = True
                continue
            # crossing parameters with the grid lines, then cell of each midpoint
            ts = [0.0, 1.0]
            if bx != ax:
                ks = np.arange(self.resolution + 1)
                tx = (x0 + ks * dx - ax) / (bx - ax)
                ts.extend(tx[(tx > 0.0) & (tx < 1.0)])
            if by != ay:
                ks = np.arange(self.resolution + 1)
                ty = (y0 + ks * dy - ay) / (by - ay)
                ts.extend(ty[(ty > 0.0) & (ty < 1.0)])
            ts = np.unique(ts)
            mids = 0.5 * (ts[:-1] + ts[1:])
            for m in mids:
                c = self._cell_index(ax + m * (bx - ax), ay + m * (by - ay))
                if c is not None:
                    self.visited[c] = True
        if len(coords) == 1:
            c = self._cell_index(xs[0], ys[0])
            if c is not None:
                self.visited[c] = True
        return outside

    @property
    def fraction(self) -> float:
        acc = int(np.sum(self.accessible))
        if acc == 0:
            return 0.0
        return float(np.sum(self.visited & self.accessible) / acc)

    def merge(self, other: "CoverageGrid") -> None:
        """Disjunction of visit masks from a grid with identical geometry."""
        if other.bounds != self.bounds or other.resolution != self.resolution:
            raise ValueError("grids must share geometry to merge")
        self.visited |= other.visited
        self.outside_points += other.outside_points


def coverage_fraction(trajectory, grid: CoverageGrid) -> float:
    """Mark the trajectory on the grid and return the visited fraction of
    accessible cells."""
    grid.mark(trajectory)
    return grid.fraction


def recurrence_metric(trajectory: Trajectory, period_candidate: float) -> float:
    """Largest recurrence gap max_t |q(t + P) - q(t)| over the recorded grid.

    The shifted configuration is linearly interpolated between samples.
    """
    times = trajectory.times
    horizon = times[-1] - times[0]
    if not period_candidate > 0:
        raise ValueError("period must be positive")
    if horizon < 2 * period_candidate:
        raise ValueError("trajectory horizon must cover two candidate periods")
    base = times[times + period_candidate <= times[-1] + 1e-12]
    shifted = np.minimum(base + period_candidate, times[-1])
    worst = 0.0
    for j in range(trajectory.coords.shape[1]):
        here = np.interp(base, times, trajectory.coords[:, j])
        there = np.interp(shifted, times, trajectory.coords[:, j])
        worst = max(worst, float(np.max(np.abs(there - here))))
    return worst


def trajectory_time_average(trajectory: Trajectory, fn) -> float:
    """Trapezoid time average of fn(configuration) along the recorded samples."""
    vals = np.asarray(fn(trajectory.coords), dtype=float)
    t = trajectory.times
    return float(trapezoid(vals, t) / (t[-1] - t[0]))


def find_unvisited_accessible_cell(grid: CoverageGrid,
                                   sup: OscillatorSuperposition2D) -> tuple[int, int] | None:
    """Densest accessible-but-unvisited cell, or None if the grid is covered."""
    candidates = grid.accessible & ~grid.visited
    if not np.any(candidates):
        return None
    res = grid.resolution
    (x0, _), (y0, _) = grid.bounds
    dx, dy = grid.cell_size()
    idx = np.argwhere(candidates)
    centers = np.column_stack([x0 + (idx[:, 0] + 0.5) * dx,
                               y0 + (idx[:, 1] + 0.5) * dy])
    dens = sup.stationary_density_many(centers)
    best = idx[int(np.argmax(dens))]
    return int(best[0]), int(best[1])


@dataclass(frozen=True)
class ErgodicReport:
    """Headline numbers of one ergodicity run."""

    time_avg: float
    space_avg: float
    coverage_fraction: float
    cross_term_residual: float
    horizon: float
    discrepancy: float = None

    def __post_init__(self):
        if self.discrepancy is None:
            object.__setattr__(self, "discrepancy",
                               abs(self.time_avg - self.space_avg))
        for name in ("time_avg", "space_avg", "coverage_fraction",
                     "cross_term_residual", "horizon", "discrepancy"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if abs(self.discrepancy - abs(self.time_avg - self.space_avg)) > 1e-9:
            raise ValueError("discrepancy must equal |time_avg - space_avg|")
