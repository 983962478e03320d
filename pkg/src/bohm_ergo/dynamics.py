"""Adaptive integration of the guidance ODE dq/dt = v(q, t).

A Dormand-Prince 5(4) embedded pair with per-step error control drives every
trajectory.  Ensembles are integrated as a masked batch: each row keeps its
own time, step size and accept/reject history, so the numbers produced for a
given initial condition are bit-identical whether it is integrated alone, in
a batch, or split across workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .wavemodels import (
    DEFAULT_NODE_EPS,
    Configuration,
    NodeProximityError,
    WavefunctionModel,
    _coerce_coords,
)

__all__ = [
    "IntegratorConfig",
    "Trajectory",
    "EnsembleResult",
    "StepCollapseError",
    "integrate_trajectory",
    "flow_ensemble",
]


class StepCollapseError(RuntimeError):
    """The adaptive step size underflowed while rejecting steps."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Time span, tolerances and recording grid for trajectory integration."""

    t0: float
    t_end: float
    dt_init: float = 1e-3
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    v_cap: float = 1e6
    node_eps: float = DEFAULT_NODE_EPS
    output_stride: float = 0.1

    def __post_init__(self):
        for name in ("t0", "t_end", "dt_init", "rel_tol", "abs_tol",
                     "v_cap", "node_eps", "output_stride"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.t_end > self.t0:
            raise ValueError("t_end must exceed t0")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.output_stride > 0:
            raise ValueError("output_stride must be positive")
        if not self.dt_init > 0:
            raise ValueError("dt_init must be positive")

    def record_times(self) -> np.ndarray:
        """Uniform output grid; the final sample always sits exactly at t_end."""
        span = self.t_end - self.t0
        k = int(np.floor(span / self.output_stride * (1 + 1e-12)))
        times = self.t0 + self.output_stride * np.arange(k + 1, dtype=float)
        if times[-1] < self.t_end - 1e-12 * max(1.0, abs(self.t_end)):
            times = np.append(times, self.t_end)
        else:
            times[-1] = self.t_end
        return times


@dataclass(frozen=True)
class Trajectory:
    """Recorded configurations on a strictly increasing time grid."""

    times: np.ndarray
    coords: np.ndarray  # (n_times, n_coords)
    n_particles: int = 1
    dims: int = 1

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        coords = np.asarray(self.coords, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "coords", coords)
        if times.ndim != 1 or coords.ndim != 2 or len(times) != len(coords):
            raise ValueError("times and coords must be aligned 1-D/2-D arrays")
        if len(times) > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("times must be strictly increasing")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(coords))):
            raise ValueError("trajectory contains non-finite values")

    def __len__(self) -> int:
        return len(self.times)

    def at(self, t: float) -> np.ndarray:
        """Linear interpolation of the recorded samples."""
        t = float(t)
        if not (self.times[0] <= t <= self.times[-1]):
            raise ValueError(f"t={t} outside recorded span")
        return np.array([np.interp(t, self.times, self.coords[:, j])
                         for j in range(self.coords.shape[1])])

    def configurations(self) -> list[Configuration]:
        return [Configuration(tuple(row), self.n_particles, self.dims)
                for row in self.coords]


@dataclass
class EnsembleResult:
    """Trajectories of an ensemble on a shared output grid.

    ``coords[i]`` holds trajectory i; rows that failed carry NaN past the
    failure point and are listed in ``failures`` (index -> exception).
    """

    times: np.ndarray
    coords: np.ndarray  # (n, n_times, n_coords)
    n_particles: int
    dims: int
    failures: dict[int, Exception] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def ok_mask(self) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        for i in self.failures:
            mask[i] = False
        return mask

    def trajectory(self, i: int) -> Trajectory:
        if i in self.failures:
            raise self.failures[i]
        return Trajectory(self.times, self.coords[i],
                          n_particles=self.n_particles, dims=self.dims)

    @property
    def trajectories(self) -> list[Trajectory | None]:
        return [None if i in self.failures else
                Trajectory(self.times, self.coords[i],
                           n_particles=self.n_particles, dims=self.dims)
                for i in range(self.n)]

    def final_coords(self) -> np.ndarray:
        """Endpoint configurations of the surviving trajectories."""
        return self.coords[self.ok_mask, -1, :]


# Dormand-Prince 5(4) tableau; the 5th-order solution propagates, the
# difference to the embedded 4th-order one estimates the local error.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_ERR = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920,
                 -17253 / 339200, 22 / 525, -1 / 40])
# quartic dense-output coefficients of the 5(4) pair (Shampine's extension)
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608,
     -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933,
     87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304,
     -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408,
     701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_H_FLOOR_FACTOR = 1e-14
_MAX_ATTEMPTS = 1_000_000

_STATUS_RUNNING = 0
_STATUS_DONE = 1
_STATUS_FAILED = 2


def _dense_eval(y0, stages, dt, theta):
    """Quartic dense-output value at fraction theta of one accepted step.

    ``stages`` is (7, m, dim); evaluates y0 + dt * sum_i b_i(theta) k_i with
    b_i(theta) = theta (P_i0 + theta (P_i1 + theta (P_i2 + theta P_i3))).
    The stage sum is accumulated in a fixed order so results stay bit-stable
    for any batch size.
    """
    th = theta
    b = _P[:, 3][:, None] * th
    for col in (2, 1, 0):
        b = (b + _P[:, col][:, None]) * th
    acc = b[0][:, None] * stages[0]
    for i in range(1, 7):
        acc = acc + b[i][:, None] * stages[i]
    return y0 + dt[:, None] * acc


def _integrate_batch(model: WavefunctionModel, y0: np.ndarray,
                     cfg: IntegratorConfig) -> EnsembleResult:
    n, dim = y0.shape
    grid = cfg.record_times()
    nt = len(grid)
    span = cfg.t_end - cfg.t0
    h_floor = _H_FLOOR_FACTOR * span

    out = np.full((n, nt, dim), np.nan)
    out[:, 0, :] = y0
    next_idx = np.ones(n, dtype=np.int64)

    t = np.full(n, cfg.t0)
    y = y0.astype(float).copy()
    h = np.full(n, min(cfg.dt_init, span))
    status = np.full(n, _STATUS_RUNNING, dtype=np.int8)
    attempts = np.zeros(n, dtype=np.int64)
    failures: dict[int, Exception] = {}

    def fail(rows: np.ndarray, exc_factory):
        for i in rows:
            failures[int(i)] = exc_factory(int(i))
        status[rows] = _STATUS_FAILED

    # precondition: the start point must carry a nonempty wave
    f0_all, a0_all = model.guidance_many(y, np.full(n, cfg.t0))
    bad = np.flatnonzero(a0_all <= cfg.node_eps)
    if bad.size:
        fail(bad, lambda i: NodeProximityError(
            f"|psi| <= node_eps at the initial configuration (row {i})"))
    f0 = f0_all

    while True:
        act = np.flatnonzero(status == _STATUS_RUNNING)
        if act.size == 0:
            break
        attempts[act] += 1
        over = act[attempts[act] > _MAX_ATTEMPTS]
        if over.size:
            fail(over, lambda i: StepCollapseError(f"step budget exhausted (row {i})"))
            act = np.flatnonzero(status == _STATUS_RUNNING)
            if act.size == 0:
                break

        ta = t[act]
        ya = y[act]
        remaining = cfg.t_end - ta
        hs = np.minimum(h[act], remaining)
        clamped = hs >= remaining - 1e-300

        ks = [f0[act]]
        amp_ok = np.ones(act.size, dtype=bool)
        with np.errstate(all="ignore"):
            for j in range(1, 6):
                yj = ya + hs[:, None] * sum(a * k for a, k in zip(_A[j], ks))
                vj, aj = model.guidance_many(yj, ta + _C[j] * hs)
                amp_ok &= (aj > cfg.node_eps) & np.isfinite(aj)
                amp_ok &= np.all(np.isfinite(vj), axis=1)
                amp_ok &= np.max(np.abs(np.where(np.isfinite(vj), vj, np.inf)),
                                 axis=1) <= cfg.v_cap
                ks.append(vj)
            y5 = ya + hs[:, None] * sum(b * k for b, k in zip(_B5[:6], ks))
            v7, a7 = model.guidance_many(y5, ta + hs)
            amp_ok &= np.all(np.isfinite(v7), axis=1)
            amp_ok &= np.max(np.abs(np.where(np.isfinite(v7), v7, np.inf)),
                             axis=1) <= cfg.v_cap
            ks.append(v7)

            err = hs[:, None] * sum(e * k for e, k in zip(_ERR, ks))
            scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(ya), np.abs(y5))
            err_norm = np.sqrt(np.mean((err / scale) ** 2, axis=1))

        ok_err = np.isfinite(err_norm) & (err_norm <= 1.0)
        accept = amp_ok & ok_err & np.all(np.isfinite(y5), axis=1)

        # -- accepted rows: record grid crossings, advance state
        acc = act[accept]
        if acc.size:
            t_new = np.where(clamped[accept], cfg.t_end, ta[accept] + hs[accept])
            dt_acc = t_new - ta[accept]
            while True:
                idx_ok = next_idx[acc] < nt
                gi = np.where(idx_ok, next_idx[acc], nt - 1)
                g = grid[gi]
                hit = idx_ok & (g <= t_new + 1e-12 * np.maximum(1.0, np.abs(t_new)))
                if not np.any(hit):
                    break
                rows = np.flatnonzero(hit)
                theta = np.clip((g[rows] - ta[accept][rows]) / dt_acc[rows], 0.0, 1.0)
                stages = np.stack([k[accept][rows] for k in ks])
                vals = _dense_eval(ya[accept][rows], stages, dt_acc[rows], theta)
                exact = theta >= 1.0 - 1e-12
                vals[exact] = y5[accept][rows][exact]
                out[acc[rows], gi[rows], :] = vals
                next_idx[acc[rows]] += 1

            t[acc] = t_new
            y[acc] = y5[accept]
            f0[acc] = ks[6][accept]

            done = t[acc] >= cfg.t_end - 1e-300
            status[acc[done]] = _STATUS_DONE
            # a node at the freshly accepted point stalls further guidance
            still = acc[~done]
            if still.size:
                node_now = a7[accept][~done] <= cfg.node_eps
                if np.any(node_now):
                    fail(still[node_now], lambda i: NodeProximityError(
                        f"trajectory entered |psi| <= node_eps (row {i})"))

        # -- step-size update (both accepted and rejected rows)
        with np.errstate(all="ignore"):
            factor = 0.9 * err_norm ** -0.2
        # zero local error (e.g. stationary state) -> max growth; NaN -> halve
        factor = np.where(np.isfinite(factor), factor,
                          np.where(err_norm == 0.0, 5.0, 0.5))
        factor = np.where(amp_ok, factor, 0.5)  # stage hit a node / cap: halve
        factor = np.clip(factor, 0.2, 5.0)
        factor = np.where(accept, factor, np.minimum(factor, 1.0))
        h[act] = hs * factor

        rej = act[~accept & (status[act] == _STATUS_RUNNING)]
        if rej.size:
            collapsed = h[rej] < h_floor
            if np.any(collapsed):
                fail(rej[collapsed], lambda i: StepCollapseError(
                    f"step size underflowed below {h_floor:.3e} (row {i})"))

    return EnsembleResult(times=grid, coords=out,
                          n_particles=model.n_particles, dims=model.dims,
                          failures=failures)


def integrate_trajectory(model: WavefunctionModel, initial,
                         cfg: IntegratorConfig) -> Trajectory:
    """Integrate one configuration through the guidance flow.

    Raises NodeProximityError or StepCollapseError on failure; otherwise the
    result is recorded on the uniform output grid (endpoint included).
    """
    y0 = _coerce_coords(model, initial)
    res = _integrate_batch(model, y0, cfg)
    if 0 in res.failures:
        raise res.failures[0]
    return res.trajectory(0)


def flow_ensemble(model: WavefunctionModel, initials, cfg: IntegratorConfig,
                  workers: int = 1) -> EnsembleResult:
    """Integrate every initial configuration; failures are collected, not fatal.

    ``initials`` may be an (n, n_coords) array or any object exposing such an
    array as ``.coords`` (e.g. a SampleSet).  Output order always matches
    input order and is independent of ``workers``.
    """
    coords = getattr(initials, "coords", initials)
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        coords = coords[:, None]
    if coords.size == 0:
        grid = cfg.record_times()
        return EnsembleResult(times=grid,
                              coords=np.empty((0, len(grid), model.n_coords)),
                              n_particles=model.n_particles, dims=model.dims)
    if coords.shape[1] != model.n_coords:
        raise ValueError(f"initials have {coords.shape[1]} coordinates, "
                         f"model needs {model.n_coords}")

    workers = max(1, int(workers))
    if workers == 1 or coords.shape[0] < 2 * workers:
        return _integrate_batch(model, coords, cfg)

    bounds = np.linspace(0, coords.shape[0], workers + 1, dtype=int)
    chunks = [(bounds[i], bounds[i + 1]) for i in range(workers)
              if bounds[i + 1] > bounds[i]]
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(
            lambda se: _integrate_batch(model, coords[se[0]:se[1]], cfg), chunks))

    times = parts[0].times
    all_coords = np.concatenate([p.coords for p in parts], axis=0)
    failures: dict[int, Exception] = {}
    for (start, _), part in zip(chunks, parts):
        for i, exc in part.failures.items():
            failures[start + i] = exc
    return EnsembleResult(times=times, coords=all_coords,
                          n_particles=model.n_particles, dims=model.dims,
                          failures=failures)
