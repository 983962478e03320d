"""Ensemble (space) averages by quadrature and trial (time) averages.

A trial emits one actual pair, integrates it through the guidance flow, and
evaluates the observable on the actual configuration alone: empty branches of
the wave fire no detectors.  Coincidences between identical particles are
counted over both detector assignments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .dynamics import IntegratorConfig, flow_ensemble
from .equilibrium import sample_initial, sample_initial_constrained_sum
from .quadrature import integrate_1d, integrate_2d
from .wavemodels import TwoParticleEntangledState, WavefunctionModel

__all__ = [
    "Detector",
    "DetectionSetup",
    "JointIndicator",
    "Coordinate",
    "CoordinateSquared",
    "SumCoordinates",
    "DifferenceSquared",
    "AverageReport",
    "TrialFailure",
    "space_average",
    "time_average_trials",
    "compare_averages",
]


class TrialFailure(RuntimeError):
    """Every trial in a batch failed to integrate."""


@dataclass(frozen=True)
class Detector:
    """Sharp window on the detection coordinate."""

    lo: float
    hi: float

    def __post_init__(self):
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        if not self.lo < self.hi:
            raise ValueError("detector needs lo < hi")

    def contains(self, y: np.ndarray) -> np.ndarray:
        return (y >= self.lo) & (y <= self.hi)

    def intersect(self, other: "Detector") -> "Detector | None":
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        return Detector(lo, hi) if lo < hi else None


@dataclass(frozen=True)
class DetectionSetup:
    d1: Detector
    d2: Detector
    t_detect: float

    def __post_init__(self):
        object.__setattr__(self, "t_detect", float(self.t_detect))
        if not self.t_detect > 0:
            raise ValueError("t_detect must be positive")


@dataclass(frozen=True)
class JointIndicator:
    """1 iff both detectors fire on the actual configuration.

    For a pair of identical particles the coincidence counts either detector
    assignment; for a single coordinate both windows must contain it (a single
    window is modelled as d1 = d2).
    """

    setup: DetectionSetup

    @property
    def time(self) -> float:
        return self.setup.t_detect

    def evaluate(self, coords: np.ndarray) -> np.ndarray:
        coords = np.atleast_2d(coords)
        d1, d2 = self.setup.d1, self.setup.d2
        if coords.shape[1] == 1:
            y = coords[:, 0]
            return (d1.contains(y) & d2.contains(y)).astype(float)
        y1, y2 = coords[:, 0], coords[:, 1]
        direct = d1.contains(y1) & d2.contains(y2)
        swapped = d2.contains(y1) & d1.contains(y2)
        return (direct | swapped).astype(float)


@dataclass(frozen=True)
class Coordinate:
    index: int
    time: float

    def evaluate(self, coords: np.ndarray) -> np.ndarray:
        return np.atleast_2d(coords)[:, self.index]


@dataclass(frozen=True)
class CoordinateSquared:
    index: int
    time: float

    def evaluate(self, coords: np.ndarray) -> np.ndarray:
        return np.atleast_2d(coords)[:, self.index] ** 2


@dataclass(frozen=True)
class SumCoordinates:
    time: float

    def evaluate(self, coords: np.ndarray) -> np.ndarray:
        return np.sum(np.atleast_2d(coords), axis=1)


@dataclass(frozen=True)
class DifferenceSquared:
    time: float

    def evaluate(self, coords: np.ndarray) -> np.ndarray:
        coords = np.atleast_2d(coords)
        if coords.shape[1] != 2:
            raise ValueError("DifferenceSquared needs two coordinates")
        return (coords[:, 0] - coords[:, 1]) ** 2


@dataclass(frozen=True)
class AverageReport:
    """Space and/or trial averages of one observable.

    ``space_avg`` is None when only the trial side was computed.  The
    discrepancy flag marks |space - time| > 5 standard errors.
    """

    time_avg: float
    std_error: float
    n_trials: int
    n_failed: int
    space_avg: float | None = None
    discrepant: bool = False

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be nonnegative")
        if self.n_failed > self.n_trials:
            raise ValueError("n_failed cannot exceed n_trials")


def _clip_window(det: Detector, lo: float, hi: float) -> tuple[float, float] | None:
    a, b = max(det.lo, lo), min(det.hi, hi)
    return (a, b) if a < b else None


def _rect_probability(model, rect_x, rect_y, t, abs_tol) -> float:
    return integrate_2d(lambda pts: model.density_many(pts, t),
                        (rect_x, rect_y), abs_tol=abs_tol)


def space_average(model: WavefunctionModel, obs, abs_tol: float = 1e-8) -> float:
    """Integral of the observable against the density at the observable's time."""
    t = obs.time
    box = model.support_box(t, nsigma=12.0)

    if isinstance(obs, JointIndicator):
        d1, d2 = obs.setup.d1, obs.setup.d2
        if model.n_coords == 1:
            overlap = d1.intersect(d2)
            if overlap is None:
                return 0.0
            window = _clip_window(overlap, *box[0])
            if window is None:
                return 0.0
            return integrate_1d(lambda y: model.density_many(y[:, None], t),
                                *window, abs_tol=abs_tol)
        w1 = _clip_window(d1, *box[0])
        w2 = _clip_window(d2, *box[1])
        if w1 is None or w2 is None:
            return 0.0
        # coincidence region = (D1 x D2) u (D2 x D1); inclusion-exclusion
        total = _rect_probability(model, w1, w2, t, abs_tol / 3)
        total += _rect_probability(model, w2, w1, t, abs_tol / 3)
        both = d1.intersect(d2)
        if both is not None:
            wb = _clip_window(both, *box[0])
            if wb is not None:
                total -= _rect_probability(model, wb, wb, t, abs_tol / 3)
        return total

    if model.n_coords == 1:
        return integrate_1d(
            lambda y: obs.evaluate(y[:, None]) * model.density_many(y[:, None], t),
            *box[0], abs_tol=abs_tol)
    return integrate_2d(
        lambda pts: obs.evaluate(pts) * model.density_many(pts, t),
        box, abs_tol=abs_tol)


def trial_endpoints(model: WavefunctionModel, t_eval: float, n_trials: int,
                    seed: int, cfg: IntegratorConfig,
                    initial_sum: float | None = None,
                    workers: int = 1) -> tuple[np.ndarray, int]:
    """Integrate n_trials single-pair draws to t_eval; returns surviving
    endpoint configurations and the failure count."""
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    if initial_sum is None:
        samples = sample_initial(model, cfg.t0, n_trials, seed)
    else:
        if not isinstance(model, TwoParticleEntangledState):
            raise ValueError("initial_sum constraint applies to the pair state only")
        samples = sample_initial_constrained_sum(model, cfg.t0, n_trials, seed,
                                                 total=initial_sum)
    if t_eval < cfg.t0:
        raise ValueError("observable time precedes the trial start time")
    if t_eval == cfg.t0:
        return samples.coords, 0
    run = replace(cfg, t_end=t_eval, output_stride=(t_eval - cfg.t0))
    res = flow_ensemble(model, samples, run, workers=workers)
    return res.final_coords(), len(res.failures)


def time_average_trials(model: WavefunctionModel, obs, n_trials: int, seed: int,
                        cfg: IntegratorConfig, initial_sum: float | None = None,
                        workers: int = 1) -> AverageReport:
    """Trial mean of the observable over repeated single-pair emissions.

    Each trial draws one configuration from equilibrium at cfg.t0 (everywhere
    else the wave is empty), flows it to the observable's time and evaluates
    the observable on the actual configuration only.
    """
    endpoints, n_failed = trial_endpoints(model, obs.time, n_trials, seed, cfg,
                                          initial_sum=initial_sum, workers=workers)
    n_ok = len(endpoints)
    if n_ok == 0:
        raise TrialFailure(f"all {n_trials} trials failed to integrate")
    vals = obs.evaluate(endpoints)
    mean = float(np.mean(vals))
    std_error = float(np.std(vals, ddof=1) / math.sqrt(n_ok)) if n_ok > 1 else 0.0
    return AverageReport(time_avg=mean, std_error=std_error,
                         n_trials=n_trials, n_failed=n_failed)


def compare_averages(model: WavefunctionModel, obs, n_trials: int, seed: int,
                     cfg: IntegratorConfig, initial_sum: float | None = None,
                     workers: int = 1, abs_tol: float = 1e-8) -> AverageReport:
    """Quadrature average vs trial average, flagging an ergodic discrepancy
    when they disagree by more than 5 standard errors."""
    trial = time_average_trials(model, obs, n_trials, seed, cfg,
                                initial_sum=initial_sum, workers=workers)
    space = space_average(model, obs, abs_tol=abs_tol)
    flag = abs(space - trial.time_avg) > 5.0 * trial.std_error
    return replace(trial, space_avg=space, discrepant=bool(flag))
