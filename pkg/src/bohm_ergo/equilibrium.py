"""Seeded sampling from |psi(., t0)|^2 and equivariance verification.

Sampling is counter-based: every sample index owns a fixed block of Philox
draws, so results are reproducible from (model, t0, n, seed) and independent
of execution order or worker count.  Superpositions are drawn by rejection
against an explicit Gaussian-mixture envelope; single packets use the exact
normal transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import quadrature
from .dynamics import IntegratorConfig, flow_ensemble
from .quadrature import GridCDF, ks_statistic
from .wavemodels import (
    Configuration,
    DoubleSlitState,
    GaussianPacket1D,
    OscillatorSuperposition2D,
    TwoParticleEntangledState,
    WavefunctionModel,
)

__all__ = [
    "EnvelopeFailure",
    "SampleSet",
    "EquivarianceResult",
    "sample_initial",
    "sample_initial_constrained_sum",
    "equivariance_distance",
]

_ATTEMPTS_PER_ROUND = 16
_MAX_ROUNDS = 64
_MIN_ACCEPT_RATE = 1e-4


class EnvelopeFailure(RuntimeError):
    """Rejection envelope is a bad fit for the target density."""


@dataclass(frozen=True)
class SampleSet:
    """Seeded equilibrium draws at one time."""

    t0: float
    coords: np.ndarray  # (n, n_coords)
    seed: int
    model_tag: str
    n_particles: int = 1
    dims: int = 1

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        object.__setattr__(self, "coords", coords)

    def __len__(self) -> int:
        return len(self.coords)

    def configurations(self) -> list[Configuration]:
        return [Configuration(tuple(row), self.n_particles, self.dims)
                for row in self.coords]


def _philox(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.uint64(seed & (2**64 - 1))))


@dataclass(frozen=True)
class _MixtureEnvelope:
    """Gaussian mixture g with a constant M such that rho <= M * g pointwise."""

    means: np.ndarray    # (c, dim)
    sigmas: np.ndarray   # (c, dim)
    weights: np.ndarray  # (c,), sums to 1
    bound: float

    def pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        out = np.zeros(x.shape[0])
        for mu, sg, w in zip(self.means, self.sigmas, self.weights):
            z = (x - mu) / sg
            norm = np.prod(1.0 / (sg * math.sqrt(2 * math.pi)))
            out += w * norm * np.exp(-0.5 * np.sum(z**2, axis=1))
        return out


def _envelope_for(model: WavefunctionModel, t0: float) -> _MixtureEnvelope:
    if isinstance(model, DoubleSlitState):
        # |psi|^2 <= 2 N^2 (|G+|^2 + |G-|^2): exact two-component bound
        w = float(np.max(np.atleast_1d(model.width(t0))))
        d = model.half_separation
        m = 2.0 / (1.0 + math.cos(model.relative_phase) * model._overlap)
        return _MixtureEnvelope(means=np.array([[d], [-d]]),
                                sigmas=np.full((2, 1), w),
                                weights=np.array([0.5, 0.5]), bound=m)
    if isinstance(model, TwoParticleEntangledState):
        w = float(np.max(np.atleast_1d(model.width(t0))))
        d = model.half_separation
        m = 2.0 / (1.0 + model._overlap**2)
        return _MixtureEnvelope(means=np.array([[d, -d], [-d, d]]),
                                sigmas=np.full((2, 2), w),
                                weights=np.array([0.5, 0.5]), bound=m)
    if isinstance(model, OscillatorSuperposition2D):
        c = model.constants
        means, sigmas, weights = [], [], []
        for n1, n2, ck in model.terms:
            s1 = math.sqrt((n1 + 1.0) * c.hbar / (c.mass * model.omega1))
            s2 = math.sqrt((n2 + 1.0) * c.hbar / (c.mass * model.omega2))
            means.append([0.0, 0.0])
            sigmas.append([s1, s2])
            weights.append(abs(ck) ** 2)
        env = _MixtureEnvelope(means=np.array(means), sigmas=np.array(sigmas),
                               weights=np.array(weights), bound=1.0)
        # the density/envelope ratio decays at infinity, so its sup is interior;
        # measure it on a dense grid and add headroom
        (x0, x1), (y0, y1) = model.support_box(t0)
        gx = np.linspace(x0, x1, 257)
        gy = np.linspace(y0, y1, 257)
        X, Y = np.meshgrid(gx, gy, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        ratio = model.density_many(pts, t0) / np.maximum(env.pdf(pts), 1e-300)
        return replace(env, bound=1.25 * float(np.max(ratio)))
    raise TypeError(f"no sampler for model type {type(model).__name__}")


def _rejection_sample(model: WavefunctionModel, t0: float, n: int,
                      seed: int) -> np.ndarray:
    env = _envelope_for(model, t0)
    dim = model.n_coords
    ncomp = len(env.weights)
    cumw = np.cumsum(env.weights)

    for _ in range(4):  # envelope-bound adaptation restarts; normally one pass
        gen = _philox(seed)
        out = np.full((n, dim), np.nan)
        done = np.zeros(n, dtype=bool)
        tried = 0
        accepted = 0
        violated = False
        for _round in range(_MAX_ROUNDS):
            k = _ATTEMPTS_PER_ROUND
            # fixed-shape blocks keep sample i's stream independent of the rest
            u_comp = gen.random((n, k))
            z = gen.standard_normal((n, k, dim))
            u_acc = gen.random((n, k))

            comp = np.searchsorted(cumw, u_comp, side="right").clip(0, ncomp - 1)
            cand = env.means[comp] + env.sigmas[comp] * z
            flat = cand.reshape(n * k, dim)
            target = model.density_many(flat, t0).reshape(n, k)
            gpdf = env.pdf(flat).reshape(n, k)
            ceiling = env.bound * gpdf
            if np.any(target > ceiling * (1.0 + 1e-9)):
                violated = True
                break
            acc = u_acc * ceiling < target

            todo = ~done
            tried += int(np.sum(todo)) * k
            first = np.argmax(acc, axis=1)
            has = acc.any(axis=1) & todo
            out[has] = cand[has, first[has]]
            accepted += int(np.sum(acc[todo]))
            done |= has
            if done.all():
                return out
            if tried > 16 * _ATTEMPTS_PER_ROUND * max(n, 1):
                rate = accepted / max(tried, 1)
                if rate < _MIN_ACCEPT_RATE:
                    raise EnvelopeFailure(
                        f"acceptance rate {rate:.2e} below {_MIN_ACCEPT_RATE}")
        if violated:
            env = replace(env, bound=env.bound * 2.0)
            continue
        rate = accepted / max(tried, 1)
        raise EnvelopeFailure(
            f"sampling stalled after {_MAX_ROUNDS} rounds (acceptance {rate:.2e})")
    raise EnvelopeFailure("envelope bound kept being violated after adaptation")


def sample_initial(model: WavefunctionModel, t0: float, n: int,
                   seed: int) -> SampleSet:
    """Draw n i.i.d. configurations from density(model, ., t0)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        coords = np.empty((0, model.n_coords))
    elif isinstance(model, GaussianPacket1D):
        gen = _philox(seed)
        z = gen.standard_normal((n, 1))
        w = float(np.max(np.atleast_1d(model.width(t0))))
        center = model.center0 + model.drift * t0
        coords = center + w * z
    else:
        coords = _rejection_sample(model, t0, n, seed)
    return SampleSet(t0=float(t0), coords=coords, seed=int(seed),
                     model_tag=type(model).__name__,
                     n_particles=model.n_particles, dims=model.dims)


def sample_initial_constrained_sum(model: TwoParticleEntangledState, t0: float,
                                   n: int, seed: int, total: float) -> SampleSet:
    """Equilibrium draws restricted to the slice Y1 + Y2 = total.

    The pair state factorises into independent sum and difference modes, so
    the restricted ensemble is the difference-mode marginal with the sum mode
    pinned.  This is the point-slit preparation: every emitted pair shares the
    same center-of-mass offset.
    """
    if not isinstance(model, TwoParticleEntangledState):
        raise TypeError("constrained sampling is defined for the entangled pair state")
    if n < 0:
        raise ValueError("n must be nonnegative")
    rel = DoubleSlitState(half_separation=model.half_separation * math.sqrt(2.0),
                          sigma0=model.sigma0, relative_phase=0.0,
                          constants=model.constants)
    v = sample_initial(rel, t0, n, seed).coords[:, 0]
    u0 = total / math.sqrt(2.0)
    inv = 1.0 / math.sqrt(2.0)
    coords = np.column_stack([(u0 + v) * inv, (u0 - v) * inv])
    return SampleSet(t0=float(t0), coords=coords, seed=int(seed),
                     model_tag=f"{type(model).__name__}|sum={total!r}",
                     n_particles=model.n_particles, dims=model.dims)


# -- equivariance -------------------------------------------------------------

@dataclass(frozen=True)
class EquivarianceResult:
    """Worst KS distance between flowed samples and the evolved density."""

    statistic: float
    components: dict[str, float]
    n_used: int
    n_failed: int

    def __float__(self) -> float:
        return self.statistic


def _marginal_density_fn(model: WavefunctionModel, t: float, direction: str):
    """1-D marginal of the configuration density along a named direction."""
    box = model.support_box(t)
    if model.n_coords == 1:
        lo, hi = box[0]
        return (lambda y: model.density_many(y[:, None], t)), (lo, hi)

    (x0, x1), (y0, y1) = box
    nodes, weights = quadrature.gauss_legendre_nodes(513)

    def against(fixed_axis_range, build_points):
        lo_i, hi_i = fixed_axis_range
        half = 0.5 * (hi_i - lo_i)
        inner = half * nodes + 0.5 * (hi_i + lo_i)
        w = half * weights

        def f(a: np.ndarray) -> np.ndarray:
            A, B = np.meshgrid(a, inner, indexing="ij")
            pts, jac = build_points(A.ravel(), B.ravel())
            dens = model.density_many(pts, t).reshape(len(a), len(inner))
            return jac * dens @ w
        return f

    if direction == "c0":
        return against((y0, y1), lambda a, b: (np.column_stack([a, b]), 1.0)), (x0, x1)
    if direction == "c1":
        return against((x0, x1), lambda a, b: (np.column_stack([b, a]), 1.0)), (y0, y1)
    if direction == "sum":
        # s = q0 + q1; integrate over w = q0 - q1 with Jacobian 1/2
        wlo, whi = x0 - y1, x1 - y0
        rng = (x0 + y0, x1 + y1)
        return against((wlo, whi),
                       lambda s, w: (np.column_stack([(s + w) / 2.0, (s - w) / 2.0]), 0.5)), rng
    if direction == "diff":
        slo, shi = x0 + y0, x1 + y1
        rng = (x0 - y1, x1 - y0)
        return against((slo, shi),
                       lambda w, s: (np.column_stack([(s + w) / 2.0, (s - w) / 2.0]), 0.5)), rng
    raise ValueError(f"unknown direction {direction!r}")


def _projections(coords: np.ndarray, n_coords: int) -> dict[str, np.ndarray]:
    if n_coords == 1:
        return {"c0": coords[:, 0]}
    return {
        "c0": coords[:, 0],
        "c1": coords[:, 1],
        "sum": coords[:, 0] + coords[:, 1],
        "diff": coords[:, 0] - coords[:, 1],
    }


def distribution_distance(model: WavefunctionModel, coords: np.ndarray,
                          t: float) -> dict[str, float]:
    """KS statistics of configuration samples against the density at time t,
    per coordinate plus the rotated sum/difference directions."""
    out = {}
    for name, values in _projections(coords, model.n_coords).items():
        fn, (lo, hi) = _marginal_density_fn(model, t, name)
        n_grid = 16385 if model.n_coords == 1 else 4097
        cdf = GridCDF(fn, lo, hi, n_grid=n_grid)
        out[name] = ks_statistic(values, cdf)
    return out


def equivariance_distance(model: WavefunctionModel, samples: SampleSet,
                          t1: float, cfg: IntegratorConfig,
                          workers: int = 1) -> EquivarianceResult:
    """Flow equilibrium samples to t1 and measure the KS distance to |psi(t1)|^2.

    Integration failures are dropped from the statistic and reported in the
    result.  t1 = samples.t0 compares the raw samples (identity flow).
    """
    if t1 < samples.t0:
        raise ValueError("t1 must not precede the sampling time")
    if t1 == samples.t0 or len(samples) == 0:
        coords = samples.coords
        n_failed = 0
    else:
        run = replace(cfg, t0=samples.t0, t_end=t1,
                      output_stride=(t1 - samples.t0))
        res = flow_ensemble(model, samples, run, workers=workers)
        coords = res.final_coords()
        n_failed = len(res.failures)
    comps = distribution_distance(model, coords, t1)
    return EquivarianceResult(statistic=max(comps.values()), components=comps,
                              n_used=len(coords), n_failed=n_failed)
