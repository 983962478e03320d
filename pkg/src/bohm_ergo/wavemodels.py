"""Analytic wavefunction models with exact densities and guidance velocities.

Every model evaluates its complex amplitude, probability density and
guidance velocity in closed form, vectorised over batches of configurations
(and, where needed, per-row times).  Models are immutable and safe to share
between workers; all operations are pure functions of ``(model, coords, t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DEFAULT_NODE_EPS",
    "PhysicalConstants",
    "Configuration",
    "NodeProximityError",
    "GaussianPacket1D",
    "DoubleSlitState",
    "TwoParticleEntangledState",
    "OscillatorSuperposition2D",
    "amplitude",
    "density",
    "velocity",
    "width",
]

# Below any density scale reachable by equilibrium samples at desk scale.
DEFAULT_NODE_EPS = 1e-12


class NodeProximityError(RuntimeError):
    """The guidance field was requested where |psi| is below the node cutoff."""


@dataclass(frozen=True)
class PhysicalConstants:
    """Natural-unit constants entering the guidance law and spreading factor."""

    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "hbar", float(self.hbar))
        object.__setattr__(self, "mass", float(self.mass))
        if not (self.hbar > 0 and self.mass > 0):
            raise ValueError("hbar and mass must be positive")


@dataclass(frozen=True)
class Configuration:
    """Particle positions, flattened to one coordinate per transverse axis."""

    coords: tuple[float, ...]
    n_particles: int
    dims: int

    def __post_init__(self):
        coords = tuple(float(c) for c in self.coords)
        object.__setattr__(self, "coords", coords)
        if len(coords) != self.n_particles * self.dims:
            raise ValueError(
                f"expected {self.n_particles * self.dims} coordinates, got {len(coords)}"
            )
        if not all(math.isfinite(c) for c in coords):
            raise ValueError("coordinates must be finite")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)


def _coerce_coords(model, config) -> np.ndarray:
    """Validate and reshape ``config`` into a (n, n_coords) float array."""
    if isinstance(config, Configuration):
        if (config.n_particles, config.dims) != (model.n_particles, model.dims):
            raise ValueError(
                f"configuration shape ({config.n_particles}, {config.dims}) does not "
                f"match model ({model.n_particles}, {model.dims})"
            )
        return config.as_array()[None, :]
    arr = np.asarray(config, dtype=float)
    if arr.ndim == 1:
        if model.n_coords == 1:
            return arr[:, None]
        if arr.shape[0] != model.n_coords:
            raise ValueError(f"expected {model.n_coords} coordinates, got {arr.shape[0]}")
        return arr[None, :]
    if arr.ndim == 2 and arr.shape[1] == model.n_coords:
        return arr
    raise ValueError(f"cannot interpret shape {arr.shape} as configurations "
                     f"for a {model.n_coords}-coordinate model")


class WavefunctionModel:
    """Shared evaluation plumbing; concrete models implement ``_psi_grad``."""

    n_particles: int
    dims: int
    constants: PhysicalConstants

    @property
    def n_coords(self) -> int:
        return self.n_particles * self.dims

    # -- closed forms -----------------------------------------------------

    def _psi_grad(self, coords: np.ndarray, t) -> tuple[np.ndarray, np.ndarray]:
        """Return (psi (n,), grad (n, n_coords)) at coords (n, n_coords), time t.

        ``t`` may be a scalar or a per-row array.
        """
        raise NotImplementedError

    # -- vectorised surface ------------------------------------------------

    def _rows(self, coords) -> np.ndarray:
        arr = np.asarray(coords, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != self.n_coords:
            raise ValueError(f"expected (n, {self.n_coords}) coordinates, "
                             f"got shape {arr.shape}")
        return arr

    def amplitude_many(self, coords: np.ndarray, t) -> np.ndarray:
        psi, _ = self._psi_grad(self._rows(coords), t)
        return psi

    def density_many(self, coords: np.ndarray, t) -> np.ndarray:
        psi = self.amplitude_many(coords, t)
        return np.abs(psi) ** 2

    def guidance_many(self, coords: np.ndarray, t) -> tuple[np.ndarray, np.ndarray]:
        """Velocity field and |psi| at each row; rows near nodes come back
        with whatever non-finite values the division produced (callers mask)."""
        psi, grad = self._psi_grad(self._rows(coords), t)
        c = self.constants
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            v = (c.hbar / c.mass) * np.imag(grad / psi[:, None])
        return v, np.abs(psi)

    # -- single-configuration surface ---------------------------------------

    def amplitude(self, config, t: float) -> complex:
        return complex(self.amplitude_many(_coerce_coords(self, config), float(t))[0])

    def density(self, config, t: float) -> float:
        return float(abs(self.amplitude(config, t)) ** 2)

    def velocity(self, config, t: float, node_eps: float | None = None) -> np.ndarray:
        eps = DEFAULT_NODE_EPS if node_eps is None else float(node_eps)
        v, a = self.guidance_many(_coerce_coords(self, config), float(t))
        if a[0] <= eps:
            raise NodeProximityError(
                f"|psi| = {a[0]:.3e} <= node_eps = {eps:.3e} at t = {t}"
            )
        return v[0]

    # -- integration domains -------------------------------------------------

    def support_box(self, t: float, nsigma: float = 10.0) -> list[tuple[float, float]]:
        """Per-coordinate intervals outside which the density is negligible."""
        raise NotImplementedError


def _complex_sqrt_inv(s: np.ndarray) -> np.ndarray:
    # principal branch; s stays in the right half-plane for all t
    return 1.0 / np.sqrt(s)


@dataclass(frozen=True)
class GaussianPacket1D(WavefunctionModel):
    """Free Gaussian packet: N(center0, sigma0^2) density at t=0, drifting at
    ``drift`` and spreading as sigma(t) = sigma0 * sqrt(1 + (hbar t / 2 m sigma0^2)^2).
    """

    center0: float = 0.0
    drift: float = 0.0
    sigma0: float = 1.0
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    n_particles: int = field(default=1, init=False)
    dims: int = field(default=1, init=False)

    def __post_init__(self):
        for name in ("center0", "drift", "sigma0"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")

    def _tau(self, t):
        c = self.constants
        return c.hbar * np.asarray(t, dtype=float) / (2.0 * c.mass * self.sigma0**2)

    def width(self, t) -> float | np.ndarray:
        """Spreading law sigma(t); monotone nondecreasing in |t|."""
        out = self.sigma0 * np.sqrt(1.0 + self._tau(t) ** 2)
        return float(out) if np.ndim(out) == 0 else out

    def _log_psi_parts(self, y: np.ndarray, t):
        """exp-argument and 1/sqrt(s) prefactor pieces, broadcast over rows."""
        c = self.constants
        t = np.asarray(t, dtype=float)
        tau = self._tau(t)
        s = self.sigma0 * (1.0 + 1j * tau)
        yc = self.center0 + self.drift * t
        dy = y - yc
        k = c.mass * self.drift / c.hbar
        arg = -(dy**2) / (4.0 * self.sigma0 * s) + 1j * k * dy \
            + 0.5j * c.mass * self.drift**2 * t / c.hbar
        pref = (2.0 * math.pi) ** -0.25 * _complex_sqrt_inv(s)
        return pref, arg, dy, s

    def _psi_grad(self, coords, t):
        y = coords[:, 0]
        pref, arg, dy, s = self._log_psi_parts(y, t)
        psi = pref * np.exp(arg)
        dlog = -dy / (2.0 * self.sigma0 * s) + 1j * self.constants.mass * self.drift / self.constants.hbar
        return psi, (psi * dlog)[:, None]

    def support_box(self, t, nsigma=10.0):
        w = float(np.max(self.width(t)))
        yc = self.center0 + self.drift * float(t)
        return [(yc - nsigma * w, yc + nsigma * w)]


def _packet_pair(sigma0: float, half_separation: float, constants: PhysicalConstants):
    plus = GaussianPacket1D(center0=+half_separation, drift=0.0,
                            sigma0=sigma0, constants=constants)
    minus = GaussianPacket1D(center0=-half_separation, drift=0.0,
                             sigma0=sigma0, constants=constants)
    return plus, minus


@dataclass(frozen=True)
class DoubleSlitState(WavefunctionModel):
    """Normalized superposition of two counter-placed Gaussian packets.

    Slit centers sit at +/- half_separation; the point-slit regime is the
    limit sigma0 << half_separation.
    """

    half_separation: float = 1.0
    sigma0: float = 0.2
    relative_phase: float = 0.0
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    n_particles: int = field(default=1, init=False)
    dims: int = field(default=1, init=False)

    def __post_init__(self):
        for name in ("half_separation", "sigma0", "relative_phase"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if not self.half_separation > 0:
            raise ValueError("half_separation must be positive")

    @property
    def _overlap(self) -> float:
        # <G+|G-> at t=0; invariant under free evolution
        return math.exp(-self.half_separation**2 / (2.0 * self.sigma0**2))

    @property
    def _norm(self) -> float:
        return 1.0 / math.sqrt(2.0 * (1.0 + math.cos(self.relative_phase) * self._overlap))

    def _psi_grad(self, coords, t):
        plus, minus = _packet_pair(self.sigma0, self.half_separation, self.constants)
        pp, gp = plus._psi_grad(coords, t)
        pm, gm = minus._psi_grad(coords, t)
        phase = complex(math.cos(self.relative_phase), math.sin(self.relative_phase))
        n = self._norm
        return n * (pp + phase * pm), n * (gp + phase * gm)

    def width(self, t):
        return GaussianPacket1D(sigma0=self.sigma0, constants=self.constants).width(t)

    def support_box(self, t, nsigma=10.0):
        w = float(np.max(np.atleast_1d(self.width(t))))
        half = self.half_separation + nsigma * w
        return [(-half, half)]


@dataclass(frozen=True)
class TwoParticleEntangledState(WavefunctionModel):
    """Exchange-symmetric pair state: one Gaussian packet per slit,
    symmetrized over which particle went through which slit.
    """

    half_separation: float = 1.0
    sigma0: float = 0.2
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    symmetrization_sign: int = 1
    n_particles: int = field(default=2, init=False)
    dims: int = field(default=1, init=False)

    def __post_init__(self):
        for name in ("half_separation", "sigma0"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if not self.half_separation > 0:
            raise ValueError("half_separation must be positive")
        if self.symmetrization_sign != 1:
            raise ValueError("only the exchange-symmetric (+1) state is supported")

    @property
    def _overlap(self) -> float:
        return math.exp(-self.half_separation**2 / (2.0 * self.sigma0**2))

    @property
    def _norm(self) -> float:
        return 1.0 / math.sqrt(2.0 * (1.0 + self._overlap**2))

    def width(self, t):
        return GaussianPacket1D(sigma0=self.sigma0, constants=self.constants).width(t)

    def _psi_grad(self, coords, t):
        plus, minus = _packet_pair(self.sigma0, self.half_separation, self.constants)
        y1 = coords[:, :1]
        y2 = coords[:, 1:]
        p1p, g1p = plus._psi_grad(y1, t)
        p1m, g1m = minus._psi_grad(y1, t)
        p2p, g2p = plus._psi_grad(y2, t)
        p2m, g2m = minus._psi_grad(y2, t)
        n = self._norm
        psi = n * (p1p * p2m + p1m * p2p)
        d1 = n * (g1p[:, 0] * p2m + g1m[:, 0] * p2p)
        d2 = n * (p1p * g2m[:, 0] + p1m * g2p[:, 0])
        return psi, np.stack([d1, d2], axis=1)

    def support_box(self, t, nsigma=10.0):
        w = float(np.max(np.atleast_1d(self.width(t))))
        half = self.half_separation + nsigma * w
        return [(-half, half), (-half, half)]


def _hermite_functions(xi: np.ndarray, n_max: int, scale: float) -> list[np.ndarray]:
    """Normalized oscillator eigenfunctions u_0..u_n_max of the scaled
    coordinate xi = sqrt(m w / hbar) x, including the dimensional prefactor
    ``scale = (m w / (pi hbar))^(1/4)``.  Stable upward recurrence.
    """
    u = [scale * np.exp(-0.5 * xi**2)]
    if n_max >= 1:
        u.append(math.sqrt(2.0) * xi * u[0])
    for n in range(2, n_max + 1):
        u.append(math.sqrt(2.0 / n) * xi * u[n - 1] - math.sqrt((n - 1) / n) * u[n - 2])
    return u


def _hermite_derivative(u: list[np.ndarray], xi: np.ndarray, n: int, alpha: float) -> np.ndarray:
    """d/dx of the n-th eigenfunction, alpha = sqrt(m w / hbar)."""
    lower = u[n - 1] if n >= 1 else 0.0
    return alpha * (math.sqrt(2.0 * n) * lower - xi * u[n])


@dataclass(frozen=True)
class OscillatorSuperposition2D(WavefunctionModel):
    """Superposition of 2-D harmonic-oscillator eigenstates, one particle in
    two normal-mode coordinates with angular frequencies omega1, omega2.

    ``terms`` lists (n1, n2, coeff) with sum |coeff|^2 = 1; cross terms in the
    density beat at the level differences, which is what the ergodicity
    diagnostics probe.
    """

    omega1: float
    omega2: float
    terms: tuple[tuple[int, int, complex], ...]
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    n_particles: int = field(default=1, init=False)
    dims: int = field(default=2, init=False)

    def __post_init__(self):
        object.__setattr__(self, "omega1", float(self.omega1))
        object.__setattr__(self, "omega2", float(self.omega2))
        if not (self.omega1 > 0 and self.omega2 > 0):
            raise ValueError("frequencies must be positive")
        terms = tuple((int(n1), int(n2), complex(c)) for n1, n2, c in self.terms)
        object.__setattr__(self, "terms", terms)
        if len(terms) < 1:
            raise ValueError("need at least one term")
        if any(n1 < 0 or n2 < 0 for n1, n2, _ in terms):
            raise ValueError("quantum numbers must be nonnegative")
        keys = [(n1, n2) for n1, n2, _ in terms]
        if len(set(keys)) != len(keys):
            raise ValueError("terms must have distinct (n1, n2)")
        total = sum(abs(c) ** 2 for _, _, c in terms)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"coefficients must satisfy sum |c|^2 = 1, got {total}")

    @classmethod
    def default_pair(cls, omega1: float = 1.0, omega2: float = 2.0,
                     constants: PhysicalConstants | None = None) -> "OscillatorSuperposition2D":
        """Equal-weight (0,1) + (1,0) superposition, the built-in pendulum state."""
        amp = 1.0 / math.sqrt(2.0)
        return cls(omega1=omega1, omega2=omega2,
                   terms=((0, 1, amp), (1, 0, amp)),
                   constants=constants or PhysicalConstants())

    def energy(self, n1: int, n2: int) -> float:
        c = self.constants
        return c.hbar * (self.omega1 * (n1 + 0.5) + self.omega2 * (n2 + 0.5))

    def level_gaps(self) -> list[float]:
        """Energy differences E_j - E_k over distinct term pairs (j < k)."""
        es = [self.energy(n1, n2) for n1, n2, _ in self.terms]
        return [es[j] - es[k] for j in range(len(es)) for k in range(j + 1, len(es))]

    def _axis_functions(self, coords, want_grad: bool):
        c = self.constants
        a1 = math.sqrt(c.mass * self.omega1 / c.hbar)
        a2 = math.sqrt(c.mass * self.omega2 / c.hbar)
        s1 = (c.mass * self.omega1 / (math.pi * c.hbar)) ** 0.25
        s2 = (c.mass * self.omega2 / (math.pi * c.hbar)) ** 0.25
        xi1 = a1 * coords[:, 0]
        xi2 = a2 * coords[:, 1]
        nx = max(n1 for n1, _, _ in self.terms)
        ny = max(n2 for _, n2, _ in self.terms)
        ux = _hermite_functions(xi1, nx, s1)
        uy = _hermite_functions(xi2, ny, s2)
        if not want_grad:
            return ux, uy, None, None
        dux = {n1 for n1, _, _ in self.terms}
        duy = {n2 for _, n2, _ in self.terms}
        dx = {n: _hermite_derivative(ux, xi1, n, a1) for n in dux}
        dy = {n: _hermite_derivative(uy, xi2, n, a2) for n in duy}
        return ux, uy, dx, dy

    def stationary_density_many(self, coords: np.ndarray) -> np.ndarray:
        """Large-horizon limit of the time-averaged density: the diagonal part."""
        coords = np.asarray(coords, dtype=float)
        ux, uy, _, _ = self._axis_functions(coords, want_grad=False)
        out = np.zeros(coords.shape[0])
        for n1, n2, c in self.terms:
            out += abs(c) ** 2 * (ux[n1] * uy[n2]) ** 2
        return out

    def _psi_grad(self, coords, t):
        c = self.constants
        t = np.asarray(t, dtype=float)
        ux, uy, dx, dy = self._axis_functions(coords, want_grad=True)
        psi = np.zeros(coords.shape[0], dtype=complex)
        g1 = np.zeros(coords.shape[0], dtype=complex)
        g2 = np.zeros(coords.shape[0], dtype=complex)
        for n1, n2, ck in self.terms:
            phase = ck * np.exp(-1j * self.energy(n1, n2) * t / c.hbar)
            psi += phase * ux[n1] * uy[n2]
            g1 += phase * dx[n1] * uy[n2]
            g2 += phase * ux[n1] * dy[n2]
        return psi, np.stack([g1, g2], axis=1)

    def turning_radius(self, axis: int) -> float:
        """Classical turning radius of the most excited term along an axis."""
        c = self.constants
        if axis == 0:
            n = max(n1 for n1, _, _ in self.terms)
            w = self.omega1
        else:
            n = max(n2 for _, n2, _ in self.terms)
            w = self.omega2
        return math.sqrt((2 * n + 1) * c.hbar / (c.mass * w))

    def support_box(self, t, nsigma=8.0):
        c = self.constants
        box = []
        for axis, w in ((0, self.omega1), (1, self.omega2)):
            ground = math.sqrt(c.hbar / (c.mass * w))
            half = self.turning_radius(axis) + nsigma * ground
            box.append((-half, half))
        return box


# -- operation-style functional surface --------------------------------------

def amplitude(model: WavefunctionModel, config, t: float) -> complex:
    """Exact closed-form amplitude at one configuration."""
    return model.amplitude(config, t)


def density(model: WavefunctionModel, config, t: float) -> float:
    """|amplitude|^2, exactly."""
    return model.density(config, t)


def velocity(model: WavefunctionModel, config, t: float,
             node_eps: float | None = None) -> np.ndarray:
    """Guidance velocity (hbar/m) Im(grad psi / psi), one entry per coordinate.

    Raises NodeProximityError when |psi| <= node_eps.
    """
    return model.velocity(config, t, node_eps=node_eps)


def width(packet: GaussianPacket1D, t: float) -> float:
    """Closed-form width evolution of a free Gaussian packet."""
    return float(np.max(np.atleast_1d(packet.width(t))))
