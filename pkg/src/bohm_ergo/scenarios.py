"""Config-driven scenario runner with deterministic result emission.

Each scenario wires the models, integrator, samplers and diagnostics into one
reproducible pipeline: identical config and seed give byte-identical CSV and
JSON outputs (wall time aside) at any worker count.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__ as _pkg_version
from .averages import (
    DetectionSetup,
    Detector,
    JointIndicator,
    compare_averages,
)
from .dynamics import IntegratorConfig, flow_ensemble, integrate_trajectory
from .equilibrium import (
    equivariance_distance,
    sample_initial,
    sample_initial_constrained_sum,
)
from .ergodicity import (
    CoverageGrid,
    cross_term_residual,
    find_unvisited_accessible_cell,
    recurrence_metric,
    time_averaged_density,
    trajectory_time_average,
)
from .quadrature import integrate_2d, ks_critical_value
from .svgplot import heatmap_svg, histogram_svg, trajectory_fan_svg
from .wavemodels import (
    DoubleSlitState,
    GaussianPacket1D,
    OscillatorSuperposition2D,
    PhysicalConstants,
    TwoParticleEntangledState,
)

__all__ = [
    "SCENARIOS",
    "OUTPUT_KINDS",
    "ParseError",
    "SchemaError",
    "SerializationError",
    "ScenarioConfig",
    "RunSummary",
    "parse_config",
    "builtin_config",
    "run_scenario",
    "write_outputs",
]

SCENARIOS = ("single_slit", "double_slit", "two_particle_slit",
             "spreading_law", "ergodicity_qm", "pendulum")
OUTPUT_KINDS = ("summary_json", "trajectories_csv", "histogram_csv", "plot_svg")

GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0


class ParseError(ValueError):
    """Config text is not valid JSON."""


class SchemaError(ValueError):
    """Config JSON violates the documented schema."""


class SerializationError(ValueError):
    """A result contains values that must never be emitted (NaN/inf)."""


# -- schema -------------------------------------------------------------------

_INTEGRATOR_DEFAULTS = {
    "t0": 0.0, "t_end": 1.0, "dt_init": 1e-3, "rel_tol": 1e-8,
    "abs_tol": 1e-10, "v_cap": 1e6, "node_eps": 1e-12, "output_stride": 0.1,
}

_GEOMETRY_DEFAULTS = {
    "single_slit": {"center0": 0.0, "drift": 0.0, "sigma0": 1.0},
    "double_slit": {"half_separation": 1.0, "sigma0": 0.2, "relative_phase": 0.0},
    "two_particle_slit": {"half_separation": 1.0, "sigma0": 0.01,
                          "initial_sum": 0.0},
    "spreading_law": {"half_separation": 1.0, "sigma0": 1.0, "initial_sum": 0.3},
    "ergodicity_qm": {"omega1": 1.0, "omega2": 1.61,
                      "terms": [[0, 1], [1, 0]], "horizon_periods": 20.0},
    "pendulum": {"omega1": 1.0, "omega2": 2.0, "terms": [[0, 1], [1, 0]],
                 "horizon_periods": 200.0, "initial_point": [0.56, 0.7],
                 "grid_resolution": 64, "access_ratio": 1e-4,
                 "period_candidate": None},
}

_SCENARIO_INTEGRATOR = {
    "single_slit": {"t_end": 1.0, "rel_tol": 1e-6, "abs_tol": 1e-9,
                    "output_stride": 0.05},
    "double_slit": {"t_end": 1.0, "rel_tol": 1e-6, "abs_tol": 1e-9,
                    "output_stride": 0.05},
    "two_particle_slit": {"t_end": 2.0, "dt_init": 1e-5, "rel_tol": 1e-6,
                          "abs_tol": 1e-9, "output_stride": 0.1},
    "spreading_law": {"t_end": 5.0, "rel_tol": 1e-9, "abs_tol": 1e-12,
                      "output_stride": 0.05},
    "ergodicity_qm": {"t_end": 1.0},
    "pendulum": {"t_end": 200.0 * 2.0 * math.pi, "rel_tol": 1e-8,
                 "abs_tol": 1e-10, "output_stride": 0.05},
}

_TOP_DEFAULTS = {
    "single_slit": {"n_samples": 20000, "n_trials": 0},
    "double_slit": {"n_samples": 20000, "n_trials": 0},
    "two_particle_slit": {"n_samples": 0, "n_trials": 10000},
    "spreading_law": {"n_samples": 0, "n_trials": 8},
    "ergodicity_qm": {"n_samples": 0, "n_trials": 0},
    "pendulum": {"n_samples": 0, "n_trials": 0},
}

_DETECTION_DEFAULTS = {
    "two_particle_slit": {"d1": [50.0, 150.0], "d2": [50.0, 150.0],
                          "t_detect": 2.0},
    "double_slit": None,
}


def _require_keys(obj: dict, allowed, path: str):
    for key in obj:
        if key not in allowed:
            raise SchemaError(f"unknown key '{path}{key}'")


def _as_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"'{path}' must be a number")
    return float(value)


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"'{path}' must be an integer")
    return value


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario description with every default filled in."""

    scenario: str
    constants: PhysicalConstants
    geometry: dict
    detection: DetectionSetup | None
    n_trials: int
    n_samples: int
    seed: int | None
    integrator: IntegratorConfig
    outputs: tuple[str, ...]

    def to_jsonable(self) -> dict:
        out = {
            "scenario": self.scenario,
            "constants": {"hbar": self.constants.hbar, "mass": self.constants.mass},
            "geometry": json.loads(json.dumps(self.geometry, sort_keys=True)),
            "n_trials": self.n_trials,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "integrator": {k: getattr(self.integrator, k)
                           for k in _INTEGRATOR_DEFAULTS},
            "outputs": list(self.outputs),
        }
        if self.detection is not None:
            out["detection"] = {
                "d1": [self.detection.d1.lo, self.detection.d1.hi],
                "d2": [self.detection.d2.lo, self.detection.d2.hi],
                "t_detect": self.detection.t_detect,
            }
        return out

    def serialize(self) -> str:
        return json.dumps(self.to_jsonable(), indent=2, sort_keys=True)


def _parse_detection(obj, path: str) -> DetectionSetup:
    if not isinstance(obj, dict):
        raise SchemaError(f"'{path}' must be an object")
    _require_keys(obj, {"d1", "d2", "t_detect"}, path + ".")
    windows = []
    for key in ("d1", "d2"):
        if key not in obj:
            raise SchemaError(f"missing key '{path}.{key}'")
        pair = obj[key]
        if (not isinstance(pair, list)) or len(pair) != 2:
            raise SchemaError(f"'{path}.{key}' must be [lo, hi]")
        lo = _as_number(pair[0], f"{path}.{key}[0]")
        hi = _as_number(pair[1], f"{path}.{key}[1]")
        if not lo < hi:
            raise SchemaError(f"'{path}.{key}' needs lo < hi")
        windows.append(Detector(lo, hi))
    if "t_detect" not in obj:
        raise SchemaError(f"missing key '{path}.t_detect'")
    t_detect = _as_number(obj["t_detect"], f"{path}.t_detect")
    if not t_detect > 0:
        raise SchemaError(f"'{path}.t_detect' must be positive")
    return DetectionSetup(windows[0], windows[1], t_detect)


def _parse_terms(raw, path: str) -> list:
    if not isinstance(raw, list) or not raw:
        raise SchemaError(f"'{path}' must be a non-empty list")
    terms = []
    explicit = None
    for i, item in enumerate(raw):
        if not isinstance(item, list) or len(item) not in (2, 4):
            raise SchemaError(
                f"'{path}[{i}]' must be [n1, n2] or [n1, n2, re, im]")
        n1 = _as_int(item[0], f"{path}[{i}][0]")
        n2 = _as_int(item[1], f"{path}[{i}][1]")
        if n1 < 0 or n2 < 0:
            raise SchemaError(f"'{path}[{i}]' quantum numbers must be >= 0")
        if len(item) == 4:
            if explicit is False:
                raise SchemaError(f"'{path}' mixes implicit and explicit coefficients")
            explicit = True
            terms.append([n1, n2, _as_number(item[2], f"{path}[{i}][2]"),
                          _as_number(item[3], f"{path}[{i}][3]")])
        else:
            if explicit is True:
                raise SchemaError(f"'{path}' mixes implicit and explicit coefficients")
            explicit = False
            terms.append([n1, n2])
    return terms


def _terms_to_model_tuple(terms: list) -> tuple:
    if terms and len(terms[0]) == 4:
        return tuple((n1, n2, complex(re, im)) for n1, n2, re, im in terms)
    amp = 1.0 / math.sqrt(len(terms))
    return tuple((n1, n2, complex(amp, 0.0)) for n1, n2 in terms)


def _parse_geometry(scenario: str, raw: dict) -> dict:
    defaults = _GEOMETRY_DEFAULTS[scenario]
    _require_keys(raw, set(defaults), "geometry.")
    geo = {}
    for key, dflt in defaults.items():
        value = raw.get(key, dflt)
        path = f"geometry.{key}"
        if key == "terms":
            geo[key] = _parse_terms(value, path) if value is not dflt else \
                [list(t) for t in dflt]
        elif key == "initial_point":
            if (not isinstance(value, list)) or len(value) != 2:
                raise SchemaError(f"'{path}' must be [x, y]")
            geo[key] = [_as_number(v, path) for v in value]
        elif key == "grid_resolution":
            geo[key] = _as_int(value, path)
            if geo[key] < 8:
                raise SchemaError(f"'{path}' must be at least 8")
        elif key in ("initial_sum", "period_candidate") and value is None:
            geo[key] = None
        else:
            geo[key] = _as_number(value, path)
    return geo


def parse_config(text: str) -> ScenarioConfig:
    """Strict parse of a scenario config document.

    Unknown keys are rejected; defaults are filled in and echoed back by the
    run summary.  Raises ParseError for malformed JSON and SchemaError for
    schema violations.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(raw, dict):
        raise SchemaError("config root must be a JSON object")
    _require_keys(raw, {"scenario", "constants", "geometry", "detection",
                        "n_trials", "n_samples", "seed", "integrator",
                        "outputs"}, "")
    if "scenario" not in raw:
        raise SchemaError("missing key 'scenario'")
    scenario = raw["scenario"]
    if scenario not in SCENARIOS:
        raise SchemaError(f"unknown scenario {scenario!r}; "
                          f"choose one of {', '.join(SCENARIOS)}")

    const_raw = raw.get("constants", {})
    if not isinstance(const_raw, dict):
        raise SchemaError("'constants' must be an object")
    _require_keys(const_raw, {"hbar", "mass"}, "constants.")
    hbar = _as_number(const_raw.get("hbar", 1.0), "constants.hbar")
    mass = _as_number(const_raw.get("mass", 1.0), "constants.mass")
    if hbar <= 0 or mass <= 0:
        raise SchemaError("'constants' must be positive")
    constants = PhysicalConstants(hbar=hbar, mass=mass)

    geo_raw = raw.get("geometry", {})
    if not isinstance(geo_raw, dict):
        raise SchemaError("'geometry' must be an object")
    geometry = _parse_geometry(scenario, geo_raw)

    detection = None
    if "detection" in raw and raw["detection"] is not None:
        detection = _parse_detection(raw["detection"], "detection")
    elif _DETECTION_DEFAULTS.get(scenario):
        d = _DETECTION_DEFAULTS[scenario]
        detection = DetectionSetup(Detector(*d["d1"]), Detector(*d["d2"]),
                                   d["t_detect"])
    if scenario == "two_particle_slit" and detection is None:
        raise SchemaError("two_particle_slit requires 'detection'")

    top = _TOP_DEFAULTS[scenario]
    n_trials = _as_int(raw.get("n_trials", top["n_trials"]), "n_trials")
    n_samples = _as_int(raw.get("n_samples", top["n_samples"]), "n_samples")
    if n_trials < 0 or n_samples < 0:
        raise SchemaError("'n_trials' and 'n_samples' must be nonnegative")
    seed = raw.get("seed")
    if seed is not None:
        seed = _as_int(seed, "seed")
    if seed is None and (n_trials > 0 or n_samples > 0):
        raise SchemaError("'seed' is required whenever trials or samples are drawn")

    integ_raw = raw.get("integrator", {})
    if not isinstance(integ_raw, dict):
        raise SchemaError("'integrator' must be an object")
    _require_keys(integ_raw, set(_INTEGRATOR_DEFAULTS), "integrator.")
    integ = dict(_INTEGRATOR_DEFAULTS)
    integ.update(_SCENARIO_INTEGRATOR[scenario])
    for key, value in integ_raw.items():
        integ[key] = _as_number(value, f"integrator.{key}")
    try:
        integrator = IntegratorConfig(**integ)
    except ValueError as exc:
        raise SchemaError(f"integrator: {exc}") from exc

    outputs_raw = raw.get("outputs", ["summary_json"])
    if not isinstance(outputs_raw, list):
        raise SchemaError("'outputs' must be a list")
    for o in outputs_raw:
        if o not in OUTPUT_KINDS:
            raise SchemaError(f"unknown output kind {o!r}")
    outputs = tuple(dict.fromkeys(outputs_raw))

    return ScenarioConfig(scenario=scenario, constants=constants,
                          geometry=geometry, detection=detection,
                          n_trials=n_trials, n_samples=n_samples, seed=seed,
                          integrator=integrator, outputs=outputs)


def builtin_config(scenario: str) -> ScenarioConfig:
    """Default config of a built-in scenario (also what `scenarios` prints)."""
    if scenario not in SCENARIOS:
        raise SchemaError(f"unknown scenario {scenario!r}")
    seed = 20240 + SCENARIOS.index(scenario)
    return parse_config(json.dumps({"scenario": scenario, "seed": seed}))


# -- run summary ---------------------------------------------------------------

def _scan_for_bad_floats(obj, path="summary"):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise SerializationError(f"non-finite value at {path}")
    if isinstance(obj, dict):
        for k, v in obj.items():
            _scan_for_bad_floats(v, f"{path}.{k}")
    if isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _scan_for_bad_floats(v, f"{path}[{i}]")


@dataclass
class RunSummary:
    """Everything a scenario reports, JSON-serialisable with stable key order."""

    scenario: str
    config: dict
    results: dict
    seed: int | None
    version: str = _pkg_version
    wall_time_s: float = 0.0

    def to_jsonable(self, include_wall_time: bool = True) -> dict:
        out = {
            "scenario": self.scenario,
            "config": self.config,
            "results": self.results,
            "seed": self.seed,
            "version": self.version,
        }
        if include_wall_time:
            out["wall_time_s"] = self.wall_time_s
        _scan_for_bad_floats(out)
        return out

    def to_json(self, include_wall_time: bool = True) -> str:
        try:
            return json.dumps(self.to_jsonable(include_wall_time),
                              indent=2, sort_keys=True, allow_nan=False) + "\n"
        except ValueError as exc:
            raise SerializationError(str(exc)) from exc


# -- scenario pipelines ---------------------------------------------------------

def _stat(value: float, **tags) -> dict:
    entry = {"value": float(value)}
    entry.update(tags)
    return entry


def _fan_artifacts(model, initials, cfg, workers, max_fan=12):
    take = min(max_fan, len(initials))
    if take == 0:
        return None
    res = flow_ensemble(model, np.asarray(initials)[:take], cfg, workers=workers)
    ok = [i for i in range(take) if i not in res.failures]
    return res.times, [res.coords[i] for i in ok]


def _histogram(values: np.ndarray, bins: int = 64):
    counts, edges = np.histogram(values, bins=bins)
    return edges, counts


def _run_single_or_double_slit(cfg: ScenarioConfig, workers: int):
    geo = cfg.geometry
    if cfg.scenario == "single_slit":
        model = GaussianPacket1D(center0=geo["center0"], drift=geo["drift"],
                                 sigma0=geo["sigma0"], constants=cfg.constants)
    else:
        model = DoubleSlitState(half_separation=geo["half_separation"],
                                sigma0=geo["sigma0"],
                                relative_phase=geo["relative_phase"],
                                constants=cfg.constants)
    run = cfg.integrator
    samples = sample_initial(model, run.t0, cfg.n_samples, cfg.seed)
    eres = equivariance_distance(model, samples, run.t_end, run, workers=workers)
    threshold = 1.5 * ks_critical_value(max(eres.n_used, 1))
    results = {
        "equivariance": {
            "value": eres.statistic,
            "n": eres.n_used,
            "n_failed": eres.n_failed,
            "tolerance": threshold,
            "components": {k: float(v) for k, v in sorted(eres.components.items())},
        },
    }

    fan = _fan_artifacts(model, samples.coords, run, workers)
    hist = None
    if len(samples):
        flowed = flow_ensemble(model, samples.coords[:4000], run, workers=workers)
        finals = flowed.final_coords()[:, 0]
        hist = _histogram(finals)
        if cfg.scenario == "double_slit":
            starts = flowed.coords[flowed.ok_mask, 0, 0]
            crossed = int(np.sum(np.sign(finals) * np.sign(starts) < 0))
            results["non_crossing_violations"] = _stat(crossed, n=len(finals))

    if cfg.scenario == "double_slit" and cfg.detection is not None:
        rep = compare_averages(model, JointIndicator(cfg.detection),
                               max(cfg.n_trials, 1), cfg.seed, run,
                               workers=workers)
        results["window_detection"] = {
            "space_avg": rep.space_avg,
            "time_avg": rep.time_avg,
            "std_error": rep.std_error,
            "n": rep.n_trials,
            "n_failed": rep.n_failed,
            "discrepancy_flag": rep.discrepant,
            "tolerance": "5 std errors",
        }
    artifacts = {"fan": fan, "fan_label": "y",
                 "histogram": hist, "histogram_label": "y at t_end"}
    return results, artifacts


def _sum_law_stats(model, total: float, res) -> tuple[dict, tuple]:
    """Compare integrated Y1+Y2 series against the closed-form spreading law."""
    ok = res.ok_mask
    sums = res.coords[ok, :, 0] + res.coords[ok, :, 1]
    c = model.constants
    factor = np.sqrt(1.0 + (c.hbar * res.times / (2.0 * c.mass * model.sigma0**2)) ** 2)
    predicted = total * factor
    if total != 0.0:
        err = float(np.max(np.abs(sums - predicted[None, :]) / np.abs(predicted)[None, :]))
        entry = _stat(err, n=int(ok.sum()), tolerance=1e-6,
                      kind="max relative error vs spreading law")
    else:
        err = float(np.max(np.abs(sums)))
        entry = _stat(err, n=int(ok.sum()), tolerance=1e-7,
                      kind="max |Y1+Y2| under the zero-sum constraint")
    return entry, (res.times, sums, predicted)


def _run_two_particle_slit(cfg: ScenarioConfig, workers: int):
    geo = cfg.geometry
    model = TwoParticleEntangledState(half_separation=geo["half_separation"],
                                      sigma0=geo["sigma0"],
                                      constants=cfg.constants)
    run = cfg.integrator
    obs = JointIndicator(cfg.detection)
    rep = compare_averages(model, obs, cfg.n_trials, cfg.seed, run,
                           initial_sum=geo["initial_sum"], workers=workers)
    results = {
        "p12_space": _stat(rep.space_avg, tolerance=1e-8, kind="quadrature"),
        "p12_trials": {
            "value": rep.time_avg,
            "std_error": rep.std_error,
            "n": rep.n_trials,
            "n_failed": rep.n_failed,
        },
        "ergodic_discrepancy_flag": rep.discrepant,
    }
    if geo["initial_sum"] is not None:
        paths = sample_initial_constrained_sum(model, run.t0,
                                               min(cfg.n_trials, 8), cfg.seed,
                                               total=geo["initial_sum"])
        law_res = flow_ensemble(model, paths, run, workers=workers)
        sum_entry, _ = _sum_law_stats(model, geo["initial_sum"], law_res)
        results["sum_constraint"] = sum_entry

    endpoints_n = min(cfg.n_trials, 4000)
    samples = (sample_initial_constrained_sum(model, run.t0, endpoints_n,
                                              cfg.seed, total=geo["initial_sum"])
               if geo["initial_sum"] is not None
               else sample_initial(model, run.t0, endpoints_n, cfg.seed))
    flow_cfg = IntegratorConfig(
        t0=run.t0, t_end=cfg.detection.t_detect, dt_init=run.dt_init,
        rel_tol=run.rel_tol, abs_tol=run.abs_tol, v_cap=run.v_cap,
        node_eps=run.node_eps,
        output_stride=cfg.detection.t_detect - run.t0)
    flowed = flow_ensemble(model, samples, flow_cfg, workers=workers)
    hist = _histogram(flowed.final_coords()[:, 0])

    fan = _fan_artifacts(model, samples.coords, cfg.integrator, workers)
    artifacts = {"fan": fan, "fan_label": "y1, y2",
                 "histogram": hist, "histogram_label": "y1 at t_detect"}
    return results, artifacts


def _run_spreading_law(cfg: ScenarioConfig, workers: int):
    geo = cfg.geometry
    if geo["initial_sum"] is None:
        raise SchemaError("spreading_law requires a numeric geometry.initial_sum")
    model = TwoParticleEntangledState(half_separation=geo["half_separation"],
                                      sigma0=geo["sigma0"],
                                      constants=cfg.constants)
    run = cfg.integrator
    samples = sample_initial_constrained_sum(
        model, run.t0, max(cfg.n_trials, 1), cfg.seed, total=geo["initial_sum"])
    res = flow_ensemble(model, samples, run, workers=workers)
    entry, (times, sums, predicted) = _sum_law_stats(model, geo["initial_sum"], res)
    c = cfg.constants
    smallness = (c.hbar * run.t_end / (2.0 * c.mass * geo["sigma0"] ** 2)) ** 2
    results = {
        "spreading_max_rel_error": entry,
        "smallness_parameter": _stat(
            smallness, kind="(hbar t_end / 2 m sigma0^2)^2"),
        "width_ratio_at_t_end": _stat(
            float(np.sqrt(1.0 + smallness)),
            kind="sigma(t_end)/sigma(0)"),
    }
    ok = res.ok_mask
    artifacts = {"fan": (res.times, [res.coords[i] for i in np.flatnonzero(ok)]),
                 "fan_label": "y1, y2",
                 "fan_plot": (times, [s for s in sums], "Y1+Y2"),
                 "histogram": None}
    return results, artifacts


def _oscillator_from_geometry(geo: dict, constants: PhysicalConstants):
    return OscillatorSuperposition2D(
        omega1=geo["omega1"], omega2=geo["omega2"],
        terms=_terms_to_model_tuple(geo["terms"]), constants=constants)


def _run_ergodicity_qm(cfg: ScenarioConfig, workers: int):
    geo = cfg.geometry
    sup = _oscillator_from_geometry(geo, cfg.constants)
    base_period = 2.0 * math.pi / geo["omega1"]
    horizon = geo["horizon_periods"] * base_period
    r1 = cross_term_residual(sup, horizon)
    r4 = cross_term_residual(sup, 4.0 * horizon)
    gaps = [abs(g) for g in sup.level_gaps()]
    t_large = 1e4 / min(gaps)
    pts = np.array([[0.3, 0.2], [0.7, -0.4], [-0.5, 0.6], [0.0, 0.9]])
    dev = float(np.max(np.abs(time_averaged_density(sup, pts, t_large)
                              - sup.stationary_density_many(pts))))
    results = {
        "cross_term_residual_T": _stat(r1, kind=f"T = {geo['horizon_periods']:g} periods"),
        "cross_term_residual_4T": _stat(r4, kind="same rectangle, horizon 4T"),
        "large_horizon_deviation": _stat(
            dev, n=len(pts), tolerance=1e-3,
            kind=f"sup |tavg - stationary| at T = {t_large:g}"),
    }
    if r1 > 0:
        results["residual_ratio_4T_over_T"] = _stat(
            r4 / r1, tolerance=[1.0 / 6.0, 3.0 / 8.0],
            kind="sinc-envelope 1/T decay")
    else:
        # horizon sits exactly on a sinc zero; the ratio is undefined there
        results["residual_ratio_4T_over_T"] = {
            "value": None, "kind": "undefined: residual(T) = 0 (sinc zero)"}
    horizons = np.array([horizon, 2 * horizon, 3 * horizon, 4 * horizon])
    residuals = np.array([r1, cross_term_residual(sup, 2 * horizon),
                          cross_term_residual(sup, 3 * horizon), r4])
    artifacts = {"fan": None, "histogram": None,
                 "fan_plot": (horizons, [residuals], "residual")}
    return results, artifacts


def _run_pendulum(cfg: ScenarioConfig, workers: int):
    geo = cfg.geometry
    sup = _oscillator_from_geometry(geo, cfg.constants)
    base_period = 2.0 * math.pi / geo["omega1"]
    horizon = geo["horizon_periods"] * base_period
    run = IntegratorConfig(
        t0=cfg.integrator.t0, t_end=cfg.integrator.t0 + horizon,
        dt_init=cfg.integrator.dt_init, rel_tol=cfg.integrator.rel_tol,
        abs_tol=cfg.integrator.abs_tol, v_cap=cfg.integrator.v_cap,
        node_eps=cfg.integrator.node_eps,
        output_stride=cfg.integrator.output_stride)
    traj = integrate_trajectory(sup, np.asarray(geo["initial_point"], dtype=float), run)

    grid_full = CoverageGrid.for_superposition(
        sup, resolution=geo["grid_resolution"], access_ratio=geo["access_ratio"])
    grid_half = CoverageGrid.for_superposition(
        sup, resolution=geo["grid_resolution"], access_ratio=geo["access_ratio"])
    half = len(traj.times) // 2
    grid_half.mark(traj.coords[:half])
    outside = grid_full.mark(traj.coords)

    period_candidate = geo["period_candidate"]
    if period_candidate is None:
        gaps = [abs(g) for g in sup.level_gaps()]
        period_candidate = 2.0 * math.pi * cfg.constants.hbar / min(gaps)
    rec = recurrence_metric(traj, period_candidate)

    results = {
        "coverage_final": _stat(grid_full.fraction,
                                n=int(grid_full.accessible.sum()),
                                kind="visited fraction of accessible cells"),
        "coverage_half_horizon": _stat(grid_half.fraction,
                                       n=int(grid_half.accessible.sum())),
        "coverage_growth_final_half": _stat(
            grid_full.fraction - grid_half.fraction, tolerance=0.01,
            kind="absolute growth over the final half-run"),
        "points_outside_grid": _stat(outside, n=len(traj.times)),
        "recurrence_metric": _stat(rec, kind=f"candidate period {period_candidate:g}"),
        "horizon": _stat(horizon, kind=f"{geo['horizon_periods']:g} fundamental periods"),
    }

    cell = find_unvisited_accessible_cell(grid_full, sup)
    if cell is not None:
        (cx, cy) = grid_full.cell_bounds(*cell)
        space_prob = integrate_2d(sup.stationary_density_many, (cx, cy),
                                  abs_tol=1e-12)
        indicator = lambda coords: (
            (coords[:, 0] >= cx[0]) & (coords[:, 0] <= cx[1])
            & (coords[:, 1] >= cy[0]) & (coords[:, 1] <= cy[1])).astype(float)
        t_avg = trajectory_time_average(traj, indicator)
        results["nonergodic_witness"] = {
            "cell": list(cell),
            "space_avg": space_prob,
            "time_avg": t_avg,
            "access_threshold": grid_full.access_threshold,
        }

    heat = np.where(grid_full.visited & grid_full.accessible, 1.0,
                    np.where(grid_full.accessible, 0.15, 0.0))
    stride = max(1, len(traj.times) // 4000)
    artifacts = {"fan": (traj.times[::stride], [traj.coords[::stride]]),
                 "fan_label": "q1, q2",
                 "histogram": _histogram(traj.coords[:, 0]),
                 "histogram_label": "q1 along trajectory",
                 "heatmap": (heat, grid_full.bounds)}
    return results, artifacts


_PIPELINES = {
    "single_slit": _run_single_or_double_slit,
    "double_slit": _run_single_or_double_slit,
    "two_particle_slit": _run_two_particle_slit,
    "spreading_law": _run_spreading_law,
    "ergodicity_qm": _run_ergodicity_qm,
    "pendulum": _run_pendulum,
}


def run_scenario(cfg: ScenarioConfig, workers: int = 1) -> tuple[RunSummary, dict]:
    """Execute one scenario; deterministic for fixed (config, seed)."""
    start = time.perf_counter()
    results, artifacts = _PIPELINES[cfg.scenario](cfg, workers)
    summary = RunSummary(scenario=cfg.scenario, config=cfg.to_jsonable(),
                         results=results, seed=cfg.seed,
                         wall_time_s=time.perf_counter() - start)
    return summary, artifacts


# -- output files ----------------------------------------------------------------

def _format_float(x: float) -> str:
    if not math.isfinite(x):
        raise SerializationError("non-finite value in CSV output")
    return format(float(x), ".17g")


def trajectories_csv(times: np.ndarray, fan: list[np.ndarray]) -> str:
    """CSV of trajectories on a shared time grid, header t,y1[,y2]; multiple
    trajectories are written as consecutive row blocks over the same times."""
    if not fan:
        return "t,y1\n"
    width = 1 if fan[0].ndim == 1 else fan[0].shape[1]
    header = "t,y1" if width == 1 else "t,y1,y2"
    lines = [header]
    for series in fan:
        arr = series[:, None] if series.ndim == 1 else series
        for t, row in zip(times, arr):
            lines.append(",".join([_format_float(t)]
                                  + [_format_float(v) for v in row]))
    return "\n".join(lines) + "\n"


def histogram_csv(edges: np.ndarray, counts: np.ndarray) -> str:
    lines = ["bin_lo,bin_hi,count"]
    for lo, hi, c in zip(edges[:-1], edges[1:], counts):
        lines.append(f"{_format_float(lo)},{_format_float(hi)},{int(c)}")
    return "\n".join(lines) + "\n"


def write_outputs(summary: RunSummary, artifacts: dict, out_dir) -> list[str]:
    """Write the requested output files; returns the paths written."""
    from pathlib import Path
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    requested = summary.config.get("outputs", [])

    def emit(name: str, text: str):
        path = out / name
        try:
            path.write_text(text, encoding="utf-8")
        except OSError as exc:
            raise OSError(f"failed writing {path}: {exc}") from exc
        written.append(str(path))

    if "summary_json" in requested:
        emit("summary.json", summary.to_json())
    if "trajectories_csv" in requested:
        fan = artifacts.get("fan")
        if fan is None:
            emit("trajectories.csv", "t,y1\n")
        else:
            times, series = fan
            emit("trajectories.csv", trajectories_csv(times, series))
    if "histogram_csv" in requested:
        hist = artifacts.get("histogram")
        if hist is None:
            emit("histogram.csv", "bin_lo,bin_hi,count\n")
        else:
            emit("histogram.csv", histogram_csv(*hist))
    if "plot_svg" in requested:
        plot = artifacts.get("fan_plot")
        if plot is None and artifacts.get("fan") is not None:
            times, series = artifacts["fan"]
            lines = []
            for s in series:
                if s.ndim > 1:
                    lines.extend(s[:, j] for j in range(s.shape[1]))
                else:
                    lines.append(s)
            plot = (times, lines, artifacts.get("fan_label", "y"))
        if plot is not None:
            times, lines, label = plot
            emit("trajectories.svg",
                 trajectory_fan_svg(times, lines,
                                    f"{summary.scenario}: trajectories", label))
        hist = artifacts.get("histogram")
        if hist is not None:
            emit("histogram.svg",
                 histogram_svg(*hist, title=f"{summary.scenario}: detections",
                               xlabel=artifacts.get("histogram_label", "y")))
        heat = artifacts.get("heatmap")
        if heat is not None:
            emit("coverage.svg",
                 heatmap_svg(heat[0], heat[1],
                             title=f"{summary.scenario}: coverage"))
    return written
