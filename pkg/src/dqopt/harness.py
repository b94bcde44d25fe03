"""Config files, landscape scans, study drivers and CSV/JSON emission.

The run configuration is a single YAML file with nested sections
(spin_system, simulation, bounds, optimizer, task blocks).  At the file
boundary all frequencies are Hz, durations microseconds and angles
degrees; parsing converts to SI and radians, and the emitted manifest
normalises back, so re-parsing the manifest reproduces the resolved
configuration exactly.

Scan grids are written as CSV with axis coordinates in the first row
and column, cells as decimal fractions formatted so that re-import is
bit-exact.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .experiment import SimConfig, buildup_curve, dqf_efficiency, offset_profile
from .optim import (GAConfig, GeneSpec, RunRecord, ga_run, integer_gene,
                    nelder_mead, quasi_newton_fd, random_search)
from .powder import ZCW_SETS, zcw_gamma_scheme
from .sequence import SequenceParams, c7_defaults, default_params
from .spincore import SpinSystem

#: the seven optimisable parameters, in canonical (genome) order
PARAM_ORDER = ("tau1", "tau2", "kappa1", "kappa2", "phi1", "phi2", "n_blocks")

#: file-boundary unit of each scannable parameter and its SI factor
PARAM_UNITS = {
    "tau1": ("us", 1e-6), "tau2": ("us", 1e-6),
    "kappa1": ("hz", 1.0), "kappa2": ("hz", 1.0),
    "phi1": ("deg", 1.0), "phi2": ("deg", 1.0),
    "n_blocks": ("", 1.0),
    "offset": ("hz", 1.0),
}

TASKS = ("buildup", "scan1d", "scan2d", "optimize", "offset", "speedstudy")


class ConfigError(Exception):
    """Raised on malformed configuration, with a field-path diagnostic."""


# ---------------------------------------------------------------------------
# parsing helpers

def _get(mapping, key, path, default=..., kind=None):
    if not isinstance(mapping, dict):
        raise ConfigError(f"{path}: expected a mapping")
    if key not in mapping:
        if default is ...:
            raise ConfigError(f"{path}.{key}: required field is missing")
        return default
    value = mapping[key]
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}.{key}: expected true/false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}.{key}: expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}.{key}: expected a number, got {value!r}")
        return float(value)
    return value


def _angles(mapping, key, path, default=...):
    value = _get(mapping, key, path, default)
    if value is default and default is not ...:
        return value
    if (not isinstance(value, (list, tuple)) or len(value) != 3
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)):
        raise ConfigError(f"{path}.{key}: expected three numbers (degrees)")
    return tuple(math.radians(float(v)) for v in value)


def _unknown_keys(mapping, known, path):
    extra = set(mapping) - set(known)
    if extra:
        raise ConfigError(f"{path}: unknown field(s) {sorted(extra)}")


# ---------------------------------------------------------------------------
# configuration blocks

@dataclass(frozen=True)
class Bounds:
    """Search-interval definition centred on the synchronised defaults."""

    n_blocks_center: int = 31
    tau_half_width_us: float = 5.0
    kappa_half_width_hz: float = 7142.0
    phi_half_width_deg: float = 10.0
    n_blocks_half_width: int = 20
    float_bits: int = 16


@dataclass(frozen=True)
class OptimizerSettings:
    algorithm: str = "ga"
    optimize: tuple[str, ...] = PARAM_ORDER
    population_size: int = 50
    generations: int = 30
    eval_budget: int = 1500
    crossover_prob: float = 0.6
    mutation_prob: float = 0.01
    elite_count: int = 1
    runs: int = 30
    seed: int | None = None


@dataclass(frozen=True)
class RunConfig:
    spin_system: SpinSystem
    sim: SimConfig
    bounds: Bounds
    optimizer: OptimizerSettings
    base_params: SequenceParams
    tasks: tuple[str, ...]
    task_options: dict

    def to_mapping(self) -> dict:
        return _config_mapping(self)


def reference_spin_system() -> SpinSystem:
    """The packaged two-spin reference system (carboxyl spin pair)."""
    text = resources.files("dqopt.data").joinpath("ammonium_maleate.yaml").read_text()
    return _parse_spin_system(yaml.safe_load(text)["spin_system"], "spin_system")


def _parse_spin_system(block, path) -> SpinSystem:
    if block == "reference":
        return reference_spin_system()
    keys = ("larmor_freq_hz", "iso_shift_1_hz", "iso_shift_2_hz",
            "csa_aniso_1_hz", "csa_aniso_2_hz", "csa_eta_1", "csa_eta_2",
            "csa_euler_1_deg", "csa_euler_2_deg", "dipolar_b_hz",
            "dipolar_euler_deg")
    if not isinstance(block, dict):
        raise ConfigError(f"{path}: expected a mapping or the string 'reference'")
    _unknown_keys(block, keys, path)
    try:
        return SpinSystem(
            larmor_freq=_get(block, "larmor_freq_hz", path, -176.1e6, float),
            iso_shift_1=_get(block, "iso_shift_1_hz", path, 0.0, float),
            iso_shift_2=_get(block, "iso_shift_2_hz", path, 0.0, float),
            csa_aniso_1=_get(block, "csa_aniso_1_hz", path, 0.0, float),
            csa_aniso_2=_get(block, "csa_aniso_2_hz", path, 0.0, float),
            csa_eta_1=_get(block, "csa_eta_1", path, 0.0, float),
            csa_eta_2=_get(block, "csa_eta_2", path, 0.0, float),
            csa_euler_1=_angles(block, "csa_euler_1_deg", path, (0.0, 0.0, 0.0)),
            csa_euler_2=_angles(block, "csa_euler_2_deg", path, (0.0, 0.0, 0.0)),
            dipolar_b=_get(block, "dipolar_b_hz", path, 0.0, float),
            dipolar_euler=_angles(block, "dipolar_euler_deg", path, (0.0, 0.0, 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_simulation(block, path) -> SimConfig:
    keys = ("rotor_freq_hz", "transmitter_offset_hz", "include_csa",
            "max_step_us", "powder")
    _unknown_keys(block, keys, path)
    rotor = _get(block, "rotor_freq_hz", path, kind=float)
    powder_block = _get(block, "powder", path, {"ab_points": 144, "gamma_points": 8})
    _unknown_keys(powder_block, ("ab_points", "gamma_points"), f"{path}.powder")
    ab = _get(powder_block, "ab_points", f"{path}.powder", 144, int)
    ng = _get(powder_block, "gamma_points", f"{path}.powder", 8, int)
    if ab not in ZCW_SETS:
        raise ConfigError(
            f"{path}.powder.ab_points: must be one of {sorted(ZCW_SETS)}, got {ab}")
    if ng < 1:
        raise ConfigError(f"{path}.powder.gamma_points: must be >= 1, got {ng}")
    max_step_us = _get(block, "max_step_us", path, None)
    if max_step_us is not None:
        if isinstance(max_step_us, bool) or not isinstance(max_step_us, (int, float)):
            raise ConfigError(f"{path}.max_step_us: expected a number or null")
        max_step_us = float(max_step_us)
    try:
        return SimConfig(
            rotor_freq=rotor,
            transmitter_offset=_get(block, "transmitter_offset_hz", path, 0.0, float),
            powder=zcw_gamma_scheme(ab, ng),
            max_step=None if max_step_us is None else max_step_us * 1e-6,
            include_csa=_get(block, "include_csa", path, True, bool),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_bounds(block, path) -> Bounds:
    defaults = Bounds()
    keys = ("n_blocks_center", "tau_half_width_us", "kappa_half_width_hz",
            "phi_half_width_deg", "n_blocks_half_width", "float_bits")
    _unknown_keys(block, keys, path)
    b = Bounds(
        n_blocks_center=_get(block, "n_blocks_center", path, defaults.n_blocks_center, int),
        tau_half_width_us=_get(block, "tau_half_width_us", path, defaults.tau_half_width_us, float),
        kappa_half_width_hz=_get(block, "kappa_half_width_hz", path, defaults.kappa_half_width_hz, float),
        phi_half_width_deg=_get(block, "phi_half_width_deg", path, defaults.phi_half_width_deg, float),
        n_blocks_half_width=_get(block, "n_blocks_half_width", path, defaults.n_blocks_half_width, int),
        float_bits=_get(block, "float_bits", path, defaults.float_bits, int),
    )
    if b.float_bits < 1:
        raise ConfigError(f"{path}.float_bits: must be >= 1")
    if b.n_blocks_center - b.n_blocks_half_width < 1:
        raise ConfigError(f"{path}: n_blocks lower bound must stay >= 1")
    return b


def _parse_optimizer(block, path) -> OptimizerSettings:
    d = OptimizerSettings()
    keys = ("algorithm", "optimize", "population_size", "generations",
            "eval_budget", "crossover_prob", "mutation_prob", "elite_count",
            "runs", "seed")
    _unknown_keys(block, keys, path)
    algorithm = _get(block, "algorithm", path, d.algorithm)
    if algorithm not in ("ga", "random", "nelder-mead", "quasi-newton"):
        raise ConfigError(f"{path}.algorithm: unknown algorithm {algorithm!r}")
    optimize = _get(block, "optimize", path, list(d.optimize))
    if not isinstance(optimize, (list, tuple)) or not optimize:
        raise ConfigError(f"{path}.optimize: expected a non-empty list")
    for name in optimize:
        if name not in PARAM_ORDER:
            raise ConfigError(f"{path}.optimize: unknown parameter {name!r}")
    optimize = tuple(p for p in PARAM_ORDER if p in set(optimize))
    seed = _get(block, "seed", path, d.seed)
    if seed is not None:
        seed = _get(block, "seed", path, kind=int)
    return OptimizerSettings(
        algorithm=algorithm, optimize=optimize,
        population_size=_get(block, "population_size", path, d.population_size, int),
        generations=_get(block, "generations", path, d.generations, int),
        eval_budget=_get(block, "eval_budget", path, d.eval_budget, int),
        crossover_prob=_get(block, "crossover_prob", path, d.crossover_prob, float),
        mutation_prob=_get(block, "mutation_prob", path, d.mutation_prob, float),
        elite_count=_get(block, "elite_count", path, d.elite_count, int),
        runs=_get(block, "runs", path, d.runs, int),
        seed=seed,
    )


def _parse_base_params(block, path, rotor_freq, n_default) -> SequenceParams:
    defaults = default_params(rotor_freq, n_blocks=n_default)
    keys = ("tau1_us", "tau2_us", "kappa1_hz", "kappa2_hz",
            "phi1_deg", "phi2_deg", "n_blocks")
    _unknown_keys(block, keys, path)
    try:
        return SequenceParams(
            tau1=_get(block, "tau1_us", path, defaults.tau1 * 1e6, float) * 1e-6,
            tau2=_get(block, "tau2_us", path, defaults.tau2 * 1e6, float) * 1e-6,
            kappa1=_get(block, "kappa1_hz", path, defaults.kappa1, float),
            kappa2=_get(block, "kappa2_hz", path, defaults.kappa2, float),
            phi1=_get(block, "phi1_deg", path, defaults.phi1, float),
            phi2=_get(block, "phi2_deg", path, defaults.phi2, float),
            n_blocks=_get(block, "n_blocks", path, defaults.n_blocks, int),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _default_task_options(sim: SimConfig, bounds: Bounds) -> dict:
    tau_us = c7_defaults(sim.rotor_freq).tau_c * 1e6
    half = bounds.tau_half_width_us
    return {
        "buildup": {"n_min": 1, "n_max": 50},
        "scan1d": {"param": "tau1", "start": tau_us - half,
                   "stop": tau_us + half, "points": 101},
        "scan2d": {"param_x": "tau1", "param_y": "tau2",
                   "start_x": tau_us - half, "stop_x": tau_us + half, "points_x": 101,
                   "start_y": tau_us - half, "stop_y": tau_us + half, "points_y": 101},
        "offset": {"start_hz": -8000.0, "stop_hz": 8000.0, "points": 33},
        "speedstudy": {"speeds_hz": [4000.0, 9000.0, 10204.0],
                       "tau1_ratio_min": 1.004, "tau1_ratio_max": 1.040,
                       "tau1_points": 19, "max_exc_ms": 8.5},
    }


def _parse_task_options(root, sim, bounds) -> dict:
    options = _default_task_options(sim, bounds)
    for task, defaults in options.items():
        block = _get(root, task, "config", {})
        _unknown_keys(block, defaults.keys(), task)
        merged = dict(defaults)
        for key, default_value in defaults.items():
            if key in ("param", "param_x", "param_y"):
                value = _get(block, key, task, default_value)
                valid = set(PARAM_UNITS) if key == "param" else set(PARAM_ORDER)
                if value not in valid:
                    raise ConfigError(f"{task}.{key}: unknown parameter {value!r}")
            elif key == "speeds_hz":
                value = _get(block, key, task, default_value)
                if (not isinstance(value, (list, tuple)) or not value
                        or any(isinstance(v, bool) or not isinstance(v, (int, float)) or v <= 0
                               for v in value)):
                    raise ConfigError(f"{task}.speeds_hz: expected positive numbers")
                value = [float(v) for v in value]
            elif isinstance(default_value, int):
                value = _get(block, key, task, default_value, int)
            else:
                value = _get(block, key, task, default_value, float)
            merged[key] = value
        options[task] = merged
    return options


def parse_run_config(source) -> RunConfig:
    """Parse a config file path, YAML text, or mapping into a RunConfig."""
    if isinstance(source, dict):
        root = source
    else:
        text = Path(source).read_text() if Path(str(source)).exists() else str(source)
        try:
            root = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f" at line {mark.line + 1}" if mark is not None else ""
            raise ConfigError(f"config is not valid YAML{where}: {exc}") from exc
    if not isinstance(root, dict):
        raise ConfigError("config root must be a mapping")
    _unknown_keys(root, ("spin_system", "simulation", "bounds", "optimizer",
                         "base_params", "tasks") + TASKS, "config")
    spin = _parse_spin_system(_get(root, "spin_system", "config"), "spin_system")
    sim = _parse_simulation(_get(root, "simulation", "config"), "simulation")
    bounds = _parse_bounds(_get(root, "bounds", "config", {}), "bounds")
    optimizer = _parse_optimizer(_get(root, "optimizer", "config", {}), "optimizer")
    base = _parse_base_params(_get(root, "base_params", "config", {}),
                              "base_params", sim.rotor_freq, bounds.n_blocks_center)
    tasks = _get(root, "tasks", "config", [])
    if not isinstance(tasks, (list, tuple)):
        raise ConfigError("tasks: expected a list")
    for t in tasks:
        if t not in TASKS:
            raise ConfigError(f"tasks: unknown task {t!r} (choose from {TASKS})")
    options = _parse_task_options(root, sim, bounds)
    return RunConfig(spin_system=spin, sim=sim, bounds=bounds,
                     optimizer=optimizer, base_params=base,
                     tasks=tuple(tasks), task_options=options)


def _config_mapping(cfg: RunConfig) -> dict:
    s = cfg.spin_system
    deg = math.degrees
    powder_ab, powder_ng = (int(x) for x in cfg.sim.powder.name[3:].split("x"))
    mapping = {
        "spin_system": {
            "larmor_freq_hz": s.larmor_freq,
            "iso_shift_1_hz": s.iso_shift_1, "iso_shift_2_hz": s.iso_shift_2,
            "csa_aniso_1_hz": s.csa_aniso_1, "csa_aniso_2_hz": s.csa_aniso_2,
            "csa_eta_1": s.csa_eta_1, "csa_eta_2": s.csa_eta_2,
            "csa_euler_1_deg": [deg(a) for a in s.csa_euler_1],
            "csa_euler_2_deg": [deg(a) for a in s.csa_euler_2],
            "dipolar_b_hz": s.dipolar_b,
            "dipolar_euler_deg": [deg(a) for a in s.dipolar_euler],
        },
        "simulation": {
            "rotor_freq_hz": cfg.sim.rotor_freq,
            "transmitter_offset_hz": cfg.sim.transmitter_offset,
            "include_csa": cfg.sim.include_csa,
            "max_step_us": None if cfg.sim.max_step is None else cfg.sim.max_step * 1e6,
            "powder": {"ab_points": powder_ab, "gamma_points": powder_ng},
        },
        "bounds": {
            "n_blocks_center": cfg.bounds.n_blocks_center,
            "tau_half_width_us": cfg.bounds.tau_half_width_us,
            "kappa_half_width_hz": cfg.bounds.kappa_half_width_hz,
            "phi_half_width_deg": cfg.bounds.phi_half_width_deg,
            "n_blocks_half_width": cfg.bounds.n_blocks_half_width,
            "float_bits": cfg.bounds.float_bits,
        },
        "optimizer": {
            "algorithm": cfg.optimizer.algorithm,
            "optimize": list(cfg.optimizer.optimize),
            "population_size": cfg.optimizer.population_size,
            "generations": cfg.optimizer.generations,
            "eval_budget": cfg.optimizer.eval_budget,
            "crossover_prob": cfg.optimizer.crossover_prob,
            "mutation_prob": cfg.optimizer.mutation_prob,
            "elite_count": cfg.optimizer.elite_count,
            "runs": cfg.optimizer.runs,
            "seed": cfg.optimizer.seed,
        },
        "base_params": {
            "tau1_us": cfg.base_params.tau1 * 1e6,
            "tau2_us": cfg.base_params.tau2 * 1e6,
            "kappa1_hz": cfg.base_params.kappa1,
            "kappa2_hz": cfg.base_params.kappa2,
            "phi1_deg": cfg.base_params.phi1,
            "phi2_deg": cfg.base_params.phi2,
            "n_blocks": cfg.base_params.n_blocks,
        },
        "tasks": list(cfg.tasks),
    }
    mapping.update({task: dict(opts) for task, opts in cfg.task_options.items()})
    return mapping


def emit_manifest(cfg: RunConfig, path) -> Path:
    """Write the resolved configuration; re-parsing it reproduces cfg."""
    path = Path(path)
    path.write_text(yaml.safe_dump(cfg.to_mapping(), sort_keys=False))
    return path


# ---------------------------------------------------------------------------
# gene specs and objective

def make_gene_specs(bounds: Bounds, rotor_freq: float, names=PARAM_ORDER):
    """GeneSpec list (file units) centred on the synchronised defaults."""
    d = c7_defaults(rotor_freq)
    tau_us = d.tau_c * 1e6
    table = {
        "tau1": GeneSpec("tau1", tau_us - bounds.tau_half_width_us,
                         tau_us + bounds.tau_half_width_us, bounds.float_bits),
        "tau2": GeneSpec("tau2", tau_us - bounds.tau_half_width_us,
                         tau_us + bounds.tau_half_width_us, bounds.float_bits),
        "kappa1": GeneSpec("kappa1", d.kappa_c - bounds.kappa_half_width_hz,
                           d.kappa_c + bounds.kappa_half_width_hz, bounds.float_bits),
        "kappa2": GeneSpec("kappa2", d.kappa_c - bounds.kappa_half_width_hz,
                           d.kappa_c + bounds.kappa_half_width_hz, bounds.float_bits),
        "phi1": GeneSpec("phi1", -bounds.phi_half_width_deg,
                         bounds.phi_half_width_deg, bounds.float_bits),
        "phi2": GeneSpec("phi2", -bounds.phi_half_width_deg,
                         bounds.phi_half_width_deg, bounds.float_bits),
        "n_blocks": integer_gene("n_blocks",
                                 bounds.n_blocks_center - bounds.n_blocks_half_width,
                                 bounds.n_blocks_center + bounds.n_blocks_half_width),
    }
    unknown = set(names) - set(table)
    if unknown:
        raise ValueError(f"unknown parameter(s) {sorted(unknown)}")
    return [table[n] for n in PARAM_ORDER if n in set(names)]


def apply_param_values(base: SequenceParams, names, values) -> SequenceParams:
    """Apply file-unit parameter values onto a SequenceParams."""
    changes = {}
    for name, value in zip(names, values):
        if name not in PARAM_UNITS or name == "offset":
            raise ValueError(f"unknown sequence parameter {name!r}")
        _, si = PARAM_UNITS[name]
        changes[name] = int(round(value)) if name == "n_blocks" else value * si
    return replace(base, **changes)


def make_objective(specs, base_params, sys, cfg, memo: dict | None = None):
    """Fitness callable over decoded (file-unit) parameter vectors.

    Values that violate the physical domain (non-positive durations or
    amplitudes, reachable by the unconstrained baselines) score the worst
    possible fitness 2 instead of raising.
    """
    names = [s.name for s in specs]

    def objective(values) -> float:
        if memo is not None:
            key = tuple(np.asarray(values, dtype=float).tolist())
            cached = memo.get(key)
            if cached is not None:
                return cached
        try:
            params = apply_param_values(base_params, names, values)
        except ValueError:
            return 2.0
        f = dqf_efficiency(params, sys, cfg).fitness
        if memo is not None:
            memo[key] = f
        return f

    return objective


# ---------------------------------------------------------------------------
# scan grids

@dataclass(frozen=True, eq=False)
class ScanGrid:
    """Sampled efficiency landscape over one or two parameter axes.

    Axis coordinates are in the parameter's file units.  For 2D grids
    ``values[i, j]`` belongs to (axes[1][i], axes[0][j]), i.e. rows run
    along the second (y) axis.
    """

    params: tuple[str, ...]
    axes: tuple[np.ndarray, ...]
    values: np.ndarray

    def __post_init__(self):
        if len(self.params) != len(self.axes) or len(self.params) not in (1, 2):
            raise ValueError("ScanGrid needs one or two axes")
        expected = (tuple(len(a) for a in reversed(self.axes))
                    if len(self.axes) == 2 else (len(self.axes[0]),))
        if self.values.shape != expected:
            raise ValueError(
                f"matrix shape {self.values.shape} does not match axes {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("scan produced non-finite efficiencies")

    def to_csv(self, path) -> Path:
        path = Path(path)
        fmt = lambda x: format(float(x), ".17g")
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            if len(self.params) == 1:
                writer.writerow([_axis_label(self.params[0]), "efficiency"])
                for x, v in zip(self.axes[0], self.values):
                    writer.writerow([fmt(x), fmt(v)])
            else:
                corner = f"{_axis_label(self.params[1])}\\{_axis_label(self.params[0])}"
                writer.writerow([corner] + [fmt(x) for x in self.axes[0]])
                for i, y in enumerate(self.axes[1]):
                    writer.writerow([fmt(y)] + [fmt(v) for v in self.values[i]])
        return path

    @classmethod
    def from_csv(cls, path) -> "ScanGrid":
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
        header = rows[0]
        if len(header) == 2 and header[1] == "efficiency":
            param = _param_from_label(header[0])
            data = np.array([[float(a), float(b)] for a, b in rows[1:]])
            return cls((param,), (data[:, 0],), data[:, 1])
        py, px = (_param_from_label(h) for h in header[0].split("\\"))
        x = np.array([float(v) for v in header[1:]])
        y = np.array([float(r[0]) for r in rows[1:]])
        values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
        return cls((px, py), (x, y), values)


def _axis_label(param: str) -> str:
    unit = PARAM_UNITS[param][0]
    return f"{param}_{unit}" if unit else param


def _param_from_label(label: str) -> str:
    for param, (unit, _) in PARAM_UNITS.items():
        if label == _axis_label(param):
            return param
    raise ValueError(f"unrecognised axis label {label!r}")


def _evaluate_point(param_values: dict, base: SequenceParams, sys, cfg) -> float:
    cfg_local = cfg
    seq_changes = {}
    for name, value in param_values.items():
        if name == "offset":
            cfg_local = replace(cfg_local,
                                transmitter_offset=cfg.transmitter_offset + value)
        else:
            seq_changes[name] = value
    params = apply_param_values(base, seq_changes.keys(), seq_changes.values())
    return dqf_efficiency(params, sys, cfg_local).efficiency


def scan_1d(param: str, values, base_params: SequenceParams, sys: SpinSystem,
            cfg: SimConfig) -> ScanGrid:
    """Efficiency along one parameter axis (file units)."""
    if param not in PARAM_UNITS:
        raise ValueError(f"unknown scan parameter {param!r}")
    values = np.asarray(values, dtype=float)
    if values.size < 1:
        raise ValueError("scan range must contain at least one point")
    if param == "n_blocks":
        n_list = [int(round(v)) for v in values]
        curve = buildup_curve(base_params, sys, cfg, n_list)
        effs = np.array([e for _, e in curve])
    else:
        effs = np.array([_evaluate_point({param: v}, base_params, sys, cfg)
                         for v in values])
    return ScanGrid((param,), (values,), effs)


def scan_2d(param_x: str, param_y: str, values_x, values_y,
            base_params: SequenceParams, sys: SpinSystem,
            cfg: SimConfig) -> ScanGrid:
    """Full cartesian grid; rows of the matrix follow the y axis.

    When one axis is the block count the buildup fast path evaluates a
    whole row/column at once; tests pin its agreement with pointwise
    evaluation.
    """
    for p in (param_x, param_y):
        if p not in PARAM_UNITS or p == "offset":
            raise ValueError(f"unknown scan parameter {p!r}")
    if param_x == param_y:
        raise ValueError("scan axes must differ")
    vx = np.asarray(values_x, dtype=float)
    vy = np.asarray(values_y, dtype=float)
    if vx.size < 1 or vy.size < 1:
        raise ValueError("scan ranges must contain at least one point")
    values = np.empty((vy.size, vx.size))
    if param_y == "n_blocks" or param_x == "n_blocks":
        n_axis_is_y = param_y == "n_blocks"
        n_values = [int(round(v)) for v in (vy if n_axis_is_y else vx)]
        other_param = param_x if n_axis_is_y else param_y
        other_values = vx if n_axis_is_y else vy
        for j, v in enumerate(other_values):
            params = apply_param_values(base_params, [other_param], [v])
            curve = buildup_curve(params, sys, cfg, n_values)
            col = np.array([e for _, e in curve])
            if n_axis_is_y:
                values[:, j] = col
            else:
                values[j, :] = col
    else:
        for i, y in enumerate(vy):
            for j, x in enumerate(vx):
                values[i, j] = _evaluate_point({param_x: x, param_y: y},
                                               base_params, sys, cfg)
    return ScanGrid((param_x, param_y), (vx, vy), values)


# ---------------------------------------------------------------------------
# spinning-speed study

@dataclass(frozen=True)
class SpeedStudyRow:
    rotor_freq: float
    with_csa: bool
    clear_maximum: bool
    tau_exc_max: float | None   # seconds
    tau1_ratio_max: float | None
    efficiency_max: float


def grid_local_max(values: np.ndarray):
    """Certified interior maximum of a 2D grid.

    Returns (i, j) of the global argmax if it lies strictly inside the
    grid and strictly above its four neighbours, else None.
    """
    i, j = np.unravel_index(int(np.argmax(values)), values.shape)
    if i in (0, values.shape[0] - 1) or j in (0, values.shape[1] - 1):
        return None
    v = values[i, j]
    if (v > values[i - 1, j] and v > values[i + 1, j]
            and v > values[i, j - 1] and v > values[i, j + 1]):
        return (int(i), int(j))
    return None


def spinning_speed_study(speeds, sys: SpinSystem, cfg: SimConfig,
                         tau1_ratio_range=(1.004, 1.040), tau1_points=19,
                         max_exc_time=8.5e-3) -> list[SpeedStudyRow]:
    """Locate the buildup maximum of the duration-offset band per speed.

    For each spinning speed and CSA mode the efficiency is mapped over
    (tau1/tau_c, block count) with everything else at the synchronised
    defaults recomputed for that speed, and the grid maximum is reported
    with a local-maximum certificate; absence of a certified interior
    maximum is flagged, which reproduces the breakdown at spinning
    speeds well below the anisotropy.
    """
    if tau1_points < 3:
        raise ValueError("tau1 grid too coarse to bracket a maximum")
    rows = []
    ratios = np.linspace(tau1_ratio_range[0], tau1_ratio_range[1], tau1_points)
    for speed in speeds:
        if speed <= 0.0:
            raise ValueError(f"spinning speed must be > 0, got {speed}")
        defaults = c7_defaults(speed)
        n_max = int(max_exc_time / (7.0 * 2.0 * defaults.tau_c))
        if n_max < 3:
            raise ValueError(
                f"excitation window too short at {speed} Hz to bracket a maximum")
        n_values = np.arange(1, n_max + 1)
        for with_csa in (False, True):
            cfg_s = replace(cfg, rotor_freq=speed, include_csa=with_csa)
            base = default_params(speed)
            grid = scan_2d("tau1", "n_blocks",
                           ratios * defaults.tau_c * 1e6, n_values,
                           base, sys, cfg_s)
            hit = grid_local_max(grid.values)
            if hit is None:
                rows.append(SpeedStudyRow(speed, with_csa, False, None, None,
                                          float(grid.values.max())))
            else:
                i, j = hit
                n_star = int(n_values[i])
                tau1 = ratios[j] * defaults.tau_c
                tau_exc = n_star * 7.0 * (tau1 + defaults.tau_c)
                rows.append(SpeedStudyRow(speed, with_csa, True, tau_exc,
                                          float(ratios[j]),
                                          float(grid.values[i, j])))
    return rows


# ---------------------------------------------------------------------------
# study runner

def _write_records(records: list[RunRecord], specs, out_dir: Path, stem: str):
    with (out_dir / f"{stem}_runs.json").open("w") as fh:
        json.dump([r.to_dict() for r in records], fh, indent=1)
    names = [s.name for s in specs]
    with (out_dir / f"{stem}_summary.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "tau1_us", "tau2_us", "kappa1_hz", "kappa2_hz",
                         "phi1_deg", "phi2_deg", "n_blocks",
                         "fitness", "dqf_percent"])
        for i, rec in enumerate(records):
            values = dict(zip(names, rec.best_values))
            writer.writerow(
                [i] + [format(values[p], ".6g") if p in values else ""
                       for p in PARAM_ORDER]
                + [format(rec.best_fitness, ".6g"),
                   format(100.0 * rec.best_efficiency, ".6g")])
    with (out_dir / f"{stem}_history.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "generation", "best_fitness", "mean_fitness"])
        for i, rec in enumerate(records):
            for g, (b, m) in enumerate(zip(rec.gen_best, rec.gen_mean)):
                writer.writerow([i, g, format(b, ".6g"), format(m, ".6g")])


def run_optimize_task(cfg: RunConfig) -> list[RunRecord]:
    """Execute the configured optimizer for the configured number of runs."""
    opt = cfg.optimizer
    specs = make_gene_specs(cfg.bounds, cfg.sim.rotor_freq, opt.optimize)
    shared_memo: dict = {}
    objective = make_objective(specs, cfg.base_params, cfg.spin_system,
                               cfg.sim, memo=shared_memo)
    records = []
    base_seed = 0 if opt.seed is None else opt.seed
    for run in range(opt.runs):
        seed = base_seed + run
        if opt.algorithm == "ga":
            ga_cfg = GAConfig(population_size=opt.population_size,
                              generations=opt.generations,
                              eval_budget=opt.eval_budget,
                              crossover_prob=opt.crossover_prob,
                              mutation_prob=opt.mutation_prob,
                              elite_count=opt.elite_count,
                              rng_seed=seed)
            records.append(ga_run(ga_cfg, specs, objective))
        elif opt.algorithm == "random":
            records.append(random_search(opt.eval_budget, specs, objective,
                                         rng=seed))
        else:
            x0 = np.array([_start_value(s, cfg) for s in specs])
            steps = np.array([(s.upper - s.lower) / 2.0 for s in specs])
            if opt.algorithm == "nelder-mead":
                records.append(nelder_mead(objective, x0, steps, opt.eval_budget))
            else:
                records.append(quasi_newton_fd(objective, x0, opt.eval_budget,
                                               gradient_steps=1e-4 * 2.0 * steps))
    return records


def _start_value(spec: GeneSpec, cfg: RunConfig) -> float:
    base = cfg.base_params
    _, si = PARAM_UNITS[spec.name]
    return getattr(base, spec.name) / si


def study_runner(config, out_dir) -> Path:
    """Dispatch the configured tasks and write all artifacts into out_dir.

    An empty task list writes only the manifest.  Raises ConfigError for
    configuration problems; numerical failures propagate.
    """
    cfg = config if isinstance(config, RunConfig) else parse_run_config(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    emit_manifest(cfg, out / "manifest.yaml")
    sys_, sim, base = cfg.spin_system, cfg.sim, cfg.base_params
    for task in cfg.tasks:
        opts = cfg.task_options[task]
        if task == "buildup":
            n_values = list(range(opts["n_min"], opts["n_max"] + 1))
            curve = buildup_curve(base, sys_, sim, n_values)
            with (out / "buildup.csv").open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["n_blocks", "tau_exc_ms", "efficiency"])
                for n, (t, e) in zip(n_values, curve):
                    writer.writerow([n, format(t * 1e3, ".17g"), format(e, ".17g")])
        elif task == "scan1d":
            values = np.linspace(opts["start"], opts["stop"], opts["points"])
            grid = scan_1d(opts["param"], values, base, sys_, sim)
            grid.to_csv(out / "scan1d.csv")
        elif task == "scan2d":
            vx = np.linspace(opts["start_x"], opts["stop_x"], opts["points_x"])
            vy = np.linspace(opts["start_y"], opts["stop_y"], opts["points_y"])
            grid = scan_2d(opts["param_x"], opts["param_y"], vx, vy,
                           base, sys_, sim)
            grid.to_csv(out / "scan2d.csv")
        elif task == "offset":
            offsets = np.linspace(opts["start_hz"], opts["stop_hz"], opts["points"])
            profile = offset_profile(base, sys_, sim, offsets)
            with (out / "offset.csv").open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["offset_hz", "efficiency"])
                for off, eff in profile:
                    writer.writerow([format(off, ".17g"), format(eff, ".17g")])
        elif task == "speedstudy":
            rows = spinning_speed_study(
                opts["speeds_hz"], sys_, sim,
                tau1_ratio_range=(opts["tau1_ratio_min"], opts["tau1_ratio_max"]),
                tau1_points=opts["tau1_points"],
                max_exc_time=opts["max_exc_ms"] * 1e-3)
            with (out / "speedstudy.csv").open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["rotor_freq_hz", "with_csa", "clear_maximum",
                                 "tau_exc_max_ms", "tau1_ratio_max",
                                 "efficiency_max"])
                for r in rows:
                    writer.writerow([
                        r.rotor_freq, int(r.with_csa), int(r.clear_maximum),
                        "" if r.tau_exc_max is None else format(r.tau_exc_max * 1e3, ".6g"),
                        "" if r.tau1_ratio_max is None else format(r.tau1_ratio_max, ".6g"),
                        format(r.efficiency_max, ".6g")])
        elif task == "optimize":
            records = run_optimize_task(cfg)
            specs = make_gene_specs(cfg.bounds, sim.rotor_freq,
                                    cfg.optimizer.optimize)
            _write_records(records, specs, out, "optimize")
    return out
