"""Scenario configuration, validation and execution.

A scenario is described by one JSON document. Parsing is strict: unknown keys
and ill-typed values are all collected and reported together. Every run writes
CSV tables, a ``manifest.json`` echoing the resolved configuration, and
optionally SVG plots.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bohm import bohm_fields, hj_residual, integrate_trajectory
from .core import Scales, make_grid, rescale
from .dispersion import EXACT, DispersionModel, TruncationDivergenceWarning, apply_hamiltonian
from .ensemble import (
    PowerLawDensity,
    born_probabilities,
    characteristic_probabilities,
    continuity_defect,
    default_bins,
    equivariance_residual,
    histogram_probabilities,
    sample_born,
    transport,
    tv_distance,
)
from .states import BoxSuperposition, GridState, PlaneWave, TwoWave, box_energy, gaussian_packet

__all__ = [
    "SCENARIOS",
    "OUTPUT_ENV",
    "ConfigError",
    "NumericalFailure",
    "ScenarioConfig",
    "parse_config",
    "load_config",
    "run_scenario",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_NUMERICAL",
    "EXIT_DIVERGENT",
]

OUTPUT_ENV = "RELBOHM_OUTPUT_DIR"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_DIVERGENT = 4

SCENARIOS = {
    "trajectories": "Bohmian trajectories from listed start points; one CSV per particle.",
    "figure1": "Relativistic vs nonrelativistic box trajectories for several box sizes.",
    "spectrum": "Infinite-well energies: exact, truncated and nonrelativistic limit.",
    "qpotential": "Density, phase gradient, velocity, quantum potential, force and HJ residual.",
    "equilibrium": "Ensemble transport and Born-rule deviation over time.",
    "kernel-check": "Kernel vs spectral Hamiltonian on Gaussian packets.",
    "equivariance": "Equivariance residual of a candidate density c R^alpha.",
}

TOP_KEYS = {"scenario", "model", "state", "scales", "numerics", "params", "output_dir", "plots"}
NUMERIC_DEFAULTS = {
    "grid_points": 1024,
    "domain_length": None,
    "step": None,
    "particles": 100000,
    "bins": None,
    "seed": 0,
    "threads": 1,
}
PARAM_DEFAULTS = {
    "trajectories": {"x0": None, "t_start": 0.0, "t_end": None, "log_density": False},
    "figure1": {"l_values": [1, 5, 25, 100], "modes": {"1": [1.0, 0.0], "2": [1.0, 0.0]}, "x0_fraction": 0.5},
    "spectrum": {"box_length": None, "n_max": 5, "truncation": 2},
    "qpotential": {"t": 0.0},
    "equilibrium": {"t_end": None, "snapshots": 11},
    "kernel-check": {"sigmas": [2.0, 4.0, 8.0], "k0": 0.0, "span": 20.0},
    "equivariance": {"t": 0.0, "candidate": {"c": 1.0, "alpha": 2.0}},
}
STATE_KEYS = {
    "plane": {"family", "k", "amplitude"},
    "two_wave": {"family", "k1", "k2", "rel_amp", "rel_phase", "overall"},
    "box": {"family", "box_length", "modes"},
    "gaussian": {"family", "sigma", "center", "k0"},
}
NEEDS_STATE = {"trajectories", "qpotential", "equilibrium", "equivariance"}
SCALE_KEYS = {"rest_mass", "light_speed", "planck_reduced"}

CSV_COLUMNS = {
    "trajectory": ["t", "x", "v"],
    "trajectory_log": ["t", "x", "v", "log_density"],
    "figure1": ["t", "x", "v"],
    "figure1_gaps": ["l", "box_length", "beat_period", "max_gap", "normalized_gap"],
    "spectrum": ["n", "E_exact", "E_truncatedN", "E_nonrel_limit"],
    "qpotential": ["x", "R2", "gradS", "v", "Q", "F", "hj_residual", "mask"],
    "equilibrium": ["t", "tv_distance", "excluded_fraction", "characteristic_tv", "max_continuity_defect"],
    "histogram": ["bin_left", "bin_right", "particle_prob", "born_prob", "characteristic_prob"],
    "kernel-check": ["packet_width", "rel_L2_error"],
    "equivariance": ["x", "residual"],
}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class NumericalFailure(RuntimeError):
    def __init__(self, message, code=EXIT_NUMERICAL):
        super().__init__(message)
        self.code = code


@dataclass
class ScenarioConfig:
    scenario: str
    model: DispersionModel
    state: dict | None
    scales: Scales | None
    numerics: dict
    params: dict
    output_dir: str
    plots: bool
    resolved: dict  # canonical JSON form with defaults filled in


# ---------------------------------------------------------------------------
# parsing


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _is_complex_pair(v) -> bool:
    return isinstance(v, list) and len(v) == 2 and all(_is_number(c) for c in v)


def _check_state(state, errors):
    if not isinstance(state, dict):
        errors.append("state: must be an object")
        return
    family = state.get("family")
    if family not in STATE_KEYS:
        errors.append(f"state.family: must be one of {sorted(STATE_KEYS)}, got {family!r}")
        return
    for key in sorted(set(state) - STATE_KEYS[family]):
        errors.append(f"state.{key}: unknown key for family {family!r}")
    required = {"plane": ["k"], "two_wave": ["k1", "k2"], "box": ["box_length", "modes"], "gaussian": ["sigma"]}
    for key in required[family]:
        if key not in state:
            errors.append(f"state.{key}: required for family {family!r}")
    for key in ("k", "k1", "k2", "rel_amp", "rel_phase", "box_length", "sigma", "center", "k0"):
        if key in state and not _is_number(state[key]):
            errors.append(f"state.{key}: must be a finite number")
    for key in ("box_length", "sigma"):
        if _is_number(state.get(key)) and state[key] <= 0:
            errors.append(f"state.{key}: must be positive")
    if _is_number(state.get("rel_amp")) and state["rel_amp"] < 0:
        errors.append("state.rel_amp: must be non-negative")
    for key in ("amplitude", "overall"):
        if key in state and not _is_complex_pair(state[key]):
            errors.append(f"state.{key}: must be [re, im]")
    if "modes" in state:
        _check_modes(state["modes"], "state.modes", errors)


def _check_modes(modes, where, errors):
    if not isinstance(modes, dict) or not modes:
        errors.append(f"{where}: must be a non-empty object mapping mode index to [re, im]")
        return
    for n, c in modes.items():
        if not str(n).isdigit() or int(n) < 1:
            errors.append(f"{where}.{n}: mode index must be an integer >= 1")
        if not _is_complex_pair(c):
            errors.append(f"{where}.{n}: coefficient must be [re, im]")
    if all(_is_complex_pair(c) for c in modes.values()) and all(c == [0, 0] for c in modes.values()):
        errors.append(f"{where}: all coefficients are zero")


def _check_params(scenario, params, errors):
    defaults = PARAM_DEFAULTS[scenario]
    for key in sorted(set(params) - set(defaults)):
        errors.append(f"params.{key}: unknown key for scenario {scenario!r}")
    p = {**copy.deepcopy(defaults), **params}
    if scenario == "trajectories":
        x0 = p["x0"]
        if not (isinstance(x0, list) and x0 and all(_is_number(v) for v in x0)):
            errors.append("params.x0: required non-empty list of start positions")
        for key in ("t_start", "t_end"):
            if p[key] is not None and not _is_number(p[key]):
                errors.append(f"params.{key}: must be a number")
        if not isinstance(p["log_density"], bool):
            errors.append("params.log_density: must be true or false")
    elif scenario == "figure1":
        lv = p["l_values"]
        if not (isinstance(lv, list) and lv and all(_is_number(v) and v > 0 for v in lv)):
            errors.append("params.l_values: must be a non-empty list of positive numbers")
        _check_modes(p["modes"], "params.modes", errors)
        if not (_is_number(p["x0_fraction"]) and 0 < p["x0_fraction"] < 1):
            errors.append("params.x0_fraction: must lie strictly between 0 and 1")
    elif scenario == "spectrum":
        if p["box_length"] is not None and not (_is_number(p["box_length"]) and p["box_length"] > 0):
            errors.append("params.box_length: must be a positive number")
        for key in ("n_max", "truncation"):
            if not (isinstance(p[key], int) and not isinstance(p[key], bool) and p[key] >= 1):
                errors.append(f"params.{key}: must be an integer >= 1")
    elif scenario in ("qpotential", "equivariance"):
        if not _is_number(p["t"]):
            errors.append("params.t: must be a number")
        if scenario == "equivariance":
            cand = p["candidate"]
            if not (isinstance(cand, dict) and set(cand) <= {"c", "alpha"}
                    and all(_is_number(v) for v in cand.values())):
                errors.append("params.candidate: must be an object with numeric 'c' and 'alpha'")
    elif scenario == "equilibrium":
        if p["t_end"] is not None and not (_is_number(p["t_end"]) and p["t_end"] > 0):
            errors.append("params.t_end: must be a positive number")
        if not (isinstance(p["snapshots"], int) and not isinstance(p["snapshots"], bool) and p["snapshots"] >= 2):
            errors.append("params.snapshots: must be an integer >= 2")
    elif scenario == "kernel-check":
        s = p["sigmas"]
        if not (isinstance(s, list) and s and all(_is_number(v) and v > 0 for v in s)):
            errors.append("params.sigmas: must be a non-empty list of positive numbers")
        if not _is_number(p["k0"]):
            errors.append("params.k0: must be a number")
        if not (_is_number(p["span"]) and p["span"] > 0):
            errors.append("params.span: must be positive")
    return p


def parse_config(raw: dict) -> ScenarioConfig:
    """Validate a raw JSON document and fill in defaults.

    Raises
    ------
    ConfigError
        Listing every violation found.
    """
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["config: top level must be a JSON object"])
    if "resolved_config" in raw:
        raw = raw["resolved_config"]
    for key in sorted(set(raw) - TOP_KEYS):
        errors.append(f"{key}: unknown top-level key")
    scenario = raw.get("scenario")
    if scenario not in SCENARIOS:
        errors.append(f"scenario: must be one of {sorted(SCENARIOS)}, got {scenario!r}")

    model = EXACT
    try:
        model = DispersionModel.parse(raw.get("model", "exact"))
    except (ValueError, TypeError) as exc:
        errors.append(f"model: {exc}")

    scales = None
    if "scales" in raw and raw["scales"] is not None:
        sc = raw["scales"]
        if not isinstance(sc, dict):
            errors.append("scales: must be an object")
        else:
            for key in sorted(set(sc) - SCALE_KEYS):
                errors.append(f"scales.{key}: unknown key")
            missing = SCALE_KEYS - set(sc)
            for key in sorted(missing):
                errors.append(f"scales.{key}: required")
            if not missing and all(_is_number(sc[k]) and sc[k] > 0 for k in SCALE_KEYS):
                scales = Scales(sc["rest_mass"], sc["light_speed"], sc["planck_reduced"])
            elif not missing:
                errors.append("scales: values must be positive numbers")

    numerics_raw = raw.get("numerics", {})
    numerics = dict(NUMERIC_DEFAULTS)
    if not isinstance(numerics_raw, dict):
        errors.append("numerics: must be an object")
        numerics_raw = {}
    for key in sorted(set(numerics_raw) - set(NUMERIC_DEFAULTS)):
        errors.append(f"numerics.{key}: unknown key")
    numerics.update({k: v for k, v in numerics_raw.items() if k in NUMERIC_DEFAULTS})
    for key in ("grid_points", "particles", "threads"):
        v = numerics[key]
        if not (isinstance(v, int) and not isinstance(v, bool) and v >= 1):
            errors.append(f"numerics.{key}: must be a positive integer")
    gp = numerics["grid_points"]
    if isinstance(gp, int) and (gp < 8 or gp & (gp - 1)):
        errors.append("numerics.grid_points: must be a power of two >= 8")
    for key in ("domain_length", "step"):
        v = numerics[key]
        if v is not None and not (_is_number(v) and v > 0):
            errors.append(f"numerics.{key}: must be a positive number or null")
    if numerics["bins"] is not None and not (isinstance(numerics["bins"], int) and numerics["bins"] >= 1):
        errors.append("numerics.bins: must be a positive integer or null")
    if not (isinstance(numerics["seed"], int) and not isinstance(numerics["seed"], bool)
            and 0 <= numerics["seed"] < 2**64):
        errors.append("numerics.seed: must be an integer in [0, 2**64)")

    state = raw.get("state")
    if scenario in NEEDS_STATE and state is None:
        errors.append(f"state: required for scenario {scenario!r}")
    if state is not None:
        _check_state(state, errors)
        if scenario == "equilibrium" and isinstance(state, dict) and state.get("family") != "box":
            errors.append("state.family: the equilibrium scenario needs a 'box' state")

    params_raw = raw.get("params", {})
    params = {}
    if not isinstance(params_raw, dict):
        errors.append("params: must be an object")
    elif scenario in SCENARIOS:
        params = _check_params(scenario, params_raw, errors)

    output_dir = raw.get("output_dir", "relbohm-output")
    if not isinstance(output_dir, str) or not output_dir:
        errors.append("output_dir: must be a non-empty string")
    plots = raw.get("plots", False)
    if not isinstance(plots, bool):
        errors.append("plots: must be true or false")

    if errors:
        raise ConfigError(errors)

    resolved = {
        "scenario": scenario,
        "model": model.label,
        "state": copy.deepcopy(state),
        "scales": None if scales is None else {k: raw["scales"][k] for k in sorted(SCALE_KEYS)},
        "numerics": numerics,
        "params": params,
        "output_dir": output_dir,
        "plots": plots,
    }
    return ScenarioConfig(scenario, model, state, scales, numerics, params, output_dir, plots, resolved)


def load_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config: invalid JSON ({exc})"]) from None
    return parse_config(raw)


# ---------------------------------------------------------------------------
# unit handling and state construction


def _length(cfg: ScenarioConfig, value):
    if value is None or cfg.scales is None:
        return value
    return float(rescale(value, cfg.scales, "length"))


def _time(cfg: ScenarioConfig, value):
    if value is None or cfg.scales is None:
        return value
    return float(rescale(value, cfg.scales, "time"))


def _wavenumber(cfg: ScenarioConfig, value):
    if value is None or cfg.scales is None:
        return value
    return float(rescale(value, cfg.scales, "wavenumber"))


def _modes(raw: dict) -> dict:
    return {int(n): complex(c[0], c[1]) for n, c in raw.items()}


def build_state(cfg: ScenarioConfig, model: DispersionModel | None = None):
    desc = cfg.state
    model = cfg.model if model is None else model
    family = desc["family"]
    if family == "plane":
        amp = desc.get("amplitude", [1.0, 0.0])
        return PlaneWave(_wavenumber(cfg, desc["k"]), complex(*amp), model)
    if family == "two_wave":
        overall = desc.get("overall", [1.0, 0.0])
        return TwoWave(_wavenumber(cfg, desc["k1"]), _wavenumber(cfg, desc["k2"]), desc.get("rel_amp", 1.0),
                       desc.get("rel_phase", 0.0), complex(*overall), model)
    if family == "box":
        return BoxSuperposition.from_modes(_length(cfg, desc["box_length"]), _modes(desc["modes"]), model)
    if family == "gaussian":
        grid = _numerics_grid(cfg, required=True)
        center = _length(cfg, desc.get("center"))
        state = gaussian_packet(grid, _length(cfg, desc["sigma"]), center, _wavenumber(cfg, desc.get("k0", 0.0)), model)
        from .states import normalize

        return normalize(state)
    raise ValueError(f"unknown family {family!r}")


def _numerics_grid(cfg: ScenarioConfig, required: bool = False, length=None):
    length = length if length is not None else _length(cfg, cfg.numerics["domain_length"])
    if length is None:
        if required:
            raise ConfigError(["numerics.domain_length: required for this state/scenario"])
        return None
    return make_grid(cfg.numerics["grid_points"], length)


def _field_points(cfg: ScenarioConfig, state):
    if isinstance(state, GridState):
        return None
    if isinstance(state, BoxSuperposition):
        n = cfg.numerics["grid_points"]
        return np.linspace(0.0, state.box_length, n + 1)[1:-1]
    return _numerics_grid(cfg, required=True)


# ---------------------------------------------------------------------------
# output


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _csv_bytes(columns, rows) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue().encode("utf-8")


class _Writer:
    """Collects outputs and writes each one atomically (temp file + rename)."""

    def __init__(self, root: Path):
        self.root = root
        self.files: dict[str, str] = {}

    def write(self, name: str, data: bytes):
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def table(self, name: str, columns, rows):
        self.write(name, _csv_bytes(columns, rows))

    def plot(self, name: str, series, xlabel: str, ylabel: str):
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        plt.rcParams["svg.hashsalt"] = "relbohm"
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, (x, y) in series.items():
            ax.plot(x, y, label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if len(series) > 1:
            ax.legend()
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
        self.write(name, buf.getvalue())


# ---------------------------------------------------------------------------
# scenarios


def _run_trajectories(cfg, out: _Writer, diagnostics):
    state = build_state(cfg)
    p = cfg.params
    t0 = _time(cfg, p["t_start"])
    t1 = _time(cfg, p["t_end"])
    if t1 is None:
        period = state.beat_period()
        if period is None:
            raise ConfigError(["params.t_end: required when the state has no beat period"])
        t1 = t0 + period
    step = _time(cfg, cfg.numerics["step"])
    series = {}
    for i, x0 in enumerate(p["x0"]):
        traj = integrate_trajectory(state, _length(cfg, x0), (t0, t1), cfg.model, step=step,
                                    log_density=p["log_density"])
        if p["log_density"]:
            rows = zip(traj.times, traj.positions, traj.velocities, traj.log_density)
            out.table(f"trajectory_{i:03d}.csv", CSV_COLUMNS["trajectory_log"], rows)
        else:
            out.table(f"trajectory_{i:03d}.csv", CSV_COLUMNS["trajectory"],
                      zip(traj.times, traj.positions, traj.velocities))
        diagnostics[f"trajectory_{i:03d}"] = {"truncated": traj.truncated, "events": len(traj.diagnostics)}
        series[f"x0={x0}"] = (traj.times, traj.positions)
    if cfg.plots:
        out.plot("trajectories.svg", series, "t", "x")


def _figure1_single(l, modes, x0_fraction, model, step):
    nonrel = DispersionModel(1)
    box_length = float(l)
    rel_state = BoxSuperposition.from_modes(box_length, modes, model)
    nr_state = BoxSuperposition.from_modes(box_length, modes, nonrel)
    period = nr_state.beat_period()
    dt = period / 2000 if step is None else step
    x0 = x0_fraction * box_length
    rel = integrate_trajectory(rel_state, x0, (0.0, period), model, step=dt)
    nr = integrate_trajectory(nr_state, x0, (0.0, period), nonrel, step=dt)
    n = min(rel.positions.size, nr.positions.size)
    gap = float(np.max(np.abs(rel.positions[:n] - nr.positions[:n])))
    return {
        "l": l,
        "box_length": box_length,
        "beat_period": period,
        "max_gap": gap,
        "normalized_gap": gap / box_length,
        "relativistic": rel,
        "nonrelativistic": nr,
    }


def figure1_gaps(l_values, modes, x0_fraction=0.5, model: DispersionModel = EXACT, step=None, threads: int = 1):
    """Relativistic and nonrelativistic box trajectories for each box size ``l``.

    Both trajectories start at ``x0_fraction * l`` and run for one
    nonrelativistic beat period on a common time grid (period / 2000 unless
    ``step`` is given). The gap is the sup-norm position difference divided
    by the box length.
    """
    def one(l):
        return _figure1_single(l, modes, x0_fraction, model, step)

    if threads > 1 and len(l_values) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, l_values))
    return [one(l) for l in l_values]


def _run_figure1(cfg, out: _Writer, diagnostics):
    p = cfg.params
    results = figure1_gaps(p["l_values"], _modes(p["modes"]), p["x0_fraction"], cfg.model,
                           _time(cfg, cfg.numerics["step"]), cfg.numerics["threads"])
    rows = []
    series = {}
    for r in results:
        tag = _fmt(r["l"])
        for kind in ("relativistic", "nonrelativistic"):
            tr = r[kind]
            out.table(f"figure1_l{tag}_{kind}.csv", CSV_COLUMNS["figure1"],
                      zip(tr.times, tr.positions, tr.velocities))
            series[f"l={tag} {kind}"] = (tr.times / r["beat_period"], tr.positions / r["box_length"])
        rows.append([r["l"], r["box_length"], r["beat_period"], r["max_gap"], r["normalized_gap"]])
    out.table("figure1_gaps.csv", CSV_COLUMNS["figure1_gaps"], rows)
    gaps = [r["normalized_gap"] for r in results]
    diagnostics["normalized_gaps"] = gaps
    diagnostics["strictly_decreasing"] = bool(all(b < a for a, b in zip(gaps, gaps[1:])))
    if cfg.plots:
        out.plot("figure1.svg", series, "t / beat period", "x / L")


def _run_spectrum(cfg, out: _Writer, diagnostics):
    p = cfg.params
    length = p["box_length"]
    if length is None:
        if cfg.state is None or cfg.state.get("family") != "box":
            raise ConfigError(["params.box_length: required unless a box state is given"])
        length = cfg.state["box_length"]
    length = _length(cfg, length)
    trunc = DispersionModel(p["truncation"])
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationDivergenceWarning)
        for n in range(1, p["n_max"] + 1):
            k = n * np.pi / length
            rows.append([n, box_energy(n, length, EXACT), box_energy(n, length, trunc), 1.0 + 0.5 * k * k])
    diagnostics["truncation"] = trunc.label
    diagnostics["beyond_convergence_radius"] = [n for n in range(1, p["n_max"] + 1) if n * np.pi / length > 1]
    out.table("spectrum.csv", CSV_COLUMNS["spectrum"], rows)
    if cfg.plots:
        n = np.arange(1, p["n_max"] + 1)
        out.plot("spectrum.svg", {"exact": (n, [r[1] for r in rows]), trunc.label: (n, [r[2] for r in rows]),
                                  "nonrelativistic": (n, [r[3] for r in rows])}, "n", "E / m0 c^2")


def _run_qpotential(cfg, out: _Writer, diagnostics):
    state = build_state(cfg)
    t = _time(cfg, cfg.params["t"])
    points = _field_points(cfg, state)
    fields = bohm_fields(state, t, points, cfg.model)
    hj = hj_residual(state, t, points, cfg.model)
    rows = zip(fields.positions, fields.density, fields.grad_s, fields.velocity, fields.quantum_potential,
               fields.force, hj, fields.validity_mask)
    out.table("qpotential.csv", CSV_COLUMNS["qpotential"], rows)
    diagnostics["valid_fraction"] = float(np.mean(fields.validity_mask))
    diagnostics["max_hj_residual"] = float(np.nanmax(np.abs(hj)))
    if cfg.plots:
        out.plot("qpotential.svg", {"Q": (fields.positions, fields.quantum_potential)}, "x", "Q")


def _run_equilibrium(cfg, out: _Writer, diagnostics):
    state = build_state(cfg)
    p = cfg.params
    n = cfg.numerics
    t_end = _time(cfg, p["t_end"]) or state.beat_period()
    if t_end is None:
        raise ConfigError(["params.t_end: required for a single-mode state"])
    times = np.linspace(0.0, t_end, p["snapshots"])
    seed = n["seed"]
    x0 = sample_born(state, n["particles"], seed=seed)
    run = transport(x0, state, cfg.model, (0.0, t_end), step=_time(cfg, n["step"]), snapshot_times=times,
                    seed=seed, threads=n["threads"])
    bins = n["bins"] or default_bins(n["particles"])
    edges = np.linspace(0.0, state.box_length, bins + 1)
    keep = ~run.truncated
    defect_points = np.linspace(0.0, state.box_length, 513)[1:-1]
    rows = []
    for i, snap in enumerate(run.snapshots):
        born = born_probabilities(state, snap.time, edges)
        hist = histogram_probabilities(snap.positions[keep], edges)
        char = characteristic_probabilities(snap.positions[keep], snap.log_density[keep], edges)
        defect = continuity_defect(state, snap.time, defect_points, cfg.model)
        rows.append([snap.time, tv_distance(hist, born), run.excluded_fraction, tv_distance(hist, char),
                     float(np.nanmax(np.abs(defect)))])
        out.table(f"histograms/hist_{i:03d}.csv", CSV_COLUMNS["histogram"],
                  zip(edges[:-1], edges[1:], hist, born, char))
    out.table("equilibrium.csv", CSV_COLUMNS["equilibrium"], rows)
    diagnostics["excluded_fraction"] = run.excluded_fraction
    diagnostics["bins"] = bins
    diagnostics["max_tv_distance"] = max(r[1] for r in rows)
    if cfg.plots:
        out.plot("equilibrium.svg", {"TV distance": ([r[0] for r in rows], [r[1] for r in rows])}, "t", "epsilon")


def kernel_check_errors(sigmas, point_count=1024, k0=0.0, span=20.0, domain_length=None):
    """Relative L2 difference between kernel and spectral application per packet width."""
    errors = []
    for sigma in sigmas:
        grid = make_grid(point_count, domain_length or span * sigma)
        psi = gaussian_packet(grid, sigma, k0=k0).samples
        spectral = apply_hamiltonian(psi, grid, EXACT, "spectral")
        kernel = apply_hamiltonian(psi, grid, EXACT, "kernel")
        errors.append(float(np.linalg.norm(kernel - spectral) / np.linalg.norm(spectral)))
    return errors


def _run_kernel_check(cfg, out: _Writer, diagnostics):
    if not cfg.model.is_exact:
        raise ConfigError(["model: kernel-check requires the exact model"])
    p = cfg.params
    sigmas = [_length(cfg, s) for s in p["sigmas"]]
    errs = kernel_check_errors(sigmas, cfg.numerics["grid_points"], _wavenumber(cfg, p["k0"]), p["span"],
                               _length(cfg, cfg.numerics["domain_length"]))
    out.table("kernel_check.csv", CSV_COLUMNS["kernel-check"], zip(sigmas, errs))
    diagnostics["max_rel_L2_error"] = max(errs)


def _run_equivariance(cfg, out: _Writer, diagnostics):
    state = build_state(cfg)
    p = cfg.params
    cand = PowerLawDensity(**{"c": 1.0, "alpha": 2.0, **p["candidate"]})
    points = _field_points(cfg, state)
    residual = equivariance_residual(cand, state, _time(cfg, p["t"]), points, cfg.model)
    positions = state.grid.positions if isinstance(state, GridState) else (
        points.positions if hasattr(points, "positions") else points)
    out.table("equivariance.csv", CSV_COLUMNS["equivariance"], zip(positions, residual))
    diagnostics["max_abs_residual"] = float(np.nanmax(np.abs(residual)))


RUNNERS = {
    "trajectories": _run_trajectories,
    "figure1": _run_figure1,
    "spectrum": _run_spectrum,
    "qpotential": _run_qpotential,
    "equilibrium": _run_equilibrium,
    "kernel-check": _run_kernel_check,
    "equivariance": _run_equivariance,
}


def run_scenario(cfg: ScenarioConfig, output_dir=None) -> dict:
    """Run a validated scenario and write its outputs; returns the manifest.

    Raises
    ------
    NumericalFailure
        With ``code`` EXIT_NUMERICAL for all-masked fields or EXIT_DIVERGENT when
        a truncated model (N >= 2) is driven beyond its convergence radius.
    """
    root = Path(output_dir or os.environ.get(OUTPUT_ENV) or cfg.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    writer = _Writer(root)
    diagnostics: dict = {}
    with warnings.catch_warnings():
        warnings.simplefilter("error", TruncationDivergenceWarning)
        try:
            RUNNERS[cfg.scenario](cfg, writer, diagnostics)
        except TruncationDivergenceWarning as exc:
            raise NumericalFailure(str(exc), EXIT_DIVERGENT) from None
        except (ValueError, ArithmeticError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise NumericalFailure(str(exc), EXIT_NUMERICAL) from None
    manifest = {
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "scenario": cfg.scenario,
        "seed": cfg.numerics["seed"],
        "resolved_config": cfg.resolved,
        "outputs": dict(sorted(writer.files.items())),
        "diagnostics": diagnostics,
    }
    data = (json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n").encode("utf-8")
    writer.write("manifest.json", data)
    return manifest


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")
