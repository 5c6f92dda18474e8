"""Pilot-wave layer: guidance velocities, trajectories, quantum potential and force.

The quantum potential is ``Q = zeta - E(grad S)`` with ``zeta = Re[(H psi)/psi]``,
so that ``dS/dt + E(grad S) + Q = 0`` and ``d(grad S)/dt = -dQ/dx`` along the
flow ``v = E'(grad S)`` for every dispersion model.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import SpectralGrid
from .dispersion import DispersionModel, _warn_if_out_of_band
from .states import (
    NODE_FLOOR,
    BoxSuperposition,
    GridState,
    Jet,
    NodeSingularityError,
    PlaneWave,
    TwoWave,
    WaveState,
)

__all__ = [
    "DT_MIN",
    "STEPS_PER_PERIOD",
    "HJ_TIME_STEP",
    "Trajectory",
    "BohmFields",
    "VelocityField",
    "velocity_field",
    "default_step",
    "integrate_trajectory",
    "integrate_paths",
    "local_fields",
    "bohm_fields",
    "check_spectrum",
    "quantum_potential",
    "quantum_force",
    "hj_residual",
]

DT_MIN = 1e-6
STEPS_PER_PERIOD = 2000
HJ_TIME_STEP = 1e-4


@dataclass
class Trajectory:
    times: np.ndarray
    positions: np.ndarray
    model: DispersionModel
    log_density: np.ndarray | None = None
    velocities: np.ndarray | None = None
    diagnostics: list = field(default_factory=list)

    @property
    def truncated(self) -> bool:
        return any(event["kind"] == "truncated" for event in self.diagnostics)


@dataclass
class BohmFields:
    positions: np.ndarray
    time: float
    density: np.ndarray
    grad_s: np.ndarray
    velocity: np.ndarray
    quantum_potential: np.ndarray
    force: np.ndarray
    validity_mask: np.ndarray
    grid: SpectralGrid | None = None


# ---------------------------------------------------------------------------
# local kinematics from a jet


def _valid(jet: Jet, scale: float):
    density = np.abs(jet.psi) ** 2
    valid = (density > 0) & (density >= NODE_FLOOR * scale)
    return density, valid, np.where(valid, density, 1.0)


def local_fields(jet: Jet, model: DispersionModel, scale: float) -> dict:
    """All pointwise Bohmian quantities derivable from a jet.

    Returned arrays are NaN outside ``valid``.
    """
    density, valid, safe = _valid(jet, scale)
    conj = np.conj(jet.psi)
    psi = np.where(valid, jet.psi, 1.0)
    current = np.where(valid, np.imag(conj * jet.dpsi), 0.0)
    grad_s = current / safe
    # d(grad S)/dx
    grad_s_x = np.imag(conj * jet.d2psi) / safe - 2.0 * current * np.real(conj * jet.dpsi) / safe**2
    zeta = np.real(conj * jet.hpsi) / safe
    zeta_x = np.real((jet.dhpsi - jet.hpsi / psi * jet.dpsi) / psi)
    velocity = model.velocity(grad_s)
    velocity_x = model.velocity_slope(grad_s) * grad_s_x
    kinetic = model.energy(grad_s)
    out = {
        "density": density,
        "grad_s": grad_s,
        "grad_s_x": grad_s_x,
        "velocity": velocity,
        "velocity_x": velocity_x,
        "zeta": zeta,
        "kinetic": kinetic,
        "quantum_potential": zeta - kinetic,
        "force": -(zeta_x - velocity * grad_s_x),
        "log_amplitude_rate": np.imag(conj * jet.hpsi) / safe,  # (dR/dt) / R
        "phase_rate": -zeta,  # dS/dt
    }
    for key, value in out.items():
        if key != "density":
            out[key] = np.where(valid, value, np.nan)
    out["valid"] = valid
    return out


# ---------------------------------------------------------------------------
# velocity fields


class VelocityField:
    """Callable ``x -> v(x, t)`` for a fixed state, time and guidance model."""

    def __init__(self, state: WaveState, t: float, model: DispersionModel):
        self.state = state
        self.time = t
        self.model = model
        self.snapshot = None
        if isinstance(state, GridState):
            fields = local_fields(state.grid_jet(t), model, state.density_scale(t))
            self.snapshot = fields["velocity"]

    def __call__(self, x):
        jet = self.state.jet(x, self.time)
        density = np.abs(jet.psi) ** 2
        if np.any(density < NODE_FLOOR * self.state.density_scale(self.time)):
            raise NodeSingularityError("velocity requested at a node of psi")
        grad_s = np.imag(np.conj(jet.psi) * jet.dpsi) / density
        v = self.model.velocity(grad_s)
        return float(v) if np.ndim(v) == 0 else v


def velocity_field(state: WaveState, t: float, model: DispersionModel | None = None) -> VelocityField:
    return VelocityField(state, t, state.model if model is None else model)


# ---------------------------------------------------------------------------
# trajectory integration


def default_step(state: WaveState, duration: float) -> float:
    period = state.beat_period()
    if period is None:
        period = abs(duration) if duration else 1.0
    return period / STEPS_PER_PERIOD


class _Flow:
    """Vectorised right-hand side (v, -dv/dx) with node detection."""

    def __init__(self, state: WaveState, model: DispersionModel, with_log_density: bool):
        self.state = state
        self.model = model
        self.with_log_density = with_log_density
        check_spectrum(state, model)
        self._scale_cache: dict[float, float] = {}

    def _scale(self, t):
        scale = self._scale_cache.get(t)
        if scale is None:
            scale = self.state.density_scale(t)
            if len(self._scale_cache) > 64:
                self._scale_cache.clear()
            self._scale_cache[t] = scale
        return scale

    def __call__(self, x, t):
        if hasattr(self.state, "flow_terms"):
            density, current, real_part, second = self.state.flow_terms(x, t, self.with_log_density)
        else:
            jet = self.state.jet(x, t)
            conj = np.conj(jet.psi)
            density = np.abs(jet.psi) ** 2
            current = np.imag(conj * jet.dpsi)
            real_part = np.real(conj * jet.dpsi)
            second = np.imag(conj * jet.d2psi) if self.with_log_density else None
        valid = density >= NODE_FLOOR * self._scale(t)
        safe = np.where(valid, density, 1.0)
        grad_s = current / safe
        v = self.model.velocity(grad_s)
        if not self.with_log_density:
            return v, None, valid
        grad_s_x = second / safe - 2.0 * current * real_part / (safe * safe)
        return v, -self.model.velocity_slope(grad_s) * grad_s_x, valid

    def rk4(self, x, logd, t, dt):
        v1, l1, ok1 = self(x, t)
        v2, l2, ok2 = self(x + 0.5 * dt * v1, t + 0.5 * dt)
        v3, l3, ok3 = self(x + 0.5 * dt * v2, t + 0.5 * dt)
        v4, l4, ok4 = self(x + dt * v3, t + dt)
        ok = ok1 & ok2 & ok3 & ok4
        ok &= np.isfinite(v1) & np.isfinite(v2) & np.isfinite(v3) & np.isfinite(v4)
        x_new = x + (dt / 6.0) * (v1 + 2.0 * v2 + 2.0 * v3 + v4)
        if logd is None:
            return x_new, None, ok
        l_new = logd + (dt / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4)
        ok &= np.isfinite(l_new)
        return x_new, l_new, ok


def _advance(flow: _Flow, x, logd, t, dt, dt_min, events):
    """One step of size dt; rejected particles are retried with two half steps."""
    x_new, l_new, ok = flow.rk4(x, logd, t, dt)
    failed = np.zeros(x.shape, bool)
    if ok.all():
        return x_new, l_new, failed
    bad = np.flatnonzero(~ok)
    if 0.5 * dt < dt_min:
        x_new[bad] = x[bad]
        if l_new is not None:
            l_new[bad] = logd[bad]
        failed[bad] = True
        return x_new, l_new, failed
    events.append({"kind": "step_rejected", "time": float(t), "dt": float(dt), "count": int(bad.size)})
    sub_l = None if logd is None else logd[bad]
    xa, la, fa = _advance(flow, x[bad], sub_l, t, 0.5 * dt, dt_min, events)
    go = np.flatnonzero(~fa)
    if go.size:
        xb, lb, fb = _advance(flow, xa[go], None if la is None else la[go], t + 0.5 * dt, 0.5 * dt, dt_min, events)
        xa[go] = xb
        if la is not None:
            la[go] = lb
        fa[go] = fb
    x_new[bad] = xa
    if l_new is not None:
        l_new[bad] = la
    failed[bad] = fa
    return x_new, l_new, failed


@dataclass
class PathBundle:
    """Positions of many particles at a sequence of record times."""

    times: np.ndarray
    positions: np.ndarray  # (n_times, n_particles)
    log_density: np.ndarray | None
    truncated: np.ndarray  # bool per particle
    truncation_time: np.ndarray  # NaN if never truncated
    events: list


def _step_count(span: float, step: float) -> int:
    return max(1, int(np.ceil(abs(span) / step - 1e-9)))


def integrate_paths(state: WaveState, x0, record_times, model: DispersionModel | None = None,
                    step: float | None = None, log_density0=None, dt_min: float = DT_MIN) -> PathBundle:
    """Integrate many particles with fixed-step RK4, recording at ``record_times``.

    ``record_times[0]`` is the initial time. Between consecutive record times
    the interval is split into equal steps no longer than ``step``. Truncated
    particles stay at their last position.
    """
    model = state.model if model is None else model
    record_times = np.asarray(record_times, dtype=float)
    if record_times.ndim != 1 or record_times.size < 1 or np.any(np.diff(record_times) <= 0):
        raise ValueError("record_times must be a strictly increasing 1D sequence")
    x = np.array(x0, dtype=float, ndmin=1)
    if step is None:
        step = default_step(state, record_times[-1] - record_times[0])
    if not step > 0:
        raise ValueError("step must be positive")
    with_log = log_density0 is not None
    logd = np.array(log_density0, dtype=float, ndmin=1) if with_log else None
    if with_log and logd.shape != x.shape:
        raise ValueError("log_density0 must match x0")

    flow = _Flow(state, model, with_log)
    n_rec = record_times.size
    positions = np.empty((n_rec, x.size))
    logs = np.empty((n_rec, x.size)) if with_log else None
    positions[0] = x
    if with_log:
        logs[0] = logd
    truncated = np.zeros(x.size, bool)
    trunc_time = np.full(x.size, np.nan)
    events: list = []

    for r in range(1, n_rec):
        t0, t1 = record_times[r - 1], record_times[r]
        n_steps = _step_count(t1 - t0, step)
        dt = (t1 - t0) / n_steps
        for i in range(n_steps):
            active = np.flatnonzero(~truncated)
            if active.size == 0:
                break
            t = t0 + i * dt
            sub_l = logd[active] if with_log else None
            xn, ln, failed = _advance(flow, x[active], sub_l, t, dt, dt_min, events)
            x[active] = xn
            if with_log:
                logd[active] = ln
            if failed.any():
                hit = active[failed]
                truncated[hit] = True
                trunc_time[hit] = t
                events.append({"kind": "truncated", "time": float(t), "count": int(hit.size)})
        positions[r] = x
        if with_log:
            logs[r] = logd
    return PathBundle(record_times, positions, logs, truncated, trunc_time, events)


def integrate_trajectory(state: WaveState, x0: float, t_span, model: DispersionModel | None = None,
                         step: float | None = None, log_density: bool = False,
                         dt_min: float = DT_MIN) -> Trajectory:
    """Single Bohmian trajectory recorded at every RK4 step.

    If a node cannot be passed even with step ``dt_min`` the trajectory ends
    there and a ``"truncated"`` event is logged in ``diagnostics``.
    """
    model = state.model if model is None else model
    t0, t1 = (float(v) for v in t_span)
    if not t1 > t0:
        raise ValueError("t_span must be increasing")
    if step is None:
        step = default_step(state, t1 - t0)
    if not step > 0:
        raise ValueError("step must be positive")
    domain = getattr(state, "domain", None)
    if domain is not None and not (domain[0] <= x0 <= domain[1]):
        raise ValueError(f"x0={x0} outside the state's domain {domain}")
    n_steps = _step_count(t1 - t0, step)
    times = np.linspace(t0, t1, n_steps + 1)
    log0 = None
    if log_density:
        log0 = np.log(np.abs(state.jet(np.array([x0]), t0).psi) ** 2)
    bundle = integrate_paths(state, [x0], times, model, step=(t1 - t0) / n_steps,
                             log_density0=log0, dt_min=dt_min)
    keep = times.size
    if bundle.truncated[0]:
        keep = int(np.searchsorted(times, bundle.truncation_time[0], side="right"))
    positions = bundle.positions[:keep, 0]
    velocities = np.full(keep, np.nan)
    flow = _Flow(state, model, False)
    for i in range(keep):
        v, _, valid = flow(positions[i:i + 1], times[i])
        if valid[0]:
            velocities[i] = v[0]
    return Trajectory(
        times=times[:keep],
        positions=positions,
        model=model,
        log_density=None if bundle.log_density is None else bundle.log_density[:keep, 0],
        velocities=velocities,
        diagnostics=bundle.events,
    )


# ---------------------------------------------------------------------------
# fields on a grid


def _sample_points(state: WaveState, grid):
    if isinstance(state, GridState):
        if grid is not None and not (isinstance(grid, SpectralGrid) and grid == state.grid):
            raise ValueError("grid states are evaluated on their own grid")
        return state.grid.positions, state.grid
    if grid is None:
        raise ValueError("a grid or array of positions is required for analytic states")
    if isinstance(grid, SpectralGrid):
        return grid.positions, grid
    return np.asarray(grid, dtype=float), None


def check_spectrum(state: WaveState, model: DispersionModel | None = None) -> bool:
    """Warn if a truncated model (N >= 2) meets wavenumbers beyond 1 in ``state``.

    Both the state's own model (which generates its time evolution) and the
    guidance ``model`` are checked. Returns True when everything is in band.
    """
    ok = True
    for m in {state.model, state.model if model is None else model}:
        if m.order is None or m.order == 1:
            continue
        if isinstance(state, GridState):
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                _warn_if_out_of_band(np.fft.fft(state.samples), state.grid, m)
            for w in caught:
                warnings.warn(w.message, w.category, stacklevel=2)
            ok = ok and not caught
            continue
        if isinstance(state, PlaneWave):
            ks = np.array([state.k])
        elif isinstance(state, TwoWave):
            ks = np.array([state.k1, state.k2])
        else:
            ks = state.wavenumbers
        ok = m.check_band(ks) and ok
    return ok


def _jet_on(state: WaveState, positions, t, method: str = "spectral", model: DispersionModel | None = None) -> Jet:
    check_spectrum(state, model)
    if isinstance(state, GridState):
        jet = state.grid_jet(t)
        if method == "kernel":
            from .core import spectral_derivative
            from .dispersion import apply_hamiltonian

            hpsi = apply_hamiltonian(jet.psi, state.grid, state.model, method="kernel")
            jet = jet._replace(hpsi=hpsi, dhpsi=spectral_derivative(hpsi, state.grid))
        return jet
    if isinstance(state, BoxSuperposition):
        from .states import _check_domain

        _check_domain(state, positions)
    return state.jet(positions, t)


def bohm_fields(state: WaveState, t: float, grid=None, model: DispersionModel | None = None,
                method: str = "spectral") -> BohmFields:
    """Density, phase gradient, velocity, quantum potential and force on a grid.

    ``grid`` may be a :class:`SpectralGrid` or an array of positions; grid
    states always use their own grid. Entries near nodes are NaN and
    excluded from ``validity_mask``.
    """
    model = state.model if model is None else model
    positions, g = _sample_points(state, grid)
    jet = _jet_on(state, positions, t, method, model)
    f = local_fields(jet, model, state.density_scale(t))
    if not f["valid"].any():
        raise ValueError("every sample lies at a node; fields are undefined")
    return BohmFields(
        positions=positions,
        time=t,
        density=f["density"],
        grad_s=f["grad_s"],
        velocity=f["velocity"],
        quantum_potential=f["quantum_potential"],
        force=f["force"],
        validity_mask=f["valid"],
        grid=g,
    )


def quantum_potential(state: WaveState, t: float, grid=None, model: DispersionModel | None = None,
                      method: str = "spectral") -> np.ndarray:
    """``Q = Re[(H psi)/psi] - E(grad S)``; NaN near nodes."""
    return bohm_fields(state, t, grid, model, method).quantum_potential


def quantum_force(state: WaveState, t: float, grid=None, model: DispersionModel | None = None,
                  method: str = "spectral") -> np.ndarray:
    """``F = -dQ/dx`` from spectrally (or analytically) differentiated psi and H psi."""
    return bohm_fields(state, t, grid, model, method).force


def phase_time_derivative(state: WaveState, positions, t: float, delta: float = HJ_TIME_STEP):
    """dS/dt from the principal-branch phase of psi(t+delta)/psi(t-delta)."""
    if isinstance(state, GridState):
        after = state.samples_at(t + delta)
        before = state.samples_at(t - delta)
    else:
        after = state.jet(positions, t + delta).psi
        before = state.jet(positions, t - delta).psi
    return np.angle(after * np.conj(before)) / (2.0 * delta)


def hj_residual(state: WaveState, t: float, grid=None, model: DispersionModel | None = None,
                delta: float = HJ_TIME_STEP) -> np.ndarray:
    """``dS/dt + E(grad S) + Q`` with dS/dt from central time differences."""
    model = state.model if model is None else model
    positions, _ = _sample_points(state, grid)
    jet = _jet_on(state, positions, t, model=model)
    f = local_fields(jet, model, state.density_scale(t))
    if not f["valid"].any():
        raise ValueError("every sample lies at a node; fields are undefined")
    ds_dt = phase_time_derivative(state, positions, t, delta)
    return np.where(f["valid"], ds_dt + f["kinetic"] + f["quantum_potential"], np.nan)
