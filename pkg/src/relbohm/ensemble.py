"""Particle ensembles: sampling, transport along the Bohmian flow, Born-rule deviation.

Two independent estimators of the transported density are provided: a
histogram of particle positions, and the density carried along each path by
``d(ln rho)/dt = -dv/dx`` (continuity equation along characteristics).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bohm import PathBundle, _jet_on, _sample_points, integrate_paths, local_fields, phase_time_derivative
from .dispersion import DispersionModel
from .states import BoxSuperposition, GridState, WaveState

__all__ = [
    "Snapshot",
    "EnsembleRun",
    "PowerLawDensity",
    "sample_from_density",
    "sample_born",
    "transport",
    "default_bins",
    "born_probabilities",
    "histogram_probabilities",
    "characteristic_probabilities",
    "tv_distance",
    "born_deviation",
    "continuity_defect",
    "equivariance_residual",
]


@dataclass
class Snapshot:
    time: float
    positions: np.ndarray
    log_density: np.ndarray | None


@dataclass
class EnsembleRun:
    seed: int | None
    particle_count: int
    snapshots: list
    model: DispersionModel
    state_ref: dict
    truncated: np.ndarray
    events: list = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    @property
    def excluded_fraction(self) -> float:
        return float(np.mean(self.truncated)) if self.truncated.size else 0.0

    def snapshot(self, t: float) -> Snapshot:
        times = self.times
        idx = np.flatnonzero(np.isclose(times, t, rtol=0, atol=1e-9 * max(1.0, abs(t))))
        if idx.size == 0:
            raise ValueError(f"no snapshot recorded at t={t}")
        return self.snapshots[int(idx[0])]


def describe_state(state: WaveState) -> dict:
    if isinstance(state, BoxSuperposition):
        return {
            "family": "box",
            "box_length": state.box_length,
            "modes": {str(n): [c.real, c.imag] for n, c in state.mode_coeffs},
            "model": state.model.label,
        }
    if isinstance(state, GridState):
        return {"family": "grid", "point_count": state.grid.point_count,
                "domain_length": state.grid.domain_length, "time": state.time, "model": state.model.label}
    return {"family": type(state).__name__, "model": state.model.label}


# ---------------------------------------------------------------------------
# sampling


def sample_from_density(density, edges, count: int | None = None, seed: int | None = None,
                        quantiles=None) -> np.ndarray:
    """Inverse-CDF sampling of a piecewise-constant density.

    Parameters
    ----------
    density : array_like, shape (M,)
        Non-negative density value in each cell.
    edges : array_like, shape (M + 1,)
        Increasing cell edges.
    count, seed : int
        Number of samples and seed of ``numpy.random.default_rng``.
    quantiles : array_like, optional
        Explicit quantile stream in [0, 1); overrides ``count``/``seed``.
    """
    density = np.asarray(density, dtype=float)
    edges = np.asarray(edges, dtype=float)
    if edges.shape != (density.size + 1,) or np.any(np.diff(edges) <= 0):
        raise ValueError("edges must be increasing with one more entry than density")
    if np.any(~np.isfinite(density)) or np.any(density < 0):
        raise ValueError("density must be finite and non-negative")
    cumulative = np.concatenate([[0.0], np.cumsum(density * np.diff(edges))])
    if cumulative[-1] <= 0:
        raise ValueError("density has zero total mass")
    cumulative /= cumulative[-1]
    if quantiles is None:
        if count is None or count < 1:
            raise ValueError("count must be a positive integer")
        quantiles = np.random.default_rng(seed).random(int(count))
    u = np.asarray(quantiles, dtype=float)
    # piecewise-linear inverse of the cumulative; empty cells never receive samples
    cell = np.clip(np.searchsorted(cumulative, u, side="right") - 1, 0, density.size - 1)
    mass = cumulative[cell + 1] - cumulative[cell]
    frac = np.where(mass > 0, (u - cumulative[cell]) / np.where(mass > 0, mass, 1.0), 0.5)
    return edges[cell] + frac * (edges[cell + 1] - edges[cell])


def _domain(state: WaveState, domain=None):
    if domain is not None:
        return float(domain[0]), float(domain[1])
    if isinstance(state, BoxSuperposition):
        return 0.0, state.box_length
    if isinstance(state, GridState):
        g = state.grid
        return g.origin, g.origin + g.domain_length
    raise ValueError("a finite domain is required for this state")


def sample_born(state: WaveState, count: int, seed: int | None = None, t: float = 0.0,
                cells: int = 8192, domain=None) -> np.ndarray:
    """Sample positions from |psi(x, t)|^2 on the state's domain."""
    lo, hi = _domain(state, domain)
    edges = np.linspace(lo, hi, cells + 1)
    centers = 0.5 * (edges[1:] + edges[:-1])
    density = np.abs(state.jet(centers, t).psi) ** 2
    return sample_from_density(density, edges, count, seed)


# ---------------------------------------------------------------------------
# transport


def transport(positions, state: WaveState, model: DispersionModel | None = None, t_span=(0.0, 1.0),
              step: float | None = None, snapshot_times=None, log_density0=None, seed: int | None = None,
              threads: int = 1, chunk_size: int = 65536) -> EnsembleRun:
    """Carry particles and their log-density along the Bohmian flow.

    ``log_density0`` defaults to ``ln|psi(x, t0)|^2`` (quantum equilibrium).
    Parallel and serial execution give bit-identical results because every
    particle is integrated independently of the others.
    """
    model = state.model if model is None else model
    x0 = np.array(positions, dtype=float, ndmin=1)
    t0, t1 = float(t_span[0]), float(t_span[1])
    lo_hi = getattr(state, "domain", None)
    if lo_hi is not None and (np.any(x0 < lo_hi[0]) or np.any(x0 > lo_hi[1])):
        raise ValueError("all positions must lie inside the state's domain")
    if snapshot_times is None:
        snapshot_times = [t0, t1]
    times = np.unique(np.concatenate([[t0], np.asarray(snapshot_times, float), [t1]]))
    times = times[(times >= t0) & (times <= t1)]
    if log_density0 is None:
        with np.errstate(divide="ignore"):
            log_density0 = np.log(np.abs(state.jet(x0, t0).psi) ** 2)
    log_density0 = np.array(log_density0, dtype=float, ndmin=1)

    bounds = list(range(0, x0.size, max(1, int(chunk_size)))) + [x0.size]
    pieces = [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]

    def work(piece) -> PathBundle:
        a, b = piece
        return integrate_paths(state, x0[a:b], times, model, step=step, log_density0=log_density0[a:b])

    if threads and threads > 1 and len(pieces) > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            bundles = list(pool.map(work, pieces))
    else:
        bundles = [work(p) for p in pieces]

    positions_all = np.concatenate([b.positions for b in bundles], axis=1)
    logs_all = np.concatenate([b.log_density for b in bundles], axis=1)
    truncated = np.concatenate([b.truncated for b in bundles])
    events = [e for b in bundles for e in b.events]
    snaps = [Snapshot(float(t), positions_all[i], logs_all[i]) for i, t in enumerate(times)]
    return EnsembleRun(seed, x0.size, snaps, model, describe_state(state), truncated, events)


# ---------------------------------------------------------------------------
# densities and distances


def default_bins(particle_count: int) -> int:
    return int(min(256, math.ceil(math.sqrt(particle_count))))


def born_probabilities(state: WaveState, t: float, edges, order: int = 8) -> np.ndarray:
    """Probability of each bin under |psi_t|^2 (Gauss-Legendre per bin), normalised."""
    edges = np.asarray(edges, dtype=float)
    nodes, weights = np.polynomial.legendre.leggauss(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = mid[:, None] + half[:, None] * nodes[None, :]
    density = np.abs(state.jet(x.ravel(), t).psi).reshape(x.shape) ** 2
    p = (density @ weights) * half
    return p / p.sum()


def histogram_probabilities(positions, edges) -> np.ndarray:
    counts, _ = np.histogram(positions, bins=edges)
    total = counts.sum()
    if total == 0:
        raise ValueError("no particles fall inside the histogram range")
    return counts / total


def characteristic_probabilities(positions, log_density, edges) -> np.ndarray:
    """Bin probabilities from the density values carried along characteristics.

    Each bin takes the median of ``exp(log_density)`` over its particles; the
    median ignores the rare paths that graze a node and carry a corrupted value.
    """
    positions = np.asarray(positions)
    log_density = np.asarray(log_density)
    ok = np.isfinite(log_density)
    positions, log_density = positions[ok], log_density[ok]
    idx = np.searchsorted(edges, positions, side="right") - 1
    inside = (idx >= 0) & (idx < len(edges) - 1)
    idx, log_density = idx[inside], log_density[inside]
    order = np.lexsort((log_density, idx))
    idx, log_density = idx[order], log_density[order]
    nbins = len(edges) - 1
    counts = np.bincount(idx, minlength=nbins)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    median = np.zeros(nbins)
    filled = counts > 0
    lo = starts[filled] + (counts[filled] - 1) // 2
    hi = starts[filled] + counts[filled] // 2
    median[filled] = 0.5 * (np.exp(log_density[lo]) + np.exp(log_density[hi]))
    p = median * np.diff(edges)
    return p / p.sum()


def tv_distance(p, q) -> float:
    """Total-variation distance between two probability vectors."""
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))


def born_deviation(run: EnsembleRun, state: WaveState, t: float, bins: int | None = None,
                   domain=None) -> float:
    """TV distance between the particle histogram at ``t`` and |psi_t|^2.

    ``state`` is the wave function at time zero of the run's clock.
    Truncated particles are excluded.
    """
    snap = run.snapshot(t)
    keep = ~run.truncated
    positions = snap.positions[keep]
    if positions.size == 0:
        raise ValueError("snapshot contains no usable particles")
    lo, hi = _domain(state, domain)
    edges = np.linspace(lo, hi, (bins or default_bins(run.particle_count)) + 1)
    return tv_distance(histogram_probabilities(positions, edges), born_probabilities(state, t, edges))


# ---------------------------------------------------------------------------
# continuity and equivariance diagnostics


def continuity_defect(state: WaveState, t: float, grid=None, model: DispersionModel | None = None) -> np.ndarray:
    """``d|psi|^2/dt + d(|psi|^2 v)/dx`` with d|psi|^2/dt taken from the wave equation.

    Vanishes identically for the nonrelativistic model; NaN near nodes.
    """
    model = state.model if model is None else model
    positions, _ = _sample_points(state, grid)
    jet = _jet_on(state, positions, t, model=model)
    f = local_fields(jet, model, state.density_scale(t))
    if not f["valid"].any():
        raise ValueError("every sample lies at a node; fields are undefined")
    conj = np.conj(jet.psi)
    rate = 2.0 * np.imag(conj * jet.hpsi)
    # d(|psi|^2 v)/dx = 2 Re(psi* psi') v + |psi|^2 v'(p) dp/dx
    flux_x = 2.0 * np.real(conj * jet.dpsi) * f["velocity"] + f["density"] * f["velocity_x"]
    return np.where(f["valid"], rate + flux_x, np.nan)


@dataclass(frozen=True)
class PowerLawDensity:
    """Candidate density ``c * R**alpha`` (independent of S)."""

    c: float = 1.0
    alpha: float = 2.0

    def __call__(self, amplitude, phase):
        return self.c * np.asarray(amplitude) ** self.alpha

    def d_amplitude(self, amplitude, phase):
        return self.c * self.alpha * np.asarray(amplitude) ** (self.alpha - 1.0)

    def d_phase(self, amplitude, phase):
        return np.zeros_like(np.asarray(amplitude, dtype=float))


def _candidate_derivatives(candidate: Callable, amplitude, phase, rel_step: float = 1e-6):
    rho = np.asarray(candidate(amplitude, phase), dtype=float)
    if isinstance(candidate, PowerLawDensity):
        return rho, candidate.d_amplitude(amplitude, phase), candidate.d_phase(amplitude, phase)
    hr = rel_step * np.maximum(np.abs(amplitude), 1.0)
    hs = rel_step
    d_r = (np.asarray(candidate(amplitude + hr, phase)) - np.asarray(candidate(amplitude - hr, phase))) / (2 * hr)
    d_s = (np.asarray(candidate(amplitude, phase + hs)) - np.asarray(candidate(amplitude, phase - hs))) / (2 * hs)
    return rho, d_r, d_s


def equivariance_residual(candidate, state: WaveState, t: float, grid=None,
                          model: DispersionModel | None = None) -> np.ndarray:
    """Residual of the continuity equation for a local density ``rho(R, S)``.

    ``(dR/dt + v dR/dx) rho_R + (dS/dt + v dS/dx) rho_S + rho dv/dx`` with the
    time derivatives of R and S taken from the wave equation of ``state``.
    ``candidate`` is a :class:`PowerLawDensity` (analytic derivatives) or any
    callable ``rho(R, S)`` (central finite differences).
    """
    model = state.model if model is None else model
    positions, _ = _sample_points(state, grid)
    jet = _jet_on(state, positions, t, model=model)
    f = local_fields(jet, model, state.density_scale(t))
    valid = f["valid"]
    if not valid.any():
        raise ValueError("every sample lies at a node; fields are undefined")
    amplitude = np.abs(jet.psi)
    phase = np.angle(jet.psi)
    rho, rho_r, rho_s = _candidate_derivatives(candidate, amplitude, phase)
    if not (np.all(np.isfinite(rho[valid])) and np.all(np.isfinite(rho_r[valid]))
            and np.all(np.isfinite(rho_s[valid]))):
        raise ValueError("candidate density is undefined at some sampled (R, S)")
    safe_amp = np.where(valid, amplitude, 1.0)
    r_t = amplitude * f["log_amplitude_rate"]
    r_x = np.real(np.conj(jet.psi) * jet.dpsi) / safe_amp
    s_t = f["phase_rate"]
    s_x = f["grad_s"]
    v = f["velocity"]
    residual = (r_t + v * r_x) * rho_r + (s_t + v * s_x) * rho_s + rho * f["velocity_x"]
    return np.where(valid, residual, np.nan)


def amplitude_rate_check(state: WaveState, t: float, grid=None, delta: float = 1e-4) -> float:
    """Max |dR/dt - R Im[(H psi)/psi]| with dR/dt from central time differences."""
    positions, _ = _sample_points(state, grid)
    jet = _jet_on(state, positions, t)
    f = local_fields(jet, state.model, state.density_scale(t))
    if isinstance(state, GridState):
        after, before = np.abs(state.samples_at(t + delta)), np.abs(state.samples_at(t - delta))
    else:
        after, before = np.abs(state.jet(positions, t + delta).psi), np.abs(state.jet(positions, t - delta).psi)
    numeric = (after - before) / (2 * delta)
    analytic = np.abs(jet.psi) * f["log_amplitude_rate"]
    return float(np.nanmax(np.abs(numeric - analytic)))


__all__ += ["describe_state", "amplitude_rate_check", "phase_time_derivative"]
