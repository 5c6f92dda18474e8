"""Wave-function families and their local derivatives.

Analytic families carry exact ``exp(-i E t)`` phases; grid states are
propagated spectrally. Every family exposes a :class:`Jet` -- psi, its first
two spatial derivatives, H psi and d(H psi)/dx -- from which all Bohmian
fields are assembled without differentiating a phase.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Union

import numpy as np

from .core import SpectralGrid, discrete_norm
from .dispersion import EXACT, DispersionModel, multiplier

__all__ = [
    "NODE_FLOOR",
    "NodeSingularityError",
    "Jet",
    "PlaneWave",
    "TwoWave",
    "BoxSuperposition",
    "GridState",
    "WaveState",
    "eval_psi",
    "eval_grad_s",
    "box_energy",
    "normalize",
    "gaussian_packet",
]

NODE_FLOOR = 1e-12


class NodeSingularityError(ArithmeticError):
    """The phase gradient was requested too close to a node of psi."""


class Jet(NamedTuple):
    psi: np.ndarray
    dpsi: np.ndarray
    d2psi: np.ndarray
    hpsi: np.ndarray
    dhpsi: np.ndarray


@dataclass(frozen=True)
class PlaneWave:
    k: float
    amplitude: complex = 1.0
    model: DispersionModel = EXACT

    domain = None

    def jet(self, x, t) -> Jet:
        x = np.asarray(x, dtype=float)
        omega = self.model.energy(self.k)
        psi = self.amplitude * np.exp(1j * (self.k * x - omega * t))
        dpsi = 1j * self.k * psi
        hpsi = omega * psi
        return Jet(psi, dpsi, -self.k**2 * psi, hpsi, 1j * self.k * hpsi)

    def density_scale(self, t) -> float:
        return abs(self.amplitude) ** 2

    def beat_period(self) -> float | None:
        return None


@dataclass(frozen=True)
class TwoWave:
    """``overall * (exp(i(k1 x - w1 t)) + rel_amp exp(i rel_phase) exp(i(k2 x - w2 t)))``."""

    k1: float
    k2: float
    rel_amp: float = 1.0
    rel_phase: float = 0.0
    overall: complex = 1.0
    model: DispersionModel = EXACT

    domain = None

    def __post_init__(self):
        if self.rel_amp < 0:
            raise ValueError("rel_amp must be non-negative")

    def _parts(self, x, t):
        x = np.asarray(x, dtype=float)
        w1 = self.model.energy(self.k1)
        w2 = self.model.energy(self.k2)
        b = self.rel_amp * np.exp(1j * self.rel_phase)
        first = self.overall * np.exp(1j * (self.k1 * x - w1 * t))
        second = self.overall * b * np.exp(1j * (self.k2 * x - w2 * t))
        return first, second, w1, w2

    def jet(self, x, t) -> Jet:
        first, second, w1, w2 = self._parts(x, t)
        k1, k2 = self.k1, self.k2
        return Jet(
            first + second,
            1j * (k1 * first + k2 * second),
            -(k1**2 * first + k2**2 * second),
            w1 * first + w2 * second,
            1j * (k1 * w1 * first + k2 * w2 * second),
        )

    def relative_phase(self, x, t):
        w1 = self.model.energy(self.k1)
        w2 = self.model.energy(self.k2)
        return (self.k2 - self.k1) * np.asarray(x) - (w2 - w1) * t + self.rel_phase

    def closed_form_grad_s(self, x, t):
        """Phase gradient from the interference formula (independent of the jet)."""
        b = self.rel_amp
        c = np.cos(self.relative_phase(x, t))
        return (self.k1 + b * b * self.k2 + b * (self.k1 + self.k2) * c) / (1.0 + b * b + 2.0 * b * c)

    def density_scale(self, t) -> float:
        return abs(self.overall) ** 2 * (1.0 + self.rel_amp) ** 2

    def beat_period(self) -> float | None:
        dw = abs(self.model.energy(self.k2) - self.model.energy(self.k1))
        return 2.0 * np.pi / dw if dw > 0 else None


@dataclass(frozen=True)
class BoxSuperposition:
    """Superposition of infinite-well modes ``sqrt(2/L) sin(n pi x / L)`` on ``[0, L]``."""

    box_length: float
    mode_coeffs: tuple  # ((n, c_n), ...) sorted by n
    model: DispersionModel = EXACT

    def __post_init__(self):
        if not (np.isfinite(self.box_length) and self.box_length > 0):
            raise ValueError("box_length must be finite and positive")
        items = self.mode_coeffs.items() if isinstance(self.mode_coeffs, dict) else self.mode_coeffs
        cleaned = []
        for n, c in items:
            if int(n) != n or n < 1:
                raise ValueError(f"mode indices must be integers >= 1, got {n!r}")
            cleaned.append((int(n), complex(c)))
        if not cleaned:
            raise ValueError("at least one mode is required")
        cleaned.sort()
        if len({n for n, _ in cleaned}) != len(cleaned):
            raise ValueError("duplicate mode index")
        object.__setattr__(self, "mode_coeffs", tuple(cleaned))

    @classmethod
    def from_modes(cls, box_length, coeffs: dict, model: DispersionModel = EXACT, normalized: bool = True):
        state = cls(box_length, coeffs, model)
        return normalize(state) if normalized else state

    @property
    def domain(self):
        return (0.0, self.box_length)

    @property
    def indices(self) -> np.ndarray:
        return np.array([n for n, _ in self.mode_coeffs])

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([c for _, c in self.mode_coeffs])

    @property
    def wavenumbers(self) -> np.ndarray:
        return self.indices * np.pi / self.box_length

    @property
    def energies(self) -> np.ndarray:
        return self.model.energy(self.wavenumbers)

    def jet(self, x, t) -> Jet:
        x = np.asarray(x, dtype=float)
        amps = self.coefficients * np.exp(-1j * self.energies * t) * np.sqrt(2.0 / self.box_length)
        psi = np.zeros(x.shape, complex)
        dpsi = np.zeros(x.shape, complex)
        d2psi = np.zeros(x.shape, complex)
        hpsi = np.zeros(x.shape, complex)
        dhpsi = np.zeros(x.shape, complex)
        # explicit per-mode accumulation keeps results independent of array chunking
        for k, e, a in zip(self.wavenumbers, self.energies, amps):
            s = a * np.sin(k * x)
            c = (a * k) * np.cos(k * x)
            psi += s
            dpsi += c
            d2psi -= (k * k) * s
            hpsi += e * s
            dhpsi += e * c
        return Jet(psi, dpsi, d2psi, hpsi, dhpsi)

    def flow_terms(self, x, t, second: bool = False):
        """Real-arithmetic (|psi|^2, Im psi* psi', Re psi* psi', Im psi* psi'') for the particle flow.

        Mode sines are generated by the Chebyshev recurrence from one sin/cos pair.
        """
        x = np.asarray(x, dtype=float)
        amps = self.coefficients * np.exp(-1j * self.energies * t) * np.sqrt(2.0 / self.box_length)
        theta = (np.pi / self.box_length) * x
        s1, c1 = np.sin(theta), np.cos(theta)
        two_c = 2.0 * c1
        s_prev, s_cur = np.zeros_like(x), s1
        c_prev, c_cur = np.ones_like(x), c1
        lookup = dict(zip(self.indices.tolist(), zip(amps, self.wavenumbers)))
        pr = np.zeros_like(x)
        pi_ = np.zeros_like(x)
        dr = np.zeros_like(x)
        di = np.zeros_like(x)
        if second:
            sr = np.zeros_like(x)
            si = np.zeros_like(x)
        for n in range(1, int(self.indices.max()) + 1):
            if n > 1:
                s_prev, s_cur = s_cur, two_c * s_cur - s_prev
                c_prev, c_cur = c_cur, two_c * c_cur - c_prev
            if n not in lookup:
                continue
            a, k = lookup[n]
            ar, ai = a.real, a.imag
            pr += ar * s_cur
            pi_ += ai * s_cur
            dr += (ar * k) * c_cur
            di += (ai * k) * c_cur
            if second:
                sr -= (ar * k * k) * s_cur
                si -= (ai * k * k) * s_cur
        density = pr * pr + pi_ * pi_
        current = pr * di - pi_ * dr
        real_part = pr * dr + pi_ * di
        if not second:
            return density, current, real_part, None
        return density, current, real_part, pr * si - pi_ * sr

    def density_scale(self, t) -> float:
        # upper bound of |psi|^2 over the box
        return float(np.sum(np.abs(self.coefficients)) ** 2 * 2.0 / self.box_length)

    def beat_period(self) -> float | None:
        e = np.unique(self.energies)
        if e.size < 2:
            return None
        return 2.0 * np.pi / np.min(np.diff(e))


@dataclass(frozen=True, eq=False)
class GridState:
    """Periodic grid samples of psi at time ``time``."""

    grid: SpectralGrid
    samples: np.ndarray = field(repr=False)
    model: DispersionModel = EXACT
    time: float = 0.0

    def __post_init__(self):
        samples = np.array(self.samples, dtype=complex)
        if samples.shape != (self.grid.point_count,):
            raise ValueError(f"expected {self.grid.point_count} samples, got shape {samples.shape}")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    domain = None

    def modes_at(self, t) -> np.ndarray:
        modes = np.fft.fft(self.samples)
        dt = t - self.time
        if dt == 0:
            return modes
        return modes * np.exp(-1j * self.model.energy(self.grid.wavenumbers) * dt)

    def samples_at(self, t) -> np.ndarray:
        return self.samples if t == self.time else np.fft.ifft(self.modes_at(t))

    def grid_jet(self, t) -> Jet:
        """Jet at the grid nodes, by spectral differentiation."""
        g = self.grid
        k = g.wavenumbers.copy()
        k_odd = k.copy()
        k_odd[g.point_count // 2] = 0.0
        modes = self.modes_at(t)
        hmodes = self.model.energy(k) * modes
        ifft = np.fft.ifft
        return Jet(
            ifft(modes),
            ifft(1j * k_odd * modes),
            ifft(-(k**2) * modes),
            ifft(hmodes),
            ifft(1j * k_odd * hmodes),
        )

    def jet(self, x, t) -> Jet:
        """Band-limited evaluation at arbitrary positions."""
        g = self.grid
        x = np.asarray(x, dtype=float)
        n = g.point_count
        modes = self.modes_at(t) / n
        k = g.wavenumbers.copy()
        # split the Nyquist coefficient evenly between +k_N and -k_N
        nyq = n // 2
        modes = np.append(modes, modes[nyq] * 0.5)
        modes[nyq] *= 0.5
        k = np.append(k, -k[nyq])
        e = self.model.energy(k)
        basis = np.exp(1j * np.multiply.outer(x - g.origin, k))
        return Jet(
            basis @ modes,
            basis @ (1j * k * modes),
            basis @ (-(k**2) * modes),
            basis @ (e * modes),
            basis @ (1j * k * e * modes),
        )

    def density_scale(self, t) -> float:
        return float(np.max(np.abs(self.samples_at(t)) ** 2))

    def beat_period(self) -> float | None:
        return None


WaveState = Union[PlaneWave, TwoWave, BoxSuperposition, GridState]


def _check_domain(state, x):
    if isinstance(state, BoxSuperposition):
        x = np.asarray(x)
        tol = 1e-12 * state.box_length
        if np.any(x < -tol) or np.any(x > state.box_length + tol):
            raise ValueError(f"position outside the box [0, {state.box_length}]")


def eval_psi(state: WaveState, x, t=0.0):
    """psi(x, t). Grid states are evaluated by band-limited interpolation."""
    _check_domain(state, x)
    psi = state.jet(x, t).psi
    return complex(psi) if np.ndim(psi) == 0 else psi


def grad_s_from_jet(jet: Jet) -> np.ndarray:
    return np.imag(np.conj(jet.psi) * jet.dpsi) / np.abs(jet.psi) ** 2


def eval_grad_s(state: WaveState, x, t=0.0):
    """Phase gradient Im(psi* psi') / |psi|^2.

    Raises
    ------
    NodeSingularityError
        If |psi|^2 falls below ``NODE_FLOOR`` times the state's density scale.
    """
    _check_domain(state, x)
    jet = state.jet(x, t)
    density = np.abs(jet.psi) ** 2
    if np.any(density < NODE_FLOOR * state.density_scale(t)):
        raise NodeSingularityError("phase gradient requested at a node of psi")
    out = grad_s_from_jet(jet)
    return float(out) if np.ndim(out) == 0 else out


def box_energy(mode, box_length: float, model: DispersionModel = EXACT) -> float:
    """Energy of an infinite-well eigenstate; ``mode`` is an int (1D) or a triple (3D cube)."""
    if not (np.isfinite(box_length) and box_length > 0):
        raise ValueError("box_length must be finite and positive")
    indices = np.atleast_1d(np.asarray(mode))
    if indices.ndim != 1 or indices.size not in (1, 3):
        raise ValueError("mode must be a positive integer or a triple of them")
    if np.any(indices < 1) or np.any(indices != np.round(indices)):
        raise ValueError(f"mode indices must be integers >= 1, got {mode!r}")
    k = np.pi * np.sqrt(np.sum(indices.astype(float) ** 2)) / box_length
    return float(multiplier(k, model))


def normalize(state: WaveState) -> WaveState:
    """Scale to unit norm; plane-wave families are returned unchanged."""
    if isinstance(state, BoxSuperposition):
        norm = np.sqrt(np.sum(np.abs(state.coefficients) ** 2))
        if norm == 0:
            raise ValueError("cannot normalize a zero state")
        if norm == 1.0:
            return state
        return replace(state, mode_coeffs=tuple((n, c / norm) for n, c in state.mode_coeffs))
    if isinstance(state, GridState):
        norm = discrete_norm(state.samples, state.grid)
        if norm == 0:
            raise ValueError("cannot normalize a zero state")
        if norm == 1.0:
            return state
        return replace(state, samples=state.samples / norm)
    return state


def gaussian_packet(grid: SpectralGrid, sigma: float, center: float | None = None, k0: float = 0.0,
                    model: DispersionModel = EXACT, amplitude: complex = 1.0) -> GridState:
    """Gaussian packet whose density |psi|^2 has standard deviation ``sigma``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if center is None:
        center = grid.origin + 0.5 * grid.domain_length
    x = grid.positions
    samples = amplitude * np.exp(-((x - center) ** 2) / (4.0 * sigma**2) + 1j * k0 * x)
    return GridState(grid, samples, model)
