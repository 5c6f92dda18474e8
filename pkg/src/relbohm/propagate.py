"""Exact time evolution of wave states.

The free (and infinite-well) dynamics are diagonal in the mode basis, so every
family is advanced by a pure phase rotation with no time-discretisation error.
"""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .dispersion import _warn_if_out_of_band
from .states import BoxSuperposition, GridState, PlaneWave, TwoWave, WaveState

__all__ = ["evolve", "density_rate"]


def evolve(state: WaveState, dt: float) -> WaveState:
    """Advance ``state`` by ``dt`` under its own dispersion model."""
    if not np.isfinite(dt):
        raise ValueError("dt must be finite")
    dt = float(dt)
    model = state.model
    if isinstance(state, GridState):
        modes = np.fft.fft(state.samples)
        if model.order is not None and model.order > 1:
            _warn_if_out_of_band(modes, state.grid, model)
        phase = np.exp(-1j * model.energy(state.grid.wavenumbers) * dt)
        return replace(state, samples=np.fft.ifft(modes * phase), time=state.time + dt)
    if isinstance(state, BoxSuperposition):
        rotated = tuple(
            (n, c * np.exp(-1j * e * dt)) for (n, c), e in zip(state.mode_coeffs, state.energies)
        )
        return replace(state, mode_coeffs=rotated)
    if isinstance(state, PlaneWave):
        return replace(state, amplitude=state.amplitude * np.exp(-1j * model.energy(state.k) * dt))
    if isinstance(state, TwoWave):
        w1, w2 = model.energy(state.k1), model.energy(state.k2)
        return replace(
            state,
            overall=state.overall * np.exp(-1j * w1 * dt),
            rel_phase=float(np.mod(state.rel_phase - (w2 - w1) * dt, 2.0 * np.pi)),
        )
    raise TypeError(f"cannot evolve {type(state).__name__}")


def density_rate(state: WaveState, x, t):
    """Local d|psi|^2/dt = 2 Im(psi* H psi) implied by the wave equation.

    For grid states pass ``x=None`` to evaluate at the grid nodes spectrally.
    """
    jet = state.grid_jet(t) if x is None else state.jet(x, t)
    return 2.0 * np.imag(np.conj(jet.psi) * jet.hpsi)
