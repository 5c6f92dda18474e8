"""Physical scales, unit conversion and the periodic spectral grid.

All internal arithmetic uses Compton units (hbar = c = m0 = 1): lengths are in
units of hbar/(m0 c), times in hbar/(m0 c^2), energies in m0 c^2 and momenta in
m0 c.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Scales",
    "SI_ELECTRON",
    "QUANTITY_KINDS",
    "rescale",
    "SpectralGrid",
    "make_grid",
    "to_modes",
    "from_modes",
    "discrete_norm",
    "modal_norm",
    "spectral_derivative",
]


@dataclass(frozen=True)
class Scales:
    """Rest mass, light speed and reduced Planck constant of a particle."""

    rest_mass: float
    light_speed: float
    planck_reduced: float

    def __post_init__(self):
        for name in ("rest_mass", "light_speed", "planck_reduced"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and positive, got {value!r}")

    @property
    def compton_length(self) -> float:
        return self.planck_reduced / (self.rest_mass * self.light_speed)

    @property
    def compton_time(self) -> float:
        return self.planck_reduced / (self.rest_mass * self.light_speed**2)

    @property
    def rest_energy(self) -> float:
        return self.rest_mass * self.light_speed**2

    @property
    def momentum_unit(self) -> float:
        return self.rest_mass * self.light_speed


SI_ELECTRON = Scales(
    rest_mass=9.1093837015e-31,
    light_speed=299792458.0,
    planck_reduced=1.054571817e-34,
)

QUANTITY_KINDS = ("length", "time", "energy", "momentum", "velocity", "wavenumber")


def _unit(kind: str, scales: Scales) -> float:
    if kind == "length":
        return scales.compton_length
    if kind == "time":
        return scales.compton_time
    if kind == "energy":
        return scales.rest_energy
    if kind == "momentum":
        return scales.momentum_unit
    if kind == "velocity":
        return scales.light_speed
    if kind == "wavenumber":
        return 1.0 / scales.compton_length
    raise ValueError(f"unknown quantity kind {kind!r}; expected one of {QUANTITY_KINDS}")


def rescale(value, scales: Scales, kind: str, direction: str = "to-dimensionless"):
    """Convert ``value`` between SI-like dimensional units and Compton units.

    Parameters
    ----------
    value : float or array_like
        Quantity to convert.
    scales : Scales
        Particle scales defining the Compton units.
    kind : str
        One of ``QUANTITY_KINDS``.
    direction : {"to-dimensionless", "to-dimensional"}
    """
    unit = _unit(kind, scales)
    if direction == "to-dimensionless":
        return np.asarray(value) / unit if np.ndim(value) else value / unit
    if direction == "to-dimensional":
        return np.asarray(value) * unit if np.ndim(value) else value * unit
    raise ValueError(f"unknown direction {direction!r}")


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    """Uniform periodic grid on ``[origin, origin + domain_length)``.

    ``wavenumbers`` follow the standard FFT ordering of ``numpy.fft``.
    """

    point_count: int
    domain_length: float
    origin: float = 0.0
    positions: np.ndarray = field(init=False, repr=False)
    wavenumbers: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.point_count
        positions = self.origin + self.spacing * np.arange(n)
        wavenumbers = 2.0 * np.pi * np.fft.fftfreq(n, d=self.spacing)
        positions.flags.writeable = False
        wavenumbers.flags.writeable = False
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "wavenumbers", wavenumbers)

    @property
    def spacing(self) -> float:
        return self.domain_length / self.point_count

    @property
    def nyquist(self) -> float:
        return np.pi * self.point_count / self.domain_length

    def __eq__(self, other):
        if not isinstance(other, SpectralGrid):
            return NotImplemented
        return (self.point_count, self.domain_length, self.origin) == (
            other.point_count,
            other.domain_length,
            other.origin,
        )

    def __hash__(self):
        return hash((self.point_count, self.domain_length, self.origin))


def make_grid(point_count: int, domain_length: float, origin: float = 0.0) -> SpectralGrid:
    """Build a power-of-two periodic grid.

    >>> make_grid(8, 2 * np.pi).wavenumbers
    array([ 0.,  1.,  2.,  3., -4., -3., -2., -1.])
    """
    if isinstance(point_count, bool) or int(point_count) != point_count:
        raise ValueError(f"point_count must be an integer, got {point_count!r}")
    point_count = int(point_count)
    if point_count < 8 or point_count & (point_count - 1):
        raise ValueError(f"point_count must be a power of two >= 8, got {point_count}")
    if not (np.isfinite(domain_length) and domain_length > 0):
        raise ValueError(f"domain_length must be finite and positive, got {domain_length!r}")
    if not np.isfinite(origin):
        raise ValueError("origin must be finite")
    return SpectralGrid(point_count, float(domain_length), float(origin))


# Modal coefficients are taken relative to the grid origin so that the
# spectral representation psi(x) = (1/N) sum_j c_j exp(i k_j (x - origin))
# can be evaluated off the grid.
def to_modes(samples: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    return np.fft.fft(samples)


def from_modes(modes: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    return np.fft.ifft(modes)


def discrete_norm(samples: np.ndarray, grid: SpectralGrid) -> float:
    """L2 norm of grid samples with the rectangle (spectrally exact) rule."""
    return float(np.sqrt(grid.spacing * np.sum(np.abs(samples) ** 2)))


def modal_norm(modes: np.ndarray, grid: SpectralGrid) -> float:
    """L2 norm computed from FFT coefficients; equals ``discrete_norm`` by Parseval."""
    return float(np.sqrt(grid.spacing * np.sum(np.abs(modes) ** 2) / grid.point_count))


def spectral_derivative(samples: np.ndarray, grid: SpectralGrid, order: int = 1) -> np.ndarray:
    """Spectral derivative of periodic samples; the Nyquist mode is zeroed for odd orders."""
    k = grid.wavenumbers
    factor = (1j * k) ** order
    if order % 2 == 1:
        factor = factor.copy()
        factor[grid.point_count // 2] = 0.0
    return np.fft.ifft(factor * np.fft.fft(samples))
