"""Dispersion laws E(p): the exact square root and its truncated binomial series.

Every operator in the package is defined through its wavenumber multiplier, so
the sign conventions of real-space derivative expansions never enter.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .core import SpectralGrid
from .special import macdonald_k1

__all__ = [
    "DispersionModel",
    "EXACT",
    "NONRELATIVISTIC",
    "TruncationDivergenceWarning",
    "series_coefficient",
    "series_coefficient_exact",
    "multiplier",
    "guidance_velocity",
    "kernel_value",
    "kernel_weights",
    "apply_hamiltonian",
]


class TruncationDivergenceWarning(UserWarning):
    """A truncated dispersion series was evaluated beyond |p| = 1, where it diverges."""


@lru_cache(maxsize=None)
def series_coefficient_exact(j: int) -> Fraction:
    """Coefficient of x**j in sqrt(1 + x), as an exact rational."""
    if j < 0:
        raise ValueError("series index must be non-negative")
    coeff = Fraction(1)
    for i in range(j):
        coeff *= Fraction(1, 2) - i
    return coeff / math.factorial(j)


def series_coefficient(j: int) -> float:
    """Coefficient a_j of p**(2j) in sqrt(1 + p**2).

    >>> [series_coefficient(j) for j in range(5)]
    [1.0, 0.5, -0.125, 0.0625, -0.0390625]
    """
    return float(series_coefficient_exact(int(j)))


@dataclass(frozen=True)
class DispersionModel:
    """Exact square-root dispersion (``order=None``) or its truncation to N terms.

    ``order=1`` is nonrelativistic mechanics with the rest energy kept,
    ``E = 1 + p**2 / 2``.
    """

    order: int | None = None

    def __post_init__(self):
        if self.order is not None:
            if isinstance(self.order, bool) or int(self.order) != self.order or self.order < 1:
                raise ValueError(f"truncation order must be an integer >= 1, got {self.order!r}")
            object.__setattr__(self, "order", int(self.order))

    @classmethod
    def truncated(cls, order: int) -> "DispersionModel":
        return cls(order)

    @classmethod
    def parse(cls, text: str) -> "DispersionModel":
        """Parse ``"exact"`` or ``"N:<order>"``."""
        text = str(text).strip()
        if text.lower() == "exact":
            return cls(None)
        if text.upper().startswith("N:"):
            try:
                order = int(text[2:])
            except ValueError:
                raise ValueError(f"bad truncation order in model {text!r}") from None
            return cls(order)
        raise ValueError(f"model must be 'exact' or 'N:<order>', got {text!r}")

    @property
    def is_exact(self) -> bool:
        return self.order is None

    @property
    def label(self) -> str:
        return "exact" if self.order is None else f"N:{self.order}"

    def coefficients(self) -> np.ndarray:
        if self.order is None:
            raise ValueError("the exact model has infinitely many coefficients")
        return np.array([series_coefficient(j) for j in range(self.order + 1)])

    # The three methods below are unchecked vectorised kernels used by the
    # dynamics; the public functions add input validation and warnings.
    def energy(self, p):
        p = np.asarray(p, dtype=float)
        if self.order is None:
            return np.hypot(1.0, p)
        return np.polynomial.polynomial.polyval(p * p, self.coefficients())

    def velocity(self, p):
        """dE/dp."""
        p = np.asarray(p, dtype=float)
        if self.order is None:
            return p / np.hypot(1.0, p)
        a = self.coefficients()
        c = np.array([2 * j * a[j] for j in range(1, self.order + 1)])
        return p * np.polynomial.polynomial.polyval(p * p, c)

    def velocity_slope(self, p):
        """d^2E/dp^2."""
        p = np.asarray(p, dtype=float)
        if self.order is None:
            return np.hypot(1.0, p) ** -3
        a = self.coefficients()
        c = np.array([2 * j * (2 * j - 1) * a[j] for j in range(1, self.order + 1)])
        return np.polynomial.polynomial.polyval(p * p, c)

    def check_band(self, p) -> bool:
        """Warn if a truncated series (N >= 2) is asked for |p| > 1. Returns True if in band."""
        if self.order is None or self.order == 1:
            return True
        if np.any(np.abs(np.asarray(p)) > 1.0):
            warnings.warn(
                f"truncated dispersion {self.label} evaluated at |p| > 1, outside the "
                "radius of convergence of the binomial series",
                TruncationDivergenceWarning,
                stacklevel=3,
            )
            return False
        return True


EXACT = DispersionModel(None)
NONRELATIVISTIC = DispersionModel(1)


def _finite(x, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} must be finite")
    return arr


def multiplier(k, model: DispersionModel = EXACT):
    """Wavenumber multiplier of the Hamiltonian: sqrt(1+k^2) or its truncation."""
    k = _finite(k, "wavenumber")
    model.check_band(k)
    out = model.energy(k)
    return float(out) if out.ndim == 0 else out


def guidance_velocity(grad_s, model: DispersionModel = EXACT):
    """Particle velocity (units of c) for phase gradient ``grad_s`` (units of m0 c)."""
    p = _finite(grad_s, "phase gradient")
    model.check_band(p)
    out = model.velocity(p)
    return float(out) if out.ndim == 0 else out


def kernel_value(x):
    """Position-space kernel of sqrt(1 - d^2/dx^2) away from the origin.

    Equals ``-K1(|x|) / (pi |x|)``, normalised so that its Fourier transform
    reproduces ``sqrt(1 + k^2)`` (the delta part at the origin is handled by
    the self-weight in :func:`kernel_weights`).
    """
    x = _finite(x, "separation")
    if np.any(x == 0):
        raise ValueError("kernel is distributional at x = 0")
    ax = np.abs(x)
    out = -macdonald_k1(ax) / (np.pi * ax)
    return float(out) if np.ndim(out) == 0 else out


# d/ds zeta(s) at s = -2, i.e. -zeta(3) / (4 pi^2)
_ZETA_PRIME_M2 = -0.030448457058393270780
# d/ds zeta(s) at s = -4, i.e. 3 zeta(5) / (4 pi^4)
_ZETA_PRIME_M4 = 0.0079838114502686242
# beyond this separation K1 underflows
_KERNEL_REACH = 740.0


@lru_cache(maxsize=32)
def kernel_weights(grid: SpectralGrid) -> np.ndarray:
    """Periodic convolution weights of the exact Hamiltonian on ``grid``.

    The kernel is split as ``-1/(pi x^2)`` (the |k| operator, whose lattice
    quadrature is known in closed form) plus a log-singular remainder
    integrated by the punctured trapezoidal rule with its first two
    generalised Euler-Maclaurin corrections. The self-weight is fixed by
    exactness on constants.
    """
    n, length, h = grid.point_count, grid.domain_length, grid.spacing
    m = np.arange(n)
    m = np.where(m > n // 2, m - n, m)
    off = m != 0
    x = m[off] * h

    images = int(np.ceil(_KERNEL_REACH / length)) + 1
    full = np.zeros_like(x)
    for q in range(-images, images + 1):
        shifted = np.abs(x + q * length)
        near = shifted < _KERNEL_REACH
        full[near] += -macdonald_k1(shifted[near]) / (np.pi * shifted[near])
    periodic_inverse_square = (np.pi / length**2) / np.sin(np.pi * x / length) ** 2

    regular = np.zeros(n)
    regular[off] = h * (full + periodic_inverse_square)
    # The remainder behaves like c(x) log|x| with c(x) = -I1(x) / (pi x), so
    # c(0) = -1/(2 pi) and c''(0) = -1/(8 pi). The punctured rule misses
    # zeta'(-2) h^3 (cf)''(0) + zeta'(-4) h^5 (cf)^(4)(0) / 12, where the
    # derivatives of f become central differences on offsets 1 and 2.
    c0, c2 = -0.5 / np.pi, -0.125 / np.pi
    d2 = np.array([16.0, -1.0]) / 12.0  # fourth-order f'' stencil
    d4 = np.array([-4.0, 1.0])  # second-order f'''' stencil
    near = (_ZETA_PRIME_M2 * h * c0 * d2
            + _ZETA_PRIME_M4 * h / 12.0 * (c0 * d4 + 6.0 * c2 * h * h * d2))
    regular[[1, 2]] += near
    regular[[-1, -2]] += near
    regular[0] = 1.0 - regular[off].sum()

    abs_derivative = np.zeros(n)
    odd = m % 2 != 0
    abs_derivative[odd] = -2.0 * np.pi / (h * n**2 * np.sin(np.pi * m[odd] / n) ** 2)
    abs_derivative[0] = np.pi / (2.0 * h)

    weights = regular + abs_derivative
    weights.flags.writeable = False
    return weights


def apply_hamiltonian(samples, grid: SpectralGrid, model: DispersionModel = EXACT, method: str = "spectral"):
    """Apply the free Hamiltonian of ``model`` to periodic grid samples.

    ``method="spectral"`` multiplies Fourier modes by :func:`multiplier`;
    ``method="kernel"`` performs the periodic convolution with
    :func:`kernel_weights` (exact model only).
    """
    psi = np.asarray(samples, dtype=complex)
    if psi.shape != (grid.point_count,):
        raise ValueError(f"expected {grid.point_count} samples, got shape {psi.shape}")
    if method == "spectral":
        modes = np.fft.fft(psi)
        if model.order is not None and model.order > 1:
            _warn_if_out_of_band(modes, grid, model)
        return np.fft.ifft(model.energy(grid.wavenumbers) * modes)
    if method == "kernel":
        if not model.is_exact:
            raise ValueError("the kernel form exists only for the exact dispersion")
        weights = kernel_weights(grid)
        return np.fft.ifft(np.fft.fft(weights) * np.fft.fft(psi))
    raise ValueError(f"unknown method {method!r}; expected 'spectral' or 'kernel'")


def _warn_if_out_of_band(modes: np.ndarray, grid: SpectralGrid, model: DispersionModel, rtol: float = 1e-20):
    power = np.abs(modes) ** 2
    total = power.sum()
    if total > 0 and power[np.abs(grid.wavenumbers) > 1.0].sum() > rtol * total:
        warnings.warn(
            f"state has spectral weight at |k| > 1 where the {model.label} series diverges",
            TruncationDivergenceWarning,
            stacklevel=3,
        )
