"""
Square-root dispersion, its truncations and the position-space kernel
=====================================================================

Energies are in units of m0 c^2 and momenta in units of m0 c, so the exact
law is E = sqrt(1 + p^2).
"""

import warnings

import numpy as np

from relbohm import EXACT, DispersionModel, guidance_velocity, make_grid, multiplier
from relbohm.dispersion import apply_hamiltonian
from relbohm.states import gaussian_packet

# closed-form checkpoint: a 3-4-5 triangle
print("E(0.75) =", multiplier(0.75), " v(0.75) =", guidance_velocity(0.75))

# truncating the binomial series: fine below |p| = 1, hopeless above it
for p in (0.5, 0.9, 1.2):
    errs = []
    for order in (1, 2, 5, 10, 20):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # the |p| > 1 rows trip the divergence warning on purpose
            errs.append(abs(multiplier(p, DispersionModel(order)) - multiplier(p)))
    print(f"p = {p}: |E_N - E| for N = 1, 2, 5, 10, 20 ->", " ".join(f"{e:.1e}" for e in errs))

# the guidance velocity never reaches the speed of light
p = np.logspace(-3, 6, 10)
print("v(p) for p = 1e-3 .. 1e6:", np.array2string(guidance_velocity(p), precision=12))

# the same operator as a convolution with -K1(|x|) / (pi |x|)
for sigma in (2.0, 4.0, 8.0):
    grid = make_grid(1024, 20 * sigma)
    psi = gaussian_packet(grid, sigma, k0=0.3).samples
    spectral = apply_hamiltonian(psi, grid, EXACT, "spectral")
    kernel = apply_hamiltonian(psi, grid, EXACT, "kernel")
    rel = np.linalg.norm(kernel - spectral) / np.linalg.norm(spectral)
    print(f"sigma = {sigma}: kernel vs spectral relative L2 difference {rel:.1e}")
