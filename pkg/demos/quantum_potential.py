"""
Quantum potential and force
===========================

For a box eigenstate the phase gradient vanishes and the quantum potential
alone carries the energy: E(grad S) + Q = E_n. In a superposition Q moves,
and the momentum of each particle changes at the rate -dQ/dx.
"""

import numpy as np

from relbohm import EXACT, BoxSuperposition, bohm_fields, box_energy, integrate_trajectory

length = 1.0
x = np.linspace(0.01, 0.99, 9)

for n in (1, 2, 3):
    state = BoxSuperposition.from_modes(length, {n: 1.0})
    f = bohm_fields(state, 0.0, x)
    total = EXACT.energy(f.grad_s) + f.quantum_potential
    print(f"n = {n}: E_n = {box_energy(n, length):.6f}, max |E(grad S) + Q - E_n| =",
          f"{np.nanmax(np.abs(total - box_energy(n, length))):.1e}")

# force law along a path
state = BoxSuperposition.from_modes(length, {1: 1.0, 2: 1.0})
period = state.beat_period()
dt = period / 4000
path = integrate_trajectory(state, 0.3, (0.0, 0.25 * period), step=dt)
p = np.array([bohm_fields(state, t, np.array([xx])).grad_s[0] for t, xx in zip(path.times, path.positions)])
force = np.array([bohm_fields(state, t, np.array([xx])).force[0] for t, xx in zip(path.times, path.positions)])
dpdt = np.gradient(p, path.times)
print("max |dp/dt - F| / max |F| along the path:",
      f"{np.max(np.abs(dpdt - force)[1:-1]) / np.max(np.abs(force)):.1e}")

# Q at a few instants of the beat
for frac in (0.1, 0.3, 0.6):
    q = bohm_fields(state, frac * period, x).quantum_potential
    print(f"t = {frac:.1f} T: Q(x) =", np.array2string(q, precision=3))
