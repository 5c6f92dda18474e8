"""
Departure from the Born distribution
====================================

An ensemble drawn from |psi|^2 is carried along the guidance flow for one
beat period. With the nonrelativistic law it stays Born distributed up to
sampling noise; in a one-Compton-length box the relativistic law pushes it
away and back. Smaller than the acceptance ensembles, so it runs quickly.
"""

import numpy as np

from relbohm import EXACT, NONRELATIVISTIC, BoxSuperposition
from relbohm.ensemble import born_deviation, sample_born, transport

count = 20_000
for model, length in ((NONRELATIVISTIC, 100 * np.pi), (EXACT, 1.0)):
    state = BoxSuperposition.from_modes(length, {1: 1.0, 2: 1.0}, model)
    period = state.beat_period()
    times = np.linspace(0.0, period, 6)
    x0 = sample_born(state, count, seed=1)
    run = transport(x0, state, t_span=(0.0, period), snapshot_times=times, step=period / 500)
    eps = [born_deviation(run, state, t, bins=50) for t in times]
    print(f"{model.label:>6}, L = {length:8.3f}: eps(t) =", " ".join(f"{e:.3f}" for e in eps))
