"""
Relativistic and nonrelativistic trajectories in a box
======================================================

Equal-weight superposition of the two lowest box modes, particle released at
the centre. In a box a few Compton lengths wide the two guidance laws give
visibly different paths; in a wide box they coincide.
"""

import numpy as np

from relbohm.scenarios import figure1_gaps

results = figure1_gaps([1, 5, 25, 100], {1: 1.0, 2: 1.0})

print(" l    beat period    max gap / L")
for r in results:
    print(f"{r['l']:>3}  {r['beat_period']:12.4f}   {r['normalized_gap']:.4f}")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    fig, axes = plt.subplots(1, len(results), figsize=(12, 3), sharey=True)
    for ax, r in zip(axes, results):
        for kind, colour in (("relativistic", "tab:red"), ("nonrelativistic", "tab:blue")):
            tr = r[kind]
            ax.plot(tr.times / r["beat_period"], tr.positions / r["box_length"], colour, label=kind)
        ax.set_title(f"l = {r['l']}")
        ax.set_xlabel("t / beat period")
    axes[0].set_ylabel("x / L")
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig("box_trajectories.png", dpi=120)
    print("wrote box_trajectories.png")
