"""Relativistic de Broglie-Bohm mechanics in one dimension.

Wave functions evolve under the square-root dispersion E(p) = sqrt(1 + p^2)
(or a truncated series of it); particles follow the relativistic guidance law
v = p / sqrt(1 + p^2) with p the phase gradient. All quantities are in
Compton units (hbar = c = m0 = 1).
"""
__version__ = "0.1.0"

from .core import (
    QUANTITY_KINDS,
    SI_ELECTRON,
    Scales,
    SpectralGrid,
    discrete_norm,
    from_modes,
    make_grid,
    modal_norm,
    rescale,
    spectral_derivative,
    to_modes,
)
from .dispersion import (
    EXACT,
    NONRELATIVISTIC,
    DispersionModel,
    TruncationDivergenceWarning,
    apply_hamiltonian,
    guidance_velocity,
    kernel_value,
    kernel_weights,
    multiplier,
    series_coefficient,
)
from .states import (
    BoxSuperposition,
    GridState,
    Jet,
    NodeSingularityError,
    PlaneWave,
    TwoWave,
    box_energy,
    eval_grad_s,
    eval_psi,
    gaussian_packet,
    normalize,
)
from .propagate import density_rate, evolve
from .bohm import (
    BohmFields,
    PathBundle,
    Trajectory,
    VelocityField,
    bohm_fields,
    hj_residual,
    integrate_paths,
    integrate_trajectory,
    quantum_force,
    quantum_potential,
    velocity_field,
)
from .ensemble import (
    EnsembleRun,
    PowerLawDensity,
    Snapshot,
    born_deviation,
    born_probabilities,
    characteristic_probabilities,
    continuity_defect,
    equivariance_residual,
    histogram_probabilities,
    sample_born,
    sample_from_density,
    transport,
    tv_distance,
)
