"""wolffkit: numerical nonlinear potential theory on box grids.

Wolff potentials, fractional/weighted maximal operators, Lorentz
rearrangement norms, Bessel potentials and capacities, and a p-Laplacian
solver with measure data and absorption, plus statistical verification
harnesses and a CLI for reproducible experiments.
"""

from .absorption import AbsorptionSpec, exponential_absorption, no_absorption, power_absorption
from .capacity import (
    CapacityProblem,
    CriterionReport,
    OptimizerSettings,
    capacity_estimate,
    exp_threshold,
    power_capacity_indices,
    subcritical_integral,
    tail_integral_q,
)
from .grids import Domain, ParameterError, ScalarField
from .lorentz import LorentzParams, check_L2_sandwich, double_star, lorentz_norm, rearrange
from .measures import Measure, SignedMeasure, ball_mass, mollify, truncate_restrict
from .pde import (
    SolutionBundle,
    SolveConfig,
    pointwise_bound_check,
    solve_measure,
    solve_regularized,
    truncate,
    truncation_energy_table,
)
from .potential import (
    BesselKernel,
    PotentialParams,
    bessel_potential,
    eta_maximal,
    frac_maximal,
    h_eta,
    l_of_rR,
    wolff,
    wolff_field,
)
from .verify import (
    FitReport,
    verify_exp_integrability,
    verify_levelset_decay,
    verify_norm_equivalence,
)

__all__ = [
    "AbsorptionSpec", "exponential_absorption", "no_absorption", "power_absorption",
    "CapacityProblem", "CriterionReport", "OptimizerSettings", "capacity_estimate",
    "exp_threshold", "power_capacity_indices", "subcritical_integral", "tail_integral_q",
    "Domain", "ParameterError", "ScalarField",
    "LorentzParams", "check_L2_sandwich", "double_star", "lorentz_norm", "rearrange",
    "Measure", "SignedMeasure", "ball_mass", "mollify", "truncate_restrict",
    "SolutionBundle", "SolveConfig", "pointwise_bound_check", "solve_measure",
    "solve_regularized", "truncate", "truncation_energy_table",
    "BesselKernel", "PotentialParams", "bessel_potential", "eta_maximal",
    "frac_maximal", "h_eta", "l_of_rR", "wolff", "wolff_field",
    "FitReport", "verify_exp_integrability", "verify_levelset_decay",
    "verify_norm_equivalence",
]

__version__ = "0.1.0"
