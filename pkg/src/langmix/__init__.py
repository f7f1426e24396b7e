"""langmix: mixing analysis for overdamped Langevin dynamics with a degenerate fixed point.

Modules
-------
potential : potentials, hypothesis checks, localization, eps-scaling
flow      : noiseless flow, descent from infinity, L2 moment envelope
sde       : Monte Carlo ensembles, coupling, rescaling
density   : invariant measures, Fokker-Planck marginals, total variation
analysis  : distance profiles, mixing times, cut-off diagnostics
cli       : experiment orchestration from config files
"""

__version__ = "0.1.0"

from .potential import (
    GrowthSpec,
    HypothesisReport,
    Potential,
    ScalingPair,
    check_hypotheses,
    localize,
    make_ginzburg_landau,
    make_power_potential,
    scaling,
)
from .flow import (
    FlowPath,
    ScalarField,
    descend_from_infinity,
    entrance_integral,
    integrate_field,
    integrate_flow,
    l2_envelope,
)

__all__ = [
    "GrowthSpec",
    "HypothesisReport",
    "Potential",
    "ScalingPair",
    "check_hypotheses",
    "localize",
    "make_ginzburg_landau",
    "make_power_potential",
    "scaling",
    "FlowPath",
    "ScalarField",
    "descend_from_infinity",
    "entrance_integral",
    "integrate_field",
    "integrate_flow",
    "l2_envelope",
]
