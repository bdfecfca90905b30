"""hawkmal: Monte Carlo for nonlinear Hawkes processes with jump-time
Malliavin calculus (gradients, carre du champ, divergence weights, tangent
flows for jump SDEs, and Malliavin-weight Greeks)."""

from .model import (
    AssumptionError,
    BaselineSpec,
    HawkesModel,
    KernelSpec,
    NonlinearitySpec,
    intensity,
    kernel_tail_mass,
    validate_assumptions,
)
from .simulate import (
    HawkesPath,
    PathBatch,
    compensator,
    compensator_batch,
    simulate_batch,
)
from .density import (
    NormalizationError,
    conditional_density_bound,
    conditional_density_kn,
    count_distribution,
    density_vs_empirical,
    log_kappa,
    normalization_constant,
)
from .malliavin import (
    CameronMartinFunction,
    MalliavinGradient,
    SmoothFunctional,
    StepProcess,
    capped_jump_time,
    carre_du_champ,
    compose_smooth,
    condition2_slack,
    divergence_m,
    divergence_m_batch,
    divergence_predictable,
    grad_smooth,
    jump_count,
    product_smooth,
    weight_terms,
    xi_kernel,
    z_eps,
    z_eps_batch,
)
from .sde import (
    DensityCriteria,
    JumpSde,
    density_criteria,
    grad_and_gamma_XT,
    sde_preset,
    solve_flow,
    solve_path,
    tangents,
)
from .greeks import (
    AssetModel,
    GreekEstimate,
    Payoff,
    UnsupportedModelError,
    fd_delta,
    malliavin_delta,
    mc_estimate,
    pathwise_delta,
    terminal_price,
    terminal_price_batch,
)
from .experiments import (
    ExperimentReport,
    ibp_check,
    mean_intensity_check,
    unit_mass_check,
    volterra_mean_intensity,
)

__version__ = "0.1.0"

__all__ = [
    "AssetModel",
    "AssumptionError",
    "BaselineSpec",
    "CameronMartinFunction",
    "DensityCriteria",
    "ExperimentReport",
    "GreekEstimate",
    "HawkesModel",
    "HawkesPath",
    "JumpSde",
    "KernelSpec",
    "MalliavinGradient",
    "NonlinearitySpec",
    "NormalizationError",
    "PathBatch",
    "Payoff",
    "SmoothFunctional",
    "StepProcess",
    "UnsupportedModelError",
    "capped_jump_time",
    "carre_du_champ",
    "compensator",
    "compensator_batch",
    "compose_smooth",
    "condition2_slack",
    "conditional_density_bound",
    "conditional_density_kn",
    "count_distribution",
    "density_criteria",
    "density_vs_empirical",
    "divergence_m",
    "divergence_m_batch",
    "divergence_predictable",
    "fd_delta",
    "grad_and_gamma_XT",
    "grad_smooth",
    "ibp_check",
    "intensity",
    "jump_count",
    "kernel_tail_mass",
    "log_kappa",
    "malliavin_delta",
    "mc_estimate",
    "mean_intensity_check",
    "normalization_constant",
    "pathwise_delta",
    "product_smooth",
    "sde_preset",
    "simulate_batch",
    "solve_flow",
    "solve_path",
    "tangents",
    "terminal_price",
    "terminal_price_batch",
    "unit_mass_check",
    "validate_assumptions",
    "volterra_mean_intensity",
    "weight_terms",
    "xi_kernel",
    "z_eps",
    "z_eps_batch",
    "__version__",
]
