"""Simulation and order-constrained REML estimation for balanced half-sib designs."""

from .estimators import (
    EstimateSet,
    SingularStratumError,
    StratumChain,
    chain_from_components,
    components_from_chain,
    manova,
    pairwise_reml,
    pseudo_reml,
    reml_criterion,
    stepwise_reml,
    two_wishart_order_mle,
)
from .experiments import ResultRecord, ScenarioConfig, builtin_scenarios, run_scenario
from .model import (
    CovarianceComponents,
    DesignSpec,
    NotPSDError,
    PhenotypeDataset,
    SigmaAKind,
    SigmaBKind,
    build_sigma_A,
    build_sigma_B,
    psd_factor,
    simulate,
)
from .oracle import brute_force_reml
from .spectra import (
    ReplicateStats,
    SpectrumSummary,
    eigenvalues_sym,
    nearly_null_dim,
    relative_difference,
    summarize,
)
from .stats import MeanSquares, decomposition_check, mean_squares

__version__ = "0.1.0"

__all__ = [
    "CovarianceComponents",
    "DesignSpec",
    "EstimateSet",
    "MeanSquares",
    "NotPSDError",
    "PhenotypeDataset",
    "ReplicateStats",
    "ResultRecord",
    "ScenarioConfig",
    "SigmaAKind",
    "SigmaBKind",
    "SingularStratumError",
    "SpectrumSummary",
    "StratumChain",
    "brute_force_reml",
    "build_sigma_A",
    "build_sigma_B",
    "builtin_scenarios",
    "chain_from_components",
    "components_from_chain",
    "decomposition_check",
    "eigenvalues_sym",
    "manova",
    "mean_squares",
    "nearly_null_dim",
    "pairwise_reml",
    "pseudo_reml",
    "psd_factor",
    "relative_difference",
    "reml_criterion",
    "run_scenario",
    "simulate",
    "stepwise_reml",
    "summarize",
    "two_wishart_order_mle",
]
