"""Information-weighted private regression and private contextual bandits."""

from .channels import PrivacyBudget, PrivacyLedger, RngStream
from .covariates import (
    ClippedGaussian,
    CovariateDistribution,
    Dataset,
    FiniteSupport,
    LabelMechanism,
    MomentOracle,
    ProductRademacher,
    SphereUniform,
    kappa_p,
    make_perturbed_distribution,
    make_simple_distribution,
    moment_oracle,
    sample_dataset,
)
from .estimators import EstimateReport, GlmLink
from .infomatrix import InfoWeight, SpectralTrace, price_of_privacy, solve_exact

__version__ = "0.1.0"

__all__ = [
    "PrivacyBudget",
    "PrivacyLedger",
    "RngStream",
    "CovariateDistribution",
    "FiniteSupport",
    "ClippedGaussian",
    "SphereUniform",
    "ProductRademacher",
    "LabelMechanism",
    "Dataset",
    "MomentOracle",
    "moment_oracle",
    "kappa_p",
    "make_simple_distribution",
    "make_perturbed_distribution",
    "sample_dataset",
    "InfoWeight",
    "SpectralTrace",
    "solve_exact",
    "price_of_privacy",
    "EstimateReport",
    "GlmLink",
    "__version__",
]
