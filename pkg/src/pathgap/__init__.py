"""Spectral-gap bounds for Brownian path space under curvature pinching, with Monte-Carlo checks."""

from .bounds import (
    BoundBranch,
    BoundReport,
    ConstantPinching,
    DomainError,
    asymptotic_bound,
    asymptotic_coefficients,
    big_c,
    h_bound,
    lambda_c,
    tilde_h,
)
from .functional import (
    CylindricalFunction,
    EnergyEstimate,
    GradientKind,
    dirichlet_energy,
    entropy,
    gradient_at,
    variance,
)
from .geometry import (
    DriftField,
    Euclidean,
    EvolvingSphere,
    Hyperbolic,
    ManifoldModel,
    PinchingCertificate,
    Sphere,
    pinching,
)
from .optimize import SearchMode, SearchPolicy, TimeCurve, tilde_lambda_c
from .pathsim import PathEnsemble, Scheme, SimConfig, load_ensemble, replay, save_ensemble, simulate
from .verify import (
    InequalityCheck,
    Verdict,
    check_gradient_estimate,
    check_log_sobolev,
    check_martingale_decomposition,
    check_poincare,
    check_second_characterization,
    rayleigh_quotient,
)

__version__ = "0.1.0"

__all__ = [
    "BoundBranch", "BoundReport", "ConstantPinching", "DomainError", "asymptotic_bound", "asymptotic_coefficients",
    "big_c", "h_bound", "lambda_c", "tilde_h",
    "CylindricalFunction", "EnergyEstimate", "GradientKind", "dirichlet_energy", "entropy", "gradient_at", "variance",
    "DriftField", "Euclidean", "EvolvingSphere", "Hyperbolic", "ManifoldModel", "PinchingCertificate", "Sphere",
    "pinching",
    "SearchMode", "SearchPolicy", "TimeCurve", "tilde_lambda_c",
    "PathEnsemble", "Scheme", "SimConfig", "load_ensemble", "replay", "save_ensemble", "simulate",
    "InequalityCheck", "Verdict", "check_gradient_estimate", "check_log_sobolev", "check_martingale_decomposition",
    "check_poincare", "check_second_characterization", "rayleigh_quotient",
]
