"""Drift estimation and moderate deviations for the Heston model.

Submodules: ``special`` (Bessel, Kummer, noncentral chi-square sampling),
``models`` (parameters, simulation, path I/O), ``functionals`` (path
statistics), ``mle`` (closed-form estimators, limit covariances),
``deviations`` (rate functions, Legendre transforms, Girsanov weights),
``engine`` (batched simulation), ``config``, ``experiments``,
``plotting`` and ``cli``.
"""

from .config import ExperimentConfig, load_config
from .deviations import (
    RateContext,
    TiltedParams,
    girsanov_weight_ab,
    girsanov_weight_cd,
    legendre_transform,
    rate_I_ab,
    rate_I_calM,
    rate_I_M,
    rate_I_theta,
)
from .engine import simulate_batch
from .errors import (
    AccuracyError,
    ConfigError,
    DegeneracyError,
    DomainError,
    ExperimentError,
    GirsanovOverflowError,
    HestonMDPError,
    PreconditionError,
    RadiusTooSmallError,
    SimulationError,
)
from .functionals import PathFunctionals, compute_functionals, ito_sums
from .mle import ThetaEstimate, covariance_set, estimate_cir, estimate_full, estimate_via_martingales
from .models import HestonParams, Noise, Path, SimGrid, simulate_euler_path, simulate_heston_path

__version__ = "0.1.0"

__all__ = [
    "AccuracyError",
    "ConfigError",
    "DegeneracyError",
    "DomainError",
    "ExperimentConfig",
    "ExperimentError",
    "GirsanovOverflowError",
    "HestonMDPError",
    "HestonParams",
    "Noise",
    "Path",
    "PathFunctionals",
    "PreconditionError",
    "RadiusTooSmallError",
    "RateContext",
    "SimGrid",
    "SimulationError",
    "ThetaEstimate",
    "TiltedParams",
    "compute_functionals",
    "covariance_set",
    "estimate_cir",
    "estimate_full",
    "estimate_via_martingales",
    "girsanov_weight_ab",
    "girsanov_weight_cd",
    "ito_sums",
    "legendre_transform",
    "load_config",
    "rate_I_M",
    "rate_I_ab",
    "rate_I_calM",
    "rate_I_theta",
    "simulate_batch",
    "simulate_euler_path",
    "simulate_heston_path",
]
