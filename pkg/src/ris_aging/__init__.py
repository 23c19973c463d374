"""Sum spectral efficiency of RIS-assisted massive MIMO under channel aging.

Deterministic-equivalent SINR analysis with RZF precoding, MMSE estimation
with aged pilots, gradient-based RIS phase design, WMMSE power allocation,
and a Monte Carlo link simulator used as an independent oracle.
"""

from .errors import (
    ConditioningError,
    ConvergenceError,
    DomainError,
    RisAgingError,
    SchemaError,
    ValidationError,
)
from .scenario import ChannelStatistics, SystemConfig, build_statistics, load_config
from .fading import AgingProfile, ChannelRealization
from .estimation import EstimationModel, build_estimation_model
from .de_engine import DeSolution, de_sinr_at, de_solution_at, de_sum_se
from .gradients import grad_de_sinr, grad_sum_se
from .optimizer import OptState, alternating_optimize, pga_rbm
from .montecarlo import McEstimate, mc_sinr, mc_sum_se, mrt_baseline

__version__ = "0.1.0"

__all__ = [
    "AgingProfile",
    "ChannelRealization",
    "ChannelStatistics",
    "ConditioningError",
    "ConvergenceError",
    "DeSolution",
    "DomainError",
    "EstimationModel",
    "McEstimate",
    "OptState",
    "RisAgingError",
    "SchemaError",
    "SystemConfig",
    "ValidationError",
    "alternating_optimize",
    "build_estimation_model",
    "build_statistics",
    "de_sinr_at",
    "de_solution_at",
    "de_sum_se",
    "grad_de_sinr",
    "grad_sum_se",
    "load_config",
    "mc_sinr",
    "mc_sum_se",
    "mrt_baseline",
    "pga_rbm",
]
