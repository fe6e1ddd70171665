"""Worst-case detection-performance guarantees for a ledger-secured sensor
network whose devices and storage layer can both be compromised."""

from .config import (
    ConfigError,
    MaliciousPmfPair,
    SystemConfig,
    make_config,
    uniform_pair,
    validate_config,
)
from .model import (
    CoefficientTables,
    DevicePattern,
    OutcomeSpaceError,
    RelaxedVariables,
    build_coefficients,
    count_malicious,
    decode_outcome,
    encode_outcome,
    joint_pmf,
    kld_original,
    kld_relaxed,
    lift_pmf_to_theta,
)
from .pgd import PgdResult, PgdSettings, grad_d0, pgd_multistart, project_simplex
from .simulate import EmpiricalKld, SimBatch, empirical_kld, sample_outcome, sample_outcomes
from .solver import (
    GuaranteeResult,
    SolverSettings,
    solve_relaxed,
    update_block_p1,
    update_block_p2,
    update_block_q1,
    update_block_q2,
)
from .waterfill import WaterfillError, WaterfillProblem, capped_waterfill

__version__ = "0.1.0"

__all__ = [
    "CoefficientTables",
    "ConfigError",
    "DevicePattern",
    "EmpiricalKld",
    "GuaranteeResult",
    "MaliciousPmfPair",
    "OutcomeSpaceError",
    "PgdResult",
    "PgdSettings",
    "RelaxedVariables",
    "SimBatch",
    "SolverSettings",
    "SystemConfig",
    "WaterfillError",
    "WaterfillProblem",
    "build_coefficients",
    "capped_waterfill",
    "count_malicious",
    "decode_outcome",
    "empirical_kld",
    "encode_outcome",
    "grad_d0",
    "joint_pmf",
    "kld_original",
    "kld_relaxed",
    "lift_pmf_to_theta",
    "make_config",
    "pgd_multistart",
    "project_simplex",
    "sample_outcome",
    "sample_outcomes",
    "solve_relaxed",
    "uniform_pair",
    "update_block_p1",
    "update_block_p2",
    "update_block_q1",
    "update_block_q2",
    "validate_config",
]
