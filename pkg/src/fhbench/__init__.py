"""Benchmarked (constrained) empirical Bayes estimation in the Fay-Herriot model."""

from .canonical import CanonicalBasis, CanonicalFrame, build_basis, build_blocks, build_frame
from .conditions import (
    ConditionReport,
    ConditionVerdict,
    condition_report,
    condition_table,
    delta_apr,
    nr_uncond,
    sr_ceb_minform,
    sr_explicit,
    sr_uncond_explicit,
    sr_uncond_minform,
    uc_conditions,
)
from .estimators import (
    EstimateResult,
    VarianceFit,
    a_matrix,
    bayes_estimate,
    ceb_estimate,
    cm_estimate,
    constrain,
    direct_estimate,
    eb_estimate,
    fh_lambda_solve,
    gls_beta,
    uc1_estimate,
    uc2_estimate,
)
from .model import (
    BenchmarkSpec,
    FayHerriotModel,
    FixedTarget,
    NumericalError,
    Observation,
    ValidationError,
    WeightedDirect,
    loss_reduced_QW,
    projection_PW,
    validate,
    weighted_loss,
)
from .montecarlo import RiskEstimate, SimConfig, Setting, risk_table

__version__ = "0.1.0"
