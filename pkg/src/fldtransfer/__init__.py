"""Transfer learning for Fisher's Linear Discriminant.

A target-task projection vector fitted on little data is mixed with the
mean direction of previously seen source-task vectors; the mixing
coefficient is chosen by minimising a Monte-Carlo approximation of the
expected 0-1 risk.
"""

from .errors import FldTransferError
from .fld import AssumptionTransform, FldFit, estimate_class_stats, fit_assumption_transform, fit_fld, predict, projection_covariance
from .kernels import BACKEND
from .stats import RngStream, TaskDistribution, VmfModel, sample_mvn, sample_task, sample_vmf
from .transfer import (
    AlphaGrid,
    RiskCurve,
    SourceSummary,
    closed_form_risk,
    combine,
    expected_risk_mc,
    optimal_alpha,
    oracle_alpha,
    reparameterize_alpha,
    summarize_sources,
)

__version__ = "0.1.0"
