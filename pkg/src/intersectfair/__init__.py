"""Intersectional differential-fairness auditing and fair post-processing."""
from .core import (AttributeSchema, CountsTable, FairnessError, LabeledDataset, build_counts,
                   enumerate_subgroups, marginalize)
from .estimation import (EpsilonEstimate, Method, estimate, estimate_bayesian, estimate_bootstrap,
                         estimate_empirical)
from .metrics import EIGHTY_PERCENT_RULE, FairnessMetric, epsilon, epsilon_for, rates_for_metric
from .postprocess import (FairnessConstraint, LossSpec, RTDPParams, SubgroupModelStats, apply_rtdp,
                          expected_loss, optimize_deterministic, optimize_overall,
                          optimize_randomization, optimize_sequential, utility)
from .rng import RngStream

__version__ = "0.1.0"

__all__ = [
    "AttributeSchema", "CountsTable", "FairnessError", "LabeledDataset", "build_counts",
    "enumerate_subgroups", "marginalize", "EpsilonEstimate", "Method", "estimate",
    "estimate_bayesian", "estimate_bootstrap", "estimate_empirical", "EIGHTY_PERCENT_RULE",
    "FairnessMetric", "epsilon", "epsilon_for", "rates_for_metric", "FairnessConstraint", "LossSpec",
    "RTDPParams", "SubgroupModelStats", "apply_rtdp", "expected_loss", "optimize_deterministic",
    "optimize_overall", "optimize_randomization", "optimize_sequential", "utility", "RngStream",
]
