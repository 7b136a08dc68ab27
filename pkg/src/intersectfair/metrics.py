"""Epsilon-differential fairness metrics for data and model outputs.

Every metric reduces to a vector of per-subgroup rates; the smallest epsilon
satisfying the definition is the log of the largest pairwise rate ratio (or,
for elift, the largest absolute log ratio to the population base rate).
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import CountsTable, FairnessError, AttributeSchema

BASE = "base"
EIGHTY_PERCENT_RULE = -math.log(0.8)


class DegenerateSubgroup(FairnessError, ValueError):
    pass


class ConfusionRequired(FairnessError, ValueError):
    pass


class FairnessMetric(str, enum.Enum):
    ELIFT = "elift"
    IMPACT_RATIO = "impact_ratio"
    STATISTICAL_PARITY = "statistical_parity"
    TPR_PARITY = "tpr_parity"
    FPR_PARITY = "fpr_parity"
    EQUALIZED_ODDS = "equalized_odds"

    @property
    def is_data_metric(self) -> bool:
        return self in (FairnessMetric.ELIFT, FairnessMetric.IMPACT_RATIO)

    @property
    def components(self) -> tuple["FairnessMetric", ...]:
        """Rate-level metrics a metric is the conjunction of."""
        if self is FairnessMetric.EQUALIZED_ODDS:
            return (FairnessMetric.TPR_PARITY, FairnessMetric.FPR_PARITY)
        return (self,)

    @classmethod
    def parse(cls, value) -> "FairnessMetric":
        if isinstance(value, cls):
            return value
        v = str(value).strip().lower().replace("-", "_")
        aliases = {"ir": "impact_ratio", "slift": "impact_ratio", "sp": "statistical_parity",
                   "demographic_parity": "statistical_parity", "equal_opportunity": "tpr_parity",
                   "tpr": "tpr_parity", "fpr": "fpr_parity", "eo": "equalized_odds"}
        return cls(aliases.get(v, v))


DATA_METRICS = (FairnessMetric.ELIFT, FairnessMetric.IMPACT_RATIO)
MODEL_METRICS = (FairnessMetric.STATISTICAL_PARITY, FairnessMetric.TPR_PARITY,
                 FairnessMetric.FPR_PARITY, FairnessMetric.EQUALIZED_ODDS)


@dataclass(frozen=True)
class RateTable:
    """Per-subgroup rates for one (rate-level) metric.

    ``rates`` is NaN for subgroups with no effective support; those are
    skipped by :func:`epsilon`.
    """

    metric: FairnessMetric
    rates: np.ndarray
    support: np.ndarray
    base: float | None = None
    schema: AttributeSchema | None = None


def metric_fractions(counts: CountsTable, metric: FairnessMetric) -> tuple[np.ndarray, np.ndarray]:
    """(numerator, denominator) count vectors behind a rate-level metric."""
    metric = FairnessMetric.parse(metric)
    if metric in DATA_METRICS:
        return counts.n1, counts.n
    if not counts.has_confusion:
        raise ConfusionRequired(f"{metric.value} needs predictions (confusion counts)")
    if metric is FairnessMetric.STATISTICAL_PARITY:
        return counts.tp + counts.fp, counts.n
    if metric is FairnessMetric.TPR_PARITY:
        return counts.tp, counts.n1
    if metric is FairnessMetric.FPR_PARITY:
        return counts.fp, counts.n0
    raise ValueError(f"{metric.value} is not a single-rate metric; use its components")


def rates_for_metric(counts: CountsTable, metric, smoothing=(0.0, 0.0)) -> RateTable:
    """Smoothed rates ``(num + alpha) / (den + alpha + beta)`` per subgroup.

    Subgroups whose smoothed denominator is zero get a NaN rate and a
    warning; if every subgroup is degenerate :class:`DegenerateSubgroup` is raised.
    """
    metric = FairnessMetric.parse(metric)
    alpha, beta = map(float, smoothing)
    if alpha < 0 or beta < 0:
        raise ValueError("smoothing parameters must be non-negative")
    num, den = metric_fractions(counts, metric)
    denom = den + alpha + beta
    bad = denom <= 0
    if bad.all():
        raise DegenerateSubgroup(f"no subgroup has support for {metric.value}")
    with np.errstate(invalid="ignore", divide="ignore"):
        rates = np.where(bad, np.nan, (num + alpha) / np.where(bad, 1.0, denom))
    if bad.any():
        warnings.warn(f"{int(bad.sum())} subgroup(s) without support excluded from {metric.value}",
                      RuntimeWarning, stacklevel=2)
    base = None
    if metric is FairnessMetric.ELIFT:
        base = (counts.total_n1 + alpha) / (counts.total_n + alpha + beta)
    return RateTable(metric, rates, np.asarray(den, dtype=float), base, counts.schema)


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def epsilon(rates: RateTable) -> tuple[float, tuple]:
    """Smallest epsilon for which the metric holds, and the worst offending pair.

    Pairwise metrics return ``(argmax, argmin)`` flat indices; elift returns
    ``(subgroup, "base")``. A rate of zero next to a positive rate gives an
    infinite epsilon; all-zero rates count as perfectly fair.
    """
    r = np.asarray(rates.rates, dtype=float)
    valid = np.flatnonzero(~np.isnan(r))
    if valid.size == 0:
        raise DegenerateSubgroup("no valid rates")
    rv = r[valid]
    if rates.metric is FairnessMetric.ELIFT:
        if rates.base is None or not rates.base > 0:
            raise DegenerateSubgroup("elift needs a positive base rate")
        dev = np.abs(_log(rv) - math.log(rates.base))
        i = int(np.argmax(dev))
        return float(dev[i]), (int(valid[i]), BASE)
    hi, lo = int(np.argmax(rv)), int(np.argmin(rv))
    if rv[hi] == 0.0:
        return 0.0, (int(valid[hi]), int(valid[lo]))
    eps = float(_log(rv[hi]) - _log(rv[lo]))
    return max(eps, 0.0), (int(valid[hi]), int(valid[lo]))


def epsilon_batch(rates: np.ndarray, metric: FairnessMetric, base=None) -> np.ndarray:
    """Vectorized epsilon over rows of a (draws, k) rate matrix; NaN columns ignored."""
    r = np.asarray(rates, dtype=float)
    if FairnessMetric.parse(metric) is FairnessMetric.ELIFT:
        base = np.broadcast_to(np.asarray(base, dtype=float), r.shape[:1])
        dev = np.abs(_log(r) - np.log(base)[:, None])
        return np.nanmax(dev, axis=1)
    hi = np.nanmax(r, axis=1)
    lo = np.nanmin(r, axis=1)
    with np.errstate(invalid="ignore"):
        eps = _log(hi) - _log(lo)
    return np.where(hi == 0.0, 0.0, np.maximum(eps, 0.0))


def epsilon_for(counts: CountsTable, metric, smoothing=(0.0, 0.0)) -> tuple[float, tuple]:
    """Epsilon for any metric; equalized odds takes the worse of its two parts."""
    metric = FairnessMetric.parse(metric)
    best = None
    for part in metric.components:
        res = epsilon(rates_for_metric(counts, part, smoothing))
        if best is None or res[0] > best[0]:
            best = res
    return best


def epsilon_equalized_odds(counts: CountsTable, smoothing=(0.0, 0.0)) -> float:
    return epsilon_for(counts, FairnessMetric.EQUALIZED_ODDS, smoothing)[0]


def check_threshold(eps: float, rule: float) -> bool:
    """True when ``eps`` satisfies a required bound (e.g. the 80% rule)."""
    if rule < 0:
        raise ValueError("rule must be non-negative")
    return eps <= rule + 1e-12


def bias_amplification(eps_ref: float, eps_other: float) -> float:
    """Multiplicative change in bias of one model relative to another."""
    return math.exp(eps_other - eps_ref)
