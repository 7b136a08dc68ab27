"""Robust estimators of epsilon: smoothed empirical, bootstrap and Bayesian.

All three share one reduction: per-subgroup (numerator, denominator) counts
are turned into rates and the rates into an epsilon. The bootstrap repeats
this on resampled tallies, the Bayesian estimator on posterior rate draws.
"""
from __future__ import annotations

import enum
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import CountsTable, FairnessError, LabeledDataset, cell_ids, build_counts
from .metrics import (BASE, DATA_METRICS, ConfusionRequired, FairnessMetric, epsilon_batch,
                      epsilon_for)
from .rng import RngStream, as_generator, sample_beta

DEFAULT_SMOOTHING = (0.01, 0.01)
DEFAULT_PRIOR = (1.0 / 3.0, 1.0 / 3.0)
DEFAULT_B = 1000
DEFAULT_M = 1000
DEFAULT_LEVEL = 0.95


class SmoothingRequired(FairnessError, ValueError):
    pass


class InvalidPrior(FairnessError, ValueError):
    pass


class Method(str, enum.Enum):
    EMPIRICAL = "empirical"
    BOOTSTRAP = "bootstrap"
    BAYESIAN = "bayesian"


@dataclass(frozen=True)
class EpsilonEstimate:
    metric: FairnessMetric
    method: Method
    point: float
    interval: tuple[float, float, float] | None = None
    worst_pair: tuple | None = None
    samples_used: int = 1
    degenerate_replicates: int = 0

    @property
    def exp_point(self) -> float:
        return float(np.exp(self.point))


def _fractions(cells: np.ndarray, metric: FairnessMetric) -> tuple[np.ndarray, np.ndarray]:
    """(num, den) from cell tallies shaped (..., k, 4) ordered tn, fp, fn, tp."""
    tn, fp, fn, tp = (cells[..., i] for i in range(4))
    if metric in DATA_METRICS:
        return fn + tp, tn + fp + fn + tp
    if metric is FairnessMetric.STATISTICAL_PARITY:
        return tp + fp, tn + fp + fn + tp
    if metric is FairnessMetric.TPR_PARITY:
        return tp, fn + tp
    if metric is FairnessMetric.FPR_PARITY:
        return fp, tn + fp
    raise ValueError(metric)


def _counts_cells(counts: CountsTable) -> np.ndarray:
    if counts.has_confusion:
        return np.stack([counts.tn, counts.fp, counts.fn, counts.tp], axis=1)
    # outcome-only table: park everything in the yhat = 0 cells
    return np.stack([counts.n0, np.zeros_like(counts.n), counts.n1, np.zeros_like(counts.n)], axis=1)


def _batch_eps(rates_by_part: list[tuple[FairnessMetric, np.ndarray, np.ndarray | None]]):
    """Epsilon per row and the (hi, lo) subgroup pair of the dominating part."""
    eps = None
    pairs = None
    for part, r, base in rates_by_part:
        e = epsilon_batch(r, part, base)
        if part is FairnessMetric.ELIFT:
            dev = np.abs(np.log(r) - np.log(base)[:, None])
            p = np.stack([np.nanargmax(dev, axis=1), np.full(len(r), -1)], axis=1)
        else:
            p = np.stack([np.nanargmax(r, axis=1), np.nanargmin(r, axis=1)], axis=1)
        if eps is None:
            eps, pairs = e, p
        else:
            take = e > eps
            eps = np.where(take, e, eps)
            pairs = np.where(take[:, None], p, pairs)
    return eps, pairs


def _modal_pair(pairs: np.ndarray) -> tuple:
    (hi, lo), _ = Counter(map(tuple, pairs.tolist())).most_common(1)[0]
    return (int(hi), BASE if lo == -1 else int(lo))


def _interval(samples: np.ndarray, level: float) -> tuple[float, float, float]:
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    lo, hi = np.quantile(samples, [(1.0 - level) / 2.0, 1.0 - (1.0 - level) / 2.0])
    return float(lo), float(hi), float(level)


def _check_metric(counts_or_data, metric: FairnessMetric):
    if metric not in DATA_METRICS:
        has = (counts_or_data.has_confusion if isinstance(counts_or_data, CountsTable)
               else counts_or_data.scores is not None)
        if not has:
            raise ConfusionRequired(f"{metric.value} needs predictions")


def estimate_empirical(counts: CountsTable, metric, alpha: float = DEFAULT_SMOOTHING[0],
                       beta: float = DEFAULT_SMOOTHING[1]) -> EpsilonEstimate:
    """Plug-in epsilon from smoothed subgroup rates."""
    metric = FairnessMetric.parse(metric)
    eps, pair = epsilon_for(counts, metric, (alpha, beta))
    return EpsilonEstimate(metric, Method.EMPIRICAL, eps, None, pair)


def _smoothed_rates(num, den, alpha, beta):
    return (num + alpha) / (den + alpha + beta)


def _replicate_eps(cells: np.ndarray, metric: FairnessMetric, alpha: float, beta: float,
                   ref_den: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """eps, worst pairs and degeneracy flags for a (R, k, 4) stack of tallies."""
    parts = []
    degenerate = np.zeros(cells.shape[0], dtype=bool)
    for part in metric.components:
        num, den = _fractions(cells, part)
        degenerate |= ((den == 0) & (ref_den[part] > 0)).any(axis=1)
        base = None
        if part is FairnessMetric.ELIFT:
            base = _smoothed_rates(num.sum(axis=1), den.sum(axis=1), alpha, beta)
        parts.append((part, _smoothed_rates(num, den, alpha, beta), base))
    eps, pairs = _batch_eps(parts)
    return eps, pairs, degenerate


def bootstrap_cells(data: LabeledDataset, B: int = DEFAULT_B, rng: RngStream | int = 0,
                    threshold: float | None = 0.5, workers: int = 1) -> np.ndarray:
    """(B, k, 4) cell tallies of rows resampled with replacement.

    Replicate ``b`` draws its row indices from stream ``(seed, b)``, so the
    tallies do not depend on ``workers``. One stack can serve every metric.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    n = len(data)
    if n < 1:
        raise ValueError("empty dataset")
    seed = rng.seed if isinstance(rng, RngStream) else int(rng)
    k = data.schema.size
    codes = cell_ids(data, threshold if data.scores is not None else None)

    def run(bs: range) -> np.ndarray:
        out = np.empty((len(bs), k, 4), dtype=np.int64)
        for j, b in enumerate(bs):
            idx = RngStream(seed, b).generator().integers(0, n, size=n)
            out[j] = np.bincount(codes[idx], minlength=4 * k).reshape(k, 4)
        return out

    if workers > 1:
        step = -(-B // workers)
        chunks = [range(lo, min(lo + step, B)) for lo in range(0, B, step)]
        with ThreadPoolExecutor(workers) as pool:
            return np.concatenate(list(pool.map(run, chunks)))
    return run(range(B))


def estimate_bootstrap(data: LabeledDataset, metric, B: int = DEFAULT_B,
                       alpha: float = DEFAULT_SMOOTHING[0], beta: float = DEFAULT_SMOOTHING[1],
                       rng: RngStream | int = 0, level: float = DEFAULT_LEVEL,
                       threshold: float = 0.5, workers: int = 1,
                       cells: np.ndarray | None = None) -> EpsilonEstimate:
    """Percentile bootstrap over rows resampled with replacement.

    ``cells`` may carry a precomputed :func:`bootstrap_cells` stack (built
    with the same threshold) so several metrics share one set of resamples.
    """
    metric = FairnessMetric.parse(metric)
    if alpha <= 0 or beta <= 0:
        raise SmoothingRequired("bootstrap needs alpha, beta > 0: resamples can empty a subgroup")
    _check_metric(data, metric)
    if cells is None:
        cells = bootstrap_cells(data, B, rng, threshold, workers)
    k = data.schema.size
    ref = np.bincount(cell_ids(data, threshold if data.scores is not None else None),
                      minlength=4 * k).reshape(k, 4)
    ref_den = {p: _fractions(ref, p)[1] for p in metric.components}
    eps, pairs, degenerate = _replicate_eps(cells, metric, alpha, beta, ref_den)
    return EpsilonEstimate(metric, Method.BOOTSTRAP, float(eps.mean()), _interval(eps, level),
                           _modal_pair(pairs), len(cells), int(degenerate.sum()))


def posterior_draws(counts: CountsTable, metric: FairnessMetric, m: int, alpha: float,
                    beta: float, gen: np.random.Generator):
    """Posterior rate draws per rate-level component: list of (part, (m, k) rates, base)."""
    cells = _counts_cells(counts)
    out = []
    for part in metric.components:
        num, den = _fractions(cells, part)
        k = num.size
        r = sample_beta(gen, np.broadcast_to(alpha + num, (m, k)),
                        np.broadcast_to(beta + den - num, (m, k)))
        base = None
        if part is FairnessMetric.ELIFT:
            base = sample_beta(gen, np.full(m, alpha + num.sum()),
                               np.full(m, beta + (den - num).sum()))
        out.append((part, r, base))
    return out


def estimate_bayesian(counts: CountsTable, metric, m: int = DEFAULT_M,
                      alpha: float = DEFAULT_PRIOR[0], beta: float = DEFAULT_PRIOR[1],
                      rng: RngStream | int = 0, level: float = DEFAULT_LEVEL) -> EpsilonEstimate:
    """Posterior mean and credible interval of epsilon under Beta-Binomial subgroups."""
    metric = FairnessMetric.parse(metric)
    if alpha <= 0 or beta <= 0:
        raise InvalidPrior("prior parameters must be positive")
    if m < 2:
        raise ValueError("m must be at least 2")
    _check_metric(counts, metric)
    draws = posterior_draws(counts, metric, m, alpha, beta, as_generator(rng))
    eps, pairs = _batch_eps(draws)
    return EpsilonEstimate(metric, Method.BAYESIAN, float(eps.mean()), _interval(eps, level),
                           _modal_pair(pairs), m, 0)


def estimate(data: LabeledDataset, metric, method, *, alpha=None, beta=None, B=DEFAULT_B,
             m=DEFAULT_M, rng: RngStream | int = 0, level=DEFAULT_LEVEL, threshold=0.5,
             workers=1, cells=None) -> EpsilonEstimate:
    """Dispatch to one estimator with that estimator's default smoothing/prior."""
    method = Method(method)
    if method is Method.BAYESIAN:
        a = DEFAULT_PRIOR[0] if alpha is None else alpha
        b = DEFAULT_PRIOR[1] if beta is None else beta
    else:
        a = DEFAULT_SMOOTHING[0] if alpha is None else alpha
        b = DEFAULT_SMOOTHING[1] if beta is None else beta
    metric = FairnessMetric.parse(metric)
    if method is Method.BOOTSTRAP:
        return estimate_bootstrap(data, metric, B, a, b, rng, level, threshold, workers, cells)
    counts = build_counts(data, threshold if data.scores is not None else None)
    if method is Method.EMPIRICAL:
        return estimate_empirical(counts, metric, a, b)
    return estimate_bayesian(counts, metric, m, a, b, rng, level)


def replicate_estimates(true_rates, n: int, reps: int, methods, rng: RngStream | int = 0,
                        B: int = DEFAULT_B, m: int = DEFAULT_M,
                        metric=FairnessMetric.IMPACT_RATIO) -> dict[Method, np.ndarray]:
    """Point estimates and interval widths over ``reps`` synthetic datasets of size ``n``.

    Returns ``{method: (reps, 2) array of (point, width)}``; width is NaN for
    the empirical estimator.
    """
    from .synth import generate

    root = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    methods = [Method(x) for x in methods]
    out = {mt: np.empty((reps, 2)) for mt in methods}
    for r in range(reps):
        stream = root.child(n, r)
        data = generate(true_rates, n, stream.child(0))
        for mt in methods:
            est = estimate(data, metric, mt, B=B, m=m, rng=stream.child(1 + list(Method).index(mt)))
            width = np.nan if est.interval is None else est.interval[1] - est.interval[0]
            out[mt][r] = est.point, width
    return out


def mse_study(true_rates, sizes, reps: int, methods, rng: RngStream | int = 0,
              B: int = DEFAULT_B, m: int = DEFAULT_M) -> list[dict]:
    """MSE of each estimator against the planted impact-ratio epsilon, per size."""
    truth = true_rates.true_epsilon(FairnessMetric.IMPACT_RATIO)
    rows = []
    for n in sizes:
        res = replicate_estimates(true_rates, int(n), reps, methods, rng, B, m)
        for mt, arr in res.items():
            pts = arr[:, 0]
            rows.append({"method": mt.value, "n": int(n),
                         "mse": float(np.mean((pts - truth) ** 2)),
                         "mean": float(pts.mean()),
                         "ci_width": float(np.nanmean(arr[:, 1])) if mt is not Method.EMPIRICAL else float("nan")})
    return rows
