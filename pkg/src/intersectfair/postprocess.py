"""Randomized thresholding derived predictors (RTDP) under fairness constraints.

A derived predictor thresholds a score at a per-subgroup ``tau`` and then
keeps a positive with probability ``p1`` or flips a negative with
probability ``p0``. For fixed thresholds every quantity of interest (expected
loss, TPR, FPR, positive rate) is linear in ``(p1, p0)``, so the constrained
problem is an LP. Four strategies are provided:

* :func:`optimize_randomization` -- thresholds fixed, LP over ``(p1, p0)``
* :func:`optimize_deterministic` -- ``p1 = 1, p0 = 0``, band sweep over thresholds
* :func:`optimize_sequential` -- unconstrained thresholds, then the LP
* :func:`optimize_overall` -- search over thresholds with the LP inside
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import AttributeSchema, FairnessError, LabeledDataset
from .lp import LpProblem, LpStatus, solve
from .metrics import FairnessMetric, RateTable, epsilon
from .rng import RngStream, as_generator

TAU_MAX = float(np.nextafter(1.0, 2.0))


class MissingRocPoint(FairnessError, KeyError):
    pass


class InfeasibleConstraint(FairnessError, RuntimeError):
    pass


class UnknownSubgroup(FairnessError, KeyError):
    pass


class InvalidCost(FairnessError, ValueError):
    pass


@dataclass(frozen=True)
class LossSpec:
    """Costs of a false positive (``l01``) and a false negative (``l10``)."""

    l01: float = 1.0
    l10: float = 1.0

    def __post_init__(self):
        if self.l01 < 0 or self.l10 < 0 or (self.l01 == 0 and self.l10 == 0):
            raise ValueError("losses must be non-negative and not both zero")


@dataclass(frozen=True)
class FairnessConstraint:
    metric: FairnessMetric
    eps_max: float

    def __post_init__(self):
        m = FairnessMetric.parse(self.metric)
        if m.is_data_metric:
            raise ValueError(f"{m.value} is a data metric and cannot constrain a predictor")
        if not self.eps_max >= 0:
            raise ValueError("eps_max must be non-negative")
        object.__setattr__(self, "metric", m)
        object.__setattr__(self, "eps_max", float(self.eps_max))

    @classmethod
    def parse(cls, text: str) -> "FairnessConstraint":
        name, _, eps = text.partition(":")
        if not eps:
            raise ValueError(f"constraint {text!r} should look like METRIC:EPS")
        return cls(FairnessMetric.parse(name), float(eps))


@dataclass(frozen=True)
class RTDPParams:
    tau: np.ndarray
    p1: np.ndarray
    p0: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(getattr(self, k), dtype=float).reshape(-1) for k in ("tau", "p1", "p0")]
        if len({a.size for a in arrs}) != 1:
            raise ValueError("tau, p1, p0 must have one entry per subgroup")
        if ((arrs[0] < 0) | (arrs[0] > TAU_MAX)).any():
            raise ValueError("tau must lie in [0, 1] (or the never-positive sentinel)")
        for a in arrs[1:]:
            if ((a < 0) | (a > 1)).any():
                raise ValueError("p1 and p0 must lie in [0, 1]")
        for k, a in zip(("tau", "p1", "p0"), arrs):
            object.__setattr__(self, k, a)

    @classmethod
    def deterministic(cls, tau) -> "RTDPParams":
        tau = np.asarray(tau, dtype=float)
        return cls(tau, np.ones_like(tau), np.zeros_like(tau))

    @property
    def is_deterministic(self) -> bool:
        return bool((self.p1 == 1.0).all() and (self.p0 == 0.0).all())

    def __len__(self):
        return self.tau.size


@dataclass(frozen=True)
class SubgroupModelStats:
    """Subgroup masses, outcome rates and per-subgroup ROC grids.

    ROC arrays are ordered by decreasing threshold, so ``tpr``/``fpr`` are
    nondecreasing. ``levels`` (sorted distinct scores) are present when the
    stats were fitted on data and let any threshold be mapped onto its grid
    point; hand-built stats only resolve thresholds listed in ``taus``.
    ``n1``/``n0`` are class counts; a subgroup with no members of a class is
    left out of constraints on the rates conditioned on that class unless
    ``smoothed`` is set, in which case its smoothed rates take part like the
    smoothed empirical estimator's do.  Empty subgroups never take part.
    """

    mu: np.ndarray
    mu1: np.ndarray
    taus: tuple
    tpr: tuple
    fpr: tuple
    n1: np.ndarray | None = None
    n0: np.ndarray | None = None
    levels: tuple | None = None
    schema: AttributeSchema | None = field(default=None, compare=False)
    smoothed: bool = False

    def __post_init__(self):
        k = len(np.atleast_1d(self.mu))
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float).reshape(k))
        object.__setattr__(self, "mu1", np.asarray(self.mu1, dtype=float).reshape(k))
        for name in ("taus", "tpr", "fpr"):
            v = tuple(np.asarray(a, dtype=float).reshape(-1) for a in getattr(self, name))
            if len(v) != k:
                raise ValueError(f"{name} needs one array per subgroup")
            object.__setattr__(self, name, v)
        for s in range(k):
            if not (self.taus[s].size == self.tpr[s].size == self.fpr[s].size) or not self.taus[s].size:
                raise ValueError(f"ROC grid of subgroup {s} is malformed")
            if (np.diff(self.taus[s]) >= 0).any():
                raise ValueError("ROC thresholds must be strictly decreasing")
            if (np.diff(self.tpr[s]) < -1e-15).any() or (np.diff(self.fpr[s]) < -1e-15).any():
                raise ValueError("ROC rates must be nondecreasing as the threshold drops")
        for name in ("n1", "n0"):
            v = getattr(self, name)
            object.__setattr__(self, name, np.ones(k) if v is None else np.asarray(v, dtype=float))

    @property
    def k(self) -> int:
        return self.mu.size

    @property
    def base_rate(self) -> float:
        return float(self.mu @ self.mu1)

    @property
    def grid_sizes(self) -> tuple[int, ...]:
        return tuple(t.size for t in self.taus)

    def index_of(self, s: int, tau: float) -> int:
        hit = np.flatnonzero(np.abs(self.taus[s] - tau) <= 1e-12)
        if hit.size:
            return int(hit[0])
        if self.levels is None:
            raise MissingRocPoint(f"threshold {tau} is not on the ROC grid of subgroup {s}")
        lev = self.levels[s]
        return int(lev.size - np.searchsorted(lev, tau, side="left"))

    def indices(self, taus: Sequence[float]) -> np.ndarray:
        return np.array([self.index_of(s, t) for s, t in enumerate(taus)], dtype=np.int64)

    def rates_at(self, idx: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        idx = np.asarray(idx)
        tpr = np.array([self.tpr[s][j] for s, j in enumerate(idx)])
        fpr = np.array([self.fpr[s][j] for s, j in enumerate(idx)])
        return tpr, fpr

    @classmethod
    def from_rates(cls, mu, mu1, tpr, fpr, tau: float = 1.0, **kw) -> "SubgroupModelStats":
        """Stats of a binary predictor: one ROC point per subgroup at ``tau``."""
        k = len(mu)
        return cls(mu, mu1, tuple(np.full(1, float(tau)) for _ in range(k)),
                   tuple(np.atleast_1d(float(t)) for t in tpr),
                   tuple(np.atleast_1d(float(f)) for f in fpr), **kw)

    @classmethod
    def from_data(cls, data: LabeledDataset, alpha: float = 0.01, beta: float = 0.01,
                  binarize_at: float | None = None) -> "SubgroupModelStats":
        """Smoothed plug-in stats with candidate thresholds between observed scores.

        Every ROC point, the two sentinels included, is
        ``(count + alpha) / (class size + alpha + beta)``, the same rate the
        smoothed empirical estimator reports for that binarization.  With
        ``alpha = beta = 0`` the endpoints are exactly (0, 0) and (1, 1).

        With ``binarize_at`` the scores are first reduced to ``score >= binarize_at``.
        """
        if data.scores is None:
            raise ValueError("model stats need predictions")
        scores = data.scores
        if binarize_at is not None:
            scores = (scores >= binarize_at).astype(float)
        k = data.schema.size
        n = np.bincount(data.groups, minlength=k).astype(float)
        n1 = np.bincount(data.groups, weights=data.y, minlength=k)
        n0 = n - n1
        total = n.sum()
        mu = n / total
        mu1 = (n1 + alpha) / (n + alpha + beta)
        order = np.lexsort((scores, data.groups))
        g_sorted, s_sorted, y_sorted = data.groups[order], scores[order], data.y[order]
        bounds = np.searchsorted(g_sorted, np.arange(k + 1))
        taus, tprs, fprs, levels = [], [], [], []
        for s in range(k):
            sc, yy = s_sorted[bounds[s]:bounds[s + 1]], y_sorted[bounds[s]:bounds[s + 1]]
            lev, inv = np.unique(sc, return_inverse=True)
            pos = np.bincount(inv, weights=yy, minlength=lev.size)[::-1]
            neg = np.bincount(inv, weights=1 - yy, minlength=lev.size)[::-1]
            tp = np.concatenate([[0.0], np.cumsum(pos)])
            fp = np.concatenate([[0.0], np.cumsum(neg)])
            tpr = _smoothed_curve(tp, n1[s], alpha, beta)
            fpr = _smoothed_curve(fp, n0[s], alpha, beta)
            taus.append(_grid_taus(lev))
            tprs.append(tpr)
            fprs.append(fpr)
            levels.append(lev)
        return cls(mu, mu1, tuple(taus), tuple(tprs), tuple(fprs), n1, n0, tuple(levels),
                   data.schema, smoothed=alpha + beta > 0)


def _smoothed_curve(cum: np.ndarray, total: float, alpha: float, beta: float) -> np.ndarray:
    den = total + alpha + beta
    if den > 0:
        return (cum + alpha) / den
    # an empty class without smoothing has no rate; keep the curve well formed
    out = np.zeros(cum.size)
    out[-1] = 1.0
    return out


def _grid_taus(levels: np.ndarray) -> np.ndarray:
    """Thresholds for 0, 1, ..., L highest score levels predicted positive."""
    if levels.size == 0:
        return np.array([0.0])
    top = levels[-1]
    hi = (top + 1.0) / 2.0 if top < 1.0 else TAU_MAX
    mids = (levels[1:] + levels[:-1])[::-1] / 2.0
    # scores are >= 0, so tau = 0 admits every level including a score of exactly 0
    return np.concatenate([[hi], mids, [0.0]])


# -- analytic quantities -----------------------------------------------------

def _derived(params: RTDPParams, stats: SubgroupModelStats):
    """Post-processed (FPR, FNR) per subgroup."""
    tpr, fpr = stats.rates_at(stats.indices(params.tau))
    p1, p0 = params.p1, params.p0
    fpr_t = p0 * (1.0 - fpr) + p1 * fpr
    fnr_t = (1.0 - p0) * (1.0 - tpr) + (1.0 - p1) * tpr
    return fpr_t, fnr_t


def expected_loss(params: RTDPParams, stats: SubgroupModelStats, loss: LossSpec = LossSpec()) -> float:
    """Expected loss of the derived predictor, summed over subgroups."""
    fpr_t, fnr_t = _derived(params, stats)
    per = fpr_t * (1.0 - stats.mu1) * loss.l01 + fnr_t * stats.mu1 * loss.l10
    return float(stats.mu @ per)


def utility(params: RTDPParams, stats: SubgroupModelStats, c: float) -> float:
    """Immediate utility E[Y*Yt - c*Yt] of the derived predictor."""
    if not 0.0 < c < 1.0:
        raise InvalidCost("c must lie in (0, 1)")
    fpr_t, fnr_t = _derived(params, stats)
    per = (1.0 - c) * stats.mu1 * (1.0 - fnr_t) - c * (1.0 - stats.mu1) * fpr_t
    return float(stats.mu @ per)


def predicted_positive_rate(params: RTDPParams, stats: SubgroupModelStats, s: int) -> float:
    fpr_t, fnr_t = _derived(params, stats)
    return float(fpr_t[s] * (1.0 - stats.mu1[s]) + (1.0 - fnr_t[s]) * stats.mu1[s])


def _linear_rates(part: FairnessMetric, tpr, fpr, mu1):
    """Coefficients (on p1, on p0) of a derived per-subgroup rate."""
    if part is FairnessMetric.TPR_PARITY:
        return tpr, 1.0 - tpr
    if part is FairnessMetric.FPR_PARITY:
        return fpr, 1.0 - fpr
    if part is FairnessMetric.STATISTICAL_PARITY:
        return fpr * (1 - mu1) + tpr * mu1, (1 - fpr) * (1 - mu1) + (1 - tpr) * mu1
    raise ValueError(part)


def _support(part: FairnessMetric, stats: SubgroupModelStats) -> np.ndarray:
    if stats.smoothed:
        return (stats.n1 + stats.n0) > 0
    if part is FairnessMetric.TPR_PARITY:
        return stats.n1 > 0
    if part is FairnessMetric.FPR_PARITY:
        return stats.n0 > 0
    return (stats.n1 + stats.n0) > 0


def derived_rate_table(params: RTDPParams, stats: SubgroupModelStats, part: FairnessMetric) -> RateTable:
    tpr, fpr = stats.rates_at(stats.indices(params.tau))
    a, b = _linear_rates(part, tpr, fpr, stats.mu1)
    r = params.p1 * a + params.p0 * b
    sup = _support(part, stats)
    return RateTable(part, np.where(sup, r, np.nan), sup.astype(float), None, stats.schema)


def achieved_epsilon(params: RTDPParams, stats: SubgroupModelStats, metric) -> float:
    """Epsilon of the derived predictor on the analytic rates it was fitted to."""
    metric = FairnessMetric.parse(metric)
    return max(epsilon(derived_rate_table(params, stats, part))[0] for part in metric.components)


def _parts(constraints: Sequence[FairnessConstraint]) -> dict[FairnessMetric, float]:
    """Tightest bound per rate-level metric."""
    out: dict[FairnessMetric, float] = {}
    for con in constraints:
        for part in con.metric.components:
            out[part] = min(out.get(part, math.inf), con.eps_max)
    return out


@dataclass(frozen=True)
class PostprocessResult:
    params: RTDPParams
    loss: float
    achieved_eps: dict
    mode: str
    feasible: bool = True
    fallback: bool = False
    lp_objective: float | None = None
    evaluations: int = 0


def _report(params, stats, loss, constraints, mode, **kw) -> PostprocessResult:
    eps = {c.metric: achieved_epsilon(params, stats, c.metric) for c in constraints}
    return PostprocessResult(params, expected_loss(params, stats, loss), eps, mode, **kw)


# -- randomization LP ----------------------------------------------------------

def build_lp(stats: SubgroupModelStats, loss: LossSpec, constraints, idx) -> tuple[LpProblem, float]:
    """LP at fixed grid indices; returns (problem, constant).

    Variables are x = (p1_0, p0_0, p1_1, p0_1, ..., z_1, z_2, ...) with one band
    floor ``z`` per constrained rate.  The pairwise conditions r_s <= e**eps * r_t
    hold for every ordered pair exactly when some z has z <= r_s <= e**eps * z
    for all s (take z = min r), so each rate costs 2k rows instead of k(k - 1).
    """
    k = stats.k
    tpr, fpr = stats.rates_at(idx)
    mu, mu1 = stats.mu, stats.mu1
    parts = [(part, eps) for part, eps in _parts(constraints).items()
             if np.count_nonzero(_support(part, stats)) >= 2]
    n = 2 * k + len(parts)
    c = np.zeros(n)
    c[0:2 * k:2] = mu * ((1 - mu1) * loss.l01 * fpr - mu1 * loss.l10 * tpr)
    c[1:2 * k:2] = mu * ((1 - mu1) * loss.l01 * (1 - fpr) - mu1 * loss.l10 * (1 - tpr))
    const = float(mu @ (mu1 * loss.l10))
    rows = []
    for j, (part, eps) in enumerate(parts):
        a, b = _linear_rates(part, tpr, fpr, mu1)
        sup = np.flatnonzero(_support(part, stats))
        r = np.arange(sup.size)
        floor = np.zeros((sup.size, n))  # z - r_s <= 0
        floor[r, 2 * sup] = -a[sup]
        floor[r, 2 * sup + 1] = -b[sup]
        floor[:, 2 * k + j] = 1.0
        ceil = -floor  # r_s - e**eps z <= 0
        ceil[:, 2 * k + j] = -math.exp(eps)
        rows += [floor, ceil]
    a_ub = np.vstack(rows) if rows else np.zeros((0, n))
    bounds = np.tile([0.0, 1.0], (n, 1))
    return LpProblem(c, a_ub, np.zeros(a_ub.shape[0]), bounds), const


def _solve_at(stats, loss, constraints, idx):
    problem, const = build_lp(stats, loss, constraints, idx)
    sol = solve(problem)
    if sol.status is LpStatus.INFEASIBLE:
        raise InfeasibleConstraint("no randomization satisfies the constraints at these thresholds")
    if sol.status is not LpStatus.OPTIMAL:
        raise InfeasibleConstraint(f"LP solver stopped with status {sol.status.value}")
    return sol.x[:2 * stats.k], sol.objective + const


def _taus_of(stats, idx) -> np.ndarray:
    return np.array([stats.taus[s][j] for s, j in enumerate(idx)])


def optimize_randomization(stats: SubgroupModelStats, loss: LossSpec = LossSpec(),
                           constraints: Sequence[FairnessConstraint] = (),
                           taus: Sequence[float] | None = None) -> PostprocessResult:
    """Optimal keep/flip probabilities at fixed thresholds (all 1.0 by default)."""
    taus = np.ones(stats.k) if taus is None else np.asarray(taus, dtype=float)
    idx = stats.indices(taus)
    x, obj = _solve_at(stats, loss, constraints, idx)
    params = RTDPParams(taus, x[0::2], x[1::2])
    return _report(params, stats, loss, constraints, "randomize", lp_objective=obj, evaluations=1)


# -- deterministic band sweep --------------------------------------------------

class _RangeMin:
    """Sparse-table argmin over a fixed array (ties resolve to the lower index)."""

    def __init__(self, values: np.ndarray):
        self.v = values
        n = values.size
        table = [np.arange(n)]
        span = 1
        while 2 * span <= n:
            prev = table[-1]
            left, right = prev[:n - 2 * span + 1], prev[span:n - span + 1]
            table.append(np.where(values[right] < values[left], right, left))
            span *= 2
        self.table = table

    def query(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        length = hi - lo + 1
        lev = np.floor(np.log2(np.maximum(length, 1))).astype(int)
        out = np.empty(lo.shape, dtype=np.int64)
        for L in np.unique(lev):
            m = lev == L
            a = self.table[L][lo[m]]
            b = self.table[L][hi[m] - (1 << L) + 1]
            out[m] = np.where(self.v[b] < self.v[a], b, a)
        return out


def _grid_loss(stats: SubgroupModelStats, loss: LossSpec, s: int) -> np.ndarray:
    mu, mu1 = stats.mu[s], stats.mu1[s]
    return mu * ((1 - mu1) * loss.l01 * stats.fpr[s] + mu1 * loss.l10 * (1 - stats.tpr[s]))


def _grid_rates(stats, part, s):
    return _linear_rates(part, stats.tpr[s], stats.fpr[s], stats.mu1[s])[0]


def _thin(values: np.ndarray, limit: int) -> np.ndarray:
    if values.size <= limit:
        return values
    pick = np.unique(np.round(np.linspace(0, values.size - 1, limit)).astype(int))
    return values[pick]


def optimize_deterministic(stats: SubgroupModelStats, loss: LossSpec = LossSpec(),
                           constraints: Sequence[FairnessConstraint] = (),
                           max_anchors: int = 512) -> PostprocessResult:
    """Best per-subgroup thresholds with every constrained rate inside a common band.

    For each constrained rate the band ``[a, a * e**eps]`` is anchored at a
    pooled ROC rate ``a``; all subgroups must have their point inside every
    band, and each subgroup independently takes its cheapest admissible point.
    When no anchor admits every subgroup the cheaper of the all-negative and
    all-positive predictors is returned with ``fallback=True``.
    """
    k = stats.k
    losses = [_grid_loss(stats, loss, s) for s in range(k)]
    parts = _parts(constraints)
    if not parts:
        idx = np.array([int(np.argmin(l)) for l in losses])
        return _report(RTDPParams.deterministic(_taus_of(stats, idx)), stats, loss, constraints,
                       "deterministic", evaluations=1)

    rmq = [_RangeMin(l) for l in losses]
    plist = list(parts.items())
    rates = {p: [_grid_rates(stats, p, s) for s in range(k)] for p, _ in plist}
    support = {p: _support(p, stats) for p, _ in plist}
    anchors = []
    for p, _ in plist:
        pooled = np.unique(np.concatenate([rates[p][s] for s in range(k) if support[p][s]] or [[0.0]]))
        anchors.append(_thin(pooled, max_anchors))

    def bounds(p, eps, s, a):
        r = rates[p][s]
        lo = np.searchsorted(r, a, side="left")
        hi = np.searchsorted(r, a * math.exp(eps) * (1 + 1e-12), side="right") - 1
        return lo, hi

    best_val, best_idx = math.inf, None
    last_p, last_eps = plist[-1]
    a_last = anchors[-1]
    evals = 0
    for head in itertools.product(*anchors[:-1]):
        total = np.zeros(a_last.size)
        ok = np.ones(a_last.size, dtype=bool)
        picks = np.zeros((k, a_last.size), dtype=np.int64)
        for s in range(k):
            lo = np.zeros(a_last.size, dtype=np.int64)
            hi = np.full(a_last.size, losses[s].size - 1, dtype=np.int64)
            for (p, eps), a in zip(plist[:-1], head):
                if support[p][s]:
                    l0, h0 = bounds(p, eps, s, a)
                    lo, hi = np.maximum(lo, l0), np.minimum(hi, h0)
            if support[last_p][s]:
                l0, h0 = bounds(last_p, last_eps, s, a_last)
                lo, hi = np.maximum(lo, l0), np.minimum(hi, h0)
            ok &= lo <= hi
            j = rmq[s].query(np.where(ok, lo, 0), np.where(ok, hi, 0))
            picks[s] = j
            total += losses[s][j]
        evals += a_last.size
        total = np.where(ok, total, np.inf)
        i = int(np.argmin(total))
        if total[i] < best_val - 1e-15:
            best_val, best_idx = float(total[i]), picks[:, i].copy()

    if best_idx is None:
        # constant predictors: every rate is 0 (or 1) in every subgroup, so eps = 0
        top = _taus_of(stats, np.zeros(k, dtype=np.int64))
        consts = [RTDPParams(top, np.full(k, c), np.full(k, c)) for c in (0.0, 1.0)]
        params = min(consts, key=lambda q: expected_loss(q, stats, loss))
        return _report(params, stats, loss, constraints, "deterministic", fallback=True,
                       evaluations=evals)
    return _report(RTDPParams.deterministic(_taus_of(stats, best_idx)), stats, loss, constraints,
                   "deterministic", evaluations=evals)


# -- thresholds + randomization ----------------------------------------------

def optimize_sequential(stats: SubgroupModelStats, loss: LossSpec = LossSpec(),
                        constraints: Sequence[FairnessConstraint] = ()) -> PostprocessResult:
    """Unconstrained optimal thresholds, then the randomization LP on top.

    Always feasible, but not guaranteed to be the joint optimum.
    """
    base = optimize_deterministic(stats, loss, ())
    res = optimize_randomization(stats, loss, constraints, base.params.tau)
    return PostprocessResult(res.params, res.loss, res.achieved_eps, "sequential",
                             lp_objective=res.lp_objective, evaluations=2)


def optimize_overall(stats: SubgroupModelStats, loss: LossSpec = LossSpec(),
                     constraints: Sequence[FairnessConstraint] = (), search_budget: int | None = None,
                     restarts: int = 5, rng: RngStream | int = 0, max_candidates: int = 16,
                     exhaustive_limit: int = 4096) -> PostprocessResult:
    """Minimize the LP optimum ``f(tau)`` over threshold vectors.

    ``f`` is piecewise constant, so the search moves on the ROC grids: when
    the full product grid has at most ``exhaustive_limit`` points it is
    enumerated; otherwise coordinate descent (``search_budget`` coordinate
    moves per start, default two passes, each scanning up to
    ``max_candidates`` thresholds) runs
    from the sequential solution, the constrained deterministic solution when
    it is feasible, and ``restarts`` random threshold vectors. Starting from
    those two solutions guarantees a loss no worse than either.
    """
    k = stats.k
    sizes = stats.grid_sizes
    budget = 2 * k if search_budget is None else int(search_budget)
    if budget < k:
        raise ValueError("search_budget must allow at least one pass over the subgroups")
    cache: dict[tuple, tuple] = {}

    def f(idx) -> float:
        key = tuple(int(j) for j in idx)
        if key not in cache:
            cache[key] = _solve_at(stats, loss, constraints, np.array(key))
        return cache[key][1]

    def better(a_val, a_idx, b_val, b_idx) -> bool:
        if a_val < b_val - 1e-12:
            return True
        if a_val > b_val + 1e-12:
            return False
        return tuple(_taus_of(stats, a_idx)) < tuple(_taus_of(stats, b_idx))

    best_idx, best_val = None, math.inf
    if math.prod(sizes) <= exhaustive_limit:
        for idx in itertools.product(*(range(n) for n in sizes)):
            v = f(idx)
            if best_idx is None or better(v, idx, best_val, best_idx):
                best_idx, best_val = tuple(idx), v
    else:
        seq = optimize_deterministic(stats, loss, ())
        starts = [stats.indices(seq.params.tau)]
        det = optimize_deterministic(stats, loss, constraints)
        if det.feasible:
            starts.append(stats.indices(det.params.tau))
        gen = as_generator(rng)
        for _ in range(restarts):
            starts.append(np.array([gen.integers(0, n) for n in sizes]))
        for start in starts:
            cur = list(int(j) for j in start)
            cur_val = f(cur)
            steps, improved = 0, True
            while improved and steps < budget:
                improved = False
                for s in range(k):
                    if steps >= budget:
                        break
                    steps += 1
                    cands = np.union1d(_thin(np.arange(sizes[s]), max_candidates), [cur[s]])
                    for j in cands:
                        trial = cur.copy()
                        trial[s] = int(j)
                        v = f(trial)
                        if v < cur_val - 1e-12:
                            cur, cur_val, improved = trial, v, True
            if best_idx is None or better(cur_val, cur, best_val, best_idx):
                best_idx, best_val = tuple(cur), cur_val
    x, obj = cache[tuple(best_idx)]
    params = RTDPParams(_taus_of(stats, best_idx), x[0::2], x[1::2])
    return _report(params, stats, loss, constraints, "overall", lp_objective=obj,
                   evaluations=len(cache))


MODES = {
    "randomize": optimize_randomization,
    "deterministic": optimize_deterministic,
    "sequential": optimize_sequential,
    "overall": optimize_overall,
}


def apply_rtdp(params: RTDPParams, data: LabeledDataset, rng: RngStream | int = 0) -> np.ndarray:
    """Draw post-processed 0/1 predictions; deterministic params ignore the rng."""
    if data.scores is None:
        raise ValueError("applying an RTDP needs predictions")
    if data.schema.size != len(params):
        raise UnknownSubgroup("parameters do not cover the dataset's subgroups")
    g = data.groups
    above = data.scores >= params.tau[g]
    prob = np.where(above, params.p1[g], params.p0[g])
    u = as_generator(rng).random(len(data))
    return (u < prob).astype(np.int8)
