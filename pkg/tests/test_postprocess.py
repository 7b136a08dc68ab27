import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from intersectfair.core import AttributeSchema, LabeledDataset
from intersectfair.lp import solve
from intersectfair.metrics import MODEL_METRICS, FairnessMetric
from intersectfair.postprocess import (FairnessConstraint, InvalidCost, LossSpec, MissingRocPoint,
                                       RTDPParams, SubgroupModelStats, UnknownSubgroup,
                                       achieved_epsilon, apply_rtdp, build_lp, derived_rate_table,
                                       expected_loss, optimize_deterministic, optimize_overall,
                                       optimize_randomization, optimize_sequential,
                                       predicted_positive_rate, utility)
from intersectfair.rng import RngStream
from intersectfair.synth import default_planted_rates, generate_scored


def random_stats(rng, k=3, points=8) -> SubgroupModelStats:
    """Hand-built ROC grids from (0, 0) to (1, 1), TPR above FPR on average."""
    taus, tprs, fprs = [], [], []
    for _ in range(k):
        j = points
        taus.append(np.linspace(1.0, 0.0, j))
        t = np.sort(rng.uniform(0, 1, j - 2) ** 0.5)
        f = np.sort(rng.uniform(0, 1, j - 2) ** 2)
        tprs.append(np.r_[0.0, t, 1.0])
        fprs.append(np.r_[0.0, f, 1.0])
    mu = rng.dirichlet(np.ones(k))
    mu1 = rng.uniform(0.1, 0.9, k)
    return SubgroupModelStats(mu, mu1, tuple(taus), tuple(tprs), tuple(fprs))


def random_params(rng, stats):
    tau = np.array([rng.choice(t) for t in stats.taus])
    return RTDPParams(tau, rng.uniform(0, 1, stats.k), rng.uniform(0, 1, stats.k))


def one_group(tpr, fpr, mu1):
    return SubgroupModelStats.from_rates([1.0], [mu1], [tpr], [fpr])


# -- analytic quantities -------------------------------------------------------

def test_loss_perfect_predictor_zero():
    st_ = one_group(1.0, 0.0, 0.3)
    assert expected_loss(RTDPParams.deterministic([1.0]), st_) == 0.0


def test_loss_everything_flipped():
    st_ = SubgroupModelStats.from_rates([0.4, 0.6], [0.3, 0.7], [1.0, 1.0], [0.0, 0.0])
    loss = LossSpec(2.0, 3.0)
    p = RTDPParams([1.0, 1.0], [0.0, 0.0], [1.0, 1.0])
    want = 0.4 * (0.7 * 2 + 0.3 * 3) + 0.6 * (0.3 * 2 + 0.7 * 3)
    assert expected_loss(p, st_, loss) == pytest.approx(want, abs=1e-15)


def test_loss_hand_value():
    st_ = one_group(0.8, 0.1, 0.3)
    assert expected_loss(RTDPParams.deterministic([1.0]), st_) == pytest.approx(0.13, abs=1e-15)


def test_utility_examples():
    st_ = one_group(1.0, 0.0, 0.3)
    p = RTDPParams.deterministic([1.0])
    assert utility(p, st_, 0.5) == pytest.approx(0.15, abs=1e-15)
    never = RTDPParams([1.0], [0.0], [0.0])
    assert utility(never, st_, 0.5) == 0.0
    rng = np.random.default_rng(0)
    for _ in range(20):
        q = RTDPParams([1.0], rng.uniform(0, 1, 1), rng.uniform(0, 1, 1))
        total = utility(q, st_, 0.5) + expected_loss(q, st_, LossSpec(0.5, 0.5))
        assert total == pytest.approx(0.15, abs=1e-12)
    with pytest.raises(InvalidCost):
        utility(p, st_, 1.0)


def test_predicted_positive_rate_trivial():
    st_ = one_group(0.7, 0.2, 0.4)
    assert predicted_positive_rate(RTDPParams([1.0], [1.0], [1.0]), st_, 0) == pytest.approx(1.0)
    assert predicted_positive_rate(RTDPParams([1.0], [0.0], [0.0]), st_, 0) == 0.0


def test_predicted_positive_rate_monte_carlo():
    rng = np.random.default_rng(4)
    stats = random_stats(rng, 3)
    params = random_params(rng, stats)
    gen = np.random.default_rng(5)
    tpr, fpr = stats.rates_at(stats.indices(params.tau))
    for s in range(3):
        n = 10**6
        y = gen.random(n) < stats.mu1[s]
        b = gen.random(n) < np.where(y, tpr[s], fpr[s])
        out = gen.random(n) < np.where(b, params.p1[s], params.p0[s])
        assert abs(out.mean() - predicted_positive_rate(params, stats, s)) < 0.005


def test_missing_roc_point():
    stats = one_group(0.5, 0.2, 0.3)
    with pytest.raises(MissingRocPoint):
        expected_loss(RTDPParams.deterministic([0.4]), stats)


def test_params_validation():
    assert RTDPParams.deterministic([0.3, 0.5]).is_deterministic
    assert not RTDPParams([0.3], [0.9], [0.0]).is_deterministic
    with pytest.raises(ValueError):
        RTDPParams([0.3], [1.2], [0.0])
    with pytest.raises(ValueError):
        FairnessConstraint("elift", 0.1)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 0.99))
def test_utility_loss_identity(seed, c):
    rng = np.random.default_rng(seed)
    stats = random_stats(rng, int(rng.integers(1, 6)))
    params = random_params(rng, stats)
    total = utility(params, stats, c) + expected_loss(params, stats, LossSpec(c, 1 - c))
    assert abs(total - (1 - c) * stats.base_rate) <= 1e-12


# -- stats from data -----------------------------------------------------------

def test_model_stats_grid_matches_direct_rates():
    d = generate_scored(default_planted_rates(), 3000, 2.0, 1)
    stats = SubgroupModelStats.from_data(d)
    for s in range(stats.k):
        m = d.groups == s
        sc, y = d.scores[m], d.y[m]
        n1 = y.sum()
        assert stats.tpr[s][0] == pytest.approx(0.01 / (n1 + 0.02))
        assert stats.fpr[s][-1] == pytest.approx((m.sum() - n1 + 0.01) / (m.sum() - n1 + 0.02))
        assert (np.diff(stats.taus[s]) < 0).all()
        for tau in (0.0, 0.05, 0.3, 0.5, 0.77, 1.0):
            j = stats.index_of(s, tau)
            want = ((sc >= tau) & (y == 1)).sum()
            assert stats.tpr[s][j] == pytest.approx((want + 0.01) / (n1 + 0.02))
        # every grid threshold reproduces its own point
        for j, tau in enumerate(stats.taus[s]):
            assert stats.index_of(s, tau) == j


# -- randomization LP ------------------------------------------------------------

def informative_stats(rng, k, loss):
    mu1 = rng.uniform(0.05, 0.95, k)
    tpr, fpr = np.empty(k), np.empty(k)
    for s in range(k):
        while True:
            t, f = rng.uniform(0, 1, 2)
            if ((1 - f) * (1 - mu1[s]) * loss.l01 > (1 - t) * mu1[s] * loss.l10
                    and t * mu1[s] * loss.l10 > f * (1 - mu1[s]) * loss.l01):
                break
        tpr[s], fpr[s] = t, f
    return SubgroupModelStats.from_rates(rng.dirichlet(np.ones(k)), mu1, tpr, fpr)


def test_informative_predictor_kept_unconstrained():
    rng = np.random.default_rng(2)
    for _ in range(50):
        loss = LossSpec(*rng.uniform(0.2, 2.0, 2))
        stats = informative_stats(rng, int(rng.integers(1, 7)), loss)
        res = optimize_randomization(stats, loss, [])
        assert np.allclose(res.params.p1, 1.0, atol=1e-9) and np.allclose(res.params.p0, 0.0, atol=1e-9)


def test_identical_subgroups_symmetric():
    single = SubgroupModelStats.from_rates([1.0], [0.4], [0.7], [0.2])
    twin = SubgroupModelStats.from_rates([0.5, 0.5], [0.4, 0.4], [0.7, 0.7], [0.2, 0.2])
    cons = [FairnessConstraint("statistical_parity", 0.0)]
    a = optimize_randomization(twin, LossSpec(), cons)
    b = optimize_randomization(single, LossSpec(), [])
    assert a.achieved_eps[FairnessMetric.STATISTICAL_PARITY] == pytest.approx(0.0, abs=1e-12)
    assert a.params.p1[0] == pytest.approx(a.params.p1[1]) and a.params.p0[0] == pytest.approx(a.params.p0[1])
    assert a.loss == pytest.approx(b.loss, abs=1e-12)


def test_two_group_statistical_parity_grid_oracle():
    stats = SubgroupModelStats.from_rates([0.3, 0.7], [0.2, 0.6], [0.7, 0.9], [0.1, 0.3])
    loss, eps = LossSpec(), 0.1
    res = optimize_randomization(stats, loss, [FairnessConstraint("statistical_parity", eps)])
    g = np.linspace(0, 1, 101)
    tpr, fpr = np.array([0.7, 0.9]), np.array([0.1, 0.3])
    a = fpr * (1 - stats.mu1) + tpr * stats.mu1
    b = (1 - fpr) * (1 - stats.mu1) + (1 - tpr) * stats.mu1
    best = np.inf
    p1b, p0b = np.meshgrid(g, g, indexing="ij")
    for p1a in g:
        for p0a in g:
            ra = p1a * a[0] + p0a * b[0]
            rb = p1b * a[1] + p0b * b[1]
            ok = (ra <= math.exp(eps) * rb + 1e-12) & (rb <= math.exp(eps) * ra + 1e-12)
            if not ok.any():
                continue
            la = stats.mu[0] * ((1 - stats.mu1[0]) * (p0a * (1 - fpr[0]) + p1a * fpr[0])
                                + stats.mu1[0] * ((1 - p0a) * (1 - tpr[0]) + (1 - p1a) * tpr[0]))
            lb = stats.mu[1] * ((1 - stats.mu1[1]) * (p0b * (1 - fpr[1]) + p1b * fpr[1])
                                + stats.mu1[1] * ((1 - p0b) * (1 - tpr[1]) + (1 - p1b) * tpr[1]))
            best = min(best, float((la + lb)[ok].min()))
    assert res.loss <= best + 1e-12
    assert best - res.loss <= 2e-3


def test_lp_objective_matches_expected_loss():
    rng = np.random.default_rng(7)
    for _ in range(30):
        stats = random_stats(rng, 4)
        cons = [FairnessConstraint(MODEL_METRICS[rng.integers(len(MODEL_METRICS))], rng.uniform(0, 1))]
        res = optimize_randomization(stats, LossSpec(), cons, [t[3] for t in stats.taus])
        assert res.lp_objective == pytest.approx(res.loss, abs=1e-9)


def test_relaxing_eps_never_increases_loss():
    rng = np.random.default_rng(9)
    for _ in range(10):
        stats = random_stats(rng, 4)
        taus = [t[4] for t in stats.taus]
        for metric in MODEL_METRICS:
            losses = [optimize_randomization(stats, LossSpec(), [FairnessConstraint(metric, e)], taus).loss
                      for e in (0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 3.0)]
            assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_build_lp_row_count():
    stats = random_stats(np.random.default_rng(0), 4)
    p, _ = build_lp(stats, LossSpec(), [FairnessConstraint("equalized_odds", 0.2)], [0, 0, 0, 0])
    # two rates, each with a floor variable and 2k band rows
    assert p.a_ub.shape == (2 * 2 * 4, 8 + 2)


def test_band_lp_matches_pairwise_lp():
    rng = np.random.default_rng(21)
    for _ in range(20):
        stats = random_stats(rng, 4)
        idx = [int(rng.integers(0, 8)) for _ in range(4)]
        eps = rng.uniform(0, 1)
        cons = [FairnessConstraint("equalized_odds", eps), FairnessConstraint("statistical_parity", eps / 2)]
        band, const = build_lp(stats, LossSpec(), cons, idx)
        # explicit ordered-pair rows on the p variables only
        tpr, fpr = stats.rates_at(idx)
        rows = []
        for a, b, e in ((tpr, 1 - tpr, eps), (fpr, 1 - fpr, eps),
                        (fpr * (1 - stats.mu1) + tpr * stats.mu1,
                         (1 - fpr) * (1 - stats.mu1) + (1 - tpr) * stats.mu1, eps / 2)):
            for s, t in itertools.permutations(range(4), 2):
                row = np.zeros(8)
                row[2 * s], row[2 * s + 1] = a[s], b[s]
                row[2 * t] -= math.exp(e) * a[t]
                row[2 * t + 1] -= math.exp(e) * b[t]
                rows.append(row)
        pair = linprog(band.c[:8], np.array(rows), np.zeros(len(rows)), bounds=[(0, 1)] * 8, method="highs")
        ours = solve(band)
        assert ours.ok and ours.objective == pytest.approx(pair.fun, abs=1e-9)


# -- deterministic / sequential / overall ------------------------------------------

def _exhaustive_det(stats, loss, constraints):
    best, arg = np.inf, None
    for idx in itertools.product(*(range(n) for n in stats.grid_sizes)):
        params = RTDPParams.deterministic([stats.taus[s][j] for s, j in enumerate(idx)])
        if all(achieved_epsilon(params, stats, c.metric) <= c.eps_max + 1e-12 for c in constraints):
            v = expected_loss(params, stats, loss)
            if v < best:
                best, arg = v, idx
    return best, arg


def test_deterministic_single_subgroup_scan():
    stats = random_stats(np.random.default_rng(3), 1, 15)
    res = optimize_deterministic(stats)
    scan = min(expected_loss(RTDPParams.deterministic([t]), stats) for t in stats.taus[0])
    assert res.loss == pytest.approx(scan, abs=1e-15)


def test_deterministic_identical_curves():
    rng = np.random.default_rng(4)
    one = random_stats(rng, 1, 12)
    stats = SubgroupModelStats([0.5, 0.5], [one.mu1[0]] * 2, one.taus * 2, one.tpr * 2, one.fpr * 2)
    res = optimize_deterministic(stats, LossSpec(), [FairnessConstraint("equalized_odds", 0.0)])
    assert res.params.tau[0] == res.params.tau[1]
    assert res.achieved_eps[FairnessMetric.EQUALIZED_ODDS] == 0.0
    free = optimize_deterministic(one)
    assert res.loss == pytest.approx(free.loss, abs=1e-15)


def test_deterministic_matches_exhaustive_product_grid():
    rng = np.random.default_rng(5)
    for _ in range(5):
        stats = random_stats(rng, 3, 20)
        cons = [FairnessConstraint("tpr_parity", 0.2)]
        res = optimize_deterministic(stats, LossSpec(), cons)
        best, _ = _exhaustive_det(stats, LossSpec(), cons)
        assert res.achieved_eps[FairnessMetric.TPR_PARITY] <= 0.2 + 1e-12
        assert res.loss == pytest.approx(best, abs=1e-14)


def test_deterministic_multi_metric_matches_exhaustive():
    rng = np.random.default_rng(6)
    for _ in range(4):
        stats = random_stats(rng, 3, 9)
        cons = [FairnessConstraint("equalized_odds", 0.4), FairnessConstraint("statistical_parity", 0.3)]
        res = optimize_deterministic(stats, LossSpec(1.0, 2.0), cons)
        best, _ = _exhaustive_det(stats, LossSpec(1.0, 2.0), cons)
        assert res.loss == pytest.approx(best, abs=1e-14)


def test_deterministic_fallback_to_trivial():
    # no threshold gives matching TPRs and neither grid contains an endpoint
    taus = (np.array([0.6, 0.4]),) * 2
    stats = SubgroupModelStats([0.5, 0.5], [0.5, 0.5], taus,
                               (np.array([0.9, 0.95]), np.array([0.1, 0.2])),
                               (np.array([0.5, 0.6]), np.array([0.05, 0.1])))
    res = optimize_deterministic(stats, LossSpec(), [FairnessConstraint("tpr_parity", 0.0)])
    assert res.fallback and res.feasible
    assert res.achieved_eps[FairnessMetric.TPR_PARITY] == 0.0
    assert np.ptp(res.params.p1) == 0 and np.ptp(res.params.p0) == 0
    assert res.loss == pytest.approx(0.5)


def test_sequential_unconstrained_is_deterministic_optimum():
    rng = np.random.default_rng(10)
    stats = random_stats(rng, 3, 10)
    seq = optimize_sequential(stats)
    det = optimize_deterministic(stats)
    assert np.array_equal(seq.params.tau, det.params.tau)
    assert seq.params.is_deterministic or seq.loss < det.loss - 1e-12
    assert seq.loss == pytest.approx(det.loss, abs=1e-12)


def test_overall_single_subgroup_equals_scan():
    stats = random_stats(np.random.default_rng(11), 1, 12)
    assert optimize_overall(stats).loss == pytest.approx(optimize_deterministic(stats).loss, abs=1e-12)


def test_overall_matches_exhaustive_f():
    rng = np.random.default_rng(12)
    stats = random_stats(rng, 2, 10)
    cons = [FairnessConstraint("equalized_odds", 0.15)]
    res = optimize_overall(stats, LossSpec(), cons)
    f = [optimize_randomization(stats, LossSpec(), cons, [a, b]).loss
         for a in stats.taus[0] for b in stats.taus[1]]
    assert res.loss == pytest.approx(min(f), abs=1e-12)


def test_overall_coordinate_search_beats_seeds():
    rng = np.random.default_rng(13)
    for _ in range(3):
        stats = random_stats(rng, 4, 12)
        cons = [FairnessConstraint("equalized_odds", 0.2)]
        res = optimize_overall(stats, LossSpec(), cons, exhaustive_limit=0, rng=RngStream(1))
        seq = optimize_sequential(stats, LossSpec(), cons)
        det = optimize_deterministic(stats, LossSpec(), cons)
        assert res.loss <= seq.loss + 1e-9 and res.loss <= det.loss + 1e-9
        assert res.achieved_eps[FairnessMetric.EQUALIZED_ODDS] <= 0.2 + 1e-6
    with pytest.raises(ValueError):
        optimize_overall(stats, search_budget=1, exhaustive_limit=0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(MODEL_METRICS), st.floats(0.0, 1.0))
def test_constraint_soundness_all_modes(seed, metric, eps):
    rng = np.random.default_rng(seed)
    stats = random_stats(rng, int(rng.integers(2, 4)), 6)
    cons = [FairnessConstraint(metric, eps)]
    for res in (optimize_randomization(stats, LossSpec(), cons),
                optimize_deterministic(stats, LossSpec(), cons),
                optimize_sequential(stats, LossSpec(), cons),
                optimize_overall(stats, LossSpec(), cons, exhaustive_limit=50)):
        assert res.feasible
        assert achieved_epsilon(res.params, stats, metric) <= eps + 1e-6


# -- applying -----------------------------------------------------------------

S = AttributeSchema.from_dict({"g": ["a", "b"]})


def test_apply_keep_and_flip():
    d = LabeledDataset(S, [0, 0, 1], [1, 0, 1], [0.7, 0.2, 0.5])
    keep = apply_rtdp(RTDPParams.deterministic([0.5, 0.5]), d)
    assert keep.tolist() == [1, 0, 1]
    flip = apply_rtdp(RTDPParams([0.5, 0.5], [0.0, 0.0], [1.0, 1.0]), d)
    assert flip.tolist() == [0, 1, 0]


def test_apply_flip_frequency_and_determinism():
    n = 10**5
    d = LabeledDataset(S, np.zeros(n, int), np.zeros(n, int), np.full(n, 0.1))
    p = RTDPParams([0.5, 0.5], [1.0, 1.0], [0.25, 0.25])
    out = apply_rtdp(p, d, RngStream(3))
    assert abs(out.mean() - 0.25) < 0.005
    assert np.array_equal(out, apply_rtdp(p, d, RngStream(3)))


def test_apply_unknown_subgroup():
    d = LabeledDataset(S, [1], [1], [0.5])
    with pytest.raises(UnknownSubgroup):
        apply_rtdp(RTDPParams.deterministic([0.5]), d)


def test_smoothed_stats_constrain_subgroups_without_positives():
    # subgroup b has no positives: the smoothed estimator still gives it a TPR of 0.5
    d = LabeledDataset(S, [0, 0, 0, 0, 1, 1, 1], [1, 1, 0, 0, 0, 0, 0],
                       [0.9, 0.4, 0.6, 0.1, 0.8, 0.3, 0.2])
    cons = [FairnessConstraint("tpr_parity", 0.1)]
    smoothed = SubgroupModelStats.from_data(d)
    raw = SubgroupModelStats.from_data(d, 0.0, 0.0)
    assert smoothed.smoothed and not raw.smoothed
    keep = RTDPParams.deterministic([0.5, 0.5])
    table = derived_rate_table(keep, smoothed, FairnessMetric.TPR_PARITY)
    assert table.rates[1] == pytest.approx(0.5)
    assert np.isnan(derived_rate_table(keep, raw, FairnessMetric.TPR_PARITY).rates[1])
    a = optimize_randomization(smoothed, LossSpec(), cons, [0.5, 0.5])
    b = optimize_randomization(raw, LossSpec(), cons, [0.5, 0.5])
    assert a.achieved_eps[FairnessMetric.TPR_PARITY] <= 0.1 + 1e-9
    assert b.loss <= a.loss + 1e-12
