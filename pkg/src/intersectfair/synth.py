"""Synthetic data with planted subgroup rates, plus experiment drivers.

Also provides an Adult-census-like generator and a small logistic-regression
stand-in classifier so the audit/post-processing pipeline can run end to end
without external data.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .core import AttributeSchema, LabeledDataset
from .estimation import DEFAULT_B, DEFAULT_M, Method, estimate
from .metrics import FairnessMetric
from .rng import RngStream, as_generator, sample_beta

PLANTED_SCHEMA = AttributeSchema((("a1", ("a", "b")), ("a2", ("x", "y", "z"))))


@dataclass(frozen=True)
class PlantedRates:
    """True subgroup masses ``mu`` and positive-outcome rates ``mu1`` (flat order)."""

    schema: AttributeSchema
    mu: np.ndarray
    mu1: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        mu1 = np.asarray(self.mu1, dtype=float)
        k = self.schema.size
        if mu.shape != (k,) or mu1.shape != (k,):
            raise ValueError("need one mass and one rate per subgroup")
        if not ((mu > 0) & (mu < 1)).all() or not ((mu1 > 0) & (mu1 < 1)).all():
            raise ValueError("planted probabilities must lie in (0, 1)")
        if abs(mu.sum() - 1.0) > 1e-12:
            raise ValueError("subgroup masses must sum to one")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "mu1", mu1)

    @property
    def base_rate(self) -> float:
        return float(self.mu @ self.mu1)

    def true_epsilon(self, metric=FairnessMetric.IMPACT_RATIO) -> float:
        metric = FairnessMetric.parse(metric)
        if metric is FairnessMetric.IMPACT_RATIO:
            return float(np.log(self.mu1.max() / self.mu1.min()))
        if metric is FairnessMetric.ELIFT:
            return float(np.abs(np.log(self.mu1 / self.base_rate)).max())
        raise ValueError("planted rates only define data metrics")


def default_planted_rates() -> PlantedRates:
    """Six subgroups (binary x ternary); the first is sparse with a 5% mass."""
    mu = np.array([0.05, 0.55, 0.1, 0.1, 0.1, 0.1])
    mu1 = np.array([0.05, 0.95, 0.5, 0.5, 0.5, 0.5])
    return PlantedRates(PLANTED_SCHEMA, mu, mu1)


def generate(rates: PlantedRates, n: int, rng=0) -> LabeledDataset:
    """``n`` iid rows: subgroup ~ Categorical(mu), outcome ~ Bernoulli(mu1[subgroup])."""
    if n < 1:
        raise ValueError("n must be positive")
    gen = as_generator(rng)
    cdf = np.cumsum(rates.mu)
    groups = np.minimum(np.searchsorted(cdf, gen.random(n), side="right"), rates.schema.size - 1)
    y = (gen.random(n) < rates.mu1[groups]).astype(np.int8)
    return LabeledDataset(rates.schema, groups, y)


def separation_weights(k: int) -> np.ndarray:
    """Per-subgroup multipliers that make ROC curves differ across subgroups."""
    return np.linspace(0.5, 1.5, k) if k > 1 else np.ones(1)


def generate_scored(rates: PlantedRates, n: int, quality, rng=0) -> LabeledDataset:
    """Planted data plus classifier-like scores.

    Scores are Beta(2 + q, 2) for positives and Beta(2, 2 + q) for negatives,
    with ``q = quality * w_s``; ``quality`` may also be a per-subgroup array
    used as ``q`` directly. ``quality = 0`` gives uninformative scores.
    """
    gen = as_generator(rng)
    base = generate(rates, n, gen)
    q = np.asarray(quality, dtype=float)
    if q.ndim == 0:
        q = float(q) * separation_weights(rates.schema.size)
    if q.shape != (rates.schema.size,) or (q < 0).any():
        raise ValueError("quality must be a non-negative scalar or per-subgroup array")
    sep = q[base.groups]
    pos = base.y == 1
    a = np.where(pos, 2.0 + sep, 2.0)
    b = np.where(pos, 2.0, 2.0 + sep)
    scores = sample_beta(gen, a, b)
    return LabeledDataset(base.schema, base.groups, base.y, scores)


def convergence_experiment(sizes, methods=tuple(Method), rng=0, rates: PlantedRates | None = None,
                           B: int = DEFAULT_B, m: int = DEFAULT_M,
                           metric=FairnessMetric.IMPACT_RATIO) -> list[dict]:
    """One dataset per size; every estimator's point and interval on it."""
    rates = rates or default_planted_rates()
    root = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    rows = []
    for n in sizes:
        stream = root.child(int(n))
        data = generate(rates, int(n), stream.child(0))
        for i, mt in enumerate(Method(x) for x in methods):
            est = estimate(data, metric, mt, B=B, m=m, rng=stream.child(1 + i))
            lo, hi = (est.interval[:2] if est.interval else (float("nan"), float("nan")))
            rows.append({"method": mt.value, "n": int(n), "point": est.point, "lo": lo, "hi": hi})
    return rows


# Adult-census-like fixture -------------------------------------------------

ADULT_SCHEMA = AttributeSchema((
    ("gender", ("Female", "Male")),
    ("age", ("<=50", ">50")),
    ("race", ("Amer-Indian-Eskimo", "Asian-Pac-Islander", "Black", "Other", "White")),
))
_RACE_P = np.array([0.01, 0.03, 0.10, 0.01, 0.85])
_RACE_SHIFT = np.array([-0.6, 0.1, -0.7, -0.5, 0.0])
FEATURES = ("education", "hours", "capital", "married")


def adult_like(n: int, rng=0) -> dict[str, np.ndarray]:
    """Census-style columns: three sensitive attributes, four features, income label."""
    gen = as_generator(rng)
    male = gen.random(n) < 0.67
    old = gen.random(n) < 0.22
    race = np.minimum(np.searchsorted(np.cumsum(_RACE_P), gen.random(n), side="right"), 4)
    education = np.clip(gen.normal(10 + 0.3 * male + 0.4 * (race == 1), 2.5, n), 1, 16)
    hours = np.clip(gen.normal(38 + 5 * male - 3 * old, 11, n), 1, 99)
    capital = gen.exponential(1.0, n) * (gen.random(n) < 0.1)
    married = gen.random(n) < expit(-0.3 + 1.0 * male + 0.6 * old)
    logit = (-9.0 + 0.45 * education + 0.035 * hours + 1.2 * capital + 2.0 * married
             + 0.4 * male + 0.5 * old + _RACE_SHIFT[race])
    y = (gen.random(n) < expit(logit)).astype(np.int8)
    return {
        "gender": np.where(male, "Male", "Female"),
        "age": np.where(old, ">50", "<=50"),
        "race": np.asarray(ADULT_SCHEMA.domain("race"))[race],
        "education": education, "hours": hours, "capital": capital,
        "married": married.astype(float), "income": y,
    }


class StandInClassifier:
    """L2-regularised logistic regression on standardized features.

    Sensitive attributes are one-hot encoded alongside the features, so the
    scores carry subgroup-dependent error rates.
    """

    def __init__(self, l2: float = 1e-3):
        self.l2 = l2
        self.coef_ = None

    def _design(self, cols: dict) -> np.ndarray:
        parts = [np.asarray(cols[f], dtype=float) for f in FEATURES]
        for name, dom in ADULT_SCHEMA.attributes:
            for lab in dom[1:]:
                parts.append((np.asarray(cols[name]) == lab).astype(float))
        x = np.column_stack(parts)
        if self.coef_ is None:
            self.mean_, self.scale_ = x.mean(axis=0), x.std(axis=0) + 1e-12
        return np.column_stack([np.ones(len(x)), (x - self.mean_) / self.scale_])

    def fit(self, cols: dict, y) -> "StandInClassifier":
        self.coef_ = None
        x = self._design(cols)
        y = np.asarray(y, dtype=float)

        def loss(w):
            z = x @ w
            nll = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * self.l2 * (w[1:] @ w[1:])
            g = x.T @ (expit(z) - y) / len(y)
            g[1:] += self.l2 * w[1:]
            return nll, g

        res = minimize(loss, np.zeros(x.shape[1]), jac=True, method="L-BFGS-B")
        self.coef_ = res.x
        return self

    def predict_proba(self, cols: dict) -> np.ndarray:
        return expit(self._design(cols) @ self.coef_)
