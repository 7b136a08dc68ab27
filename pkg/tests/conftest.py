import csv

import pytest

from intersectfair.rng import RngStream
from intersectfair.synth import StandInClassifier, adult_like, default_planted_rates, generate

ADULT_TRAIN_N, ADULT_TEST_N = 32561, 16281


def write_adult_scored(path, seed=0):
    """Synthetic census sample scored by the stand-in model trained on a separate split."""
    train, test = adult_like(ADULT_TRAIN_N, rng=seed), adult_like(ADULT_TEST_N, rng=seed + 1)
    scores = StandInClassifier().fit(train, train["income"]).predict_proba(test)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gender", "age", "race", "income", "score"])
        for g, a, r, y, s in zip(test["gender"], test["age"], test["race"], test["income"], scores):
            w.writerow([g, a, r, int(y), repr(float(s))])
    return path


def planted_stream(n, seed=0):
    """The dataset stream the convergence experiment uses for size ``n``."""
    return RngStream(seed).child(int(n)).child(0)


def write_planted(path, n, seed=0):
    d = generate(default_planted_rates(), n, planted_stream(n, seed))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a1", "a2", "y"])
        for g, y in zip(d.groups, d.y):
            w.writerow([*d.schema.labels(int(g)), int(y)])
    return path


@pytest.fixture(scope="session")
def adult_csv(tmp_path_factory):
    return str(write_adult_scored(tmp_path_factory.mktemp("adult") / "adult_scored.csv"))


@pytest.fixture(scope="session")
def planted_csv(tmp_path_factory):
    return str(write_planted(tmp_path_factory.mktemp("planted") / "planted.csv", 10**5))


_ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion; returns the verdict."""
    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {title} [{detail}]"
        _ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
