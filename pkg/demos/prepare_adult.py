"""
Preparing an Adult-style audit file
===================================

Writes a CSV with three sensitive columns (gender, binned age, race), the
income label, and a classifier score, ready for ``intersectfair audit`` and
``intersectfair postprocess``.

With ``--adult-train`` / ``--adult-test`` pointing at the UCI Adult census
files the recipe below is applied to the real data:

* age is binned at 50 (``<=50`` / ``>50``)
* race values outside the four largest groups plus White are merged into ``Other``
* rows from a native country absent from the test split are dropped
* the label is ``income`` (``>50K`` -> 1)

Without those files a synthetic census-like sample of the same shape is used.
Either way the score comes from the small logistic-regression stand-in in
``intersectfair.synth``, fitted on the train split and scored on the test split.

    python3 demos/prepare_adult.py --out adult_scored.csv
"""
# %%
import argparse
import csv

import numpy as np

from intersectfair.synth import ADULT_SCHEMA, FEATURES, StandInClassifier, adult_like

ADULT_COLUMNS = ["age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
                 "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
                 "hours-per-week", "native-country", "income"]
RACES = set(ADULT_SCHEMA.domain("race"))


def read_adult(path):
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh, skipinitialspace=True):
            if len(rec) != len(ADULT_COLUMNS) or rec[0].startswith("|"):
                continue
            rows.append(dict(zip(ADULT_COLUMNS, (v.strip() for v in rec))))
    return rows


def adult_columns(rows):
    """Apply the preparation recipe and return the columns the stand-in model expects."""
    age = np.array([int(r["age"]) for r in rows])
    race = np.array([r["race"] if r["race"] in RACES else "Other" for r in rows])
    return {
        "gender": np.array([r["sex"] for r in rows]),
        "age": np.where(age > 50, ">50", "<=50"),
        "race": race,
        "education": np.array([float(r["education-num"]) for r in rows]),
        "hours": np.array([float(r["hours-per-week"]) for r in rows]),
        "capital": np.log1p(np.array([float(r["capital-gain"]) for r in rows])) / 4.0,
        "married": np.array([r["marital-status"].startswith("Married") for r in rows], dtype=float),
        "income": np.array([r["income"].rstrip(".") == ">50K" for r in rows], dtype=np.int8),
    }


def load_real(train_path, test_path):
    train, test = read_adult(train_path), read_adult(test_path)
    test_countries = {r["native-country"] for r in test}
    train = [r for r in train if r["native-country"] in test_countries]
    return adult_columns(train), adult_columns(test)


def write_scored(path, cols, scores):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gender", "age", "race", "income", "score"])
        for row in zip(cols["gender"], cols["age"], cols["race"], cols["income"], scores):
            w.writerow([row[0], row[1], row[2], int(row[3]), repr(float(row[4]))])


# %%
def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[1])
    p.add_argument("--adult-train")
    p.add_argument("--adult-test")
    p.add_argument("--n", type=int, default=32561, help="synthetic rows per split")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="adult_scored.csv")
    args = p.parse_args(argv)

    if args.adult_train and args.adult_test:
        train, test = load_real(args.adult_train, args.adult_test)
    else:
        train = adult_like(args.n, rng=args.seed)
        test = adult_like(args.n, rng=args.seed + 1)

    model = StandInClassifier().fit(train, train["income"])
    scores = model.predict_proba(test)
    write_scored(args.out, test, scores)
    acc = np.mean((scores >= 0.5) == test["income"])
    print(f"wrote {len(scores)} rows to {args.out}; stand-in accuracy {acc:.3f} "
          f"using {', '.join(FEATURES)}")


if __name__ == "__main__":
    main()
