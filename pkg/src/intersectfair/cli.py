"""Command-line entry point: audit, postprocess, apply, simulate.

Exit codes
----------
0  success
1  bad usage or unreadable/malformed input (including schema mismatch on apply)
2  estimation failure or infeasible post-processing constraints
3  ``audit --fail-above`` gate tripped by some requested estimate
"""
from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import io
from .core import FairnessError, SchemaError
from .estimation import (DEFAULT_B, DEFAULT_LEVEL, DEFAULT_M, DEFAULT_PRIOR, DEFAULT_SMOOTHING, Method,
                         bootstrap_cells, estimate)
from .metrics import DATA_METRICS, FairnessMetric
from .postprocess import (MODES, FairnessConstraint, InfeasibleConstraint, LossSpec,
                          SubgroupModelStats, UnknownSubgroup, apply_rtdp)
from .rng import RngStream, default_seed
from .synth import convergence_experiment, default_planted_rates

EXIT_OK, EXIT_INPUT, EXIT_ESTIMATION, EXIT_GATE = 0, 1, 2, 3
INPUT_ERRORS = (io.ParseError, io.UnknownColumn, io.FormatVersionError, SchemaError, OSError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _fail(code: int, msg: str) -> int:
    print(f"intersectfair: {msg}", file=sys.stderr)
    return code


# -- audit ---------------------------------------------------------------------

def cmd_audit(args) -> int:
    try:
        data = io.load_csv(args.data, _csv_list(args.sensitive), args.outcome, args.pred)
        digest = io.file_digest(args.data)
    except INPUT_ERRORS as exc:
        return _fail(EXIT_INPUT, str(exc))
    if args.metrics == "all":
        metrics = list(FairnessMetric) if data.scores is not None else list(DATA_METRICS)
    else:
        try:
            metrics = [FairnessMetric.parse(m) for m in _csv_list(args.metrics)]
        except ValueError as exc:
            return _fail(EXIT_INPUT, str(exc))
    methods = list(Method) if args.method == "all" else [Method(args.method)]
    records = []
    t0 = time.perf_counter()
    try:
        # every metric is bootstrapped on the same resamples
        cells = None
        if Method.BOOTSTRAP in methods:
            cells = bootstrap_cells(data, args.bootstrap_b, RngStream(args.seed).child(0),
                                    args.threshold, args.workers)
        for i, metric in enumerate(metrics):
            for method in methods:
                stream = RngStream(args.seed).child(1 + i, list(Method).index(method))
                est = estimate(data, metric, method, alpha=args.alpha, beta=args.beta, B=args.bootstrap_b,
                               m=args.mc_m, rng=stream, level=args.level, threshold=args.threshold,
                               workers=args.workers, cells=cells)
                default = DEFAULT_PRIOR if method is Method.BAYESIAN else DEFAULT_SMOOTHING
                smoothing = (default[0] if args.alpha is None else args.alpha,
                             default[1] if args.beta is None else args.beta)
                records.append(io.estimate_record(est, data.schema, smoothing))
    except (FairnessError, ValueError) as exc:
        return _fail(EXIT_ESTIMATION, str(exc))
    settings = {
        "seed": args.seed, "alpha": args.alpha, "beta": args.beta, "bootstrap_b": args.bootstrap_b,
        "mc_m": args.mc_m, "level": args.level, "threshold": args.threshold,
        "interval": "equal-tailed, linearly interpolated sample quantiles",
        "bayesian_point": "posterior mean of epsilon",
        "metrics": [m.value for m in metrics], "methods": [m.value for m in methods],
        "columns": {"sensitive": list(data.schema.names), "outcome": args.outcome, "prediction": args.pred},
    }
    report = io.audit_report(data.schema, len(data), records, settings,
                             {"data": {"path": args.data, "sha256": digest}})
    _emit(io.dumps(report), args.out)
    if not args.quiet:
        print(f"audited {len(records)} estimates over {data.schema.size} subgroups "
              f"in {time.perf_counter() - t0:.2f}s", file=sys.stderr)
    if args.fail_above is not None:
        over = [r for r in records if not r["point"] <= args.fail_above]
        if over:
            worst = max(over, key=lambda r: r["point"])
            return _fail(EXIT_GATE, f"{worst['metric']} ({worst['method']}) epsilon {worst['point']:.6g} "
                                    f"exceeds {args.fail_above}")
    return EXIT_OK


# -- postprocess ---------------------------------------------------------------

def cmd_postprocess(args) -> int:
    try:
        data = io.load_csv(args.data, _csv_list(args.sensitive), args.outcome, args.pred)
        digest = io.file_digest(args.data)
        constraints = [FairnessConstraint.parse(c) for c in args.constraint]
        loss = LossSpec(args.loss_fp, args.loss_fn)
    except INPUT_ERRORS as exc:
        return _fail(EXIT_INPUT, str(exc))
    except ValueError as exc:
        return _fail(EXIT_INPUT, str(exc))
    stats = SubgroupModelStats.from_data(data, args.alpha, args.beta)
    try:
        if args.mode == "randomize":
            res = MODES["randomize"](stats, loss, constraints, np.full(stats.k, args.threshold))
        elif args.mode == "overall":
            res = MODES["overall"](stats, loss, constraints, search_budget=args.search_budget,
                                   restarts=args.restarts, rng=RngStream(args.seed))
        else:
            res = MODES[args.mode](stats, loss, constraints)
    except InfeasibleConstraint as exc:
        return _fail(EXIT_ESTIMATION, f"infeasible: {exc}; constraints "
                                      + ", ".join(f"{c.metric.value}<={c.eps_max}" for c in constraints))
    columns = {"sensitive": list(data.schema.names), "prediction": args.pred}
    fit = {"sha256": digest, "n_rows": len(data), "smoothing": [args.alpha, args.beta],
           "loss": [loss.l01, loss.l10], "seed": args.seed}
    pf = io.ParamsFile.from_result(data.schema, res, constraints, columns, fit)
    _emit(io.dumps(pf.to_json()), args.out)
    if not args.quiet:
        eps = ", ".join(f"{k}={v:.4f}" for k, v in pf.achieved_eps.items()) or "unconstrained"
        note = " (trivial fallback)" if res.fallback else ""
        print(f"{args.mode}: expected loss {res.loss:.6f}; {eps}{note}", file=sys.stderr)
    if not res.feasible:
        return _fail(EXIT_ESTIMATION, "no predictor satisfies the constraints")
    return EXIT_OK


# -- apply ---------------------------------------------------------------------

def cmd_apply(args) -> int:
    try:
        pf = io.ParamsFile.load(args.params)
        table = io.read_table(args.data)
        pred = args.pred or pf.columns.get("prediction")
        if not pred:
            return _fail(EXIT_INPUT, "no prediction column recorded; pass --pred")
        data = io.dataset_from_table(table, pf.columns.get("sensitive", list(pf.schema.names)), None,
                                     pred, schema=pf.schema)
        out = apply_rtdp(pf.params, data, RngStream(args.seed))
        if args.out:
            io.write_predictions(table, out, args.column, args.out)
        else:
            io.write_predictions(table, out, args.column, sys.stdout)
    except (*INPUT_ERRORS, UnknownSubgroup, KeyError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    return EXIT_OK


# -- simulate ------------------------------------------------------------------

def cmd_simulate(args) -> int:
    from .estimation import mse_study

    try:
        sizes = [int(s) for s in _csv_list(args.sizes)]
        methods = [Method(m) for m in _csv_list(args.methods)]
    except ValueError as exc:
        return _fail(EXIT_INPUT, str(exc))
    rates = default_planted_rates()
    try:
        if args.experiment == "convergence":
            rows = convergence_experiment(sizes, methods, RngStream(args.seed), rates,
                                          B=args.bootstrap_b, m=args.mc_m)
            cols = ("method", "n", "point", "lo", "hi")
        else:
            rows = mse_study(rates, sizes, args.reps, methods, RngStream(args.seed),
                             B=args.bootstrap_b, m=args.mc_m)
            cols = ("method", "n", "mse", "mean", "ci_width")
    except (FairnessError, ValueError) as exc:
        return _fail(EXIT_ESTIMATION, str(exc))
    if args.out:
        io.write_rows(args.out, rows, cols)
    else:
        io.write_rows(sys.stdout, rows, cols)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    seed = default_seed(0)
    p = _Parser(prog="intersectfair", description="Intersectional differential-fairness audits "
                                                  "and fair post-processing.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, needs_outcome=True):
        sp.add_argument("--data", required=True, help="input CSV with a header row")
        sp.add_argument("--sensitive", required=True, help="comma-separated sensitive columns")
        if needs_outcome:
            sp.add_argument("--outcome", required=True, help="0/1 outcome column")
        sp.add_argument("--seed", type=int, default=seed)
        sp.add_argument("--out", help="output path (default: stdout)")
        sp.add_argument("--quiet", action="store_true")

    a = sub.add_parser("audit", help="estimate epsilon for one or more metrics")
    common(a)
    a.add_argument("--pred", help="score/prediction column in [0, 1]")
    a.add_argument("--metrics", default="all", help="comma list of metrics, or 'all'")
    a.add_argument("--method", default="all", choices=[m.value for m in Method] + ["all"])
    a.add_argument("--alpha", type=float, help="smoothing/prior alpha (method default if omitted)")
    a.add_argument("--beta", type=float, help="smoothing/prior beta (method default if omitted)")
    a.add_argument("--bootstrap-b", type=int, default=DEFAULT_B)
    a.add_argument("--mc-m", type=int, default=DEFAULT_M)
    a.add_argument("--level", type=float, default=DEFAULT_LEVEL)
    a.add_argument("--threshold", type=float, default=0.5, help="score threshold for model metrics")
    a.add_argument("--workers", type=int, default=1, help="bootstrap worker threads")
    a.add_argument("--fail-above", type=float, help="exit 3 if any estimate exceeds this epsilon")
    a.set_defaults(func=cmd_audit)

    pp = sub.add_parser("postprocess", help="fit randomized thresholding parameters")
    common(pp)
    pp.add_argument("--pred", required=True, help="score column in [0, 1]")
    pp.add_argument("--mode", default="overall", choices=list(MODES))
    pp.add_argument("--constraint", action="append", default=[], metavar="METRIC:EPS")
    pp.add_argument("--loss-fp", type=float, default=1.0)
    pp.add_argument("--loss-fn", type=float, default=1.0)
    pp.add_argument("--alpha", type=float, default=DEFAULT_SMOOTHING[0])
    pp.add_argument("--beta", type=float, default=DEFAULT_SMOOTHING[1])
    pp.add_argument("--threshold", type=float, default=0.5, help="fixed threshold in randomize mode")
    pp.add_argument("--search-budget", type=int, help="coordinate moves per start (overall mode)")
    pp.add_argument("--restarts", type=int, default=5)
    pp.set_defaults(func=cmd_postprocess)

    ap = sub.add_parser("apply", help="apply fitted parameters to new rows")
    ap.add_argument("--params", required=True)
    ap.add_argument("--data", required=True)
    ap.add_argument("--pred", help="score column (default: the one used for fitting)")
    ap.add_argument("--column", default="fair_prediction", help="name of the appended column")
    ap.add_argument("--seed", type=int, default=seed)
    ap.add_argument("--out")
    ap.set_defaults(func=cmd_apply)

    sm = sub.add_parser("simulate", help="synthetic estimator experiments")
    sm.add_argument("--experiment", required=True, choices=["convergence", "mse"])
    sm.add_argument("--sizes", default="100,1000,10000,100000")
    sm.add_argument("--reps", type=int, default=200)
    sm.add_argument("--methods", default=",".join(m.value for m in Method))
    sm.add_argument("--bootstrap-b", type=int, default=DEFAULT_B)
    sm.add_argument("--mc-m", type=int, default=DEFAULT_M)
    sm.add_argument("--seed", type=int, default=seed)
    sm.add_argument("--out")
    sm.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
