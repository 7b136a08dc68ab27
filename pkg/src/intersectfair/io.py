"""CSV ingestion and JSON report/parameter files.

Reports and parameter files are plain JSON with sorted keys and shortest
round-trip float formatting, so serialize -> parse -> serialize is
byte-identical and every number survives exactly. Nothing time-dependent is
written, which keeps repeated seeded runs byte-identical too.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import AttributeSchema, FairnessError, LabeledDataset
from .estimation import EpsilonEstimate
from .metrics import BASE, FairnessMetric
from .postprocess import FairnessConstraint, PostprocessResult, RTDPParams

FORMAT_VERSION = 1


class ParseError(FairnessError, ValueError):
    """Malformed input; ``row`` is 1-based counting the header, ``column`` a name."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.row, self.column = row, column


class OutcomeNotBinary(ParseError):
    pass


class PredictionOutOfRange(ParseError):
    pass


class UnknownColumn(FairnessError, KeyError):
    def __str__(self):
        return f"unknown column {self.args[0]!r}"


class FormatVersionError(FairnessError, ValueError):
    pass


@dataclass
class CsvTable:
    header: list[str]
    rows: list[list[str]]

    def column(self, name: str) -> list[str]:
        try:
            i = self.header.index(name)
        except ValueError:
            raise UnknownColumn(name) from None
        return [r[i] for r in self.rows]


def read_table(path) -> CsvTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("file is empty", row=1) from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise ParseError("duplicate column names in header", row=1)
        rows = []
        for i, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", row=i)
            rows.append(row)
    return CsvTable(header, rows)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _parse_outcome(values: list[str], column: str) -> np.ndarray:
    y = np.empty(len(values), dtype=np.int8)
    for i, v in enumerate(values):
        v = v.strip()
        try:
            f = float(v)
        except ValueError:
            raise OutcomeNotBinary(f"outcome {v!r} is not 0 or 1", row=i + 2, column=column) from None
        if f not in (0.0, 1.0):
            raise OutcomeNotBinary(f"outcome {v!r} is not 0 or 1", row=i + 2, column=column)
        y[i] = int(f)
    return y


def _parse_prediction(values: list[str], column: str) -> np.ndarray:
    s = np.empty(len(values))
    for i, v in enumerate(values):
        try:
            s[i] = float(v.strip())
        except ValueError:
            raise ParseError(f"prediction {v!r} is not numeric", row=i + 2, column=column) from None
        if not 0.0 <= s[i] <= 1.0:
            raise PredictionOutOfRange(f"prediction {v!r} outside [0, 1]", row=i + 2, column=column)
    return s


def dataset_from_table(table: CsvTable, sensitive: Sequence[str], outcome: str | None,
                       prediction: str | None = None,
                       schema: AttributeSchema | None = None) -> LabeledDataset:
    """Build a dataset; with ``schema`` given, labels must belong to its domains.

    Without an outcome column (applying parameters to new data) ``y`` is all zeros.
    """
    if not sensitive:
        raise ParseError("at least one sensitive column is required")
    cols = {name: [v.strip() for v in table.column(name)] for name in sensitive}
    y = _parse_outcome(table.column(outcome), outcome) if outcome else np.zeros(len(table.rows), np.int8)
    scores = _parse_prediction(table.column(prediction), prediction) if prediction else None
    if schema is None:
        schema = AttributeSchema(tuple((name, tuple(sorted(set(cols[name])))) for name in sensitive))
    elif tuple(sensitive) != schema.names:
        raise ParseError(f"sensitive columns {list(sensitive)} do not match schema {list(schema.names)}")
    keys = np.empty((len(table.rows), len(sensitive)), dtype=np.int64)
    for j, (name, dom) in enumerate(schema.attributes):
        index = {lab: i for i, lab in enumerate(dom)}
        for i, v in enumerate(cols[name]):
            try:
                keys[i, j] = index[v]
            except KeyError:
                raise ParseError(f"label {v!r} not in the schema domain", row=i + 2, column=name) from None
    return LabeledDataset.from_keys(schema, keys, y, scores)


def load_csv(path, sensitive: Sequence[str], outcome: str, prediction: str | None = None,
             schema: AttributeSchema | None = None) -> LabeledDataset:
    """Read a labeled CSV; sensitive domains are the sorted observed labels."""
    return dataset_from_table(read_table(path), sensitive, outcome, prediction, schema)


# -- JSON ----------------------------------------------------------------------

def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def read_json(path, kind: str) -> dict:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if obj.get("format_version") != FORMAT_VERSION:
        raise FormatVersionError(f"unsupported format_version {obj.get('format_version')!r}")
    if obj.get("kind") != kind:
        raise FormatVersionError(f"expected a {kind} file, found {obj.get('kind')!r}")
    return obj


def _pair_labels(schema: AttributeSchema, pair) -> list | None:
    if pair is None:
        return None
    return [BASE if p == BASE else list(schema.labels(int(p))) for p in pair]


def estimate_record(est: EpsilonEstimate, schema: AttributeSchema, smoothing) -> dict:
    rec = {
        "metric": est.metric.value,
        "method": est.method.value,
        "point": float(est.point),
        "exp_point": float(est.exp_point) if math.isfinite(est.point) else None,
        "worst_pair": _pair_labels(schema, est.worst_pair),
        "samples_used": int(est.samples_used),
        "degenerate_replicates": int(est.degenerate_replicates),
        "smoothing": [float(smoothing[0]), float(smoothing[1])],
        "interval": None,
    }
    if est.interval is not None:
        lo, hi, level = est.interval
        rec["interval"] = {"lo": float(lo), "hi": float(hi), "level": float(level)}
    return rec


def schema_summary(schema: AttributeSchema) -> dict:
    out = schema.to_dict()
    out["n_subgroups"] = schema.size
    return out


def audit_report(schema: AttributeSchema, n_rows: int, records: list[dict], settings: dict,
                 inputs: dict) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": "audit",
        "schema": schema_summary(schema),
        "n_rows": int(n_rows),
        "settings": settings,
        "inputs": inputs,
        "estimates": records,
    }


@dataclass
class ParamsFile:
    """Fitted RTDP parameters plus everything needed to apply and re-audit them."""

    schema: AttributeSchema
    params: RTDPParams
    mode: str
    constraints: list[FairnessConstraint] = field(default_factory=list)
    achieved_eps: dict = field(default_factory=dict)
    expected_loss: float = float("nan")
    feasible: bool = True
    fallback: bool = False
    columns: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)

    @classmethod
    def from_result(cls, schema, result: PostprocessResult, constraints, columns, fit) -> "ParamsFile":
        return cls(schema, result.params, result.mode, list(constraints),
                   {m.value: float(v) for m, v in result.achieved_eps.items()},
                   float(result.loss), result.feasible, result.fallback, dict(columns), dict(fit))

    def to_json(self) -> dict:
        p = self.params
        return {
            "format_version": FORMAT_VERSION,
            "kind": "rtdp_params",
            "schema": schema_summary(self.schema),
            "subgroups": [
                {"labels": list(self.schema.labels(s)), "tau": float(p.tau[s]),
                 "p1": float(p.p1[s]), "p0": float(p.p0[s])}
                for s in range(self.schema.size)
            ],
            "mode": self.mode,
            "constraints": [{"metric": c.metric.value, "eps_max": c.eps_max} for c in self.constraints],
            "achieved_eps": dict(self.achieved_eps),
            "expected_loss": self.expected_loss,
            "feasible": self.feasible,
            "fallback": self.fallback,
            "columns": self.columns,
            "fit": self.fit,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ParamsFile":
        if obj.get("format_version") != FORMAT_VERSION or obj.get("kind") != "rtdp_params":
            raise FormatVersionError("not a supported RTDP parameter file")
        schema = AttributeSchema.from_json(obj["schema"])
        subs = obj["subgroups"]
        if len(subs) != schema.size:
            raise FormatVersionError("parameter file does not cover every subgroup")
        for s, rec in enumerate(subs):
            if schema.flat_of_labels(rec["labels"]) != s:
                raise FormatVersionError("subgroups are out of order")
        params = RTDPParams(np.array([r["tau"] for r in subs]), np.array([r["p1"] for r in subs]),
                            np.array([r["p0"] for r in subs]))
        cons = [FairnessConstraint(FairnessMetric.parse(c["metric"]), c["eps_max"])
                for c in obj["constraints"]]
        return cls(schema, params, obj["mode"], cons, dict(obj["achieved_eps"]),
                   obj["expected_loss"], obj["feasible"], obj["fallback"],
                   dict(obj["columns"]), dict(obj["fit"]))

    def save(self, path) -> None:
        write_json(path, self.to_json())

    @classmethod
    def load(cls, path) -> "ParamsFile":
        return cls.from_json(read_json(path, "rtdp_params"))


# -- CSV out -------------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path_or_file, rows: Iterable[dict], columns: Sequence[str]) -> None:
    """Experiment table as CSV; floats use shortest round-trip formatting."""
    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r[c]) for c in columns])

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
            emit(fh)


def write_predictions(table: CsvTable, preds: np.ndarray, column: str, path_or_file) -> None:
    """Input rows in their original order with one appended prediction column."""
    if column in table.header:
        raise ParseError(f"output column {column!r} already exists in the input")

    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.header + [column])
        for row, p in zip(table.rows, preds):
            w.writerow(row + [str(int(p))])

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
            emit(fh)
