"""Domain types shared by every other module.

Subgroups live in the product space of the declared attribute domains.
Internally a subgroup is addressed by its *flat index*: the position of its
key in lexicographic (row-major) order over the schema, so per-subgroup
quantities are plain numpy vectors of length ``schema.size``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Sequence

import numpy as np

MAX_SUBGROUPS = 10**6

SubgroupKey = tuple[int, ...]


class FairnessError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(FairnessError, ValueError):
    pass


class SchemaTooLarge(SchemaError):
    pass


class UnknownAttribute(SchemaError, KeyError):
    pass


class MissingPrediction(FairnessError, ValueError):
    pass


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered sensitive attributes and their category labels."""

    attributes: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self):
        attrs = tuple((str(name), tuple(str(v) for v in dom)) for name, dom in self.attributes)
        object.__setattr__(self, "attributes", attrs)
        names = [a for a, _ in attrs]
        if not attrs:
            raise SchemaError("schema needs at least one attribute")
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate attribute names in {names}")
        for name, dom in attrs:
            if not dom:
                raise SchemaError(f"attribute {name!r} has an empty domain")
            if len(set(dom)) != len(dom):
                raise SchemaError(f"attribute {name!r} has repeated labels")
        size = 1
        for _, dom in attrs:
            size *= len(dom)
            if size > MAX_SUBGROUPS:
                raise SchemaTooLarge(f"intersection space exceeds {MAX_SUBGROUPS} subgroups")

    @classmethod
    def from_dict(cls, mapping: dict[str, Sequence[str]]) -> "AttributeSchema":
        return cls(tuple((k, tuple(v)) for k, v in mapping.items()))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a for a, _ in self.attributes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(d) for _, d in self.attributes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    def domain(self, name: str) -> tuple[str, ...]:
        for a, dom in self.attributes:
            if a == name:
                return dom
        raise UnknownAttribute(name)

    def key(self, flat: int) -> SubgroupKey:
        return tuple(int(i) for i in np.unravel_index(int(flat), self.shape))

    def flat(self, key: Sequence[int]) -> int:
        if len(key) != len(self.attributes):
            raise SchemaError(f"key {tuple(key)} has wrong length for {self.names}")
        for i, n in zip(key, self.shape):
            if not 0 <= i < n:
                raise SchemaError(f"key {tuple(key)} out of range for shape {self.shape}")
        return int(np.ravel_multi_index(tuple(key), self.shape))

    def labels(self, flat: int) -> tuple[str, ...]:
        return tuple(dom[i] for (_, dom), i in zip(self.attributes, self.key(flat)))

    def flat_of_labels(self, labels: Sequence[str]) -> int:
        idx = []
        for (name, dom), lab in zip(self.attributes, labels):
            try:
                idx.append(dom.index(lab))
            except ValueError:
                raise SchemaError(f"label {lab!r} not in domain of {name!r}") from None
        return self.flat(idx)

    def subschema(self, keep: Iterable[str]) -> "AttributeSchema":
        keep = set(keep)
        unknown = keep - set(self.names)
        if unknown:
            raise UnknownAttribute(", ".join(sorted(unknown)))
        if not keep:
            raise SchemaError("marginalization needs at least one attribute to keep")
        return AttributeSchema(tuple((a, d) for a, d in self.attributes if a in keep))

    def to_dict(self) -> dict:
        return {"attributes": [{"name": a, "domain": list(d)} for a, d in self.attributes]}

    @classmethod
    def from_json(cls, obj: dict) -> "AttributeSchema":
        return cls(tuple((a["name"], tuple(a["domain"])) for a in obj["attributes"]))


def enumerate_subgroups(schema: AttributeSchema) -> list[SubgroupKey]:
    """All subgroup keys in lexicographic order (matches flat indexing)."""
    if schema.size > MAX_SUBGROUPS:
        raise SchemaTooLarge(f"{schema.size} subgroups")
    return list(product(*(range(n) for n in schema.shape)))


@dataclass(frozen=True)
class LabeledDataset:
    """Column-oriented dataset: one subgroup index, outcome and optional score per row.

    ``groups`` holds flat subgroup indices into ``schema``.
    """

    schema: AttributeSchema
    groups: np.ndarray
    y: np.ndarray
    scores: np.ndarray | None = None

    def __post_init__(self):
        g = np.asarray(self.groups, dtype=np.int64)
        y = np.asarray(self.y)
        if g.ndim != 1 or y.shape != g.shape:
            raise ValueError("groups and y must be 1-d arrays of equal length")
        if g.size and (g.min() < 0 or g.max() >= self.schema.size):
            raise SchemaError("subgroup index out of range for schema")
        if y.size and not np.isin(y, (0, 1)).all():
            raise ValueError("outcome must be binary (0/1)")
        object.__setattr__(self, "groups", g)
        object.__setattr__(self, "y", y.astype(np.int8))
        if self.scores is not None:
            s = np.asarray(self.scores, dtype=np.float64)
            if s.shape != g.shape:
                raise ValueError("scores must align with rows")
            if s.size and (np.isnan(s).any() or s.min() < 0.0 or s.max() > 1.0):
                raise ValueError("scores must lie in [0, 1]")
            object.__setattr__(self, "scores", s)

    @classmethod
    def from_keys(cls, schema, keys, y, scores=None) -> "LabeledDataset":
        keys = np.asarray(keys, dtype=np.int64).reshape(len(y), -1)
        groups = np.ravel_multi_index(tuple(keys.T), schema.shape) if len(keys) else np.zeros(0, np.int64)
        return cls(schema, groups, np.asarray(y), scores)

    def __len__(self) -> int:
        return int(self.groups.size)

    @property
    def keys(self) -> np.ndarray:
        """(n, p) matrix of per-attribute category indices."""
        if not len(self):
            return np.zeros((0, len(self.schema.attributes)), np.int64)
        return np.stack(np.unravel_index(self.groups, self.schema.shape), axis=1)

    def project(self, keep: Iterable[str]) -> "LabeledDataset":
        """Drop sensitive attributes not in ``keep``."""
        sub = self.schema.subschema(keep)
        cols = [i for i, a in enumerate(self.schema.names) if a in sub.names]
        return LabeledDataset.from_keys(sub, self.keys[:, cols], self.y, self.scores)

    def take(self, idx: np.ndarray) -> "LabeledDataset":
        s = None if self.scores is None else self.scores[idx]
        return LabeledDataset(self.schema, self.groups[idx], self.y[idx], s)


@dataclass(frozen=True)
class CountsTable:
    """Per-subgroup outcome counts, plus confusion counts when predictions exist.

    Empty subgroups (``n == 0``) are kept; see :attr:`empty`.
    """

    schema: AttributeSchema
    n: np.ndarray
    n1: np.ndarray
    tp: np.ndarray | None = None
    fp: np.ndarray | None = None
    tn: np.ndarray | None = None
    fn: np.ndarray | None = None
    threshold: float | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("n", "n1", "tp", "fp", "tn", "fn"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=np.int64)
                if v.shape != (self.schema.size,):
                    raise ValueError(f"{name} must have one entry per subgroup")
                if (v < 0).any():
                    raise ValueError(f"{name} has negative counts")
                object.__setattr__(self, name, v)
        if (self.n1 > self.n).any():
            raise ValueError("n1 exceeds n")
        conf = [getattr(self, k) is None for k in ("tp", "fp", "tn", "fn")]
        if any(conf) and not all(conf):
            raise ValueError("confusion counts must be given together")
        if self.has_confusion:
            if not (np.array_equal(self.tp + self.fn, self.n1)
                    and np.array_equal(self.tp + self.fn + self.fp + self.tn, self.n)):
                raise ValueError("confusion counts inconsistent with n / n1")

    @property
    def has_confusion(self) -> bool:
        return self.tp is not None

    @property
    def n0(self) -> np.ndarray:
        return self.n - self.n1

    @property
    def total_n(self) -> int:
        return int(self.n.sum())

    @property
    def total_n1(self) -> int:
        return int(self.n1.sum())

    @property
    def empty(self) -> np.ndarray:
        return self.n == 0


def counts_from_cells(schema: AttributeSchema, cells: np.ndarray, with_confusion: bool,
                      threshold: float | None = None) -> CountsTable:
    """Build a table from a (k, 4) array of cell tallies ordered (y, yhat) = 00, 01, 10, 11."""
    cells = np.asarray(cells, dtype=np.int64).reshape(schema.size, 4)
    tn, fp, fn, tp = cells.T
    n1 = fn + tp
    n = cells.sum(axis=1)
    if with_confusion:
        return CountsTable(schema, n, n1, tp, fp, tn, fn, threshold=threshold)
    return CountsTable(schema, n, n1)


def cell_ids(data: LabeledDataset, threshold: float | None) -> np.ndarray:
    """Per-row cell code ``4*group + 2*y + yhat`` (yhat = 0 without threshold)."""
    code = 4 * data.groups + 2 * data.y.astype(np.int64)
    if threshold is not None:
        code = code + (data.scores >= threshold)
    return code


def build_counts(data: LabeledDataset, threshold: float | None = None) -> CountsTable:
    """Tally subgroup counts; with a threshold, also confusion counts of ``score >= threshold``.

    Datasets carrying scores get confusion counts at 0.5 by default.
    """
    if threshold is None and data.scores is not None:
        threshold = 0.5
    if threshold is not None:
        if data.scores is None:
            raise MissingPrediction("a threshold was given but the dataset has no predictions")
        if not 0.0 <= threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
    cells = np.bincount(cell_ids(data, threshold), minlength=4 * data.schema.size)
    return counts_from_cells(data.schema, cells, threshold is not None, threshold)


def marginalize(counts: CountsTable, keep: Iterable[str]) -> CountsTable:
    """Sum counts over every attribute not in ``keep`` (kept in schema order)."""
    keep = list(keep)
    sub = counts.schema.subschema(keep)
    axes = tuple(i for i, a in enumerate(counts.schema.names) if a not in sub.names)
    shape = counts.schema.shape

    def fold(v):
        return None if v is None else v.reshape(shape).sum(axis=axes).reshape(-1)

    return CountsTable(sub, fold(counts.n), fold(counts.n1), fold(counts.tp), fold(counts.fp),
                       fold(counts.tn), fold(counts.fn), threshold=counts.threshold)
