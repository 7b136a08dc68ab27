"""Dense two-phase primal simplex for small boxed linear programs.

    minimize    c @ x
    subject to  a_ub @ x <= b_ub,   lo <= x <= hi

Variables are shifted to ``z = x - lo`` and the upper bounds become ordinary
rows. Rows with a negative right-hand side get an artificial variable and
phase one drives those to zero. Entering columns follow Dantzig's rule until
500 degenerate pivots have been seen, then Bland's rule takes over for good.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-9
BLAND_AFTER = 500


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITER_LIMIT = "iter_limit"


@dataclass(frozen=True)
class LpProblem:
    c: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    bounds: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        n = c.size
        a = np.asarray(self.a_ub, dtype=float).reshape(-1, n)
        b = np.asarray(self.b_ub, dtype=float).reshape(-1)
        bounds = np.asarray(self.bounds, dtype=float).reshape(n, 2)
        if a.shape[0] != b.size:
            raise ValueError("a_ub and b_ub row counts differ")
        for v in (c, a, b, bounds):
            if not np.isfinite(v).all():
                raise ValueError("LP data must be finite")
        if (bounds[:, 0] > bounds[:, 1]).any():
            raise ValueError("lower bound above upper bound")
        for name, v in (("c", c), ("a_ub", a), ("b_ub", b), ("bounds", bounds)):
            object.__setattr__(self, name, v)

    @property
    def n_vars(self) -> int:
        return self.c.size


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    x: np.ndarray
    objective: float
    iterations: int

    @property
    def ok(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class _Tableau:
    def __init__(self, t: np.ndarray, basis: np.ndarray, max_iters: int):
        self.t = t
        self.basis = basis
        self.iters = 0
        self.max_iters = max_iters
        self.degenerate = 0
        self.buf = None

    def pivot(self, r: int, c: int):
        t = self.t
        t[r] /= t[r, c]
        col = t[:, c].copy()
        col[r] = 0.0
        if self.buf is None or self.buf.shape != t.shape:
            self.buf = np.empty_like(t)
        np.multiply(col[:, None], t[r], out=self.buf)
        t -= self.buf
        t[:, c] = 0.0
        t[r, c] = 1.0
        self.basis[r] = c

    def run(self) -> LpStatus:
        """Iterate until optimal for the cost row currently in the last row."""
        t = self.t
        while True:
            red = t[-1, :-1]
            if self.degenerate >= BLAND_AFTER:
                cand = np.flatnonzero(red < -PIVOT_TOL)
                if cand.size == 0:
                    return LpStatus.OPTIMAL
                c = int(cand[0])
            else:
                c = int(np.argmin(red))
                if red[c] >= -PIVOT_TOL:
                    return LpStatus.OPTIMAL
            if self.iters >= self.max_iters:
                return LpStatus.ITER_LIMIT
            col = t[:-1, c]
            rows = np.flatnonzero(col > PIVOT_TOL)
            if rows.size == 0:
                return LpStatus.UNBOUNDED
            ratios = t[rows, -1] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
            r = int(ties[np.argmin(self.basis[ties])]) if ties.size > 1 else int(ties[0])
            if best <= PIVOT_TOL:
                self.degenerate += 1
            self.pivot(r, c)
            self.iters += 1


def solve(problem: LpProblem, max_iters: int = 20000) -> LpSolution:
    """Solve ``problem``; a non-optimal status is reported, not raised."""
    c, a, b, bounds = problem.c, problem.a_ub, problem.b_ub, problem.bounds
    n = c.size
    lo, width = bounds[:, 0], bounds[:, 1] - bounds[:, 0]
    g = np.vstack([a, np.eye(n)])
    h = np.concatenate([b - a @ lo, width])
    m = g.shape[0]
    neg = h < 0
    n_art = int(neg.sum())
    ncol = n + m + n_art
    t = np.zeros((m + 1, ncol + 1))
    t[:m, :n] = g
    t[:m, n:n + m] = np.eye(m)
    t[:m, -1] = h
    art_rows = np.flatnonzero(neg)
    t[art_rows] *= -1.0
    basis = n + np.arange(m)
    art_cols = n + m + np.arange(n_art)
    t[art_rows, art_cols] = 1.0
    basis[art_rows] = art_cols
    tab = _Tableau(t, basis, max_iters)

    if n_art:
        t[-1, :] = 0.0
        t[-1, art_cols] = 1.0
        t[-1] -= t[art_rows].sum(axis=0)
        status = tab.run()
        if status is LpStatus.ITER_LIMIT:
            return LpSolution(status, lo.copy(), float("nan"), tab.iters)
        if -t[-1, -1] > FEAS_TOL * max(1.0, np.abs(h).max()):
            return LpSolution(LpStatus.INFEASIBLE, lo.copy(), float("nan"), tab.iters)
        # drive zero-valued artificials out of the basis, dropping redundant rows
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if tab.basis[r] >= n + m:
                nz = np.flatnonzero(np.abs(t[r, :n + m]) > PIVOT_TOL)
                if nz.size:
                    tab.pivot(r, int(nz[0]))
                else:
                    keep[r] = False
        t = np.vstack([t[:m][keep][:, list(range(n + m)) + [ncol]], np.zeros((1, n + m + 1))])
        tab.t, tab.basis = t, tab.basis[keep]

    cost = np.zeros(t.shape[1] - 1)
    cost[:n] = c
    t[-1, :-1] = cost
    t[-1, -1] = 0.0
    cb = cost[tab.basis]
    t[-1] -= cb @ t[:-1]
    status = tab.run()
    z = np.zeros(t.shape[1] - 1)
    z[tab.basis] = t[:-1, -1]
    x = np.clip(lo + z[:n], bounds[:, 0], bounds[:, 1])
    obj = float(c @ x) if status is LpStatus.OPTIMAL else float("nan")
    return LpSolution(status, x, obj, tab.iters)
