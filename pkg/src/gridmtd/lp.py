"""Dense two-phase simplex with Bland's anti-cycling rule.

Sized for dispatch problems of a few dozen variables; everything is a dense
numpy tableau.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL = 1e-9


@dataclass
class LPResult:
    x: np.ndarray | None
    fun: float
    status: str  # "optimal" | "infeasible" | "unbounded" | "iteration_limit"
    iterations: int = 0

    @property
    def success(self) -> bool:
        return self.status == "optimal"


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    others = T[:, col].copy()
    others[row] = 0.0
    T -= np.outer(others, T[row])


def _run(T, basis, cost, allowed, tol, max_iter):
    """Minimise cost over the canonical tableau T (rows: [A | b]).  Bland's rule."""
    n = T.shape[1] - 1
    it = 0
    while True:
        reduced = cost[:n] - cost[basis] @ T[:, :n]
        enter = np.flatnonzero(allowed & (reduced < -tol))
        if enter.size == 0:
            return "optimal", it
        if it >= max_iter:
            return "iteration_limit", it
        e = int(enter[0])
        col = T[:, e]
        pos = np.flatnonzero(col > tol)
        if pos.size == 0:
            return "unbounded", it
        ratios = T[pos, -1] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + tol * (1.0 + abs(best))]
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(T, row, e)
        basis[row] = e
        it += 1


def simplex(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None,
            tol: float = TOL, max_iter: int = 50_000) -> LPResult:
    """minimise c @ x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lo <= x <= hi.

    ``bounds`` is a sequence of (lo, hi) pairs (default (0, inf)); ``lo`` may
    be -inf, in which case the variable is split into two nonnegative parts.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    if bounds is None:
        bounds = [(0.0, np.inf)] * n
    lo = np.array([b[0] if b[0] is not None else -np.inf for b in bounds], dtype=float)
    hi = np.array([b[1] if b[1] is not None else np.inf for b in bounds], dtype=float)
    if np.any(lo > hi + tol):
        return LPResult(None, np.nan, "infeasible")

    # x = shift + S y, y >= 0; free variables get a +/- pair
    free = ~np.isfinite(lo)
    shift = np.where(free, 0.0, lo)
    cols = []
    for k in range(n):
        cols.append((k, 1.0))
        if free[k]:
            cols.append((k, -1.0))
    S = np.zeros((n, len(cols)))
    for j, (k, s) in enumerate(cols):
        S[k, j] = s
    ny = len(cols)

    ub_rows = [A_ub @ S]
    ub_rhs = [b_ub - A_ub @ shift]
    finite_hi = np.flatnonzero(np.isfinite(hi))
    for k in finite_hi:
        row = np.zeros(ny)
        for j, (kk, s) in enumerate(cols):
            if kk == k:
                row[j] = s
        ub_rows.append(row[None, :])
        ub_rhs.append(np.array([hi[k] - shift[k]]))
    Au = np.vstack(ub_rows)
    bu = np.concatenate(ub_rhs)
    Ae = A_eq @ S
    be = b_eq - A_eq @ shift

    mu, me = Au.shape[0], Ae.shape[0]
    m = mu + me
    # columns: y (ny) | slacks (mu) | artificials (m)
    width = ny + mu + m
    T = np.zeros((m, width + 1))
    T[:mu, :ny] = Au
    T[:mu, ny:ny + mu] = np.eye(mu)
    T[:mu, -1] = bu
    T[mu:, :ny] = Ae
    T[mu:, -1] = be
    neg = T[:, -1] < 0
    T[neg] *= -1.0
    basis = np.empty(m, dtype=int)
    for r in range(m):
        if r < mu and not neg[r]:
            basis[r] = ny + r
        else:
            T[r, ny + mu + r] = 1.0
            basis[r] = ny + mu + r

    art = np.arange(ny + mu, width)
    phase1 = np.zeros(width)
    phase1[art] = 1.0
    allowed = np.ones(width, dtype=bool)
    status, it1 = _run(T, basis, phase1, allowed, tol, max_iter)
    if status != "optimal":
        return LPResult(None, np.nan, status, it1)
    scale = max(1.0, np.abs(T[:, -1]).max(initial=0.0))
    if phase1[basis] @ T[:, -1] > 1e-7 * scale:
        return LPResult(None, np.nan, "infeasible", it1)

    # drive zero-level artificials out of the basis, dropping redundant rows
    keep = np.ones(m, dtype=bool)
    for r in range(m):
        if basis[r] in art:
            cand = np.flatnonzero(np.abs(T[r, :ny + mu]) > tol)
            if cand.size:
                _pivot(T, r, int(cand[0]))
                basis[r] = int(cand[0])
            else:
                keep[r] = False
    T = T[keep]
    basis = basis[keep]
    allowed[art] = False
    cost = np.zeros(width)
    cost[:ny] = c @ S
    status, it2 = _run(T, basis, cost, allowed, tol, max_iter)
    if status != "optimal":
        return LPResult(None, np.nan, status, it1 + it2)
    y = np.zeros(width)
    y[basis] = T[:, -1]
    x = shift + S @ y[:ny]
    return LPResult(x, float(c @ x), "optimal", it1 + it2)
