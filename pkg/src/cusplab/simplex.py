"""Dense two-phase simplex over the rationals with Bland's pivoting rule.

Small and slow, but exact: every pivot is done in ``Fraction`` arithmetic,
so optimal values and vertices come back as exact rationals.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence


class LPError(RuntimeError):
    pass


@dataclass
class LPResult:
    status: str  # "optimal", "infeasible" or "unbounded"
    x: Optional[list]
    value: Optional[Fraction]
    pivots: int
    duals: Optional[list] = None  # y with y.A <= c at optimality (standard form only)


def _pivot(T: list, basis: list, r: int, c: int) -> None:
    row = T[r]
    p = row[c]
    if p != 1:
        inv = 1 / p
        T[r] = row = [v * inv for v in row]
    for i, other in enumerate(T):
        if i != r:
            f = other[c]
            if f:
                T[i] = [a - f * b for a, b in zip(other, row)]
    basis[r] = c


def _run(T: list, basis: list, ncols: int, allowed: Sequence[bool], max_pivots: int) -> tuple:
    """Minimise the objective stored in the last row of T (reduced costs)."""
    pivots = 0
    obj = T[-1]
    while True:
        obj = T[-1]
        enter = next((j for j in range(ncols) if allowed[j] and obj[j] < 0), None)
        if enter is None:
            return "optimal", pivots
        best = None
        leave = None
        for i in range(len(T) - 1):
            a = T[i][enter]
            if a > 0:
                ratio = T[i][-1] / a
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave is None:
            return "unbounded", pivots
        _pivot(T, basis, leave, enter)
        pivots += 1
        if pivots > max_pivots:
            raise LPError("pivot limit exceeded")


def solve_standard(c: Sequence, A: Sequence[Sequence], b: Sequence, max_pivots: int = 100000) -> LPResult:
    """min c.x  s.t.  A x = b,  x >= 0."""
    c = [Fraction(v) for v in c]
    A = [[Fraction(v) for v in row] for row in A]
    b = [Fraction(v) for v in b]
    m, n = len(A), len(c)
    sign = [1] * m
    for i in range(m):
        if b[i] < 0:
            sign[i] = -1
            A[i] = [-v for v in A[i]]
            b[i] = -b[i]
    # phase 1: one artificial per row
    ncols = n + m
    T = []
    for i in range(m):
        T.append(A[i] + [Fraction(int(i == k)) for k in range(m)] + [b[i]])
    basis = [n + i for i in range(m)]
    w = [Fraction(0)] * (ncols + 1)
    for i in range(m):
        for j in range(n):
            w[j] -= T[i][j]
        w[-1] -= T[i][-1]
    T.append(w)
    status, p1 = _run(T, basis, ncols, [True] * ncols, max_pivots)
    if T[-1][-1] != 0:
        return LPResult("infeasible", None, None, p1)
    # drive artificials out of the basis; drop redundant rows
    r = 0
    while r < len(T) - 1:
        if basis[r] >= n:
            col = next((j for j in range(n) if T[r][j] != 0), None)
            if col is None:
                del T[r]
                del basis[r]
                continue
            _pivot(T, basis, r, col)
        r += 1
    # phase 2; artificial columns stay in the tableau (never entering) so the
    # simplex multipliers can be read off their reduced costs at the end
    T = T[:-1]
    z = c + [Fraction(0)] * (m + 1)
    for i, bj in enumerate(basis):
        f = z[bj]
        if f:
            z = [a - f * v for a, v in zip(z, T[i])]
    T.append(z)
    status, p2 = _run(T, basis, ncols, [j < n for j in range(ncols)], max_pivots)
    if status == "unbounded":
        return LPResult("unbounded", None, None, p1 + p2)
    x = [Fraction(0)] * n
    for i, bj in enumerate(basis):
        x[bj] = T[i][-1]
    value = sum((ci * xi for ci, xi in zip(c, x)), Fraction(0))
    duals = [-sign[i] * T[-1][n + i] for i in range(m)]
    return LPResult("optimal", x, value, p1 + p2, duals)


def solve(c: Sequence, A_ub: Sequence = (), b_ub: Sequence = (), A_eq: Sequence = (), b_eq: Sequence = (),
          free: Optional[Sequence[bool]] = None) -> LPResult:
    """min c.x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq, with x_j >= 0 unless free[j]."""
    n = len(c)
    free = list(free) if free is not None else [False] * n
    # column map: each free variable becomes x+ - x-
    cols = []
    for j in range(n):
        cols.append((j, 1))
        if free[j]:
            cols.append((j, -1))
    n_slack = len(A_ub)

    def expand(row):
        return [Fraction(row[j]) * s for j, s in cols]

    A, b = [], []
    for k, row in enumerate(A_ub):
        A.append(expand(row) + [Fraction(int(i == k)) for i in range(n_slack)])
        b.append(b_ub[k])
    for k, row in enumerate(A_eq):
        A.append(expand(row) + [Fraction(0)] * n_slack)
        b.append(b_eq[k])
    cc = expand(c) + [Fraction(0)] * n_slack
    res = solve_standard(cc, A, b)
    if res.status != "optimal":
        return res
    x = [Fraction(0)] * n
    for k, (j, s) in enumerate(cols):
        x[j] += s * res.x[k]
    return LPResult("optimal", x, res.value, res.pivots)
