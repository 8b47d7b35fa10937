"""Small exact integer linear algebra: gcd bookkeeping, unimodular
completion, integer kernels and Plücker relations."""
from __future__ import annotations

from fractions import Fraction
from itertools import combinations
from math import gcd
from typing import Sequence


def xgcd(a: int, b: int) -> tuple:
    """Return (g, s, t) with s*a + t*b = g = gcd(a, b) >= 0."""
    s0, s1, t0, t1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a % b
        s0, s1 = s1, s0 - q * s1
        t0, t1 = t1, t0 - q * t1
    if a < 0:
        return -a, -s0, -t0
    return a, s0, t0


def vgcd(v: Sequence[int]) -> int:
    g = 0
    for x in v:
        g = gcd(g, int(x))
    return g


def identity(n: int) -> list:
    return [[int(i == j) for j in range(n)] for i in range(n)]


def matmul(A: Sequence[Sequence], B: Sequence[Sequence]) -> list:
    Bt = list(zip(*B))
    return [[sum(a * b for a, b in zip(row, col)) for col in Bt] for row in A]


def transpose(A: Sequence[Sequence]) -> list:
    return [list(r) for r in zip(*A)]


def complete_unimodular(c: Sequence[int]) -> list:
    """Integer matrix with determinant +-1 whose first column is the primitive vector c."""
    n = len(c)
    v = [int(x) for x in c]
    if vgcd(v) != 1:
        raise ValueError(f"{c} is not primitive")
    M = identity(n)
    # reduce v to e_1 with 2x2 unimodular moves on (0, i); M accumulates the inverses
    for i in range(1, n):
        if v[i] == 0:
            continue
        g, s, t = xgcd(v[0], v[i])
        a0, ai = v[0] // g, v[i] // g
        # inverse of [[s, t], [-ai, a0]] is [[a0, -t], [ai, s]]
        for row in M:
            x, y = row[0], row[i]
            row[0], row[i] = x * a0 + y * ai, -x * t + y * s
        v[0], v[i] = g, 0
    if v[0] == -1:
        for row in M:
            row[0] = -row[0]
    return M


def integer_kernel(A: Sequence[Sequence[int]], n: int = None) -> list:
    """Z-basis of {z in Z^n : A z = 0}, as a list of vectors."""
    A = [[int(x) for x in row] for row in A]
    if n is None:
        n = len(A[0])
    U = identity(n)
    cols = [[A[r][j] for r in range(len(A))] for j in range(n)]  # columns of A
    piv_col = 0
    for r in range(len(A)):
        # gcd-combine columns piv_col.. on row r
        for j in range(piv_col + 1, n):
            if cols[j][r] == 0:
                continue
            a, b = cols[piv_col][r], cols[j][r]
            g, s, t = xgcd(a, b)
            p, q = a // g, b // g
            ci, cj = cols[piv_col], cols[j]
            cols[piv_col] = [s * x + t * y for x, y in zip(ci, cj)]
            cols[j] = [-q * x + p * y for x, y in zip(ci, cj)]
            for row in U:
                x, y = row[piv_col], row[j]
                row[piv_col], row[j] = s * x + t * y, -q * x + p * y
        if cols[piv_col][r] != 0:
            piv_col += 1
            if piv_col == n:
                break
    return [[U[i][j] for i in range(n)] for j in range(piv_col, n)]


def rational_to_int(v: Sequence[Fraction]) -> list:
    den = 1
    for x in v:
        den = den * Fraction(x).denominator // gcd(den, Fraction(x).denominator)
    w = [int(Fraction(x) * den) for x in v]
    g = vgcd(w)
    return [x // g for x in w] if g else w


def perm_sign(seq: Sequence[int]) -> int:
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] == seq[j]:
                return 0
            if seq[i] > seq[j]:
                sign = -sign
    return sign


class Plucker:
    """Index bookkeeping for the l-th exterior power of an n-dimensional space."""

    def __init__(self, n: int, l: int):
        self.n, self.l = n, l
        self.index = list(combinations(range(n), l))
        self.pos = {I: k for k, I in enumerate(self.index)}
        self._relations = None

    def coord(self, p: Sequence, idx: Sequence[int]):
        s = perm_sign(idx)
        if s == 0:
            return 0
        return s * p[self.pos[tuple(sorted(idx))]]

    def relations(self) -> list:
        """(I, J) pairs indexing the quadratic Plücker relations."""
        if self._relations is None:
            n, l = self.n, self.l
            rel = []
            if 1 < l < n - 1:
                for I in combinations(range(n), l - 1):
                    for J in combinations(range(n), l + 1):
                        rel.append((I, J))
            self._relations = rel
        return self._relations

    def is_decomposable(self, p: Sequence) -> bool:
        for I, J in self.relations():
            total = 0
            for k, j in enumerate(J):
                a = self.coord(p, I + (j,))
                if a:
                    total += (-1) ** k * a * self.coord(p, J[:k] + J[k + 1:])
            if total != 0:
                return False
        return True

    def span(self, p: Sequence) -> list:
        """Spanning vectors of the subspace represented by a decomposable p."""
        out = []
        for I in combinations(range(self.n), self.l - 1):
            v = [self.coord(p, I + (j,)) for j in range(self.n)]
            if any(v):
                out.append(v)
        return out

    def wedge(self, cols: Sequence[Sequence]) -> list:
        """Plücker vector of the column vectors cols (n x l, given as list of columns)."""
        out = []
        for I in self.index:
            out.append(det([[c[i] for c in cols] for i in I]))
        return out


def det(M: Sequence[Sequence]):
    """Determinant by Gaussian elimination; exact on ints and Fractions, also works on mpf."""
    n = len(M)
    if n == 0:
        return 1
    A = [[Fraction(x) if isinstance(x, int) else x for x in r] for r in M]
    sign = 1
    for c in range(n):
        piv = max(range(c, n), key=lambda r: abs(A[r][c]))
        if A[piv][c] == 0:
            return A[0][0] * 0
        if piv != c:
            A[c], A[piv] = A[piv], A[c]
            sign = -sign
        for r in range(c + 1, n):
            f = A[r][c] / A[c][c]
            if f:
                A[r] = [x - f * y for x, y in zip(A[r], A[c])]
    result = A[0][0]
    for i in range(1, n):
        result *= A[i][i]
    return sign * result


def saturate(vectors: Sequence[Sequence[int]], n: int) -> list:
    """Z-basis of Z^n intersected with the rational span of the given integer vectors."""
    perp = integer_kernel(vectors, n)
    if not perp:
        return [[int(i == j) for i in range(n)] for j in range(n)]
    return integer_kernel(perp, n)
