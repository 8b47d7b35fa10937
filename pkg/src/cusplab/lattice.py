"""Geometry of unimodular lattices: successive minima, minimal covolumes,
unique small subspaces, Grassmannian dynamics and cusp classification.

Lattices carry an exact rational basis whenever possible.  Anything that
moves along the flow is evaluated in mpmath at a working precision that is
raised with |t| so that reduction of a_t x never runs out of bits.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Optional, Sequence

import mpmath
from mpmath import mpf

from . import intlin
from .intlin import Plucker, complete_unimodular, identity, saturate, vgcd
from .weyl import DiagonalFlow, Orientation, ParabolicSubgroup, orientation


class GeometryError(ValueError):
    pass


class PrecisionError(GeometryError):
    pass


class CapacityError(GeometryError):
    pass


class UniquenessError(GeometryError):
    pass


def default_precision() -> int:
    return int(os.environ.get("CUSPLAB_PRECISION", "128"))


# ---------------------------------------------------------------- config

@dataclass(frozen=True)
class ToleranceConfig:
    eta0: float = 0.25
    eps0: Optional[float] = None  # None: derive from the flow
    delta: Optional[float] = None
    delta_prime: Optional[float] = None
    r: Optional[float] = None
    root_tol: float = 1e-10
    precision: int = field(default_factory=default_precision)
    max_nodes: int = 2_000_000
    gap_factor: float = 1.0 + 1e-9
    strict: bool = True  # False allows delta == delta' for worked examples

    def __post_init__(self):
        if not 0 < self.eta0 < 1:
            raise GeometryError("eta0 must lie in (0, 1)")
        if self.eps0 is not None and not 0 < self.eps0 < 1:
            raise GeometryError("eps0 must lie in (0, 1)")
        if self.delta is not None or self.delta_prime is not None:
            self.check_thresholds()

    def check_thresholds(self, d: Optional[int] = None) -> None:
        dl, dp = self.delta, self.delta_prime
        if dl is None or dp is None:
            raise GeometryError("both delta and delta_prime are required")
        if not self.strict:
            if not 0 < dl <= dp < 1:
                raise GeometryError(f"need 0 < delta <= delta' < 1, got {dl}, {dp}")
            return
        if not 0 < dl < dp < self.eta0:
            raise GeometryError(f"need 0 < delta < delta' < eta0, got {dl}, {dp}, {self.eta0}")
        if not dp > math.sqrt(dl):
            raise GeometryError(f"need delta' > delta^(1/2), got delta'={dp}, delta={dl}")
        if d is not None and self.r is not None:
            lo, hi = r_interval(dl, dp, d)
            if not lo < self.r < hi:
                raise GeometryError(f"r={self.r} outside ({lo}, {hi})")

    def eps(self, flow: DiagonalFlow) -> float:
        return self.eps0 if self.eps0 is not None else default_eps0(flow)

    def with_(self, **kw) -> "ToleranceConfig":
        data = dict(self.__dict__)
        data.update(kw)
        return ToleranceConfig(**data)


def r_interval(delta: float, delta_prime: float, d: int) -> tuple:
    return ((math.log(delta_prime) / math.log(delta)) ** (1.0 / (d + 1)), 1.0)


# ---------------------------------------------------------------- lattices

def _is_exact(x) -> bool:
    return isinstance(x, (Fraction, int))


@dataclass(frozen=True)
class Lattice:
    """A unimodular lattice spanned by the columns of ``basis`` (row-major)."""
    d: int
    basis: tuple

    def __post_init__(self):
        rows = tuple(tuple(Fraction(v) if isinstance(v, (int, str)) else v for v in r) for r in self.basis)
        if len(rows) != self.d or any(len(r) != self.d for r in rows):
            raise GeometryError("basis must be d x d")
        if all(_is_exact(v) for r in rows for v in r):
            object.__setattr__(self, "basis", rows)
            D = intlin.det([list(r) for r in rows])
            if abs(D) != 1:
                raise GeometryError(f"|det| = {abs(D)}, lattice is not unimodular")
        else:
            with mpmath.workprec(default_precision()):
                rows = tuple(tuple(_mp(v) for v in r) for r in rows)
                object.__setattr__(self, "basis", rows)
                D = intlin.det([list(r) for r in rows])
                if abs(abs(mpf(D)) - 1) > mpf(2) ** (-default_precision() // 2):
                    raise GeometryError(f"|det| = {mpmath.nstr(abs(D), 20)}, lattice is not unimodular")

    @property
    def exact(self) -> bool:
        return all(_is_exact(v) for r in self.basis for v in r)

    @property
    def det_sign(self) -> int:
        return 1 if intlin.det([list(r) for r in self.basis]) > 0 else -1

    @classmethod
    def standard(cls, d: int) -> "Lattice":
        return cls(d, tuple(tuple(Fraction(int(i == j)) for j in range(d)) for i in range(d)))

    @classmethod
    def diagonal(cls, diag: Sequence) -> "Lattice":
        d = len(diag)
        return cls(d, tuple(tuple(diag[i] if i == j else Fraction(0) for j in range(d)) for i in range(d)))

    @classmethod
    def from_columns(cls, cols: Sequence[Sequence]) -> "Lattice":
        d = len(cols)
        return cls(d, tuple(tuple(cols[j][i] for j in range(d)) for i in range(d)))

    def columns(self) -> list:
        return [[self.basis[i][j] for i in range(self.d)] for j in range(self.d)]


@dataclass(frozen=True)
class LatticeSnapshot:
    """The lattice a_t x, kept together with the exact data it came from."""
    base: Lattice
    flow: Optional[DiagonalFlow]
    t: float
    precision: int

    @property
    def d(self) -> int:
        return self.base.d

    def guard_bits(self, mult: int = 1) -> int:
        """Extra bits covering the spread of a_t B (Gram entries square it)."""
        mags = [abs(float(v)) for r in self.base.basis for v in r if v != 0]
        spread = math.log2(max(mags) / min(mags))
        if self.flow is not None and self.t != 0:
            a = [float(x) for x in self.flow.alpha]
            spread += abs(self.t) * (max(a) - min(a)) * 1.4427
        return 32 + int(math.ceil(2 * mult * spread))

    def scale(self) -> list:
        if self.flow is None or self.t == 0:
            return [mpf(1)] * self.d
        t = mpf(self.t)
        return [mpmath.exp(t * mpf(a.numerator) / a.denominator) for a in self.flow.alpha]

    def columns(self, U: Optional[Sequence[Sequence[int]]] = None) -> list:
        """Real columns of a_t B U (B U is formed exactly when B is exact)."""
        cols = self.base.columns()
        if U is not None:
            d = self.d
            cols = [[sum(cols[k][i] * U[k][j] for k in range(d) if U[k][j]) for i in range(d)] for j in range(d)]
        s = self.scale()
        return [[s[i] * _mp(c[i]) for i in range(self.d)] for c in cols]

    def real_basis(self) -> list:
        with mpmath.workprec(self.precision + self.guard_bits()):
            cols = self.columns()
        return [[+cols[j][i] for j in range(self.d)] for i in range(self.d)]


def _mp(v):
    if isinstance(v, Fraction):
        return mpf(v.numerator) / v.denominator
    return mpf(v)


def snapshot(x, flow: Optional[DiagonalFlow] = None, t: float = 0.0, precision: Optional[int] = None) -> LatticeSnapshot:
    if isinstance(x, LatticeSnapshot):
        if flow is None:
            return x
        if x.flow is not None and x.flow != flow:
            raise GeometryError("snapshot already evolved by a different flow")
        return LatticeSnapshot(x.base, flow, x.t + t, precision or x.precision)
    if flow is not None and flow.d != x.d:
        raise GeometryError("dimension mismatch")
    return LatticeSnapshot(x, flow, t, precision or default_precision())


# ---------------------------------------------------------------- reduction

def _gram(cols: Sequence[Sequence]) -> list:
    n = len(cols)
    G = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            G[i][j] = G[j][i] = mpmath.fsum(a * b for a, b in zip(cols[i], cols[j]))
    return G


def _gso(G: Sequence[Sequence]) -> tuple:
    n = len(G)
    mu = [[mpf(0)] * n for _ in range(n)]
    b2 = [mpf(0)] * n
    for i in range(n):
        for j in range(i):
            s = G[i][j] - mpmath.fsum(mu[j][k] * mu[i][k] * b2[k] for k in range(j))
            mu[i][j] = s / b2[j]
        b2[i] = G[i][i] - mpmath.fsum(mu[i][k] ** 2 * b2[k] for k in range(i))
        if b2[i] <= 0:
            raise PrecisionError("Gram-Schmidt lost positivity; raise the working precision")
    return mu, b2


def _transform(G: Sequence[Sequence], T: Sequence[Sequence[int]]) -> list:
    n = len(G)
    GT = [[mpmath.fsum(G[i][k] * T[k][j] for k in range(n) if T[k][j]) for j in range(n)] for i in range(n)]
    out = [[mpmath.fsum(T[k][i] * GT[k][j] for k in range(n) if T[k][i]) for j in range(n)] for i in range(n)]
    for i in range(n):
        for j in range(i):
            out[i][j] = out[j][i]
    return out


def _col_sub(G: list, U: list, k: int, j: int, q: int) -> None:
    """b_k <- b_k - q b_j."""
    n = len(G)
    gkk = G[k][k] - 2 * q * G[k][j] + q * q * G[j][j]
    for i in range(n):
        if i != k:
            G[k][i] = G[k][i] - q * G[j][i]
            G[i][k] = G[k][i]
    G[k][k] = gkk
    for row in U:
        row[k] -= q * row[j]


def _col_swap(G: list, U: list, a: int, b: int) -> None:
    G[a], G[b] = G[b], G[a]
    for row in G:
        row[a], row[b] = row[b], row[a]
    for row in U:
        row[a], row[b] = row[b], row[a]


def lll_gram(G: Sequence[Sequence], lo: int = 0, delta: float = 0.99) -> tuple:
    """LLL on a Gram matrix; columns < lo are kept (their span is untouched).

    Returns the reduced Gram matrix and the integer transform U (G' = U^T G U).
    """
    n = len(G)
    G = [list(r) for r in G]
    U = identity(n)
    if n - lo < 2 and lo == 0:
        return G, U
    delta = mpf(delta)
    mu, b2 = _gso(G)
    k = max(lo, 1)
    while k < n:
        for j in range(k - 1, -1, -1):
            q = int(mpmath.nint(mu[k][j]))
            if q:
                _col_sub(G, U, k, j, q)
                for l in range(j):
                    mu[k][l] -= q * mu[j][l]
                mu[k][j] -= q
        if k - 1 >= lo and b2[k] < (delta - mu[k][k - 1] ** 2) * b2[k - 1]:
            _col_swap(G, U, k, k - 1)
            mu, b2 = _gso(G)
            k = max(k - 1, lo, 1)
        else:
            k += 1
    return G, U


def _enumerate(mu, b2, R2, visit, need_top_from: int = 0, max_nodes: int = 2_000_000) -> None:
    """Visit nonzero integer vectors y (one of each +-pair) with norm^2 <= R2.

    ``visit(y, norm2)`` may return a new (smaller) radius.  Vectors with
    y[need_top_from:] all zero are skipped.
    """
    n = len(b2)
    y = [0] * n
    R = [R2 * (1 + mpf(2) ** -40)]
    nodes = [0]

    def rec(j: int, partial, zero_above: bool):
        nodes[0] += 1
        if nodes[0] > max_nodes:
            raise CapacityError(f"enumeration exceeded {max_nodes} nodes")
        if j < 0:
            if not zero_above:
                new = visit(list(y), partial)
                if new is not None:
                    R[0] = new
            return
        if zero_above and j == need_top_from - 1:
            return
        if zero_above:
            x = 0
            while True:
                dd = b2[j] * x * x
                if partial + dd > R[0]:
                    break
                y[j] = x
                rec(j - 1, partial + dd, x == 0)
                x += 1
            y[j] = 0
            return
        c = -mpmath.fsum(mu[i][j] * y[i] for i in range(j + 1, n) if y[i])
        x0 = int(mpmath.nint(c))
        up, down = x0, x0 - 1
        up_ok = down_ok = True
        while up_ok or down_ok:
            if up_ok and (not down_ok or abs(up - c) <= abs(down - c)):
                x = up
                up += 1
                dd = b2[j] * (x - c) ** 2
                if partial + dd > R[0]:
                    up_ok = False
                    continue
            else:
                x = down
                down -= 1
                dd = b2[j] * (x - c) ** 2
                if partial + dd > R[0]:
                    down_ok = False
                    continue
            y[j] = x
            rec(j - 1, partial + dd, False)
        y[j] = 0

    rec(n - 1, mpf(0), True)


def _check_condition(b2, precision: int) -> None:
    lo, hi = min(b2), max(b2)
    if lo <= 0 or hi / lo > mpf(2) ** (precision - 24):
        raise PrecisionError("reduced basis too ill-conditioned for the working precision")


@dataclass
class Minima:
    """Output of the successive-minima computation."""
    lams: list  # mpf
    sq_exact: Optional[list]  # Fractions when the base lattice is exact
    vectors: list  # integer coefficient vectors (w.r.t. the base basis) realising the minima
    U: list  # unimodular; the first k columns of B U span the k-th Minkowski flag space
    precision: int


def _minkowski_gram(G, cfg_nodes: int, lo_prec: int) -> tuple:
    n = len(G)
    G, U = lll_gram(G)
    lams2, vecs = [], []
    for k in range(n):
        mu, b2 = _gso(G)
        _check_condition(b2, lo_prec)
        R = min(G[j][j] for j in range(k, n))
        best = [None, None]

        def visit(y, nrm):
            if best[0] is None or nrm < best[0]:
                best[0], best[1] = nrm, y
                return nrm
            return None

        _enumerate(mu, b2, R, visit, need_top_from=k, max_nodes=cfg_nodes)
        nrm, y = best
        lams2.append(nrm)
        vecs.append([sum(U[i][j] * y[j] for j in range(n)) for i in range(n)])
        top = y[k:]
        g = vgcd(top)
        M = complete_unimodular([t // g for t in top])
        T = identity(n)
        for i in range(n - k):
            for j in range(n - k):
                T[k + i][k + j] = M[i][j]
        if g == 1:
            for i in range(k):
                T[i][k] = y[i]
        G = _transform(G, T)
        U = intlin.matmul(U, T)
        if n - (k + 1) >= 2:
            G, U2 = lll_gram(G, lo=k + 1)
            U = intlin.matmul(U, U2)
    return lams2, vecs, U, G


def successive_minima_data(x, warm: Optional[Sequence[Sequence[int]]] = None, max_nodes: int = 2_000_000) -> Minima:
    snap = snapshot(x)
    d = snap.d
    prec = snap.precision + snap.guard_bits()
    with mpmath.workprec(prec):
        U0 = warm if warm is not None else identity(d)
        cols = snap.columns(U0)
        G = _gram(cols)
        lams2, vecs, U, _ = _minkowski_gram(G, max_nodes, prec)
        vecs = [[sum(U0[i][k] * v[k] for k in range(d)) for i in range(d)] for v in vecs]
        U = intlin.matmul(U0, U)
        lams = [mpmath.sqrt(v) for v in lams2]
        sq_exact = None
        if snap.base.exact and (snap.flow is None or snap.t == 0):
            sq_exact = [_exact_norm2(snap.base, v) for v in vecs]
            lams = [mpmath.sqrt(_mp(s)) for s in sq_exact]
    with mpmath.workprec(snap.precision):
        lams = [+v for v in lams]
    return Minima(lams, sq_exact, vecs, U, snap.precision)


def _exact_norm2(L: Lattice, coeffs: Sequence[int]) -> Fraction:
    v = [sum((L.basis[i][j] * coeffs[j] for j in range(L.d)), Fraction(0)) for i in range(L.d)]
    return sum((c * c for c in v), Fraction(0))


def successive_minima(x) -> list:
    return successive_minima_data(x).lams


def eta(x, i: int, minima: Optional[Minima] = None) -> mpf:
    m = minima or successive_minima_data(x)
    d = len(m.lams)
    if not 1 <= i <= d - 1:
        raise GeometryError(f"index {i} outside 1..{d - 1}")
    with mpmath.workprec(m.precision):
        return m.lams[i - 1] / m.lams[i]


def etas(x, minima: Optional[Minima] = None) -> list:
    m = minima or successive_minima_data(x)
    with mpmath.workprec(m.precision):
        return [m.lams[i] / m.lams[i + 1] for i in range(len(m.lams) - 1)]


def eta_set(x, eps: float, minima: Optional[Minima] = None) -> tuple:
    return tuple(i + 1 for i, e in enumerate(etas(x, minima)) if e < eps)


def height(x, minima: Optional[Minima] = None) -> list:
    m = minima or successive_minima_data(x)
    with mpmath.workprec(m.precision):
        return [-mpmath.log(v) for v in m.lams]


# ---------------------------------------------------------------- subspaces

@dataclass(frozen=True)
class RationalSubspace:
    """x-rational subspace given by integer coefficients of a Z-basis of x ∩ V."""
    lattice: Lattice
    coeffs: tuple  # l integer vectors, coefficients w.r.t. lattice.basis

    @property
    def dim(self) -> int:
        return len(self.coeffs)

    def generators(self) -> list:
        B = self.lattice.basis
        d = self.lattice.d
        return [[sum((B[i][j] * c[j] for j in range(d)), B[i][0] * 0) for i in range(d)] for c in self.coeffs]

    def vectors_at(self, snap: LatticeSnapshot) -> list:
        """Real generators of a_t V inside a_t x."""
        s = snap.scale()
        return [[s[i] * _mp(v[i]) for i in range(len(v))] for v in self.generators()]

    def plucker(self) -> list:
        return Plucker(self.lattice.d, self.dim).wedge(self.generators())

    def plucker_at(self, snap: LatticeSnapshot) -> list:
        return Plucker(self.lattice.d, self.dim).wedge(self.vectors_at(snap))

    def covol_sq_exact(self) -> Optional[Fraction]:
        if not self.lattice.exact:
            return None
        gens = self.generators()
        return intlin.det([[sum((a * b for a, b in zip(u, v)), Fraction(0)) for v in gens] for u in gens])

    def covol(self, snap: Optional[LatticeSnapshot] = None):
        if snap is None or snap.t == 0 or snap.flow is None:
            sq = self.covol_sq_exact()
            if sq is not None:
                return mpmath.sqrt(_mp(sq))
            vecs = [[_mp(v) for v in g] for g in self.generators()]
        else:
            vecs = self.vectors_at(snap)
        G = [[mpmath.fsum(a * b for a, b in zip(u, v)) for v in vecs] for u in vecs]
        return mpmath.sqrt(intlin.det(G))

    def key(self) -> tuple:
        """Canonical form: Hermite-like normalised Plücker vector of the coefficient lattice."""
        p = Plucker(self.lattice.d, self.dim).wedge(self.coeffs_columns())
        p = [int(v) for v in p]
        g = vgcd(p)
        p = [v // g for v in p]
        first = next(v for v in p if v)
        return tuple(v if first > 0 else -v for v in p)

    def coeffs_columns(self) -> list:
        return [list(c) for c in self.coeffs]

    def same_as(self, other: "RationalSubspace") -> bool:
        return self.dim == other.dim and self.key() == other.key()

    def intersect(self, other: "RationalSubspace") -> "RationalSubspace":
        d = self.lattice.d
        # z in both spans: kernel of the stacked orthogonal complements
        perp = intlin.integer_kernel(self.coeffs, d) + intlin.integer_kernel(other.coeffs, d)
        if not perp:
            return RationalSubspace(self.lattice, tuple(tuple(int(i == j) for i in range(d)) for j in range(d)))
        return RationalSubspace(self.lattice, tuple(tuple(v) for v in intlin.integer_kernel(perp, d)))

    def sum(self, other: "RationalSubspace") -> "RationalSubspace":
        d = self.lattice.d
        return RationalSubspace(self.lattice, tuple(tuple(v) for v in saturate(list(self.coeffs) + list(other.coeffs), d)))


def flag_subspace(x, minima: Minima, l: int) -> RationalSubspace:
    """Span of the first l Minkowski basis vectors (saturated)."""
    snap = snapshot(x)
    U = minima.U
    d = snap.d
    return RationalSubspace(snap.base, tuple(tuple(U[i][j] for i in range(d)) for j in range(l)))


def _exterior_search(x, l: int, minima: Minima, max_nodes: int, want_second: bool) -> tuple:
    """Smallest (and optionally second smallest) covolume l-dim x-rational subspaces."""
    snap = snapshot(x)
    d = snap.d
    pk = Plucker(d, l)
    D = len(pk.index)
    prec = snap.precision + snap.guard_bits(l)
    with mpmath.workprec(prec):
        C = snap.columns(minima.U)
        Gc = _gram(C)
        # Gram of the wedges c_I (Cauchy-Binet)
        Gx = [[intlin.det([[Gc[i][j] for j in J] for i in I]) for J in pk.index] for I in pk.index]
        Gx, V = lll_gram(Gx)
        mu, b2 = _gso(Gx)
        _check_condition(b2, prec)
        R = min(Gx[i][i] for i in range(D) if pk.is_decomposable([V[k][i] for k in range(D)]))
        R = min(R, intlin.det([[Gc[i][j] for j in range(l)] for i in range(l)]))
        best = [None, None]

        def visit(y, nrm):
            p = [sum(V[i][j] * y[j] for j in range(D)) for i in range(D)]
            if best[0] is not None and nrm >= best[0]:
                return None
            if not pk.is_decomposable(p):
                return None
            best[0], best[1] = nrm, p
            return nrm

        _enumerate(mu, b2, R, visit, max_nodes=max_nodes)
        p_best = best[1]
        first = _subspace_from_plucker(snap.base, minima.U, pk, p_best)
        second = None
        if want_second:
            # rebase so that the best vector is the first basis vector, then look
            # for the shortest decomposable vector outside its line
            y0 = _solve_int(V, p_best)
            g = vgcd(y0)
            M = complete_unimodular([t // g for t in y0])
            Gy = _transform(Gx, M)
            V2 = intlin.matmul(V, M)
            mu2, b22 = _gso(Gy)
            cands = [Gc_I for Gc_I in _flag_wedge_norms(Gc, pk) if not _same_line(Gc_I[1], p_best)]
            R2 = min(c[0] for c in cands) if cands else None
            if R2 is None:
                R2 = max(Gx[i][i] for i in range(D)) * D
            sec = [None, None]

            def visit2(y, nrm):
                p = [sum(V2[i][j] * y[j] for j in range(D)) for i in range(D)]
                if sec[0] is not None and nrm >= sec[0]:
                    return None
                if not pk.is_decomposable(p):
                    return None
                sec[0], sec[1] = nrm, p
                return nrm

            _enumerate(mu2, b22, R2, visit2, need_top_from=1, max_nodes=max_nodes)
            if sec[1] is not None:
                second = (mpmath.sqrt(sec[0]), _subspace_from_plucker(snap.base, minima.U, pk, sec[1]))
        val = mpmath.sqrt(best[0])
    return (val, first), second


def _flag_wedge_norms(Gc, pk: Plucker) -> list:
    out = []
    D = len(pk.index)
    for k, I in enumerate(pk.index):
        e = [0] * D
        e[k] = 1
        out.append((intlin.det([[Gc[i][j] for j in I] for i in I]), e))
    return out


def _same_line(p: Sequence[int], q: Sequence[int]) -> bool:
    g1, g2 = vgcd(p), vgcd(q)
    a = [v // g1 for v in p]
    b = [v // g2 for v in q]
    return a == b or a == [-v for v in b]


def _solve_int(V: Sequence[Sequence[int]], p: Sequence[int]) -> list:
    """Solve V y = p exactly for a unimodular integer V."""
    n = len(V)
    A = [[Fraction(V[i][j]) for j in range(n)] + [Fraction(p[i])] for i in range(n)]
    for c in range(n):
        piv = next(r for r in range(c, n) if A[r][c] != 0)
        A[c], A[piv] = A[piv], A[c]
        A[c] = [v / A[c][c] for v in A[c]]
        for r in range(n):
            if r != c and A[r][c] != 0:
                f = A[r][c]
                A[r] = [a - f * b for a, b in zip(A[r], A[c])]
    return [int(A[i][-1]) for i in range(n)]


def _subspace_from_plucker(L: Lattice, U: Sequence[Sequence[int]], pk: Plucker, p: Sequence[int]) -> RationalSubspace:
    span = saturate(pk.span(p), pk.n)
    d = pk.n
    coeffs = [tuple(sum(U[i][k] * s[k] for k in range(d)) for i in range(d)) for s in span]
    return RationalSubspace(L, tuple(coeffs))


def alpha_min_covol(x, l: int, minima: Optional[Minima] = None, max_nodes: int = 2_000_000) -> tuple:
    """(alpha_l(x), witness subspace)."""
    snap = snapshot(x)
    d = snap.d
    if not 1 <= l <= d:
        raise GeometryError(f"l={l} outside 1..{d}")
    m = minima or successive_minima_data(snap, max_nodes=max_nodes)
    if l == d:
        return mpf(1), RationalSubspace(snap.base, tuple(tuple(int(i == j) for i in range(d)) for j in range(d)))
    if l == 1:
        return m.lams[0], RationalSubspace(snap.base, (tuple(m.vectors[0]),))
    (val, sub), _ = _exterior_search(snap, l, m, max_nodes, False)
    return val, sub


def alpha_all(x, minima: Optional[Minima] = None) -> list:
    """[alpha_1, ..., alpha_d]."""
    snap = snapshot(x)
    m = minima or successive_minima_data(snap)
    return [alpha_min_covol(snap, l, m)[0] for l in range(1, snap.d + 1)]


def unique_small_subspace(x, l: int, cfg: ToleranceConfig = ToleranceConfig(), minima: Optional[Minima] = None) -> RationalSubspace:
    snap = snapshot(x)
    d = snap.d
    if not 1 <= l <= d - 1:
        raise GeometryError(f"l={l} outside 1..{d - 1}")
    m = minima or successive_minima_data(snap, max_nodes=cfg.max_nodes)
    e = eta(snap, l, m)
    if not e < cfg.eta0:
        raise GeometryError(f"eta_{l} = {mpmath.nstr(e, 8)} is not below eta0 = {cfg.eta0}")
    if l == 1:
        best, sub = m.lams[0], RationalSubspace(snap.base, (tuple(m.vectors[0]),))
        second = m.lams[1]
    else:
        (best, sub), sec = _exterior_search(snap, l, m, cfg.max_nodes, True)
        second = sec[0] if sec is not None else mpmath.inf
    if not second > best * mpf(cfg.gap_factor):
        raise UniquenessError(f"no covolume gap in dimension {l}: {mpmath.nstr(best, 10)} vs {mpmath.nstr(second, 10)}")
    return sub


# ---------------------------------------------------------------- Grassmannian

def _orthonormal(vectors: Sequence[Sequence]) -> list:
    """Gram-Schmidt (twice) on a list of vectors."""
    out = []
    for v in vectors:
        w = [_mp(a) for a in v]
        for _ in range(2):
            for q in out:
                c = mpmath.fsum(a * b for a, b in zip(w, q))
                w = [a - c * b for a, b in zip(w, q)]
        n = mpmath.sqrt(mpmath.fsum(a * a for a in w))
        if n == 0:
            raise GeometryError("vectors are linearly dependent")
        out.append([a / n for a in w])
    return out


def grassmann_distance(V: Sequence[Sequence], W: Sequence[Sequence]) -> mpf:
    """sup over unit v in V of dist(v, W); V, W given by spanning vectors."""
    if isinstance(V, RationalSubspace):
        V = V.generators()
    if isinstance(W, RationalSubspace):
        W = W.generators()
    if len(V) != len(W):
        raise GeometryError("subspaces of different dimensions")
    if len(V[0]) != len(W[0]):
        raise GeometryError("different ambient dimensions")
    Qv, Qw = _orthonormal(V), _orthonormal(W)
    # residuals of Qv after projecting onto W; the answer is their top singular value
    R = []
    for v in Qv:
        r = list(v)
        for q in Qw:
            c = mpmath.fsum(a * b for a, b in zip(v, q))
            r = [a - c * b for a, b in zip(r, q)]
        R.append(r)
    M = mpmath.matrix(R)
    s = mpmath.svd_r(M, compute_uv=False)
    return min(max(s), mpf(1))


def default_eps0(flow: DiagonalFlow) -> float:
    """(1/3) of the smallest distance between invariant coordinate subspaces of
    equal dimension whose weight multisets differ."""
    d = flow.d
    best = 1.0
    for l in range(1, d):
        subs = {}
        for I in combinations(range(d), l):
            key = tuple(sorted(flow.alpha[i] for i in I))
            subs.setdefault(key, []).append(I)
        keys = list(subs)
        for a in range(len(keys)):
            for b in range(a + 1, len(keys)):
                I, J = subs[keys[a]][0], subs[keys[b]][0]
                V = [[int(k == i) for k in range(d)] for i in I]
                W = [[int(k == j) for k in range(d)] for j in J]
                best = min(best, float(grassmann_distance(V, W)))
    return best / 3


def _weight_groups(flow: DiagonalFlow, p: Sequence, pk: Plucker) -> list:
    """[(multiset, beta, |v_j|^2)] grouping Plücker coordinates by weight multiset."""
    groups = {}
    for k, I in enumerate(pk.index):
        E = tuple(sorted(flow.alpha[i] for i in I))
        groups[E] = groups.get(E, 0) + _mp(p[k]) ** 2
    return sorted(((E, sum(E), n) for E, n in groups.items()), key=lambda g: (g[1], g[0]))


def orientation_of_subspace(V, flow: DiagonalFlow, cfg: ToleranceConfig = ToleranceConfig(),
                            snap: Optional[LatticeSnapshot] = None) -> Optional[tuple]:
    """Dominant weight multiset of the Plücker vector of V, or None."""
    p = _plucker_of(V, snap)
    d = flow.d
    pk = Plucker(d, len(p) and _dim_of(V))
    if all(v == 0 for v in p):
        raise GeometryError("zero Plücker vector")
    with mpmath.workprec(cfg.precision + 16):
        groups = _weight_groups(flow, p, pk)
        eps = mpf(cfg.eps(flow))
        top = max(groups, key=lambda g: g[2])
        rest = mpmath.fsum(g[2] for g in groups if g is not top)
        if rest < eps ** 2 * top[2]:
            return top[0]
    return None


def _dim_of(V) -> int:
    if isinstance(V, RationalSubspace):
        return V.dim
    return len(V)


def _plucker_of(V, snap: Optional[LatticeSnapshot]) -> list:
    if isinstance(V, RationalSubspace):
        if snap is not None and snap.flow is not None and snap.t != 0:
            with mpmath.workprec(snap.precision + snap.guard_bits()):
                return V.plucker_at(snap)
        return V.plucker()
    d = len(V[0])
    return Plucker(d, len(V)).wedge(V)


@dataclass(frozen=True)
class DominanceInterval:
    multiset: tuple
    start: float
    end: float

    @property
    def length(self) -> float:
        return self.end - self.start


def grassmann_intervals(V, flow: DiagonalFlow, cfg: ToleranceConfig = ToleranceConfig(), window=(-50.0, 50.0),
                        eps: Optional[float] = None) -> tuple:
    """Maximal time intervals in ``window`` on which one weight group dominates.

    Returns (intervals, uncovered_length).
    """
    t0, t1 = float(window[0]), float(window[1])
    if not t1 > t0:
        raise GeometryError("degenerate window")
    p = _plucker_of(V, None)
    pk = Plucker(flow.d, _dim_of(V))
    out = []
    with mpmath.workprec(cfg.precision + 16):
        groups = [(E, b, n) for E, b, n in _weight_groups(flow, p, pk) if n > 0]
        e2 = mpf(eps if eps is not None else cfg.eps(flow)) ** 2
        for j, (E, beta, nj) in enumerate(groups):
            others = [(b, n) for k, (_, b, n) in enumerate(groups) if k != j]
            iv = _dominance_interval(beta, nj, others, e2, t0, t1, cfg.root_tol)
            if iv is not None:
                out.append(DominanceInterval(E, iv[0], iv[1]))
    out.sort(key=lambda iv: iv.start)
    covered = sum(iv.length for iv in out)
    return out, (t1 - t0) - covered


def _dominance_interval(beta, nj, others, e2, t0, t1, tol):
    """{t in [t0, t1] : sum_i n_i e^{2t(b_i - beta)} < e2 nj}, an interval by convexity."""
    if not others:
        return (t0, t1)
    target = mpmath.log(e2 * nj)

    def g(t):
        # log of the competing mass relative to the dominant one, minus the target
        terms = [mpmath.log(n) + 2 * mpf(t) * (b - beta) for b, n in others]
        m = max(terms)
        return m + mpmath.log(mpmath.fsum(mpmath.exp(s - m) for s in terms)) - target

    # g is convex; find its minimiser on the window by ternary search on the derivative sign
    slopes = [b - beta for b, _ in others]
    if all(s > 0 for s in slopes):
        tmin = t0
    elif all(s < 0 for s in slopes):
        tmin = t1
    else:
        lo, hi = t0, t1
        for _ in range(200):
            m1 = lo + (hi - lo) / 3
            m2 = hi - (hi - lo) / 3
            if g(m1) < g(m2):
                hi = m2
            else:
                lo = m1
            if hi - lo < tol:
                break
        tmin = (lo + hi) / 2
    if g(tmin) >= 0:
        return None
    a = t0 if g(t0) < 0 else _bisect(g, t0, tmin, tol)
    b = t1 if g(t1) < 0 else _bisect(g, tmin, t1, tol)
    return (float(a), float(b))


def _bisect(f, a, b, tol):
    fa = f(a)
    for _ in range(400):
        m = (a + b) / 2
        fm = f(m)
        if (fm < 0) == (fa < 0):
            a, fa = m, fm
        else:
            b = m
        if b - a < tol:
            break
    return (a + b) / 2


# ---------------------------------------------------------------- classification

@dataclass
class Classification:
    P: ParabolicSubgroup
    Q: ParabolicSubgroup
    orientation: Optional[Orientation]
    eta: list
    minima: list
    flags: dict = field(default_factory=dict)  # l -> RationalSubspace


def orientation_from_flag(flow: DiagonalFlow, Q: ParabolicSubgroup, multisets: dict) -> Optional[Orientation]:
    """[w]_Q from the multisets E_l, l in eta(Q); None if they are not nested."""
    from collections import Counter
    prev = Counter()
    perm = []
    used = set()
    for l in list(Q.jumps) + [flow.d]:
        E = Counter(multisets[l]) if l in multisets else Counter(flow.alpha)
        diff = E - prev
        if sum(diff.values()) != l - sum(prev.values()) or any(prev[k] > E[k] for k in prev):
            return None
        for j in range(1, flow.d + 1):
            if j not in used and diff[flow.alpha[j - 1]] > 0:
                diff[flow.alpha[j - 1]] -= 1
                used.add(j)
                perm.append(j)
        prev = E
    if len(perm) != flow.d:
        return None
    return orientation(flow, Q, perm)


def classify(x, flow: DiagonalFlow, cfg: ToleranceConfig, minima: Optional[Minima] = None) -> Classification:
    snap = snapshot(x)
    if snap.d != flow.d:
        raise GeometryError("dimension mismatch")
    m = minima or successive_minima_data(snap, max_nodes=cfg.max_nodes)
    e = etas(snap, m)
    d = flow.d
    P = ParabolicSubgroup(d, tuple(i + 1 for i, v in enumerate(e) if v < cfg.delta))
    Q = ParabolicSubgroup(d, tuple(i + 1 for i, v in enumerate(e) if v < cfg.delta_prime))
    flags = {}
    multisets = {}
    ok = True
    for l in Q.jumps:
        try:
            V = unique_small_subspace(snap, l, cfg, m)
        except UniquenessError:
            ok = False
            break
        flags[l] = V
        E = orientation_of_subspace(V, flow, cfg, snap)
        if E is None:
            ok = False
            break
        multisets[l] = E
    w = orientation_from_flag(flow, Q, multisets) if ok else None
    return Classification(P, Q, w, [float(v) for v in e], [float(v) for v in m.lams], flags)


# ---------------------------------------------------------------- dynamics checks

def covol_evolution_check(x, flow: DiagonalFlow, cfg: ToleranceConfig, interval, P: ParabolicSubgroup,
                          w: Orientation, samples: int = 21) -> float:
    """max over samples and l in eta(P) of |log a_l(a_t x) - log a_l(x) - t sum_{i<=l} alpha_w(i)|.

    ``interval`` is in times relative to x.  Raises GeometryError with the exit
    time if a sample leaves the region N^+_delta(P, [w]_P).
    """
    with mpmath.workprec(cfg.precision):
        base = snapshot(x, flow)
        t0, t1 = float(interval[0]), float(interval[1])
        times = [t0 + (t1 - t0) * k / (samples - 1) for k in range(samples)] if samples > 1 else [t0]
        if 0.0 not in times:
            times = [0.0] + times
        worst = 0.0
        data = {}
        for t in sorted(set(times)):
            s = LatticeSnapshot(base.base, flow, base.t + t, base.precision)
            m = successive_minima_data(s, max_nodes=cfg.max_nodes)
            e = etas(s, m)
            if not all(e[l - 1] < cfg.delta for l in P.jumps):
                raise GeometryError(f"trajectory leaves the cusp region at t={t}")
            vals = {}
            for l in P.jumps:
                V = unique_small_subspace(s, l, cfg, m)
                E = orientation_of_subspace(V, flow, cfg, s)
                if E is None or tuple(sorted(flow.alpha[i - 1] for i in w.rep[:l])) != E:
                    raise GeometryError(f"orientation changes at t={t}")
                vals[l] = mpmath.log(alpha_min_covol(s, l, m)[0])
            data[t] = vals
        ref = data[0.0]
        for t, vals in data.items():
            for l in P.jumps:
                drift = sum(flow.alpha[i - 1] for i in w.rep[:l])
                dev = abs(vals[l] - ref[l] - mpf(t) * _mp(drift))
                worst = max(worst, float(dev))
        return worst


def flag_basis(x, P: ParabolicSubgroup, flow: DiagonalFlow, cfg: ToleranceConfig = ToleranceConfig(),
               flag: Optional[dict] = None) -> tuple:
    """(O, w, u, rep); see :func:`_flag_basis`."""
    with mpmath.workprec(cfg.precision):
        return _flag_basis(x, P, flow, cfg, flag)


def _flag_basis(x, P: ParabolicSubgroup, flow: DiagonalFlow, cfg: ToleranceConfig, flag: Optional[dict]) -> tuple:
    """(O, w, u) with the columns of O w u a basis of the flag {V_l(x)}, l in eta(P).

    O is block-orthogonal on the eigenspaces of the flow, w the permutation
    matrix of the canonical representative, and u lower block-unipotent.
    """
    snap = snapshot(x)
    d = flow.d
    if flag is None:
        m = successive_minima_data(snap, max_nodes=cfg.max_nodes)
        flag = {l: unique_small_subspace(snap, l, cfg, m) for l in P.jumps}
    multisets = {}
    for l in P.jumps:
        E = orientation_of_subspace(flag[l], flow, cfg, snap)
        if E is None:
            raise GeometryError(f"V_{l} has no orientation")
        multisets[l] = E
    wo = orientation_from_flag(flow, P, multisets)
    if wo is None:
        raise GeometryError("orientations of the flag are not nested")
    rep = wo.rep
    exact = snap.base.exact and (snap.t == 0 or snap.flow is None) and len(set(flow.alpha)) == d
    one = Fraction(1) if exact else mpf(1)
    zero = one * 0

    def gens(l):
        if exact:
            return [list(g) for g in flag[l].generators()]
        if snap.flow is not None and snap.t != 0:
            return flag[l].vectors_at(snap)
        return [[_mp(v) for v in g] for g in flag[l].generators()]

    bounds = list(P.jumps)
    # orthonormal eigenvector basis z adapted to the invariant flag near {V_l}
    if exact:
        z = [[one if i == rep[k] - 1 else zero for i in range(d)] for k in range(d)]
    else:
        z = _adapted_eigenbasis(flow, rep, bounds, gens)
    # column elimination, block by block
    vs = []
    prev = 0
    for l in bounds:
        A = gens(l)
        block = []
        for i in range(prev, l):
            block.append(_project(z[i], A, exact))
        cur = vs + block
        for j in range(l):
            wj = z[j]
            piv = _dot(cur[j], wj)
            if abs(piv) < (mpf(2) ** (-cfg.precision // 2) if not exact else 0) or piv == 0:
                raise PrecisionError("degenerate pivot in flag basis elimination")
            pivot_row = cur[j]
            for i in range(prev, l):
                coef = (_dot(cur[i], wj) - (one if i == j else zero)) / piv
                if coef:
                    cur[i] = [a - coef * b for a, b in zip(cur[i], pivot_row)]
        vs = cur
        prev = l
    for i in range(prev, d):
        vs.append(list(z[i]))
    # O e_{rep(k)} = z_k ; w e_k = e_{rep(k)} ; u = z^T y
    O = [[zero] * d for _ in range(d)]
    for k in range(d):
        for i in range(d):
            O[i][rep[k] - 1] = z[k][i]
    W = [[one if i == rep[k] - 1 else zero for k in range(d)] for i in range(d)]
    u = [[_dot(z[s], vs[i]) for i in range(d)] for s in range(d)]
    return O, W, u, rep


def _dot(a, b):
    return sum((x * y for x, y in zip(a, b)), a[0] * 0)


def _project(v, A, exact):
    """Orthogonal projection of v onto span(A)."""
    G = [[_dot(a, b) for b in A] for a in A]
    rhs = [_dot(a, v) for a in A]
    c = _solve(G, rhs)
    n = len(v)
    return [sum((c[k] * A[k][i] for k in range(len(A))), v[0] * 0) for i in range(n)]


def _solve(G, b):
    n = len(G)
    A = [list(G[i]) + [b[i]] for i in range(n)]
    for c in range(n):
        piv = max(range(c, n), key=lambda r: abs(A[r][c]))
        A[c], A[piv] = A[piv], A[c]
        p = A[c][c]
        A[c] = [v / p for v in A[c]]
        for r in range(n):
            if r != c and A[r][c] != 0:
                f = A[r][c]
                A[r] = [a - f * bb for a, bb in zip(A[r], A[c])]
    return [A[i][-1] for i in range(n)]


def _adapted_eigenbasis(flow: DiagonalFlow, rep, bounds, gens) -> list:
    """Orthonormal eigenvectors z_1..z_d, z_k in the alpha_{rep(k)} eigenspace, with
    span(z_1..z_l) the invariant subspace closest to V_l for each l in bounds."""
    d = flow.d
    eig = {}
    for i, a in enumerate(flow.alpha):
        eig.setdefault(a, []).append(i)
    chosen = {a: [] for a in eig}  # orthonormal vectors already used in each eigenspace
    z = [None] * d
    prev = 0
    for l in bounds + [d]:
        A = gens(l) if l < d else [[mpf(int(i == j)) for i in range(d)] for j in range(d)]
        need = {}
        for k in range(prev, l):
            need.setdefault(flow.alpha[rep[k] - 1], []).append(k)
        for a, ks in need.items():
            idx = eig[a]
            # project V_l onto the eigenspace, remove the directions already chosen
            P = []
            for g in A:
                v = [mpf(0)] * d
                for i in idx:
                    v[i] = _mp(g[i])
                for q in chosen[a]:
                    c = mpmath.fsum(x * y for x, y in zip(v, q))
                    v = [x - c * y for x, y in zip(v, q)]
                P.append(v)
            M = mpmath.matrix([[P[r][i] for r in range(len(P))] for i in idx])
            Uu, S, _ = mpmath.svd_r(M)
            for n_k, k in enumerate(ks):
                col = [Uu[r, n_k] for r in range(len(idx))]
                v = [mpf(0)] * d
                for r, i in enumerate(idx):
                    v[i] = col[r]
                for q in chosen[a]:
                    c = mpmath.fsum(x * y for x, y in zip(v, q))
                    v = [x - c * y for x, y in zip(v, q)]
                nv = mpmath.sqrt(mpmath.fsum(x * x for x in v))
                v = [x / nv for x in v]
                # fix the sign so that the largest entry is positive
                big = max(range(d), key=lambda i: abs(v[i]))
                if v[big] < 0:
                    v = [-x for x in v]
                chosen[a].append(v)
                z[k] = v
        prev = l
    return z


# ---------------------------------------------------------------- witnesses

def cusp_witness(P: ParabolicSubgroup, n: int, precision: Optional[int] = None) -> Lattice:
    """Diagonal lattice sitting deep in the cusp region of P for large n."""
    if P.is_G:
        raise GeometryError("no cusp witness for P = G")
    if n < 2:
        raise GeometryError("n must be >= 2")
    d = P.d
    k = len(P.jumps)
    b = P.bounds
    z = [Fraction(1, n ** (k + 1 - m)) for m in range(1, k + 1)]
    # last block normalises the determinant
    expo = Fraction(0)
    logs = Fraction(0)
    last = b[k + 1] - b[k]
    prod = Fraction(1)
    for s in range(1, k + 1):
        prod *= z[s - 1] ** (b[s] - b[s - 1])
    target = 1 / prod  # z_{k+1}^last = target
    zl = _rational_root(target, last)
    if zl is None:
        with mpmath.workprec(precision or default_precision()):
            zl = mpmath.root(_mp(target), last)
    diag = []
    for s in range(1, k + 2):
        val = z[s - 1] if s <= k else zl
        diag.extend([val] * (b[s] - b[s - 1]))
    return Lattice.diagonal(diag)


def _rational_root(q: Fraction, k: int) -> Optional[Fraction]:
    def iroot(n):
        r = round(n ** (1.0 / k))
        for c in (r - 1, r, r + 1):
            if c >= 0 and c ** k == n:
                return c
        return None
    a, b = iroot(q.numerator), iroot(q.denominator)
    if a is None or b is None:
        return None
    return Fraction(a, b)
