"""Entropy upper bounds built from the Weyl tables in :mod:`cusplab.weyl`.

The bound for a functional phi is a max of finitely many affine functions
of phi, so optimising phi is a small linear program; we solve it exactly.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

from . import simplex
from .weyl import (
    DiagonalFlow,
    LinearFunctional,
    Orientation,
    ParabolicSubgroup,
    WeylError,
    entropy,
    enumerate_parabolics,
    h_phi,
    orientation,
    project,
    weyl_double_cosets,
)


class BoundError(ValueError):
    pass


@dataclass(frozen=True)
class Row:
    parabolic: ParabolicSubgroup
    orientation: Orientation
    entropy: Fraction
    projection: tuple
    value: Fraction  # (h - phi)


def rows(flow: DiagonalFlow, phi: Optional[LinearFunctional] = None, parabolics=None) -> list:
    if phi is None:
        phi = LinearFunctional.zero(flow.d)
    if phi.d != flow.d:
        raise WeylError("dimension mismatch")
    if parabolics is None:
        parabolics = enumerate_parabolics(flow.d)
    out = []
    for P in parabolics:
        for w in weyl_double_cosets(flow, P):
            h = entropy(flow, P, w)
            v = project(flow, P, w)
            out.append(Row(P, w, h, v, h - phi(v)))
    return out


def _cusp_parabolics(d: int) -> list:
    return [P for P in enumerate_parabolics(d) if not P.is_G]


def bound_cusp(flow: DiagonalFlow, phi: LinearFunctional) -> Fraction:
    return max(r.value for r in rows(flow, phi, _cusp_parabolics(flow.d)))


def bound_at_P(flow: DiagonalFlow, phi: LinearFunctional, P: ParabolicSubgroup) -> Fraction:
    if P.d != flow.d:
        raise WeylError("dimension mismatch")
    return max(r.value for r in rows(flow, phi, [P]))


def global_max(flow: DiagonalFlow, phi: LinearFunctional) -> Fraction:
    return max(r.value for r in rows(flow, phi))


@dataclass
class MeasureVector:
    """Masses of the oriented regions plus the un-oriented residual."""
    d: int
    masses: dict = field(default_factory=dict)  # (jumps, rep) -> mass
    residual: float = 0.0

    def total(self) -> float:
        return sum(self.masses.values()) + self.residual

    def validate(self, tol: float = 1e-12) -> None:
        if self.residual < 0 or any(m < 0 for m in self.masses.values()):
            raise BoundError("negative mass")
        if abs(self.total() - 1.0) > tol:
            raise BoundError(f"masses sum to {self.total()}, not 1")


def bound_weighted(flow: DiagonalFlow, phi: LinearFunctional, mu: MeasureVector) -> float:
    if mu.d != flow.d:
        raise WeylError("dimension mismatch")
    mu.validate()
    total = 0.0
    for (jumps, rep), mass in mu.masses.items():
        if not mass:
            continue
        P = ParabolicSubgroup(flow.d, jumps)
        w = orientation(flow, P, rep)
        total += mass * float(h_phi(flow, P, w, phi))
    if mu.residual:
        total += mu.residual * float(global_max(flow, phi))
    return total


@dataclass
class LPSolution:
    phi: LinearFunctional
    value: Fraction
    status: str
    pivots: int


def optimize_phi(flow: DiagonalFlow, scope: Union[str, ParabolicSubgroup] = "cusp") -> LPSolution:
    """min over sum-zero phi of max over the scoped rows of h - phi(pi)."""
    d = flow.d
    if scope == "cusp":
        Ps = _cusp_parabolics(d)
    elif isinstance(scope, ParabolicSubgroup):
        if scope.d != d:
            raise WeylError("dimension mismatch")
        Ps = [scope]
    else:
        raise BoundError(f"unknown scope {scope!r}")
    table = rows(flow, None, Ps)
    # rows with equal projection: only the largest entropy matters
    best = {}
    for r in table:
        if r.projection not in best or r.entropy > best[r.projection]:
            best[r.projection] = r.entropy
    vs = sorted(best)
    hs = [best[v] for v in vs]
    # Dual of  min t  s.t.  t + <c, v_j> >= h_j,  sum c = 0:
    #   max sum y_j h_j  s.t.  sum y_j = 1,  sum_j y_j v_j + s 1 = 0,  y >= 0.
    # Written as a minimisation over (y, s+, s-); the multipliers u of its
    # equality rows give t = -u_0 and c = -u_1..d.
    n = len(vs)
    A = [[Fraction(1)] * n + [Fraction(0), Fraction(0)]]
    for i in range(d):
        A.append([v[i] for v in vs] + [Fraction(1), Fraction(-1)])
    b = [Fraction(1)] + [Fraction(0)] * d
    res = simplex.solve_standard([-h for h in hs] + [Fraction(0), Fraction(0)], A, b)
    if res.status != "optimal":
        raise BoundError(f"linear program is {res.status}")
    u = res.duals
    res.x = [-x for x in u[1:]] + [-u[0]]
    res.value = -u[0]
    phi = LinearFunctional(d, tuple(res.x[:d]))
    value = max(r.entropy - phi(r.projection) for r in table)
    if value != res.value:
        raise BoundError(f"dual recovery failed: {value} != {res.value}")
    return LPSolution(phi, value, res.status, res.pivots)


def h_G(flow: DiagonalFlow) -> Fraction:
    a = flow.alpha
    return sum((abs(a[i] - a[j]) for i in range(flow.d) for j in range(i + 1, flow.d)), Fraction(0))


def closed_form_hinf(flow: DiagonalFlow) -> Fraction:
    return h_G(flow) - sum((x for x in flow.alpha if x > 0), Fraction(0))


def m_k(flow: DiagonalFlow, k: int) -> int:
    d = flow.d
    if k < 1 or k > d - 1:
        raise BoundError(f"k={k} out of range 1..{d - 1}")
    if k > d // 2:
        k = d - k
    a = (None,) + tuple(sorted(flow.alpha, reverse=True))  # 1-based
    for m in range(1, d + 1):
        hi = m + 2 * (k - 1) + 1
        if hi > d:
            break
        s0 = sum(a[m + 2 * (i - 1)] for i in range(1, k + 1))
        s1 = sum(a[m + 2 * (i - 1) + 1] for i in range(1, k + 1))
        if s0 >= 0 >= s1:
            return m
    raise BoundError(f"no admissible m for k={k} and alpha={flow.alpha}")


def closed_form_hinf_Pk(flow: DiagonalFlow, k: int) -> Fraction:
    d = flow.d
    if k < 1 or k > d - 1:
        raise BoundError(f"k={k} out of range 1..{d - 1}")
    if k > d // 2:
        k = d - k
    m = m_k(flow, k)
    a = (None,) + tuple(sorted(flow.alpha, reverse=True))
    val = h_G(flow) - k * sum(a[1:m + 1], Fraction(0))
    for i in range(1, k):
        val -= (k - i) * (a[m + 2 * i - 1] + a[m + 2 * i])
    return val


@dataclass(frozen=True)
class BBound:
    value: Fraction
    sharp: bool


def closed_form_B_bound(flow: DiagonalFlow) -> BBound:
    counts = Counter(flow.alpha)
    sharp = all(c == 1 for c in counts.values()) or len(counts) == 2
    return BBound(h_G(flow) / 2, sharp)


def assemble_partition_labels(flow: DiagonalFlow, phi: LinearFunctional, delta_params=None) -> dict:
    """Map (P jumps, Q jumps, rep of [w]_Q) to the jump set of the chosen H."""
    if phi.d != flow.d:
        raise WeylError("dimension mismatch")
    Ps = enumerate_parabolics(flow.d)
    out = {}
    for Q in Ps:
        for w in weyl_double_cosets(flow, Q):
            for P in Ps:
                if not P.contains(Q):
                    continue
                cands = [H for H in Ps if P.contains(H) and H.contains(Q)]
                best, best_val = None, None
                for H in sorted(cands, key=lambda H: H.jumps):
                    v = h_phi(flow, H, orientation(flow, H, w.rep), phi)
                    if best_val is None or v > best_val:
                        best, best_val = H, v
                out[(P.jumps, Q.jumps, w.rep)] = best.jumps
    return out


@dataclass
class BoundReport:
    flow: DiagonalFlow
    phi: LinearFunctional
    rows: list
    hb_cusp: Fraction
    hb_P: dict
    lp: Optional[LPSolution] = None
    options: dict = field(default_factory=dict)


def bound_report(flow: DiagonalFlow, phi: Optional[LinearFunctional] = None,
                 parabolics: Optional[Sequence[ParabolicSubgroup]] = None,
                 optimize: Union[None, str, ParabolicSubgroup] = None) -> BoundReport:
    lp = None
    if optimize is not None:
        lp = optimize_phi(flow, optimize)
        phi = lp.phi
    if phi is None:
        phi = LinearFunctional.zero(flow.d)
    table = rows(flow, phi)
    cusp = [r.value for r in table if not r.parabolic.is_G]
    Ps = parabolics if parabolics is not None else enumerate_parabolics(flow.d)
    hb_P = {P.jumps: max(r.value for r in table if r.parabolic == P) for P in Ps}
    return BoundReport(flow, phi, table, max(cusp), hb_P, lp,
                       {"optimize": optimize if isinstance(optimize, (str, type(None))) else list(optimize.jumps)})
