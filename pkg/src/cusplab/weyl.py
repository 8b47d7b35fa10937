"""Parabolic subgroups of SL_d, relative Weyl double cosets and the
entropy / projection values attached to them.

Everything here is exact: exponents are ``fractions.Fraction`` and
permutations are 1-based tuples.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Sequence


class WeylError(ValueError):
    pass


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**12)
    return Fraction(x)


@dataclass(frozen=True)
class DiagonalFlow:
    d: int
    alpha: tuple

    def __post_init__(self):
        alpha = tuple(as_fraction(a) for a in self.alpha)
        object.__setattr__(self, "alpha", alpha)
        if self.d < 2:
            raise WeylError(f"dimension must be >= 2, got {self.d}")
        if len(alpha) != self.d:
            raise WeylError(f"expected {self.d} exponents, got {len(alpha)}")
        if sum(alpha) != 0:
            raise WeylError(f"exponents must sum to zero, got {sum(alpha)}")

    @classmethod
    def from_values(cls, alpha: Sequence) -> "DiagonalFlow":
        return cls(len(alpha), tuple(alpha))

    def scaled(self, c) -> "DiagonalFlow":
        c = as_fraction(c)
        return DiagonalFlow(self.d, tuple(c * a for a in self.alpha))

    def permuted(self, perm: Sequence[int]) -> "DiagonalFlow":
        return DiagonalFlow(self.d, tuple(self.alpha[p - 1] for p in perm))


@dataclass(frozen=True)
class ParabolicSubgroup:
    d: int
    jumps: tuple

    def __post_init__(self):
        jumps = tuple(sorted(set(int(j) for j in self.jumps)))
        object.__setattr__(self, "jumps", jumps)
        if self.d < 2:
            raise WeylError(f"dimension must be >= 2, got {self.d}")
        if any(j < 1 or j > self.d - 1 for j in jumps):
            raise WeylError(f"jumps {jumps} not inside 1..{self.d - 1}")

    @classmethod
    def G(cls, d: int) -> "ParabolicSubgroup":
        return cls(d, ())

    @classmethod
    def B(cls, d: int) -> "ParabolicSubgroup":
        return cls(d, tuple(range(1, d)))

    @property
    def is_G(self) -> bool:
        return not self.jumps

    @property
    def is_B(self) -> bool:
        return len(self.jumps) == self.d - 1

    @property
    def bounds(self) -> tuple:
        """Block boundaries (0, j_1, ..., j_k, d)."""
        return (0,) + self.jumps + (self.d,)

    @property
    def block_sizes(self) -> tuple:
        b = self.bounds
        return tuple(b[i + 1] - b[i] for i in range(len(b) - 1))

    def block_of(self) -> tuple:
        """0-based block index of every (0-based) coordinate."""
        out = []
        for k, size in enumerate(self.block_sizes):
            out.extend([k] * size)
        return tuple(out)

    def contains(self, other: "ParabolicSubgroup") -> bool:
        """True iff ``other`` is a subgroup of ``self`` (fewer jumps = bigger group)."""
        return set(self.jumps) <= set(other.jumps)

    def label(self) -> str:
        if self.is_G:
            return "G"
        if self.is_B:
            return "B"
        return "P{" + ",".join(str(j) for j in self.jumps) + "}"


def _flag_of(alpha: Sequence[Fraction], rep: Sequence[int], jumps: Iterable[int]) -> tuple:
    vals = [alpha[r - 1] for r in rep]
    return tuple(tuple(sorted(vals[:l])) for l in jumps)


@dataclass(frozen=True)
class Orientation:
    parabolic: ParabolicSubgroup
    rep: tuple
    multiset_flag: tuple = field(default=(), compare=False)

    def key(self) -> tuple:
        return (self.parabolic.jumps, self.rep)


def _validate_perm(rep: Sequence[int], d: int) -> tuple:
    rep = tuple(int(r) for r in rep)
    if sorted(rep) != list(range(1, d + 1)):
        raise WeylError(f"{rep} is not a permutation of 1..{d}")
    return rep


def canonical_rep(flow: DiagonalFlow, P: ParabolicSubgroup, perm: Sequence[int]) -> tuple:
    """Lexicographically smallest permutation with the same block multisets as ``perm``."""
    if flow.d != P.d:
        raise WeylError("dimension mismatch")
    perm = _validate_perm(perm, flow.d)
    a = flow.alpha
    b = P.bounds
    used = [False] * (flow.d + 1)
    out = []
    for k in range(len(b) - 1):
        need = Counter(a[p - 1] for p in perm[b[k]:b[k + 1]])
        for j in range(1, flow.d + 1):
            if not used[j] and need[a[j - 1]] > 0:
                need[a[j - 1]] -= 1
                used[j] = True
                out.append(j)
    return tuple(out)


def orientation(flow: DiagonalFlow, P: ParabolicSubgroup, perm: Sequence[int]) -> Orientation:
    """The double coset [perm]_P, in canonical form."""
    rep = canonical_rep(flow, P, perm)
    return Orientation(P, rep, _flag_of(flow.alpha, rep, P.jumps))


def enumerate_parabolics(d: int) -> list:
    if d < 2:
        raise WeylError(f"invalid dimension {d}")
    out = []
    for r in range(d):
        for c in combinations(range(1, d), r):
            out.append(ParabolicSubgroup(d, c))
    out.sort(key=lambda p: p.jumps)
    return out


def weyl_double_cosets(flow: DiagonalFlow, P: ParabolicSubgroup) -> list:
    """One canonical orientation per element of Stab_W(a)\\W/W(T,P)."""
    if flow.d != P.d:
        raise WeylError("dimension mismatch")
    # choose a sub-multiset for each block in turn
    values = sorted(set(flow.alpha))
    counts = Counter(flow.alpha)
    sizes = P.block_sizes
    out = []

    def blocks(remaining: Counter, k: int, acc: list):
        if k == len(sizes):
            out.append(list(acc))
            return
        for pick in _submultisets(values, remaining, sizes[k]):
            rest = remaining.copy()
            rest.subtract(pick)
            acc.append(pick)
            blocks(rest, k + 1, acc)
            acc.pop()

    blocks(counts, 0, [])
    result = []
    for choice in out:
        perm = []
        taken = set()
        for pick in choice:
            need = Counter(pick)
            for j in range(1, flow.d + 1):
                if j not in taken and need[flow.alpha[j - 1]] > 0:
                    need[flow.alpha[j - 1]] -= 1
                    taken.add(j)
                    perm.append(j)
        result.append(orientation(flow, P, perm))
    result.sort(key=lambda o: o.rep)
    return result


def _submultisets(values: list, remaining: Counter, size: int):
    def rec(i: int, size: int, acc: Counter):
        if size == 0:
            yield acc.copy()
            return
        if i == len(values):
            return
        v = values[i]
        for m in range(min(remaining[v], size), -1, -1):
            if m:
                acc[v] = m
            elif v in acc:
                del acc[v]
            yield from rec(i + 1, size - m, acc)
        acc.pop(v, None)

    yield from rec(0, size, Counter())


def _check(flow: DiagonalFlow, P: ParabolicSubgroup, w: Orientation) -> tuple:
    if flow.d != P.d:
        raise WeylError("dimension mismatch")
    if w.parabolic != P:
        raise WeylError("orientation belongs to a different parabolic")
    return _validate_perm(w.rep, flow.d)


def entropy(flow: DiagonalFlow, P: ParabolicSubgroup, w: Orientation) -> Fraction:
    """h(P, a^w): positive parts of the a^w root exponents over the support of P."""
    rep = _check(flow, P, w)
    return entropy_of_perm(flow, P, rep)


def entropy_of_perm(flow: DiagonalFlow, P: ParabolicSubgroup, rep: Sequence[int]) -> Fraction:
    vals = [flow.alpha[r - 1] for r in rep]
    blk = P.block_of()
    total = Fraction(0)
    # P has entries at (i, j) whenever block(i) <= block(j)
    for i in range(flow.d):
        for j in range(flow.d):
            if i != j and blk[i] <= blk[j] and vals[i] > vals[j]:
                total += vals[i] - vals[j]
    return total


def project(flow: DiagonalFlow, P: ParabolicSubgroup, w: Orientation) -> tuple:
    """pi_P(alpha^w): block averages of the permuted exponents."""
    rep = _check(flow, P, w)
    return project_vector(P, [flow.alpha[r - 1] for r in rep])


def project_vector(P: ParabolicSubgroup, v: Sequence) -> tuple:
    b = P.bounds
    out = []
    for k in range(len(b) - 1):
        block = v[b[k]:b[k + 1]]
        avg = sum(block, type(block[0])(0)) / len(block)
        out.extend([avg] * len(block))
    return tuple(out)


def multiset_le(E1: Sequence, E2: Sequence) -> bool:
    if len(E1) != len(E2):
        raise WeylError("multisets of unequal cardinality")
    return sum(E1, Fraction(0)) <= sum(E2, Fraction(0))


@dataclass(frozen=True)
class LinearFunctional:
    d: int
    coeffs: tuple

    def __post_init__(self):
        c = tuple(as_fraction(x) for x in self.coeffs)
        if len(c) != self.d:
            raise WeylError(f"expected {self.d} coefficients, got {len(c)}")
        shift = sum(c) / self.d
        object.__setattr__(self, "coeffs", tuple(x - shift for x in c))

    @classmethod
    def zero(cls, d: int) -> "LinearFunctional":
        return cls(d, (0,) * d)

    def __call__(self, H: Sequence) -> Fraction:
        return sum((c * h for c, h in zip(self.coeffs, H)), Fraction(0))

    def norm(self) -> float:
        return float(sum(c * c for c in self.coeffs)) ** 0.5


def h_phi(flow: DiagonalFlow, P: ParabolicSubgroup, w: Orientation, phi: LinearFunctional) -> Fraction:
    if phi.d != flow.d:
        raise WeylError("dimension mismatch")
    return entropy(flow, P, w) - phi(project(flow, P, w))
