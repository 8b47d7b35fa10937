"""Multi-scale coding of a trajectory {a_t x : |t| <= N}.

The pipeline is

    threshold_intervals -> build_partition -> refine_orientations -> coding

followed by the budget report and the aggregate inequality checks.  All
interval endpoints are floats located to ``cfg.root_tol``; sublevel sets of
log eta_l are certified with the Lipschitz bound 2 max|alpha_i|.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Union

import mpmath

from .bounds import global_max
from .lattice import (
    GeometryError,
    Lattice,
    LatticeSnapshot,
    ToleranceConfig,
    classify,
    grassmann_intervals,
    orientation_from_flag,
    successive_minima_data,
    unique_small_subspace,
)
from .weyl import (
    DiagonalFlow,
    LinearFunctional,
    Orientation,
    ParabolicSubgroup,
    enumerate_parabolics,
    entropy,
    h_phi,
    orientation,
    project,
    project_vector,
)

SNAP = 1e-8  # endpoints this close to an integer are snapped onto it


class CodingError(ValueError):
    pass


# ---------------------------------------------------------------- sampling

class Trajectory:
    """Cached evaluation of minima along t -> a_t x."""

    def __init__(self, x: Lattice, flow: DiagonalFlow, cfg: ToleranceConfig):
        if x.d != flow.d:
            raise CodingError("dimension mismatch")
        self.x, self.flow, self.cfg = x, flow, cfg
        self._minima = {}
        self._cls = {}
        a = [float(v) for v in flow.alpha]
        self.lipschitz = 2 * max(abs(v) for v in a)

    def snapshot(self, t: float) -> LatticeSnapshot:
        return LatticeSnapshot(self.x, self.flow, float(t), self.cfg.precision)

    def minima(self, t: float):
        t = float(t)
        if t not in self._minima:
            self._minima[t] = successive_minima_data(self.snapshot(t), max_nodes=self.cfg.max_nodes)
        return self._minima[t]

    def log_lams(self, t: float) -> list:
        with mpmath.workprec(self.cfg.precision):
            return [float(mpmath.log(v)) for v in self.minima(t).lams]

    def log_eta(self, t: float, l: int) -> float:
        ll = self.log_lams(t)
        return ll[l - 1] - ll[l]

    def height(self, t: float) -> list:
        return [-v for v in self.log_lams(t)]

    def classify(self, t: float):
        t = float(t)
        if t not in self._cls:
            self._cls[t] = classify(self.snapshot(t), self.flow, self.cfg, self.minima(t))
        return self._cls[t]


def height(x, flow: Optional[DiagonalFlow] = None, t: float = 0.0) -> list:
    """(-log lambda_1, ..., -log lambda_d) of a_t x."""
    from .lattice import snapshot
    m = successive_minima_data(snapshot(x, flow, t))
    with mpmath.workprec(m.precision):
        return [-float(mpmath.log(v)) for v in m.lams]


def err(h: list, P: ParabolicSubgroup) -> float:
    """Distance from a height vector to its block average."""
    avg = project_vector(P, [float(v) for v in h])
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(h, avg)))


def err_at(x, P: ParabolicSubgroup, flow: Optional[DiagonalFlow] = None, t: float = 0.0) -> float:
    return err(height(x, flow, t), P)


# ---------------------------------------------------------------- sublevel sets

def _sublevel(f: Callable[[float], float], theta: float, lo: float, hi: float, step: float, L: float,
              tol: float) -> list:
    """Maximal intervals of {t in [lo, hi] : f(t) < theta} for an L-Lipschitz f.

    Segments are split until either the Lipschitz bound decides them or they
    are shorter than ``tol``; crossings are then placed at the midpoint.
    """
    n = max(1, int(math.ceil((hi - lo) / step)))
    grid = [lo + (hi - lo) * k / n for k in range(n + 1)]
    vals = [f(t) for t in grid]
    marks = []  # (t, below-after-t)

    def seg(a, fa, b, fb):
        below_a, below_b = fa < theta, fb < theta
        if below_a == below_b:
            if below_a and (fa + fb) / 2 + L * (b - a) / 2 < theta:
                return
            if not below_a and (fa + fb) / 2 - L * (b - a) / 2 >= theta:
                return
        if b - a < tol:
            if below_a != below_b:
                marks.append(((a + b) / 2, below_b))
            return
        m = (a + b) / 2
        fm = f(m)
        seg(a, fa, m, fm)
        seg(m, fm, b, fb)

    for k in range(n):
        seg(grid[k], vals[k], grid[k + 1], vals[k + 1])
    out = []
    start = lo if vals[0] < theta else None
    for t, below in marks:
        if below and start is None:
            start = t
        elif not below and start is not None:
            out.append((start, t))
            start = None
    if start is not None:
        out.append((start, hi))
    return out


def _snap(t: float) -> float:
    r = round(t)
    return float(r) if abs(t - r) < SNAP else t


@dataclass(frozen=True)
class Interval:
    start: float
    end: float
    clipped_start: bool = False
    clipped_end: bool = False

    @property
    def length(self) -> float:
        return self.end - self.start

    def contains(self, t: float) -> bool:
        return self.start < t < self.end


@dataclass
class ThresholdIntervals:
    """T_{level,l} for the levels delta^(r^m), m = 0..d."""
    N: float
    delta: float
    delta_prime: float
    r: float
    levels: list  # level values, index m
    T: dict  # (m, l) -> [Interval]
    excursions: dict  # l -> [Interval], components of {eta_l < delta'}

    def E(self, m: int, t: float) -> frozenset:
        return frozenset(l for (mm, l), ivs in self.T.items() if mm == m and any(iv.contains(t) for iv in ivs))

    def breakpoints(self, m: int) -> list:
        pts = {-self.N, self.N}
        for (mm, l), ivs in self.T.items():
            if mm == m:
                for iv in ivs:
                    pts.add(iv.start)
                    pts.add(iv.end)
        return sorted(pts)

    def F(self, m: int) -> list:
        """Maximal intervals on which E_{level m} is constant: [(start, end, E)]."""
        pts = self.breakpoints(m)
        out = []
        for a, b in zip(pts, pts[1:]):
            if b > a:
                E = self.E(m, (a + b) / 2)
                if out and out[-1][2] == E:
                    out[-1] = (out[-1][0], b, E)
                else:
                    out.append((a, b, E))
        return out


def resolve_params(cfg: ToleranceConfig, d: int) -> tuple:
    """(delta, delta', r), with r defaulted to the sweep schedule when absent."""
    if cfg.delta is None or cfg.delta_prime is None:
        raise CodingError("delta and delta_prime are required")
    dl, dp = cfg.delta, cfg.delta_prime
    r = cfg.r if cfg.r is not None else default_r(dl, dp, d)
    cfg.with_(r=r).check_thresholds(d)
    return dl, dp, r


def default_r(delta: float, delta_prime: float, d: int) -> float:
    return (abs(math.log(delta_prime)) / abs(math.log(delta))) ** (1.0 / (d + 2))


def schedule(delta: float, d: int) -> tuple:
    """delta' = exp(-|log delta|^(1/2)) and r = (|log delta'| / |log delta|)^(1/(d+2))."""
    L = abs(math.log(delta))
    dp = math.exp(-math.sqrt(L))
    return dp, default_r(delta, dp, d)


def threshold_intervals(x, flow: DiagonalFlow, cfg: ToleranceConfig, N: float,
                        traj: Optional[Trajectory] = None, step: float = 0.5) -> ThresholdIntervals:
    d = flow.d
    dl, dp, r = resolve_params(cfg, d)
    if not abs(math.log(dl)) < N:
        raise CodingError(f"need |log delta| < N, got {abs(math.log(dl))} >= {N}")
    traj = traj or Trajectory(x, flow, cfg)
    levels = [dl ** (r ** m) for m in range(d + 1)]
    L, tol = traj.lipschitz, cfg.root_tol
    T, exc = {}, {}
    for l in range(1, d):
        f = (lambda t, l=l: traj.log_eta(t, l))
        comps = _sublevel(f, math.log(dp), -N, N, step, L, tol)
        ivs = [Interval(_snap(a), _snap(b), a == -N, b == N) for a, b in comps]
        exc[l] = ivs
        for m, lev in enumerate(levels):
            deep = _sublevel(f, math.log(lev), -N, N, step, L, tol)
            T[(m, l)] = [iv for iv in ivs if any(iv.start <= (a + b) / 2 <= iv.end for a, b in deep)]
    return ThresholdIntervals(float(N), dl, dp, r, levels, T, exc)


# ---------------------------------------------------------------- partition

@dataclass
class Piece:
    start: float
    end: float
    deg: int
    par: ParabolicSubgroup
    weyl: Optional[Orientation] = None
    parent: Optional[int] = None  # index into J for pieces of J'

    @property
    def length(self) -> float:
        return self.end - self.start


@dataclass
class CodedPartition:
    J: list
    J_prime: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    thresholds: Optional[ThresholdIntervals] = None
    flags: dict = field(default_factory=dict)  # J index -> {l: RationalSubspace}
    max_subintervals: int = 0


def build_partition(x, flow: DiagonalFlow, cfg: ToleranceConfig, N: float,
                    thresholds: Optional[ThresholdIntervals] = None,
                    traj: Optional[Trajectory] = None) -> CodedPartition:
    d = flow.d
    th = thresholds or threshold_intervals(x, flow, cfg, N, traj)
    F = [th.F(m) for m in range(d + 1)]
    temp = list(F[0])
    final = []
    for m in range(d):
        nxt = F[m + 1]
        for s, e, E in temp:
            inside = [p for p in nxt if s <= p[0] and p[1] <= e]
            same = [p for p in inside if p[2] == E]
            if same:
                final.append(Piece(same[0][0], same[-1][1], m + 1, ParabolicSubgroup(d, tuple(sorted(E)))))
        final.sort(key=lambda p: p.start)
        temp = [p for p in nxt if not any(f.start <= p[0] and p[1] <= f.end for f in final)]
    if temp:
        raise CodingError("induction did not terminate")
    final.sort(key=lambda p: p.start)
    _check_cover(final, th.N)
    return CodedPartition(final, params={"delta": th.delta, "delta_prime": th.delta_prime, "r": th.r, "N": th.N},
                          thresholds=th)


def _check_cover(pieces: list, N: float) -> None:
    if not pieces or pieces[0].start != -N or pieces[-1].end != N:
        raise CodingError("partition does not cover [-N, N]")
    for a, b in zip(pieces, pieces[1:]):
        if a.end != b.start:
            raise CodingError(f"gap or overlap at {a.end} / {b.start}")


def _flag_at(traj: Trajectory, t: float, P: ParabolicSubgroup) -> Optional[dict]:
    snap = traj.snapshot(t)
    m = traj.minima(t)
    try:
        return {l: unique_small_subspace(snap, l, traj.cfg, m) for l in P.jumps}
    except GeometryError:
        return None


def _flag_key(flag: Optional[dict]):
    return None if flag is None else tuple(sorted((l, V.key()) for l, V in flag.items()))


def _constant_flag_pieces(traj: Trajectory, U: Piece, step: float) -> list:
    """Split U where the small-subspace flag changes: [(start, end, flag)]."""
    n = max(2, int(math.ceil(U.length / step)))
    ts = [U.start + U.length * (k + 0.5) / n for k in range(n)]
    flags = [_flag_at(traj, t, U.par) for t in ts]
    out = []
    cur_start, cur_flag, cur_t = U.start, flags[0], ts[0]
    for t, fl in zip(ts[1:], flags[1:]):
        if _flag_key(fl) != _flag_key(cur_flag):
            a, b = cur_t, t
            ka = _flag_key(cur_flag)
            while b - a > traj.cfg.root_tol:
                mid = (a + b) / 2
                if _flag_key(_flag_at(traj, mid, U.par)) == ka:
                    a = mid
                else:
                    b = mid
            cut = _snap((a + b) / 2)
            out.append((cur_start, cut, cur_flag))
            cur_start, cur_flag = cut, fl
        cur_t = t
    out.append((cur_start, U.end, cur_flag))
    return out


def refine_orientations(part: CodedPartition, x, flow: DiagonalFlow, cfg: ToleranceConfig,
                        traj: Optional[Trajectory] = None, step: float = 2.0) -> CodedPartition:
    traj = traj or Trajectory(x, flow, cfg)
    d = flow.d
    out = []
    worst = 0
    for j, U in enumerate(part.J):
        subs = []
        if U.par.is_G:
            subs.append(Piece(U.start, U.end, U.deg, U.par, orientation(flow, U.par, range(1, d + 1)), j))
        else:
            for s, e, flag in _constant_flag_pieces(traj, U, step):
                if flag is None:
                    subs.append(Piece(s, e, U.deg, U.par, None, j))
                    continue
                part.flags.setdefault(j, flag)
                subs.extend(_orient_pieces(flag, flow, cfg, U, s, e, j))
        merged = []
        for p in subs:
            if merged and merged[-1].weyl == p.weyl:
                merged[-1] = Piece(merged[-1].start, p.end, p.deg, p.par, p.weyl, j)
            else:
                merged.append(p)
        worst = max(worst, len(merged))
        out.extend(merged)
    _check_cover(out, part.params["N"])
    part.J_prime = out
    part.max_subintervals = worst
    return part


def _orient_pieces(flag: dict, flow: DiagonalFlow, cfg: ToleranceConfig, U: Piece, s: float, e: float, j: int) -> list:
    per_l = {}
    cuts = {s, e}
    for l, V in flag.items():
        ivs, _ = grassmann_intervals(V, flow, cfg, (s, e))
        ivs = [type(iv)(iv.multiset, _snap(iv.start), _snap(iv.end)) for iv in ivs]
        per_l[l] = ivs
        for iv in ivs:
            cuts.add(iv.start)
            cuts.add(iv.end)
    pts = sorted(c for c in cuts if s <= c <= e)
    out = []
    for a, b in zip(pts, pts[1:]):
        if b <= a:
            continue
        mid = (a + b) / 2
        Es = {}
        for l, ivs in per_l.items():
            hit = next((iv for iv in ivs if iv.start <= mid <= iv.end), None)
            if hit is None:
                break
            Es[l] = hit.multiset
        w = orientation_from_flag(flow, U.par, Es) if len(Es) == len(per_l) else None
        out.append(Piece(a, b, U.deg, U.par, w, j))
    return out


# ---------------------------------------------------------------- coding

@dataclass
class Coding:
    N: int
    values: dict  # n -> (ParabolicSubgroup, Orientation | None)

    def runs(self) -> list:
        out = []
        for n in range(-self.N, self.N + 1):
            P, w = self.values[n]
            key = (P.jumps, w.rep if w is not None else None)
            if out and out[-1][2] == key:
                out[-1][1] = n
            else:
                out.append([n, n, key])
        return [{"start": a, "end": b, "P": list(k[0]), "w": list(k[1]) if k[1] is not None else None}
                for a, b, k in out]

    def counts(self) -> Counter:
        return Counter((P.jumps, w.rep if w is not None else None) for P, w in self.values.values())


def _consistent(U: Piece, c, flow: DiagonalFlow) -> bool:
    if not set(c.P.jumps) <= set(U.par.jumps) <= set(c.Q.jumps):
        return False
    if c.orientation is not None and U.weyl is not None:
        return orientation(flow, U.par, c.orientation.rep) == U.weyl
    return True


def coding_from_partition(part: CodedPartition, N: int, traj: Optional[Trajectory] = None) -> Coding:
    """Half-open membership n in [inf U, sup U), last piece closed.

    An integer lying exactly on a shared endpoint is a threshold tie; given a
    trajectory it goes to the left piece when only that one agrees with the
    region of a_n x.
    """
    values = {}
    J = part.J_prime
    k = 0
    for n in range(-N, N + 1):
        while k < len(J) - 1 and not n < J[k].end:
            k += 1
        U = J[k]
        if traj is not None and k > 0 and U.start == n:
            c = traj.classify(n)
            if not _consistent(U, c, traj.flow) and _consistent(J[k - 1], c, traj.flow):
                U = J[k - 1]
        values[n] = (U.par, U.weyl)
    return Coding(N, values)


@dataclass
class Run:
    """Everything one coding run produces."""
    x: Lattice
    flow: DiagonalFlow
    cfg: ToleranceConfig
    N: int
    partition: CodedPartition
    coding: Coding
    traj: Trajectory


def run(x, flow: DiagonalFlow, cfg: ToleranceConfig, N: int, step: float = 0.5) -> Run:
    if int(N) != N or N < 1:
        raise CodingError("N must be a positive integer")
    N = int(N)
    traj = Trajectory(x, flow, cfg)
    th = threshold_intervals(x, flow, cfg, N, traj, step)
    part = build_partition(x, flow, cfg, N, th, traj)
    refine_orientations(part, x, flow, cfg, traj)
    return Run(x, flow, cfg, N, part, coding_from_partition(part, N, traj), traj)


def coding(x, flow: DiagonalFlow, cfg: ToleranceConfig, N: int) -> Coding:
    return run(x, flow, cfg, N).coding


# ---------------------------------------------------------------- budgets

DEFAULT_CONSTANTS = {"K1": 1.0, "K2": 1.0, "K3": 1.0, "K4": 1.0}


@dataclass
class BudgetReport:
    ratios: dict  # "i".."iv" -> float
    raw: dict
    passed: dict
    small_N: bool
    clipped: int

    @property
    def ok(self) -> bool:
        return all(self.passed.values())


def verify_budgets(r: Run, constants: Optional[dict] = None) -> BudgetReport:
    constants = dict(DEFAULT_CONSTANTS, **(constants or {}))
    part, code, traj, flow = r.partition, r.coding, r.traj, r.flow
    d, N = flow.d, r.N
    dl, rr = part.params["delta"], part.params["r"]
    Ld = abs(math.log(dl))
    scale = rr ** (d - 1) * Ld / N
    # compact pieces carry no cusp budget, so only Par != G pieces are counted
    i = sum(1 for U in part.J_prime if not U.par.is_G) * scale
    err_sum = 0.0
    for U in part.J:
        err_sum += err(traj.height(U.start), U.par) + err(traj.height(U.end), U.par)
    ii = err_sum / (rr * N)
    total = [Fraction(0)] * d
    unoriented = 0
    for (jumps, rep), n in code.counts().items():
        if rep is None:
            unoriented += n
            continue
        P = ParabolicSubgroup(d, jumps)
        v = project(flow, P, orientation(flow, P, rep))
        total = [a + n * b for a, b in zip(total, v)]
    lhs = math.sqrt(sum(float(v) ** 2 for v in total))
    drift = math.sqrt(sum((a - b) ** 2 for a, b in zip(traj.height(N), traj.height(-N))))
    iii = max(0.0, lhs - drift) / (rr * N)
    iv = unoriented * scale
    ratios = {"i": i, "ii": ii, "iii": iii, "iv": iv}
    keys = {"i": "K1", "ii": "K2", "iii": "K3", "iv": "K4"}
    passed = {k: v <= constants[keys[k]] for k, v in ratios.items()}
    clipped = sum(1 for U in part.J if U.start == -N or U.end == N)
    raw = {"J_prime": len(part.J_prime), "J": len(part.J), "err_sum": err_sum, "height_sum_norm": lhs,
           "height_drift": drift, "unoriented": unoriented, "max_subintervals": part.max_subintervals}
    return BudgetReport(ratios, raw, passed, N < 2 * Ld, clipped)


# ---------------------------------------------------------------- occupancy and aggregate checks

def occupancy(r: Run) -> Counter:
    """Counts of integer times in each region N_{delta,delta'}(P, Q, [w]_Q | None)."""
    out = Counter()
    for n in range(-r.N, r.N + 1):
        c = r.traj.classify(n)
        out[(c.P.jumps, c.Q.jumps, c.orientation.rep if c.orientation is not None else None)] += 1
    return out


def _chi_lookup(chi, flow: DiagonalFlow):
    if callable(chi):
        return chi
    return lambda H, w: chi[(H.jumps, w.rep)]


def chi_aggregate_sides(code: Coding, occ: Counter, chi, flow: DiagonalFlow) -> tuple:
    """(lhs, rhs) of the coding-vs-occupancy inequality for the function chi."""
    d = flow.d
    f = _chi_lookup(chi, flow)
    from .weyl import weyl_double_cosets
    all_vals = [f(H, w) for H in enumerate_parabolics(d) for w in weyl_double_cosets(flow, H)]
    top = max(all_vals)
    if top < 0:
        raise CodingError("chi must have a non-negative maximum")
    lhs = 0
    for (jumps, rep), n in code.counts().items():
        if rep is None:
            continue
        H = ParabolicSubgroup(d, jumps)
        lhs += n * f(H, orientation(flow, H, rep))
    rhs = 0
    Ps = enumerate_parabolics(d)
    for (pj, qj, rep), n in occ.items():
        if rep is None:
            rhs += n * top
            continue
        P, Q = ParabolicSubgroup(d, pj), ParabolicSubgroup(d, qj)
        best = max(f(H, orientation(flow, H, rep)) for H in Ps if P.contains(H) and H.contains(Q))
        rhs += n * best
    return lhs, rhs


def chi_aggregate_check(code: Coding, occ: Counter, chi, flow: DiagonalFlow) -> bool:
    lhs, rhs = chi_aggregate_sides(code, occ, chi, flow)
    return lhs <= rhs


def entropy_chi(flow: DiagonalFlow, phi: Optional[LinearFunctional] = None):
    if phi is None:
        return lambda H, w: entropy(flow, H, w)
    return lambda H, w: h_phi(flow, H, w, phi)


@dataclass
class EmpiricalBound:
    value: Fraction
    frequencies: dict  # (P jumps, Q jumps, rep | None) -> Fraction
    meta: dict


def empirical_bound(x, flow: DiagonalFlow, cfg: ToleranceConfig, phi: Optional[LinearFunctional], N: int,
                    traj: Optional[Trajectory] = None) -> EmpiricalBound:
    if phi is None:
        phi = LinearFunctional.zero(flow.d)
    traj = traj or Trajectory(x, flow, cfg)
    d = flow.d
    counts = Counter()
    for n in range(-N, N + 1):
        c = traj.classify(n)
        counts[(c.P.jumps, c.Q.jumps, c.orientation.rep if c.orientation is not None else None)] += 1
    total = 2 * N + 1
    freqs = {k: Fraction(v, total) for k, v in sorted(counts.items(), key=lambda kv: repr(kv[0]))}
    top = global_max(flow, phi)
    Ps = enumerate_parabolics(d)
    value = Fraction(0)
    for (pj, qj, rep), fr in freqs.items():
        if rep is None:
            value += fr * top
            continue
        P, Q = ParabolicSubgroup(d, pj), ParabolicSubgroup(d, qj)
        value += fr * max(h_phi(flow, H, orientation(flow, H, rep), phi)
                          for H in Ps if P.contains(H) and H.contains(Q))
    dp = cfg.delta_prime
    meta = {"error_terms": "C_a f(delta, r, phi) + C'_{a,phi} / |log delta'|",
            "inv_log_delta_prime": 1 / abs(math.log(dp)) if dp else None,
            "samples": total}
    return EmpiricalBound(value, freqs, meta)


# ---------------------------------------------------------------- reports

def time_series(r: Run) -> list:
    """Rows (t, lambda_1..d, eta_1..d-1, region) at integer times."""
    rows = []
    for n in range(-r.N, r.N + 1):
        ll = r.traj.log_lams(n)
        lams = [math.exp(v) for v in ll]
        etas = [math.exp(ll[i] - ll[i + 1]) for i in range(len(ll) - 1)]
        c = r.traj.classify(n)
        region = "P{%s}Q{%s}w%s" % (",".join(map(str, c.P.jumps)), ",".join(map(str, c.Q.jumps)),
                                    "-" if c.orientation is None else "".join(map(str, c.orientation.rep)))
        rows.append([n] + lams + etas + [region])
    return rows
