import json
import math
import random
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from conftest import lattices
from cusplab.coding import (
    CodingError,
    Trajectory,
    chi_aggregate_check,
    chi_aggregate_sides,
    empirical_bound,
    entropy_chi,
    err,
    err_at,
    height,
    occupancy,
    run,
    schedule,
    threshold_intervals,
    time_series,
    verify_budgets,
)
from cusplab.intlin import matmul
from cusplab.lattice import Lattice, ToleranceConfig, cusp_witness
from cusplab.weyl import (
    DiagonalFlow,
    LinearFunctional,
    ParabolicSubgroup,
    enumerate_parabolics,
    orientation,
    weyl_double_cosets,
)

CONST = json.loads((Path(__file__).parent / "fixtures" / "constants.json").read_text())
HALF = Fraction(1, 2)
Z2_FLOW = DiagonalFlow(2, (HALF, -HALF))
Z2_CFG = ToleranceConfig(delta=math.exp(-16), delta_prime=math.exp(-7), r=0.9)
FLOW3 = DiagonalFlow.from_values([1, 0, -1])


def _cfg(delta, d):
    dp, r = schedule(delta, d)
    return ToleranceConfig(delta=delta, delta_prime=dp, r=r)


@pytest.fixture(scope="module")
def z2():
    return run(Lattice.standard(2), Z2_FLOW, Z2_CFG, 100)


@pytest.fixture(scope="module")
def d3():
    x = Lattice(3, [[1, Fraction(1, 3), Fraction(2, 7)], [0, 1, Fraction(5, 11)], [0, 0, 1]])
    return run(x, FLOW3, _cfg(math.exp(-16), 3), 60)


@pytest.fixture(scope="module")
def swing():
    # short vector sweeps through all three eigendirections inside one cusp interval
    W = cusp_witness(ParabolicSubgroup(3, (1,)), 10 ** 8)
    x = Lattice(3, matmul([[1, 0, 0], [1, 1, 0], [1, 0, 1]], [list(r) for r in W.basis]))
    return run(x, FLOW3, _cfg(math.exp(-16), 3), 160)


def _runs(*names):
    return pytest.mark.parametrize("name", names)


# ---------------------------------------------------------------- height and err

def test_height_standard():
    assert height(Lattice.standard(3)) == [0.0, 0.0, 0.0]
    for P in enumerate_parabolics(3):
        assert err_at(Lattice.standard(3), P) == 0.0


def test_height_diagonal():
    x = Lattice.diagonal([Fraction(1, 4), 1, 4])
    h = height(x)
    assert h == pytest.approx([math.log(4), 0.0, -math.log(4)], abs=1e-14)


def test_err_borel_zero():
    h = height(Lattice(3, [[Fraction(1, 3), 1, 0], [0, 1, Fraction(1, 2)], [0, 0, 3]]))
    assert err(h, ParabolicSubgroup.B(3)) == 0.0
    mean = sum(h) / 3
    assert err(h, ParabolicSubgroup.G(3)) == pytest.approx(math.sqrt(sum((v - mean) ** 2 for v in h)))


# ---------------------------------------------------------------- thresholds

def test_z2_threshold_intervals(z2):
    th = z2.partition.thresholds
    for m in range(3):
        ivs = th.T[(m, 1)]
        assert [(iv.start, iv.end) for iv in ivs] == [(-100.0, -7.0), (7.0, 100.0)]
        assert ivs[0].clipped_start and not ivs[0].clipped_end
        assert ivs[1].clipped_end and not ivs[1].clipped_start


def test_never_below_delta():
    x = Lattice.standard(2)
    slow = DiagonalFlow(2, (Fraction(1, 10), Fraction(-1, 10)))
    th = threshold_intervals(x, slow, Z2_CFG, 20)
    assert all(ivs == [] for ivs in th.T.values())


def test_threshold_requires_long_window():
    with pytest.raises(CodingError):
        threshold_intervals(Lattice.standard(2), Z2_FLOW, Z2_CFG, 10)


@_runs("z2", "d3", "swing")
def test_unclipped_length(name, request):
    r = request.getfixturevalue(name)
    th = r.partition.thresholds
    floor = CONST["kappa"] * math.log(th.delta_prime / th.delta)
    seen = 0
    for (m, l), ivs in th.T.items():
        for iv in ivs:
            assert iv.start < iv.end
            if not (iv.clipped_start or iv.clipped_end):
                seen += 1
                assert iv.length >= floor
    for l, ivs in th.excursions.items():
        for a, b in zip(ivs, ivs[1:]):
            assert a.end <= b.start


# ---------------------------------------------------------------- partition

def test_z2_partition(z2):
    J = z2.partition.J
    assert [(U.start, U.end, U.par.jumps, U.deg) for U in J] == [
        (-100.0, -7.0, (1,), 1), (-7.0, 7.0, (), 1), (7.0, 100.0, (1,), 1)]


def test_z2_weyl(z2):
    Jp = z2.partition.J_prime
    assert [U.weyl.rep for U in Jp] == [(1, 2), (1, 2), (2, 1)]
    # the right ray is the coset of the transposition
    assert Jp[2].weyl == orientation(Z2_FLOW, ParabolicSubgroup.B(2), (2, 1))
    assert Jp[0].weyl != Jp[2].weyl


def test_compact_trajectory():
    zero = DiagonalFlow(3, (0, 0, 0))
    r = run(Lattice.standard(3), zero, _cfg(math.exp(-16), 3), 20)
    assert [(U.start, U.end, U.par.is_G) for U in r.partition.J] == [(-20.0, 20.0, True)]
    assert set(r.coding.values.values()) == {(ParabolicSubgroup.G(3), orientation(zero, ParabolicSubgroup.G(3), (1, 2, 3)))}
    rep = verify_budgets(r)
    assert rep.ratios == {"i": 0.0, "ii": 0.0, "iii": 0.0, "iv": 0.0}
    e = empirical_bound(Lattice.standard(3), zero, r.cfg, None, 20, r.traj)
    assert e.value == 0


@_runs("z2", "d3", "swing")
def test_cover_and_refinement(name, request):
    r = request.getfixturevalue(name)
    J, Jp = r.partition.J, r.partition.J_prime
    for seq in (J, Jp):
        assert seq[0].start == -r.N and seq[-1].end == r.N
        assert all(a.end == b.start for a, b in zip(seq, seq[1:]))
        assert all(1 <= U.deg <= r.flow.d for U in seq)
    for p in Jp:
        U = J[p.parent]
        assert U.start <= p.start < p.end <= U.end and p.par == U.par
    assert r.partition.max_subintervals <= 2 * math.factorial(r.flow.d) + 1


@_runs("z2", "d3", "swing")
def test_endpoint_gaps(name, request):
    r = request.getfixturevalue(name)
    th = r.partition.thresholds
    for U in r.partition.J:
        lev = math.log(th.delta ** (th.r ** U.deg))
        for t in (U.start, U.end):
            for l in range(1, r.flow.d):
                if l not in U.par.jumps:
                    assert r.traj.log_eta(t, l) >= lev - 1e-9


@_runs("z2", "d3", "swing")
def test_pointwise_jump_sandwich(name, request):
    r = request.getfixturevalue(name)
    th = r.partition.thresholds
    ld, ldp = math.log(th.delta), math.log(th.delta_prime)
    for U in r.partition.J:
        for k in range(1, 8):
            t = U.start + U.length * k / 8
            e = [r.traj.log_eta(t, l) for l in range(1, r.flow.d)]
            small = {l for l in range(1, r.flow.d) if e[l - 1] < ld}
            mid = {l for l in range(1, r.flow.d) if e[l - 1] < ldp}
            assert small <= set(U.par.jumps) <= mid


@_runs("z2", "d3", "swing")
def test_region_brackets_code(name, request):
    r = request.getfixturevalue(name)
    for n in range(-r.N, r.N + 1):
        c = r.traj.classify(n)
        Par, w = r.coding.values[n]
        assert set(c.P.jumps) <= set(Par.jumps) <= set(c.Q.jumps)
        if c.orientation is not None and w is not None:
            assert orientation(r.flow, Par, c.orientation.rep) == w


def test_swing_orientation_changes(swing):
    counts = {}
    for p in swing.partition.J_prime:
        counts.setdefault(p.parent, []).append(p)
    multi = [ps for ps in counts.values() if len(ps) > 1]
    assert multi
    for ps in multi:
        sums = [sum(sum(E) for E in p.weyl.multiset_flag) for p in ps if p.weyl is not None]
        assert sums == sorted(sums) and len(set(sums)) == len(sums)


# ---------------------------------------------------------------- coding

def test_z2_coding(z2):
    # eta(a_n Z^2) = e^{-|n|} and the double delta' = exp(-7) lies just above e^{-7},
    # so both n = -7 and n = 7 are in the delta' region; half-open pieces put -7 in G
    runs = z2.coding.runs()
    assert runs == [
        {"start": -100, "end": -8, "P": [1], "w": [1, 2]},
        {"start": -7, "end": 6, "P": [], "w": [1, 2]},
        {"start": 7, "end": 100, "P": [1], "w": [2, 1]},
    ]
    assert set(z2.coding.values) == set(range(-100, 101))


def _reverse(x, flow):
    """w0 x under the flow -w0 alpha w0 (again a sorted flow)."""
    d = flow.d
    rows = [list(x.basis[d - 1 - i]) for i in range(d)]
    if Lattice(d, rows).det_sign != x.det_sign:
        rows[0] = [-v for v in rows[0]]
    return Lattice(d, rows), DiagonalFlow(d, tuple(-a for a in reversed(flow.alpha)))


@_runs("z2", "d3")
def test_reversal_symmetry(name, request):
    r = request.getfixturevalue(name)
    x2, f2 = _reverse(r.x, r.flow)
    r2 = run(x2, f2, r.cfg, r.N)
    d = r.flow.d
    ends = {U.start for U in r.partition.J_prime} | {U.end for U in r.partition.J_prime}
    ends |= {U.start for U in r2.partition.J_prime} | {U.end for U in r2.partition.J_prime}
    checked = 0
    for n in range(-r.N, r.N + 1):
        if n in ends or -n in ends:
            continue
        P, w = r.coding.values[-n]
        P2, w2 = r2.coding.values[n]
        assert P2 == P
        if w is None:
            assert w2 is None
        else:
            # coordinates are relabelled by the order-reversing permutation
            assert w2 == orientation(f2, P2, tuple(d + 1 - i for i in w.rep))
        checked += 1
    assert checked > r.N


def test_determinism(d3):
    again = run(d3.x, d3.flow, d3.cfg, d3.N)
    assert again.coding.runs() == d3.coding.runs()
    assert [(U.start, U.end) for U in again.partition.J_prime] == [(U.start, U.end) for U in d3.partition.J_prime]


def test_time_series(z2):
    rows = time_series(z2)
    assert len(rows) == 201
    t, l1, l2, e1, region = rows[100]
    assert (t, region) == (0, "P{}Q{}w12")
    assert l1 == pytest.approx(1.0) and e1 == pytest.approx(1.0)
    assert rows[0][3] == pytest.approx(math.exp(-100), rel=1e-12)


def test_bad_N():
    with pytest.raises(CodingError):
        run(Lattice.standard(2), Z2_FLOW, Z2_CFG, 50.5)


# ---------------------------------------------------------------- budgets

def test_z2_budgets(z2):
    rep = verify_budgets(z2)
    # 93 times (1/2,-1/2) against 94 times (-1/2,1/2); the drift of Z^2 is zero
    assert rep.raw["height_sum_norm"] == pytest.approx(math.sqrt(2) / 2, abs=1e-12)
    assert rep.raw["height_drift"] == pytest.approx(0.0, abs=1e-12)
    assert rep.ok and not rep.small_N and rep.clipped == 2
    assert rep.ratios["i"] == pytest.approx(2 * 0.9 * 16 / 100)


def test_small_N_flag():
    r = run(Lattice.standard(2), Z2_FLOW, Z2_CFG, 17)
    assert verify_budgets(r).small_N


@_runs("z2", "d3", "swing")
def test_budget_constants(name, request):
    rep = verify_budgets(request.getfixturevalue(name), {k: CONST[k] for k in ("K1", "K2", "K3", "K4")})
    assert rep.ok, rep.ratios


# ---------------------------------------------------------------- aggregate inequality

def test_chi_zero(z2):
    occ = occupancy(z2)
    assert chi_aggregate_sides(z2.coding, occ, lambda H, w: 0, Z2_FLOW) == (0, 0)


def test_chi_negative_max(z2):
    with pytest.raises(CodingError):
        chi_aggregate_check(z2.coding, occupancy(z2), lambda H, w: -1, Z2_FLOW)


def test_chi_entropy_z2(z2):
    occ = occupancy(z2)
    lhs, rhs = chi_aggregate_sides(z2.coding, occ, entropy_chi(Z2_FLOW), Z2_FLOW)
    # h(B, id) = h(G) = 1 and h(B, swap) = 0. Coded: 93 left-ray + 14 central.
    # Occupancy: 85 with |n| >= 16 on the left, 13 with |n| <= 6, and 18 with
    # 7 <= |n| <= 15 where G >= H >= B allows H = G.
    assert (lhs, rhs) == (107, 116)
    assert chi_aggregate_check(z2.coding, occ, entropy_chi(Z2_FLOW), Z2_FLOW)


def _random_chi(flow, rng):
    table = {}
    for H in enumerate_parabolics(flow.d):
        for w in weyl_double_cosets(flow, H):
            table[(H.jumps, w.rep)] = Fraction(rng.randint(-20, 20), rng.randint(1, 5))
    key = rng.choice(sorted(table))
    table[key] = abs(table[key])
    return table


@_runs("z2", "d3", "swing")
def test_chi_random(name, request):
    r = request.getfixturevalue(name)
    occ = occupancy(r)
    rng = random.Random(11)
    for _ in range(100):
        assert chi_aggregate_check(r.coding, occ, _random_chi(r.flow, rng), r.flow)
    assert chi_aggregate_check(r.coding, occ, entropy_chi(r.flow), r.flow)


# ---------------------------------------------------------------- empirical bound

def test_empirical_z2():
    cfg = ToleranceConfig(delta=math.exp(-16.5), delta_prime=math.exp(-7.5), r=0.9)
    psi = LinearFunctional(2, (HALF, -HALF))
    e = empirical_bound(Lattice.standard(2), Z2_FLOW, cfg, psi, 100)
    # |n| >= 17 lies in the delta-cusp (168 of 201 times), the rest is charged h(G) = 1
    assert e.value == Fraction(168, 201) * HALF + Fraction(33, 201)
    assert sum(e.frequencies.values()) == 1
    assert e.meta["inv_log_delta_prime"] == pytest.approx(1 / 7.5)


# ---------------------------------------------------------------- properties

@settings(max_examples=8, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(lattices(dims=(2, 3)), st.sampled_from([0, 1]))
def test_random_trajectories(x, k):
    flow = [Z2_FLOW, FLOW3][x.d - 2] if k == 0 else DiagonalFlow.from_values(
        [[1, -1], [Fraction(1, 2), Fraction(1, 2), -1]][x.d - 2])
    r = run(x, flow, _cfg(math.exp(-9), x.d), 24)
    Jp = r.partition.J_prime
    assert Jp[0].start == -24 and Jp[-1].end == 24
    assert all(a.end == b.start for a, b in zip(Jp, Jp[1:]))
    for n in range(-24, 25):
        c = r.traj.classify(n)
        Par, w = r.coding.values[n]
        assert set(c.P.jumps) <= set(Par.jumps) <= set(c.Q.jumps)
        if c.orientation is not None and w is not None:
            assert orientation(flow, Par, c.orientation.rep) == w
    assert chi_aggregate_check(r.coding, occupancy(r), entropy_chi(flow), flow)
