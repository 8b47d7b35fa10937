from fractions import Fraction as F
from itertools import permutations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import flows
from oracles import brute_entropy, brute_flags, brute_projection
from cusplab.weyl import (
    DiagonalFlow,
    LinearFunctional,
    ParabolicSubgroup,
    WeylError,
    canonical_rep,
    entropy,
    entropy_of_perm,
    enumerate_parabolics,
    h_phi,
    multiset_le,
    orientation,
    project,
    weyl_double_cosets,
)

HALF = F(1, 2)
D2 = DiagonalFlow(2, (HALF, -HALF))
D3 = DiagonalFlow(3, (HALF, HALF, F(-1)))


def test_enumerate_parabolics_counts():
    assert [P.jumps for P in enumerate_parabolics(2)] == [(), (1,)]
    assert [P.jumps for P in enumerate_parabolics(3)] == [(), (1,), (1, 2), (2,)]
    assert len(enumerate_parabolics(4)) == 8
    Ps = enumerate_parabolics(5)
    assert Ps[0].is_G and any(P.is_B for P in Ps)
    with pytest.raises(WeylError):
        enumerate_parabolics(1)


def test_block_sizes():
    assert ParabolicSubgroup(5, (2, 3)).block_sizes == (2, 1, 2)
    assert ParabolicSubgroup.G(4).block_sizes == (4,)
    with pytest.raises(WeylError):
        ParabolicSubgroup(3, (3,))


def test_flow_validation():
    with pytest.raises(WeylError):
        DiagonalFlow(2, (1, 1))
    with pytest.raises(WeylError):
        DiagonalFlow(1, (0,))
    with pytest.raises(WeylError):
        DiagonalFlow(3, (1, -1))


def test_coset_examples():
    B3 = ParabolicSubgroup.B(3)
    cos = weyl_double_cosets(D3, B3)
    assert len(cos) == 3
    assert {o.multiset_flag[0] for o in cos} == {(HALF,), (F(-1),)}
    assert len(weyl_double_cosets(DiagonalFlow(3, (1, 0, -1)), B3)) == 6
    assert len(weyl_double_cosets(D3, ParabolicSubgroup.G(3))) == 1


def test_coset_dimension_mismatch():
    with pytest.raises(WeylError):
        weyl_double_cosets(D3, ParabolicSubgroup.B(2))


@settings(max_examples=60, deadline=None)
@given(flows(dims=(2, 3, 4, 5)), st.data())
def test_coset_count_matches_brute_force(flow, data):
    P = data.draw(st.sampled_from(enumerate_parabolics(flow.d)))
    cos = weyl_double_cosets(flow, P)
    flags = brute_flags(flow.alpha, P.jumps)
    assert len(cos) == len(flags)
    assert {o.multiset_flag for o in cos} == flags


@settings(max_examples=40, deadline=None)
@given(flows(dims=(2, 3, 4)), st.data())
def test_canonical_rep_is_lex_smallest(flow, data):
    P = data.draw(st.sampled_from(enumerate_parabolics(flow.d)))
    perm = data.draw(st.permutations(range(1, flow.d + 1)))
    rep = canonical_rep(flow, P, perm)
    target = orientation(flow, P, perm).multiset_flag
    same = [p for p in permutations(range(1, flow.d + 1))
            if orientation(flow, P, p).multiset_flag == target]
    assert rep == min(same)


def test_entropy_examples():
    B2 = ParabolicSubgroup.B(2)
    assert entropy(D2, B2, orientation(D2, B2, (1, 2))) == 1
    assert entropy(D2, B2, orientation(D2, B2, (2, 1))) == 0
    G3 = ParabolicSubgroup.G(3)
    assert entropy(D3, G3, weyl_double_cosets(D3, G3)[0]) == 3


def test_entropy_rejects_foreign_orientation():
    w = orientation(D3, ParabolicSubgroup.B(3), (1, 2, 3))
    with pytest.raises(WeylError):
        entropy(D3, ParabolicSubgroup.G(3), w)


def test_project_examples():
    P = ParabolicSubgroup(3, (1,))
    assert project(D3, P, orientation(D3, P, (1, 2, 3))) == (HALF, F(-1, 4), F(-1, 4))
    B = ParabolicSubgroup.B(3)
    assert project(D3, B, orientation(D3, B, (3, 1, 2))) == (F(-1), HALF, HALF)
    G = ParabolicSubgroup.G(3)
    assert project(D3, G, orientation(D3, G, (1, 2, 3))) == (0, 0, 0)


def test_multiset_le():
    assert multiset_le([F(-1)], [HALF])
    assert multiset_le([HALF, F(-1)], [HALF, F(-1)])
    assert multiset_le([HALF, F(-1)], [HALF, HALF])
    assert not multiset_le([HALF], [F(-1)])
    with pytest.raises(WeylError):
        multiset_le([1], [1, 2])


def test_h_phi_two_dim_example():
    B2 = ParabolicSubgroup.B(2)
    phi = LinearFunctional(2, (HALF, -HALF))  # half the simple root
    assert h_phi(D2, B2, orientation(D2, B2, (1, 2)), phi) == HALF
    assert h_phi(D2, B2, orientation(D2, B2, (2, 1)), phi) == HALF
    zero = LinearFunctional.zero(2)
    assert h_phi(D2, B2, orientation(D2, B2, (1, 2)), zero) == 1


def test_linear_functional_canonical():
    phi = LinearFunctional(3, (1, 1, 4))
    assert sum(phi.coeffs) == 0
    assert phi((1, -1, 0)) == 0


@settings(max_examples=60, deadline=None)
@given(flows(dims=(2, 3, 4)), st.data())
def test_entropy_and_projection_match_brute_force(flow, data):
    P = data.draw(st.sampled_from(enumerate_parabolics(flow.d)))
    perm = tuple(data.draw(st.permutations(range(1, flow.d + 1))))
    w = orientation(flow, P, perm)
    assert entropy(flow, P, w) == brute_entropy(flow.alpha, P.jumps, perm)
    assert project(flow, P, w) == brute_projection(flow.alpha, P.jumps, perm)


@pytest.mark.parametrize("alpha", [(1, 0, -1), (2, 2, -1, -3), (1, 1, 1, -3), (3, -1, -1, 0, -1)])
def test_class_function_exhaustive(alpha):
    flow = DiagonalFlow.from_values(alpha)
    d = flow.d
    for P in enumerate_parabolics(d):
        for w in permutations(range(1, d + 1)):
            o = orientation(flow, P, w)
            assert entropy_of_perm(flow, P, w) == entropy(flow, P, o)
            assert project(flow, P, o) == brute_projection(flow.alpha, P.jumps, w)


@settings(max_examples=60, deadline=None)
@given(flows(dims=(2, 3, 4, 5)), st.data())
def test_monotone_in_parabolic(flow, data):
    Ps = enumerate_parabolics(flow.d)
    P = data.draw(st.sampled_from(Ps))
    Q = data.draw(st.sampled_from([Q for Q in Ps if P.contains(Q)]))
    perm = data.draw(st.permutations(range(1, flow.d + 1)))
    assert entropy_of_perm(flow, Q, perm) <= entropy_of_perm(flow, P, perm)


@settings(max_examples=60, deadline=None)
@given(flows(dims=(2, 3, 4, 5)), st.data())
def test_projection_invariants(flow, data):
    perm = data.draw(st.permutations(range(1, flow.d + 1)))
    for P in enumerate_parabolics(flow.d):
        assert sum(project(flow, P, orientation(flow, P, perm))) == 0
    B, G = ParabolicSubgroup.B(flow.d), ParabolicSubgroup.G(flow.d)
    assert project(flow, B, orientation(flow, B, perm)) == tuple(flow.alpha[p - 1] for p in perm)
    assert all(x == 0 for x in project(flow, G, orientation(flow, G, perm)))


@settings(max_examples=60, deadline=None)
@given(flows(dims=(2, 3, 4, 5)))
def test_entropy_at_G(flow):
    G = ParabolicSubgroup.G(flow.d)
    a = flow.alpha
    expected = sum(abs(a[i] - a[j]) for i in range(flow.d) for j in range(i + 1, flow.d))
    assert entropy(flow, G, weyl_double_cosets(flow, G)[0]) == expected


@settings(max_examples=40, deadline=None)
@given(flows(dims=(2, 3, 4)), st.fractions(min_value=F(1, 10), max_value=5), st.data())
def test_homogeneity(flow, c, data):
    P = data.draw(st.sampled_from(enumerate_parabolics(flow.d)))
    scaled = flow.scaled(c)
    cos = weyl_double_cosets(flow, P)
    cos_s = weyl_double_cosets(scaled, P)
    assert [o.rep for o in cos] == [o.rep for o in cos_s]
    for o, s in zip(cos, cos_s):
        assert entropy(scaled, P, s) == c * entropy(flow, P, o)
        assert project(scaled, P, s) == tuple(c * x for x in project(flow, P, o))
