from __future__ import annotations

import math
from collections import deque
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glab.errors import InvalidArgument
from glab.groups import (
    BallIndex,
    FiniteCyclic,
    FreeGroup,
    Lattice,
    extrapolate_ladder,
    folner_defect,
    group_from_spec,
    kesten_ladder,
    kesten_spectral_radius,
)

GROUPS = [Lattice(1), Lattice(2), Lattice(3), FreeGroup(1), FreeGroup(2), FreeGroup(3), FiniteCyclic(1), FiniteCyclic(7)]


def random_word(G, rng, length):
    gens = G.generators()
    return G.product(gens[i] for i in rng.integers(len(gens), size=length))


def bfs_ball(G, L):
    """Independent ball enumeration by breadth-first search over generators."""
    seen = {G.identity(): 0}
    q = deque([G.identity()])
    while q:
        g = q.popleft()
        if seen[g] == L:
            continue
        for s in G.generators():
            h = G.mul(g, s)
            if h not in seen:
                seen[h] = seen[g] + 1
                q.append(h)
    return seen


@pytest.mark.parametrize("G", GROUPS, ids=lambda G: repr(G.spec()))
@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_group_axioms(G, seed):
    rng = np.random.default_rng(seed)
    g, h, k = (random_word(G, rng, int(rng.integers(0, 7))) for _ in range(3))
    e = G.identity()
    assert G.mul(G.mul(g, h), k) == G.mul(g, G.mul(h, k))
    assert G.mul(g, e) == g == G.mul(e, g)
    assert G.mul(g, G.inv(g)) == e == G.mul(G.inv(g), g)
    assert G.word_length(G.mul(g, h)) <= G.word_length(g) + G.word_length(h)
    assert G.dist(g, h) == G.dist(h, g)
    assert G.parse(G.serialize(g)) == g


@pytest.mark.parametrize("G", [FreeGroup(2), FreeGroup(3)], ids=lambda G: repr(G.spec()))
@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_abelianization_is_homomorphism(G, seed):
    rng = np.random.default_rng(seed)
    g, h = random_word(G, rng, 5), random_word(G, rng, 6)
    A = G.abelianization()
    assert G.abelianize(G.mul(g, h)) == A.mul(G.abelianize(g), G.abelianize(h))


def test_free_group_reduction_and_serialization():
    F = FreeGroup(2)
    g = F.parse("a b b^-1 a")
    assert g == (1, 1)
    assert F.serialize(g) == "a^2"
    assert F.serialize(F.identity()) == "e"
    assert F.parse("a^2 b^-1") == (1, 1, -2)
    assert F.serialize(F.parse("a^2 b^-1")) == "a^2 b^-1"
    assert F.word_length(F.parse("a b a^-1 b^-1")) == 4
    assert not F.is_abelian and F.counting_exponent == 1.5
    with pytest.raises(InvalidArgument):
        F.parse("c")


def test_lattice_serialization():
    Z2 = Lattice(2)
    assert Z2.serialize((3, -1)) == "(3,-1)"
    assert Z2.parse("(3,-1)") == (3, -1)
    assert Z2.parse([3, -1]) == (3, -1)
    with pytest.raises(InvalidArgument):
        Z2.parse([1, 2, 3])


def test_group_from_spec():
    assert group_from_spec({"type": "free", "params": {"k": 2}}) == FreeGroup(2)
    assert group_from_spec({"type": "lattice", "params": {"d": 3}}) == Lattice(3)
    with pytest.raises(InvalidArgument):
        group_from_spec({"type": "heisenberg"})


@pytest.mark.parametrize("G,L", [(Lattice(1), 6), (Lattice(2), 5), (Lattice(3), 4), (FreeGroup(2), 5), (FreeGroup(3), 4), (FiniteCyclic(5), 4)])
def test_ball_sizes_match_bfs(G, L):
    for r in range(L + 1):
        assert G.ball_size(r) == len(bfs_ball(G, r))


def test_free_ball_size_closed_form():
    F = FreeGroup(2)
    for L in range(1, 15):
        assert F.ball_size(L) == 1 + sum(4 * 3 ** (l - 1) for l in range(1, L + 1))


@pytest.mark.parametrize("G,L", [(Lattice(2), 4), (FreeGroup(2), 4), (FiniteCyclic(6), 3), (Lattice(1), 7)])
def test_ball_index_consistency(G, L):
    ball = BallIndex(G, L)
    ref = bfs_ball(G, L)
    assert ball.size == len(ref)
    els = ball.elements()
    assert set(els) == set(ref)
    assert list(ball.lengths()) == sorted(ball.lengths())
    for i, g in enumerate(els):
        assert ball.index_of(g) == i
        assert ball.lengths()[i] == ref[g]
    for h in G.generators():
        t = ball.right_table(h)
        for i, g in enumerate(els):
            gh = G.mul(g, h)
            assert t[i] == (ball.index_of(gh) if gh in ref else -1)


@pytest.mark.parametrize("L", [1, 5, 10, 40])
def test_kesten_z_matches_path_graph(L):
    # compressed nearest-neighbour walk on {-L..L} is half the path adjacency
    exact = math.cos(math.pi / (2 * L + 2))
    for method in ("lanczos", "power"):
        r = kesten_spectral_radius(Lattice(1), {(1,): 0.5, (-1,): 0.5}, L, method=method, T=200_000, tol=1e-14)
        tol = 1e-12 if method == "lanczos" else 1e-6
        assert r.value == pytest.approx(exact, abs=tol)


def test_kesten_z_dense_eigen_oracle():
    L = 12
    n = 2 * L + 1
    M = 0.5 * (np.eye(n, k=1) + np.eye(n, k=-1))
    want = np.linalg.svd(M, compute_uv=False).max()
    got = kesten_spectral_radius(Lattice(1), {(1,): 0.5, (-1,): 0.5}, L).value
    assert got == pytest.approx(want, abs=1e-12)


def test_kesten_free_group_dense_oracle():
    F = FreeGroup(2)
    L = 5
    ball = BallIndex(F, L)
    M = np.zeros((ball.size, ball.size))
    for s in F.generators():
        t = ball.right_table(s)
        for i, j in enumerate(t):
            if j >= 0:
                M[i, j] += 0.25
    want = np.linalg.svd(M, compute_uv=False).max()
    got = kesten_spectral_radius(F, {s: 0.25 for s in F.generators()}, L).value
    assert got == pytest.approx(want, abs=1e-10)


def test_kesten_ladder_increases_toward_limit():
    F = FreeGroup(2)
    lad = kesten_ladder(F, {s: 0.25 for s in F.generators()}, [4, 6, 8])
    assert list(lad.estimates) == sorted(lad.estimates)
    assert lad.raw < math.sqrt(3) / 2
    assert abs(lad.extrapolated - math.sqrt(3) / 2) < abs(lad.raw - math.sqrt(3) / 2)


def test_extrapolation_recovers_synthetic_law():
    Ls = [10, 20, 40]
    vals = [0.9 - 2.0 / (L + 3.0) ** 2 for L in Ls]
    rho, how = extrapolate_ladder(Ls, vals)
    assert how == "three-point"
    assert rho == pytest.approx(0.9, abs=1e-10)


@pytest.mark.parametrize("R", [1, 3, 10])
def test_folner_defect_of_intervals(R):
    Z = Lattice(1)
    A = [(x,) for x in range(-R, R + 1)]
    assert folner_defect(Z, A, Z.generators()) == Fraction(4, 2 * R + 1)


def test_folner_defect_free_balls_stay_large():
    F = FreeGroup(2)
    defects = [folner_defect(F, F.ball(R), F.generators()) for R in range(1, 5)]
    assert all(d > 2 for d in defects)


def test_step_distribution_validation():
    with pytest.raises(InvalidArgument):
        kesten_spectral_radius(Lattice(1), {(1,): 0.7, (-1,): 0.7}, 5)
