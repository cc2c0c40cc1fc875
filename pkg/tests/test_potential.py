from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glab.errors import InvalidArgument
from glab.extension import partition_function, partition_series
from glab.potential import (
    LocallyConstantPotential,
    NodeGraph,
    birkhoff_sum,
    inf_on_cylinder,
    kappa,
    sup_on_cylinder,
    variation,
    variation_bound,
)

from conftest import (
    brute_log_partition,
    brute_sup_sum,
    brute_words,
    full_shift,
    golden_mean,
    random_potential,
    random_sft,
    skewed_environment_sft,
    state_after,
)


def test_constant_and_symbol_potentials():
    sft = full_shift(2)
    phi = LocallyConstantPotential.from_symbol_values(sft, [math.log(2), 0.0])
    assert birkhoff_sum(phi, sft, 0, (0, 1, 0)) == pytest.approx(2 * math.log(2))
    c = LocallyConstantPotential.constant(sft, 0.5)
    assert birkhoff_sum(c, sft, 0, (1, 1, 1, 1)) == pytest.approx(2.0)


def test_weighted_partition_example():
    # words 00 and 01 weigh 4 and 2
    sft = full_shift(2)
    phi = LocallyConstantPotential.from_symbol_values(sft, [math.log(2), 0.0])
    assert math.exp(partition_function(sft, phi, 0, 2, 0, 0)) == pytest.approx(6.0)


def test_golden_mean_partition_example():
    sft = golden_mean()
    phi = LocallyConstantPotential.zero(sft)
    assert math.exp(partition_function(sft, phi, 0, 5, 0, 0)) == pytest.approx(8.0)


def test_birkhoff_rejects_inadmissible():
    sft = golden_mean()
    phi = LocallyConstantPotential.zero(sft)
    with pytest.raises(InvalidArgument):
        birkhoff_sum(phi, sft, 0, (1, 1))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), period=st.integers(1, 3), r=st.integers(0, 3), n=st.integers(1, 8))
def test_partition_dp_equals_enumeration(seed, period, r, n):
    sft = random_sft(seed, period)
    phi = random_potential(sft, r, seed + 1)
    k = seed % period
    end = state_after(sft, k, n)
    for a in range(sft.alphabet_size(k)):
        for b in range(sft.alphabet_size(end)):
            got = partition_function(sft, phi, k, n, a, b)
            want = brute_log_partition(phi, sft, k, n, a, b)
            if want == -math.inf:
                assert got == -math.inf
            else:
                assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_partition_series_on_permuted_environment():
    sft = skewed_environment_sft(11)
    phi = random_potential(sft, 2, 5)
    for k in range(3):
        a = 0
        series = partition_series(sft, phi, k, a, 7)
        for n in range(1, 8):
            end = state_after(sft, k, n)
            if a < sft.alphabet_size(end):
                assert series[n - 1] == pytest.approx(brute_log_partition(phi, sft, k, n, a, a), abs=1e-12)
            else:
                assert math.isnan(series[n - 1])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), r=st.integers(1, 4), n=st.integers(1, 5))
def test_cylinder_extremes_match_brute_force(seed, r, n):
    sft = random_sft(seed, 2)
    phi = random_potential(sft, r, seed)
    for w in list(brute_words(sft, 0, n))[:6]:
        assert sup_on_cylinder(phi, sft, 0, w) == pytest.approx(brute_sup_sum(phi, sft, 0, w, max))
        assert inf_on_cylinder(phi, sft, 0, w) == pytest.approx(brute_sup_sum(phi, sft, 0, w, min))


def test_variation_vanishes_beyond_range():
    sft = full_shift(2)
    phi = random_potential(sft, 3, 0)
    assert variation(phi, sft, 0, 3) == 0.0
    assert variation(phi, sft, 0, 5) == 0.0
    assert variation(phi, sft, 0, 1) > 0.0


def test_variation_bound_range_two_is_one():
    # with range 2 the sum defining the bound is empty
    sft = full_shift(2)
    phi = random_potential(sft, 2, 1)
    assert variation_bound(phi, sft, 0) == 1.0


def test_variation_bound_range_three():
    sft = full_shift(2)
    tab = np.zeros((2, 2, 2))
    tab[:, :, 1] = 0.4  # depends only on the third coordinate
    phi = LocallyConstantPotential(3, (tab,))
    assert variation(phi, sft, 0, 2) == pytest.approx(0.4)
    assert variation_bound(phi, sft, 0) == pytest.approx(math.exp(0.4))


def test_kappa_dominates_variations():
    sft = full_shift(3)
    phi = random_potential(sft, 4, 3)
    kap = kappa(phi, sft, 0)
    for n in range(1, 8):
        assert variation(phi, sft, 0, n) <= kap * 2.0**-n + 1e-12


def test_reduced_drops_unused_coordinates():
    sft = full_shift(3)
    base = random_potential(sft, 1, 2)
    wide = LocallyConstantPotential.from_function(sft, 3, lambda k, w: base.value(k, w))
    red = wide.reduced(sft)
    assert red.range == 1
    assert np.allclose(red.tables[0], base.tables[0])


def test_shifted_adds_potentials():
    sft = full_shift(2)
    a = random_potential(sft, 2, 0)
    b = random_potential(sft, 1, 1)
    s = a.shifted(b)
    for w in brute_words(sft, 0, 2):
        assert s.value(0, w) == pytest.approx(a.value(0, w) + b.value(0, w))


def test_node_graph_structure():
    sft = golden_mean()
    phi = random_potential(sft, 3, 0)
    g = NodeGraph(sft, phi)
    assert g.depth == 2
    assert sorted(g.nodes[0]) == [(0, 0), (0, 1), (1, 0)]
    # (0,1) -> (1,0) only
    i = g.index[0][(0, 1)]
    finite = np.flatnonzero(np.isfinite(g.logw[0][i]))
    assert [g.nodes[0][j] for j in finite] == [(1, 0)]


def test_potential_shape_checked():
    sft = full_shift(2)
    phi = LocallyConstantPotential(1, (np.zeros(3),))
    with pytest.raises(InvalidArgument):
        phi.check_against(sft)
    with pytest.raises(InvalidArgument):
        LocallyConstantPotential(1, (np.array([0.0, np.inf]),))
