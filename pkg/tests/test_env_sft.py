from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glab.env_sft import (
    Environment,
    RandomSFT,
    build_cyclic_environment,
    check_topological_mixing,
    count_admissible,
    prune_sft,
    return_times,
    transfer_product,
    validate_sft,
)
from glab.errors import InvalidArgument, StructuralError

from conftest import brute_words, full_shift, golden_mean, random_sft, skewed_environment_sft, state_after


def test_cyclic_environment_orbit():
    env = build_cyclic_environment(3)
    assert env.orbit(1, 5) == [1, 2, 0, 1, 2]
    assert env.advance(2, 4) == 0
    assert env.advance(0, -1) == 2
    assert np.allclose(env.weights, 1 / 3)


@pytest.mark.parametrize(
    "states,weights,shift",
    [
        (("a", "b"), [0.5, 0.5], [0, 1]),  # two fixed points: not ergodic
        (("a", "b"), [0.7, 0.3], [1, 0]),  # weights not invariant
        (("a", "b"), [0.5, 0.6], [1, 0]),  # weights do not sum to 1
        (("a", "b"), [0.5, 0.5], [1, 1]),  # not a permutation
    ],
)
def test_environment_rejects_invalid(states, weights, shift):
    with pytest.raises(InvalidArgument):
        Environment(states, np.array(weights), np.array(shift))


def test_state_lookup_by_name():
    env = Environment(("x", "y", "z"), np.full(3, 1 / 3), np.array([2, 0, 1]))
    assert env.state_index("z") == 2
    assert env.state_index(1) == 1
    assert env.orbit(0, 4) == [0, 2, 1, 0]


def test_full_shift_counts():
    sft = full_shift(2)
    assert count_admissible(sft, 0, 3, 0, 0) == 4


def test_golden_mean_counts_are_fibonacci():
    sft = golden_mean()
    fib = [1, 1]
    for _ in range(30):
        fib.append(fib[-1] + fib[-2])
    for n in range(1, 20):
        total = sum(count_admissible(sft, 0, n, a, b) for a in range(2) for b in range(2))
        # words of length n+1 in the golden mean shift
        assert total == fib[n + 2]


def test_bigint_switch_is_exact():
    sft = full_shift(4)
    assert count_admissible(sft, 0, 40, 1, 2) == 4**39
    assert transfer_product(sft, 0, 40).dtype == object


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), period=st.integers(1, 3), n=st.integers(1, 6))
def test_words_match_brute_force(seed, period, n):
    sft = random_sft(seed, period)
    for k in range(period):
        assert list(sft.words(k, n)) == list(brute_words(sft, k, n))
        for a in range(sft.alphabet_size(k)):
            got = {b: count_admissible(sft, k, n, a, b) for b in range(sft.alphabet_size(state_after(sft, k, n)))}
            last = sft.matrices[state_after(sft, k, n - 1)]
            want = {b: sum(1 for w in brute_words(sft, k, n, a) if last[w[-1], b]) for b in got}
            assert got == want


def test_words_on_permuted_environment():
    sft = skewed_environment_sft(3)
    for k in range(3):
        assert list(sft.words(k, 5)) == list(brute_words(sft, k, 5))


def test_is_admissible_rejects_out_of_range_symbols():
    sft = RandomSFT(build_cyclic_environment(2), (np.ones((2, 3), dtype=int), np.ones((3, 2), dtype=int)))
    assert sft.is_admissible(0, (1, 2, 1))
    assert not sft.is_admissible(0, (2, 0))
    assert not sft.is_admissible(1, (0, 2))


def test_extensions_enumerate_continuations():
    sft = golden_mean()
    assert sorted(sft.extensions(0, (1,), 2)) == [(0, 0), (0, 1)]


def test_validate_reports_dead_symbol():
    sft = RandomSFT(build_cyclic_environment(1), (np.array([[1, 1], [0, 0]]),))
    problems = validate_sft(sft)
    assert any(p.kind == "dead symbol" and p.symbol == 1 for p in problems)
    assert "dead symbol (0,1)" in [str(p) for p in problems]


def test_validate_rejects_shape_mismatch():
    env = build_cyclic_environment(2)
    sft = RandomSFT(env, (np.ones((2, 3), dtype=int), np.ones((2, 2), dtype=int)))
    with pytest.raises(StructuralError):
        validate_sft(sft)


def test_prune_removes_dead_symbols():
    sft = RandomSFT(build_cyclic_environment(1), (np.array([[1, 1, 0], [1, 1, 0], [0, 0, 0]]),))
    pruned, keep = prune_sft(sft)
    assert keep == [[0, 1]]
    assert validate_sft(pruned) == []
    assert pruned.alphabet_size(0) == 2


def test_mixing_index():
    assert check_topological_mixing(full_shift(3), 5) == 1
    assert check_topological_mixing(golden_mean(), 6) == 2
    periodic = RandomSFT(build_cyclic_environment(1), (np.array([[0, 1], [1, 0]]),))
    assert check_topological_mixing(periodic, 10) is None


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), period=st.integers(1, 4))
def test_mixing_index_is_minimal(seed, period):
    sft = random_sft(seed, period, density=0.8)
    n_max = 8
    n0 = check_topological_mixing(sft, n_max)
    positive = []
    for n in range(1, n_max + 1):
        positive.append(all(np.all(transfer_product(sft, k, n) > 0) for k in range(period)))
    if n0 is None:
        assert not positive[-1]
    else:
        assert all(positive[n0 - 1 :])
        assert n0 == 1 or not positive[n0 - 2]


def test_kac_formula():
    env = build_cyclic_environment(4)
    mats = (np.ones((3, 2), dtype=int), np.ones((2, 2), dtype=int), np.ones((2, 3), dtype=int), np.ones((3, 3), dtype=int))
    sft = RandomSFT(env, mats)
    rt = return_times(sft, 2, 20)
    assert rt.members == (0, 3)
    assert math.isclose(rt.kac_integral(), 1.0)
    assert math.isclose(rt.mean_return_time(), 2.0)
    assert rt.first_return(1) == 2
