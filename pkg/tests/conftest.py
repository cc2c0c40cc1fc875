"""Shared fixtures and brute-force oracles.

The oracles here deliberately avoid the package's own enumeration helpers:
words are generated with ``itertools.product`` and filtered against the raw
transition matrices.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from glab.env_sft import Environment, RandomSFT, build_cyclic_environment
from glab.extension import SkewLabeling
from glab.groups import FreeGroup, Lattice
from glab.potential import LocallyConstantPotential


# -- system builders ----------------------------------------------------------


def full_shift(k: int, period: int = 1) -> RandomSFT:
    env = build_cyclic_environment(period)
    return RandomSFT(env, tuple(np.ones((k, k), dtype=np.int64) for _ in range(period)))


def golden_mean() -> RandomSFT:
    return RandomSFT(build_cyclic_environment(1), (np.array([[1, 1], [1, 0]]),))


def alternating_23() -> RandomSFT:
    env = build_cyclic_environment(2)
    return RandomSFT(env, (np.ones((2, 3), dtype=np.int64), np.ones((3, 2), dtype=np.int64)))


def random_sft(seed: int, period: int = 2, sizes=(2, 3), density: float = 0.6, mixing: bool = False) -> RandomSFT:
    """Random system whose every symbol has a successor and a predecessor.

    With ``mixing`` set, draws are repeated until the system is topologically mixing.
    """
    from glab.env_sft import check_topological_mixing

    while True:
        sft = _random_sft(seed, period, sizes, density)
        if not mixing or check_topological_mixing(sft, 4 * max(sizes) ** 2 * period) is not None:
            return sft
        seed += 100_003


def _random_sft(seed, period, sizes, density) -> RandomSFT:
    rng = np.random.default_rng(seed)
    alph = [int(rng.choice(sizes)) for _ in range(period)]
    mats = []
    for k in range(period):
        rows, cols = alph[k], alph[(k + 1) % period]
        A = (rng.random((rows, cols)) < density).astype(np.int64)
        for i in range(rows):
            A[i, rng.integers(cols)] = 1
        for j in range(cols):
            A[rng.integers(rows), j] = 1
        mats.append(A)
    return RandomSFT(build_cyclic_environment(period), tuple(mats))


def skewed_environment_sft(seed: int) -> RandomSFT:
    """Three states visited in the order x, z, y (shift is not ``k -> k + 1``)."""
    rng = np.random.default_rng(seed)
    env = Environment(("x", "y", "z"), np.full(3, 1 / 3), np.array([2, 0, 1]))
    alph = [2, 3, 2]
    mats = [None] * 3
    for k in range(3):
        nxt = int(env.shift[k])
        A = (rng.random((alph[k], alph[nxt])) < 0.7).astype(np.int64)
        for i in range(alph[k]):
            A[i, rng.integers(alph[nxt])] = 1
        for j in range(alph[nxt]):
            A[rng.integers(alph[k]), j] = 1
        mats[k] = A
    return RandomSFT(env, tuple(mats))


def random_potential(sft: RandomSFT, r: int, seed: int) -> LocallyConstantPotential:
    rng = np.random.default_rng(seed)
    tabs = []
    for k in range(sft.env.size):
        shape = tuple(sft.alphabet_size(sft.env.advance(k, i)) for i in range(r))
        tabs.append(rng.normal(scale=0.7, size=shape) if r else np.array(rng.normal()))
    return LocallyConstantPotential(r, tuple(tabs))


def random_z_labeling(sft: RandomSFT, seed: int, d: int = 1, span: int = 1) -> SkewLabeling:
    rng = np.random.default_rng(seed)
    rows = [[tuple(int(x) for x in rng.integers(-span, span + 1, size=d)) for _ in range(sft.alphabet_size(k))]
            for k in range(sft.env.size)]
    return SkewLabeling.build(sft, Lattice(d), rows)


def random_free_labeling(sft: RandomSFT, seed: int) -> SkewLabeling:
    rng = np.random.default_rng(seed)
    letters = [(1,), (-1,), (2,), (-2,), ()]
    rows = [[letters[int(rng.integers(len(letters)))] for _ in range(sft.alphabet_size(k))]
            for k in range(sft.env.size)]
    return SkewLabeling.build(sft, FreeGroup(2), rows)


# -- brute-force oracles ------------------------------------------------------


def state_after(sft: RandomSFT, k: int, t: int) -> int:
    s = k
    for _ in range(t):
        s = int(sft.env.shift[s])
    return s


def admissible(sft: RandomSFT, k: int, w) -> bool:
    for i in range(len(w)):
        if not 0 <= w[i] < sft.matrices[state_after(sft, k, i)].shape[0]:
            return False
    for i in range(len(w) - 1):
        if sft.matrices[state_after(sft, k, i)][w[i], w[i + 1]] != 1:
            return False
    return True


def brute_words(sft: RandomSFT, k: int, n: int, first: int | None = None):
    alph = [range(sft.matrices[state_after(sft, k, i)].shape[0]) for i in range(n)]
    for w in itertools.product(*alph):
        if first is not None and w[0] != first:
            continue
        if admissible(sft, k, w):
            yield w


def brute_sup_sum(phi: LocallyConstantPotential, sft: RandomSFT, k: int, w, best=max) -> float:
    """sup (or inf) of the Birkhoff sum over every admissible continuation of ``w``."""
    r = phi.range
    extra = max(r - 1, 0)
    n = len(w)
    alph = [range(sft.matrices[state_after(sft, k, n + i)].shape[0]) for i in range(extra)]
    sums = []
    for tail in itertools.product(*alph):
        y = tuple(w) + tail
        if not admissible(sft, k, y):
            continue
        sums.append(sum(float(phi.tables[state_after(sft, k, i)][tuple(y[i : i + r])]) for i in range(n)))
    return best(sums)


def brute_log_partition(phi, sft, k, n, a, b) -> float:
    last = sft.matrices[state_after(sft, k, n - 1)]
    terms = [brute_sup_sum(phi, sft, k, w) for w in brute_words(sft, k, n, a) if last[w[-1], b] == 1]
    if not terms:
        return -math.inf
    m = max(terms)
    return m + math.log(sum(math.exp(t - m) for t in terms))


def brute_cocycle(labeling: SkewLabeling, sft: RandomSFT, k: int, w):
    G = labeling.group
    g = G.identity()
    for i, s in enumerate(w):
        g = G.mul(g, labeling.labels[state_after(sft, k, i)][s])
    return g


@pytest.fixture
def f2_system():
    sft = full_shift(4)
    G = FreeGroup(2)
    lab = SkewLabeling.uniform(sft, G, [(1,), (2,), (-1,), (-2,)])
    return sft, lab


@pytest.fixture
def z_system():
    sft = full_shift(2)
    lab = SkewLabeling.uniform(sft, Lattice(1), [(1,), (-1,)])
    return sft, lab
