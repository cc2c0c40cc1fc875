"""Driving environment and random shifts of finite type over it.

The driving system is a finite set of fiber states permuted by a single cycle,
so almost-sure statements over the environment become exact finite averages.
Each state carries a 0/1 transition matrix from its own alphabet to the
alphabet of the successor state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import InvalidArgument, StructuralError


@dataclass(frozen=True)
class Environment:
    """Finite invertible ergodic driving system ``(states, weights, shift)``.

    ``shift[k]`` is the index of the successor of state ``k``.
    """

    states: tuple[str, ...]
    weights: np.ndarray
    shift: np.ndarray
    _position: np.ndarray = field(init=False, repr=False, compare=False)
    _cycle: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = len(self.states)
        if m < 1:
            raise InvalidArgument("environment needs at least one state")
        w = np.asarray(self.weights, dtype=float)
        s = np.asarray(self.shift, dtype=np.int64)
        if w.shape != (m,) or s.shape != (m,):
            raise InvalidArgument("weights and shift must have one entry per state")
        if np.any(w <= 0) or not math.isclose(w.sum(), 1.0, rel_tol=0, abs_tol=1e-12):
            raise InvalidArgument("weights must be positive and sum to 1")
        if sorted(s.tolist()) != list(range(m)):
            raise InvalidArgument("shift must be a permutation of the states")
        cycle = [0]
        while len(cycle) < m:
            nxt = int(s[cycle[-1]])
            if nxt == 0:
                break
            cycle.append(nxt)
        if len(cycle) != m or int(s[cycle[-1]]) != 0:
            raise InvalidArgument("shift must be a single cycle (ergodic driving system)")
        if not np.allclose(w[s], w, rtol=0, atol=1e-12):
            raise InvalidArgument("weights must be invariant under the shift")
        pos = np.empty(m, dtype=np.int64)
        pos[cycle] = np.arange(m)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "shift", s)
        object.__setattr__(self, "_cycle", np.asarray(cycle, dtype=np.int64))
        object.__setattr__(self, "_position", pos)

    @property
    def size(self) -> int:
        return len(self.states)

    def advance(self, k: int, t: int = 1) -> int:
        """State reached from ``k`` after ``t`` applications of the shift (``t`` may be negative)."""
        m = self.size
        return int(self._cycle[(self._position[k] + t) % m])

    def orbit(self, k: int, n: int) -> list[int]:
        return [self.advance(k, t) for t in range(n)]

    def state_index(self, key) -> int:
        if isinstance(key, (int, np.integer)) and not isinstance(key, bool):
            if 0 <= int(key) < self.size:
                return int(key)
            raise InvalidArgument(f"state index {key} out of range")
        if key in self.states:
            return self.states.index(key)
        raise InvalidArgument(f"unknown state {key!r}")


def build_cyclic_environment(period: int) -> Environment:
    if isinstance(period, bool) or not isinstance(period, (int, np.integer)) or period < 1:
        raise InvalidArgument(f"period must be an integer >= 1, got {period!r}")
    m = int(period)
    return Environment(
        states=tuple(f"w{i}" for i in range(m)),
        weights=np.full(m, 1.0 / m),
        shift=(np.arange(m) + 1) % m,
    )


@dataclass(frozen=True)
class RandomSFT:
    """Per-state 0/1 matrices ``A_k`` of shape ``l(k) x l(shift(k))``."""

    env: Environment
    matrices: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.matrices) != self.env.size:
            raise StructuralError(
                f"expected {self.env.size} transition matrices, got {len(self.matrices)}"
            )
        mats = []
        for k, A in enumerate(self.matrices):
            A = np.array(A, dtype=np.int64)
            if A.ndim != 2:
                raise StructuralError(f"transition matrix of state {self.env.states[k]} is not 2-d")
            A.setflags(write=False)
            mats.append(A)
        object.__setattr__(self, "matrices", tuple(mats))

    def alphabet_size(self, k: int) -> int:
        return int(self.matrices[k].shape[0])

    @property
    def alphabet_sizes(self) -> tuple[int, ...]:
        return tuple(self.alphabet_size(k) for k in range(self.env.size))

    def matrix(self, k: int) -> np.ndarray:
        return self.matrices[k]

    def is_admissible(self, k: int, word: Sequence[int]) -> bool:
        """Whether ``word`` is admissible starting at state ``k``."""
        if len(word) == 0:
            return True
        states = self.env.orbit(k, len(word))
        if any(not 0 <= s < self.alphabet_size(st) for s, st in zip(word, states)):
            return False
        return all(self.matrices[st][s, t] == 1 for st, s, t in zip(states, word, word[1:]))

    def words(self, k: int, n: int, first: int | None = None) -> Iterator[tuple[int, ...]]:
        """Enumerate admissible words of length ``n`` at state ``k`` in lexicographic order."""
        if n == 0:
            yield ()
            return
        starts = range(self.alphabet_size(k)) if first is None else [first]

        def rec(prefix, state):
            if len(prefix) == n:
                yield tuple(prefix)
                return
            nxt = self.env.advance(state)
            for s in np.flatnonzero(self.matrices[state][prefix[-1]]):
                prefix.append(int(s))
                yield from rec(prefix, nxt)
                prefix.pop()

        for a in starts:
            yield from rec([a], k)

    def extensions(self, k: int, word: Sequence[int], length: int) -> Iterator[tuple[int, ...]]:
        """Admissible continuations of ``word`` by ``length`` further symbols."""
        if length == 0:
            yield ()
            return
        state = self.env.advance(k, len(word) - 1)

        def rec(last, st, acc):
            if len(acc) == length:
                yield tuple(acc)
                return
            nxt = self.env.advance(st)
            for s in np.flatnonzero(self.matrices[st][last]):
                acc.append(int(s))
                yield from rec(int(s), nxt, acc)
                acc.pop()

        yield from rec(word[-1], state, [])


@dataclass(frozen=True)
class Violation:
    kind: str
    state: int
    symbol: int

    def __str__(self):
        return f"{self.kind} ({self.state},{self.symbol})"


def _check_shapes(sft: RandomSFT) -> None:
    env = sft.env
    for k, A in enumerate(sft.matrices):
        nxt = env.advance(k)
        if A.shape[1] != sft.alphabet_size(nxt):
            raise StructuralError(
                f"state {env.states[k]}: matrix has {A.shape[1]} columns but successor "
                f"{env.states[nxt]} has alphabet size {sft.alphabet_size(nxt)}"
            )


def validate_sft(sft: RandomSFT) -> list[Violation]:
    """List every violated invariant; an empty list means the system is usable."""
    _check_shapes(sft)
    out: list[Violation] = []
    for k, A in enumerate(sft.matrices):
        if A.shape[0] < 2:
            out.append(Violation("alphabet smaller than 2", k, A.shape[0]))
        bad = np.argwhere((A != 0) & (A != 1))
        for i, _ in bad:
            out.append(Violation("non-binary entry", k, int(i)))
        for i in np.flatnonzero(A.sum(axis=1) == 0):
            out.append(Violation("dead symbol", k, int(i)))
        nxt = sft.env.advance(k)
        for j in np.flatnonzero(A.sum(axis=0) == 0):
            out.append(Violation("unreachable symbol", nxt, int(j)))
    return out


def prune_sft(sft: RandomSFT) -> tuple[RandomSFT, list[list[int]]]:
    """Iteratively delete dead and unreachable symbols.

    Returns the pruned system and, per state, the surviving original symbols.
    """
    _check_shapes(sft)
    env = sft.env
    keep = [list(range(sft.alphabet_size(k))) for k in range(env.size)]
    mats = [np.array(A) for A in sft.matrices]
    changed = True
    while changed:
        changed = False
        for k in range(env.size):
            nxt = env.advance(k)
            A = mats[k]
            rows = np.flatnonzero(A.sum(axis=1) > 0)
            if len(rows) < A.shape[0]:
                prv = env.advance(k, -1)
                mats[k] = A[rows]
                mats[prv] = mats[prv][:, rows]
                keep[k] = [keep[k][r] for r in rows]
                changed = True
            A = mats[k]
            cols = np.flatnonzero(A.sum(axis=0) > 0)
            if len(cols) < A.shape[1]:
                mats[k] = A[:, cols]
                mats[nxt] = mats[nxt][cols]
                keep[nxt] = [keep[nxt][c] for c in cols]
                changed = True
    pruned = RandomSFT(env, tuple(mats))
    if validate_sft(pruned):
        raise StructuralError("pruning left an unusable system: " + ", ".join(map(str, validate_sft(pruned))))
    return pruned, keep


def _needs_bigint(sft: RandomSFT, n: int) -> bool:
    lmax = max(sft.alphabet_sizes)
    return n * math.log2(max(lmax, 2)) > 62


def transfer_product(sft: RandomSFT, k: int, n: int) -> np.ndarray:
    """``A_k A_{k+1} ... A_{k+n-1}``; entry ``[a, b]`` counts words of length ``n`` from ``a`` leading to ``b``.

    Integer arithmetic; switches to Python integers when int64 could overflow.
    """
    dtype = object if _needs_bigint(sft, n) else np.int64
    state = k
    P = np.identity(sft.alphabet_size(k), dtype=np.int64).astype(dtype)
    for _ in range(n):
        P = P.dot(sft.matrices[state].astype(dtype))
        state = sft.env.advance(state)
    return P


def count_admissible(sft: RandomSFT, k: int, n: int, a: int, b: int) -> int:
    """Number of words ``alpha`` of length ``n`` at state ``k`` with ``alpha_0 = a`` and ``alpha_{n-1} b`` admissible."""
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    if not 0 <= a < sft.alphabet_size(k):
        raise InvalidArgument(f"symbol {a} not in alphabet of state {k}")
    end = sft.env.advance(k, n)
    if not 0 <= b < sft.alphabet_size(end):
        raise InvalidArgument(f"symbol {b} not in alphabet of state {end}")
    return int(transfer_product(sft, k, n)[a, b])


def check_topological_mixing(sft: RandomSFT, n_max: int) -> int | None:
    """Smallest ``N0`` such that every product of ``n`` consecutive matrices is positive for ``N0 <= n <= n_max``."""
    if n_max < 1:
        raise InvalidArgument("n_max must be >= 1")
    env = sft.env
    positive = []
    prods = [np.identity(sft.alphabet_size(k), dtype=bool) for k in range(env.size)]
    for n in range(1, n_max + 1):
        ok = True
        for k in range(env.size):
            last = env.advance(k, n - 1)
            prods[k] = (prods[k].astype(np.int64) @ sft.matrices[last]) > 0
            ok &= bool(prods[k].all())
        positive.append(ok)
    if not positive[-1]:
        return None
    n0 = n_max
    while n0 > 1 and positive[n0 - 2]:
        n0 -= 1
    return n0


@dataclass(frozen=True)
class ReturnTimes:
    """Return times of the driving orbit to the states whose alphabet contains ``base_symbol``."""

    base_symbol: int
    horizon: int
    times: tuple[tuple[int, ...], ...]
    members: tuple[int, ...]
    weights: np.ndarray

    def first_return(self, k: int) -> int:
        if not self.times[k]:
            raise InvalidArgument(f"no return to symbol {self.base_symbol} from state {k} within horizon")
        return self.times[k][0]

    def measure(self) -> float:
        """``P(Omega_a)``."""
        return float(sum(self.weights[k] for k in self.members))

    def kac_integral(self) -> float:
        """Integral of the first return time over ``Omega_a``; equals 1."""
        return float(sum(self.weights[k] * self.first_return(k) for k in self.members))

    def mean_return_time(self) -> float:
        """Mean first return time under the normalized restriction; equals ``1 / P(Omega_a)``."""
        return self.kac_integral() / self.measure()


def return_times(sft: RandomSFT, a: int, horizon: int) -> ReturnTimes:
    env = sft.env
    members = tuple(k for k in range(env.size) if a < sft.alphabet_size(k))
    if a < 0 or not members:
        raise InvalidArgument(f"symbol {a} is absent from every fiber")
    if horizon < 1:
        raise InvalidArgument("horizon must be >= 1")
    times = []
    for k in range(env.size):
        times.append(tuple(n for n in range(1, horizon + 1) if env.advance(k, n) in members))
    return ReturnTimes(a, horizon, tuple(times), members, env.weights)
