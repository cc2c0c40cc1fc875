"""Locally constant fiber potentials.

A potential of range ``r`` at fiber state ``k`` is a table indexed by words of
length ``r`` over ``S(k) x S(k+1) x ... x S(k+r-1)``.  Range 0 means a constant
per fiber.  Values are in natural-log scale.

The :class:`NodeGraph` turns a potential into a finite weighted graph whose
nodes are admissible words of length ``D = max(1, r - 1)``; every transfer
operator and partition function downstream is a matrix computation on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from .env_sft import RandomSFT
from .errors import InvalidArgument, StructuralError


@dataclass(frozen=True, eq=False)
class LocallyConstantPotential:
    """Range-``r`` potential; ``tables[k]`` is an ``r``-dimensional float array.

    Entries indexed by inadmissible words are never read.
    """

    range: int
    tables: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.range < 0:
            raise InvalidArgument("potential range must be >= 0")
        tabs = []
        for t in self.tables:
            t = np.array(t, dtype=float)
            if t.ndim != self.range:
                raise InvalidArgument(f"table has {t.ndim} dimensions, expected range {self.range}")
            if not np.all(np.isfinite(t)):
                raise InvalidArgument("potential values must be finite")
            t.setflags(write=False)
            tabs.append(t)
        object.__setattr__(self, "tables", tuple(tabs))

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls, sft: RandomSFT) -> "LocallyConstantPotential":
        return cls.constant(sft, 0.0)

    @classmethod
    def constant(cls, sft: RandomSFT, c) -> "LocallyConstantPotential":
        vals = np.broadcast_to(np.asarray(c, dtype=float), (sft.env.size,))
        return cls(0, tuple(np.array(v) for v in vals))

    @classmethod
    def from_symbol_values(cls, sft: RandomSFT, values) -> "LocallyConstantPotential":
        """Range-1 potential; ``values[k][s]`` is the value on symbol ``s`` at state ``k``.

        A single flat sequence is reused on every fiber.
        """
        m = sft.env.size
        if len(values) and np.ndim(values[0]) == 0:
            values = [values] * m
        if len(values) != m:
            raise InvalidArgument(f"expected symbol values for {m} states")
        tabs = []
        for k, v in enumerate(values):
            v = np.asarray(v, dtype=float)
            if v.shape != (sft.alphabet_size(k),):
                raise InvalidArgument(f"state {k}: expected {sft.alphabet_size(k)} symbol values")
            tabs.append(v)
        return cls(1, tuple(tabs))

    @classmethod
    def from_function(
        cls, sft: RandomSFT, r: int, fn: Callable[[int, tuple[int, ...]], float]
    ) -> "LocallyConstantPotential":
        """Tabulate ``fn(state, word)`` on every admissible word of length ``r``."""
        tabs = []
        for k in range(sft.env.size):
            shape = tuple(sft.alphabet_size(sft.env.advance(k, i)) for i in range(r))
            t = np.zeros(shape)
            if r == 0:
                t = np.array(float(fn(k, ())))
            else:
                for w in sft.words(k, r):
                    t[w] = float(fn(k, w))
            tabs.append(t)
        return cls(r, tuple(tabs))

    @classmethod
    def from_entries(
        cls, sft: RandomSFT, r: int, entries: Iterable[tuple[int, Sequence[int], float]], default: float = 0.0
    ) -> "LocallyConstantPotential":
        """Build from sparse ``(state, word, value)`` triples; missing words get ``default``."""
        tabs = []
        for k in range(sft.env.size):
            shape = tuple(sft.alphabet_size(sft.env.advance(k, i)) for i in range(r))
            tabs.append(np.full(shape, float(default)))
        for k, word, value in entries:
            word = tuple(int(s) for s in word)
            if len(word) != r:
                raise InvalidArgument(f"entry word {word} has length {len(word)}, expected {r}")
            if not sft.is_admissible(k, word):
                raise InvalidArgument(f"entry word {word} is not admissible at state {k}")
            tabs[k][word] = float(value)
        return cls(r, tuple(tabs))

    # -- evaluation -------------------------------------------------------

    def value(self, k: int, word: Sequence[int]) -> float:
        """Value at state ``k`` on a point whose first ``r`` symbols are ``word[:r]``."""
        return float(self.tables[k][tuple(word[: self.range])])

    def check_against(self, sft: RandomSFT) -> None:
        if len(self.tables) != sft.env.size:
            raise InvalidArgument(f"potential has {len(self.tables)} fibers, system has {sft.env.size}")
        for k, t in enumerate(self.tables):
            shape = tuple(sft.alphabet_size(sft.env.advance(k, i)) for i in range(self.range))
            if t.shape != shape:
                raise InvalidArgument(f"state {k}: potential table shape {t.shape}, expected {shape}")

    def reduced(self, sft: RandomSFT, tol: float = 1e-12) -> "LocallyConstantPotential":
        """Drop trailing coordinates the tables provably do not depend on."""
        pot = self
        while pot.range >= 1:
            r = pot.range
            new = []
            for k in range(sft.env.size):
                shape = tuple(sft.alphabet_size(sft.env.advance(k, i)) for i in range(r - 1))
                t = np.zeros(shape)
                seen = np.zeros(shape, dtype=bool)
                for w in sft.words(k, r):
                    v = pot.tables[k][w]
                    head = w[:-1]
                    if not seen[head]:
                        t[head] = v
                        seen[head] = True
                    elif abs(t[head] - v) > tol * max(1.0, abs(v)):
                        return pot
                new.append(t)
            pot = LocallyConstantPotential(r - 1, tuple(new))
        return pot

    def shifted(self, other: "LocallyConstantPotential") -> "LocallyConstantPotential":
        """Pointwise sum with another potential (ranges are aligned by broadcasting)."""
        r = max(self.range, other.range)
        tabs = []
        for a, b in zip(self.tables, other.tables):
            a = a.reshape(a.shape + (1,) * (r - a.ndim))
            b = b.reshape(b.shape + (1,) * (r - b.ndim))
            tabs.append(a + b)
        return LocallyConstantPotential(r, tuple(tabs))


def _require_admissible(sft: RandomSFT, k: int, w: Sequence[int]) -> None:
    if not sft.is_admissible(k, w):
        raise InvalidArgument(f"word {tuple(w)} is not admissible at state {k}")


def birkhoff_sum(phi: LocallyConstantPotential, sft: RandomSFT, k: int, w: Sequence[int]) -> float:
    """Sum of ``phi`` along ``w`` over the positions whose ``r``-window fits inside ``w``.

    For range at most 1 this is the full ``S_n phi`` on the cylinder ``[w]``.
    """
    n = len(w)
    if n < max(1, phi.range):
        raise InvalidArgument(f"word length {n} shorter than max(1, range={phi.range})")
    _require_admissible(sft, k, w)
    r = phi.range
    terms = n - max(r, 1) + 1
    return float(sum(phi.value(sft.env.advance(k, i), w[i : i + r]) for i in range(terms)))


def _cylinder_sums(phi, sft, k, w) -> list[float]:
    n = len(w)
    if n < 1:
        raise InvalidArgument("cylinder word must be nonempty")
    _require_admissible(sft, k, w)
    extra = max(phi.range - 1, 0)
    sums = []
    for tail in sft.extensions(k, w, extra):
        y = tuple(w) + tail
        sums.append(sum(phi.value(sft.env.advance(k, i), y[i : i + phi.range]) for i in range(n)))
    if not sums:
        raise StructuralError(f"word {tuple(w)} at state {k} has no admissible continuation")
    return sums


def sup_on_cylinder(phi: LocallyConstantPotential, sft: RandomSFT, k: int, w: Sequence[int]) -> float:
    """Exact supremum of ``S_n phi`` over the cylinder ``[w]`` at state ``k``."""
    return float(max(_cylinder_sums(phi, sft, k, w)))


def inf_on_cylinder(phi: LocallyConstantPotential, sft: RandomSFT, k: int, w: Sequence[int]) -> float:
    """Exact infimum of ``S_n phi`` over the cylinder ``[w]`` at state ``k``."""
    return float(min(_cylinder_sums(phi, sft, k, w)))


def variation(phi: LocallyConstantPotential, sft: RandomSFT, k: int, n: int) -> float:
    """``V_n``: largest oscillation of ``phi(k, .)`` over points agreeing on ``n`` coordinates."""
    if n < 0:
        raise InvalidArgument("n must be >= 0")
    r = phi.range
    if n >= r:
        return 0.0
    lo: dict[tuple, float] = {}
    hi: dict[tuple, float] = {}
    for w in sft.words(k, r):
        v = phi.tables[k][w]
        p = w[:n]
        lo[p] = min(lo.get(p, v), v)
        hi[p] = max(hi.get(p, v), v)
    return float(max(hi[p] - lo[p] for p in lo))


def variation_bound(phi: LocallyConstantPotential, sft: RandomSFT, k: int) -> float:
    """``B_1 = exp(sum_{j>=1} V_{j+1} at state k - j)``; at most ``r - 2`` nonzero terms."""
    total = 0.0
    for j in range(1, max(phi.range - 1, 0)):
        total += variation(phi, sft, sft.env.advance(k, -j), j + 1)
    return math.exp(total)


def kappa(phi: LocallyConstantPotential, sft: RandomSFT, k: int) -> float:
    """Hoelder constant with ``V_n <= kappa * 2**-n`` for every ``n >= 1``."""
    if phi.range <= 1:
        return 0.0
    return 2.0**phi.range * max(variation(phi, sft, k, n) for n in range(1, phi.range))


class NodeGraph:
    """Weighted graph on admissible words of length ``D = max(1, r - 1)``.

    ``nodes[k]`` lists the words at fiber ``k``.  ``logw[k][i, j]`` is the
    potential at fiber ``k`` on the cylinder ``nodes[k][i] + nodes[k+1][j][-1]``
    when ``nodes[k+1][j]`` continues ``nodes[k][i]``, else ``-inf``.
    """

    def __init__(self, sft: RandomSFT, phi: LocallyConstantPotential):
        phi.check_against(sft)
        self.sft = sft
        self.phi = phi
        self.depth = max(1, phi.range - 1)
        env = sft.env
        m = env.size
        D = self.depth
        self.nodes = [list(sft.words(k, D)) for k in range(m)]
        self.index = [{u: i for i, u in enumerate(ns)} for ns in self.nodes]
        self.logw: list[np.ndarray] = []
        for k in range(m):
            nxt = env.advance(k)
            W = np.full((len(self.nodes[k]), len(self.nodes[nxt])), -np.inf)
            A_last = sft.matrix(env.advance(k, D - 1))
            for i, u in enumerate(self.nodes[k]):
                for s in np.flatnonzero(A_last[u[-1]]):
                    v = u[1:] + (int(s),)
                    j = self.index[nxt][v]
                    W[i, j] = phi.value(k, u + (int(s),))
            self.logw.append(W)
        self.first = [np.array([u[0] for u in ns], dtype=np.int64) for ns in self.nodes]
        self.last = [np.array([u[-1] for u in ns], dtype=np.int64) for ns in self.nodes]

    @cached_property
    def linear(self) -> list[np.ndarray]:
        return [np.exp(W) for W in self.logw]

    def size(self, k: int) -> int:
        return len(self.nodes[k])

    def tails(self, steps: int, best: str = "max") -> list[np.ndarray]:
        """Per fiber, largest (or smallest) total weight over ``steps`` further edges from each node."""
        env = self.sft.env
        m = env.size
        cur = [np.zeros(self.size(k)) for k in range(m)]
        for _ in range(steps):
            nxt = []
            for k in range(m):
                S = self.logw[k] + cur[env.advance(k)][None, :]
                if best == "max":
                    nxt.append(S.max(axis=1))
                else:
                    nxt.append(np.where(np.isfinite(S), S, np.inf).min(axis=1))
            cur = nxt
        return cur

    def end_mask(self, k: int, b: int) -> np.ndarray:
        """Nodes at fiber ``k`` whose last symbol may be followed by ``b``."""
        D = self.depth
        env = self.sft.env
        A = self.sft.matrix(env.advance(k, D - 1))
        if not 0 <= b < A.shape[1]:
            raise InvalidArgument(f"symbol {b} not in the alphabet after state {env.advance(k, D - 1)}")
        return A[self.last[k], b] == 1
