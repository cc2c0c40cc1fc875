"""Group extensions of a random shift and their partition functions.

A :class:`SkewLabeling` assigns a group element to every symbol of every fiber;
the extension moves the group coordinate by right multiplication with the
label of the current symbol.  Counting words whose label product hits a target
element is a dynamic program over ``(node, group element)`` states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .env_sft import RandomSFT, check_topological_mixing
from .errors import BudgetExceeded, EstimationError, InvalidArgument, MixingError
from .groups import Element, Group
from .potential import LocallyConstantPotential, NodeGraph, sup_on_cylinder

DEFAULT_BUDGET = 5 * 10**7


@dataclass(frozen=True, eq=False)
class SkewLabeling:
    """``labels[k][s]`` is the group element attached to symbol ``s`` at state ``k``."""

    group: Group
    labels: tuple[tuple[Element, ...], ...]

    @classmethod
    def build(cls, sft: RandomSFT, group: Group, rows: Sequence[Sequence]) -> "SkewLabeling":
        """Parse one row of labels per state."""
        if len(rows) != sft.env.size:
            raise InvalidArgument(f"expected labels for {sft.env.size} states, got {len(rows)}")
        lab = cls(group, tuple(tuple(group.parse(x) for x in row) for row in rows))
        lab.check_against(sft)
        return lab

    @classmethod
    def uniform(cls, sft: RandomSFT, group: Group, row: Sequence) -> "SkewLabeling":
        """Same symbol labels on every fiber."""
        return cls.build(sft, group, [row] * sft.env.size)

    @classmethod
    def trivial(cls, sft: RandomSFT, group: Group) -> "SkewLabeling":
        e = group.identity()
        return cls(group, tuple((e,) * sft.alphabet_size(k) for k in range(sft.env.size)))

    def check_against(self, sft: RandomSFT) -> None:
        if len(self.labels) != sft.env.size:
            raise InvalidArgument(f"labeling covers {len(self.labels)} states, system has {sft.env.size}")
        for k, row in enumerate(self.labels):
            if len(row) != sft.alphabet_size(k):
                raise InvalidArgument(
                    f"state {k}: {len(row)} labels for an alphabet of size {sft.alphabet_size(k)}"
                )

    def label(self, k: int, s: int) -> Element:
        return self.labels[k][s]

    @property
    def max_length(self) -> int:
        return max(self.group.word_length(g) for row in self.labels for g in row)

    def abelianized(self) -> "SkewLabeling":
        ab = self.group.abelianization()
        return SkewLabeling(ab, tuple(tuple(self.group.abelianize(g) for g in row) for row in self.labels))

    def negated(self) -> "SkewLabeling":
        return SkewLabeling(self.group, tuple(tuple(self.group.inv(g) for g in row) for row in self.labels))


def cocycle(labeling: SkewLabeling, sft: RandomSFT, k: int, w: Sequence[int]) -> Element:
    """Ordered label product ``psi_k(w_0) psi_{k+1}(w_1) ... psi_{k+n-1}(w_{n-1})``."""
    if not sft.is_admissible(k, w):
        raise InvalidArgument(f"word {tuple(w)} is not admissible at state {k}")
    G = labeling.group
    g = G.identity()
    for i, s in enumerate(w):
        g = G.mul(g, labeling.label(sft.env.advance(k, i), s))
    return g


def _check_symbol(sft: RandomSFT, k: int, s: int, what: str) -> None:
    if isinstance(s, bool) or not isinstance(s, (int, np.integer)) or not 0 <= s < sft.alphabet_size(k):
        raise InvalidArgument(f"{what} symbol {s!r} not in the alphabet of state {k}")


def _is_zero(phi: LocallyConstantPotential) -> bool:
    return all(not np.any(t) for t in phi.tables)


# -- unconstrained partition function ----------------------------------------


def partition_series(
    sft: RandomSFT, phi: LocallyConstantPotential, k: int, a: int, n_max: int, b: int | None = None
) -> np.ndarray:
    """``log Z_n(a, b)`` for ``n = 1..n_max`` (index ``n - 1``); ``b`` defaults to ``a``.

    Entries are ``nan`` where ``b`` is not a symbol of the fiber reached after ``n`` steps.
    """
    _check_symbol(sft, k, a, "start")
    b = a if b is None else b
    graph = NodeGraph(sft, phi)
    env = sft.env
    D = graph.depth
    tails = graph.tails(D)
    out = np.full(n_max, np.nan)
    for n in range(1, min(D, n_max + 1)):
        if 0 <= b < sft.alphabet_size(env.advance(k, n)):
            out[n - 1] = _brute_partition(sft, phi, k, n, a, b)
    v = np.where(graph.first[k] == a, 0.0, -np.inf)
    fiber = k
    for t in range(0, n_max - D + 1):
        n = t + D
        if n >= 1 and 0 <= b < sft.alphabet_size(env.advance(k, n)):
            mask = graph.end_mask(fiber, b)
            vals = v + tails[fiber]
            out[n - 1] = logsumexp(vals[mask]) if mask.any() else -np.inf
        if t < n_max - D:
            v = logsumexp(v[:, None] + graph.logw[fiber], axis=0)
            fiber = env.advance(fiber)
    return out


def _brute_partition(sft, phi, k, n, a, b) -> float:
    last = sft.matrix(sft.env.advance(k, n - 1))
    terms = [sup_on_cylinder(phi, sft, k, w) for w in sft.words(k, n, first=a) if last[w[-1], b]]
    return float(logsumexp(terms)) if terms else -math.inf


def partition_function(sft: RandomSFT, phi: LocallyConstantPotential, k: int, n: int, a: int, b: int) -> float:
    """``log Z_n(a, b)`` at state ``k``: sup-weighted sum over words from ``a`` that may be followed by ``b``.

    Returns ``-inf`` when no such word exists.
    """
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    _check_symbol(sft, k, a, "start")
    _check_symbol(sft, sft.env.advance(k, n), b, "end")
    return float(partition_series(sft, phi, k, a, n, b)[n - 1])


# -- constrained partition function -------------------------------------------


@dataclass
class ConstrainedPartitionTable:
    """Per-``n`` maps ``(end symbol, group element) -> log-weight``.

    When built with pruning toward ``target``, the entry for an element ``g``
    at step ``n`` is exact whenever ``dist(g, target) <= (n_max - n) * max_label_length``,
    in particular for ``g = target`` at every ``n``.
    """

    state: int
    start_symbol: int
    target: Element
    truncation: int
    n_max: int
    pruned: bool
    layers: list[dict[tuple[int, Element], float]]
    counts: list[dict[tuple[int, Element], int]] | None
    overflow: bool = False
    overflow_steps: list[int] = field(default_factory=list)
    peak_states: int = 0

    def _select(self, n, b, g, table):
        if not 1 <= n <= self.n_max:
            raise InvalidArgument(f"n={n} outside the table range 1..{self.n_max}")
        return [val for (e, h), val in table[n - 1].items() if (g is None or h == g) and (b is None or b(e))]

    def log_value(self, sft: RandomSFT, n: int, b: int | None = None, g: Element | None = None) -> float:
        """``log`` of the weight of words of length ``n`` (ending compatibly with ``b``) with cocycle ``g``."""
        g = self.target if g is None else g
        vals = self._select(n, self._end_filter(sft, n, b), g, self.layers)
        return float(logsumexp(vals)) if vals else -math.inf

    def count(self, sft: RandomSFT, n: int, b: int | None = None, g: Element | None = None) -> int:
        if self.counts is None:
            raise InvalidArgument("exact counts are only kept for the zero potential")
        g = self.target if g is None else g
        return int(sum(self._select(n, self._end_filter(sft, n, b), g, self.counts)))

    def support(self, sft: RandomSFT, n: int, b: int | None = None) -> set:
        f = self._end_filter(sft, n, b)
        return {h for (e, h) in self.layers[n - 1] if f is None or f(e)}

    def _end_filter(self, sft, n, b):
        if b is None:
            return None
        env = sft.env
        A = sft.matrix(env.advance(self.state, n - 1))
        if not 0 <= b < A.shape[1]:
            raise InvalidArgument(f"end symbol {b} not in the alphabet of state {env.advance(self.state, n)}")
        return lambda e: A[e, b] == 1


def predict_states(sft: RandomSFT, labeling: SkewLabeling, phi: LocallyConstantPotential, n_max: int, L: int) -> int:
    """Upper bound on DP states in one layer: nodes times the reachable ball."""
    D = max(1, phi.range - 1)
    nodes = max(sum(1 for _ in sft.words(k, D)) for k in range(sft.env.size))
    radius = min(L, n_max * labeling.max_length)
    return nodes * labeling.group.ball_size(radius)


def constrained_table(
    sft: RandomSFT,
    labeling: SkewLabeling,
    phi: LocallyConstantPotential,
    k: int,
    a: int,
    n_max: int,
    L: int,
    target: Element | None = None,
    prune: bool = True,
    budget: int = DEFAULT_BUDGET,
) -> ConstrainedPartitionTable:
    """Forward DP over ``(node, group element)`` states for ``n = 1..n_max``.

    States whose group element leaves ``ball(L)`` are dropped and the overflow
    flag is raised.  With ``prune`` set, states that cannot return to
    ``target`` within the remaining steps are discarded.
    """
    labeling.check_against(sft)
    _check_symbol(sft, k, a, "start")
    if n_max < 1:
        raise InvalidArgument("n_max must be >= 1")
    if L < 0:
        raise InvalidArgument("truncation must be >= 0")
    G = labeling.group
    target = G.identity() if target is None else G.parse(target) if isinstance(target, str) else target
    predicted = predict_states(sft, labeling, phi, n_max, L)
    if predicted > budget:
        raise BudgetExceeded(
            f"constrained DP would need up to {predicted} states per layer (budget {budget})", predicted, budget
        )
    graph = NodeGraph(sft, phi)
    env = sft.env
    D = graph.depth
    tails = graph.tails(D)
    exact = _is_zero(phi)
    maxlen = labeling.max_length
    e = G.identity()

    table = ConstrainedPartitionTable(
        state=k, start_symbol=a, target=target, truncation=L, n_max=n_max, pruned=prune,
        layers=[dict() for _ in range(n_max)], counts=[dict() for _ in range(n_max)] if exact else None,
    )

    def note_overflow(n):
        table.overflow = True
        if n not in table.overflow_steps:
            table.overflow_steps.append(n)

    # words shorter than the node depth are enumerated directly
    for n in range(1, min(D, n_max + 1)):
        for w in sft.words(k, n, first=a):
            g = cocycle(labeling, sft, k, w)
            if G.word_length(g) > L:
                note_overflow(n)
                continue
            key = (w[-1], g)
            val = sup_on_cylinder(phi, sft, k, w)
            lay = table.layers[n - 1]
            lay[key] = np.logaddexp(lay[key], val) if key in lay else val
            if exact:
                table.counts[n - 1][key] = table.counts[n - 1].get(key, 0) + 1

    def suffix(fiber, u):
        g = e
        for i, s in enumerate(u):
            g = G.mul(g, labeling.label(env.advance(fiber, i), s))
        return g

    sufcache: list[dict[int, Element]] = [dict() for _ in range(env.size)]

    cur: dict[tuple[int, Element], float] = {(i, e): 0.0 for i in np.flatnonzero(graph.first[k] == a).tolist()}
    cnt: dict[tuple[int, Element], int] | None = {key: 1 for key in cur} if exact else None
    fiber = k
    for t in range(0, n_max - D + 1):
        n = t + D
        table.peak_states = max(table.peak_states, len(cur))
        if n >= 1:
            lay = table.layers[n - 1]
            lc = table.counts[n - 1] if exact else None
            sc = sufcache[fiber]
            tl = tails[fiber]
            for (i, g), val in cur.items():
                if i not in sc:
                    sc[i] = suffix(fiber, graph.nodes[fiber][i])
                h = G.mul(g, sc[i])
                if G.word_length(h) > L:
                    note_overflow(n)
                    continue
                key = (graph.nodes[fiber][i][-1], h)
                v = val + tl[i]
                lay[key] = np.logaddexp(lay[key], v) if key in lay else v
                if exact:
                    lc[key] = lc.get(key, 0) + cnt[(i, g)]
        if t == n_max - D:
            break
        W = graph.logw[fiber]
        nxt_fiber = env.advance(fiber)
        horizon = (n_max - t - 1) * maxlen
        new: dict[tuple[int, Element], float] = {}
        newc: dict[tuple[int, Element], int] | None = {} if exact else None
        succ_cache: dict[int, np.ndarray] = {}
        for (i, g), val in cur.items():
            h = G.mul(g, labeling.label(fiber, graph.nodes[fiber][i][0]))
            if G.word_length(h) > L:
                note_overflow(t + 1 + D)
                continue
            if prune and G.dist(h, target) > horizon:
                continue
            if i not in succ_cache:
                succ_cache[i] = np.flatnonzero(np.isfinite(W[i]))
            for j in succ_cache[i].tolist():
                key = (j, h)
                v = val + W[i, j]
                new[key] = np.logaddexp(new[key], v) if key in new else v
                if exact:
                    newc[key] = newc.get(key, 0) + cnt[(i, g)]
        cur, cnt = new, newc
        fiber = nxt_fiber
    table.overflow_steps.sort()
    return table


def constrained_partition(
    sft: RandomSFT,
    labeling: SkewLabeling,
    phi: LocallyConstantPotential,
    k: int,
    n: int,
    a: int,
    b: int,
    target: Element | str | None = None,
    L: int | None = None,
    budget: int = DEFAULT_BUDGET,
) -> float:
    """``log`` of the sup-weighted sum over words from ``a`` ending compatibly with ``b`` whose cocycle is ``target``.

    ``L`` defaults to ``n * max_label_length`` which makes the result exact.
    """
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    _check_symbol(sft, sft.env.advance(k, n), b, "end")
    G = labeling.group
    g = G.identity() if target is None else G.parse(target)
    L = n * labeling.max_length if L is None else L
    tab = constrained_table(sft, labeling, phi, k, a, n, L, target=g, budget=budget)
    return tab.log_value(sft, n, b, g)


def reachable_group_elements(
    sft: RandomSFT,
    labeling: SkewLabeling,
    k: int,
    n: int,
    a: int,
    b: int | None = None,
    L: int | None = None,
) -> set:
    """Cocycle values of words of length ``n`` from ``a`` (ending compatibly with ``b`` when given)."""
    L = n * labeling.max_length if L is None else L
    phi = LocallyConstantPotential.zero(sft)
    tab = constrained_table(sft, labeling, phi, k, a, n, L, prune=False)
    return tab.support(sft, n, b)


# -- growth-rate estimation ---------------------------------------------------


@dataclass(frozen=True)
class StateFit:
    state: int
    slope: float
    stderr: float
    points: int
    skipped: tuple[int, ...]


@dataclass(frozen=True)
class GurevichEstimate:
    value: float
    stderr: float
    window: tuple[int, int]
    correction: float
    fits: tuple[StateFit, ...]

    @property
    def skipped(self) -> dict[int, tuple[int, ...]]:
        return {f.state: f.skipped for f in self.fits if f.skipped}


def gurevich_estimate(
    series: Mapping[int, Mapping[int, float]],
    window: tuple[int, int],
    correction: float | None = None,
    weights: Mapping[int, float] | None = None,
    min_points: int = 4,
) -> GurevichEstimate:
    """Weighted average over states of the least-squares slope of ``log Z_n + c log n`` against ``n``.

    Parameters
    ----------
    series
        ``series[state][n] = log Z_n``; ``-inf`` entries (empty sums) are skipped
        and reported, which restricts the fit to the progression that carries
        mass when the constraint forces periodicity.
    window
        Inclusive ``(n_min, n_max)``.
    correction
        Exponent ``c`` of the polynomial prefactor ``n^-c``; ``None`` or 0 disables it.
    weights
        Per-state weights, renormalized over the states present.  Uniform by default.
    """
    n_lo, n_hi = int(window[0]), int(window[1])
    if n_lo > n_hi:
        raise InvalidArgument(f"empty window {window}")
    c = float(correction or 0.0)
    if not series:
        raise EstimationError("no series supplied")
    fits = []
    for state in sorted(series):
        pts = [(n, y) for n, y in series[state].items() if n_lo <= n <= n_hi]
        skipped = tuple(sorted(n for n, y in pts if not np.isfinite(y)))
        pts = sorted((n, y) for n, y in pts if np.isfinite(y))
        if len(pts) < min_points:
            raise EstimationError(
                f"state {state}: {len(pts)} usable points in window [{n_lo},{n_hi}], need {min_points}"
            )
        ns = np.array([p[0] for p in pts], dtype=float)
        ys = np.array([p[1] for p in pts]) + c * np.log(ns)
        X = np.column_stack([np.ones_like(ns), ns])
        coef, *_ = np.linalg.lstsq(X, ys, rcond=None)
        resid = ys - X @ coef
        ssr = float(resid @ resid)
        sxx = float(((ns - ns.mean()) ** 2).sum())
        se = math.sqrt(ssr / (len(ns) - 2) / sxx)
        fits.append(StateFit(state, float(coef[1]), se, len(pts), skipped))
    w = np.array([1.0 if weights is None else float(weights[f.state]) for f in fits])
    w = w / w.sum()
    value = float(sum(wi * f.slope for wi, f in zip(w, fits)))
    stderr = float(math.sqrt(sum((wi * f.stderr) ** 2 for wi, f in zip(w, fits))))
    return GurevichEstimate(value, stderr, (n_lo, n_hi), c, tuple(fits))


def gurevich_series(
    sft: RandomSFT,
    phi: LocallyConstantPotential,
    a: int,
    n_max: int,
    labeling: SkewLabeling | None = None,
    L: int | None = None,
    budget: int = DEFAULT_BUDGET,
    overflow: dict[int, list[int]] | None = None,
) -> dict[int, dict[int, float]]:
    """Per state containing ``a``: ``n -> log Z_n(a, a)`` for returns ``n <= n_max`` to states containing ``a``.

    Without a labeling the sum is unconstrained; with one it is restricted to
    words whose cocycle is the identity.  When ``overflow`` is a dict it
    receives, per state, the lengths at which truncation dropped states.
    """
    env = sft.env
    out: dict[int, dict[int, float]] = {}
    for k in range(env.size):
        if a >= sft.alphabet_size(k):
            continue
        returns = [n for n in range(1, n_max + 1) if a < sft.alphabet_size(env.advance(k, n))]
        if labeling is None:
            vals = partition_series(sft, phi, k, a, n_max, a)
            out[k] = {n: float(vals[n - 1]) for n in returns}
        else:
            Lk = n_max * labeling.max_length if L is None else L
            tab = constrained_table(sft, labeling, phi, k, a, n_max, Lk, budget=budget)
            out[k] = {n: tab.log_value(sft, n, a) for n in returns}
            if overflow is not None:
                overflow[k] = list(tab.overflow_steps)
    if not out:
        raise InvalidArgument(f"symbol {a} is absent from every fiber")
    return out


def state_weights(sft: RandomSFT, a: int) -> dict[int, float]:
    """Environment weights restricted to the states containing ``a``, renormalized."""
    ks = [k for k in range(sft.env.size) if a < sft.alphabet_size(k)]
    tot = sum(sft.env.weights[k] for k in ks)
    return {k: float(sft.env.weights[k] / tot) for k in ks}


def certify_mixing(
    sft: RandomSFT, labeling: SkewLabeling, a: int, n_max: int, tests: Iterable[Element] | None = None
) -> dict:
    """Check that the base mixes and that each test element is a cocycle value of some ``a``-to-``a`` return.

    Defaults to the identity plus the group generators.  Raises
    :class:`MixingError` listing what was not reached.
    """
    G = labeling.group
    tests = [G.identity()] + G.generators() if tests is None else list(tests)
    n0 = check_topological_mixing(sft, n_max)
    if n0 is None:
        raise MixingError(f"base system is not certified mixing up to n={n_max}")
    L = n_max * labeling.max_length
    reached: dict[int, dict] = {}
    missing = []
    for k in range(sft.env.size):
        if a >= sft.alphabet_size(k):
            continue
        phi = LocallyConstantPotential.zero(sft)
        tab = constrained_table(sft, labeling, phi, k, a, n_max, L, prune=False)
        first: dict = {}
        for n in range(1, n_max + 1):
            if a >= sft.alphabet_size(sft.env.advance(k, n)):
                continue
            supp = tab.support(sft, n, a)
            for g in tests:
                if g in supp and g not in first:
                    first[g] = n
        reached[k] = {G.serialize(g): first.get(g) for g in tests}
        missing += [(k, G.serialize(g)) for g in tests if g not in first]
    if missing:
        raise MixingError(f"elements never reached by returns up to n={n_max}: {missing}")
    return {"base_mixing_from": n0, "first_hit": reached}


@dataclass(frozen=True)
class GapResult:
    h_T: GurevichEstimate
    h_Tab: GurevichEstimate
    gap: float
    stderr: float
    diagnostics: dict


def entropy_gap_experiment(
    sft: RandomSFT,
    labeling: SkewLabeling,
    phi: LocallyConstantPotential | None = None,
    a: int = 0,
    window: tuple[int, int] = (8, 14),
    L: int | None = None,
    correction: float | None = None,
    correction_ab: float | None = None,
    certify_n: int | None = None,
    budget: int = DEFAULT_BUDGET,
) -> GapResult:
    """Growth rates of identity returns in the extension and in its abelianization.

    Correction exponents default to the group's own counting exponent.
    Raises :class:`EstimationError` if the abelian rate falls below the
    group rate by more than the combined standard error, which the nesting
    of the two constraints forbids.
    """
    phi = LocallyConstantPotential.zero(sft) if phi is None else phi
    n_max = int(window[1])
    mix = certify_mixing(sft, labeling, a, certify_n or min(n_max, 8))
    ab = labeling.abelianized()
    c_T = labeling.group.counting_exponent if correction is None else correction
    c_ab = ab.group.counting_exponent if correction_ab is None else correction_ab
    weights = state_weights(sft, a)
    of_T: dict[int, list[int]] = {}
    of_ab: dict[int, list[int]] = {}
    s_T = gurevich_series(sft, phi, a, n_max, labeling, L, budget, of_T)
    if labeling.group.is_abelian and labeling.group == ab.group:
        s_ab, of_ab = s_T, of_T
    else:
        s_ab = gurevich_series(sft, phi, a, n_max, ab, L, budget, of_ab)
    e_T = gurevich_estimate(s_T, window, c_T, weights)
    e_ab = gurevich_estimate(s_ab, window, c_ab, weights)
    gap = e_ab.value - e_T.value
    se = math.hypot(e_T.stderr, e_ab.stderr)
    if gap < -se - 1e-12:
        raise EstimationError(f"abelianized rate {e_ab.value} below group rate {e_T.value} beyond stderr {se}")
    diag = {"mixing": mix, "series_T": s_T, "series_ab": s_ab, "weights": weights,
            "overflow_T": of_T, "overflow_ab": of_ab}
    return GapResult(e_T, e_ab, gap, se, diag)
