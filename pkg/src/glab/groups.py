"""Countable groups used as extension fibers.

Three families are provided: the lattice ``Z^d`` with the l1 word metric, the
free group ``F_k`` on ``k`` generators and the finite cyclic group ``Z/q``.
Elements are plain hashable Python values (int tuples or ints) so they can key
dictionaries directly.

:class:`BallIndex` enumerates the ball of radius ``L`` once and exposes
right-multiplication lookup tables, which is what the dense operator loops in
:mod:`glab._kernels` consume.
"""

from __future__ import annotations

import math
import re
import string
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Hashable, Iterable, Mapping, Sequence

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal
from scipy.optimize import brentq

from . import _kernels
from .errors import InvalidArgument

Element = Hashable


class Group:
    """Interface shared by the concrete groups."""

    kind: str = ""

    # subclasses implement these
    def identity(self) -> Element: ...
    def mul(self, g: Element, h: Element) -> Element: ...
    def inv(self, g: Element) -> Element: ...
    def word_length(self, g: Element) -> int: ...
    def generators(self) -> list[Element]: ...
    def serialize(self, g: Element) -> str: ...
    def parse(self, obj: Any) -> Element: ...
    def abelianization(self) -> "Group": ...
    def abelianize(self, g: Element) -> Element: ...
    def ball_size(self, L: int) -> int: ...
    def spec(self) -> dict: ...

    def eq(self, g: Element, h: Element) -> bool:
        return g == h

    def dist(self, g: Element, h: Element) -> int:
        """Word metric ``|g^-1 h|``."""
        return self.word_length(self.mul(self.inv(g), h))

    def product(self, elems: Iterable[Element]) -> Element:
        out = self.identity()
        for g in elems:
            out = self.mul(out, g)
        return out

    @property
    def is_abelian(self) -> bool:
        return True

    @property
    def counting_exponent(self) -> float:
        """Default polynomial exponent ``c`` in return counts ``~ C n^-c rho^n``."""
        return 0.0

    def ball(self, L: int) -> list[Element]:
        return BallIndex(self, L).elements()

    def random_element(self, rng: np.random.Generator, L: int) -> Element:
        gens = self.generators()
        g = self.identity()
        for _ in range(int(rng.integers(0, L + 1))):
            g = self.mul(g, gens[int(rng.integers(len(gens)))])
        return g

    def __eq__(self, other):
        return type(self) is type(other) and self.spec() == other.spec()

    def __hash__(self):
        return hash((type(self).__name__, tuple(sorted(self.spec()["params"].items()))))

    def __repr__(self):
        p = ", ".join(f"{k}={v}" for k, v in self.spec()["params"].items())
        return f"{type(self).__name__}({p})"


def _check_positive_int(name, v, minimum=1):
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < minimum:
        raise InvalidArgument(f"{name} must be an integer >= {minimum}, got {v!r}")
    return int(v)


class Lattice(Group):
    """``Z^d`` with the standard generators; elements are ``d``-tuples of ints."""

    kind = "lattice"

    def __init__(self, d: int):
        self.d = _check_positive_int("d", d)

    def identity(self):
        return (0,) * self.d

    def mul(self, g, h):
        return tuple(a + b for a, b in zip(g, h))

    def inv(self, g):
        return tuple(-a for a in g)

    def word_length(self, g):
        return sum(abs(a) for a in g)

    def generators(self):
        out = []
        for i in range(self.d):
            for sgn in (1, -1):
                e = [0] * self.d
                e[i] = sgn
                out.append(tuple(e))
        return out

    def serialize(self, g):
        return "(" + ",".join(str(a) for a in g) + ")"

    def parse(self, obj):
        if isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
            vals = [int(obj)]
        elif isinstance(obj, str):
            s = obj.strip()
            if s in ("e", "id", ""):
                return self.identity()
            s = s.strip("()[] ")
            try:
                vals = [int(x) for x in s.split(",") if x.strip()]
            except ValueError as exc:
                raise InvalidArgument(f"cannot parse lattice element {obj!r}") from exc
        elif isinstance(obj, (list, tuple)):
            vals = list(obj)
            if not all(isinstance(x, (int, np.integer)) and not isinstance(x, bool) for x in vals):
                raise InvalidArgument(f"lattice element must be integers, got {obj!r}")
            vals = [int(x) for x in vals]
        else:
            raise InvalidArgument(f"cannot parse lattice element {obj!r}")
        if len(vals) != self.d:
            raise InvalidArgument(f"lattice element {obj!r} has dimension {len(vals)}, expected {self.d}")
        return tuple(vals)

    def abelianization(self):
        return self

    def abelianize(self, g):
        return g

    def ball_size(self, L):
        return sum(2**i * math.comb(self.d, i) * math.comb(L, i) for i in range(min(self.d, L) + 1))

    @property
    def counting_exponent(self):
        return self.d / 2

    def spec(self):
        return {"type": "lattice", "params": {"d": self.d}}


class FreeGroup(Group):
    """``F_k``; elements are reduced tuples of nonzero ints, ``+i`` / ``-i`` for ``a_i^{+-1}``."""

    kind = "free"

    def __init__(self, k: int):
        self.k = _check_positive_int("k", k)
        if self.k <= 26:
            self.names = list(string.ascii_lowercase[: self.k])
        else:
            self.names = [f"x{i + 1}" for i in range(self.k)]
        self._by_name = {n: i + 1 for i, n in enumerate(self.names)}

    def identity(self):
        return ()

    def mul(self, g, h):
        out = list(g)
        for x in h:
            if out and out[-1] == -x:
                out.pop()
            else:
                out.append(x)
        return tuple(out)

    def inv(self, g):
        return tuple(-x for x in reversed(g))

    def word_length(self, g):
        return len(g)

    def generators(self):
        out = []
        for i in range(1, self.k + 1):
            out += [(i,), (-i,)]
        return out

    def serialize(self, g):
        if not g:
            return "e"
        runs = []
        for x in g:
            if runs and runs[-1][0] == x:
                runs[-1][1] += 1
            else:
                runs.append([x, 1])
        parts = []
        for x, c in runs:
            e = c if x > 0 else -c
            name = self.names[abs(x) - 1]
            parts.append(name if e == 1 else f"{name}^{e}")
        return " ".join(parts)

    _TOKEN = re.compile(r"^([A-Za-z][A-Za-z0-9]*)(?:\^(-?\d+))?$")

    def parse(self, obj):
        if isinstance(obj, (list, tuple)):
            letters = []
            for x in obj:
                if isinstance(x, bool) or not isinstance(x, (int, np.integer)) or not 1 <= abs(x) <= self.k:
                    raise InvalidArgument(f"bad free-group letter {x!r}")
                letters.append(int(x))
            return self.mul((), tuple(letters))
        if not isinstance(obj, str):
            raise InvalidArgument(f"cannot parse free-group element {obj!r}")
        s = obj.strip()
        if s in ("", "e", "id"):
            return ()
        letters = []
        for tok in s.replace("*", " ").split():
            m = self._TOKEN.match(tok)
            if not m or m.group(1) not in self._by_name:
                raise InvalidArgument(f"cannot parse free-group token {tok!r} in {obj!r}")
            x = self._by_name[m.group(1)]
            e = int(m.group(2)) if m.group(2) is not None else 1
            letters += [x if e > 0 else -x] * abs(e)
        return self.mul((), tuple(letters))

    def abelianization(self):
        return Lattice(self.k)

    def abelianize(self, g):
        v = [0] * self.k
        for x in g:
            v[abs(x) - 1] += 1 if x > 0 else -1
        return tuple(v)

    def ball_size(self, L):
        if L == 0:
            return 1
        if self.k == 1:
            return 2 * L + 1
        q = 2 * self.k - 1
        return 1 + 2 * self.k * (q**L - 1) // (q - 1)

    @property
    def is_abelian(self):
        return self.k == 1

    @property
    def counting_exponent(self):
        return 0.5 if self.k == 1 else 1.5

    def spec(self):
        return {"type": "free", "params": {"k": self.k}}


class FiniteCyclic(Group):
    """``Z/q`` generated by ``1``; ``q = 1`` is the trivial group."""

    kind = "cyclic"

    def __init__(self, q: int):
        self.q = _check_positive_int("q", q)

    def identity(self):
        return 0

    def mul(self, g, h):
        return (g + h) % self.q

    def inv(self, g):
        return (-g) % self.q

    def word_length(self, g):
        return min(g, self.q - g)

    def generators(self):
        return sorted({1 % self.q, (-1) % self.q})

    def serialize(self, g):
        return str(g)

    def parse(self, obj):
        if isinstance(obj, str):
            s = obj.strip().strip("()[]")
            if s in ("e", "id", ""):
                return 0
            try:
                obj = int(s)
            except ValueError as exc:
                raise InvalidArgument(f"cannot parse cyclic element {obj!r}") from exc
        elif isinstance(obj, (list, tuple)) and len(obj) == 1:
            obj = obj[0]
        if isinstance(obj, bool) or not isinstance(obj, (int, np.integer)):
            raise InvalidArgument(f"cannot parse cyclic element {obj!r}")
        return int(obj) % self.q

    def abelianization(self):
        return self

    def abelianize(self, g):
        return g

    def ball_size(self, L):
        return min(self.q, 2 * L + 1)

    def spec(self):
        return {"type": "cyclic", "params": {"q": self.q}}


def group_from_spec(spec: Mapping) -> Group:
    if not isinstance(spec, Mapping) or "type" not in spec:
        raise InvalidArgument("group spec needs a 'type'")
    params = spec.get("params", {}) or {}
    t = spec["type"]
    try:
        if t == "lattice":
            return Lattice(params["d"])
        if t == "free":
            return FreeGroup(params["k"])
        if t == "cyclic":
            return FiniteCyclic(params["q"])
    except KeyError as exc:
        raise InvalidArgument(f"group spec of type {t!r} missing parameter {exc}") from exc
    raise InvalidArgument(f"unknown group type {t!r}")


def abelianize(group: Group, g: Element) -> Element:
    return group.abelianize(g)


def ball_size(group: Group, L: int) -> int:
    return group.ball_size(L)


# -- ball enumeration ------------------------------------------------------


class BallIndex:
    """Elements of word length ``<= L`` numbered in order of increasing length.

    ``count_upto[l]`` is the number of elements of length ``<= l``, so the
    indices ``[0, count_upto[l])`` form the sub-ball of radius ``l``.
    """

    def __init__(self, group: Group, L: int):
        if L < 0:
            raise InvalidArgument("ball radius must be >= 0")
        self.group = group
        self.L = int(L)
        if isinstance(group, FreeGroup):
            self._build_free()
        elif isinstance(group, Lattice) and (2 * L + 1) ** group.d <= 5 * 10**7:
            self._build_lattice()
        else:
            self._build_generic()

    # free group: parent pointers and one lookup table per letter
    def _build_free(self):
        k = self.group.k
        nl = 2 * k  # letter code 2i is a_{i+1}, 2i+1 its inverse
        sizes = [self.group.ball_size(l) for l in range(self.L + 1)]
        N = sizes[-1]
        parent = np.full(N, -1, dtype=np.int32)
        last = np.full(N, -1, dtype=np.int32)
        table = np.full((nl, N), -1, dtype=np.int32)
        lo, hi = 0, 1
        for _ in range(self.L):
            par = np.repeat(np.arange(lo, hi), nl)
            let = np.tile(np.arange(nl), hi - lo)
            # the identity has last letter -1, so nothing is excluded there
            keep = let != (last[par] ^ 1)
            par, let = par[keep], let[keep]
            idx = np.arange(hi, hi + len(par))
            parent[idx] = par
            last[idx] = let
            table[let, par] = idx
            table[let ^ 1, idx] = par
            lo, hi = hi, hi + len(par)
        assert hi == N
        self._parent = parent
        self._last = last
        self._letter_tables = table
        self.size = N
        self.count_upto = np.array(sizes, dtype=np.int64)
        self._elements = None
        self._index = None

    def _build_lattice(self):
        d, L = self.group.d, self.L
        grids = np.meshgrid(*[np.arange(-L, L + 1)] * d, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        norm = np.abs(pts).sum(axis=1)
        keep = norm <= L
        pts, norm = pts[keep], norm[keep]
        order = np.lexsort(tuple(pts[:, i] for i in reversed(range(d))) + (norm,))
        pts, norm = pts[order], norm[order]
        self._pts = pts
        self.size = len(pts)
        self.count_upto = np.array([np.count_nonzero(norm <= l) for l in range(L + 1)], dtype=np.int64)
        box = np.full((2 * L + 1,) * d, -1, dtype=np.int32)
        box[tuple((pts + L).T)] = np.arange(self.size)
        self._box = box
        self._elements = None
        self._index = None

    def _build_generic(self):
        g = self.group
        elems = [g.identity()]
        index = {elems[0]: 0}
        counts = [1]
        frontier = [elems[0]]
        for _ in range(self.L):
            nxt = []
            for x in frontier:
                for s in g.generators():
                    y = g.mul(x, s)
                    if y not in index:
                        index[y] = len(elems)
                        elems.append(y)
                        nxt.append(y)
            frontier = nxt
            counts.append(len(elems))
        self._elements = elems
        self._index = index
        self.size = len(elems)
        self.count_upto = np.array(counts, dtype=np.int64)

    # -- lookup ---------------------------------------------------------

    def __len__(self):
        return self.size

    def element(self, i: int) -> Element:
        if self._elements is not None:
            return self._elements[i]
        if isinstance(self.group, FreeGroup):
            letters = []
            while i > 0:
                c = int(self._last[i])
                letters.append((c // 2 + 1) * (1 if c % 2 == 0 else -1))
                i = int(self._parent[i])
            return tuple(reversed(letters))
        return tuple(int(x) for x in self._pts[i])

    def elements(self) -> list[Element]:
        if self._elements is None:
            self._elements = [self.element(i) for i in range(self.size)]
        return self._elements

    def index_of(self, g: Element) -> int:
        """Ball index of ``g`` or ``-1`` when ``|g| > L``."""
        if self._index is not None:
            return self._index.get(g, -1)
        if isinstance(self.group, FreeGroup):
            i = 0
            for x in g:
                c = 2 * (abs(x) - 1) + (0 if x > 0 else 1)
                i = int(self._letter_tables[c, i])
                if i < 0:
                    return -1
            return i
        if sum(abs(a) for a in g) > self.L:
            return -1
        return int(self._box[tuple(a + self.L for a in g)])

    def lengths(self) -> np.ndarray:
        out = np.zeros(self.size, dtype=np.int64)
        for l in range(1, self.L + 1):
            out[self.count_upto[l - 1] : self.count_upto[l]] = l
        return out

    def right_table(self, h: Element) -> np.ndarray:
        """``t[i]`` = index of ``element(i) * h`` or -1 outside the ball."""
        g = self.group
        if isinstance(g, FreeGroup):
            if len(h) == 1:
                x = h[0]
                return self._letter_tables[2 * (abs(x) - 1) + (0 if x > 0 else 1)]
            t = np.arange(self.size, dtype=np.int32)
            # a reduced right factor moves along a geodesic, so intermediate
            # products stay inside the ball whenever both endpoints do
            for x in h:
                c = 2 * (abs(x) - 1) + (0 if x > 0 else 1)
                ok = t >= 0
                t[ok] = self._letter_tables[c, t[ok]]
            return t
        if self._index is None:
            q = np.asarray(h, dtype=np.int64)
            tgt = self._pts + q
            inside = np.abs(tgt).sum(axis=1) <= self.L
            out = np.full(self.size, -1, dtype=np.int32)
            out[inside] = self._box[tuple((tgt[inside] + self.L).T)]
            return out
        return np.array([self._index.get(g.mul(x, h), -1) for x in self._elements], dtype=np.int32)

    def right_tables(self, hs: Sequence[Element]) -> np.ndarray:
        out = np.empty((len(hs), self.size), dtype=np.int32)
        for r, h in enumerate(hs):
            out[r] = self.right_table(h)
        return out


# -- Kesten's Markov operator -----------------------------------------------


@dataclass(frozen=True)
class KestenResult:
    """Compressed-operator norm estimate on ``ball(L)``."""

    value: float
    rayleigh: float
    iterations: int
    converged: bool
    truncation: int
    method: str = "lanczos"

    def __float__(self):
        return self.value


def _step_arrays(group: Group, step_distribution: Mapping) -> tuple[list, np.ndarray]:
    if not step_distribution:
        raise InvalidArgument("step distribution has empty support")
    elems, probs = [], []
    for key, p in step_distribution.items():
        g = group.parse(key)
        p = float(p)
        if not (p >= 0 and math.isfinite(p)):
            raise InvalidArgument(f"probability {p} for {key!r} must be nonnegative")
        if p > 0:
            elems.append(g)
            probs.append(p)
    if not elems:
        raise InvalidArgument("step distribution has empty support")
    total = sum(probs)
    if abs(total - 1.0) > 1e-12:
        raise InvalidArgument(f"step distribution sums to {total}, not 1")
    return elems, np.asarray(probs)


def _power(apply_gram, apply_m, v, T, tol):
    w = np.empty_like(v)
    prev, rq, it, converged = -1.0, 0.0, 0, False
    for it in range(1, T + 1):
        apply_m(v, w)
        rq = math.sqrt(float(w @ w))
        if rq == 0.0 or abs(rq - prev) < tol:
            converged = rq != 0.0
            break
        prev = rq
        u = apply_gram(v)
        v = u / math.sqrt(float(u @ u))
    return rq, it, converged


def _lanczos(apply_gram, v, T, tol):
    # three-term recurrence; the top Ritz value is nondecreasing and bounded by
    # the top eigenvalue, and loss of orthogonality only produces ghost copies
    alpha, beta = [], []
    v_prev = np.zeros_like(v)
    b_prev = 0.0
    top, prev, it, converged = 0.0, -1.0, 0, False
    for it in range(1, T + 1):
        w = apply_gram(v)
        a = float(v @ w)
        w -= a * v + b_prev * v_prev
        alpha.append(a)
        b = math.sqrt(float(w @ w))
        if len(alpha) == 1:
            top = a
        else:
            top = float(eigvalsh_tridiagonal(np.array(alpha), np.array(beta), select="i",
                                             select_range=(len(alpha) - 1, len(alpha) - 1))[0])
        if b <= 1e-14 * max(abs(a), 1.0):
            converged = True  # invariant subspace reached: the Ritz value is exact
            break
        if abs(math.sqrt(max(top, 0.0)) - math.sqrt(max(prev, 0.0))) < tol and it > 2:
            converged = True
            break
        prev = top
        beta.append(b)
        v_prev, v, b_prev = v, w / b, b
    return math.sqrt(max(top, 0.0)), it, converged


def kesten_spectral_radius(
    group: Group,
    step_distribution: Mapping,
    L: int,
    T: int = 20000,
    tol: float = 1e-12,
    method: str = "lanczos",
) -> KestenResult:
    """Top singular value of the random-walk operator compressed to ``ball(L)``.

    The operator is ``(M h)(x) = sum_s p(s) h(x s)``.  Both methods work with
    ``M^T M`` seeded by the indicator of the identity.

    Parameters
    ----------
    method
        ``"lanczos"`` (default) runs the Krylov recurrence over the
        identity-seeded power sequence; it reaches the same limit as plain
        power iteration in roughly ``L`` steps instead of ``L**2`` for
        diffusive walks.  ``"power"`` is normalized power iteration, stopped
        when successive Rayleigh quotients differ by less than ``tol``.
    """
    if L < 0:
        raise InvalidArgument("truncation must be >= 0")
    if method not in ("lanczos", "power"):
        raise InvalidArgument(f"unknown method {method!r}")
    elems, probs = _step_arrays(group, step_distribution)
    ball = BallIndex(group, L)
    fwd = ball.right_tables(elems)
    bwd = ball.right_tables([group.inv(s) for s in elems])
    tmp = np.empty(ball.size)

    def apply_m(x, out):
        _kernels.conv_gather(x, fwd, probs, out)

    def apply_gram(x):
        out = np.empty_like(x)
        _kernels.conv_gather(x, fwd, probs, tmp)
        _kernels.conv_gather(tmp, bwd, probs, out)
        return out

    v = np.zeros(ball.size)
    v[0] = 1.0
    if method == "power":
        val, it, conv = _power(apply_gram, apply_m, v, T, tol)
    else:
        val, it, conv = _lanczos(apply_gram, v, T, tol)
    return KestenResult(value=min(val, 1.0), rayleigh=val, iterations=it, converged=conv,
                        truncation=L, method=method)


@dataclass(frozen=True)
class KestenLadder:
    truncations: tuple[int, ...]
    estimates: tuple[float, ...]
    extrapolated: float
    method: str

    @property
    def raw(self) -> float:
        return self.estimates[-1]


def extrapolate_ladder(Ls: Sequence[int], values: Sequence[float]) -> tuple[float, str]:
    """Limit of ``lam_L = rho - K / (L + c)^2`` fitted through the last three points.

    Falls back to a two-point fit with ``c = 0`` when the three-point system
    has no root, and to the raw value with a single point.
    """
    Ls = [float(x) for x in Ls]
    vals = [float(x) for x in values]
    if len(vals) == 1:
        return vals[0], "raw"

    def two_point(L1, L2, v1, v2, c):
        a1, a2 = 1.0 / (L1 + c) ** 2, 1.0 / (L2 + c) ** 2
        K = (v2 - v1) / (a1 - a2)
        return v2 + K * a2, K

    if len(vals) >= 3:
        (L1, L2, L3), (v1, v2, v3) = Ls[-3:], vals[-3:]

        def resid(c):
            rho, K = two_point(L1, L2, v1, v2, c)
            return rho - K / (L3 + c) ** 2 - v3

        lo = -min(Ls[-3:]) + 1e-6
        grid = np.linspace(lo, 50.0, 400)
        res = [resid(c) for c in grid]
        for c0, c1, r0, r1 in zip(grid, grid[1:], res, res[1:]):
            if np.sign(r0) != np.sign(r1):
                c = brentq(resid, c0, c1, xtol=1e-14)
                return two_point(L1, L2, v1, v2, c)[0], "three-point"
    rho, _ = two_point(Ls[-2], Ls[-1], vals[-2], vals[-1], 0.0)
    return rho, "two-point"


def kesten_ladder(
    group: Group,
    step_distribution: Mapping,
    truncations: Sequence[int],
    T: int = 20000,
    tol: float = 1e-12,
    method: str = "lanczos",
) -> KestenLadder:
    """Estimates for a ladder of truncations plus a finite-size extrapolation."""
    Ls = tuple(sorted(int(L) for L in truncations))
    ests = tuple(kesten_spectral_radius(group, step_distribution, L, T, tol, method).value for L in Ls)
    lim, method = extrapolate_ladder(Ls, ests)
    return KestenLadder(Ls, ests, min(lim, 1.0), method)


def folner_defect(group: Group, A: Iterable[Element], K: Iterable[Element]) -> Fraction:
    """``sum_{h in K} |A h  symmetric-difference  A| / |A|`` as an exact fraction."""
    Aset = set(A)
    if not Aset:
        raise InvalidArgument("candidate set must be nonempty")
    total = 0
    for h in K:
        Ah = {group.mul(x, h) for x in Aset}
        total += len(Ah ^ Aset)
    return Fraction(total, len(Aset))
