"""Transfer operators on the base and on the group extension.

Functions on a fiber are vectors over the nodes of a :class:`NodeGraph`
(admissible words of length ``D``).  The transfer operator from state ``k`` is
``(L v)(j) = sum_i E_k[i, j] v(i)`` with ``E_k = exp(logw[k])``.  On the group
extension a function is a ``(nodes, ball)`` array and each node ``i`` moves
mass from ``g`` to ``g * psi_k(i)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .env_sft import RandomSFT
from .errors import EstimationError, InvalidArgument, MixingError
from .extension import SkewLabeling
from .groups import BallIndex
from .potential import LocallyConstantPotential, NodeGraph, inf_on_cylinder, sup_on_cylinder


@dataclass
class FiberVector:
    """Function on the nodes of fiber ``state``."""

    state: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)


def apply_base_operator(
    sft: RandomSFT, phi: LocallyConstantPotential, k: int, v: FiberVector, graph: NodeGraph | None = None
) -> FiberVector:
    """One transfer step from state ``k`` to its successor."""
    if v.state != k:
        raise InvalidArgument(f"vector lives on state {v.state}, operator acts from state {k}")
    graph = NodeGraph(sft, phi) if graph is None else graph
    E = graph.linear[k]
    if v.values.shape != (E.shape[0],):
        raise InvalidArgument(f"vector has {v.values.shape[0]} entries, fiber has {E.shape[0]} nodes")
    return FiberVector(sft.env.advance(k), E.T @ v.values)


def hilbert_distance(x: np.ndarray, y: np.ndarray) -> float:
    """Projective metric ``log(max(x/y) / min(x/y))`` between positive vectors."""
    if np.any(x <= 0) or np.any(y <= 0):
        return math.inf
    r = x / y
    return float(math.log(r.max() / r.min()))


@dataclass
class FiberEigenData:
    """Eigen-data of the operator cocycle around the environment cycle.

    ``E_k^T h_k = lam_k h_{k+1}`` with ``max h_k = 1`` and
    ``E_k nu_{k+1} = lam_nu_k nu_k`` with ``sum nu_k = 1``.  The node measure is
    ``mu_k = h_k nu_k / (h_k . nu_k)``.
    """

    graph: NodeGraph
    lam: np.ndarray
    h: list[np.ndarray]
    nu: list[np.ndarray]
    lam_nu: np.ndarray
    cycles: int
    distance: float
    gibbs_constants: np.ndarray = field(default=None)
    gibbs_extremes: list[tuple[float, float]] = field(default=None)

    @property
    def sft(self) -> RandomSFT:
        return self.graph.sft

    @property
    def phi(self) -> LocallyConstantPotential:
        return self.graph.phi

    @property
    def pressure(self) -> float:
        return float(np.dot(self.sft.env.weights, np.log(self.lam)))

    def mu(self, k: int) -> np.ndarray:
        w = self.h[k] * self.nu[k]
        return w / w.sum()

    def log_Lambda(self, k: int, n: int) -> float:
        env = self.sft.env
        return float(sum(math.log(self.lam[env.advance(k, i)]) for i in range(n)))

    def cylinder_measure(self, k: int, w: Sequence[int]) -> float:
        """``mu_k([w])`` for an admissible word ``w``."""
        g = self.graph
        sft = self.sft
        env = sft.env
        D = g.depth
        w = tuple(int(s) for s in w)
        if not sft.is_admissible(k, w):
            raise InvalidArgument(f"word {w} is not admissible at state {k}")
        if len(w) < D:
            return float(sum(self.cylinder_measure(k, w + t) for t in sft.extensions(k, w, D - len(w))))
        m = len(w) - D
        idx = [g.index[env.advance(k, t)][w[t : t + D]] for t in range(m + 1)]
        logv = math.log(self.h[k][idx[0]])
        for t in range(m):
            kt = env.advance(k, t)
            logv += g.logw[kt][idx[t], idx[t + 1]] - math.log(self.lam_nu[kt])
        logv += math.log(self.nu[env.advance(k, m)][idx[m]])
        logv -= math.log(float(self.h[k] @ self.nu[k]))
        return math.exp(logv)

    def measure_table(self, k: int, depth: int = 3) -> dict[tuple[int, ...], float]:
        return {w: self.cylinder_measure(k, w) for w in self.sft.words(k, depth)}

    def gibbs_ratio_bounds(self, k: int, n_max: int = 8) -> tuple[float, float]:
        """Smallest and largest ``Lambda_n mu([w]) / exp(S_n phi)`` over words of length ``1..n_max``.

        The Birkhoff sum ranges over the whole cylinder, so both the supremum
        and the infimum are used.  For ``n >= D`` the path weight cancels and
        the ratio depends only on the first and last node of the word, so the
        extremes are taken over reachable node pairs.
        """
        lo, hi = math.inf, 0.0
        sft, phi, g = self.sft, self.phi, self.graph
        env = sft.env
        D = g.depth
        for n in range(1, min(D, n_max + 1)):
            logL = self.log_Lambda(k, n)
            for w in sft.words(k, n):
                lm = math.log(self.cylinder_measure(k, w)) + logL
                lo = min(lo, math.exp(lm - sup_on_cylinder(phi, sft, k, w)))
                hi = max(hi, math.exp(lm - inf_on_cylinder(phi, sft, k, w)))
        tmax = g.tails(D, "max")
        tmin = g.tails(D, "min")
        log_h0 = np.log(self.h[k]) - math.log(float(self.h[k] @ self.nu[k]))
        reach = np.identity(g.size(k), dtype=bool)
        log_lnu = 0.0
        fiber = k
        for n in range(D, n_max + 1):
            m = n - D
            logL = self.log_Lambda(k, n)
            with np.errstate(divide="ignore"):
                end = np.log(self.nu[fiber]) - log_lnu + logL
            base = log_h0[:, None] + end[None, :]
            r_sup = np.where(reach, base - tmax[fiber][None, :], np.inf)
            r_inf = np.where(reach, base - tmin[fiber][None, :], -np.inf)
            lo = min(lo, math.exp(r_sup.min()))
            hi = max(hi, math.exp(r_inf.max()))
            if m < n_max - D:
                reach = (reach.astype(np.int64) @ np.isfinite(g.logw[fiber]).astype(np.int64)) > 0
                log_lnu += math.log(self.lam_nu[fiber])
                fiber = env.advance(fiber)
        return lo, hi

    def compute_gibbs(self, n_max: int = 8) -> None:
        ext = [self.gibbs_ratio_bounds(k, n_max) for k in range(self.sft.env.size)]
        self.gibbs_extremes = ext
        self.gibbs_constants = np.array([max(hi, 1.0 / lo) for lo, hi in ext])

    def gibbs_constant(self, k: int) -> float:
        if self.gibbs_constants is None:
            self.compute_gibbs()
        return float(self.gibbs_constants[k])


def _cycle_iterate(vec, mats, order, transpose: bool):
    for k in order:
        vec = (mats[k].T @ vec) if transpose else (mats[k] @ vec)
        top = vec.max()
        if not (np.isfinite(top) and top > 0):
            raise EstimationError("eigen-iteration produced a degenerate vector (overflow or underflow)")
        vec = vec / top
    return vec


def _require_primitive(graph: NodeGraph, order) -> None:
    # Wielandt: a primitive N x N pattern has a positive power at exponent (N - 1)^2 + 1
    P = np.identity(graph.size(order[0]), dtype=bool)
    for k in order:
        P = (P.astype(np.int64) @ np.isfinite(graph.logw[k]).astype(np.int64)) > 0
    N = P.shape[0]
    e = (N - 1) ** 2 + 1
    Q = np.identity(N, dtype=bool)
    B = P
    while e:
        if e & 1:
            Q = (Q.astype(np.int64) @ B.astype(np.int64)) > 0
        B = (B.astype(np.int64) @ B.astype(np.int64)) > 0
        e >>= 1
    if not Q.all():
        raise MixingError("base system is not topologically mixing; fiber eigen-data is not unique")


def fiber_ruelle(
    sft: RandomSFT,
    phi: LocallyConstantPotential,
    T: int = 10_000,
    tol: float = 1e-12,
    gibbs_n: int | None = 8,
) -> FiberEigenData:
    """Projective power iteration of the operator cocycle around the environment cycle.

    Convergence is declared when the Hilbert distance between successive
    cycle iterates of both the eigenfunction and the conformal vector drops
    below ``tol``.  ``gibbs_n`` sets the word length for the Gibbs constant
    (``None`` skips it).
    """
    graph = NodeGraph(sft, phi)
    env = sft.env
    m = env.size
    E = graph.linear
    fwd = env.orbit(0, m)
    _require_primitive(graph, fwd)
    bwd = list(reversed(fwd))
    h0 = np.ones(graph.size(0))
    c0 = np.ones(graph.size(0))
    dist = math.inf
    cycles = 0
    for cycles in range(1, T + 1):
        h1 = _cycle_iterate(h0, E, fwd, transpose=True)
        c1 = _cycle_iterate(c0, E, bwd, transpose=False)
        dist = max(hilbert_distance(h1, h0), hilbert_distance(c1, c0))
        h0, c0 = h1, c1
        if dist < tol:
            break
    else:
        raise EstimationError(f"eigen-iteration did not converge in {T} cycles; projective distance {dist:.3e}")
    h = [None] * m
    lam = np.zeros(m)
    h[0] = h0 / h0.max()
    for k in fwd:
        nxt = env.advance(k)
        y = E[k].T @ h[k]
        lam[k] = y.max()
        if nxt != 0:
            h[nxt] = y / lam[k]
    lam_nu = np.zeros(m)
    # backward pass: nu_k from nu_{k+1}
    nu = [None] * m
    nu[0] = c0 / c0.sum()
    for k in bwd:  # k runs m-1, ..., 0; nu[k] needs nu[k+1]
        nxt = env.advance(k)
        y = E[k] @ nu[nxt]
        lam_nu[k] = y.sum()
        if k != 0:
            nu[k] = y / lam_nu[k]
    eig = FiberEigenData(graph, lam, h, nu, lam_nu, cycles, dist)
    if gibbs_n:
        eig.compute_gibbs(gibbs_n)
    return eig


def normalize_potential(
    phi: LocallyConstantPotential, eigen: FiberEigenData, check_tol: float = 1e-8
) -> LocallyConstantPotential:
    """``phi + log h - log h o shift - log lam``, reduced to the smallest exact range.

    The result has transfer operator fixing the constant function 1.
    """
    graph = eigen.graph
    sft = graph.sft
    env = sft.env
    if any(np.any(hk <= 0) for hk in eigen.h):
        raise InvalidArgument("eigenfunction has nonpositive entries")
    D = graph.depth

    def fn(k, y):
        u, v = y[:D], y[1 : D + 1]
        return (
            phi.value(k, y)
            + math.log(eigen.h[k][graph.index[k][u]])
            - math.log(eigen.h[env.advance(k)][graph.index[env.advance(k)][v]])
            - math.log(eigen.lam[k])
        )

    phi0 = LocallyConstantPotential.from_function(sft, D + 1, fn).reduced(sft)
    g0 = NodeGraph(sft, phi0)
    for k in range(env.size):
        err = np.abs(g0.linear[k].T @ np.ones(g0.size(k)) - 1.0).max()
        if err > check_tol:
            raise EstimationError(f"normalization check failed at state {k}: |L1 - 1| = {err:.3e}")
    return phi0


def is_normalized(sft: RandomSFT, phi: LocallyConstantPotential, tol: float = 1e-8) -> bool:
    g = NodeGraph(sft, phi)
    return all(np.abs(g.linear[k].T @ np.ones(g.size(k)) - 1.0).max() <= tol for k in range(sft.env.size))


# -- group extension ----------------------------------------------------------


@dataclass
class GroupExtendedVector:
    """Function on ``nodes x ball(L)`` at fiber ``state``; ``data[i, g]``."""

    state: int
    data: np.ndarray
    ball: BallIndex
    leakage: float = 0.0

    @property
    def truncation(self) -> int:
        return self.ball.L

    def norm_inf(self) -> float:
        """``(sum_g max_i |v(i, g)|^2)^(1/2)``."""
        return float(np.sqrt((np.abs(self.data).max(axis=0) ** 2).sum()))

    def norm_1(self, mu: np.ndarray) -> float:
        """``(sum_g (sum_i mu_i |v(i, g)|)^2)^(1/2)``."""
        return float(np.sqrt(((mu @ np.abs(self.data)) ** 2).sum()))

    def to_dict(self, graph: NodeGraph) -> dict[tuple[tuple[int, ...], object], float]:
        out = {}
        for i, g in zip(*np.nonzero(self.data)):
            out[(graph.nodes[self.state][i], self.ball.element(int(g)))] = float(self.data[i, g])
        return out


class ExtensionOperator:
    """Precomputed per-fiber matrices and label lookup tables on ``ball(L)``."""

    def __init__(self, sft: RandomSFT, labeling: SkewLabeling, phi: LocallyConstantPotential, L: int,
                 ball: BallIndex | None = None):
        labeling.check_against(sft)
        self.sft = sft
        self.labeling = labeling
        self.graph = NodeGraph(sft, phi)
        self.ball = BallIndex(labeling.group, L) if ball is None or ball.L != L else ball
        env = sft.env
        distinct: dict = {}
        self.lab = []
        for k in range(env.size):
            row = []
            for u in self.graph.nodes[k]:
                g = labeling.label(k, u[0])
                row.append(distinct.setdefault(g, len(distinct)))
            self.lab.append(np.asarray(row, dtype=np.int64))
        self.tables = self.ball.right_tables(list(distinct))
        self.E = [np.ascontiguousarray(x) for x in self.graph.linear]
        self.maxlen = labeling.max_length

    @property
    def L(self) -> int:
        return self.ball.L

    def active(self, radius: int) -> int:
        return int(self.ball.count_upto[min(max(radius, 0), self.L)])

    def zeros(self, k: int) -> np.ndarray:
        return np.zeros((self.graph.size(k), self.ball.size))

    def forward(self, k: int, v: np.ndarray, radius: int | None = None) -> tuple[np.ndarray, float]:
        """Apply the operator from fiber ``k``; ``radius`` bounds the support of ``v``."""
        out = self.zeros(self.sft.env.advance(k))
        act = self.ball.size if radius is None else self.active(radius)
        leak = _kernels.ext_forward(v, self.E[k], self.lab[k], self.tables, act, out)
        return out, leak

    def adjoint(self, k: int, w: np.ndarray, radius: int | None = None) -> np.ndarray:
        """Adjoint of :meth:`forward`; output computed on ``ball(radius)`` only."""
        out = self.zeros(k)
        act = self.ball.size if radius is None else self.active(radius)
        _kernels.ext_adjoint(w, self.E[k], self.lab[k], self.tables, act, out)
        return out


def apply_extension_operator(
    sft: RandomSFT,
    labeling: SkewLabeling,
    phi: LocallyConstantPotential,
    k: int,
    v: GroupExtendedVector,
    op: ExtensionOperator | None = None,
) -> GroupExtendedVector:
    """``(L v)(x, g) = sum_{y -> x} exp(phi(y)) v(y, g psi(y)^-1)``, truncated to ``ball(L)``.

    Mass pushed outside the ball is dropped and reported as ``leakage``.
    """
    if v.state != k:
        raise InvalidArgument(f"vector lives on state {v.state}, operator acts from state {k}")
    op = ExtensionOperator(sft, labeling, phi, v.ball.L, v.ball) if op is None else op
    if v.data.shape != (op.graph.size(k), op.ball.size):
        raise InvalidArgument("vector shape does not match the fiber nodes and ball")
    out, leak = op.forward(k, np.ascontiguousarray(v.data, dtype=float))
    return GroupExtendedVector(sft.env.advance(k), out, op.ball, leak)


def delta_vector(op: ExtensionOperator, k: int, symbol: int, g=None) -> GroupExtendedVector:
    """Indicator of ``(nodes starting with symbol, g)`` at fiber ``k``."""
    G = op.labeling.group
    gi = op.ball.index_of(G.identity() if g is None else g)
    if gi < 0:
        raise InvalidArgument("seed element lies outside the ball")
    data = op.zeros(k)
    data[op.graph.first[k] == symbol, gi] = 1.0
    return GroupExtendedVector(k, data, op.ball)


@dataclass(frozen=True)
class SpectralRadiusRecord:
    ns: tuple[int, ...]
    log_norm_inf: tuple[float, ...]
    log_norm_1: tuple[float, ...]
    leakage: tuple[float, ...]
    estimate: float
    slope_stderr: float
    window: tuple[int, int]
    correction: float

    @property
    def ratios(self) -> tuple[float, ...]:
        x = self.log_norm_inf
        return tuple(math.exp(b - a) for a, b in zip(x, x[1:]))


def spectral_radius_H(
    sft: RandomSFT,
    labeling: SkewLabeling,
    phi: LocallyConstantPotential,
    n_max: int,
    L: int,
    seed: GroupExtendedVector | None = None,
    k: int = 0,
    a: int = 0,
    window: tuple[int, int] | None = None,
    correction: float | None = None,
    op: ExtensionOperator | None = None,
) -> SpectralRadiusRecord:
    """Growth of ``H_inf`` norms of the iterates of a seed vector.

    Fits ``log |v_n| = alpha + n beta - c log n`` on a trailing window and
    reports ``exp(beta)``.  The default ``c`` is half the group's counting
    exponent, the decay of ``(sum_g N_n(g)^2)^(1/2)`` for return counts ``N_n``.
    """
    if n_max < 2:
        raise InvalidArgument("n_max must be >= 2")
    op = ExtensionOperator(sft, labeling, phi, L) if op is None else op
    env = sft.env
    seed = delta_vector(op, k, a) if seed is None else seed
    k = seed.state
    c = labeling.group.counting_exponent / 2 if correction is None else float(correction)
    try:
        eig = fiber_ruelle(sft, phi, gibbs_n=None)
        mus = [eig.mu(j) for j in range(env.size)]
    except (EstimationError, MixingError):
        mus = None
    v = np.ascontiguousarray(seed.data, dtype=float)
    nz = np.nonzero(v.any(axis=0))[0]
    radius = int(op.ball.lengths()[nz].max()) if len(nz) else 0
    ns, linf, l1, leaks = [], [], [], []
    fiber = k
    for n in range(1, n_max + 1):
        v, leak = op.forward(fiber, v, radius)
        radius += op.maxlen
        fiber = env.advance(fiber)
        vec = GroupExtendedVector(fiber, v, op.ball, leak)
        nrm = vec.norm_inf()
        if nrm == 0.0:
            raise EstimationError(f"all mass left ball({L}) by step {n}")
        ns.append(n)
        linf.append(math.log(nrm))
        l1.append(math.log(vec.norm_1(mus[fiber])) if mus is not None else math.nan)
        leaks.append(leak)
    lo, hi = window if window is not None else (max(1, n_max // 2), n_max)
    xs = np.array([n for n in ns if lo <= n <= hi], dtype=float)
    ys = np.array([linf[n - 1] for n in ns if lo <= n <= hi]) + c * np.log(xs)
    if len(xs) < 2:
        raise EstimationError(f"window [{lo},{hi}] has fewer than two points")
    X = np.column_stack([np.ones_like(xs), xs])
    coef, *_ = np.linalg.lstsq(X, ys, rcond=None)
    if len(xs) > 2:
        r = ys - X @ coef
        se = math.sqrt(float(r @ r) / (len(xs) - 2) / float(((xs - xs.mean()) ** 2).sum()))
    else:
        se = math.nan
    return SpectralRadiusRecord(tuple(ns), tuple(linf), tuple(l1), tuple(leaks), math.exp(coef[1]), se,
                                (int(lo), int(hi)), c)


# -- averaging operators ------------------------------------------------------


@dataclass(frozen=True)
class MarkovAverageRecord:
    """Norm proxies for ``T_n = M o L^n`` on constant-slice inputs.

    ``A_n`` is the cone supremum ``sup |T_n (r x 1)| / |r|`` found by power
    iteration from the identity indicator; ``A_n_seed`` is its first iterate
    ``|T_n (delta_id x 1)|``.
    """

    n: int
    A_n: float
    A_n_seed: float
    T_norm: float
    L_norm: float
    C_phi: float
    iterations: int
    leakage: float

    @property
    def ordering_ok(self) -> bool:
        slack = 1e-9
        return self.T_norm <= self.L_norm * (1 + slack) + slack and self.L_norm <= self.C_phi * self.T_norm * (1 + slack) + slack


def markov_average_and_Tn(
    sft: RandomSFT,
    labeling: SkewLabeling,
    phi: LocallyConstantPotential,
    k: int,
    n: int,
    L: int,
    seed_radius: int | None = None,
    eigen: FiberEigenData | None = None,
    T: int = 200,
    tol: float = 1e-10,
    op: ExtensionOperator | None = None,
) -> MarkovAverageRecord:
    """Cone norm of the averaged operator and the ``L^n`` comparison.

    Parameters
    ----------
    phi
        Must be normalized (``L 1 = 1`` within ``1e-8``).
    seed_radius
        Inputs ``r`` are supported on ``ball(seed_radius)``; defaults to ``L``.
    """
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    if not is_normalized(sft, phi):
        raise InvalidArgument("potential is not normalized: L 1 != 1 within 1e-8")
    env = sft.env
    eigen = fiber_ruelle(sft, phi) if eigen is None else eigen
    op = ExtensionOperator(sft, labeling, phi, L) if op is None else op
    R = L if seed_radius is None else min(seed_radius, L)
    nodes_k = op.graph.size(k)
    end = env.advance(k, n)
    mu_end = eigen.mu(end)
    fibers = env.orbit(k, n)
    act_R = op.active(R)

    def push(r):
        v = np.zeros((nodes_k, op.ball.size))
        v[:, :act_R] = r[None, :act_R]
        leak = 0.0
        radius = R
        for f in fibers:
            v, lk = op.forward(f, v, radius)
            leak += lk
            radius += op.maxlen
        return v, leak

    def K(r):
        v, leak = push(r)
        return mu_end @ v, leak

    def Kt(w):
        u = mu_end[:, None] * w[None, :]
        for idx, f in enumerate(reversed(fibers)):
            last = idx == len(fibers) - 1
            u = op.adjoint(f, u, R if last else None)
        out = u.sum(axis=0)
        out[act_R:] = 0.0
        return out

    r = np.zeros(op.ball.size)
    r[0] = 1.0
    Kr, leak = K(r)
    seed_val = float(np.linalg.norm(Kr))
    A = seed_val
    it = 0
    for it in range(1, T + 1):
        r_new = Kt(Kr)
        nr = np.linalg.norm(r_new)
        if nr == 0.0:
            break
        r_new /= nr
        Kr_new, leak = K(r_new)
        A_new = float(np.linalg.norm(Kr_new))
        r, Kr = r_new, Kr_new
        done = abs(A_new - A) <= tol * max(A_new, 1e-300)
        A = A_new
        if done:
            break
    # L^n norm proxy: sup over node indicators at the identity and the optimal cone input
    best = 0.0
    for i in range(nodes_k):
        s = np.zeros((nodes_k, op.ball.size))
        s[i, 0] = 1.0
        v = s
        radius = 0
        for f in fibers:
            v, _ = op.forward(f, v, radius)
            radius += op.maxlen
        best = max(best, GroupExtendedVector(end, v, op.ball).norm_inf())
    v, _ = push(r)
    best = max(best, GroupExtendedVector(end, v, op.ball).norm_inf() / float(np.linalg.norm(r)))
    return MarkovAverageRecord(n, A, seed_val, A, best, eigen.gibbs_constant(k), it, leak)
