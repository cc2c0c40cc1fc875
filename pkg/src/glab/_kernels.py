"""Hot loops for operators acting on (node, group element) arrays.

Two interchangeable backends live here: numba-compiled loops and a pure numpy
path.  The numba path is used when numba imports and ``GLAB_DISABLE_NUMBA`` is
unset (or ``0``); set ``GLAB_DISABLE_NUMBA=1`` to force numpy.  Both backends
are always importable as ``numpy_impl`` / ``numba_impl`` so they can be
benchmarked and cross-checked against each other.

Array conventions
-----------------
``v[i, g]``       value on node ``i`` and ball index ``g``.
``E[i, j]``       linear transition weight from node ``i`` to node ``j`` (0 = no edge).
``lab[i]``        row of ``tables`` holding right multiplication by the label of ``i``.
``tables[l, g]``  ball index of ``g * label_l`` or -1 when it leaves the ball.
``active``        only ball indices ``< active`` can be nonzero on input.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np


def _numpy_ext_forward(v, E, lab, tables, active, out):
    leak = 0.0
    ni, nj = E.shape
    for i in range(ni):
        src = v[i, :active]
        if not src.any():
            continue
        t = tables[lab[i], :active]
        ok = t >= 0
        tgt = t[ok]
        vals = src[ok]
        row_mass = E[i].sum()
        if not ok.all():
            leak += row_mass * float(src[~ok].sum())
        for j in range(nj):
            e = E[i, j]
            if e != 0.0:
                # right multiplication is injective, so no index repeats here
                out[j, tgt] += e * vals
    return leak


def _numpy_ext_adjoint(w, E, lab, tables, active, out):
    ni, nj = E.shape
    for i in range(ni):
        t = tables[lab[i], :active]
        ok = t >= 0
        acc = np.zeros(int(ok.sum()))
        for j in range(nj):
            e = E[i, j]
            if e != 0.0:
                acc += e * w[j, t[ok]]
        row = out[i, :active]
        row[ok] += acc


def _numpy_conv_gather(v, tables, probs, out):
    out[:] = 0.0
    for s in range(tables.shape[0]):
        t = tables[s]
        ok = t >= 0
        out[ok] += probs[s] * v[t[ok]]


numpy_impl = SimpleNamespace(
    name="numpy",
    ext_forward=_numpy_ext_forward,
    ext_adjoint=_numpy_ext_adjoint,
    conv_gather=_numpy_conv_gather,
)


def _build_numba_impl():
    from numba import njit

    @njit(cache=True)
    def ext_forward(v, E, lab, tables, active, out):
        leak = 0.0
        ni, nj = E.shape
        for i in range(ni):
            row = tables[lab[i]]
            mass = 0.0
            for j in range(nj):
                mass += E[i, j]
            for g in range(active):
                x = v[i, g]
                if x == 0.0:
                    continue
                t = row[g]
                if t < 0:
                    leak += mass * x
                    continue
                for j in range(nj):
                    e = E[i, j]
                    if e != 0.0:
                        out[j, t] += e * x
        return leak

    @njit(cache=True)
    def ext_adjoint(w, E, lab, tables, active, out):
        ni, nj = E.shape
        for i in range(ni):
            row = tables[lab[i]]
            for g in range(active):
                t = row[g]
                if t < 0:
                    continue
                acc = 0.0
                for j in range(nj):
                    e = E[i, j]
                    if e != 0.0:
                        acc += e * w[j, t]
                out[i, g] += acc

    @njit(cache=True)
    def conv_gather(v, tables, probs, out):
        ns, n = tables.shape
        for x in range(n):
            acc = 0.0
            for s in range(ns):
                t = tables[s, x]
                if t >= 0:
                    acc += probs[s] * v[t]
            out[x] = acc

    return SimpleNamespace(
        name="numba",
        ext_forward=ext_forward,
        ext_adjoint=ext_adjoint,
        conv_gather=conv_gather,
    )


def _numba_requested() -> bool:
    flag = os.environ.get("GLAB_DISABLE_NUMBA", "").strip().lower()
    return flag in ("", "0", "false", "no")


try:
    numba_impl = _build_numba_impl()
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_impl = None

backend = numba_impl if (numba_impl is not None and _numba_requested()) else numpy_impl

BACKEND = backend.name


def ext_forward(v, E, lab, tables, active, out) -> float:
    """Scatter ``v`` through one transfer step; returns the mass that left the ball."""
    return float(backend.ext_forward(v, E, lab, tables, int(active), out))


def ext_adjoint(w, E, lab, tables, active, out) -> None:
    backend.ext_adjoint(w, E, lab, tables, int(active), out)


def conv_gather(v, tables, probs, out) -> None:
    backend.conv_gather(v, tables, probs, out)
