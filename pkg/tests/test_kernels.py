from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glab import _kernels
from glab.groups import BallIndex, FreeGroup, Lattice

pytestmark = pytest.mark.skipif(_kernels.numba_impl is None, reason="numba not importable")


def _case(seed, group, L, nodes):
    rng = np.random.default_rng(seed)
    ball = BallIndex(group, L)
    gens = group.generators()
    tables = ball.right_tables(gens)
    lab = rng.integers(len(gens), size=nodes).astype(np.int64)
    E = rng.random((nodes, nodes)) * (rng.random((nodes, nodes)) < 0.6)
    return ball, tables, lab, E, rng


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), free=st.booleans(), L=st.integers(0, 5), nodes=st.integers(1, 5))
def test_forward_backends_agree(seed, free, L, nodes):
    ball, tables, lab, E, rng = _case(seed, FreeGroup(2) if free else Lattice(2), L, nodes)
    active = int(rng.integers(1, ball.size + 1))
    v = np.zeros((nodes, ball.size))
    v[:, :active] = rng.random((nodes, active))
    outs, leaks = [], []
    for impl in (_kernels.numpy_impl, _kernels.numba_impl):
        out = np.zeros((nodes, ball.size))
        leaks.append(impl.ext_forward(v, E, lab, tables, active, out))
        outs.append(out)
    assert np.allclose(outs[0], outs[1], rtol=1e-13, atol=1e-15)
    assert leaks[0] == pytest.approx(leaks[1], rel=1e-12, abs=1e-15)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), free=st.booleans(), L=st.integers(0, 5), nodes=st.integers(1, 5))
def test_adjoint_backends_agree(seed, free, L, nodes):
    ball, tables, lab, E, rng = _case(seed, FreeGroup(2) if free else Lattice(2), L, nodes)
    w = rng.random((nodes, ball.size))
    active = int(rng.integers(1, ball.size + 1))
    outs = []
    for impl in (_kernels.numpy_impl, _kernels.numba_impl):
        out = np.zeros((nodes, ball.size))
        impl.ext_adjoint(w, E, lab, tables, active, out)
        outs.append(out)
    assert np.allclose(outs[0], outs[1], rtol=1e-13, atol=1e-15)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), free=st.booleans(), L=st.integers(0, 6))
def test_conv_backends_agree(seed, free, L):
    ball, tables, _, _, rng = _case(seed, FreeGroup(2) if free else Lattice(2), L, 1)
    probs = rng.random(tables.shape[0])
    v = rng.random(ball.size)
    outs = []
    for impl in (_kernels.numpy_impl, _kernels.numba_impl):
        out = np.empty(ball.size)
        impl.conv_gather(v, tables, probs, out)
        outs.append(out)
    assert np.allclose(outs[0], outs[1], rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("0", "numba")])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, GLAB_DISABLE_NUMBA=flag)
    out = subprocess.run(
        [sys.executable, "-c", "from glab import _kernels; print(_kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == expected


def test_numpy_backend_end_to_end():
    # the public pipeline gives identical answers under the fallback
    code = (
        "import math\n"
        "from glab.groups import Lattice, kesten_spectral_radius\n"
        "print(repr(kesten_spectral_radius(Lattice(1), {(1,): .5, (-1,): .5}, 30).value))\n"
    )
    vals = []
    for flag in ("1", "0"):
        env = dict(os.environ, GLAB_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        vals.append(float(out.stdout))
    assert vals[0] == pytest.approx(vals[1], abs=1e-14)
