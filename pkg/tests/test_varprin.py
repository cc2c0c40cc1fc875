from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glab.errors import InfimumNotAttained, InvalidArgument
from glab.extension import SkewLabeling
from glab.groups import FreeGroup, Lattice
from glab.potential import LocallyConstantPotential
from glab.varprin import (
    TiltedPressureProblem,
    equilibrium_drift,
    minimize_pressure,
    tilted_pressure,
    verify_variational_identity,
)

from conftest import full_shift, random_potential, random_sft, random_z_labeling


def three_symbol_problem():
    sft = full_shift(3)
    lab = SkewLabeling.uniform(sft, Lattice(1), [1, 1, -1])
    return TiltedPressureProblem(sft, lab, LocallyConstantPotential.zero(sft))


def test_tilted_pressure_closed_form():
    # full shift with independent symbols: P(xi) = log(2 e^xi + e^-xi)
    prob = three_symbol_problem()
    for xi in (-1.0, -0.3, 0.0, 0.8):
        assert tilted_pressure(prob, [xi]) == pytest.approx(math.log(2 * math.exp(xi) + math.exp(-xi)), abs=1e-12)


def test_drift_is_gradient():
    prob = three_symbol_problem()
    for xi in (-0.5, 0.2):
        want = (2 * math.exp(xi) - math.exp(-xi)) / (2 * math.exp(xi) + math.exp(-xi))
        assert equilibrium_drift(prob, [xi])[0] == pytest.approx(want, abs=1e-8)


def test_minimizer_closed_form():
    prob = three_symbol_problem()
    sol = minimize_pressure(prob)
    assert sol.converged
    assert sol.xi[0] == pytest.approx(-0.5 * math.log(2), abs=1e-5)
    assert sol.pressure == pytest.approx(math.log(2 * math.sqrt(2)), abs=1e-8)
    assert sol.drift_norm <= 1e-6
    assert sol.trace[0][0] == 0 and len(sol.trace) == sol.iterations + 1


def test_symmetric_two_dimensional():
    sft = full_shift(4)
    lab = SkewLabeling.uniform(sft, Lattice(2), [(1, 0), (0, 1), (-1, 0), (0, -1)])
    prob = TiltedPressureProblem(sft, lab, LocallyConstantPotential.zero(sft))
    sol = minimize_pressure(prob)
    assert np.allclose(sol.xi, 0.0, atol=1e-8)
    assert sol.pressure == pytest.approx(math.log(4), abs=1e-8)


def test_free_labels_are_abelianized():
    sft = full_shift(4)
    lab = SkewLabeling.uniform(sft, FreeGroup(2), ["a", "b", "a^-1", "b^-1"])
    prob = TiltedPressureProblem(sft, lab, LocallyConstantPotential.zero(sft))
    assert prob.dimension == 2
    assert isinstance(prob.labeling.group, Lattice)


@pytest.mark.parametrize("labels", [[1, 1], [1, 0], [2, 1, 0]])
def test_half_space_raises(labels):
    # labels never negative: the drift vanishes at most asymptotically
    sft = full_shift(len(labels))
    lab = SkewLabeling.uniform(sft, Lattice(1), labels)
    prob = TiltedPressureProblem(sft, lab, LocallyConstantPotential.zero(sft))
    with pytest.raises(InfimumNotAttained):
        minimize_pressure(prob)


def test_dimension_checked():
    prob = three_symbol_problem()
    with pytest.raises(InvalidArgument):
        prob.tilted_potential([0.0, 1.0])


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), x=st.floats(-2, 2), y=st.floats(-2, 2))
def test_pressure_is_convex(seed, x, y):
    sft = random_sft(seed, 2, sizes=(3,), density=0.8, mixing=True)
    lab = random_z_labeling(sft, seed)
    prob = TiltedPressureProblem(sft, lab, random_potential(sft, 2, seed))
    pm = tilted_pressure(prob, [(x + y) / 2])
    assert pm <= (tilted_pressure(prob, [x]) + tilted_pressure(prob, [y])) / 2 + 1e-10


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000), xs=st.lists(st.floats(-1.5, 1.5), min_size=4, max_size=4))
def test_pressure_is_convex_in_two_dimensions(seed, xs):
    sft = random_sft(seed, 2, sizes=(3,), density=0.8, mixing=True)
    lab = random_z_labeling(sft, seed, d=2)
    prob = TiltedPressureProblem(sft, lab, random_potential(sft, 1, seed))
    a, b = np.array(xs[:2]), np.array(xs[2:])
    pm = tilted_pressure(prob, (a + b) / 2)
    assert pm <= (tilted_pressure(prob, a) + tilted_pressure(prob, b)) / 2 + 1e-10


def test_variational_identity_three_symbols():
    chk = verify_variational_identity(three_symbol_problem(), window=(8, 16), tolerance=0.02)
    assert chk.agrees
    assert chk.difference < 0.02
