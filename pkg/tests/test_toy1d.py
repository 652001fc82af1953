import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from branchtorus.constants import BRANCH_CHILD_C
from branchtorus.core_model import BranchedPlan, validate
from branchtorus.toy1d import (LagrangianField, SubtreeProblem, _child_thresholds_ok,
                               branching_threshold, check_cone_property, cone_bounds,
                               count_interior_branchings, count_splits, equipartition_bound_ok,
                               equipartition_residual, lagrangian_energy, lagrangian_field,
                               optimal_segment_count, rescale, segment_energy, solve_E,
                               solve_toy, toy_energy_of_plan, toy_lower_bound, toy_plan,
                               tree_energy)

BRANCHING = [(20.0, 0.2), (100.0, 0.05), (50.0, 1.0), (10.0, 2.0)]


# -- closed forms -------------------------------------------------------------------

def test_segment_energy_examples():
    assert segment_energy(1, 0.1, 0.01) == pytest.approx(0.036666666666666667, abs=1e-15)
    assert segment_energy(2, 0.1, 0.01) == pytest.approx(0.044166666666666667, abs=1e-15)
    assert segment_energy(3, 1e-300, 0.2) == pytest.approx(1.2)


def test_optimal_segment_count_example():
    N, E = optimal_segment_count(0.1, 0.01)
    assert N == 1 and E == pytest.approx(0.0366666666666667, abs=1e-15)


@given(st.floats(1e-4, 1e3), st.floats(1e-4, 1e3))
def test_optimal_segment_count_is_integer_minimizer(lam, T):
    N, E = optimal_segment_count(lam, T)
    x = (lam / (6 * T)) ** (1 / 3)
    window = range(1, int(2 * x) + 3)
    assert E <= min(segment_energy(n, lam, T) for n in window) * (1 + 1e-14)


@given(st.floats(1e-3, 10.0), st.floats(1.0, 10.0))
def test_single_segment_when_T_exceeds_lambda(lam, factor):
    assert optimal_segment_count(lam, lam * factor)[0] == 1


def test_segment_count_asymptotics():
    T = 1e-9
    for lam in (1e-3, 1e-2, 1e-1):
        N, _ = optimal_segment_count(lam, T)
        assert N / (lam / (6 * T)) ** (1 / 3) == pytest.approx(1.0, abs=0.01)


def test_threshold_example_forces_segment():
    assert branching_threshold(1.0, 1.0, 0.5) == pytest.approx(6.0)
    sol = solve_E(SubtreeProblem(1.0, 1.0, 0.5))
    assert sol.tree is None
    assert sol.E == pytest.approx(1.0 + 0.5 / 12)


def test_threshold_vanishes_for_large_lambda():
    assert branching_threshold(1.0, 1.0, 1e8) < 1e-7


def test_rescale_identity_and_errors():
    p = SubtreeProblem(0.3, 0.2, 5.0)
    q, r = rescale(p, 1.0)
    assert q == p and r == 1.0
    with pytest.raises(ValueError):
        rescale(SubtreeProblem(0.3, 0.2, 5.0, xbar=0.1), 2.0)


@given(st.floats(0.05, 1.0), st.floats(0.01, 1.0), st.floats(0.5, 50.0), st.floats(0.2, 5.0))
def test_rescaled_lower_bound_identity(Phi, T, lam, r):
    p = SubtreeProblem(Phi, T, lam)
    q, _ = rescale(p, r)
    assert p.lower_bound() == pytest.approx(r * q.lower_bound(), rel=1e-12)
    assert p.segment_value() == pytest.approx(r * q.segment_value(), rel=1e-12)


# -- the subtree solver ---------------------------------------------------------------

@pytest.mark.parametrize("r", [0.5, 2.0])
@pytest.mark.parametrize("lam,T", [(20.0, 0.2), (0.5, 0.1)])
def test_solve_E_scaling_identity(lam, T, r):
    p = SubtreeProblem(1.0, T, lam)
    q, _ = rescale(p, r)
    a = solve_E(p, depth=2, branch_grid=16).E
    b = solve_E(q, depth=2, branch_grid=16).E
    assert a == pytest.approx(r * b, rel=1e-9)


@pytest.mark.parametrize("xbar", [0.0, 0.05, -0.2])
def test_solve_E_offset_identity(xbar):
    base = solve_E(SubtreeProblem(0.5, 0.2, 20.0), depth=2, branch_grid=16).E
    shifted = solve_E(SubtreeProblem(0.5, 0.2, 20.0, xbar), depth=2, branch_grid=16).E
    assert shifted == pytest.approx(base + 0.5 * xbar**2 / (0.2 + 1 / 20), rel=1e-12)


@given(st.floats(0.05, 1.0), st.floats(1e-3, 2.0), st.floats(0.1, 200.0))
def test_solve_E_respects_bounds(Phi, T, lam):
    p = SubtreeProblem(Phi, T, lam)
    sol = solve_E(p, depth=2, branch_grid=8)
    assert sol.E >= p.lower_bound() * (1 - 1e-12)
    assert sol.E <= p.segment_value() * (1 + 1e-12)
    assert not sol.flagged


@given(st.floats(0.05, 1.0), st.floats(1e-3, 2.0), st.floats(0.1, 200.0))
def test_solve_E_within_constant_of_scaling(Phi, T, lam):
    E = solve_E(SubtreeProblem(Phi, T, lam), depth=2, branch_grid=8).E
    ref = T + lam * Phi**3 / (1 + lam * T)
    assert ref / 12 <= E <= 2 * ref


@pytest.mark.parametrize("lam,T", BRANCHING[:2])
def test_returned_trees_respect_child_threshold(lam, T):
    p = SubtreeProblem(1.0, T, lam)
    sol = solve_E(p, depth=3, branch_grid=32)
    assert count_splits(sol.tree) > 0
    assert _child_thresholds_ok(sol.tree, 1.0, T, lam, BRANCH_CHILD_C)


def test_tree_energy_gradient_matches_finite_differences():
    tree = (0.4, 0.3, None, (0.5, 0.6, None, None))
    Phi, tau, lam = 1.0, 0.3, 40.0
    E, dPhi, dtau, grad = tree_energy(tree, Phi, tau, lam)
    h = 1e-7
    assert dPhi == pytest.approx((tree_energy(tree, Phi + h, tau, lam)[0] - tree_energy(tree, Phi - h, tau, lam)[0]) / (2 * h), rel=1e-5)
    assert dtau == pytest.approx((tree_energy(tree, Phi, tau + h, lam)[0] - tree_energy(tree, Phi, tau - h, lam)[0]) / (2 * h), rel=1e-5)
    bumped = (0.4 + h, 0.3, None, (0.5, 0.6, None, None))
    lower = (0.4 - h, 0.3, None, (0.5, 0.6, None, None))
    fd = (tree_energy(bumped, Phi, tau, lam)[0] - tree_energy(lower, Phi, tau, lam)[0]) / (2 * h)
    assert grad[0] == pytest.approx(fd, rel=1e-5)


def test_plan_energy_matches_tree_energy():
    lam, T = 20.0, 0.2
    sol = solve_toy(lam, T)
    assert toy_energy_of_plan(sol.plan, lam) == pytest.approx(sol.E_upper, rel=1e-10)
    assert validate(sol.plan) == []


# -- the full toy problem ----------------------------------------------------------------

def test_pure_segment_regime():
    sol = solve_toy(0.1, 0.01)
    assert sol.N == 1 and sol.is_pure_segments
    assert sol.E_upper == pytest.approx(2 * (0.01 + 0.1 / 12), abs=1e-9)
    assert count_interior_branchings(sol.plan) == 0


@pytest.mark.parametrize("lam,T", [(1e-3, 1e-5), (2e-3, 1e-4), (1e-2, 1e-3), (0.01, 1.0)])
def test_small_lambda_gives_optimal_segment_count(lam, T):
    sol = solve_toy(lam, T)
    assert sol.is_pure_segments
    assert sol.N == optimal_segment_count(lam, T)[0]


def test_toy_lower_bound_below_solution():
    for lam, T in BRANCHING:
        sol = solve_toy(lam, T, grid=16)
        assert toy_lower_bound(lam, T) <= sol.E_upper


def test_branching_regime_beats_segments():
    sol = solve_toy(100.0, 0.05)
    assert sol.branchings > 0
    assert sol.E_upper < optimal_segment_count(100.0, 0.05)[1]


# -- Lagrangian side --------------------------------------------------------------------

@pytest.mark.parametrize("lam,T", [(0.1, 0.01), (3.0, 0.4)])
def test_lagrangian_single_segment(lam, T):
    plan = toy_plan([None], lam, T)
    fld = lagrangian_field(plan, lam)
    assert lagrangian_energy(fld) == pytest.approx(segment_energy(1, lam, T), rel=1e-12)


def test_identity_field_has_infinite_perimeter():
    xs = np.linspace(0.05, 0.95, 10)
    fld = LagrangianField(np.array([0.0, 1.0]), xs, np.full(10, 0.1), np.vstack([xs, xs]), 1.0)
    assert lagrangian_energy(fld) == math.inf


def test_non_monotone_field_rejected():
    with pytest.raises(ValueError):
        LagrangianField(np.array([0.0, 1.0]), np.array([0.1, 0.2]), np.array([0.5, 0.5]),
                        np.array([[0.0, 0.0], [0.3, 0.2]]), 1.0)


@pytest.mark.parametrize("lam,T", BRANCHING[:3])
def test_eulerian_lagrangian_agreement(lam, T):
    sol = solve_toy(lam, T, grid=32)
    fld = lagrangian_field(sol.plan, lam)
    assert np.all(np.diff(fld.X, axis=1) >= -1e-12)
    assert lagrangian_energy(fld) == pytest.approx(toy_energy_of_plan(sol.plan, lam), rel=1e-6)


# -- cone property and equipartition ---------------------------------------------------------

def test_cone_bounds_examples():
    assert cone_bounds(0.2, 0.4, (0.1, 0.9), 1.0, 0.2) == (0.4, 0.4)
    assert cone_bounds(0.0, 0.4, (0.1, 0.9), 1.0, 1.0) == pytest.approx((0.1, 0.9))
    assert cone_bounds(0.0, 0.5, (0.3, 0.7), 1.0, 0.5) == pytest.approx((0.4, 0.6))
    with pytest.raises(ValueError):
        cone_bounds(0.5, 0.5, (0.3, 0.7), 1.0, 0.4)


def test_segment_plan_inside_cones():
    assert check_cone_property(toy_plan([None] * 3, 1.0, 0.3), 1.0) == []


def test_cone_violation_reported():
    # root at 0.5 splits at once; the branches go out faster than the cone opens
    plan = BranchedPlan([0.0, 1.0, 1.0], [0.5, 0.1, 0.9], [0, 0], [1, 2], [0.5, 0.5], 1.0)
    bad = check_cone_property(plan, 1.0)
    assert bad and all(v.node == 0 for v in bad)


@pytest.mark.parametrize("lam,T", BRANCHING)
def test_solver_outputs_inside_cones(lam, T):
    sol = solve_E(SubtreeProblem(1.0, T, lam), depth=3, branch_grid=32)
    assert check_cone_property(sol.plan, lam) == []


@pytest.mark.parametrize("N", [1, 2, 5])
def test_equipartition_of_segments(N):
    bar, dev = equipartition_residual(toy_plan([None] * N, 1.0, 0.3), power=0.0)
    assert bar == N and dev == 0.0


def test_equipartition_detects_kink():
    plan = BranchedPlan([0.0, 0.5, 1.0], [0.5, 0.6, 0.9], [0, 1], [1, 2], [1.0, 1.0], 1.0)
    _, dev = equipartition_residual(plan, power=0.0)
    assert dev > 0.1


@pytest.mark.parametrize("lam,T", BRANCHING)
def test_equipartition_on_solver_outputs(lam, T):
    sol = solve_E(SubtreeProblem(1.0, T, lam), depth=3, branch_grid=32)
    bar, dev = equipartition_residual(sol.plan, power=0.0)
    assert dev <= 1e-3 * abs(bar)


def test_equipartition_bound_on_segments():
    assert equipartition_bound_ok(toy_plan([None] * 4, 1.0, 0.3))
