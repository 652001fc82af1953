import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import branchtorus.constants as K
from branchtorus.constructions import (CertificationError, DyadicSchedule, building_block,
                                       choose_parameters, composite_energy, discretize_on_grid,
                                       dyadic_interpolation, nonuniform_branching,
                                       refinement_tail, scaling_construction, shear_competitor,
                                       trace_norm_sq, uniform_branching, uniform_cell_atoms,
                                       uniform_cell_count)
from branchtorus.core_model import BranchedPlan, DiscreteMeasure, internal_energy, trace, validate
from branchtorus.sobolev import fourier_of_measure
from branchtorus.transport import w2_periodic_discrete


def random_measure(rng, n=10, dim=2):
    return DiscreteMeasure(rng.random((n, dim)), rng.random(n) + 0.1).normalized()


def four_point_grid(r=1.0, origin=(0.0, 0.0)):
    c = np.array([0.25, 0.75]) * r
    pts = np.array([[a, b] for a in c for b in c]) + np.asarray(origin)
    return DiscreteMeasure(pts, [0.25] * 4)


# -- building block -------------------------------------------------------------------

def test_block_single_atom_is_vertical_segment():
    T, Phi = 0.3, 0.49
    center = DiscreteMeasure([[0.5, 0.5]], [Phi])
    con = building_block(Phi, 0.2, T, center, center)
    e = internal_energy(con.plan)
    assert e.perimeter == pytest.approx(2 * T * math.sqrt(Phi), rel=1e-12)
    assert e.kinetic == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("T", [0.05, 0.3, 1.0, 3.0])
def test_block_four_point_grid_bound(T):
    con = building_block(1.0, 1.0, T, four_point_grid(), four_point_grid(), origin=np.zeros(2))
    I = internal_energy(con.plan).total
    assert I <= K.C_BB * (T + 1 / T)
    assert validate(con.plan) == []


def test_block_kinetic_scales_with_side():
    T = 0.2
    big = building_block(1.0, 0.5, T, four_point_grid(0.5), four_point_grid(0.5), origin=np.zeros(2))
    small = building_block(1.0, 0.25, T, four_point_grid(0.25), four_point_grid(0.25),
                           origin=np.zeros(2))
    eb, es = internal_energy(big.plan), internal_energy(small.plan)
    assert es.perimeter == pytest.approx(eb.perimeter, rel=1e-12)
    assert es.kinetic == pytest.approx(eb.kinetic / 4, rel=1e-12)


@given(st.integers(0, 2**31), st.floats(0.01, 2.0))
def test_block_random_endpoints_certified(seed, T):
    rng = np.random.Generator(np.random.Philox(seed))
    r = 0.5
    mu = DiscreteMeasure(rng.random((6, 2)) * r, rng.random(6) + 0.1).normalized()
    nu = DiscreteMeasure(rng.random((6, 2)) * r, rng.random(6) + 0.1).normalized()
    con = building_block(1.0, r, T, mu, nu, origin=np.zeros(2))
    assert con.certificate.passed
    assert validate(con.plan) == []
    tr = trace(con.plan, T)
    assert w2_periodic_discrete(tr, nu).cost == pytest.approx(0.0, abs=1e-20)


def test_block_rejects_atoms_outside_cube():
    outside = DiscreteMeasure([[0.9, 0.9]], [1.0])
    with pytest.raises(ValueError):
        building_block(1.0, 0.5, 0.1, outside, outside, origin=np.zeros(2))


@pytest.mark.parametrize("N,r", [(1, 1.0), (3, 0.1), (10, 0.02)])
def test_refinement_tail_is_level_independent(N, r):
    values = [nonuniform_branching(N, r, 0.02, levels=L).certificate.value for L in (1, 2, 3)]
    assert values[1] == pytest.approx(values[0], rel=1e-12)
    assert values[2] == pytest.approx(values[0], rel=1e-12)


def test_refinement_tail_positive_and_decreasing():
    tails = [refinement_tail(0.01, 0.1, 0.02, L) for L in (1, 2, 3, 4)]
    assert all(t > 0 for t in tails) and np.all(np.diff(tails) < 0)
    with pytest.raises(ValueError):
        refinement_tail(0.01, 0.1, 0.02, 0)


# -- branching constructions -------------------------------------------------------------

def test_uniform_single_cell_is_a_block():
    T = 0.1
    con = uniform_branching(1, T, levels=2)
    atoms = uniform_cell_atoms(np.zeros(2), 1.0, 1.0, 2)
    block = building_block(1.0, 1.0, T, atoms, atoms, origin=np.zeros(2))
    assert internal_energy(con.plan).total == pytest.approx(internal_energy(block.plan).total, rel=1e-12)


@pytest.mark.parametrize("T", [1e-3, 1e-2, 1e-1])
def test_uniform_branching_ratio(T):
    con = uniform_branching(uniform_cell_count(T), T)
    assert con.certificate.passed
    assert validate(con.plan) == []
    assert con.certificate.value <= K.C_UNIFORM * con.certificate.reference


def test_nonuniform_with_full_cells_matches_uniform():
    T, N = 0.02, 7
    a = uniform_branching(N, T, levels=1)
    b = nonuniform_branching(N, 1 / N, T, levels=1)
    assert a.certificate.value == pytest.approx(b.certificate.value, rel=1e-12)


def test_nonuniform_rejects_oversized_squares():
    with pytest.raises(ValueError):
        nonuniform_branching(4, 0.3, 0.1)


def test_trace_mass_and_density():
    con = nonuniform_branching(3, 0.1, 0.05, levels=1)
    assert trace(con.plan, 0.05).total_mass() == pytest.approx(1.0, abs=1e-12)
    dens = con.trace_density
    assert dens.total_mass() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(dens.sides, 0.1)


@pytest.mark.parametrize("N,r", [(4, 0.05), (8, 0.02), (16, 0.01), (3, 1 / 3)])
def test_trace_norm_bound(N, r):
    con = nonuniform_branching(N, r, 0.01, levels=1)
    value, tail = trace_norm_sq(con.trace_density, N)
    assert value + tail <= K.C_TRACE_NORM / (r * N * N)


def test_choose_parameters_regimes():
    assert choose_parameters(1.0, 2.0) == (1, 1.0, "thick")
    N, r, regime = choose_parameters(1e-4, 0.1)
    assert (N, regime) == (1, "small-lambda") and r == pytest.approx((1e-4 * 0.1) ** (1 / 3))
    N, r, regime = choose_parameters(1.0, 1e-3)
    assert N == 52 and regime == "branching"
    assert r == pytest.approx(1e-3 ** (5 / 7))


@pytest.mark.parametrize("lam,T", [(1.0, 2.0), (1e-4, 0.1), (1.0, 1e-2), (100.0, 1e-3)])
def test_scaling_construction_certified(lam, T):
    con = scaling_construction(lam, T)
    assert con.certificate.passed
    E = composite_energy(con, lam)
    assert E["E"] == pytest.approx(con.certificate.value)


def test_certification_failure_is_loud(monkeypatch):
    monkeypatch.setattr(K, "C_UNIFORM", 1e-6)
    with pytest.raises(CertificationError):
        uniform_branching(3, 0.1)
    con = uniform_branching(3, 0.1, certify=False)
    assert not con.certificate.passed


# -- dyadic interpolation -------------------------------------------------------------------

def test_schedule_structure():
    s = DyadicSchedule.build(1e-3, 0.3)
    assert s.N0 == round(1e-3 ** (-2 / 3))
    assert np.all(np.diff(s.times) > 0) and s.times[-1] < 1e-3
    assert np.all(s.grids[1:] == 2 * s.grids[:-1])


def test_discretize_ties_go_to_lower_cell():
    mu = DiscreteMeasure([[0.5, 0.25], [0.1, 0.1]], [0.5, 0.5])
    out = discretize_on_grid(mu, 4)
    assert np.allclose(sorted(out.positions[:, 0]), [0.125, 0.375])


def test_dyadic_same_atom():
    atom = DiscreteMeasure([[0.3, 0.6]], [1.0])
    con = dyadic_interpolation(atom, atom, 1e-3)
    assert con.certificate.extra["perimeter_ratio"] <= K.C_DYADIC
    assert validate(con.plan) == []


@pytest.mark.parametrize("T", [1e-4, 1e-3, 1e-2])
def test_dyadic_random_endpoints(T, rng):
    mu, nu = random_measure(rng), random_measure(rng)
    con = dyadic_interpolation(mu, nu, T, delta=0.3, eta=0.5)
    cert = con.certificate
    assert cert.passed and cert.extra["support_ok"]
    for st_ in cert.extra["stages"]:
        assert st_["M_mid"] <= st_["M_k"] + st_["M_k1"]
        assert st_["plan_support"] <= st_["M_k"] + st_["M_k1"] - 1
    # the closing stage lands exactly on the endpoints
    assert w2_periodic_discrete(trace(con.plan, T), nu).cost == pytest.approx(0.0, abs=1e-18)
    assert w2_periodic_discrete(trace(con.plan, -T), mu).cost == pytest.approx(0.0, abs=1e-18)


def test_dyadic_levels_approach_endpoint(rng):
    mu, nu = random_measure(rng), random_measure(rng)
    T = 1e-2
    con = dyadic_interpolation(mu, nu, T)
    sched = DyadicSchedule.build(T, 0.3)
    dists = [w2_periodic_discrete(trace(con.plan, t), nu).cost for t in sched.times[1::3]]
    assert dists[-1] < dists[0]
    assert dists[-1] < 1e-3


def test_dyadic_thick_regime_uses_block(rng):
    mu, nu = random_measure(rng), random_measure(rng)
    con = dyadic_interpolation(mu, nu, 2.0)
    assert con.certificate.kind == "block"


def test_dyadic_rejects_bad_parameters(rng):
    mu = random_measure(rng)
    with pytest.raises(ValueError):
        dyadic_interpolation(mu, mu, 1e-2, eta=0.0)
    with pytest.raises(ValueError):
        dyadic_interpolation(mu, DiscreteMeasure([[0.1, 0.1]], [0.5]), 1e-2)


# -- shear competitor ---------------------------------------------------------------------------

def vertical_segment(T=1.0):
    return BranchedPlan([-T, T], [[0.5, 0.5], [0.5, 0.5]], [0], [1], [1.0], T)


def test_shear_zero_is_identity():
    plan = vertical_segment()
    new, dI, transform, cert = shear_competitor(plan, 0.0, 0.1)
    assert dI == 0.0 and new is plan
    tab = fourier_of_measure(trace(plan, 1.0), 4)
    assert transform(tab) is tab


@given(st.floats(1e-3, 0.3), st.floats(0.01, 0.9))
def test_shear_single_segment_closed_form(eta, eps):
    _, dI, _, cert = shear_competitor(vertical_segment(), eta, eps)
    expected = (math.sqrt(2) - 1) * 2 * eps + 2 * eta**2 / eps
    assert dI == pytest.approx(expected, rel=1e-9, abs=1e-14)
    assert cert.passed


def test_shear_trace_and_fourier_transform():
    con = uniform_branching(2, 0.1, levels=1)
    eta = 0.07
    new, _, transform, _ = shear_competitor(con.plan, eta, 0.02)
    assert validate(new) == []
    before = fourier_of_measure(trace(con.plan, 0.1), 6)
    after = fourier_of_measure(trace(new, 0.1), 6)
    expected = transform(before)
    assert np.allclose(after.values, expected.values, atol=1e-12)
    assert np.allclose(expected.values, before.values * np.cos(2 * np.pi * eta * before.ks[:, 0]))


def test_shear_on_construction_certified():
    con = uniform_branching(uniform_cell_count(1e-2), 1e-2, levels=1)
    _, dI, _, cert = shear_competitor(con.plan, 0.01, 1e-3, axis=2)
    assert cert.passed and dI > 0
