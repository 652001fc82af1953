from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from branchtorus.analysis import (box_counting_dimension, default_radii, dim_bounds_from_beta,
                                  fit_power_law, is_alpha_regular, local_energy_exponent,
                                  local_masses, lower_dim_bound, prune_alpha_regular,
                                  quantization_check, regularity_defect, upper_dim_bound)
from branchtorus.constants import C_QUANT
from branchtorus.constructions import (choose_parameters, dyadic_interpolation,
                                       nonuniform_branching, scaling_construction)
from branchtorus.core_model import DiscreteMeasure, GridDensity, internal_energy


# -- fits and exponent bookkeeping --------------------------------------------------------

def test_fit_recovers_power_law():
    s = np.geomspace(1e-4, 1e-1, 9)
    fit = fit_power_law(s, 3.0 * s**0.4)
    assert fit.exponent == pytest.approx(0.4, abs=1e-12)
    assert fit.prefactor == pytest.approx(3.0, rel=1e-10)
    assert fit.r_squared == pytest.approx(1.0)
    assert set(fit.to_dict()) == {"exponent", "prefactor", "r2"}


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_power_law([1.0], [1.0])
    with pytest.raises(ValueError):
        fit_power_law([1.0, 2.0], [1.0, -1.0])


def test_bounds_meet_at_three_sevenths():
    assert dim_bounds_from_beta(Fraction(3, 7)) == (Fraction(8, 5), Fraction(8, 5))


def test_bounds_at_one_third():
    assert dim_bounds_from_beta(Fraction(1, 3)) == (Fraction(3, 2), 2)


def test_lower_bound_tends_to_one():
    lo, hi = dim_bounds_from_beta(1e-9)
    assert lo == pytest.approx(1.0, abs=1e-8) and hi == 2.0


def test_bounds_monotone_on_grid():
    b = np.linspace(1e-3, 1 - 1e-3, 1000)
    assert np.all(np.diff(lower_dim_bound(b)) > 0)
    assert np.all(np.diff(upper_dim_bound(b)) < 0)


@given(st.fractions(Fraction(1, 1000), Fraction(999, 1000)))
def test_bounds_ordered_exactly_above_three_sevenths(beta):
    lo, hi = dim_bounds_from_beta(beta)
    if beta >= Fraction(3, 7):
        assert lo >= hi
    else:
        assert lo < hi


def test_invalid_beta():
    with pytest.raises(ValueError):
        dim_bounds_from_beta(Fraction(1))


def test_local_energy_exponent_synthetic():
    eps = np.geomspace(1e-4, 1e-1, 6)
    fit = local_energy_exponent({e: e ** (1 / 3) for e in eps})
    assert fit.exponent == pytest.approx(1 / 3, abs=1e-12)


def test_local_energy_exponent_needs_range():
    with pytest.raises(ValueError):
        local_energy_exponent({1e-2: 1.0, 2e-2: 1.0, 3e-2: 1.0, 4e-2: 1.0})


def test_local_energy_of_dyadic_interpolation(rng):
    mu = DiscreteMeasure(rng.random((10, 2)), rng.random(10) + 0.1).normalized()
    nu = DiscreteMeasure(rng.random((10, 2)), rng.random(10) + 0.1).normalized()
    T = 1e-2
    con = dyadic_interpolation(mu, nu, T)
    eps = np.geomspace(T / 300, T, 8)
    fam = {e: internal_energy(con.plan, T - e, T).total for e in eps}
    assert local_energy_exponent(fam).exponent >= 1 / 3 - 0.05


def test_energy_exponent_of_nonuniform_family():
    Ts = np.geomspace(1e-4, 1e-2, 5)
    fam = {T: scaling_construction(1.0, T).certificate.value for T in Ts}
    assert local_energy_exponent(fam).exponent == pytest.approx(3 / 7, abs=0.05)


# -- box counting ------------------------------------------------------------------------------

def test_grid_has_dimension_two():
    fit = box_counting_dimension(DiscreteMeasure.uniform_grid(16), 2.0 ** -np.arange(1, 5))
    assert fit.exponent == pytest.approx(2.0, abs=0.05)


def test_single_atom_has_dimension_zero():
    fit = box_counting_dimension(DiscreteMeasure([[0.3, 0.3]], [1.0]), [0.5, 0.25, 0.1, 0.01])
    assert fit.exponent == pytest.approx(0.0, abs=1e-12)


def test_segment_density_has_dimension_one():
    g = GridDensity([[0.1, 0.5]], [[0.9, 0.5 + 1e-9]], [1.0])
    fit = box_counting_dimension(g, 2.0 ** -np.arange(5, 10))
    assert fit.exponent == pytest.approx(1.0, abs=0.05)


def test_nonuniform_trace_dimension():
    T = 1e-3
    N, r, _ = choose_parameters(1.0, T)
    con = nonuniform_branching(N, r, T, levels=1)
    fit = box_counting_dimension(con.trace_density, r * np.array([0.75, 0.875, 1.0, 1.125, 1.25]),
                                 method="cover")
    assert fit.exponent == pytest.approx(1.6, abs=0.1)
    n = dict(fit.points)[r]
    assert 0.5 <= n * r**1.6 <= 2.0


def test_box_counting_argument_checks():
    with pytest.raises(ValueError):
        box_counting_dimension(DiscreteMeasure.uniform_grid(4), [0.5, 0.25])
    with pytest.raises(ValueError):
        box_counting_dimension(DiscreteMeasure.uniform_grid(4), [0.5, 0.25, 0.1, 0.1], method="x")


# -- pruning -----------------------------------------------------------------------------------

def test_regular_grid_unchanged():
    g = DiscreteMeasure.uniform_grid(16)
    out = prune_alpha_regular(g, 2.0, 4.0)
    assert len(out) == len(g) and np.array_equal(out.masses, g.masses)


def test_single_atom_pruned_away():
    assert len(prune_alpha_regular(DiscreteMeasure([[0.2, 0.2]], [1.0]), 1.0, 4.0)) == 0


def test_heavy_atom_removed_grid_retained():
    g = DiscreteMeasure.uniform_grid(16, total=0.994)
    sigma = DiscreteMeasure(np.vstack([g.positions, [[0.5, 0.5]]]), np.r_[g.masses, 0.006])
    out = prune_alpha_regular(sigma, 2.0, 4.0)
    assert len(out) == len(g)
    assert not np.any(np.all(out.positions == 0.5, axis=1))


def test_local_masses_open_balls():
    g = DiscreteMeasure.uniform_grid(4)
    m = local_masses(g, [0.25, 0.2500001])
    assert np.allclose(m[:, 0], 1 / 16) and np.allclose(m[:, 1], 5 / 16)


@given(st.integers(0, 2**31), st.floats(0.5, 2.0), st.floats(1.0, 8.0))
def test_pruned_measure_is_regular(seed, alpha, M):
    rng = np.random.Generator(np.random.Philox(seed))
    sigma = DiscreteMeasure(rng.random((30, 2)), rng.random(30) + 0.1).normalized()
    radii = default_radii(sigma)
    out = prune_alpha_regular(sigma, alpha, M, radii)
    assert np.all(out.masses <= sigma.masses.max())
    if len(out):
        assert regularity_defect(out, alpha, M, radii) <= 1 + 1e-12


def test_density_regularity_check():
    assert is_alpha_regular(GridDensity.lebesgue(2), 2.0)
    assert not is_alpha_regular(GridDensity([[0.0, 0.0]], [[1e-3, 1e-3]], [1.0]), 2.0)


# -- quantization ------------------------------------------------------------------------------

LEB = GridDensity.lebesgue(2)


def test_quantization_single_atom():
    res = quantization_check(LEB, [1.0], 2.0, starts=4)
    # the discrete optimum on the 32-grid is (1/6)(1 - 1/32^2)
    assert res.R == pytest.approx((1 - 1 / 32**2) / 6, rel=1e-9)
    assert res.bound == 1.0
    assert res.ratio == pytest.approx(1 / 6, abs=1e-3)


def test_quantization_four_atoms():
    res = quantization_check(LEB, [0.25] * 4, 2.0, starts=4)
    assert res.R <= 1 / 24 + 1e-12  # the square arrangement is admissible
    assert res.bound == pytest.approx(0.25)
    assert C_QUANT <= res.ratio <= 1 / 6 + 1e-3
    single = quantization_check(LEB, [1.0], 2.0, starts=2).ratio
    assert res.ratio == pytest.approx(single, rel=0.05)


def test_quantization_bound_exponent():
    for N in (1, 2, 4, 8):
        res = quantization_check(LEB, [1.0 / N] * N, 2.0, grid=8, starts=1)
        assert res.bound == pytest.approx(N ** (-2 / 2), rel=1e-12)


def test_quantization_invariance():
    start = np.array([[0.1, 0.2], [0.6, 0.7], [0.3, 0.9]])
    Phi = [0.5, 0.3, 0.2]
    base = quantization_check(LEB, Phi, 2.0, grid=16, initial=start).R
    shifted = quantization_check(LEB, Phi, 2.0, grid=16, initial=start + [3 / 16, 5 / 16]).R
    assert shifted == pytest.approx(base, rel=1e-9)
    # masses are sorted internally, so the order of Phi does not matter
    relabeled = quantization_check(LEB, Phi[::-1], 2.0, grid=16, initial=start).R
    assert relabeled == pytest.approx(base, rel=1e-9)


def test_quantization_rejects_irregular_sigma():
    with pytest.raises(ValueError):
        quantization_check(DiscreteMeasure([[0.5, 0.5]], [1.0]), [1.0], 2.0)
    with pytest.raises(ValueError):
        quantization_check(LEB, [0.7, 0.7], 2.0)


def test_fit_through_origin_uses_uncentered_r2():
    fit = fit_power_law([10.0, 20.0, 40.0, 80.0], [100.0] * 4, through_origin=True)
    assert 0.0 < fit.r_squared < 1.0 and fit.prefactor == 1.0
    assert fit_power_law([2.0, 4.0], [4.0, 16.0], through_origin=True).r_squared == 1.0
