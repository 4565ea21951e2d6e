import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import expit

from conftest import fs_model, regression_weight, weight_on, zero_function
from kqlab.pluripotential import (
    DerivativeMismatchError,
    PolarizedModel,
    UncertifiedWeightError,
    certify,
    energy_derivative_along_perturbation,
    envelope,
    ma_energy,
    ma_measure,
    v_theta,
)
from kqlab.radial import DEFAULT_GRID, Grid, GridFunction, conv_tolerance, fubini_study, pair_measure

G = DEFAULT_GRID


def _oracle_energy() -> float:
    """Continuum energy of the regression weight on 2*fs by adaptive quadrature."""
    u = lambda s: 0.5 * (np.logaddexp(0, 2 * s - 2) - 2 * np.logaddexp(0, s))
    d0 = lambda s: 2 * expit(s) * (1 - expit(s))
    dt = lambda s: 4 * expit(2 * s - 2) * (1 - expit(2 * s - 2))
    val, _ = integrate.quad(lambda s: u(s) * (0.5 * (d0(s) + dt(s)) + d0(s)), -60, 60,
                            points=[0, 1], limit=500, epsabs=1e-13, epsrel=1e-12)
    return val / 4.0


REGRESSION_ENERGY = -0.6801111428523172


def bounded(grid, values):
    return GridFunction(grid, np.asarray(values, dtype=float), 0.0, 0.0)


# --- model and V_theta -------------------------------------------------------

def test_model_rejects_wrong_slopes():
    with pytest.raises(ValueError):
        PolarizedModel(2, fubini_study(G, 1.0))


def test_v_theta_vanishes_for_full_slope_references(fs2, lse2):
    assert np.max(np.abs(v_theta(fs2).values)) < 1e-12
    assert np.max(np.abs(v_theta(lse2).values)) < 1e-12


# --- envelopes ---------------------------------------------------------------

def test_envelope_of_zero_and_constants(fs2):
    p, rep = envelope(fs2, zero_function())
    assert np.max(np.abs(p.values)) < 1e-12 and rep.mask.all()
    p, _ = envelope(fs2, bounded(G, np.full(G.n_nodes, -1.7)))
    assert np.allclose(p.values, -1.7, atol=1e-12)


def _tanh_envelope_mass(n):
    g = Grid(-30.0, 30.0, n)
    model = fs_model(2, g)
    f = bounded(g, -0.3 * np.tanh(g.nodes))
    p, rep = envelope(model, f)
    assert np.all(p.values <= f.values + 1e-12)
    return rep.equilibrium_mass_outside


def test_equilibrium_concentrates_on_contact_set():
    coarse = _tanh_envelope_mass(4001)
    fine = _tanh_envelope_mass(16001)
    assert coarse <= 1e-3 * 2
    assert fine <= coarse


def test_contact_set_lies_where_curvature_is_nonnegative(fs2):
    f = bounded(G, -0.3 * np.tanh(G.nodes) + 0.2 * np.sin(3 * G.nodes) / np.cosh(G.nodes))
    _, rep = envelope(fs2, f)
    total = fs2.phi0.values + f.values
    second = np.empty_like(total)
    second[1:-1] = total[2:] - 2 * total[1:-1] + total[:-2]
    interior = rep.mask.copy()
    interior[[0, -1]] = False
    assert np.all(second[interior] >= -10 * conv_tolerance(total) - 10 * rep.contact_tol)
    assert not rep.mask.all()


def test_rooftop_envelope_is_below_both(fs2):
    a = bounded(G, 0.4 * np.tanh(G.nodes))
    b = bounded(G, -0.4 * np.tanh(G.nodes))
    p, _ = envelope(fs2, a.minimum(b))
    assert np.all(p.values <= np.minimum(a.values, b.values) + 1e-12)
    assert p.psh_certified


# --- Monge-Ampere measures ---------------------------------------------------

def test_ma_measure_of_zero_is_logistic(fs2):
    mu = ma_measure(fs2, fs2.zero())
    assert mu.total == pytest.approx(2.0, abs=1e-12)
    dens = mu.cell_masses / G.h
    mid = G.nodes[:-1] + 0.5 * G.h
    exact = 2 * expit(mid) * (1 - expit(mid))
    assert np.max(np.abs(dens - exact)) < 0.1 * G.h ** 2


def test_ma_measure_ignores_constants(fs2):
    a = ma_measure(fs2, fs2.zero())
    b = ma_measure(fs2, fs2.constant(3.0))
    assert np.allclose(a.cell_masses, b.cell_masses, atol=1e-12)


def test_ma_measure_is_linear_in_the_potential(fs2):
    other = weight_on(G, "lse(0:0, 2:-2; 1.0)")
    u = certify(fs2, bounded(G, 0.5 * (other.values - fs2.phi0.values)))
    from kqlab.radial import slope_measure

    avg = (slope_measure(fs2.phi0) + slope_measure(other)) * 0.5
    assert np.allclose(ma_measure(fs2, u).cell_masses, avg.cell_masses, atol=1e-12)


def test_uncertified_weight_is_rejected(fs2):
    bad = certify(fs2, bounded(G, -3.0 * np.exp(-G.nodes ** 2)))
    assert not bad.psh_certified
    with pytest.raises(UncertifiedWeightError):
        ma_measure(fs2, bad)
    with pytest.raises(UncertifiedWeightError):
        ma_energy(fs2, bad)


# --- energy ------------------------------------------------------------------

def test_energy_of_zero_and_constants(fs2):
    assert abs(ma_energy(fs2, fs2.zero())) < 1e-15
    assert ma_energy(fs2, fs2.constant(-0.8)) == pytest.approx(-0.8, rel=1e-12)


def test_regression_energy_matches_quadrature_oracle(fs2):
    oracle = _oracle_energy()
    assert oracle == pytest.approx(REGRESSION_ENERGY, abs=1e-12)
    assert ma_energy(fs2, regression_weight(fs2)) == pytest.approx(oracle, abs=1e-5)
    fine = fs_model(2, G.refine(10))
    assert ma_energy(fine, regression_weight(fine)) == pytest.approx(oracle, abs=1e-7)


def _family(model, a, b):
    """Certified weights ``a * (lse - phi0)/2 + b``-style perturbations."""
    other = weight_on(model.grid, "lse(0:0, 2:-2; 1.0)")
    return certify(model, bounded(model.grid, a * 0.5 * (other.values - model.phi0.values) + b))


@given(st.floats(0, 1), st.floats(0, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_energy_sandwich(a1, a2, b1, b2):
    model = fs_model(2)
    u, v = _family(model, a1, b1), _family(model, a2, b2)
    d = model.d
    diff = u.u - v.u
    lower = pair_measure(diff, ma_measure(model, u)) / d
    upper = pair_measure(diff, ma_measure(model, v)) / d
    gap = ma_energy(model, u) - ma_energy(model, v)
    scale = 1e-8 * (1 + abs(gap))
    assert lower <= gap + scale
    assert gap <= upper + scale


@given(st.floats(0, 1), st.floats(0, 2))
def test_energy_is_monotone(a, c):
    model = fs_model(2)
    u = _family(model, a, 0.0)
    v = certify(model, u.u - c)
    assert ma_energy(model, v) <= ma_energy(model, u) + 1e-12


@given(st.floats(-5, 5))
def test_energy_translation(c):
    model = fs_model(2)
    u = regression_weight(model)
    shifted = certify(model, u.u + c)
    assert ma_energy(model, shifted) == pytest.approx(ma_energy(model, u) + c, rel=1e-10, abs=1e-10)


def test_decreasing_continuity(fs2):
    u = regression_weight(fs2)
    target = ma_energy(fs2, u)
    errs = [abs(ma_energy(fs2, certify(fs2, u.u + 2.0 ** -j)) - target) for j in range(5)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] == pytest.approx(2.0 ** -4, rel=1e-9)


# --- energy derivative -------------------------------------------------------

def test_derivative_along_constant_is_one(fs2):
    one = bounded(G, np.ones(G.n_nodes))
    res = energy_derivative_along_perturbation(fs2, regression_weight(fs2), one)
    assert res.analytic == pytest.approx(1.0, abs=1e-12)
    assert res.finite_difference == pytest.approx(1.0, abs=1e-8)


def test_derivative_along_logistic_matches_finite_difference(fs2):
    f = bounded(G, expit(G.nodes))
    f = GridFunction(G, f.values, 0.0, 0.0, slope_tol=1e-3)
    res = energy_derivative_along_perturbation(fs2, regression_weight(fs2), f)
    assert abs(res.analytic - res.finite_difference) <= 1e-4 * f.osc()


def test_derivative_at_reference_saturates_energy_estimate(fs2):
    v = v_theta(fs2)
    u = regression_weight(fs2)
    f = u.u - v.u
    res = energy_derivative_along_perturbation(fs2, v, f)
    # at u = V the lower bound of the energy estimate is the derivative itself
    assert res.analytic == pytest.approx(pair_measure(f, ma_measure(fs2, v)) / fs2.d, abs=1e-14)
    assert res.analytic >= ma_energy(fs2, u) - 1e-8


def test_derivative_mismatch_is_reported(fs2):
    # a weight sitting on a kink: the envelope moves non-smoothly, so a huge step
    # makes the finite difference disagree with the measure pairing
    f = bounded(G, -np.abs(np.tanh(G.nodes)))
    with pytest.raises(DerivativeMismatchError) as info:
        energy_derivative_along_perturbation(fs2, fs2.zero(), f, step=0.5, rel_tol=1e-9)
    assert info.value.analytic != info.value.numeric
