import math

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from perwave.applications import toy_model
from perwave.errors import NonHyperbolic
from perwave.floquet import (absolute_spectrum_test, essential_boundary_bisect,
                             essential_spectrum_grid, essential_spectrum_test, find_separating_weight,
                             floquet_batch, floquet_data, monodromy, slowest_decay_rate,
                             spectral_projection, state_field, transport)
from perwave.grid import constant_state
from perwave.model import WeightSpec, linearize_first_order
from perwave.solver import solve_periodic_state

SEED = 2468


def _toy_state(k=0, eps=0.0):
    return toy_model(eps), constant_state([2 * math.pi * k], 2.0, 64)


def test_monodromy_closed_form_at_lambda_three():
    model, state = _toy_state(1)
    M = monodromy(state_field(model, state), 2.0, 3.0)
    ev = np.sort(np.linalg.eigvals(M).real)
    assert ev[0] == pytest.approx(math.exp(-4.0), rel=1e-9)
    assert ev[1] == pytest.approx(math.exp(4.0), rel=1e-9)


def test_traceless_monodromy_has_unit_determinant():
    model, state = _toy_state()
    for lam in (0.0, -3.0, 1.5 + 0.7j):
        assert abs(np.linalg.det(monodromy(state_field(model, state), 2.0, lam)) - 1.0) <= 1e-9


def test_double_multiplier_at_band_edge():
    model, state = _toy_state()
    fd = floquet_data(state_field(model, state), 2.0, -1.0)
    np.testing.assert_allclose(fd.multipliers, [1.0, 1.0], atol=1e-7)
    assert not fd.hyperbolic


def test_exponents_at_zero():
    model, state = _toy_state()
    fd = floquet_data(state_field(model, state), 2.0, 0.0)
    np.testing.assert_allclose(fd.exponents, [-1.0, 1.0], atol=1e-9)
    assert fd.morse_index == 1 and fd.hyperbolic
    assert fd.liouville_error <= 1e-8 and fd.eig_residual <= 1e-8


def test_exponents_purely_imaginary_inside_band():
    model, state = _toy_state()
    fd = floquet_data(state_field(model, state), 2.0, -5.0)
    assert np.max(np.abs(fd.exponents.real)) <= 1e-9
    # principal logarithms: exponents are determined modulo 2 pi i / T
    np.testing.assert_allclose(np.sort_complex(np.exp(2.0 * fd.exponents)),
                               np.sort_complex(np.exp([-4j, 4j])), atol=1e-9)
    assert fd.morse_index == 0 and fd.unit_circle_distance <= 1e-7


def test_uniform_weight_shift():
    model, state = _toy_state()
    fd = floquet_data(state_field(model, state), 2.0, 0.0, weight_shift=0.5)
    np.testing.assert_allclose(fd.exponents, [-1.5, 0.5], atol=1e-9)
    assert fd.morse_index == 1


def test_essential_spectrum_membership_examples():
    model, state = _toy_state()
    ends = (state, state)
    out = essential_spectrum_test(model, ends, -0.5)
    assert not out["in_spectrum"] and out["morse"] == (1, 1) and out["fredholm_index"] == 0
    assert essential_spectrum_test(model, ends, -2.0)["in_spectrum"]
    edge = essential_spectrum_test(model, ends, -1.0)
    assert edge["in_spectrum"] and max(edge["unit_circle_distance"]) <= 1e-7
    assert edge["fredholm_index"] is None


def test_essential_grid_agrees_with_pointwise_test():
    model, state = _toy_state()
    lams = np.array([-2.5, -0.5, 0.3 + 0.2j, -3.0 + 0.1j])
    rows = essential_spectrum_grid(model, (state, state), lams, jobs=2)
    assert [r["in_spectrum"] for r in rows] == [
        essential_spectrum_test(model, (state, state), lam)["in_spectrum"] for lam in lams]


def test_boundary_bisection_and_bad_bracket():
    model, state = _toy_state()
    assert essential_boundary_bisect(model, state, -2.0, 0.0, tol=1e-10) == pytest.approx(-1.0, abs=1e-8)
    with pytest.raises(NonHyperbolic):
        essential_boundary_bisect(model, state, 0.0, 1.0)


def test_absolute_spectrum_examples():
    model, state = _toy_state()
    assert absolute_spectrum_test(model, [state], -2.0, 1)
    assert not absolute_spectrum_test(model, [state], 0.5, 1)
    assert not absolute_spectrum_test(model, [], -2.0, 1)
    with pytest.raises(ValueError):
        absolute_spectrum_test(model, [state], 0.0, 2)


def test_separating_weight_and_decay_rate():
    model, state = _toy_state()
    assert find_separating_weight(model, state, 0.0, 1) == 0.0
    eta = find_separating_weight(model, state, 0.0, 2)
    assert eta is not None and 1.0 < eta <= 1.1
    assert find_separating_weight(model, state, 0.0, 2, eta_max=0.5) is None
    # both exponents share a real part inside the band, so no weight splits them
    assert find_separating_weight(model, state, -2.0, 1) is None
    assert slowest_decay_rate(model, state) == pytest.approx(1.0, abs=1e-9)


def test_spectral_projection_is_stable_projector():
    model = toy_model(0.3)
    state = solve_periodic_state(model, constant_state([0.01], 2.0, 64))
    fd = floquet_data(state_field(model, state), 2.0, 0.4 + 0.2j)
    P = spectral_projection(fd)
    assert np.linalg.norm(P @ P - P) <= 1e-9
    assert np.trace(P).real == pytest.approx(fd.morse_index, abs=1e-9)
    assert np.linalg.norm(fd.monodromy @ P - P @ fd.monodromy) <= 1e-8 * np.linalg.norm(fd.monodromy)


def test_transport_ledger_reproduces_exact_volume():
    model = toy_model(0.3)
    state = solve_periodic_state(model, constant_state([0.01], 2.0, 64))
    field = state_field(model, state)
    Y0 = np.array([[1.0], [0.3]])
    raw, _ = transport(field, 0.0, 6.0, Y0, [0.7])
    ortho, ledger = transport(field, 0.0, 6.0, Y0, [0.7], checkpoints=[2.0, 4.0], orthonormalize=True)
    assert np.linalg.norm(ortho[0] * np.exp(ledger[0]) - raw[0]) <= 1e-8 * np.linalg.norm(raw[0])


@seed(SEED)
@settings(max_examples=10, database=None)
@given(re=st.floats(-2.0, 2.0), im=st.floats(0.05, 1.0))
def test_conjugate_multipliers(re, im):
    model = toy_model(0.3)
    state = solve_periodic_state(model, constant_state([0.01], 2.0, 64))
    a, b = floquet_batch(state_field(model, state), 2.0, [complex(re, im), complex(re, -im)])
    np.testing.assert_allclose(np.sort_complex(b.multipliers), np.sort_complex(np.conj(a.multipliers)),
                               atol=1e-9 * max(1.0, np.max(np.abs(a.multipliers))))


@seed(SEED)
@settings(max_examples=10, database=None)
@given(re=st.floats(-3.0, 3.0), im=st.floats(-1.0, 1.0), eta=st.floats(-1.0, 1.0))
def test_constant_field_weight_shift_law(re, im, eta):
    model, state = _toy_state()
    lam = complex(re, im)
    base = floquet_data(state_field(model, state), 2.0, lam)
    shifted = floquet_data(linearize_first_order(model, state, WeightSpec.uniform(eta)), 2.0, lam)
    np.testing.assert_allclose(np.sort_complex(shifted.exponents),
                               np.sort_complex(base.exponents - eta), atol=1e-10)
