import math

import numpy as np
import pytest

from perwave.applications import (KreinReport, bright_soliton, classify_gp_multipulse, count_zeros,
                                  effective_potential_toy, gp_krein_report, gp_model,
                                  gp_pulse_primary, klausmeier_model, klausmeier_pulse,
                                  klausmeier_slope, lambda0_slope_toy, melnikov_klausmeier,
                                  pinning_integral_gp, sine_gordon_front, sine_gordon_profile,
                                  toy_model, toy_pinned_front, toy_stable_site)
from perwave.errors import ContinuationStalled, NoConvergence
from perwave.grid import Grid, Profile

SG_NORM_SQ = 8.0


@pytest.fixture(scope="module")
def sg_front():
    prof = sine_gordon_profile(40.0, 0.01)
    return prof, sine_gordon_front(prof.x, 0, 1, 1)


@pytest.fixture(scope="module")
def klausmeier_pulse_coarse():
    return klausmeier_pulse(klausmeier_model(0.0), nodes_per_period=320)


def test_sine_gordon_derivative_norm(sg_front):
    prof, du = sg_front
    assert np.sum(prof.grid.weights() * du**2) == pytest.approx(SG_NORM_SQ, rel=1e-10)


def test_effective_potential_constant_for_constant_potential(sg_front):
    prof, du = sg_front
    table = effective_potential_toy({"cos": [0.7], "period": 2.0}, prof, derivative=du)
    assert np.max(np.abs(table.values - table.values[0])) <= 1e-12
    assert np.max(np.abs(table.slopes)) <= 1e-12
    assert table.zeros == []


def test_effective_potential_periodic_and_by_parts(sg_front):
    prof, du = sg_front
    table = effective_potential_toy("cos_pi", prof, derivative=du)
    assert table.periodicity_defect <= 1e-10
    assert table.by_parts_defect <= 1e-8
    assert table.tail_estimate <= 1e-10
    assert len(table.zeros) == 2
    assert sorted(z["stable_for_positive_eps"] for z in table.zeros) == [False, True]


def test_stable_sites_of_cos_pi():
    # V_eff is -c sin(pi s + phase); the zeros were frozen from a 1e-14 Brent solve
    assert toy_stable_site("cos_pi", 0) == pytest.approx(1.18466, abs=1e-5)
    assert toy_stable_site("cos_pi", -1) == pytest.approx(0.81534, abs=1e-5)


def test_constant_potential_has_no_pinned_front(sg_front):
    prof, du = sg_front
    table = effective_potential_toy({"cos": [0.5], "period": 2.0}, prof, derivative=du)
    assert np.max(np.abs(table.slopes)) / SG_NORM_SQ <= 1e-12
    # eps V u with V constant unbalances the end-state energies, so no stationary front exists
    with pytest.raises((ContinuationStalled, NoConvergence)):
        toy_pinned_front(toy_model(0.02, {"cos": [0.5], "period": 2.0}), 0, 0.0, 50, 14.0)


def test_slope_toy_input_checks():
    with pytest.raises(ValueError):
        lambda0_slope_toy("cos_pi", [0.02, 0.05])
    with pytest.raises(ValueError):
        lambda0_slope_toy("cos_pi", [0.0, 0.05, 0.1])


def test_gp_pinning_integral_closed_form():
    got = pinning_integral_gp("cos_2x", -1.0)
    exact = -8.0 * math.pi / math.sinh(math.sqrt(2.0) * math.pi)
    assert exact == pytest.approx(-0.5914, abs=1e-4)
    assert got["value"] == pytest.approx(exact, rel=1e-6)
    with pytest.raises(ValueError):
        pinning_integral_gp("cos_2x", 1.0)


def test_melnikov_vanishes_for_constant_heterogeneity(klausmeier_pulse_coarse):
    out = melnikov_klausmeier({"cos": [0.2], "period": math.pi}, {"cos": [0.4], "period": math.pi},
                              klausmeier_pulse_coarse)
    assert abs(out["M"]) <= 1e-12
    assert abs(out["normalization"]) > 0


def test_klausmeier_slope_sign_matches_melnikov(klausmeier_pulse_coarse):
    model = klausmeier_model(0.0)
    mel = melnikov_klausmeier("klausmeier_f", "klausmeier_g", klausmeier_pulse_coarse, model)
    # value at 640 nodes per period from the reference run
    assert mel["M"] == pytest.approx(0.0019767, rel=0.05)
    run = klausmeier_slope(klausmeier_model(0.0), klausmeier_pulse_coarse, [0.005, 0.01])
    assert math.copysign(1.0, run["measured_slope"]) == math.copysign(1.0, -mel["M"])


@pytest.mark.parametrize("omega", [1.0, 4.0])
def test_bright_soliton_slope(omega):
    g = Grid.line(-30.0, 30.0, h=0.025)
    prof = Profile(g, bright_soliton(g.x, omega)[None, :])
    rep = gp_krein_report(gp_model(0.0, omega), prof, "line")
    assert rep.slope == pytest.approx(1.0 / math.sqrt(omega), abs=1e-6)
    # on the line at mu = 0 the translation mode lies in the kernel of L_+
    assert rep.counts == (1, 1, 0, 1)
    assert rep.zeros == 0 and rep.profile_parity == "even"


def test_krein_slope_invariant_under_refinement():
    model = gp_model(0.5, 1.0)
    slopes = []
    for half_periods, npp in ((4, 128), (4, 256), (6, 256)):
        pulse = gp_pulse_primary(model, half_periods=half_periods, nodes_per_period=npp)
        slopes.append(gp_krein_report(model, pulse, "line").slope)
    assert slopes[1] == pytest.approx(slopes[0], rel=1e-4)
    assert slopes[2] == pytest.approx(slopes[1], rel=1e-4)


def test_krein_report_domain_check(gp_half, gp_primary):
    with pytest.raises(ValueError):
        gp_krein_report(gp_half, gp_primary, "periodic")
    with pytest.raises(ValueError):
        gp_krein_report(klausmeier_model(0.0), gp_primary)


def _report(slope=1.0, zeros=0, parity=None, v_even=True):
    return KreinReport("line", 2, 0, 0, 1, slope, zeros, parity, v_even, "inconclusive")


@pytest.mark.parametrize("kwargs,M,verdict", [
    (dict(zeros=0), 2, "unstable_case_i"),
    (dict(zeros=1), 3, "unstable_case_v"),
    (dict(zeros=1, parity="odd"), 2, "inconclusive"),
    (dict(zeros=2), 2, "unstable_case_ii"),
    (dict(zeros=1, parity="odd"), 4, "unstable_case_iii"),
    (dict(zeros=2, parity="even"), 5, "unstable_case_iv"),
    (dict(zeros=2, parity="even", v_even=False), 5, "inconclusive"),
    (dict(zeros=2, parity="even"), 3, "inconclusive"),
    (dict(slope=-0.3, zeros=1), 2, "unstable_negative_slope"),
])
def test_case_table(kwargs, M, verdict):
    rep = _report(**kwargs)
    assert classify_gp_multipulse(rep, M) == verdict


def test_case_table_needs_two_pulses():
    with pytest.raises(ValueError):
        classify_gp_multipulse(_report(), 1)


def test_zero_count_dead_band():
    x = np.linspace(-5.0, 5.0, 1001)
    assert count_zeros(np.tanh(x)) == 1
    assert count_zeros(np.sin(x)) == 3
    assert count_zeros(1.0 / np.cosh(x)) == 0
    # a dip through zero smaller than the dead band is not counted
    assert count_zeros(x**2 - 1e-14) == 0
    assert count_zeros(np.zeros(10)) == 0
