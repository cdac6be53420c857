import math

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from perwave.applications import (black_soliton, bright_soliton, gp_model, toy_model,
                                  toy_pinned_front, toy_stable_site)
from perwave.errors import ContinuationStalled, GridError, ModelError, NoConvergence
from perwave.grid import Grid, Profile, constant_state, discrete_norm, sample
from perwave.solver import (Discretization, NewtonOptions, continue_parameter, jacobian_check,
                            solve_localized, solve_periodic_state, state_residual)

SEED = 777


def _front_guess(h, half=20.0, bump=0.1):
    g = Grid.line(-half, half, h=h)
    ends = (constant_state([0.0], 2.0, 64), constant_state([2 * math.pi], 2.0, 64))
    return sample(g, lambda x: 4 * np.arctan(np.exp(x)) + bump * np.exp(-x**2), ends)


def test_zero_state_needs_no_newton_step():
    s = solve_periodic_state(toy_model(0.0), constant_state([0.0], 2.0, 64))
    assert s.meta["iterations"] == 0 and s.meta["residual"] == 0.0


def test_toy_periodic_state_deviation_is_linear_in_eps():
    devs = []
    for eps in (0.05, 0.1):
        s = solve_periodic_state(toy_model(eps), constant_state([2 * math.pi], 2.0, 128))
        assert state_residual(toy_model(eps), s) <= 1e-10
        devs.append(discrete_norm(s.replace(values=s.values - 2 * math.pi), "H2"))
    assert 0 < devs[0] < devs[1]
    assert devs[1] / devs[0] == pytest.approx(2.0, rel=0.05)


def test_defocusing_gp_state_near_constant_and_even():
    devs = []
    for mu in (0.02, 0.04):
        m = gp_model(mu, -1.0, kappa=1.0)
        g = Grid.periodic(-0.5 * m.period, m.period, n=128)
        s = solve_periodic_state(m, Profile(g, np.ones((1, g.n))))
        devs.append(discrete_norm(s.replace(values=s.values - 1.0), "H2"))
        mirrored = s.evaluate(-g.x)[0]
        assert np.max(np.abs(s.values[0] - mirrored)) < 1e-9
    assert devs[1] / devs[0] == pytest.approx(2.0, rel=0.1)


def test_sine_gordon_front_two_steps():
    g = Grid.line(-20.0, 20.0, h=0.05)
    ends = (constant_state([0.0], 2.0, 64), constant_state([2 * math.pi], 2.0, 64))
    guess = sample(g, lambda x: 4 * np.arctan(np.exp(x)), ends)
    p = solve_localized(toy_model(0.0), guess)
    assert p.meta["iterations"] <= 2 and p.meta["residual"] <= 1e-10
    assert np.max(np.abs(p.values[0] - guess.values[0])) < 1e-3


def test_explicit_front_residual_second_order():
    norms = []
    m = toy_model(0.0)
    for h in (0.1, 0.05, 0.025):
        g = Grid.line(-20.0, 20.0, h=h)
        disc = Discretization(m, g, "dirichlet")
        r = disc.operator_residual(4 * np.arctan(np.exp(g.x)))[disc.interior_rows]
        norms.append(math.sqrt(h * np.sum(r**2)))
    assert all(a / b >= 3.8 for a, b in zip(norms, norms[1:]))


def test_sigma_min_stable_under_refinement():
    site = toy_stable_site("cos_pi", 0)
    s = [toy_pinned_front(toy_model(0.1), 0, site, npp).meta for npp in (50, 100)]
    assert all(x["sigma_min"] >= 1e-6 and x["nondegenerate"] for x in s)
    assert s[1]["sigma_min"] == pytest.approx(s[0]["sigma_min"], rel=0.2)


def test_translation_invariant_front_is_flagged_degenerate():
    p = solve_localized(toy_model(0.0), _front_guess(0.05, bump=0.0))
    assert p.meta["sigma_min"] < 1e-6 and not p.meta["nondegenerate"]


def test_bright_and_black_solitons_reproduced():
    g = Grid.line(-20.0, 20.0, h=0.05)
    zero = constant_state([0.0], math.pi, 64)
    bright = solve_localized(gp_model(0.0, 1.0, V="cos_2x"),
                             sample(g, lambda x: 1.2 / np.cosh(1.1 * x), (zero, zero)))
    assert np.max(np.abs(bright.values[0] - bright_soliton(g.x, 1.0))) < 2e-3
    ends = (constant_state([-1.0], math.pi, 64), constant_state([1.0], math.pi, 64))
    black = solve_localized(gp_model(0.0, -1.0, V="cos_2x", kappa=1.0),
                            sample(g, lambda x: np.tanh(x / math.sqrt(2.0)), ends))
    assert np.max(np.abs(black.values[0] - black_soliton(g.x, -1.0))) < 1e-3


def test_pinned_dark_front_is_odd():
    g = Grid.line(-20.0, 20.0, h=0.05)
    m = gp_model(0.1, -1.0, V="cos_2x", kappa=1.0)
    ends = tuple(solve_periodic_state(m, constant_state([s], math.pi, 64)) for s in (-1.0, 1.0))
    front = solve_localized(m, sample(g, lambda x: np.tanh(x / math.sqrt(2.0)), ends))
    assert front.meta["nondegenerate"]
    assert np.max(np.abs(front.values[0] + front.values[0][::-1])) <= 1e-9


def test_projection_boundary_conditions():
    g = Grid.line(-15.0, 15.0, h=0.05)
    ends = (constant_state([0.0], 2.0, 64), constant_state([2 * math.pi], 2.0, 64))
    guess = sample(g, lambda x: 4 * np.arctan(np.exp(x)), ends)
    p = solve_localized(toy_model(0.0), guess, bc="projection")
    assert p.meta["residual"] <= 1e-10
    assert np.max(np.abs(p.values[0] - guess.values[0])) < 1e-3


def test_continuation_front_in_eps():
    start = solve_localized(toy_model(0.0), _front_guess(0.05, bump=0.0))
    targets = [0.01 * j for j in range(1, 11)]
    out = continue_parameter(toy_model(0.0), start, "eps", targets)
    assert len(out) == 10
    assert all(p.meta["residual"] <= 1e-10 for p in out)
    assert out[-1].meta["params"]["eps"] == pytest.approx(0.1)
    assert continue_parameter(toy_model(0.0), start, "eps", []) == [start]
    with pytest.raises(ModelError):
        continue_parameter(toy_model(0.0), start, "nope", [0.1])


def test_newton_failures_are_typed():
    g = Grid.line(-20.0, 20.0, h=0.1)
    ends = (constant_state([0.0], 2.0, 64), constant_state([2 * math.pi], 2.0, 64))
    bad = sample(g, lambda x: 3.0 * np.sin(x), ends)
    with pytest.raises(NoConvergence):
        solve_localized(toy_model(0.0), bad, opts=NewtonOptions(max_iter=2))
    with pytest.raises(GridError):
        solve_periodic_state(toy_model(0.0), constant_state([0.0], 3.0, 64))
    with pytest.raises(ValueError):
        NewtonOptions(abs_tol=0.0)


def test_continuation_stall_is_reported():
    start = solve_localized(toy_model(0.0), _front_guess(0.05, bump=0.0))
    with pytest.raises(ContinuationStalled):
        continue_parameter(toy_model(0.0), start, "eps", [5.0], NewtonOptions(max_iter=2), min_step=3.0)


@seed(SEED)
@settings(max_examples=10, database=None)
@given(amp=st.floats(0.1, 3.0), k=st.integers(1, 4), s=st.integers(0, 10_000),
       eps=st.floats(0.0, 0.5))
def test_analytic_jacobian_matches_differences(amp, k, s, eps):
    m = toy_model(eps)
    g = Grid.periodic(0.0, 4.0, n=128)
    p = sample(g, lambda x: amp * np.sin(math.pi * k * x / 2.0))
    assert jacobian_check(m, p, seed=s) <= 1e-5
