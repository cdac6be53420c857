import math

import numpy as np
import pytest

from perwave.applications import toy_multifront_plan, toy_pinned_front
from perwave.construct import (GluePlan, aligned_line_grid, decay_study, extend_periodic_pulse,
                               glue_multifront, pulse_train_ansatz, tail_norm)
from perwave.floquet import slowest_decay_rate
from perwave.errors import InsufficientData, MatchingConditionViolated, NotAPulse
from perwave.grid import Profile, constant_state
from perwave.solver import solve_periodic_state, state_residual


@pytest.fixture(scope="module")
def toy_plan():
    return toy_multifront_plan(0.1, 8, nodes_per_period=50)


@pytest.fixture(scope="module")
def toy_glued(toy_plan):
    return {n: glue_multifront(GluePlan(toy_plan.model, toy_plan.primaries, n)) for n in (4, 6, 8)}


@pytest.fixture(scope="module")
def gp_trains(gp_half, gp_primary):
    return {n: extend_periodic_pulse(gp_half, gp_primary, n) for n in (4, 6, 8)}


def test_aligned_grid_contains_period_multiples():
    g = aligned_line_grid(2.0, 50, -7.3, 11.1)
    k = np.round(g.x / 2.0)
    hits = np.abs(g.x - 2.0 * k) < 1e-9
    assert np.sum(hits) == len(range(-3, 6))
    assert g.x0 <= -7.3 and g.x_end >= 11.1


def test_single_front_glue_reproduces_primary(toy_plan):
    p = toy_plan.primaries[1]
    u, err = glue_multifront(GluePlan(toy_plan.model, [p], 8))
    assert err <= 1e-8
    pos = 8 * toy_plan.model.period
    assert np.max(np.abs(u.values - p.evaluate(u.x - pos))) <= 1e-8


def test_two_front_error_decreases(toy_glued):
    errs = [toy_glued[n][1] for n in (4, 6, 8)]
    assert errs[0] > errs[1] > errs[2] > 0


def test_two_front_converges_to_concatenation(toy_plan, toy_glued):
    T = toy_plan.model.period
    worst = []
    for n in (4, 6, 8):
        u, _ = toy_glued[n]
        dists = []
        for j, p in enumerate(toy_plan.primaries, start=1):
            c = j * n * T
            mask = (u.x >= c - 0.5 * n * T) & (u.x <= c + 0.5 * n * T)
            dists.append(np.max(np.abs(u.values[:, mask] - p.evaluate(u.x[mask] - c))))
        worst.append(max(dists))
    assert worst[0] > worst[1] > worst[2]


def test_mismatched_end_states_rejected(toy_plan):
    model = toy_plan.model
    far = toy_pinned_front(model, 2, toy_plan.primaries[1].meta["shift"], 50)
    with pytest.raises(MatchingConditionViolated):
        GluePlan(model, [toy_plan.primaries[1], far], 8)


def test_constant_primary_extends_exactly(gp_half):
    zero = constant_state([0.0], gp_half.period, 128)
    g = aligned_line_grid(gp_half.period, 128, -3 * gp_half.period, 3 * gp_half.period)
    flat = Profile(g, np.zeros((1, g.n)), (zero, zero))
    u, err = extend_periodic_pulse(gp_half, flat, 6)
    assert err <= 1e-12 and np.max(np.abs(u.values)) <= 1e-12


def test_pulse_train_error_decreases(gp_trains):
    errs = [gp_trains[n][1] for n in (4, 6, 8)]
    assert errs[0] > errs[1] > errs[2] > 0


def test_pulse_train_error_bounded_by_tail(gp_half, gp_primary, gp_trains):
    ratios = [gp_trains[n][1] / tail_norm(gp_half, gp_primary, n) for n in (4, 6, 8)]
    # the constant fitted at the smallest spacing bounds every larger one
    assert all(0 < r <= 1.2 * ratios[0] for r in ratios)


def test_pulse_train_invariant_under_rotation(gp_half, gp_trains):
    u, _ = gp_trains[6]
    per_cell = int(round(gp_half.period / u.grid.h))
    rolled = u.replace(values=np.roll(u.values, 2 * per_cell, axis=1))
    again = solve_periodic_state(gp_half, rolled)
    assert again.meta["iterations"] == 0 or np.max(np.abs(again.values - rolled.values)) <= 1e-10
    assert state_residual(gp_half, rolled) == pytest.approx(state_residual(gp_half, u), abs=1e-10)


def test_pulse_train_ansatz_needs_a_pulse(toy_plan):
    with pytest.raises(NotAPulse):
        pulse_train_ansatz(toy_plan.model, toy_plan.primaries[0], 6)


def test_decay_study_rate_near_floquet(toy_plan):
    res = decay_study(lambda n: glue_multifront(GluePlan(toy_plan.model, toy_plan.primaries, n)),
                      [4, 6, 8, 10], toy_plan.model.period, distance_fraction=0.5)
    rate = slowest_decay_rate(toy_plan.model, toy_plan.primaries[0].asymptotics[1])
    assert res["monotone"] and not res["saturated"]
    assert abs(res["rate_per_length"] - rate) <= 0.3 * rate


def test_decay_study_input_checks(toy_plan):
    build = lambda n: glue_multifront(GluePlan(toy_plan.model, toy_plan.primaries, n))
    with pytest.raises(InsufficientData):
        decay_study(build, [4, 6], toy_plan.model.period)
    with pytest.raises(ValueError):
        decay_study(build, [6, 4, 8], toy_plan.model.period)


def test_decay_study_single_front_saturates(toy_plan):
    p = toy_plan.primaries[0]
    res = decay_study(lambda n: glue_multifront(GluePlan(toy_plan.model, [p], n)), [4, 6, 8],
                      toy_plan.model.period)
    assert res["saturated"] and res["fitted_rate"] is None
    assert math.isfinite(res["rows"][0]["err_norm"])
