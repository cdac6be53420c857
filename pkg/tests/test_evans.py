import math

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from perwave.applications import toy_model
from perwave.errors import EssentialSpectrum, NonHyperbolic, NotPeriodicProfile, RootOnContour
from perwave.evans import (Circle, LineEvans, PeriodicEvans, asymptotic_frames, dichotomy_diagnostics,
                           evans_line, evans_periodic, locate_roots, pasting_bound_check, square,
                           winding_count)
from perwave.floquet import floquet_data, state_field
from perwave.grid import Grid, Profile, constant_state
from perwave.model import WeightSpec, linearize_first_order

SEED = 97531


def _zero_state():
    return constant_state([0.0], 2.0, 64)


def test_asymptotic_frames_of_constant_state():
    model = toy_model(0.0)
    fd = floquet_data(state_field(model, _zero_state()), 2.0, 0.0)
    stable, unstable = asymptotic_frames(fd)
    assert stable.shape == (2, 1) and unstable.shape == (2, 1)
    s, u = stable[:, 0], unstable[:, 0]
    assert s[1] / s[0] == pytest.approx(-1.0, abs=1e-9)
    assert u[1] / u[0] == pytest.approx(1.0, abs=1e-9)


def test_asymptotic_frames_refuse_band_points():
    model = toy_model(0.0)
    fd = floquet_data(state_field(model, _zero_state()), 2.0, -2.0)
    with pytest.raises(NonHyperbolic):
        asymptotic_frames(fd)


def test_front_evans_resolvent_point_and_simple_root(short_front):
    model = toy_model(0.0)
    ev = evans_line(model, short_front, 0.5)
    assert abs(ev.value) > 1e-3
    assert ev.left.rank + ev.right.rank == 2
    vals = LineEvans(model, short_front)(np.array([-0.05, -1e-8, 1e-8, 0.05]))
    # truncation at |x| = 12 moves the root by about 1e-4, so the bracket is wider
    assert abs(vals[1]) < 1e-2 * abs(vals[0]) and abs(vals[2]) < 1e-2 * abs(vals[3])
    assert np.sign(vals[0].real) != np.sign(vals[3].real)


def test_front_evans_rejects_band_points(short_front):
    with pytest.raises(EssentialSpectrum):
        evans_line(toy_model(0.0), short_front, -2.0)


@seed(SEED)
@settings(max_examples=6, database=None)
@given(re=st.floats(-0.5, 1.0), im=st.floats(0.05, 1.0))
def test_front_evans_conjugate_symmetry(short_front, re, im):
    lam = complex(re, im)
    a, b = LineEvans(toy_model(0.0), short_front)(np.array([lam, lam.conjugate()]))
    assert abs(b - np.conj(a)) <= 1e-8 * abs(a)


def test_winding_counts_on_front(short_front):
    ev = LineEvans(toy_model(0.0), short_front)
    assert winding_count(ev, Circle(0.0, 0.5)).winding == 1
    assert winding_count(ev, Circle(1.0, 0.2)).winding == 0
    assert winding_count(ev, square(0.0, 0.3)).winding == 1


def test_locate_roots_on_front(short_front):
    ev = LineEvans(toy_model(0.0), short_front)
    rep = locate_roots(ev, Circle(0.0, 0.5))
    assert len(rep.roots) == 1 and rep.roots[0][1] == 1
    assert abs(rep.roots[0][0]) <= 1e-4 and abs(rep.roots[0][0].imag) <= 1e-10
    assert locate_roots(ev, Circle(1.0, 0.2)).roots == []


def test_locate_roots_of_polynomial_with_multiplicity():
    f = lambda z: (z - 0.1) ** 2 * (z + 0.2j)
    rep = locate_roots(f, Circle(0.0, 0.5), expected=3)
    roots = sorted(rep.roots, key=lambda r: r[1])
    assert [m for _, m in roots] == [1, 2]
    assert abs(roots[0][0] + 0.2j) <= 1e-8 and abs(roots[1][0] - 0.1) <= 1e-6


def test_locate_roots_separates_close_simple_roots():
    # the gap sits just above the cluster floor of 1e-4 times the radius
    f = lambda z: (z + 0.02) * (z + 0.02 - 4e-5)
    rep = locate_roots(f, Circle(0.0, 0.3), expected=2)
    assert [m for _, m in rep.roots] == [1, 1]
    assert abs(rep.roots[0][0] + 0.02) <= 1e-10 and abs(rep.roots[1][0] + 0.01996) <= 1e-10


def test_root_on_contour_is_reported():
    with pytest.raises(RootOnContour):
        winding_count(lambda z: z - 0.5, Circle(0.0, 0.5))


def test_weighted_winding_agrees(short_front):
    model = toy_model(0.0)
    weighted = LineEvans(model, short_front, WeightSpec(0.2, -0.2))
    assert winding_count(weighted, Circle(0.0, 0.5)).winding == 1


def test_truncation_stability():
    model = toy_model(0.0)
    ends = (_zero_state(), constant_state([2 * math.pi], 2.0, 64))
    vals = []
    for half in (12.0, 14.0):
        g = Grid.line(-half, half, h=0.04)
        front = Profile(g, 4 * np.arctan(np.exp(g.x))[None, :], ends)
        vals.append(LineEvans(model, front)(np.array([0.5, 0.3 + 0.4j])))
    assert np.max(np.abs(np.abs(vals[1]) / np.abs(vals[0]) - 1.0)) <= 0.01


def test_periodic_evans_of_zero_profile():
    model = toy_model(0.0)
    g = Grid.periodic(-2.0, 4.0, n=128)
    zero = Profile(g, np.zeros((1, g.n)))
    ev = PeriodicEvans(model, zero)
    gammas = np.exp(2j * math.pi * np.arange(16) / 16)
    vals = ev.evaluate(1.0, gammas)[0]
    assert np.min(np.abs(vals)) > 1e-3
    wrapped = ev.evaluate(1.0, gammas * np.exp(2j * math.pi))[0]
    np.testing.assert_allclose(wrapped, vals, rtol=1e-12)
    for gm in gammas[:4]:
        assert ev.direct(1.0, gm) == pytest.approx(ev.evaluate(1.0, gm)[0, 0], rel=1e-7)
    assert evans_periodic(model, zero, 1.0, 1j) == pytest.approx(vals[4], rel=1e-12)


def test_periodic_evans_vanishes_at_a_multiplier():
    model = toy_model(0.0)
    g = Grid.periodic(-2.0, 4.0, n=128)
    ev = PeriodicEvans(model, Profile(g, np.zeros((1, g.n))))
    # inside the band the multipliers have unit modulus
    rho = ev.multipliers(-3.0)
    gm = rho[0] / abs(rho[0])
    assert abs(ev.evaluate(-3.0, gm)[0, 0]) <= 1e-8 * np.max(np.abs(ev.evaluate(-3.0, -gm)))


def test_periodic_evans_input_checks(short_front):
    model = toy_model(0.0)
    with pytest.raises(NotPeriodicProfile):
        PeriodicEvans(model, short_front)
    g = Grid.periodic(0.0, 3.0, n=96)
    with pytest.raises(NotPeriodicProfile):
        PeriodicEvans(model, Profile(g, np.zeros((1, g.n))))
    ev = PeriodicEvans(model, Profile(Grid.periodic(0.0, 4.0, n=96), np.zeros((1, 96))))
    with pytest.raises(ValueError):
        ev.evaluate(1.0, 1.1)


def _oblique_projection(S, rank):
    D = np.zeros(S.shape[0])
    D[:rank] = 1.0
    return S @ np.diag(D) @ np.linalg.inv(S)


def test_pasting_bound_on_random_projections(rng):
    for _ in range(5):
        U, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        P = _oblique_projection(U, 2)
        K = rng.standard_normal((4, 4))
        dist = lambda t: np.linalg.norm(P - _oblique_projection(U + t * K, 2), 2) - 0.5
        t = brentq(dist, 0.0, 1.0) if dist(1.0) > 0 else brentq(dist, 0.0, 10.0)
        Q = _oblique_projection(U + t * K, 2)
        out = pasting_bound_check(P, Q)
        assert out["norm_P_minus_Q"] == pytest.approx(0.5, abs=1e-9)
        assert out["applicable"] and out["passed"] and out["norm_R"] <= 2.0 + 1e-9
        assert out["idempotent_error"] <= 1e-10


def test_pasting_bound_at_distance_one_half():
    P = np.diag([1.0, 0.0])
    c, s = math.cos(math.pi / 6), math.sin(math.pi / 6)
    v = np.array([c, s])
    Q = np.outer(v, v)
    out = pasting_bound_check(P, Q)
    assert out["norm_P_minus_Q"] == pytest.approx(0.5, abs=1e-12)
    assert out["passed"] and out["norm_R"] <= 2.0
    assert not pasting_bound_check(P, np.diag([0.0, 1.0]))["applicable"]


def test_dichotomy_diagnostics_constant_field():
    model = toy_model(0.0)
    g = Grid.line(-8.0, 8.0, h=0.1)
    zero = _zero_state()
    flat = Profile(g, np.zeros((1, g.n)), (zero, zero))
    rep = dichotomy_diagnostics(linearize_first_order(model, flat), flat, 0.5)
    assert rep["passed"] and len(rep["subintervals"]) == 4
    assert all(s["projection_distance"]["slack"] >= 1.0 for s in rep["subintervals"])


def test_dichotomy_diagnostics_front(short_front):
    field = linearize_first_order(toy_model(0.0), short_front)
    rep = dichotomy_diagnostics(field, short_front, 0.5, subintervals=4)
    assert all(s["projection_distance"]["passed"] for s in rep["subintervals"])
    assert rep["passed"]
    with pytest.raises(NonHyperbolic):
        dichotomy_diagnostics(field, short_front, -2.0)
