import math

import numpy as np
import pytest

from perwave.applications import as_real_pair, gp_krein_report, gp_model, gp_pulse_train, toy_model
from perwave.errors import BreakdownAtShift, TooLarge
from perwave.grid import Grid, Profile, constant_state
from perwave.oracle import (adjoint_kernel, count_in_disk, direct_spectrum, inertia_count,
                            inertia_details, negative_count, schrodinger_matrix)
from perwave.solver import solve_periodic_state


def test_periodic_laplacian_closed_form():
    N = 64
    g = Grid.periodic(0.0, 2 * math.pi, n=N)
    j = np.arange(N)
    expected = np.sort(-(2.0 / g.h**2) * (1.0 - np.cos(2 * math.pi * j / N)))
    lap = -schrodinger_matrix(np.zeros(N), g).toarray()
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(lap)), expected, atol=1e-9)


def test_toy_linearization_at_quarter_turn_is_laplacian():
    N = 64
    g = Grid.periodic(0.0, 4.0, n=N)
    ev = direct_spectrum(toy_model(0.0), Profile(g, np.full((1, N), 0.5 * math.pi)))
    j = np.arange(N)
    expected = np.sort(-(2.0 / g.h**2) * (1.0 - np.cos(2 * math.pi * j / N)))
    np.testing.assert_allclose(np.sort(ev.real), expected, atol=1e-8)
    assert np.max(np.abs(ev.imag)) <= 1e-9


def test_toy_front_spectrum(short_front):
    ev = direct_spectrum(toy_model(0.0), short_front)
    near = ev[np.abs(ev) <= 1e-4]
    assert len(near) == 1
    rest = ev[np.abs(ev) > 1e-4]
    assert np.max(rest.real) <= -0.99 and np.max(np.abs(ev.imag)) <= 1e-9
    assert count_in_disk(ev, 0.0, 0.5) == 1


def test_gp_pulse_hamiltonian_symmetry(gp_half, gp_primary):
    pair = gp_model(0.5, 1.0, real_pair=True)
    ev = direct_spectrum(pair, as_real_pair(gp_primary), (-3.0, 3.0, -3.0, 3.0))
    assert len(ev) > 0

    def matched(target):
        return max(float(np.min(np.abs(ev - t))) for t in target)

    assert matched(-ev) <= 1e-6
    assert matched(np.conj(ev)) <= 1e-6


def test_direct_spectrum_size_cap():
    g = Grid.periodic(0.0, 2.0, n=4100)
    with pytest.raises(TooLarge):
        direct_spectrum(toy_model(0.0), Profile(g, np.zeros((1, g.n))))


def test_eigenvalues_converge_second_order():
    model = toy_model(0.3)
    tops = []
    for n in (32, 64, 128):
        state = solve_periodic_state(model, constant_state([0.01], 2.0, n))
        ev = np.sort(direct_spectrum(model, state).real)[::-1]
        tops.append(ev[:10])
    d1 = np.abs(tops[0] - tops[1])
    d2 = np.abs(tops[1] - tops[2])
    orders = np.log2(d1 / d2)
    assert np.min(orders) >= 1.8


def test_adjoint_kernel_of_self_adjoint_front(short_front):
    psi, w0, w1 = adjoint_kernel(toy_model(0.0), short_front)
    du = np.gradient(short_front.values[0], short_front.grid.h)
    cosine = abs(psi[0] @ du) / (np.linalg.norm(psi[0]) * np.linalg.norm(du))
    assert cosine >= 0.999
    assert abs(w0) <= 1e-4 and abs(w1) >= 0.5


def test_inertia_of_positive_operator():
    g = Grid.periodic(0.0, 2 * math.pi, n=128)
    assert inertia_count(np.ones(g.n), g, 0.0) == (0, 0)


def test_inertia_of_gp_train(gp_half, gp_primary):
    train, _ = gp_pulse_train(gp_half, gp_primary, 4)
    rep = gp_krein_report(gp_half, train, "periodic")
    assert (rep.n_minus, rep.z_minus) == (0, 1)
    assert (rep.n_plus, rep.z_plus) == (1, 0)


def test_inertia_agrees_with_dense_count(gp_half, gp_primary):
    train, _ = gp_pulse_train(gp_half, gp_primary, 4)
    g = train.grid
    psi = train.values[0]
    q = 0.5 * gp_half.potentials["V"](g.x) + 1.0 - psi**2
    eig = np.linalg.eigvalsh(schrodinger_matrix(q, g).toarray())
    for shift in (-1.0, -0.3, 0.4, 1.7, 5.0):
        if np.min(np.abs(eig - shift)) > 1e-6:
            assert inertia_count(q, g, shift)[0] == int(np.sum(eig < shift))


def test_kernel_is_detected_and_refined():
    g = Grid.periodic(0.0, 2 * math.pi, n=128)
    out = inertia_details(np.zeros(g.n), g, 0.0)
    assert (out["n_below"], out["z_at"]) == (0, 1)
    assert abs(out["nearest_eigenvalue"]) <= 1e-8


def test_exact_shift_breaks_down():
    g = Grid.periodic(0.0, 2 * math.pi, n=64)
    with pytest.raises(BreakdownAtShift):
        negative_count(np.zeros(g.n), g, 0.0)


def test_dirichlet_inertia_matches_dense():
    g = Grid.line(0.0, math.pi, n=101)
    eig = np.linalg.eigvalsh(schrodinger_matrix(np.zeros(g.n), g).toarray())
    for shift in (0.5, 4.5, 20.0):
        assert inertia_count(np.zeros(g.n), g, shift)[0] == int(np.sum(eig < shift))
