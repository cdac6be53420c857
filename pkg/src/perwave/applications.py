"""Benchmark recipes: effective potentials and critical-eigenvalue slopes for
the toy reaction-diffusion model, the Klausmeier Melnikov integral, Krein
counts for Gross-Pitaevskii pulses and the multipulse instability table."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.linalg import eigs, splu

from .construct import GluePlan, aligned_line_grid, glue_multifront
from .errors import (LPlusSingular, NoConvergence, NotPeriodicProfile, SingularJacobian)
from .evans import Circle, LineEvans, PeriodicEvans, locate_roots, winding_count
from .grid import Grid, Profile, constant_state, resample
from .model import ModelSpec, as_potential, build_builtin
from .oracle import adjoint_kernel, inertia_details, operator_matrix
from .solver import NewtonOptions, continue_parameter, solve_localized, solve_periodic_state

SINE_GORDON_NORM_SQ = 8.0

# ---------------------------------------------------------------------------
# toy reaction-diffusion model


def sine_gordon_front(x, k: int = 0, direction: int = 1, deriv: int = 0) -> np.ndarray:
    """Explicit front ``4 arctan(exp(+-x)) + 2 pi min(k, k +- 1)`` and its first derivative."""
    x = np.asarray(x, dtype=float)
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    if deriv == 0:
        return 4.0 * np.arctan(np.exp(direction * x)) + 2.0 * math.pi * min(k, k + direction)
    if deriv == 1:
        return direction * 2.0 / np.cosh(x)
    raise ValueError("only the first derivative is available")


def sine_gordon_profile(half_length: float = 30.0, h: float = 0.01, k: int = 0,
                        direction: int = 1, shift: float = 0.0) -> Profile:
    """The explicit front ``u_0(x - shift)`` sampled on a symmetric line grid around ``shift``."""
    g = Grid.line(shift - half_length, shift + half_length, h=h)
    vals = sine_gordon_front(g.x - shift, k, direction)
    return Profile(g, vals[None, :], None, {"construction": "sine_gordon", "k": k,
                                           "direction": direction, "shift": shift})


@dataclass
class EffectivePotentialTable:
    shifts: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    zeros: list
    period: float
    tail_estimate: float
    by_parts_values: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def periodicity_defect(self) -> float:
        return float(abs(self.values[-1] - self.values[0]))

    @property
    def by_parts_defect(self) -> float:
        return float(np.max(np.abs(self.values - self.by_parts_values)))

    def to_dict(self) -> dict:
        return {"period": self.period, "tail_estimate": self.tail_estimate,
                "periodicity_defect": self.periodicity_defect,
                "by_parts_defect": self.by_parts_defect,
                "zeros": self.zeros, "meta": self.meta}

    def rows(self) -> list[dict]:
        return [{"shift": float(s), "V_eff": float(v), "dV_eff": float(d), "V_eff_by_parts": float(b)}
                for s, v, d, b in zip(self.shifts, self.values, self.slopes, self.by_parts_values)]


class _FrontQuadrature:
    """Trapezoidal pairings of a shifted potential with a front and its derivative."""

    def __init__(self, front: Profile, derivative: np.ndarray | None = None):
        g = front.grid
        if g.periodic_kind:
            raise NotPeriodicProfile("effective potentials need a line profile")
        self.x = g.x
        self.w = g.weights()
        self.u = front.values[0]
        self.du = (np.asarray(derivative, dtype=float).ravel() if derivative is not None
                   else front.evaluate(self.x, 1)[0])
        self.u_minus, self.u_plus = self.u[0], self.u[-1]
        if front.asymptotics is not None:
            self.u_minus = float(np.mean(front.asymptotics[0].values[0]))
            self.u_plus = float(np.mean(front.asymptotics[1].values[0]))

    def value(self, V, s: float) -> float:
        return float(np.sum(self.w * V(self.x + s) * self.u * self.du))

    def slope(self, V, s: float) -> float:
        return float(np.sum(self.w * V(self.x + s, 1) * self.u * self.du))

    def by_parts(self, V, s: float) -> float:
        # u u' = ((u - u_-)(u - u_+))'/2 + (u_- + u_+) u'/2, both pieces decay at both ends
        a, b = self.u_minus, self.u_plus
        q = (self.u - a) * (self.u - b)
        return float(-0.5 * np.sum(self.w * V(self.x + s, 1) * q)
                     + 0.5 * (a + b) * np.sum(self.w * V(self.x + s) * self.du))

    def tail(self, V) -> float:
        """Bound on the truncated tails assuming exponential decay of ``u'`` at the fitted rate."""
        sup_v = float(np.max(np.abs(V(np.linspace(0.0, V.period, 257)))))
        total = 0.0
        for idx in ((slice(0, 8)), (slice(-8, None))):
            d = np.abs(self.du[idx])
            u = np.abs(self.u[idx])
            xs = self.x[idx]
            if np.all(d > 0):
                rate = abs(np.polyfit(xs, np.log(d), 1)[0])
            else:
                rate = 0.0
            edge = float(d[0] if idx.start == 0 else d[-1]) * float(np.max(u))
            total += sup_v * edge / rate if rate > 1e-8 else math.inf
        return total


def effective_potential_toy(V, front: Profile, samples: int = 257,
                            derivative: np.ndarray | None = None) -> EffectivePotentialTable:
    """``V_eff(s) = int V(x + s) u u' dx`` over one period, with its simple zeros.

    Zeros are bracketed by sign changes on the sample grid and refined by
    Brent's method; each carries ``|V_eff'|`` at the zero as its margin.
    """
    V = as_potential(V)
    T = V.period
    quad = _FrontQuadrature(front, derivative)
    s = np.linspace(0.0, T, samples)
    vals = np.array([quad.value(V, si) for si in s])
    slopes = np.array([quad.slope(V, si) for si in s])
    by_parts = np.array([quad.by_parts(V, si) for si in s])
    zeros = []
    scale = float(np.max(np.abs(vals))) if len(vals) else 0.0
    if scale > 1e-12:
        for i in range(samples - 1):
            a, b = vals[i], vals[i + 1]
            if a == 0.0 and i > 0:
                root = s[i]
            elif a * b < 0:
                root = brentq(lambda t: quad.value(V, t), s[i], s[i + 1], xtol=1e-14, rtol=1e-14)
            else:
                continue
            d = quad.slope(V, root)
            zeros.append({"shift": float(root), "dV_eff": d, "margin": abs(d),
                          "stable_for_positive_eps": bool(d > 0)})
    return EffectivePotentialTable(s, vals, slopes, zeros, T, quad.tail(V), by_parts,
                                   {"front": dict(front.meta)})


def toy_model(eps: float, V="cos_pi") -> ModelSpec:
    return build_builtin("toy_rde", {"eps": eps}, {"V": V})


def toy_end_state(model: ModelSpec, level: int, nodes_per_period: int,
                  opts: NewtonOptions | None = None) -> Profile:
    """Periodic state bifurcating from the constant ``2 pi level``."""
    guess = constant_state(2.0 * math.pi * level, model.period, nodes_per_period)
    return solve_periodic_state(model, guess, opts)


def toy_pinned_front(model: ModelSpec, k: int, shift: float, nodes_per_period: int = 100,
                     half_length: float = 20.0, direction: int = 1,
                     opts: NewtonOptions | None = None) -> Profile:
    """Front from ``v_k`` to ``v_{k+direction}`` near ``u_0(x - shift) + 2 pi k``.

    The guess is Newton-corrected directly; if that fails the parameter
    ``eps`` is continued from a tenth of its value.
    """
    opts = opts or NewtonOptions()
    T = model.period
    g = aligned_line_grid(T, nodes_per_period, shift - half_length, shift + half_length)
    levels = (k, k + direction) if direction == 1 else (k, k - 1)
    start = sine_gordon_front(g.x - shift, min(levels), direction) if direction == 1 else \
        sine_gordon_front(g.x - shift, max(levels), direction)
    left = toy_end_state(model, levels[0], nodes_per_period, opts)
    right = toy_end_state(model, levels[1], nodes_per_period, opts)
    guess = Profile(g, start[None, :], (left, right),
                    {"construction": "toy_pinned_front", "k": k, "direction": direction,
                     "shift": shift})
    try:
        return solve_localized(model, guess, "dirichlet_to_states", opts)
    except (NoConvergence, SingularJacobian):
        eps = float(model.params["eps"])
        if eps == 0.0:
            raise
        low = model.with_params(eps=0.1 * eps)
        first = toy_pinned_front(low, k, shift, nodes_per_period, half_length, direction, opts)
        return continue_parameter(low, first, "eps", [eps], opts)[0]


def critical_eigenvalue(model: ModelSpec, profile: Profile, radius: float = 0.3,
                        jobs: int | None = 1) -> complex:
    """The single Evans root inside ``|lambda| < radius``."""
    ev = LineEvans(model, profile, jobs=jobs)
    rep = locate_roots(ev, Circle(0.0, radius), expected=1)
    if rep.winding != 1 or len(rep.roots) != 1:
        raise NoConvergence(f"expected one critical eigenvalue, winding {rep.winding}")
    return rep.roots[0][0]


def lambda0_slope_toy(V, eps_list: Sequence[float], k: int = 0, sites: Sequence[float] | None = None,
                      nodes_per_period: int = 100, half_length: float = 20.0,
                      radius: float = 0.3, subtract_baseline: bool = True,
                      jobs: int | None = 1) -> dict:
    """Measured against predicted slope ``d lambda_0 / d eps`` at each pinning site.

    Each site is a zero of the effective potential of the level-``k`` front.
    The critical eigenvalue is located by the Evans function; with
    ``subtract_baseline`` the value obtained by the same pipeline at
    ``eps = 0`` is removed (it is the discretization bias of the
    translation eigenvalue). The slope is a least-squares fit through the origin.
    """
    V = as_potential(V)
    eps_list = sorted(float(e) for e in eps_list)
    if len(eps_list) < 3 or eps_list[0] <= 0:
        raise ValueError("need at least three positive eps values")
    T = V.period
    h = T / nodes_per_period
    exact = sine_gordon_profile(half_length + 10.0, min(h, 0.01), k)
    table = effective_potential_toy(V, exact, derivative=sine_gordon_front(exact.x, k, 1, 1))
    if sites is None:
        sites = [z["shift"] for z in table.zeros]
    quad = _FrontQuadrature(exact, sine_gordon_front(exact.x, k, 1, 1))
    out_sites = []
    for s0 in sites:
        dveff = quad.slope(V, s0)
        predicted = -dveff / SINE_GORDON_NORM_SQ
        baseline = 0.0
        if subtract_baseline:
            base = toy_pinned_front(toy_model(0.0, V), k, s0, nodes_per_period, half_length)
            baseline = critical_eigenvalue(toy_model(0.0, V), base, radius, jobs).real
        lams = []
        for eps in eps_list:
            model = toy_model(eps, V)
            front = toy_pinned_front(model, k, s0, nodes_per_period, half_length)
            lams.append(critical_eigenvalue(model, front, radius, jobs))
        lam_re = np.array([lam.real for lam in lams]) - baseline
        e = np.array(eps_list)
        measured = float(np.sum(e * lam_re) / np.sum(e * e))
        rel = abs(measured - predicted) / abs(predicted) if predicted != 0 else math.inf
        out_sites.append({
            "shift": float(s0), "dV_eff": dveff, "predicted_slope": predicted,
            "measured_slope": measured, "rel_error": rel, "baseline": baseline,
            "eps": eps_list, "lambda0": [[complex(l).real, complex(l).imag] for l in lams],
            "stable": bool(measured < 0),
        })
    return {"k": k, "period": T, "nodes_per_period": nodes_per_period,
            "half_length": half_length, "sites": out_sites, "effective_potential": table.to_dict()}


def toy_stable_site(V, k: int) -> float:
    """Zero of the level-``k`` effective potential with ``V_eff' > 0``."""
    exact = sine_gordon_profile(40.0, 0.01, k)
    table = effective_potential_toy(V, exact, derivative=sine_gordon_front(exact.x, k, 1, 1))
    return next(z["shift"] for z in table.zeros if z["dV_eff"] > 0)


def toy_multifront_plan(eps: float, n: int, levels: Sequence[int] = (-1, 0), V="cos_pi",
                        nodes_per_period: int = 100, half_length: float = 20.0,
                        sites: Sequence[float] | None = None) -> GluePlan:
    """Increasing fronts ``v_k -> v_{k+1}`` for each ``k`` in ``levels``, each pinned at a stable site."""
    model = toy_model(eps, V)
    if sites is None:
        sites = [toy_stable_site(V, k) for k in levels]
    states = {}
    primaries = []
    for k, s0 in zip(levels, sites):
        front = toy_pinned_front(model, k, s0, nodes_per_period, half_length)
        left = states.setdefault(k, front.asymptotics[0])
        right = states.setdefault(k + 1, front.asymptotics[1])
        primaries.append(front.replace(asymptotics=(left, right)))
    return GluePlan(model, primaries, n)


# ---------------------------------------------------------------------------
# Gross-Pitaevskii


def gp_model(mu: float, omega: float, V="gp_pulse", kappa: float = -1.0,
             real_pair: bool = False) -> ModelSpec:
    name = "gp_real" if real_pair else "gp_scalar"
    return build_builtin(name, {"kappa": kappa, "mu": mu, "omega": omega}, {"V": V})


def bright_soliton(x, omega: float, center: float = 0.0) -> np.ndarray:
    """``sqrt(2 omega) sech(sqrt(omega) (x - center))``, the focusing pulse at ``mu = 0``."""
    x = np.asarray(x, dtype=float)
    return math.sqrt(2.0 * omega) / np.cosh(math.sqrt(omega) * (x - center))


def black_soliton(x, omega: float, center: float = 0.0) -> np.ndarray:
    """``sqrt(-omega) tanh(sqrt(-omega / 2) (x - center))``, the defocusing front at ``mu = 0``."""
    x = np.asarray(x, dtype=float)
    return math.sqrt(-omega) * np.tanh(math.sqrt(-0.5 * omega) * (x - center))


def pinning_integral_gp(V, omega: float, half_length: float = 40.0, h: float = 0.005) -> dict:
    """Trapezoidal ``int V'(x) psi psi' dx`` for the black soliton centred at 0."""
    V = as_potential(V)
    if omega >= 0:
        raise ValueError("the black soliton needs omega < 0")
    x = np.arange(-half_length, half_length + 0.5 * h, h)
    c = math.sqrt(-0.5 * omega)
    psi = black_soliton(x, omega)
    dpsi = math.sqrt(-omega) * c / np.cosh(c * x) ** 2
    w = np.full_like(x, h)
    w[0] = w[-1] = 0.5 * h
    value = float(np.sum(w * V(x, 1) * psi * dpsi))
    # the integrand decays like sech^2 beyond the window
    tail = 2.0 * float(np.max(np.abs(V(np.linspace(0.0, V.period, 257), 1)))) * \
        math.sqrt(-omega) * abs(dpsi[-1]) / (2.0 * c)
    return {"value": value, "tail_estimate": tail, "omega": omega, "h": h,
            "half_length": half_length}


def gp_zero_state(model: ModelSpec, nodes_per_period: int) -> Profile:
    return constant_state(np.zeros(model.dim), model.period, nodes_per_period)


def gp_pulse_primary(model: ModelSpec, center: float = 0.0, half_periods: int = 4,
                     nodes_per_period: int = 128, opts: NewtonOptions | None = None) -> Profile:
    """Focusing pulse pinned near ``center`` on the zero background (scalar model)."""
    if model.name != "gp_scalar":
        raise ValueError("pulses are solved in the scalar stationary model")
    T = model.period
    omega = float(model.params["omega"])
    g = aligned_line_grid(T, nodes_per_period, center - half_periods * T, center + half_periods * T)
    zero = gp_zero_state(model, nodes_per_period)
    guess = Profile(g, bright_soliton(g.x, omega, center)[None, :], (zero, zero),
                    {"construction": "gp_pulse", "center": center})
    return solve_localized(model, guess, "dirichlet_to_states", opts)


def gp_pulse_train(model: ModelSpec, primary: Profile, n: int,
                   opts: NewtonOptions | None = None) -> tuple[Profile, float]:
    from .construct import extend_periodic_pulse

    return extend_periodic_pulse(model, primary, n, opts)


def gp_multipulse(model: ModelSpec, primary: Profile, signs: Sequence[int], n: int,
                  opts: NewtonOptions | None = None) -> tuple[Profile, float]:
    """Glued pulses ``sum_j sign_j psi_0(x - j n T)``."""
    prims = [primary.replace(values=float(s) * primary.values) for s in signs]
    return glue_multifront(GluePlan(model, prims, n), opts)


def as_real_pair(profile: Profile) -> Profile:
    """Scalar GP profile ``psi`` as ``(psi, 0)`` for the two-component model."""
    def pair(p: Profile) -> Profile:
        vals = np.vstack([p.values[:1], np.zeros_like(p.values[:1])])
        return Profile(p.grid, vals, None, dict(p.meta))

    asym = None
    if profile.asymptotics is not None:
        asym = tuple(pair(s) for s in profile.asymptotics)
    out = pair(profile)
    return out.replace(asymptotics=asym)


def _fourth_order_schrodinger(q: np.ndarray, grid: Grid) -> sp.csr_matrix:
    """``-d^2 + q`` with the five-point stencil (three-point next to Dirichlet ends)."""
    h2 = grid.h**2
    q = np.asarray(q, dtype=float)
    c = np.array([1.0, -16.0, 30.0, -16.0, 1.0]) / (12.0 * h2)
    if grid.periodic_kind:
        N = grid.n
        rows, cols, vals = [], [], []
        for off, cv in zip(range(-2, 3), c):
            i = np.arange(N)
            rows.append(i)
            cols.append((i + off) % N)
            vals.append(np.full(N, cv))
        A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(N, N))
        return (A + sp.diags(q)).tocsr()
    qi = q[1:-1]
    N = len(qi)
    diags = [np.full(N - 2, c[0]), np.full(N - 1, c[1]), np.full(N, c[2]),
             np.full(N - 1, c[3]), np.full(N - 2, c[4])]
    A = sp.diags(diags, [-2, -1, 0, 1, 2], format="lil")
    for i in (0, N - 1):
        A[i, :] = 0.0
        A[i, i] = 2.0 / h2
        if i + 1 < N:
            A[i, i + 1] = -1.0 / h2
        if i - 1 >= 0:
            A[i, i - 1] = -1.0 / h2
    return (A.tocsr() + sp.diags(qi)).tocsr()


@dataclass
class KreinReport:
    domain: str
    n_plus: int
    z_plus: int
    n_minus: int
    z_minus: int
    slope: float
    zeros: int
    profile_parity: str | None
    potential_even: bool
    verdict: str
    details: dict = field(default_factory=dict)

    @property
    def counts(self) -> tuple[int, int, int, int]:
        return self.n_plus, self.z_plus, self.n_minus, self.z_minus

    def to_dict(self) -> dict:
        return {"domain": self.domain, "n_plus": self.n_plus, "z_plus": self.z_plus,
                "n_minus": self.n_minus, "z_minus": self.z_minus, "slope": self.slope,
                "zeros": self.zeros, "profile_parity": self.profile_parity,
                "potential_even": self.potential_even, "verdict": self.verdict,
                "details": self.details}

    @classmethod
    def from_dict(cls, d: dict) -> "KreinReport":
        keys = ("domain", "n_plus", "z_plus", "n_minus", "z_minus", "slope", "zeros",
                "profile_parity", "potential_even", "verdict")
        return cls(**{k: d[k] for k in keys}, details=dict(d.get("details", {})))


def count_zeros(values: np.ndarray, dead_band: float = 1e-9) -> int:
    """Strict sign changes, ignoring samples within ``dead_band * max|values|`` of zero."""
    v = np.asarray(values, dtype=float).ravel()
    band = dead_band * float(np.max(np.abs(v))) if len(v) else 0.0
    signs = np.sign(v[np.abs(v) > band])
    return int(np.sum(signs[1:] != signs[:-1]))


def _parity(profile: Profile, tol: float = 1e-6) -> str | None:
    g = profile.grid
    center = g.x0 + 0.5 * g.length
    if g.periodic_kind:
        center = g.x0 + 0.5 * g.length
    x = g.x
    a = profile.values[0]
    b = profile.evaluate(2.0 * center - x)[0]
    scale = max(float(np.max(np.abs(a))), 1e-300)
    if np.max(np.abs(a - b)) <= tol * scale:
        return "even"
    if np.max(np.abs(a + b)) <= tol * scale:
        return "odd"
    return None


def _potential_even(V, center: float, tol: float = 1e-12) -> bool:
    t = np.linspace(0.0, V.period, 97)
    return bool(np.max(np.abs(V(center + t) - V(center - t))) <= tol * max(1.0, float(np.max(np.abs(V(t))))))


def _slope(q_plus: np.ndarray, psi: np.ndarray, grid: Grid, threshold: float) -> dict:
    """``<w, psi>`` with ``L_+ w = -psi``; a kernel orthogonal to ``psi`` is bordered out."""
    from scipy.sparse.linalg import eigsh

    A = _fourth_order_schrodinger(q_plus, grid).tocsc()
    rhs = -(psi if grid.periodic_kind else psi[1:-1])
    wts = grid.h
    vals, vecs = eigsh(A, k=1, sigma=0.0, which="LM")
    lam_small, kern = float(vals[0]), vecs[:, 0]
    info = {"smallest_eigenvalue": lam_small}
    if abs(lam_small) <= threshold:
        overlap = float(kern @ rhs) / (np.linalg.norm(kern) * np.linalg.norm(rhs))
        info["kernel_overlap"] = overlap
        if abs(overlap) > 1e-6:
            raise LPlusSingular(f"L+ has a kernel not orthogonal to the profile (overlap {overlap:.2e})")
        n = A.shape[0]
        B = sp.bmat([[A, sp.csc_matrix(kern[:, None])], [sp.csc_matrix(kern[None, :]), None]],
                    format="csc")
        sol = splu(B).solve(np.append(rhs - kern * (kern @ rhs), 0.0))
        w = sol[:n]
        info["bordered"] = True
    else:
        w = splu(A).solve(rhs)
        info["bordered"] = False
    info["slope"] = float(wts * (w @ -rhs))
    return info


def _kernel_tolerance(q_minus: np.ndarray, psi: np.ndarray, grid: Grid) -> float:
    """Relative dead band for the inertia counts.

    ``L_- psi = 0`` holds up to the Newton residual, so ten times the
    Rayleigh defect of ``psi`` (floored at rounding level) separates the
    kernel from exponentially small interaction eigenvalues.
    """
    from .oracle import schrodinger_matrix

    A = schrodinger_matrix(q_minus, grid)
    v = psi if grid.periodic_kind else psi[1:-1]
    defect = float(np.linalg.norm(A @ v) / max(np.linalg.norm(v), 1e-300))
    scale = 4.0 / grid.h**2 + float(np.max(np.abs(q_minus)))
    return max(10.0 * defect, 1e3 * np.finfo(float).eps * scale) / scale


def gp_krein_report(model: ModelSpec, profile: Profile, domain: str | None = None,
                    M: int = 1) -> KreinReport:
    """Inertia of ``L_+`` and ``L_-``, the slope ``<d_omega psi, psi>`` and the zero count.

    ``model`` may be the two-component or the scalar GP model; only the
    first profile component is used.
    """
    if model.name not in ("gp_real", "gp_scalar"):
        raise ValueError("Krein reports need a Gross-Pitaevskii model")
    g = profile.grid
    domain = domain or ("periodic" if g.periodic_kind else "line")
    if (domain == "periodic") != g.periodic_kind:
        raise ValueError(f"profile grid does not match the {domain} domain")
    kappa, mu, omega = (float(model.params[k]) for k in ("kappa", "mu", "omega"))
    V = model.potentials["V"]
    psi = profile.values[0]
    base = mu * V(g.x) + omega
    q_plus = base + 3.0 * kappa * psi**2
    q_minus = base + kappa * psi**2
    rel_tol = _kernel_tolerance(q_minus, psi, g)
    plus = inertia_details(q_plus, g, 0.0, rel_tol)
    minus = inertia_details(q_minus, g, 0.0, rel_tol)
    slope = _slope(q_plus, psi, g, plus["threshold"])
    zeros = count_zeros(psi)
    parity = _parity(profile)
    center = g.x0 + 0.5 * g.length
    v_even = _potential_even(V, center)
    report = KreinReport(domain, plus["n_below"], plus["z_at"], minus["n_below"], minus["z_at"],
                         slope["slope"], zeros, parity, v_even, "inconclusive",
                         {"L_plus": plus, "L_minus": minus, "slope_solve": slope, "M": M,
                          "kappa": kappa, "mu": mu, "omega": omega})
    if M >= 2:
        report.verdict = classify_gp_multipulse(report, M)
    elif report.slope < 0:
        report.verdict = "unstable_negative_slope"
    elif report.counts == (1, 0, 0, 1) and report.slope > 0:
        report.verdict = "stable"
    return report


def classify_gp_multipulse(report: KreinReport, M: int) -> str:
    """Instability case table for an ``M``-pulse (``M >= 2``) from its Krein report."""
    if M < 2:
        raise ValueError("the case table applies to M >= 2 pulses")
    if report.slope < 0:
        return "unstable_negative_slope"
    Z = report.zeros
    odd_profile = report.profile_parity == "odd"
    even_profile = report.profile_parity == "even"
    if Z == 0:
        return "unstable_case_i"
    if M % 2 == 0:
        m = M // 2
        if Z % 2 == 0:
            return "unstable_case_ii"
        ell = (Z - 1) // 2
        if odd_profile and report.potential_even and (m + ell) % 2 == 0:
            return "unstable_case_iii"
    else:
        m = (M - 1) // 2
        if Z % 2 == 1:
            return "unstable_case_v"
        ell = Z // 2
        if even_profile and report.potential_even and (m + ell) % 2 == 1:
            return "unstable_case_iv"
    if report.slope > 0 and report.counts == (1, 0, 0, 1):
        return "stable_candidate"
    return "inconclusive"


# ---------------------------------------------------------------------------
# Klausmeier


def klausmeier_model(eps: float = 0.0, d: float = 0.04, a: float = 0.5, m: float = 0.4,
                     f="klausmeier_f", g="klausmeier_g") -> ModelSpec:
    return build_builtin("klausmeier", {"d": d, "a": a, "m": m, "eps": eps}, {"f": f, "g": g})


def klausmeier_pulse_guess(x, d: float, a: float, m: float, center: float = 0.0) -> np.ndarray:
    """Leading-order pulse: a sech^2 plant patch on a water dip of depth ``a - w_*``.

    ``w_*`` is the smaller root of ``w^2 - a w + 3 d m^{3/2} = 0``; the larger
    root leads to an unstable pulse.
    """
    disc = a * a - 12.0 * d * m**1.5
    if disc <= 0:
        raise ValueError("no pulse at leading order for these parameters")
    w_star = 0.5 * (a - math.sqrt(disc))
    y = np.asarray(x, dtype=float) - center
    p = 1.5 * m / w_star / np.cosh(math.sqrt(m) * y / (2.0 * d)) ** 2
    w = a - (a - w_star) * np.exp(-np.abs(y))
    return np.vstack([w, p])


def klausmeier_background(model: ModelSpec, nodes_per_period: int,
                          opts: NewtonOptions | None = None) -> Profile:
    a = float(model.params["a"])
    return solve_periodic_state(model, constant_state([a, 0.0], model.period, nodes_per_period), opts)


def klausmeier_pulse(model: ModelSpec, nodes_per_period: int = 640, periods: int = 10,
                     opts: NewtonOptions | None = None) -> Profile:
    """Even pulse centred at 0 on ``[-periods T / 2 ... ]`` rounded to whole periods per side."""
    d, a, m = (float(model.params[k]) for k in ("d", "a", "m"))
    T = model.period
    half = max(1, int(math.ceil(0.5 * periods)))
    g = aligned_line_grid(T, nodes_per_period, -half * T, half * T)
    bg = klausmeier_background(model, nodes_per_period, opts)
    guess = Profile(g, klausmeier_pulse_guess(g.x, d, a, m), (bg, bg), {"construction": "klausmeier_pulse"})
    return solve_localized(model, guess, "dirichlet_to_states", opts)


def melnikov_klausmeier(f, g, pulse: Profile, model: ModelSpec | None = None) -> dict:
    """``M = int (f' dx w + g' w) Psi_1 dx`` with ``<dx u_0, Psi> = 1``; returns ``M`` and the slope ``-M``."""
    f, g = as_potential(f), as_potential(g)
    if model is None:
        p = pulse.meta.get("params", {})
        model = klausmeier_model(0.0, p.get("d", 0.04), p.get("a", 0.5), p.get("m", 0.4), f, g)
    grid = pulse.grid
    psi, w0, w1 = adjoint_kernel(model, pulse)
    du = np.vstack([np.gradient(c, grid.h) for c in pulse.values])
    wts = grid.weights()
    norm = float(np.sum(wts * np.sum(du * psi, axis=0)))
    psi = psi / norm
    w = pulse.values[0]
    integrand = (f(grid.x, 1) * du[0] + g(grid.x, 1) * w) * psi[0]
    M = float(np.sum(wts * integrand))
    return {"M": M, "predicted_slope": -M, "adjoint_eigenvalue": [w0.real, w0.imag],
            "next_adjoint_eigenvalue": [w1.real, w1.imag], "normalization": norm}


def sparse_critical_eigenvalue(model: ModelSpec, profile: Profile, shift: float = 0.0,
                               count: int = 4) -> complex:
    """Eigenvalue of the discrete linearization nearest ``shift`` (shift-invert Arnoldi)."""
    vals = sparse_eigenvalues(model, profile, shift, count)
    return complex(vals[np.argmin(np.abs(vals - shift))])


def sparse_eigenvalues(model: ModelSpec, profile: Profile, shift: float = 0.0,
                       count: int = 6) -> np.ndarray:
    """The ``count`` eigenvalues of the discrete linearization nearest ``shift``, by distance."""
    A = operator_matrix(model, profile).tocsc()
    v0 = np.random.default_rng(0).standard_normal(A.shape[0])
    vals = eigs(A, k=count, sigma=shift, which="LM", return_eigenvectors=False, v0=v0)
    return vals[np.lexsort((vals.imag, np.round(np.abs(vals - shift), 12)))]


def real_unstable_count(evaluator, low: float, high: float) -> dict:
    """Winding count on the disk whose diameter is ``[low, high]`` on the real axis."""
    if not 0 < low < high:
        raise ValueError("need 0 < low < high")
    circle = Circle(0.5 * (low + high), 0.5 * (high - low))
    rep = winding_count(evaluator, circle)
    return {"low": low, "high": high, "count": rep.winding, "samples": len(rep.samples)}


def refine_line_profile(model: ModelSpec, profile: Profile, factor: int,
                        opts: NewtonOptions | None = None) -> Profile:
    """Re-solve a front or pulse on the same interval with spacing ``h / factor``.

    Evans functions use the continuous linearization, so the O(h^2)
    residual of a finite-difference profile splits multiple zeros by O(h).
    """
    g = profile.grid
    fine = Grid.line(g.x0, g.x_end, n=(g.n - 1) * int(factor) + 1)
    return solve_localized(model, resample(profile, fine), opts=opts)


def klausmeier_slope(model: ModelSpec, pulse: Profile, eps_list: Sequence[float],
                     opts: NewtonOptions | None = None) -> dict:
    """Critical eigenvalue of the pinned pulse along ``eps_list``, fitted through the origin.

    The eigenvalue at ``eps = 0`` is subtracted as the discretization baseline.
    """
    eps_list = [float(e) for e in eps_list]
    base_model = model.with_params(eps=0.0)
    baseline = sparse_critical_eigenvalue(base_model, pulse).real
    profiles = continue_parameter(base_model, pulse, "eps", eps_list, opts)
    lams = [sparse_critical_eigenvalue(model.with_params(eps=e), p).real
            for e, p in zip(eps_list, profiles)]
    e = np.array(eps_list)
    shifted = np.array(lams) - baseline
    slope = float(np.dot(e, shifted) / np.dot(e, e))
    return {"eps": eps_list, "lambda0": lams, "baseline": baseline, "measured_slope": slope,
            "profiles": profiles}


def klausmeier_multipulse(model: ModelSpec, primary: Profile, count: int, n: int,
                          opts: NewtonOptions | None = None) -> tuple[Profile, float]:
    """``count`` copies of a pinned pulse glued ``n`` periods apart."""
    plan = GluePlan(model, [primary] * count, n)
    return glue_multifront(plan, opts)
