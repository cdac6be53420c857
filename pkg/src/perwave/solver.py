"""Damped Newton solvers for the stationary equation ``A u + N(u, x) = 0`` on
periodic cells and truncated lines, and natural parameter continuation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import (BoundaryInconsistent, ContinuationStalled, GridError, ModelError,
                     NoConvergence, SingularJacobian)
from .grid import Grid, Profile, stencil
from .model import ModelSpec


@dataclass(frozen=True)
class NewtonOptions:
    max_iter: int = 50
    abs_tol: float = 1e-10
    backtrack: float = 0.5
    min_step: float = 1e-4
    sigma_threshold: float = 1e-6

    def __post_init__(self):
        if self.abs_tol <= 0 or self.max_iter <= 0:
            raise ValueError("tolerances and iteration limits must be positive")
        if not 0 < self.backtrack < 1 or not 0 < self.min_step <= 1:
            raise ValueError("invalid line-search parameters")


class Discretization:
    """Second-order central differences for ``sum_i alpha_i d^i``, assembled as
    a sparse banded matrix with unknowns ordered node-major (``j*m + c``).

    ``bc`` is ``"periodic"`` (wrap-around stencils), ``"dirichlet"`` (the
    outermost ``k//2`` nodes on each side pinned to prescribed values) or
    ``"projection"`` (boundary rows replaced by linear conditions).
    """

    def __init__(self, model: ModelSpec, grid: Grid, bc: str = "periodic"):
        if bc == "periodic" and not grid.periodic_kind:
            raise GridError("periodic boundary treatment needs a periodic grid")
        if bc != "periodic" and grid.periodic_kind:
            raise GridError("periodic grids only admit periodic boundary treatment")
        self.model = model
        self.grid = grid
        self.bc = bc
        m, N = model.dim, grid.n
        self.m, self.N = m, N
        self.nb = 0 if bc == "periodic" else max(1, model.order // 2)
        interior = np.arange(self.nb, N - self.nb)
        self.interior_nodes = interior
        self.boundary_nodes = np.setdiff1d(np.arange(N), interior)
        self.linear = self._assemble_linear(interior)
        rows = (interior[:, None] * m + np.arange(m)).ravel()
        self.interior_rows = rows
        self.boundary_rows = np.setdiff1d(np.arange(N * m), rows)

    def _assemble_linear(self, nodes: np.ndarray) -> sp.csr_matrix:
        model, grid = self.model, self.grid
        m, N, h = self.m, self.N, grid.h
        x = grid.x[nodes]
        R, C, V = [], [], []
        a_idx, b_idx = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
        for i in range(1, model.order + 1):
            alpha = model.coefficient(i, x)
            if not np.any(alpha):
                continue
            w, half = stencil(i)
            for o, wo in zip(range(-half, half + 1), w):
                if wo == 0.0:
                    continue
                cols = nodes + o
                if grid.periodic_kind:
                    cols = np.mod(cols, N)
                elif np.any((cols < 0) | (cols >= N)):
                    raise GridError("stencil leaves the grid")
                R.append((nodes[:, None, None] * m + a_idx).ravel())
                C.append((cols[:, None, None] * m + b_idx).ravel())
                V.append((alpha * (wo / h**i)).ravel())
        if not R:
            return sp.csr_matrix((N * m, N * m))
        return sp.csr_matrix((np.concatenate(V), (np.concatenate(R), np.concatenate(C))),
                             shape=(N * m, N * m))

    # flattening helpers
    def flat(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float).T.reshape(-1)

    def unflat(self, u: np.ndarray) -> np.ndarray:
        return u.reshape(self.N, self.m).T

    def operator_residual(self, u: np.ndarray) -> np.ndarray:
        """``A u + N(u, x)`` at every node (boundary rows meaningless off periodic grids)."""
        vals = self.unflat(u)
        return self.linear @ u + self.flat(self.model.nonlin(vals, self.grid.x))

    def jac_blocks(self, u: np.ndarray) -> np.ndarray:
        return self.model.nonlin_jac(self.unflat(u), self.grid.x)

    def linearization(self, u: np.ndarray) -> sp.csr_matrix:
        """Discrete ``L(u) = A + d_u N(u, .)`` on all nodes."""
        m, N = self.m, self.N
        blocks = self.jac_blocks(u)
        D = sp.block_diag(list(blocks), format="csr") if m > 1 else sp.diags(blocks[:, 0, 0])
        return (self.linear + D).tocsr()


def _l2(grid: Grid, r: np.ndarray, m: int) -> float:
    return float(np.sqrt(grid.h * np.sum(r**2)))


class _System:
    """Residual map and Jacobian including boundary rows."""

    def __init__(self, disc: Discretization, boundary_rows=None):
        self.disc = disc
        self.extra = boundary_rows  # (matrix G, target g): G u = g on boundary rows

    def residual(self, u):
        d = self.disc
        F = d.operator_residual(u)
        if d.bc != "periodic":
            G, g = self.extra
            F[d.boundary_rows] = G @ u - g
        return F

    def jacobian(self, u):
        d = self.disc
        J = d.linearization(u)
        if d.bc != "periodic":
            G, _ = self.extra
            J = J.tolil()
            J[d.boundary_rows, :] = G
            J = J.tocsr()
        return J


def _sigma_min(lu, n: int, iters: int = 40, seed: int = 0) -> float:
    """Smallest singular value by inverse iteration on ``J^T J`` with a cached LU."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    est = np.inf
    for _ in range(iters):
        w = lu.solve(lu.solve(v, trans="T"))
        nw = np.linalg.norm(w)
        if not np.isfinite(nw) or nw == 0:
            return 0.0
        new = 1.0 / np.sqrt(nw)
        v = w / nw
        if abs(new - est) <= 1e-10 * new:
            est = new
            break
        est = new
    return float(est)


def _roundoff_floor(system: _System, J, u: np.ndarray) -> float:
    """Residual level below which rounding in the assembled operator dominates."""
    g = system.disc.grid
    scale = float(abs(J).sum(axis=1).max()) * max(1.0, float(np.max(np.abs(u))))
    return 16.0 * np.finfo(float).eps * scale * math.sqrt(g.length)


def newton(system: _System, u0: np.ndarray, opts: NewtonOptions):
    """Damped Newton with backtracking; returns ``(u, info)``."""
    grid, m = system.disc.grid, system.disc.m
    u = u0.copy()
    F = system.residual(u)
    norm = _l2(grid, F, m)
    history = [norm]
    it = 0
    lu = None
    stalled = False
    while norm > opts.abs_tol and not stalled:
        if it >= opts.max_iter:
            raise NoConvergence(f"Newton did not converge in {it} iterations (residual {norm:.3e})",
                                it, history)
        J = system.jacobian(u)
        try:
            lu = splu(J.tocsc())
        except RuntimeError as exc:
            raise SingularJacobian(f"Jacobian factorisation failed: {exc}", 0.0) from exc
        delta = -lu.solve(F)
        if not np.all(np.isfinite(delta)):
            raise SingularJacobian("Newton step is not finite", 0.0)
        t = 1.0
        while True:
            trial = u + t * delta
            Ft = system.residual(trial)
            nt = _l2(grid, Ft, m)
            if np.isfinite(nt) and (nt < (1.0 - 1e-4 * t) * norm or nt <= opts.abs_tol):
                break
            t *= opts.backtrack
            if t < opts.min_step:
                if norm <= _roundoff_floor(system, J, u):
                    stalled = True
                    break
                raise NoConvergence(
                    f"line search failed after {it} iterations (residual {norm:.3e})", it, history)
        if stalled:
            break
        u, F, norm = trial, Ft, nt
        history.append(norm)
        it += 1
    J = system.jacobian(u)
    try:
        lu = splu(J.tocsc())
        smin = _sigma_min(lu, len(u))
    except RuntimeError:
        smin = 0.0
    return u, {"iterations": it, "residual": norm, "history": history, "sigma_min": smin,
               "stalled_at_roundoff": stalled,
               "nondegenerate": bool(smin >= opts.sigma_threshold)}


def _finish(profile_like: Profile, disc: Discretization, u, info, extra_meta=None) -> Profile:
    meta = dict(profile_like.meta)
    meta.update({k: info[k] for k in ("iterations", "residual", "sigma_min", "nondegenerate")})
    meta["model"] = disc.model.name
    meta["params"] = dict(disc.model.params)
    if extra_meta:
        meta.update(extra_meta)
    return Profile(disc.grid, disc.unflat(u).copy(), profile_like.asymptotics, meta)


def solve_periodic_state(model: ModelSpec, guess: Profile, opts: NewtonOptions | None = None) -> Profile:
    """Newton solve on a periodic cell whose length is a multiple of the period."""
    opts = opts or NewtonOptions()
    g = guess.grid
    if not g.periodic_kind:
        raise GridError("periodic states need a periodic grid")
    ratio = g.length / model.period
    if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
        raise GridError("cell length must be an integer multiple of the model period")
    if guess.dim != model.dim:
        raise ModelError("guess dimension differs from the model")
    disc = Discretization(model, g, "periodic")
    u, info = newton(_System(disc), disc.flat(guess.values), opts)
    return _finish(guess, disc, u, info)


def state_residual(model: ModelSpec, state: Profile) -> float:
    disc = Discretization(model, state.grid, "periodic")
    return _l2(state.grid, disc.operator_residual(disc.flat(state.values)), model.dim)


def _dirichlet_rows(disc: Discretization, left: Profile, right: Profile):
    m, N = disc.m, disc.N
    x = disc.grid.x
    rows = disc.boundary_rows
    G = sp.csr_matrix((np.ones(len(rows)), (np.arange(len(rows)), rows)), shape=(len(rows), N * m))
    targets = np.empty(len(rows))
    for r_i, r in enumerate(rows):
        node, comp = divmod(r, m)
        state = left if node < N // 2 else right
        targets[r_i] = state.evaluate([x[node]])[comp, 0]
    return G, targets


def _projection_rows(disc: Discretization, model: ModelSpec, left: Profile, right: Profile):
    """Boundary conditions: deviation from the end state lies in the unstable
    (left) / stable (right) Floquet subspace at lambda = 0."""
    from .floquet import floquet_batch, spectral_projection, state_field

    if model.order != 2:
        raise GridError("projection boundary conditions are implemented for second-order systems")
    m, N, h = disc.m, disc.N, disc.grid.h
    x = disc.grid.x
    rows_out, targets = [], []
    for side, state in (("left", left), ("right", right)):
        node = 0 if side == "left" else N - 1
        fd = floquet_batch(state_field(model, state), model.period, [0.0], x[node])[0]
        Ps = spectral_projection(fd).real
        P = Ps if side == "left" else np.eye(2 * m) - Ps
        _, _, vh = np.linalg.svd(P)
        W = vh[:m]  # conditions W (U - V) = 0
        if side == "left":
            nodes, coef = [0, 1, 2], np.array([-1.5, 2.0, -0.5]) / h
        else:
            nodes, coef = [N - 1, N - 2, N - 3], np.array([1.5, -2.0, 0.5]) / h
        V = np.concatenate([state.evaluate([x[node]])[:, 0], state.evaluate([x[node]], 1)[:, 0]])
        for w in W:
            row = np.zeros(N * m)
            row[node * m:(node + 1) * m] += w[:m]
            for nd, c in zip(nodes, coef):
                row[nd * m:(nd + 1) * m] += c * w[m:]
            rows_out.append(row)
            targets.append(float(w @ V))
    G = sp.csr_matrix(np.array(rows_out))
    return G, np.array(targets)


def solve_localized(model: ModelSpec, guess: Profile, bc: str = "dirichlet_to_states",
                    opts: NewtonOptions | None = None, state_tol: float | None = None) -> Profile:
    """Newton solve for a front or pulse on a truncated line with attached end states."""
    opts = opts or NewtonOptions()
    if guess.grid.periodic_kind:
        raise GridError("localized solves need a line grid")
    if guess.asymptotics is None:
        raise BoundaryInconsistent("guess has no attached end states")
    left, right = guess.asymptotics
    tol = state_tol if state_tol is not None else 10.0 * opts.abs_tol
    for s in (left, right):
        r = state_residual(model, s)
        if r > tol:
            raise BoundaryInconsistent(f"end state residual {r:.2e} exceeds {tol:.1e}")
    if bc in ("dirichlet", "dirichlet_to_states"):
        disc = Discretization(model, guess.grid, "dirichlet")
        extra = _dirichlet_rows(disc, left, right)
    elif bc == "projection":
        disc = Discretization(model, guess.grid, "projection")
        extra = _projection_rows(disc, model, left, right)
    else:
        raise ValueError(f"unknown boundary treatment {bc!r}")
    u, info = newton(_System(disc, extra), disc.flat(guess.values), opts)
    prof = _finish(guess, disc, u, info, {"bc": bc})
    meta = dict(prof.meta)
    meta["boundary_mismatch"] = prof.boundary_mismatch()
    return prof.replace(meta=meta)


def jacobian_check(model: ModelSpec, profile: Profile, bc: str = "periodic", seed: int = 0,
                   step: float = 1e-6, trials: int = 5) -> float:
    """Largest relative error between the assembled Jacobian and central finite
    differences of the residual map along random directions."""
    rng = np.random.default_rng(seed)
    disc = Discretization(model, profile.grid, "periodic" if profile.grid.periodic_kind else "dirichlet")
    u = disc.flat(profile.values)
    J = disc.linearization(u)
    rows = disc.interior_rows
    worst = 0.0
    for _ in range(trials):
        d = rng.standard_normal(len(u))
        fd = (disc.operator_residual(u + step * d) - disc.operator_residual(u - step * d)) / (2 * step)
        an = J @ d
        err = np.linalg.norm((fd - an)[rows]) / max(np.linalg.norm(an[rows]), 1e-300)
        worst = max(worst, float(err))
    return worst


# ---------------------------------------------------------------------------
# continuation


def _solve_at(model: ModelSpec, guess: Profile, opts: NewtonOptions, bc: str) -> Profile:
    if guess.grid.periodic_kind:
        return solve_periodic_state(model, guess, opts)
    left, right = guess.asymptotics
    new_left = solve_periodic_state(model, left, opts)
    new_right = new_left if right is left else solve_periodic_state(model, right, opts)
    return solve_localized(model, guess.replace(asymptotics=(new_left, new_right)), bc, opts)


def continue_parameter(model: ModelSpec, start: Profile, param: str, targets,
                       opts: NewtonOptions | None = None, bc: str = "dirichlet_to_states",
                       min_step: float = 1e-4) -> list[Profile]:
    """Natural continuation through ``targets``; one converged profile per target.

    Steps that fail are halved down to ``min_step``. An empty target list
    returns ``[start]``.
    """
    opts = opts or NewtonOptions()
    targets = list(targets)
    if not targets:
        return [start]
    if param not in model.params:
        raise ModelError(f"model has no parameter {param!r}")
    value = float(model.params[param])
    current = start
    previous = None
    out = []
    for target in targets:
        target = float(target)
        step = target - value
        while value != target:
            trial_value = value + step
            if (step > 0 and trial_value > target) or (step < 0 and trial_value < target):
                trial_value = target
            guess = current
            if previous is not None and previous[0] != value:
                # secant predictor from the last two accepted solutions
                w = (trial_value - value) / (value - previous[0])
                guess = current.replace(values=current.values + w * (current.values - previous[1].values))
            try:
                sol = _solve_at(model.with_params(**{param: trial_value}), guess, opts, bc)
            except (NoConvergence, SingularJacobian, BoundaryInconsistent):
                step *= 0.5
                if abs(step) < min_step:
                    raise ContinuationStalled(f"continuation in {param} stalled at {value}", value)
                continue
            previous = (value, current)
            value, current = trial_value, sol
        out.append(current)
    return out
