"""Multifronts glued from primary fronts, periodic pulse trains extended
from a primary pulse, and the decay of the correction as the spacing grows."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (GridError, InsufficientData, MatchingConditionViolated, NotAPulse,
                     SingularJacobian)
from .grid import Grid, Profile, discrete_norm, partition_of_unity, periodic_cutoff
from .model import ModelSpec
from .parallel import map_jobs
from .solver import NewtonOptions, solve_localized, solve_periodic_state

MATCH_TOL = 1e-8


def state_distance(a: Profile, b: Profile) -> float:
    """Discrete L2 distance of two periodic states over one cell of ``a``."""
    x = a.grid.x
    diff = a.values - b.evaluate(x)
    return float(np.sqrt(a.grid.h * np.sum(diff**2)))


def aligned_line_grid(T: float, nodes_per_period: int, left: float, right: float) -> Grid:
    """Line grid with spacing ``T / nodes_per_period`` whose nodes include every multiple of T."""
    h = T / nodes_per_period
    a = h * math.floor(left / h + 1e-9)
    b = h * math.ceil(right / h - 1e-9)
    return Grid("line", a, b - a, int(round((b - a) / h)) + 1)


@dataclass
class GluePlan:
    """Primary fronts ``Z_1..Z_M`` placed with interfaces at ``j n T`` (plus
    integer ``offsets`` in periods) and joined by a partition of unity."""

    model: ModelSpec
    primaries: Sequence[Profile]
    n: int
    offsets: Sequence[int] | None = None
    margin: float | None = None
    check_nondegenerate: bool = True
    sigma_threshold: float = 1e-6
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.primaries:
            raise ValueError("at least one primary is required")
        for p in self.primaries:
            if p.asymptotics is None:
                raise MatchingConditionViolated("every primary needs attached end states")
        for j in range(len(self.primaries) - 1):
            right = self.primaries[j].asymptotics[1]
            left = self.primaries[j + 1].asymptotics[0]
            d = state_distance(right, left)
            if d > MATCH_TOL:
                raise MatchingConditionViolated(
                    f"end state {j + 1}+ differs from {j + 2}- by {d:.3e} (tolerance {MATCH_TOL:g})")
        if self.check_nondegenerate:
            for j, p in enumerate(self.primaries):
                s = p.meta.get("sigma_min")
                if s is not None and s < self.sigma_threshold:
                    raise SingularJacobian(f"primary {j + 1} is degenerate (sigma_min={s:.2e})", s)

    @property
    def M(self) -> int:
        return len(self.primaries)

    @property
    def interfaces(self) -> list[float]:
        T = self.model.period
        offs = list(self.offsets) if self.offsets is not None else [0] * self.M
        return [(j * self.n + o) * T for j, o in zip(range(1, self.M + 1), offs)]

    def grid(self) -> Grid:
        first, last = self.primaries[0], self.primaries[-1]
        pos = self.interfaces
        T = self.model.period
        left = pos[0] + first.grid.x0
        right = pos[-1] + last.grid.x_end
        if self.margin is not None:
            left, right = pos[0] - self.margin, pos[-1] + self.margin
        left = min(left, pos[0] - 0.5 * self.n * T)
        right = max(right, pos[-1] + 0.5 * self.n * T)
        h = first.grid.h
        per = T / h
        if abs(per - round(per)) < 1e-9:
            return aligned_line_grid(T, int(round(per)), left, right)
        return Grid.line(left, right, h=h)

    def ansatz(self) -> tuple[Profile, object]:
        """Formal concatenation ``w_n`` and the partition of unity used."""
        if "ansatz" in self._cache:
            return self._cache["ansatz"]
        g = self.grid()
        fam = partition_of_unity(g, self.M, self.n, self.model.period, self.model.order,
                                 self.offsets)
        vals = np.zeros((self.model.dim, g.n))
        for chi, p, pos in zip(fam.functions, self.primaries, self.interfaces):
            vals += chi * p.evaluate(g.x - pos)
        asym = (self.primaries[0].asymptotics[0], self.primaries[-1].asymptotics[1])
        w = Profile(g, vals, asym, {"construction": "glue", "n": self.n, "M": self.M,
                                    "interfaces": self.interfaces})
        self._cache["ansatz"] = (w, fam)
        return w, fam


def glue_multifront(plan: GluePlan, opts: NewtonOptions | None = None,
                    bc: str = "dirichlet_to_states") -> tuple[Profile, float]:
    """Newton-correct the formal concatenation; returns ``(u_n, |u_n - w_n|_{H^k})``."""
    w, _ = plan.ansatz()
    u = solve_localized(plan.model, w, bc, opts)
    meta = dict(u.meta)
    meta.update({k: w.meta[k] for k in ("construction", "n", "M", "interfaces")})
    err = discrete_norm(u, f"H{plan.model.order}", values=u.values - w.values)
    meta["err_norm"] = err
    return u.replace(meta=meta), err


def pulse_background(primary: Profile, tol: float = MATCH_TOL) -> Profile:
    if primary.asymptotics is None:
        raise NotAPulse("primary has no attached end states")
    left, right = primary.asymptotics
    if left is not right and state_distance(left, right) > tol:
        raise NotAPulse("left and right end states differ")
    return left


def pulse_train_ansatz(model: ModelSpec, primary: Profile, n: int) -> tuple[Profile, object]:
    """``chi_n z + v`` on the cell ``[-nT/2, nT/2)`` with ``z = primary - v``."""
    v = pulse_background(primary)
    T = model.period
    P = n * T
    h = v.grid.h
    per = T / h
    if abs(per - round(per)) > 1e-9:
        h = primary.grid.h
    N = int(round(P / h))
    g = Grid("periodic", -0.5 * P, P, N)
    fam = periodic_cutoff(n, T, g, model.order)
    vx = v.evaluate(g.x)
    z = primary.evaluate(g.x) - vx
    vals = fam.functions[0] * z + vx
    return Profile(g, vals, (v, v), {"construction": "extend", "n": n}), fam


def extend_periodic_pulse(model: ModelSpec, primary: Profile, n: int,
                          opts: NewtonOptions | None = None) -> tuple[Profile, float]:
    """``nT``-periodic pulse train near ``chi_n z + v``; returns ``(u_n, |a_n|_{H^k_per})``."""
    w, _ = pulse_train_ansatz(model, primary, n)
    u = solve_periodic_state(model, w, opts)
    err = discrete_norm(u, f"H{model.order}", values=u.values - w.values)
    meta = dict(u.meta)
    meta.update({"construction": "extend", "n": n, "err_norm": err})
    return Profile(u.grid, u.values, w.asymptotics, meta), err


def tail_norm(model: ModelSpec, primary: Profile, n: int) -> float:
    """``|z|_{H^k}`` outside ``(-nT/6, nT/6)``, the quantity bounding ``|a_n|``."""
    v = pulse_background(primary)
    g = primary.grid
    z = primary.values - v.evaluate(g.x)
    mask = np.abs(g.x) >= n * model.period / 6.0
    from .grid import derivative
    total = 0.0
    w = g.weights()
    for order in range(model.order + 1):
        d = z if order == 0 else derivative(z, g, order)
        total += float(np.sum(w[mask] * np.sum(d[:, mask] ** 2, axis=0)))
    return math.sqrt(total)


def decay_study(build: Callable[[int], tuple], n_list, period: float,
                distance_fraction: float = 0.5, jobs: int | None = 1,
                floor: float = 1e-11) -> dict:
    """Fit ``err_norm(n) ~ C exp(-rate n T)`` over increasing ``n_list``.

    ``distance_fraction`` is the distance from a core to where its tail is
    cut, in units of ``nT`` (1/2 for glued fronts, 1/4 for pulse trains, where the periodic
    cut-off transition is centred);
    ``rate_per_length = rate / distance_fraction`` is the decay rate in x
    to compare with Floquet exponents.
    """
    n_list = [int(n) for n in n_list]
    if len(n_list) < 3:
        raise InsufficientData("decay fit needs at least three spacings")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be increasing")
    results = map_jobs(build, n_list, jobs)
    errs = np.array([r[1] for r in results], dtype=float)
    rows = [{"n": n, "err_norm": float(e)} for n, e in zip(n_list, errs)]
    saturated = bool(np.all(errs < floor))
    out = {"rows": rows, "saturated": saturated,
           "monotone": bool(np.all(np.diff(errs) < 0)),
           "fitted_rate": None, "rate_per_length": None, "log_constant": None,
           "profiles": [r[0] for r in results]}
    if saturated:
        return out
    use = errs > floor
    if np.sum(use) < 2:
        out["saturated"] = True
        return out
    xs = np.array(n_list, dtype=float)[use] * period
    ys = np.log(errs[use])
    A = np.column_stack([np.ones_like(xs), -xs])
    (logc, rate), *_ = np.linalg.lstsq(A, ys, rcond=None)
    out["fitted_rate"] = float(rate)
    out["rate_per_length"] = float(rate / distance_fraction)
    out["log_constant"] = float(logc)
    return out
