"""Uniform grids, grid functions, discrete Sobolev norms and smooth cut-offs."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DimensionMismatch, GridError

MIN_NODES = 16


@dataclass(frozen=True)
class Grid:
    """Uniform grid on a truncated line ``[x0, x0+length]`` or a periodic
    cell ``[x0, x0+length)`` (right endpoint excluded)."""

    kind: str
    x0: float
    length: float
    n: int

    def __post_init__(self):
        if self.kind not in ("line", "periodic"):
            raise GridError(f"unknown grid kind {self.kind!r}")
        if self.n < MIN_NODES:
            raise GridError(f"grid needs at least {MIN_NODES} nodes, got {self.n}")
        if not self.length > 0:
            raise GridError("grid length must be positive")

    @classmethod
    def line(cls, a: float, b: float, h: float | None = None, n: int | None = None) -> "Grid":
        if n is None:
            if h is None:
                raise GridError("give either h or n")
            n = int(round((b - a) / h)) + 1
        return cls("line", float(a), float(b - a), int(n))

    @classmethod
    def periodic(cls, x0: float, length: float, h: float | None = None,
                 n: int | None = None) -> "Grid":
        if n is None:
            if h is None:
                raise GridError("give either h or n")
            n = int(round(length / h))
        return cls("periodic", float(x0), float(length), int(n))

    @property
    def periodic_kind(self) -> bool:
        return self.kind == "periodic"

    @property
    def h(self) -> float:
        return self.length / (self.n if self.periodic_kind else self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.h * np.arange(self.n)

    @property
    def x_end(self) -> float:
        return self.x0 + self.length

    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights."""
        w = np.full(self.n, self.h)
        if not self.periodic_kind:
            w[0] = w[-1] = 0.5 * self.h
        return w

    def wrap(self, x):
        """Map points into the periodic cell."""
        return self.x0 + np.mod(np.asarray(x, dtype=float) - self.x0, self.length)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "x0": self.x0, "length": self.length, "n": self.n}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(d["kind"], float(d["x0"]), float(d["length"]), int(d["n"]))


@dataclass(frozen=True)
class Profile:
    """A wave sampled on a grid.

    ``values`` has shape ``(m, N)``. ``asymptotics`` optionally holds the
    left and right periodic end states, each a periodic :class:`Profile`.
    """

    grid: Grid
    values: np.ndarray
    asymptotics: tuple | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        if v.shape[1] != self.grid.n:
            raise DimensionMismatch(f"values have {v.shape[1]} nodes, grid has {self.grid.n}")
        if not np.all(np.isfinite(v)):
            raise GridError("profile values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.asymptotics is not None:
            left, right = self.asymptotics
            for s in (left, right):
                if s.dim != v.shape[0]:
                    raise DimensionMismatch("end state dimension differs from profile")
                if not s.grid.periodic_kind:
                    raise GridError("end states must live on periodic cells")
        object.__setattr__(self, "_spline", None)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def replace(self, **changes) -> "Profile":
        return replace(self, **changes)

    def _get_spline(self) -> CubicSpline:
        sp = self._spline
        if sp is None:
            g = self.grid
            if g.periodic_kind:
                xs = np.append(g.x, g.x_end)
                ys = np.concatenate([self.values, self.values[:, :1]], axis=1)
                sp = CubicSpline(xs, ys, axis=1, bc_type="periodic")
            else:
                sp = CubicSpline(g.x, self.values, axis=1)
            object.__setattr__(self, "_spline", sp)
        return sp

    def evaluate(self, x, deriv: int = 0) -> np.ndarray:
        """Piecewise-cubic evaluation, shape ``(m, len(x))``.

        Periodic profiles are evaluated modulo their cell. Line profiles
        defer to the attached end states outside the grid, or hold the
        boundary value when none are attached.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        sp = self._get_spline()
        g = self.grid
        if g.periodic_kind:
            return sp(g.wrap(x), deriv)
        out = sp(np.clip(x, g.x0, g.x_end), deriv)
        left = x < g.x0
        right = x > g.x_end
        if left.any() or right.any():
            if self.asymptotics is not None:
                if left.any():
                    out[:, left] = self.asymptotics[0].evaluate(x[left], deriv)
                if right.any():
                    out[:, right] = self.asymptotics[1].evaluate(x[right], deriv)
            elif deriv > 0:
                out[:, left | right] = 0.0
        return out

    def boundary_mismatch(self) -> float:
        """Max-norm distance between the profile ends and its end states."""
        if self.asymptotics is None:
            return 0.0
        g = self.grid
        left = self.asymptotics[0].evaluate([g.x0])[:, 0]
        right = self.asymptotics[1].evaluate([g.x_end])[:, 0]
        return float(max(np.max(np.abs(self.values[:, 0] - left)),
                         np.max(np.abs(self.values[:, -1] - right))))


def constant_state(value, period: float, n: int = 64, x0: float = 0.0) -> Profile:
    """A spatially constant periodic state on one cell."""
    value = np.atleast_1d(np.asarray(value, dtype=float))
    g = Grid.periodic(x0, period, n=n)
    return Profile(g, np.repeat(value[:, None], n, axis=1))


def sample(grid: Grid, func, asymptotics=None, meta=None) -> Profile:
    """Profile from a callable ``func(x) -> (m, N)`` or ``(N,)`` array."""
    vals = np.atleast_2d(np.asarray(func(grid.x), dtype=float))
    return Profile(grid, vals, asymptotics, dict(meta or {}))


def resample(profile: Profile, grid: Grid) -> Profile:
    """Interpolate a profile onto another grid of the same kind."""
    if grid.kind != profile.grid.kind:
        raise GridError("resampling between grid kinds is not supported")
    return Profile(grid, profile.evaluate(grid.x), profile.asymptotics, dict(profile.meta))


# ---------------------------------------------------------------------------
# derivatives and norms

_STENCILS = {
    1: (np.array([-0.5, 0.0, 0.5]), 1),
    2: (np.array([1.0, -2.0, 1.0]), 1),
    3: (np.array([-0.5, 1.0, 0.0, -1.0, 0.5]), 2),
    4: (np.array([1.0, -4.0, 6.0, -4.0, 1.0]), 2),
}


def stencil(order: int) -> tuple[np.ndarray, int]:
    """Second-order central difference weights (unscaled) and half-width."""
    if order not in _STENCILS:
        raise GridError(f"derivative order {order} not supported")
    return _STENCILS[order]


def derivative(values: np.ndarray, grid: Grid, order: int) -> np.ndarray:
    """Central-difference derivative along the last axis.

    Periodic grids wrap around; line grids close the ends one-sidedly.
    """
    values = np.asarray(values, dtype=float)
    if order == 0:
        return values.copy()
    h = grid.h
    if grid.periodic_kind:
        w, half = stencil(order)
        out = np.zeros_like(values)
        for j, c in enumerate(w):
            if c != 0.0:
                out += c * np.roll(values, half - j, axis=-1)
        return out / h**order
    out = values
    for _ in range(order):
        out = np.gradient(out, h, axis=-1, edge_order=2)
    return out


def discrete_norm(profile: Profile, kind: str = "L2", values: np.ndarray | None = None) -> float:
    """Trapezoidal L2 norm, or an ``H<j>`` norm adding derivatives up to order j."""
    vals = profile.values if values is None else np.atleast_2d(values)
    grid = profile.grid
    kind = kind.upper()
    if kind == "L2":
        order = 0
    elif kind.startswith("H"):
        order = int(kind[1:])
        if order > 4:
            raise GridError("Sobolev order above 4 is not supported")
    else:
        raise GridError(f"unknown norm {kind!r}")
    w = grid.weights()
    total = 0.0
    for j in range(order + 1):
        d = derivative(vals, grid, j)
        total += float(np.sum(w * np.sum(np.abs(d) ** 2, axis=0)))
    return float(np.sqrt(total))


# ---------------------------------------------------------------------------
# smooth cut-offs


def _ramp_unit(t: np.ndarray, nderiv: int) -> np.ndarray:
    """Exp-ratio ramp on [0, 1] and its first ``nderiv`` t-derivatives.

    The ramp is ``1 / (1 + exp(1/t - 1/(1-t)))``; it is C-infinity and
    identically 0 for t <= 0 and 1 for t >= 1.
    """
    t = np.asarray(t, dtype=float)
    out = np.zeros((nderiv + 1,) + t.shape)
    out[0] = (t >= 1.0).astype(float)
    inside = (t > 0.0) & (t < 1.0)
    if not inside.any():
        return out
    ti = t[inside]
    u = 1.0 - ti
    phi = 1.0 / ti - 1.0 / u
    with np.errstate(over="ignore"):
        sig = 1.0 / (1.0 + np.exp(phi))
    # derivatives of psi = -phi
    p1 = 1.0 / ti**2 + 1.0 / u**2
    p2 = -2.0 / ti**3 + 2.0 / u**3
    p3 = 6.0 / ti**4 + 6.0 / u**4
    p4 = -24.0 / ti**5 + 24.0 / u**5
    s1 = sig * (1.0 - sig)
    s2 = s1 * (1.0 - 2.0 * sig)
    s3 = s1 * (1.0 - 6.0 * sig + 6.0 * sig**2)
    s4 = s2 * (1.0 - 12.0 * sig + 12.0 * sig**2)
    derivs = [
        sig,
        s1 * p1,
        s2 * p1**2 + s1 * p2,
        s3 * p1**3 + 3.0 * s2 * p1 * p2 + s1 * p3,
        s4 * p1**4 + 6.0 * s3 * p1**2 * p2 + s2 * (3.0 * p2**2 + 4.0 * p1 * p3) + s1 * p4,
    ]
    for j in range(nderiv + 1):
        out[j][inside] = np.nan_to_num(derivs[j], nan=0.0, posinf=0.0, neginf=0.0)
    return out


def ramp(y, half_width: float = 1.0, nderiv: int = 0) -> np.ndarray:
    """Smooth step rising from 0 at ``y <= -half_width`` to 1 at ``y >= half_width``.

    Returns an array of shape ``(nderiv+1,) + y.shape`` holding the ramp and
    its y-derivatives.
    """
    if nderiv > 4:
        raise GridError("ramp derivatives above order 4 are not available")
    y = np.asarray(y, dtype=float)
    scale = 1.0 / (2.0 * half_width)
    vals = _ramp_unit((y + half_width) * scale, nderiv)
    for j in range(1, nderiv + 1):
        vals[j] *= scale**j
    return vals


@dataclass(frozen=True)
class CutoffFamily:
    """Cut-off functions on a grid with their derivatives.

    ``derivs[j]`` has shape ``(kmax+1, N)``; ``supports`` and ``plateaus``
    are open/closed intervals as ``(lo, hi)`` pairs with infinities allowed.
    """

    grid: Grid
    derivs: tuple
    supports: tuple
    plateaus: tuple
    sobolev: tuple
    kmax: int

    @property
    def functions(self) -> list:
        return [d[0] for d in self.derivs]

    def __len__(self):
        return len(self.derivs)


def _sobolev_sup(derivs: np.ndarray) -> float:
    return float(np.max(np.abs(derivs)))


def _analytic_sup(half_width: float, kmax: int) -> float:
    """Supremum of the ramp derivatives up to ``kmax``, on a dense sample."""
    t = np.linspace(-half_width, half_width, 20001)
    return _sobolev_sup(ramp(t, half_width, kmax))


def partition_of_unity(grid: Grid, M: int, n: int, T: float, kmax: int = 2,
                       offsets=None) -> CutoffFamily:
    """Partition of unity ``chi_{j,n}``, ``j = 1..M``, with transitions of
    half-width 1 centred midway between consecutive interfaces.

    Interfaces sit at ``j n T + offsets[j-1] T`` (offsets default to 0), so
    the transitions are at ``(j + 1/2) n T`` for equal spacing.
    """
    if M < 1:
        raise GridError("need at least one function")
    if n < 2:
        raise GridError("spacing multiplier n must be at least 2")
    offsets = [0] * M if offsets is None else [int(o) for o in offsets]
    if len(offsets) != M:
        raise GridError("one offset per interface is required")
    interfaces = [(j * n + o) * T for j, o in zip(range(1, M + 1), offsets)]
    gaps = np.diff(interfaces)
    if np.any(gaps <= 4.0):
        raise GridError("transitions overlap: interface spacing must exceed 4")
    centers = [0.5 * (a + b) for a, b in zip(interfaces[:-1], interfaces[1:])]
    lo = interfaces[0] - 0.5 * n * T
    hi = interfaces[-1] + 0.5 * n * T
    if grid.x0 > lo + 1e-12 or grid.x_end < hi - 1e-12:
        raise GridError(f"grid must span [{lo}, {hi}]")
    return partition_at(grid, centers, kmax)


def partition_at(grid: Grid, centers, kmax: int = 2) -> CutoffFamily:
    """Partition of unity with half-width-1 transitions at increasing ``centers``."""
    centers = [float(c) for c in centers]
    M = len(centers) + 1
    x = grid.x
    R = [ramp(x - c, 1.0, kmax) for c in centers]
    one = np.zeros((kmax + 1, grid.n))
    one[0] = 1.0
    derivs, supports, plateaus = [], [], []
    for j in range(M):
        up = R[j - 1] if j >= 1 else one
        down = R[j] if j < M - 1 else np.zeros_like(one)
        derivs.append(up - down)
        a = -np.inf if j == 0 else centers[j - 1] - 1.0
        b = np.inf if j == M - 1 else centers[j] + 1.0
        supports.append((a, b))
        plateaus.append((a + 2.0 if np.isfinite(a) else -np.inf, b - 2.0 if np.isfinite(b) else np.inf))
    fam = CutoffFamily(grid, tuple(derivs), tuple(supports), tuple(plateaus),
                       tuple(_sobolev_sup(d) for d in derivs), kmax)
    _verify_family(fam)
    return fam


def periodic_cutoff(n: int, T: float, grid: Grid, kmax: int = 2) -> CutoffFamily:
    """Even ``nT``-periodic cut-off: 1 on ``|x| <= nT/6``, 0 on ``nT/3 <= |x| <= nT/2``."""
    if n < 3:
        raise GridError("periodic cut-off needs n >= 3")
    P = n * T
    if not grid.periodic_kind or abs(grid.length - P) > 1e-9 * P:
        raise GridError("periodic cut-off needs a periodic grid of cell length nT")
    if P / 6.0 < 2.0 * grid.h:
        raise GridError("n too small: cut-off zones narrower than two grid cells")
    xw = np.mod(grid.x + 0.5 * P, P) - 0.5 * P
    ax = np.abs(xw)
    hw = P / 12.0
    r = ramp(ax - 0.25 * P, hw, kmax)
    d = -r
    d[0] += 1.0
    sgn = np.sign(xw)
    for j in range(1, kmax + 1, 2):
        d[j] *= sgn
    fam = CutoffFamily(grid, (d,), ((-P / 3.0, P / 3.0),), ((-P / 6.0, P / 6.0),),
                       (_analytic_sup(hw, kmax),), kmax)
    _verify_family(fam, periodic_cell=P)
    return fam


def _verify_family(fam: CutoffFamily, periodic_cell: float | None = None):
    x = fam.grid.x
    if periodic_cell is not None:
        x = np.mod(x + 0.5 * periodic_cell, periodic_cell) - 0.5 * periodic_cell
    for d, (a, b), (pa, pb) in zip(fam.derivs, fam.supports, fam.plateaus):
        chi = d[0]
        if np.any(chi < -1e-15) or np.any(chi > 1.0 + 1e-15):
            raise GridError("cut-off values leave [0, 1]")
        outside = (x <= a) | (x >= b)
        if np.any(np.abs(chi[outside]) > 0.0):
            raise GridError("cut-off nonzero outside its support")
        plateau = (x >= pa) & (x <= pb)
        if np.any(np.abs(chi[plateau] - 1.0) > 1e-15):
            raise GridError("cut-off differs from 1 on its plateau")
