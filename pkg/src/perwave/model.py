"""Evolution systems ``u_t = sum_i alpha_i(x) d^i u + N(u, x)`` with periodic
coefficients, their first-order eigenvalue systems, and the built-in models."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, ModelError
from .grid import Profile

# ---------------------------------------------------------------------------
# periodic coefficient descriptors


@dataclass(frozen=True)
class FourierSeries:
    """``sum_j cos[j] cos(j k x) + sum_j sin[j-1] sin(j k x)`` with ``k = 2 pi / period``.

    ``cos[0]`` is the mean; ``sin`` starts at the first harmonic.
    """

    cos: tuple = (0.0,)
    sin: tuple = ()
    period: float = 2.0 * math.pi

    def __post_init__(self):
        object.__setattr__(self, "cos", tuple(float(c) for c in self.cos))
        object.__setattr__(self, "sin", tuple(float(s) for s in self.sin))
        if not self.period > 0:
            raise ModelError("potential period must be positive")

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.period

    def __call__(self, x, deriv: int = 0):
        x = np.asarray(x, dtype=float)
        k = self.wavenumber
        out = np.zeros_like(x)
        for j, c in enumerate(self.cos):
            if c != 0.0:
                out = out + c * _trig_deriv(np.cos, j * k, x, deriv)
        for j, s in enumerate(self.sin, start=1):
            if s != 0.0:
                out = out + s * _trig_deriv(np.sin, j * k, x, deriv)
        return out

    def derivative(self, x, order: int = 1):
        return self(x, order)

    def is_constant(self) -> bool:
        return all(c == 0.0 for c in self.cos[1:]) and all(s == 0.0 for s in self.sin)

    def parity(self) -> str | None:
        """``"even"``, ``"odd"`` or None."""
        has_cos = any(c != 0.0 for c in self.cos)
        has_sin = any(s != 0.0 for s in self.sin)
        if not has_sin:
            return "even"
        if not has_cos:
            return "odd"
        return None

    def scaled(self, factor: float) -> "FourierSeries":
        return FourierSeries(tuple(factor * c for c in self.cos),
                             tuple(factor * s for s in self.sin), self.period)

    def to_dict(self) -> dict:
        return {"cos": list(self.cos), "sin": list(self.sin), "period": self.period}

    @classmethod
    def from_dict(cls, d: Mapping) -> "FourierSeries":
        return cls(tuple(d.get("cos", (0.0,))), tuple(d.get("sin", ())),
                   float(d.get("period", 2.0 * math.pi)))


def _trig_deriv(fn, w, x, deriv):
    # d^n/dx^n cos(wx) = w^n cos(wx + n pi/2); same shift for sin
    if w == 0.0:
        return np.ones_like(x) * (fn(0.0) if deriv == 0 else 0.0)
    return w**deriv * fn(w * x + deriv * math.pi / 2.0)


@dataclass(frozen=True)
class CallablePotential:
    """Escape hatch: an arbitrary periodic function with its derivative."""

    func: Callable
    dfunc: Callable
    period: float

    def __call__(self, x, deriv: int = 0):
        if deriv == 0:
            return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)
        if deriv == 1:
            return np.asarray(self.dfunc(np.asarray(x, dtype=float)), dtype=float)
        raise ModelError("callable potentials provide one derivative only")

    def derivative(self, x, order: int = 1):
        return self(x, order)

    def is_constant(self) -> bool:
        return False

    def parity(self):
        return None


PRESET_POTENTIALS = {
    "cos_pi": FourierSeries((0.0, 1.0), (), 2.0),
    "cos_2x": FourierSeries((0.0, 1.0), (), math.pi),
    "gp_pulse": FourierSeries((0.0, -0.1, -0.05), (), 2.0 * math.pi),
    "gp_front": FourierSeries((0.1, 0.1), (), 2.0 * math.pi),
    "klausmeier_f": FourierSeries((0.0,), (0.2,), math.pi),
    "klausmeier_g": FourierSeries((0.0, 0.4), (), math.pi),
    "zero": FourierSeries((0.0,), (), 1.0),
}


def as_potential(spec) -> FourierSeries | CallablePotential:
    """Accept a preset name, a ``{"cos":…, "sin":…, "period":…}`` map or a descriptor."""
    if isinstance(spec, (FourierSeries, CallablePotential)):
        return spec
    if isinstance(spec, str):
        if spec not in PRESET_POTENTIALS:
            raise ModelError(f"unknown potential preset {spec!r}")
        return PRESET_POTENTIALS[spec]
    if isinstance(spec, Mapping):
        return FourierSeries.from_dict(spec)
    raise ModelError(f"cannot interpret potential {spec!r}")


# ---------------------------------------------------------------------------
# exponential weights


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


def _smoothstep_integral(t):
    # antiderivative of the smoothstep in t, vanishing at t = 0
    t = np.clip(t, 0.0, 1.0)
    return t**4 * (2.5 - 3.0 * t + t**2)


@dataclass(frozen=True)
class WeightSpec:
    """Weight ``omega`` with ``omega' = eta_minus`` left of ``-half_width`` and
    ``eta_plus`` right of ``half_width``, joined by a quintic smoothstep."""

    eta_minus: float = 0.0
    eta_plus: float = 0.0
    half_width: float = 1.0

    @classmethod
    def uniform(cls, eta: float) -> "WeightSpec":
        return cls(float(eta), float(eta))

    @property
    def trivial(self) -> bool:
        return self.eta_minus == 0.0 and self.eta_plus == 0.0

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.eta_minus == self.eta_plus:
            return np.full_like(x, self.eta_minus)
        t = (x + self.half_width) / (2.0 * self.half_width)
        return self.eta_minus + (self.eta_plus - self.eta_minus) * _smoothstep(t)

    def second_derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.eta_minus == self.eta_plus:
            return np.zeros_like(x)
        t = np.clip((x + self.half_width) / (2.0 * self.half_width), 0.0, 1.0)
        ds = 30.0 * t**2 * (1.0 - t) ** 2
        return (self.eta_plus - self.eta_minus) * ds / (2.0 * self.half_width)

    def value(self, x):
        """``omega(x)`` normalised by ``omega(0) = 0``."""
        x = np.asarray(x, dtype=float)
        if self.eta_minus == self.eta_plus:
            return self.eta_minus * x
        w = self.half_width
        d = self.eta_plus - self.eta_minus
        t = (x + w) / (2.0 * w)
        # the smoothstep contribution equals 1 for x >= w
        excess = 2.0 * w * _smoothstep_integral(t) + np.maximum(x - w, 0.0)
        return self.eta_minus * x + d * (excess - 2.0 * w * _smoothstep_integral(0.5))


# ---------------------------------------------------------------------------
# model specification


@dataclass(frozen=True)
class ModelSpec:
    """A system ``u_t = alpha_k d^k u + ... + alpha_1 d u + N(u, x)``.

    ``coeffs[i-1]`` maps an array of x to ``alpha_i(x)`` with shape
    ``(P, m, m)``; ``nonlin(u, x)`` maps ``u`` of shape ``(m, P)`` to ``(m, P)``
    and ``nonlin_jac(u, x)`` returns ``(P, m, m)``.
    """

    name: str
    order: int
    dim: int
    period: float
    coeffs: tuple
    nonlin: Callable
    nonlin_jac: Callable
    field_kind: str = "real"
    params: Mapping = field(default_factory=dict)
    potentials: Mapping = field(default_factory=dict)
    factory: Callable | None = None

    def __post_init__(self):
        if self.order < 1 or self.dim < 1:
            raise ModelError("order and dimension must be positive")
        if len(self.coeffs) != self.order:
            raise ModelError(f"expected {self.order} coefficient callables, got {len(self.coeffs)}")
        if self.field_kind not in ("real", "complex_pair"):
            raise ModelError(f"unknown field kind {self.field_kind!r}")
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))
        object.__setattr__(self, "potentials", MappingProxyType(dict(self.potentials)))
        lead = self.coefficient(self.order, np.linspace(0.0, self.period, 17))
        cond = np.linalg.cond(lead)
        if not np.all(np.isfinite(cond)) or np.max(cond) > 1e12:
            raise ModelError("leading coefficient is not invertible")

    def coefficient(self, i: int, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.asarray(self.coeffs[i - 1](x), dtype=float).reshape(len(x), self.dim, self.dim)

    def with_params(self, **updates) -> "ModelSpec":
        """Rebuild the model with some parameters replaced."""
        if self.factory is None:
            raise ModelError(f"model {self.name!r} cannot be rebuilt with new parameters")
        params = dict(self.params)
        params.update(updates)
        return self.factory(params, dict(self.potentials))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "params": dict(self.params),
            "potentials": {k: v.to_dict() for k, v in self.potentials.items()
                           if isinstance(v, FourierSeries)},
        }


def _const_coeff(mat):
    mat = np.asarray(mat, dtype=float)

    def coeff(x):
        return np.broadcast_to(mat, (len(x),) + mat.shape)

    return coeff


def _require(params, names):
    missing = [n for n in names if n not in params]
    if missing:
        raise ModelError(f"missing parameters: {', '.join(missing)}")


def _toy_rde(params, potentials):
    _require(params, ["eps"])
    eps = float(params["eps"])
    V = as_potential(potentials.get("V", "cos_pi"))

    def nonlin(u, x):
        return eps * V(x) * u - np.sin(u)

    def jac(u, x):
        return (eps * V(x) - np.cos(u[0]))[:, None, None]

    return ModelSpec("toy_rde", 2, 1, V.period, (_const_coeff([[0.0]]), _const_coeff([[1.0]])),
                     nonlin, jac, "real", {"eps": eps}, {"V": V}, _toy_rde)


def _klausmeier(params, potentials):
    _require(params, ["d", "a", "m", "eps"])
    d, a, m, eps = (float(params[k]) for k in ("d", "a", "m", "eps"))
    if d <= 0 or m <= 0:
        raise ModelError("klausmeier needs d > 0 and m > 0")
    f = as_potential(potentials.get("f", "klausmeier_f"))
    g = as_potential(potentials.get("g", "klausmeier_g"))
    T = _common_period(f.period, g.period)

    def alpha1(x):
        out = np.zeros((len(x), 2, 2))
        out[:, 0, 0] = eps * f(x)
        return out

    def nonlin(u, x):
        w, p = u[0], u[1]
        return np.array([eps * g(x) * w - w - w * p**2 + a, -m * p + w * p**2])

    def jac(u, x):
        w, p = u[0], u[1]
        out = np.empty((len(x), 2, 2))
        out[:, 0, 0] = eps * g(x) - 1.0 - p**2
        out[:, 0, 1] = -2.0 * w * p
        out[:, 1, 0] = p**2
        out[:, 1, 1] = -m + 2.0 * w * p
        return out

    return ModelSpec("klausmeier", 2, 2, T, (alpha1, _const_coeff(np.diag([1.0, d * d]))),
                     nonlin, jac, "real", {"d": d, "a": a, "m": m, "eps": eps},
                     {"f": f, "g": g}, _klausmeier)


def _gp_params(params):
    _require(params, ["kappa", "mu", "omega"])
    kappa = float(params["kappa"])
    if kappa not in (1.0, -1.0):
        raise ModelError("kappa must be +1 or -1")
    return kappa, float(params["mu"]), float(params["omega"])


_J = np.array([[0.0, 1.0], [-1.0, 0.0]])


def _gp_real(params, potentials):
    kappa, mu, omega = _gp_params(params)
    V = as_potential(potentials.get("V", "gp_pulse"))

    def nonlin(u, x):
        q = mu * V(x) + omega + kappa * (u[0] ** 2 + u[1] ** 2)
        return np.array([q * u[1], -q * u[0]])

    def jac(u, x):
        q = mu * V(x) + omega + kappa * (u[0] ** 2 + u[1] ** 2)
        inner = np.empty((len(x), 2, 2))
        inner[:, 0, 0] = q + 2.0 * kappa * u[0] ** 2
        inner[:, 0, 1] = 2.0 * kappa * u[0] * u[1]
        inner[:, 1, 0] = inner[:, 0, 1]
        inner[:, 1, 1] = q + 2.0 * kappa * u[1] ** 2
        return np.einsum("ij,pjk->pik", _J, inner)

    return ModelSpec("gp_real", 2, 2, V.period, (_const_coeff(np.zeros((2, 2))), _const_coeff(-_J)),
                     nonlin, jac, "complex_pair", {"kappa": kappa, "mu": mu, "omega": omega},
                     {"V": V}, _gp_real)


def _gp_scalar(params, potentials):
    kappa, mu, omega = _gp_params(params)
    V = as_potential(potentials.get("V", "gp_pulse"))

    def nonlin(u, x):
        return (mu * V(x) + omega) * u + kappa * u**3

    def jac(u, x):
        return (mu * V(x) + omega + 3.0 * kappa * u[0] ** 2)[:, None, None]

    return ModelSpec("gp_scalar", 2, 1, V.period, (_const_coeff([[0.0]]), _const_coeff([[-1.0]])),
                     nonlin, jac, "real", {"kappa": kappa, "mu": mu, "omega": omega},
                     {"V": V}, _gp_scalar)


def _common_period(p, q):
    if abs(p - q) <= 1e-12 * max(p, q):
        return p
    for a in range(1, 13):
        for b in range(1, 13):
            if abs(a * p - b * q) <= 1e-12 * a * p:
                return a * p
    raise ModelError("coefficient periods are incommensurate")


BUILTINS = {
    "toy_rde": _toy_rde,
    "klausmeier": _klausmeier,
    "gp_real": _gp_real,
    "gp_scalar": _gp_scalar,
}

BUILTIN_DESCRIPTIONS = {
    "toy_rde": "u_t = u'' + eps V(x) u - sin u (params: eps; potential V)",
    "klausmeier": "water/plant system with periodic terrain f, g (params: d, a, m, eps)",
    "gp_real": "Gross-Pitaevskii as a real 2-component system (params: kappa, mu, omega; potential V)",
    "gp_scalar": "real stationary GP equation -psi'' + (mu V + omega) psi + kappa psi^3 (params: kappa, mu, omega)",
}


def build_builtin(name: str, params: Mapping | None = None, potentials: Mapping | None = None) -> ModelSpec:
    """Construct one of the built-in benchmark models.

    Potentials (``V`` for toy/GP, ``f`` and ``g`` for Klausmeier) are preset
    names, Fourier maps or descriptors; they may also be passed inside
    ``params`` under the same keys.
    """
    if name not in BUILTINS:
        raise ModelError(f"unknown model {name!r}; built-ins are {', '.join(BUILTINS)}")
    params = dict(params or {})
    pots = dict(potentials or {})
    for key in ("V", "f", "g"):
        if key in params and not isinstance(params[key], (int, float)):
            pots[key] = params.pop(key)
    pots = {k: as_potential(v) for k, v in pots.items()}
    return BUILTINS[name](params, pots)


def model_from_config(config: Mapping) -> ModelSpec:
    """Model from ``{"name", "params", "potential": {"cos", "sin", "period"}}``.

    The single ``potential`` entry names ``V``; Klausmeier terrains go in an
    optional ``potentials`` map with keys ``f`` and ``g``.
    """
    if "name" not in config:
        raise ModelError("model config needs a 'name'")
    pots = dict(config.get("potentials", {}))
    if "potential" in config:
        pots["V"] = config["potential"]
    return build_builtin(config["name"], config.get("params", {}), pots)


# ---------------------------------------------------------------------------
# first-order reduction


class FirstOrderField:
    """``A(x; lambda) = A0(x) + lambda E(x)`` for the eigenvalue problem
    ``L(u) v = lambda v`` written for ``U = (v, v', ..., v^(k-1))``.

    Only the last ``m`` rows depend on ``lambda`` and on the profile. The
    weight enters as ``-omega'(x) I``.
    """

    def __init__(self, model: ModelSpec, profile: Profile, weight: WeightSpec | None = None):
        if profile.dim != model.dim:
            raise DimensionMismatch(f"profile has {profile.dim} components, model has {model.dim}")
        self.model = model
        self.profile = profile
        self.weight = weight if weight is not None and not weight.trivial else None
        k, m = model.order, model.dim
        self.size = k * m

    def _lower_rows(self, x: np.ndarray):
        """``alpha_k^{-1}`` and the last block row without lambda, shape (P, m, km)."""
        model = self.model
        k, m = model.order, model.dim
        u = self.profile.evaluate(x)
        lead_inv = np.linalg.inv(model.coefficient(k, x))
        rows = np.empty((len(x), m, k * m))
        rows[:, :, :m] = -model.nonlin_jac(u, x)
        for i in range(1, k):
            rows[:, :, i * m:(i + 1) * m] = -model.coefficient(i, x)
        return lead_inv, np.einsum("pij,pjk->pik", lead_inv, rows)

    def split(self, x):
        """Return ``A0`` with shape ``(P, km, km)`` and ``alpha_k^{-1}`` with shape ``(P, m, m)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        k, m = self.model.order, self.model.dim
        km = self.size
        lead_inv, last = self._lower_rows(x)
        A0 = np.zeros((len(x), km, km))
        idx = np.arange((k - 1) * m)
        A0[:, idx, idx + m] = 1.0
        A0[:, (k - 1) * m:, :] = last
        if self.weight is not None:
            A0 -= self.weight.derivative(x)[:, None, None] * np.eye(km)
        return A0, lead_inv

    def matrices(self, x, lam) -> np.ndarray:
        """``A(x; lam)`` for an array of x, shape ``(P, km, km)``."""
        A0, lead_inv = self.split(x)
        k, m = self.model.order, self.model.dim
        A = A0.astype(complex)
        A[:, (k - 1) * m:, :m] += lam * lead_inv
        return A

    def matrix(self, x: float, lam) -> np.ndarray:
        return self.matrices([x], lam)[0]

    def trace(self, x, lam=0.0) -> np.ndarray:
        """``tr A(x; lam)`` (independent of lam for the companion structure)."""
        A = self.matrices(x, lam)
        return np.trace(A, axis1=1, axis2=2)

    def lam_block(self):
        """Row and column slices of the lambda-dependent block."""
        k, m = self.model.order, self.model.dim
        return slice((k - 1) * m, k * m), slice(0, m)


def linearize_first_order(model: ModelSpec, profile: Profile,
                          weight: WeightSpec | None = None) -> FirstOrderField:
    return FirstOrderField(model, profile, weight)
