"""Transport of linear first-order systems, monodromy matrices, Floquet
exponents, Morse indices, and essential/absolute spectrum tests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IntegrationFailure, NonHyperbolic
from .grid import Profile
from .model import FirstOrderField, ModelSpec, WeightSpec, linearize_first_order

RTOL = 1e-11
UNIT_CIRCLE_TOL = 1e-7
MAX_SEGMENT_GROWTH = 4.0


# ---------------------------------------------------------------------------
# transport


def transport(field: FirstOrderField, x_start: float, x_end: float, Y0, lams,
              checkpoints=None, orthonormalize: bool = False):
    """Integrate ``Y' = A(x; lam) Y`` from ``x_start`` to ``x_end`` for a batch of lam.

    ``Y0`` has shape ``(km, r)`` or ``(B, km, r)``. With ``orthonormalize`` the
    frame is replaced by its QR factor at every checkpoint and
    ``log det R`` is accumulated, so that the returned frame times
    ``exp(ledger)`` spans the same subspace with the same volume as the
    exact transport of ``Y0``.

    Returns ``(Y, ledger)`` with shapes ``(B, km, r)`` and ``(B,)``.
    """
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    B = len(lams)
    Y = np.asarray(Y0, dtype=complex)
    if Y.ndim == 2:
        Y = np.broadcast_to(Y, (B,) + Y.shape).copy()
    km, r = Y.shape[1], Y.shape[2]
    rows, cols = field.lam_block()
    ledger = np.zeros(B, dtype=complex)
    stops = [float(x_start)]
    if checkpoints is not None:
        lo, hi = sorted((x_start, x_end))
        inner = [float(c) for c in checkpoints if lo < c < hi]
        inner.sort(reverse=bool(x_end < x_start))
        stops += inner
    stops.append(float(x_end))
    lam_col = lams[:, None, None]

    def rhs(x, y):
        Yc = y.reshape(B, km, r)
        A0, lead_inv = field.split([x])
        out = np.einsum("ij,bjr->bir", A0[0], Yc)
        out[:, rows, :] += lam_col * np.einsum("ij,bjr->bir", lead_inv[0], Yc[:, cols, :])
        return out.reshape(-1)

    for a, b in zip(stops[:-1], stops[1:]):
        if a == b:
            continue
        scale = max(1.0, float(np.max(np.abs(Y))))
        sol = solve_ivp(rhs, (a, b), Y.reshape(-1), method="DOP853", rtol=RTOL,
                        atol=RTOL * 1e-2 * scale)
        if not sol.success:
            raise IntegrationFailure(f"transport failed on [{a}, {b}]: {sol.message}")
        Y = sol.y[:, -1].reshape(B, km, r)
        if orthonormalize:
            Q, R = np.linalg.qr(Y)
            diag = np.diagonal(R, axis1=1, axis2=2)
            ledger += np.sum(np.log(diag), axis=1)
            Y = Q
    return Y, ledger


def growth_rate(field: FirstOrderField, x0: float, period: float, lam, samples: int = 33) -> float:
    """Largest frozen-coefficient growth rate ``max |Re eig A(x; lam)|`` over one period."""
    xs = x0 + period * np.arange(samples) / samples
    A = field.matrices(xs, lam)
    return float(np.max(np.abs(np.linalg.eigvals(A).real)))


def segment_count(field: FirstOrderField, x0: float, period: float, lams) -> int:
    lams = np.atleast_1d(lams)
    rate = max(growth_rate(field, x0, period, lam) for lam in lams)
    return int(min(64, max(1, math.ceil(rate * period / MAX_SEGMENT_GROWTH))))


def segment_propagators(field: FirstOrderField, x0: float, period: float, lams, segments: int):
    """Propagators over ``segments`` equal pieces of one period, shape ``(B, s, km, km)``."""
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    km = field.size
    edges = x0 + period * np.arange(segments + 1) / segments
    out = np.empty((len(lams), segments, km, km), dtype=complex)
    eye = np.eye(km, dtype=complex)
    for i in range(segments):
        Y, _ = transport(field, edges[i], edges[i + 1], eye, lams)
        out[:, i] = Y
    return out


def monodromy(field: FirstOrderField, period: float, lam, x0: float = 0.0) -> np.ndarray:
    """Fundamental solution over one period starting at ``x0``."""
    Y, _ = transport(field, x0, x0 + period, np.eye(field.size), [lam])
    return Y[0]


# ---------------------------------------------------------------------------
# Floquet data


@dataclass
class FloquetData:
    lam: complex
    monodromy: np.ndarray
    multipliers: np.ndarray
    exponents: np.ndarray
    morse_index: int
    unit_circle_distance: float
    period: float
    x0: float = 0.0
    segments: np.ndarray | None = None
    liouville_error: float = 0.0
    eig_residual: float = 0.0

    @property
    def hyperbolic(self) -> bool:
        return self.unit_circle_distance > UNIT_CIRCLE_TOL

    @property
    def size(self) -> int:
        return self.monodromy.shape[0]

    def to_dict(self) -> dict:
        return {
            "lambda": [self.lam.real, self.lam.imag],
            "exponents": [[e.real, e.imag] for e in self.exponents],
            "multipliers": [[p.real, p.imag] for p in self.multipliers],
            "morse_index": self.morse_index,
            "unit_circle_distance": self.unit_circle_distance,
        }


def cyclic_matrix(segments: np.ndarray) -> np.ndarray:
    """Block-cyclic matrix whose s-th power is block diagonal with the
    monodromy at the segment phases; block (0, 0) of the power is the
    monodromy at the start phase."""
    s, km, _ = segments.shape
    C = np.zeros((s * km, s * km), dtype=complex)
    for i in range(1, s):
        C[i * km:(i + 1) * km, (i - 1) * km:i * km] = segments[i - 1]
    C[:km, (s - 1) * km:] = segments[s - 1]
    return C


def _group_roots(mu: np.ndarray, s: int, km: int) -> np.ndarray:
    """Collapse the ``s * km`` eigenvalues of the cyclic matrix into ``km`` multipliers."""
    if s == 1:
        return mu
    logs = s * np.log(mu.astype(complex))
    free = list(np.argsort(logs.real, kind="stable"))
    out = []
    while free:
        i = free[0]
        ref = logs[i]
        cand = np.array(free)
        dim = np.angle(np.exp(1j * (logs[cand].imag - ref.imag)))
        dist = np.abs(logs[cand].real - ref.real) + np.abs(dim)
        pick = cand[np.argsort(dist, kind="stable")[:s]]
        dim_pick = np.angle(np.exp(1j * (logs[pick].imag - ref.imag)))
        mean = np.mean(logs[pick].real) + 1j * (ref.imag + np.mean(dim_pick))
        out.append(np.exp(mean))
        free = [j for j in free if j not in set(pick.tolist())]
    return np.array(out)


def sort_exponents(nu: np.ndarray) -> np.ndarray:
    """Order by real part, ties (within 1e-9) broken by imaginary part."""
    key_re = np.round(nu.real / 1e-9) * 1e-9
    order = np.lexsort((np.arange(len(nu)), nu.imag, key_re))
    return nu[order]


def _trace_integral(field: FirstOrderField, a: float, b: float, samples: int = 2049) -> float:
    xs = np.linspace(a, b, samples)
    tr = field.trace(xs).real
    h = (b - a) / (samples - 1)
    return float(h / 3.0 * (tr[0] + tr[-1] + 4.0 * tr[1:-1:2].sum() + 2.0 * tr[2:-1:2].sum()))


def floquet_batch(field: FirstOrderField, period: float, lams, x0: float = 0.0,
                  segments: int | None = None) -> list[FloquetData]:
    """Floquet data for a batch of spectral parameters.

    Multipliers come from the eigenvalues of the block-cyclic matrix built
    from short-segment propagators, which stays accurate when the
    monodromy itself spans many orders of magnitude.
    """
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    km = field.size
    s = segments or segment_count(field, x0, period, lams)
    segs = segment_propagators(field, x0, period, lams, s)
    trace_int = _trace_integral(field, x0, x0 + period)
    out = []
    for b, lam in enumerate(lams):
        mono = np.eye(km, dtype=complex)
        logdet = 0.0 + 0.0j
        for i in range(s):
            mono = segs[b, i] @ mono
            sign, ld = np.linalg.slogdet(segs[b, i])
            logdet += ld
        if s == 1:
            rho = np.linalg.eigvals(mono)
        else:
            rho = _group_roots(np.linalg.eigvals(cyclic_matrix(segs[b])), s, km)
        nu = sort_exponents(np.log(rho.astype(complex)) / period)
        rho_sorted = np.exp(nu * period)
        dist = float(np.min(np.abs(np.abs(rho_sorted) - 1.0)))
        liou = abs(float(logdet.real) - trace_int) if np.isfinite(logdet) else np.inf
        scale = max(1.0, np.linalg.norm(mono, 2))
        resid = max(float(np.linalg.svd(mono - r * np.eye(km), compute_uv=False)[-1]) / scale
                    for r in rho_sorted)
        morse = int(np.sum(np.abs(rho_sorted) < 1.0 - UNIT_CIRCLE_TOL))
        out.append(FloquetData(complex(lam), mono, rho_sorted, nu, morse, dist,
                               float(period), float(x0), segs[b], liou, resid))
    return out


def floquet_data(field: FirstOrderField, T: float, lam, weight_shift: float = 0.0,
                 x0: float = 0.0) -> FloquetData:
    """Floquet data at one spectral point; ``weight_shift`` uses ``A - eta I``."""
    if weight_shift:
        field = linearize_first_order(field.model, field.profile, WeightSpec.uniform(weight_shift))
    return floquet_batch(field, T, [lam], x0)[0]


def state_field(model: ModelSpec, state: Profile, eta: float = 0.0) -> FirstOrderField:
    return linearize_first_order(model, state, WeightSpec.uniform(eta) if eta else None)


# ---------------------------------------------------------------------------
# spectral tests


def essential_spectrum_test(model: ModelSpec, end_states, lam, weights=(0.0, 0.0),
                            phases=(0.0, 0.0)) -> dict:
    """Membership of ``lam`` in the essential spectrum of a front between two periodic states."""
    left, right = end_states
    fl = floquet_batch(state_field(model, left, weights[0]), model.period, [lam], phases[0])[0]
    fr = floquet_batch(state_field(model, right, weights[1]), model.period, [lam], phases[1])[0]
    return _ess_verdict(fl, fr)


def _ess_verdict(fl: FloquetData, fr: FloquetData) -> dict:
    hyper = fl.hyperbolic and fr.hyperbolic
    inside = (not hyper) or fl.morse_index != fr.morse_index
    return {
        "lambda": complex(fl.lam),
        "in_spectrum": bool(inside),
        "morse": (fl.morse_index, fr.morse_index),
        "fredholm_index": (fl.morse_index - fr.morse_index) if hyper else None,
        "unit_circle_distance": (fl.unit_circle_distance, fr.unit_circle_distance),
    }


def essential_spectrum_grid(model: ModelSpec, end_states, lams, weights=(0.0, 0.0),
                            phases=(0.0, 0.0), jobs: int = 1) -> list[dict]:
    """Vectorised membership test over many spectral points."""
    lams = np.atleast_1d(np.asarray(lams, dtype=complex)).ravel()
    left, right = end_states
    fieldL = state_field(model, left, weights[0])
    fieldR = state_field(model, right, weights[1])
    chunks = np.array_split(lams, max(1, min(len(lams), 4 * max(1, jobs))))

    def run(chunk):
        if len(chunk) == 0:
            return []
        fl = floquet_batch(fieldL, model.period, chunk, phases[0])
        fr = floquet_batch(fieldR, model.period, chunk, phases[1])
        return [_ess_verdict(a, b) for a, b in zip(fl, fr)]

    from .parallel import map_jobs

    results = map_jobs(run, chunks, jobs)
    return [r for chunk in results for r in chunk]


def essential_boundary_bisect(model: ModelSpec, state: Profile, lam_in: float, lam_out: float,
                              tol: float = 1e-9, eta: float = 0.0) -> float:
    """Bisection along the real axis for the unit-circle crossing of a periodic state.

    ``lam_in`` must lie in the spectrum (a multiplier on the unit circle)
    and ``lam_out`` outside it.
    """
    fld = state_field(model, state, eta)

    def inside(lam):
        return not floquet_batch(fld, model.period, [lam])[0].hyperbolic

    if not inside(lam_in) or inside(lam_out):
        raise NonHyperbolic("bisection bracket does not straddle the spectrum boundary")
    a, b = float(lam_in), float(lam_out)
    while abs(b - a) > tol:
        c = 0.5 * (a + b)
        if inside(c):
            a = c
        else:
            b = c
    return 0.5 * (a + b)


def absolute_spectrum_test(model: ModelSpec, junction_states, lam, l_plus: int,
                           tol: float = UNIT_CIRCLE_TOL) -> bool:
    """True iff some junction state has ``Re nu_{l+} == Re nu_{l+ + 1}`` (1-based, sorted)."""
    km = model.order * model.dim
    if not 1 <= l_plus <= km - 1:
        raise ValueError(f"l_plus must lie in 1..{km - 1}")
    for state in junction_states:
        fd = floquet_batch(state_field(model, state), model.period, [lam])[0]
        re = fd.exponents.real
        if abs(re[l_plus - 1] - re[l_plus]) <= tol:
            return True
    return False


def find_separating_weight(model: ModelSpec, state: Profile, lam, l_plus: int,
                           eta_max: float = 2.0, num: int = 81):
    """Search a 1-D grid of weights for one whose Morse index equals ``l_plus``.

    Heuristic: returns the admissible weight of smallest magnitude, or None.
    """
    etas = np.linspace(-eta_max, eta_max, num)
    fd = floquet_batch(state_field(model, state), model.period, [lam])[0]
    best = None
    for eta in sorted(etas, key=abs):
        shifted = fd.exponents - eta
        if np.min(np.abs(shifted.real)) <= UNIT_CIRCLE_TOL:
            continue
        if int(np.sum(shifted.real < 0)) == l_plus:
            best = float(eta)
            break
    return best


def slowest_decay_rate(model: ModelSpec, state: Profile, lam=0.0) -> float:
    """Smallest ``|Re nu|`` among the Floquet exponents of a periodic state."""
    fd = floquet_batch(state_field(model, state), model.period, [lam])[0]
    return float(np.min(np.abs(fd.exponents.real)))


def spectral_projection(fd: FloquetData, nodes: int = 64, max_nodes: int = 1 << 14) -> np.ndarray:
    """Projection onto the generalised eigenspace of multipliers inside the unit circle.

    Trapezoidal quadrature of the resolvent of the block-cyclic matrix over
    the unit circle, doubling the node count until the result is an
    idempotent of integer trace.
    """
    if not fd.hyperbolic:
        raise NonHyperbolic(f"multiplier on the unit circle at lambda={fd.lam}")
    segs = fd.segments if fd.segments is not None else fd.monodromy[None]
    C = cyclic_matrix(segs)
    n = C.shape[0]
    km = fd.size
    target = fd.morse_index * segs.shape[0]
    eye = np.eye(n)
    while True:
        z = np.exp(2j * np.pi * (np.arange(nodes) + 0.5) / nodes)
        P = np.zeros((n, n), dtype=complex)
        for zj in z:
            P += zj * np.linalg.solve(zj * eye - C, eye)
        P /= nodes
        err = np.linalg.norm(P @ P - P) / max(1.0, np.linalg.norm(P))
        if err < 1e-9 and abs(np.trace(P) - target) < 1e-6:
            return P[:km, :km]
        nodes *= 2
        if nodes > max_nodes:
            raise NonHyperbolic(f"resolvent quadrature did not converge (idempotency error {err:.2e})")
