"""Evans functions for fronts, pulses and periodic wave trains, winding
numbers along closed contours, and root localization.

Line Evans functions transport bases of the unstable (left) and stable
(right) asymptotic subspaces to a matching point. Frames are kept
orthonormal by QR at fixed checkpoints while ``log det R`` is accumulated,
so the reported value equals the determinant of the exactly transported
frames. Growth over whole periods is removed with integer powers of the
product of the relevant Floquet multipliers, an analytic nonvanishing
factor, so zeros and their multiplicities are unaffected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (EssentialSpectrum, IndexMismatch, MaxRefinementExceeded, NonHyperbolic,
                     NotPeriodicProfile, ReferenceDegenerate, RootOnContour)
from .floquet import (UNIT_CIRCLE_TOL, FloquetData, floquet_batch, segment_count,
                      segment_propagators, spectral_projection, state_field, transport,
                      cyclic_matrix, _trace_integral)
from .grid import Profile
from .model import FirstOrderField, ModelSpec, WeightSpec, linearize_first_order
from .parallel import map_jobs

REFERENCE_SEED = 20240611


@dataclass
class DichotomyFrame:
    side: str
    frame: np.ndarray
    log_scale: complex
    lam: complex
    rank: int


@dataclass
class EvansEvaluation:
    lam: complex
    value: complex
    left: DichotomyFrame
    right: DichotomyFrame
    ledger: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"lambda": [self.lam.real, self.lam.imag],
                "value": [self.value.real, self.value.imag],
                "ledger": {k: ([v.real, v.imag] if isinstance(v, complex) else v)
                           for k, v in self.ledger.items()}}


# ---------------------------------------------------------------------------
# asymptotic subspaces


def _default_reference(km: int, r: int, slots_first: bool = True) -> np.ndarray:
    return np.eye(km)[:, :r]


def _project_reference(P: np.ndarray, r: int, reference: np.ndarray | None) -> np.ndarray:
    km = P.shape[0]
    if r == 0:
        return np.zeros((km, 0), dtype=complex)
    refs = [reference[:, :r]] if reference is not None else [_default_reference(km, r)]
    rng = np.random.default_rng(REFERENCE_SEED)
    refs.append(rng.standard_normal((km, r)))
    for ref in refs:
        B = P @ ref
        sv = np.linalg.svd(B, compute_uv=False)
        if sv[-1] > 1e-10 * max(1.0, sv[0]):
            return B
    raise ReferenceDegenerate("projected reference frame is rank deficient")


def asymptotic_frames(fd: FloquetData, reference: np.ndarray | None = None):
    """Bases ``(stable, unstable)`` of the Floquet subspaces at the base point of ``fd``.

    Spectral projections come from a resolvent quadrature over the unit
    circle; bases are projections of a fixed reference frame so they vary
    analytically with lambda.
    """
    if not fd.hyperbolic:
        raise NonHyperbolic(f"multiplier on the unit circle at lambda={fd.lam}")
    km = fd.size
    Ps = spectral_projection(fd)
    Pu = np.eye(km) - Ps
    l = fd.morse_index
    stable = _project_reference(Ps, l, reference)
    unstable = _project_reference(Pu, km - l, reference)
    return stable, unstable


def _log_multiplier_sums(fd: FloquetData):
    rho = fd.multipliers
    l = fd.morse_index
    return complex(np.sum(np.log(rho[:l].astype(complex)))), complex(np.sum(np.log(rho[l:].astype(complex))))


# ---------------------------------------------------------------------------
# line Evans function


class LineEvans:
    """Evans function of a front or pulse with attached periodic end states.

    Callable on arrays of lambda. The matching point defaults to the
    period-grid point nearest the middle of the profile's grid.
    """

    def __init__(self, model: ModelSpec, profile: Profile, weight: WeightSpec | None = None,
                 match_point: float | None = None, reference: np.ndarray | None = None,
                 jobs: int | None = 1):
        if profile.asymptotics is None:
            raise NotPeriodicProfile("line Evans function needs attached end states")
        if profile.grid.periodic_kind:
            raise NotPeriodicProfile("line Evans function needs a line profile")
        self.model = model
        self.profile = profile
        self.weight = weight if weight is not None and not weight.trivial else None
        self.field = linearize_first_order(model, profile, self.weight)
        T = model.period
        g = profile.grid
        self.x_left, self.x_right = g.x0, g.x_end
        if match_point is None:
            mid = 0.5 * (self.x_left + self.x_right)
            match_point = T * round(mid / T)
            if not self.x_left < match_point < self.x_right:
                match_point = mid
        self.match_point = float(match_point)
        eta_m = self.weight.eta_minus if self.weight else 0.0
        eta_p = self.weight.eta_plus if self.weight else 0.0
        self.left_field = state_field(model, profile.asymptotics[0], eta_m)
        self.right_field = state_field(model, profile.asymptotics[1], eta_p)
        self.reference = reference
        self.jobs = jobs
        self.periods_left = int(round((self.match_point - self.x_left) / T))
        self.periods_right = int(round((self.x_right - self.match_point) / T))

    def _checkpoints(self, a: float, b: float, lams) -> list:
        T = self.model.period
        s = segment_count(self.field, a, T, lams)
        step = T / s
        count = int(math.floor(abs(b - a) / step))
        sign = 1.0 if b > a else -1.0
        return [a + sign * step * j for j in range(1, count + 1)]

    def floquet(self, lams):
        T = self.model.period
        fl = floquet_batch(self.left_field, T, lams, self.x_left)
        fr = floquet_batch(self.right_field, T, lams, self.x_right)
        return fl, fr

    def evaluate(self, lams) -> list[EvansEvaluation]:
        lams = np.atleast_1d(np.asarray(lams, dtype=complex)).ravel()
        if self.jobs and self.jobs > 1 and len(lams) > 1:
            chunks = np.array_split(lams, min(len(lams), self.jobs))
            parts = map_jobs(self._evaluate_batch, [c for c in chunks if len(c)], self.jobs)
            return [e for part in parts for e in part]
        return self._evaluate_batch(lams)

    def _evaluate_batch(self, lams) -> list[EvansEvaluation]:
        fl, fr = self.floquet(lams)
        km = self.field.size
        starts_l, starts_r, ranks = [], [], []
        sums = []
        for a, b in zip(fl, fr):
            if not (a.hyperbolic and b.hyperbolic):
                raise EssentialSpectrum(f"lambda={a.lam} lies on the essential spectrum of an end state")
            if a.morse_index != b.morse_index:
                raise IndexMismatch(f"Morse indices differ at lambda={a.lam}: "
                                    f"l-={a.morse_index}, l+={b.morse_index}",
                                    a.morse_index, b.morse_index)
            _, unstable = asymptotic_frames(a, self.reference)
            stable, _ = asymptotic_frames(b, self.reference)
            starts_l.append(unstable)
            starts_r.append(stable)
            ranks.append(b.morse_index)
            log_s_left, log_u_left = _log_multiplier_sums(a)
            log_s_right, _ = _log_multiplier_sums(b)
            sums.append((log_u_left, log_s_right))
        out: list[EvansEvaluation | None] = [None] * len(lams)
        for r in sorted(set(ranks)):
            idx = [i for i, rr in enumerate(ranks) if rr == r]
            sub = lams[idx]
            YL = np.stack([starts_l[i] for i in idx])
            YR = np.stack([starts_r[i] for i in idx])
            QL, volL = transport(self.field, self.x_left, self.match_point, YL, sub,
                                 self._checkpoints(self.x_left, self.match_point, sub), True)
            QR, volR = transport(self.field, self.x_right, self.match_point, YR, sub,
                                 self._checkpoints(self.x_right, self.match_point, sub), True)
            for j, i in enumerate(idx):
                log_u_left, log_s_right = sums[i]
                corr_l = -self.periods_left * log_u_left
                corr_r = self.periods_right * log_s_right
                log_left = complex(volL[j] + corr_l)
                log_right = complex(volR[j] + corr_r)
                det = np.linalg.det(np.concatenate([QL[j], QR[j]], axis=1)) if km else 1.0
                value = complex(det * np.exp(log_left + log_right))
                lam = complex(lams[i])
                out[i] = EvansEvaluation(
                    lam, value,
                    DichotomyFrame("left", QL[j], -log_left, lam, km - r),
                    DichotomyFrame("right", QR[j], -log_right, lam, r),
                    {"log_volume_left": complex(volL[j]), "log_volume_right": complex(volR[j]),
                     "periods_left": self.periods_left, "periods_right": self.periods_right,
                     "log_unstable_multipliers_left": log_u_left,
                     "log_stable_multipliers_right": log_s_right,
                     "match_point": self.match_point, "frame_determinant": complex(det)})
        return out

    def __call__(self, lams) -> np.ndarray:
        scalar = np.ndim(lams) == 0
        vals = np.array([e.value for e in self.evaluate(lams)])
        return vals[0] if scalar else vals


def evans_line(model: ModelSpec, profile: Profile, lam, weight: WeightSpec | None = None,
               reference: np.ndarray | None = None) -> EvansEvaluation:
    """Evans function ``det(B_u | B_s)`` at one spectral point, with its frames."""
    return LineEvans(model, profile, weight, reference=reference).evaluate([lam])[0]


def evans_line_batch(model: ModelSpec, profile: Profile, lams, weight: WeightSpec | None = None,
                     jobs: int | None = 1) -> np.ndarray:
    return LineEvans(model, profile, weight, jobs=jobs)(np.asarray(lams))


# ---------------------------------------------------------------------------
# periodic Evans function


class PeriodicEvans:
    """``E(lam, gamma) = det(X - gamma Y)`` with ``X``, ``Y`` the propagators
    from the left and right cell edges to the cell centre.

    Uses ``det(X - gamma Y) = det(Y) det(M - gamma)`` with ``M`` the
    full-cell monodromy, and ``det(M - gamma) = (-1)^km det(z - C)`` for
    the block-cyclic matrix ``C`` of segment propagators and any ``z``
    with ``z^S = gamma``; no product of segment propagators is formed.
    When a background state is known (attached as both asymptotic
    states) the value is divided by the ``n``-th power of the product of
    its unstable multipliers.
    """

    def __init__(self, model: ModelSpec, profile: Profile, background: Profile | None = None,
                 jobs: int | None = 1):
        g = profile.grid
        T = model.period
        if not g.periodic_kind:
            raise NotPeriodicProfile("periodic Evans function needs a periodic profile")
        ratio = g.length / T
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise NotPeriodicProfile("cell length is not a multiple of the model period")
        self.model = model
        self.profile = profile
        self.n = int(round(ratio))
        self.field = linearize_first_order(model, profile)
        if background is None and profile.asymptotics is not None:
            background = profile.asymptotics[0]
        self.background = background
        self.bg_field = state_field(model, background) if background is not None else None
        self.x0 = g.x0
        self.centre = g.x0 + 0.5 * g.length
        self.jobs = jobs
        km = self.field.size
        # det Y = exp(-int_c^{x0+L} tr A), independent of lambda for the companion form
        self.log_det_Y = -_trace_integral(self.field, self.centre, g.x0 + g.length, 4097)
        self.sign = (-1.0) ** km

    def segments(self, lams):
        T = self.model.period
        s = segment_count(self.field, self.x0, T, lams)
        segs = segment_propagators(self.field, self.x0, self.profile.grid.length, lams, s * self.n)
        return segs

    def _background_log(self, lams):
        if self.bg_field is None:
            return np.zeros(len(lams), dtype=complex)
        fds = floquet_batch(self.bg_field, self.model.period, lams, self.x0)
        out = []
        for fd in fds:
            if not fd.hyperbolic:
                raise EssentialSpectrum(f"lambda={fd.lam} lies on the spectrum of the background state")
            out.append(self.n * _log_multiplier_sums(fd)[1])
        return np.array(out)

    def evaluate(self, lams, gamma) -> np.ndarray:
        """Values for an array of lambda at fixed gamma, or for an array of
        gamma at one lambda when ``lams`` is scalar."""
        gamma_arr = np.atleast_1d(np.asarray(gamma, dtype=complex))
        if np.any(np.abs(np.abs(gamma_arr) - 1.0) > 1e-12):
            raise ValueError("gamma must have unit modulus")
        lams = np.atleast_1d(np.asarray(lams, dtype=complex)).ravel()
        if self.jobs and self.jobs > 1 and len(lams) > 1:
            chunks = [c for c in np.array_split(lams, min(len(lams), self.jobs)) if len(c)]
            parts = map_jobs(lambda c: self._evaluate(c, gamma_arr), chunks, self.jobs)
            return np.concatenate(parts, axis=0)
        return self._evaluate(lams, gamma_arr)

    def _evaluate(self, lams, gammas) -> np.ndarray:
        segs = self.segments(lams)
        bg = self._background_log(lams)
        S = segs.shape[1]
        km = self.field.size
        out = np.empty((len(lams), len(gammas)), dtype=complex)
        for b in range(len(lams)):
            C = cyclic_matrix(segs[b])
            eye = np.eye(C.shape[0])
            for j, gm in enumerate(gammas):
                z = np.exp(1j * np.angle(gm) / S)
                sign, logdet = np.linalg.slogdet(z * eye - C)
                out[b, j] = self.sign * sign * np.exp(logdet + self.log_det_Y - bg[b])
        return out

    def __call__(self, lams, gamma=1.0) -> np.ndarray:
        scalar = np.ndim(lams) == 0
        vals = self.evaluate(lams, gamma)[:, 0]
        return vals[0] if scalar else vals

    def direct(self, lam, gamma) -> complex:
        """``det(X - gamma Y)`` from explicitly multiplied half-cell propagators.

        Only meaningful for short cells; used as a cross-check.
        """
        km = self.field.size
        eye = np.eye(km)
        X, _ = transport(self.field, self.x0, self.centre, eye, [lam])
        Y, _ = transport(self.field, self.x0 + self.profile.grid.length, self.centre, eye, [lam])
        val = np.linalg.det(X[0] - gamma * Y[0])
        return complex(val * np.exp(-self._background_log(np.array([lam]))[0]))

    def multipliers(self, lam) -> np.ndarray:
        """Full-cell Floquet multipliers; ``E(lam, gamma) = 0`` iff one equals gamma."""
        fd = floquet_batch(self.field, self.profile.grid.length, [lam], self.x0,
                           segments=self.segments([lam]).shape[1])[0]
        return fd.multipliers


def evans_periodic(model: ModelSpec, profile: Profile, lam, gamma=1.0,
                   background: Profile | None = None) -> complex:
    """Periodic Evans function at one spectral point and Bloch multiplier ``gamma``."""
    return complex(PeriodicEvans(model, profile, background).evaluate([lam], gamma)[0, 0])


# ---------------------------------------------------------------------------
# contours and winding numbers


@dataclass(frozen=True)
class Circle:
    center: complex
    radius: float

    def points(self, t: np.ndarray) -> np.ndarray:
        return self.center + self.radius * np.exp(2j * np.pi * t)

    def contains(self, lam) -> bool:
        return abs(lam - self.center) < self.radius

    def to_dict(self):
        return {"kind": "circle", "center": [complex(self.center).real, complex(self.center).imag],
                "radius": self.radius}


@dataclass(frozen=True)
class Polygon:
    vertices: tuple

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise ValueError("a polygon needs at least three vertices")

    def points(self, t: np.ndarray) -> np.ndarray:
        v = np.asarray(self.vertices, dtype=complex)
        w = np.append(v, v[0])
        seg = np.abs(np.diff(w))
        cum = np.concatenate([[0.0], np.cumsum(seg)]) / np.sum(seg)
        t = np.mod(t, 1.0)
        k = np.clip(np.searchsorted(cum, t, side="right") - 1, 0, len(v) - 1)
        frac = (t - cum[k]) / (cum[k + 1] - cum[k])
        return w[k] + frac * (w[k + 1] - w[k])

    def contains(self, lam) -> bool:
        v = np.asarray(self.vertices, dtype=complex)
        inside = False
        x, y = lam.real, lam.imag
        for a, b in zip(v, np.roll(v, -1)):
            if (a.imag > y) != (b.imag > y):
                xc = a.real + (y - a.imag) * (b.real - a.real) / (b.imag - a.imag)
                if x < xc:
                    inside = not inside
        return inside

    def to_dict(self):
        return {"kind": "polygon", "vertices": [[complex(p).real, complex(p).imag] for p in self.vertices]}


def square(center: complex, half: float) -> Polygon:
    c = complex(center)
    return Polygon((c + half * (-1 - 1j), c + half * (1 - 1j), c + half * (1 + 1j), c + half * (-1 + 1j)))


@dataclass
class ContourReport:
    contour: object
    samples: np.ndarray
    values: np.ndarray
    winding: int
    refinement_level: int
    min_abs: float
    max_abs: float
    roots: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "contour": self.contour.to_dict(),
            "winding": self.winding,
            "refinement_level": self.refinement_level,
            "min_abs": self.min_abs,
            "max_abs": self.max_abs,
            "samples": [[z.real, z.imag] for z in self.samples],
            "values": [[z.real, z.imag] for z in self.values],
            "roots": [{"lambda": [complex(r).real, complex(r).imag], "multiplicity": int(m)}
                      for r, m in self.roots],
        }


def winding_count(evaluator, contour, initial: int = 32, max_samples: int = 1 << 13,
                  root_tol: float = 1e-13) -> ContourReport:
    """Winding number of ``evaluator`` along a closed contour from phase increments.

    The sampling is doubled until every increment is below pi/2 on two
    consecutive levels that agree on the winding number.
    """
    n = initial
    t = np.arange(n) / n
    lam = contour.points(t)
    vals = np.asarray(evaluator(lam), dtype=complex)
    prev = None
    level = 0
    while True:
        if not np.all(np.isfinite(vals)):
            raise RootOnContour("evaluator returned non-finite values on the contour")
        mags = np.abs(vals)
        if np.min(mags) < root_tol * np.max(mags) or np.max(mags) == 0.0:
            raise RootOnContour(f"|E| on the contour drops to {np.min(mags):.3e} "
                                f"(max {np.max(mags):.3e})")
        inc = np.angle(np.roll(vals, -1) / vals)
        ok = np.max(np.abs(inc)) < 0.5 * np.pi
        w = int(round(np.sum(inc) / (2 * np.pi)))
        if ok and prev is not None and prev == w:
            return ContourReport(contour, lam, vals, w, level, float(np.min(mags)), float(np.max(mags)))
        prev = w if ok else None
        if 2 * n > max_samples:
            raise MaxRefinementExceeded(f"winding not resolved with {n} samples")
        t_new = (np.arange(n) + 0.5) / n
        lam_new = contour.points(t_new)
        vals_new = np.asarray(evaluator(lam_new), dtype=complex)
        lam = np.ravel(np.column_stack([lam, lam_new]))
        vals = np.ravel(np.column_stack([vals, vals_new]))
        n *= 2
        level += 1


def _secant(evaluator, z0: complex, z1: complex, tol: float = 1e-13, max_iter: int = 60):
    f0, f1 = evaluator(np.array([z0, z1]))
    for _ in range(max_iter):
        if f1 == f0:
            break
        z2 = z1 - f1 * (z1 - z0) / (f1 - f0)
        if not np.isfinite(z2):
            break
        z0, f0 = z1, f1
        z1 = z2
        f1 = evaluator(np.array([z1]))[0]
        if abs(z1 - z0) <= tol * max(1.0, abs(z1)) or f1 == 0:
            return z1, True
    return z1, False


def _moments(report: ContourReport, count: int, center: complex = 0.0) -> np.ndarray:
    """Power sums of ``root - center`` over the enclosed roots, from the sampled logarithmic increments."""
    lam, vals = report.samples, report.values
    dlog = np.log(np.roll(vals, -1) / vals)
    mid = 0.5 * (lam + np.roll(lam, -1)) - center
    return np.array([np.sum(mid**p * dlog) / (2j * np.pi) for p in range(1, count + 1)])


def _zoom_cluster(evaluator, center: complex, radius: float, count: int, floor: float,
                  initial: int = 64):
    """Shrink a disk around the centroid of ``count`` roots while they stay clustered.

    Returns ``("cluster", centroid)`` once the disk radius is below ``floor``,
    ``("separated", estimates)`` with power-sum root estimates from a disk a
    few spreads wide when the roots separate, or None when a winding count
    disagrees.
    """
    c, rho = complex(center), float(radius)
    for _ in range(64):
        try:
            rep = winding_count(evaluator, Circle(c, rho), initial)
        except (RootOnContour, MaxRefinementExceeded):
            return None
        if rep.winding != count:
            return None
        if rho < floor:
            return "cluster", c
        offsets = _roots_from_power_sums(_moments(rep, count, c))
        spread = float(np.max(np.abs(offsets - np.mean(offsets))))
        if spread > 0.2 * rho:
            return "separated", c + offsets
        c, rho = c + complex(np.mean(offsets)), max(4.0 * spread, rho / 16.0)
    return None


def _polish_separated(evaluator, estimates, certify):
    """Secant-polished simple roots from separated estimates, each certified, or None."""
    gap = min(abs(a - b) for i, a in enumerate(estimates) for b in estimates[i + 1:])
    step = 1e-3 * gap
    if step == 0.0:
        return None
    roots = []
    for g in estimates:
        z, ok = _secant(evaluator, g, g + step)
        if not ok or abs(z - g) > 0.25 * gap:
            return None
        roots.append(complex(z))
    if not all(certify(z, 1) for z in roots):
        return None
    return roots


def _roots_from_power_sums(s: np.ndarray) -> np.ndarray:
    m = len(s)
    e = [1.0 + 0j]
    for k in range(1, m + 1):
        e.append(sum((-1) ** (i - 1) * e[k - i] * s[i - 1] for i in range(1, k + 1)) / k)
    coeffs = [((-1) ** k) * e[k] for k in range(m + 1)]
    return np.roots(coeffs)


def locate_roots(evaluator, region, expected: int | None = None, min_size: float = 1e-8,
                 initial: int = 32) -> ContourReport:
    """Roots inside a disk with multiplicities.

    Quadrant subdivision by winding counts isolates roots; each isolated
    root is polished by the secant method and certified by a winding count
    on a small circle. Clusters that cannot be separated are reported at
    their centroid with the cluster's total multiplicity.
    """
    if not isinstance(region, Circle):
        raise ValueError("locate_roots expects a Circle region")
    outer = winding_count(evaluator, region, initial)
    total = outer.winding
    if expected is not None and expected != total:
        outer.roots = []
    if total == 0:
        outer.roots = []
        return outer
    r0 = region.radius
    found: list[tuple[complex, int]] = []

    def certify(z: complex, count: int):
        rad = max(min_size, 1e-6 * r0)
        for _ in range(8):
            try:
                rep = winding_count(evaluator, Circle(z, rad), initial)
                if rep.winding == count:
                    return True
            except (RootOnContour, MaxRefinementExceeded):
                pass
            rad *= 10.0
            if rad > 0.1 * r0:
                break
        return False

    def handle(center: complex, half: float, count: int, depth: int):
        if count == 0:
            return
        circ = Circle(center, half * math.sqrt(2.0) * 1.05)
        if count == 1 or half < 1e-4 * r0:
            try:
                rep = winding_count(evaluator, circ, 64)
            except (RootOnContour, MaxRefinementExceeded):
                rep = None
            if rep is not None and rep.winding == count:
                guesses = _roots_from_power_sums(_moments(rep, count))
                if count == 1:
                    z, ok = _secant(evaluator, guesses[0], guesses[0] + 1e-3 * half)
                    if ok and abs(z - center) <= 1.5 * half and certify(z, 1):
                        found.append((complex(z), 1))
                        return
                elif half < 1e-4 * r0:
                    found.append((complex(np.mean(guesses)), count))
                    return
        if count >= 2:
            zoom = _zoom_cluster(evaluator, center, half * math.sqrt(2.0) * 1.05, count, 1e-4 * r0)
            if zoom is not None and zoom[0] == "cluster":
                found.append((zoom[1], count))
                return
            if zoom is not None:
                roots = _polish_separated(evaluator, zoom[1], certify)
                if roots is not None:
                    found.extend((z, 1) for z in roots)
                    return
        if half < 1e-10 * max(1.0, r0) or depth > 40:
            found.append((complex(center), count))
            return
        # quadrant split; nudge the split point if a root sits on an edge
        for nudge in (0.0, 0.0137, -0.0291, 0.0533):
            split = center + nudge * half * (1 + 0.61j)
            quads = []
            try:
                for sx in (-1, 1):
                    for sy in (-1, 1):
                        corner = center + half * (sx + 1j * sy)
                        c = 0.5 * (split + corner)
                        hx, hy = 0.5 * abs((corner - split).real), 0.5 * abs((corner - split).imag)
                        poly = Polygon((c - hx - 1j * hy, c + hx - 1j * hy, c + hx + 1j * hy, c - hx + 1j * hy))
                        w = winding_count(evaluator, poly, initial).winding
                        quads.append((c, max(hx, hy), w))
            except (RootOnContour, MaxRefinementExceeded):
                continue
            if sum(q[2] for q in quads) == count:
                for c, h, w in quads:
                    handle(c, h, w, depth + 1)
                return
        found.append((complex(center), count))

    handle(complex(region.center), r0, total, 0)
    inside = [(z, m) for z, m in found if abs(z - region.center) < r0]
    outer.roots = sorted(inside, key=lambda zm: (zm[0].real, zm[0].imag))
    return outer


# ---------------------------------------------------------------------------
# dichotomy diagnostics


def _projection_onto(range_basis: np.ndarray, kernel_basis: np.ndarray) -> np.ndarray:
    """Projection with the given range along the given kernel."""
    S = np.concatenate([range_basis, kernel_basis], axis=1)
    r = range_basis.shape[1]
    D = np.zeros(S.shape[1])
    D[:r] = 1.0
    return S @ np.diag(D) @ np.linalg.inv(S)


def pasting_bound_check(P: np.ndarray, Q: np.ndarray) -> dict:
    """Projection ``R`` with range of ``P`` and kernel of ``Q`` against ``|R| <= |P| / (1 - |P - Q|)``."""
    norm_pq = float(np.linalg.norm(P - Q, 2))
    if norm_pq >= 1.0:
        return {"applicable": False, "norm_P_minus_Q": norm_pq}
    rP = np.linalg.matrix_rank(P)
    U, _, _ = np.linalg.svd(P)
    range_basis = U[:, :rP]
    _, _, Vh = np.linalg.svd(Q)
    kernel_basis = Vh[rP:].conj().T if Q.shape[0] > rP else np.zeros((Q.shape[0], 0))
    R = _projection_onto(range_basis, kernel_basis)
    lhs = float(np.linalg.norm(R, 2))
    rhs = float(np.linalg.norm(P, 2) / (1.0 - norm_pq))
    return {"applicable": True, "norm_R": lhs, "bound": rhs, "passed": lhs <= rhs * (1 + 1e-10),
            "slack": rhs / lhs if lhs > 0 else math.inf, "norm_P_minus_Q": norm_pq,
            "idempotent_error": float(np.linalg.norm(R @ R - R))}


def _step_propagators(field: FirstOrderField, xs: np.ndarray, lam) -> np.ndarray:
    """``Phi(x_{j+1}, x_j)`` for consecutive sample points."""
    km = field.size
    out = np.empty((len(xs) - 1, km, km), dtype=complex)
    for j in range(len(xs) - 1):
        step, _ = transport(field, xs[j], xs[j + 1], np.eye(km), [lam])
        out[j] = step[0]
    return out


def _carry(field: FirstOrderField, start: float, end: float, frame: np.ndarray, lam, T: float):
    """Orthonormal basis of the transported span of ``frame`` from ``start`` to ``end``."""
    if start == end or frame.shape[1] == 0:
        return _orth(frame)
    sign = 1.0 if end > start else -1.0
    checks = [start + sign * T * j for j in range(1, int(abs(end - start) / T) + 1)
              if sign * (end - (start + sign * T * j)) > 0]
    Y, _ = transport(field, start, end, frame, [lam], checks, True)
    return _orth(Y[0])


def _fit_dichotomy(steps: np.ndarray, P: list, xs: np.ndarray, mu: float) -> float:
    """Smallest ``K`` with ``|Phi(x,y) P(y)| <= K e^{-mu (x-y)}`` for ``x >= y`` and
    ``|Phi(x,y) (I-P(y))| <= K e^{-mu (y-x)}`` for ``x <= y`` over sampled pairs."""
    n = len(xs)
    km = P[0].shape[0]
    K = max(float(np.linalg.norm(p, 2)) for p in P)
    for j in range(n):
        fwd = P[j]
        bwd = np.eye(km) - P[j]
        for i in range(j + 1, n):
            fwd = steps[i - 1] @ fwd
            K = max(K, float(np.linalg.norm(fwd, 2)) * math.exp(mu * (xs[i] - xs[j])))
        for i in range(j - 1, -1, -1):
            bwd = np.linalg.solve(steps[i], bwd)
            K = max(K, float(np.linalg.norm(bwd, 2)) * math.exp(mu * (xs[j] - xs[i])))
    return K


def dichotomy_diagnostics(field: FirstOrderField, profile: Profile, lam, subintervals: int = 4,
                          samples: int = 9, rate_fraction: float = 0.5, perturbation: float = 0.05,
                          left_fd: FloquetData | None = None,
                          right_fd: FloquetData | None = None) -> dict:
    """Empirical checks of exponential dichotomies on subintervals of the profile's grid.

    On ``[a, b]`` the first dichotomy has range the stable subspace of the
    right end state carried back to ``x`` and kernel the unstable subspace
    of the left end state carried forward. The second replaces both by
    perturbed subspaces fixed at ``b`` and ``a``. The rate ``mu`` is
    ``rate_fraction`` times the smallest Floquet gap of the end states and
    ``K`` is fitted. Reported: the projection distance bound at the
    midpoint, the pasting bound and the Liouville identity.
    """
    model = field.model
    g = profile.grid
    T = model.period
    left, right = profile.asymptotics
    fl = left_fd or floquet_batch(state_field(model, left), T, [lam], g.x0)[0]
    fr = right_fd or floquet_batch(state_field(model, right), T, [lam], g.x_end)[0]
    if not (fl.hyperbolic and fr.hyperbolic):
        raise NonHyperbolic(f"end states are not hyperbolic at lambda={lam}")
    gap = min(float(np.min(np.abs(fl.exponents.real))), float(np.min(np.abs(fr.exponents.real))))
    mu = rate_fraction * gap
    _, u_l = asymptotic_frames(fl)
    s_r, _ = asymptotic_frames(fr)
    rng = np.random.default_rng(REFERENCE_SEED)
    edges = np.linspace(g.x0, g.x_end, subintervals + 1)
    report = {"lambda": complex(lam), "mu": mu, "floquet_gap": gap, "subintervals": []}
    for a, b in zip(edges[:-1], edges[1:]):
        xs = np.linspace(a, b, samples)
        steps = _step_propagators(field, xs, lam)
        ker_a = _carry(field, g.x0, a, u_l, lam, T)
        ran_b = _carry(field, g.x_end, b, s_r, lam, T)
        ker_a2 = ker_a + perturbation * rng.standard_normal(ker_a.shape)
        ran_b2 = ran_b + perturbation * rng.standard_normal(ran_b.shape)
        P1, P2 = [], []
        for x in xs:
            P1.append(_projection_onto(_carry(field, b, x, ran_b, lam, T),
                                       _carry(field, a, x, ker_a, lam, T)))
            P2.append(_projection_onto(_carry(field, b, x, ran_b2, lam, T),
                                       _carry(field, a, x, ker_a2, lam, T)))
        K1 = _fit_dichotomy(steps, P1, xs, mu)
        K2 = _fit_dichotomy(steps, P2, xs, mu)
        mid = samples // 2
        x = xs[mid]
        dist = float(np.linalg.norm(P1[mid] - P2[mid], 2))
        bound = K1 * K2 * (math.exp(-2.0 * mu * (x - a)) + math.exp(-2.0 * mu * (b - x)))
        proj = {"distance": dist, "bound": bound, "passed": dist <= bound * (1 + 1e-8),
                "slack": bound / dist if dist > 0 else math.inf}
        paste = pasting_bound_check(P1[mid], P2[mid])
        tr = _trace_integral(field, a, b)
        # per-step determinants: the product propagator is too ill-conditioned
        logdet = float(sum(np.linalg.slogdet(st)[1] for st in steps))
        liou = abs(logdet - tr) / max(1.0, abs(tr))
        report["subintervals"].append({
            "interval": (float(a), float(b)), "K": (K1, K2),
            "projection_distance": proj, "pasting": paste,
            "liouville": {"error": float(liou), "passed": liou <= 1e-8},
        })
    report["passed"] = all(s["projection_distance"]["passed"] and s["liouville"]["passed"]
                           and (not s["pasting"].get("applicable") or s["pasting"]["passed"])
                           for s in report["subintervals"])
    return report


def _orth(B: np.ndarray) -> np.ndarray:
    if B.shape[1] == 0:
        return B
    Q, _ = np.linalg.qr(B)
    return Q
