"""Brute-force spectral checks independent of the Evans machinery: dense
eigenvalues of the discretized linearization, and Sylvester inertia of
scalar self-adjoint operators by LDL^T elimination."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import AdjointKernelNotOneDimensional, BreakdownAtShift, TooLarge
from .grid import Grid, Profile
from .model import ModelSpec
from .solver import Discretization

MAX_DENSE = 4096


def operator_matrix(model: ModelSpec, profile: Profile) -> sp.csr_matrix:
    """Discrete ``L(u)``; on line grids restricted to interior nodes (zero boundary values)."""
    g = profile.grid
    disc = Discretization(model, g, "periodic" if g.periodic_kind else "dirichlet")
    J = disc.linearization(disc.flat(profile.values))
    if g.periodic_kind:
        return J
    idx = disc.interior_rows
    return J[idx][:, idx].tocsr()


def direct_spectrum(model: ModelSpec, profile: Profile, window=None, vectors: bool = False):
    """Eigenvalues of the discretized linearization inside ``window = (re0, re1, im0, im1)``.

    Sorted by distance to the origin. With ``vectors`` the matching
    eigenvectors (columns, node-major ordering) are returned as well.
    """
    A = operator_matrix(model, profile)
    n = A.shape[0]
    if n > MAX_DENSE:
        raise TooLarge(f"dense eigenproblem of size {n} exceeds {MAX_DENSE}")
    dense = A.toarray()
    if vectors:
        w, V = np.linalg.eig(dense)
    else:
        w, V = np.linalg.eigvals(dense), None
    keep = np.ones(len(w), dtype=bool)
    if window is not None:
        re0, re1, im0, im1 = window
        keep = (w.real >= re0) & (w.real <= re1) & (w.imag >= im0) & (w.imag <= im1)
    order = np.argsort(np.abs(w[keep]), kind="stable")
    vals = w[keep][order]
    if vectors:
        return vals, V[:, keep][:, order]
    return vals


def count_in_disk(eigenvalues, center: complex, radius: float) -> int:
    return int(np.sum(np.abs(np.asarray(eigenvalues) - center) < radius))


def adjoint_kernel(model: ModelSpec, profile: Profile, gap_ratio: float = 1e3):
    """Null vector of the transposed discrete linearization on a line grid.

    Returns ``(values (m, N), eigenvalue, next_eigenvalue)``; the vector is
    zero at the boundary nodes. Raises when the two smallest eigenvalues
    are not separated by ``gap_ratio``.
    """
    from scipy.sparse.linalg import eigs

    g = profile.grid
    disc = Discretization(model, g, "periodic" if g.periodic_kind else "dirichlet")
    A = operator_matrix(model, profile)
    v0 = np.random.default_rng(0).standard_normal(A.shape[0])
    w, V = eigs(A.T.tocsc(), k=3, sigma=0.0, which="LM", v0=v0)
    order = np.argsort(np.abs(w))
    w, V = w[order], V[:, order]
    if np.abs(w[1]) < gap_ratio * max(np.abs(w[0]), 1e-300) and np.abs(w[1]) < 1e-2:
        raise AdjointKernelNotOneDimensional(
            f"two adjoint eigenvalues near zero: {w[0]:.3e}, {w[1]:.3e}")
    vec = V[:, 0]
    vec = vec / vec[np.argmax(np.abs(vec))]
    full = np.zeros(disc.N * disc.m, dtype=complex)
    if g.periodic_kind:
        full[:] = vec
    else:
        full[disc.interior_rows] = vec
    return disc.unflat(full.real).copy(), complex(w[0]), complex(w[1])


# ---------------------------------------------------------------------------
# inertia of -d^2 + q


def schrodinger_matrix(q: np.ndarray, grid: Grid) -> sp.csr_matrix:
    """Symmetric discrete ``-d^2 + q``; periodic wrap or Dirichlet interior nodes."""
    h2 = grid.h**2
    q = np.asarray(q, dtype=float)
    if grid.periodic_kind:
        N = grid.n
        main = 2.0 / h2 + q
        off = -np.ones(N) / h2
        A = sp.diags([main, off[:-1], off[:-1]], [0, -1, 1], shape=(N, N), format="lil")
        A[0, N - 1] += -1.0 / h2
        A[N - 1, 0] += -1.0 / h2
        return A.tocsr()
    qi = q[1:-1]
    N = len(qi)
    return sp.diags([2.0 / h2 + qi, -np.ones(N - 1) / h2, -np.ones(N - 1) / h2], [0, -1, 1],
                    format="csr")


def _tridiag_pivots(diag: np.ndarray, off: np.ndarray, tiny: float) -> np.ndarray:
    n = len(diag)
    d = np.empty(n)
    d[0] = diag[0]
    for i in range(1, n):
        if abs(d[i - 1]) <= tiny:
            raise BreakdownAtShift("zero pivot in LDL^T elimination")
        d[i] = diag[i] - off[i - 1] ** 2 / d[i - 1]
    if abs(d[-1]) <= tiny:
        raise BreakdownAtShift("zero pivot in LDL^T elimination")
    return d


def _tridiag_solve(d: np.ndarray, off: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve with the LDL^T factors of a symmetric tridiagonal matrix."""
    n = len(d)
    y = np.empty(n)
    y[0] = b[0]
    for i in range(1, n):
        y[i] = b[i] - off[i - 1] / d[i - 1] * y[i - 1]
    x = np.empty(n)
    x[-1] = y[-1] / d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = y[i] / d[i] - off[i] / d[i] * x[i + 1]
    return x


def negative_count(q: np.ndarray, grid: Grid, shift: float) -> int:
    """Number of eigenvalues of discrete ``-d^2 + q`` strictly below ``shift``.

    Sylvester inertia of LDL^T pivots. The periodic corner entries are
    handled by eliminating all but the last node and adding the inertia of
    the scalar Schur complement.
    """
    h2 = grid.h**2
    q = np.asarray(q, dtype=float)
    scale = 4.0 / h2 + float(np.max(np.abs(q)))
    tiny = 1e-14 * scale
    if not grid.periodic_kind:
        diag = 2.0 / h2 + q[1:-1] - shift
        off = -np.ones(len(diag) - 1) / h2
        return int(np.sum(_tridiag_pivots(diag, off, tiny) < 0))
    N = grid.n
    diag = 2.0 / h2 + q - shift
    off = -np.ones(N - 1) / h2
    A_diag, A_off = diag[:-1], off[:-1]
    d = _tridiag_pivots(A_diag, A_off, tiny)
    border = np.zeros(N - 1)
    border[0] += -1.0 / h2
    border[-1] += -1.0 / h2
    y = _tridiag_solve(d, A_off, border)
    schur = diag[-1] - border @ y
    if abs(schur) <= tiny:
        raise BreakdownAtShift("singular Schur complement in bordered elimination")
    return int(np.sum(d < 0) + (schur < 0))


def _smallest_eigenvalue_near(q, grid, shift, iters: int = 30) -> float:
    A = schrodinger_matrix(q, grid).tocsc()
    n = A.shape[0]
    scale = 4.0 / grid.h**2 + float(np.max(np.abs(q)))
    offset = shift + 1e-9 * scale
    lu = splu((A - offset * sp.identity(n, format="csc")).tocsc())
    v = np.random.default_rng(0).standard_normal(n)
    v /= np.linalg.norm(v)
    for _ in range(iters):
        w = lu.solve(v)
        v = w / np.linalg.norm(w)
    return float(v @ (A @ v))


def inertia_details(q: np.ndarray, grid: Grid, shift: float = 0.0, rel_tol: float = 1e-7) -> dict:
    """Counts below and at ``shift`` with the detection threshold used."""
    q = np.asarray(q, dtype=float)
    scale = 4.0 / grid.h**2 + float(np.max(np.abs(q)))
    delta = rel_tol * scale
    below = negative_count(q, grid, shift - delta)
    upto = negative_count(q, grid, shift + delta)
    z = upto - below
    out = {"n_below": below, "z_at": z, "threshold": delta, "scale": scale}
    if z > 0:
        out["nearest_eigenvalue"] = _smallest_eigenvalue_near(q, grid, shift)
    return out


def inertia_count(q: np.ndarray, grid: Grid, shift: float = 0.0) -> tuple[int, int]:
    """``(n_below, z_at)`` for discrete ``-d^2 + q`` on a periodic cell or a Dirichlet line."""
    d = inertia_details(q, grid, shift)
    return d["n_below"], d["z_at"]
