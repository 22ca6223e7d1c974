"""Liouvillian superoperators: construction, steady states, propagation.

Vectorization convention: density matrices are flattened row-major
(C order, ``mat.reshape(-1)``), under which

    vec(A X B) = kron(A, B.T) vec(X)

so the unitary part is -i (kron(H, I) - kron(I, H.T)) and a collapse
operator c at rate r contributes

    r * (kron(c, c.conj) - kron(c^dag c, I)/2 - kron(I, (c^dag c).T)/2).

Superoperators are stored sparse (CSR); solves fall back to dense linear
algebra below ``DENSE_DIM`` where the overhead of sparse LU dominates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .fock import DensityMatrix, _as_matrix

__all__ = [
    "Liouvillian",
    "build_liouvillian",
    "steady_state",
    "evolve",
    "propagate_operator_kernel",
    "propagate_trajectory",
    "resolvent_apply",
    "spectral_abscissa",
    "NonUniqueSteadyStateError",
]

DENSE_DIM = 12


class NonUniqueSteadyStateError(RuntimeError):
    """The Liouvillian null space is degenerate or ill-conditioned."""


@dataclass(frozen=True)
class Liouvillian:
    """Sparse superoperator acting on row-major vectorized density matrices."""

    dim: int
    matrix: sp.csr_matrix
    collapses: tuple

    @property
    def n2(self) -> int:
        return self.dim * self.dim

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def apply(self, mat: np.ndarray) -> np.ndarray:
        """L acting on a (dim, dim) matrix, returned as a matrix."""
        return (self.matrix @ np.asarray(mat, dtype=complex).reshape(-1)
                ).reshape(self.dim, self.dim)

    def trace_residual(self) -> float:
        """Norm of vec(I)^dag L: zero for a trace-preserving generator."""
        tr = np.zeros(self.n2, dtype=complex)
        tr[:: self.dim + 1] = 1.0
        return float(np.abs(tr @ self.matrix).max())


def build_liouvillian(H, collapses) -> Liouvillian:
    """Assemble the generator for Hamiltonian H and [(operator, rate), ...]."""
    h = _as_matrix(H)
    dim = h.shape[0]
    eye = sp.identity(dim, dtype=complex, format="csr")
    hs = sp.csr_matrix(h)
    L = -1j * (sp.kron(hs, eye, format="csr") - sp.kron(eye, hs.T, format="csr"))
    stored = []
    for op, rate in collapses:
        if rate < 0:
            raise ValueError("collapse rates must be nonnegative")
        c = _as_matrix(op)
        if c.shape[0] != dim:
            raise ValueError(f"collapse dimension {c.shape[0]} != {dim}")
        cs = sp.csr_matrix(c)
        cdc = sp.csr_matrix(c.conj().T @ c)
        L = L + rate * (sp.kron(cs, cs.conj(), format="csr")
                        - 0.5 * sp.kron(cdc, eye, format="csr")
                        - 0.5 * sp.kron(eye, cdc.T, format="csr"))
        stored.append((c, float(rate)))
    return Liouvillian(dim=dim, matrix=L.tocsr(), collapses=tuple(stored))


def _trace_row(dim: int) -> np.ndarray:
    tr = np.zeros(dim * dim, dtype=complex)
    tr[:: dim + 1] = 1.0
    return tr


def steady_state(liou: Liouvillian, residual_tol: float = 1e-9) -> DensityMatrix:
    """Null vector of L, trace-normalized and Hermitized.

    Solves L x = 0 with one row replaced by the trace constraint (direct
    LU; dense below DENSE_DIM).  The residual of the untouched generator
    is checked against ``residual_tol``; failure raises
    NonUniqueSteadyStateError.
    """
    n2 = liou.n2
    rhs = np.zeros(n2, dtype=complex)
    rhs[0] = 1.0
    if liou.dim < DENSE_DIM:
        A = liou.dense()
        A[0, :] = _trace_row(liou.dim)
        try:
            x = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError as exc:
            raise NonUniqueSteadyStateError(str(exc)) from exc
    else:
        A = liou.matrix.tolil()
        A[0, :] = _trace_row(liou.dim)
        x = spla.spsolve(A.tocsc(), rhs)
    if not np.all(np.isfinite(x)):
        raise NonUniqueSteadyStateError("singular trace-pinned system")
    resid = np.abs(liou.matrix @ x).max()
    if resid > residual_tol:
        raise NonUniqueSteadyStateError(
            f"steady-state residual {resid:.2e} exceeds {residual_tol:.2e}")
    rho = x.reshape(liou.dim, liou.dim)
    return DensityMatrix.from_raw(rho)


def evolve(liou: Liouvillian, rho0, t: float, rtol: float = 1e-8,
           atol: float = 1e-10) -> DensityMatrix:
    """exp(L t) rho0 by adaptive embedded Runge-Kutta 4(5)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    mat0 = _as_matrix(rho0)
    if t == 0:
        return DensityMatrix.from_raw(mat0)
    out = propagate_operator_kernel(liou, mat0, t, rtol=rtol, atol=atol)
    return DensityMatrix.from_raw(out, trace_tol=1e-9)


def propagate_operator_kernel(liou: Liouvillian, kernel, t: float,
                              rtol: float = 1e-8, atol: float = 1e-10) -> np.ndarray:
    """exp(L t) applied to an arbitrary (not necessarily Hermitian) matrix.

    This is the propagation primitive behind multi-time correlators; the
    kernel need not have unit trace.
    """
    k0 = _as_matrix(kernel)
    if t == 0:
        return k0.copy()
    L = liou.matrix

    def rhs(_t, y):
        return L @ y

    sol = solve_ivp(rhs, (0.0, float(t)), k0.reshape(-1).astype(complex),
                    method="RK45", rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"propagation failed: {sol.message}")
    return sol.y[:, -1].reshape(liou.dim, liou.dim)


def propagate_trajectory(liou: Liouvillian, kernels: np.ndarray,
                         t_grid: np.ndarray) -> np.ndarray:
    """exp(L t) B on a uniform time grid for a batch of kernels.

    ``kernels`` has shape (n2, n_batch) (vectorized matrices as columns);
    ``t_grid`` must be uniform and start at 0.  Returns an array of shape
    (len(t_grid), n2, n_batch).  Uses the Al-Mohy/Higham exponential
    action, which is exact to machine precision per step.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[0] != 0.0 or len(t_grid) < 2:
        raise ValueError("t_grid must start at 0 and have >= 2 points")
    steps = np.diff(t_grid)
    if np.abs(steps - steps[0]).max() > 1e-9 * steps[0]:
        raise ValueError("t_grid must be uniform")
    B = np.asarray(kernels, dtype=complex)
    squeeze = B.ndim == 1
    if squeeze:
        B = B[:, None]
    out = spla.expm_multiply(liou.matrix, B, start=t_grid[0], stop=t_grid[-1],
                             num=len(t_grid), endpoint=True)
    return out[..., 0] if squeeze else out


def resolvent_apply(liou: Liouvillian, rho_ss, kernel, omega: float = 0.0) -> np.ndarray:
    """Integrated propagation: returns integral_0^inf exp((L + i w) t) K dt.

    Equals -(L + i w)^{-1} K on the complement of the stationary mode.
    At w = 0 the inversion is regularized by a bordered system that pins
    the steady-state direction; K must be traceless there (true for all
    centered correlation kernels).
    """
    k = _as_matrix(kernel).reshape(-1)
    n2 = liou.n2
    if omega != 0.0:
        A = (liou.matrix + 1j * omega * sp.identity(n2, format="csr")).tocsc()
        x = spla.spsolve(A, k)
        return (-x).reshape(liou.dim, liou.dim)
    rho_vec = _as_matrix(rho_ss).reshape(-1)
    A = sp.bmat([[liou.matrix, rho_vec[:, None]],
                 [_trace_row(liou.dim)[None, :], None]], format="csc")
    b = np.concatenate([k, [0.0]])
    x = spla.spsolve(A, b)
    return (-x[:n2]).reshape(liou.dim, liou.dim)


def spectral_abscissa(liou: Liouvillian) -> float:
    """Largest real part of the Liouvillian spectrum.

    Nonpositive for any proper Lindblad generator below threshold; a
    positive value signals an unstable (above-threshold) linearization.
    The trivial zero mode is included, so stable generators return ~0.
    """
    w = np.linalg.eigvals(liou.dense())
    return float(w.real.max())
