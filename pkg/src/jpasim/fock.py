"""Truncated Fock-space linear algebra.

Ladder operators, density matrices, expectation values, displacement
operators and phase-space distributions on a finite Fock basis
|0>, ..., |dim-1>.  Quadrature convention throughout the package:

    X = (a + a^dag) / sqrt(2),    P = i (a^dag - a) / sqrt(2),

so the vacuum has variance 1/2 in each quadrature and the vacuum Wigner
function peaks at 1/pi.  All quantities are dimensionless (hbar = 1).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.special import eval_genlaguerre, gammaln

__all__ = [
    "FockOperator",
    "DensityMatrix",
    "PhaseSpaceGrid",
    "PhaseSpaceField",
    "annihilation",
    "creation",
    "number_operator",
    "identity",
    "vacuum",
    "fock_state",
    "coherent_state",
    "displacement_operator",
    "expectation",
    "wigner",
    "husimi_q",
]


class DimensionError(ValueError):
    """Raised for invalid or mismatched Fock-space dimensions."""


def _as_matrix(op) -> np.ndarray:
    """Coerce a FockOperator/DensityMatrix/ndarray to a complex square matrix."""
    mat = np.asarray(getattr(op, "matrix", op), dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {mat.shape}")
    return mat


@dataclass(frozen=True)
class FockOperator:
    """A complex square matrix on the truncated Fock space.

    Immutable value type.  ``hermitian=True`` asserts (and checks, to
    1e-12 relative) that the matrix equals its conjugate transpose.
    """

    matrix: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        mat = _as_matrix(self.matrix).copy()
        if mat.shape[0] < 2:
            raise DimensionError("Fock dimension must be >= 2")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        if self.hermitian:
            scale = max(np.abs(mat).max(), 1.0)
            if np.abs(mat - mat.conj().T).max() > 1e-12 * scale:
                raise ValueError("operator marked hermitian is not")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dag(self) -> "FockOperator":
        return FockOperator(self.matrix.conj().T)

    def __matmul__(self, other):
        return FockOperator(self.matrix @ _as_matrix(other))

    def __add__(self, other):
        return FockOperator(self.matrix + _as_matrix(other))

    def __sub__(self, other):
        return FockOperator(self.matrix - _as_matrix(other))

    def __mul__(self, scalar):
        return FockOperator(self.matrix * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return FockOperator(-self.matrix)


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, (numerically) positive state.

    Invariants are checked on construction: trace within ``trace_tol`` of
    one, Hermiticity within ``herm_tol`` and smallest eigenvalue above
    ``-pos_tol``.
    """

    matrix: np.ndarray
    trace_tol: float = 1e-10
    herm_tol: float = 1e-10
    pos_tol: float = 1e-8

    def __post_init__(self):
        mat = _as_matrix(self.matrix).copy()
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        if abs(np.trace(mat) - 1.0) > self.trace_tol:
            raise ValueError(f"trace {np.trace(mat)} deviates from 1")
        if np.abs(mat - mat.conj().T).max() > self.herm_tol:
            raise ValueError("density matrix is not Hermitian")
        lam_min = float(np.linalg.eigvalsh(mat).min())
        if lam_min < -self.pos_tol:
            raise ValueError(f"negative eigenvalue {lam_min}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def expect(self, op) -> complex:
        return expectation(op, self)

    @staticmethod
    def from_raw(mat: np.ndarray, **tols) -> "DensityMatrix":
        """Hermitize and renormalize a raw solver output, then validate."""
        mat = _as_matrix(mat)
        mat = 0.5 * (mat + mat.conj().T)
        mat = mat / np.trace(mat).real
        return DensityMatrix(mat, **tols)


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Rectangular (x, p) grid for phase-space distributions."""

    x_min: float
    x_max: float
    p_min: float
    p_max: float
    n_x: int = 64
    n_p: int = 64

    def __post_init__(self):
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)
                and np.isfinite(self.p_min) and np.isfinite(self.p_max)):
            raise ValueError("grid bounds must be finite")
        if self.n_x < 2 or self.n_p < 2:
            raise ValueError("grid sizes must be >= 2")
        if self.x_max <= self.x_min or self.p_max <= self.p_min:
            raise ValueError("grid bounds must be increasing")

    @staticmethod
    def square(half_width: float, n: int = 64) -> "PhaseSpaceGrid":
        return PhaseSpaceGrid(-half_width, half_width, -half_width, half_width, n, n)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_x)

    @property
    def p(self) -> np.ndarray:
        return np.linspace(self.p_min, self.p_max, self.n_p)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_x - 1)

    @property
    def dp(self) -> float:
        return (self.p_max - self.p_min) / (self.n_p - 1)


@dataclass(frozen=True)
class PhaseSpaceField:
    """A real field sampled on a PhaseSpaceGrid, with quadrature metadata.

    ``values[i, j]`` is the field at (x[i], p[j]).  ``integral`` is the
    grid quadrature of the field with the measure stated in ``measure``
    ('dx dp' for Wigner, 'dx dp / 2' i.e. d^2 beta for the Q function).
    ``coarse`` flags a grid that does not resolve or cover the state.
    """

    grid: PhaseSpaceGrid
    values: np.ndarray
    integral: float
    measure: str
    coarse: bool = False

    def to_csv(self, path_or_buf) -> None:
        """Write (x, p, value) rows; '#' metadata lines first."""
        own = isinstance(path_or_buf, (str, bytes))
        fh = open(path_or_buf, "w", encoding="utf-8") if own else path_or_buf
        try:
            fh.write(f"# measure = {self.measure}\n")
            fh.write(f"# integral = {self.integral:.12g}\n")
            fh.write(f"# coarse = {self.coarse}\n")
            fh.write("x,p,value\n")
            xs, ps = self.grid.x, self.grid.p
            for i, x in enumerate(xs):
                for j, p in enumerate(ps):
                    fh.write(f"{x:.12g},{p:.12g},{self.values[i, j]:.12g}\n")
        finally:
            if own:
                fh.close()

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def annihilation(dim: int) -> FockOperator:
    """Bosonic annihilation operator: <n-1| a |n> = sqrt(n)."""
    if dim < 2:
        raise DimensionError("Fock dimension must be >= 2")
    return FockOperator(np.diag(np.sqrt(np.arange(1, dim)), 1).astype(complex))


def creation(dim: int) -> FockOperator:
    return annihilation(dim).dag()


def number_operator(dim: int) -> FockOperator:
    return FockOperator(np.diag(np.arange(dim)).astype(complex), hermitian=True)


def identity(dim: int) -> FockOperator:
    return FockOperator(np.eye(dim, dtype=complex), hermitian=True)


def vacuum(dim: int) -> DensityMatrix:
    return fock_state(dim, 0)


def fock_state(dim: int, n: int) -> DensityMatrix:
    if not 0 <= n < dim:
        raise DimensionError(f"Fock level {n} outside [0, {dim})")
    mat = np.zeros((dim, dim), dtype=complex)
    mat[n, n] = 1.0
    return DensityMatrix(mat)


def coherent_vector(dim: int, beta: complex) -> np.ndarray:
    """Normalized coherent-state amplitudes <n|beta> on the truncated basis."""
    n = np.arange(dim)
    log_mag = -0.5 * abs(beta) ** 2 + n * np.log(abs(beta)) - 0.5 * gammaln(n + 1) \
        if beta != 0 else np.where(n == 0, 0.0, -np.inf)
    phase = np.exp(1j * n * np.angle(beta)) if beta != 0 else np.ones(dim)
    return np.exp(log_mag) * phase


def coherent_state(dim: int, beta: complex) -> DensityMatrix:
    """Displaced vacuum via the exact displacement matrix (unitary on its support)."""
    d = displacement_operator(dim, beta).matrix
    vec = d[:, 0]
    mat = np.outer(vec, vec.conj())
    return DensityMatrix.from_raw(mat)


def displacement_operator(dim: int, beta: complex) -> FockOperator:
    """exp(beta a^dag - beta* a) on the truncated space.

    Computed by scaling-and-squaring Pade matrix exponential.  The result
    is only near-unitary when |beta|^2 is well inside the truncation; the
    caller controls dim.
    """
    a = annihilation(dim).matrix
    return FockOperator(expm(beta * a.conj().T - np.conj(beta) * a))


def expectation(op, rho) -> complex:
    """Tr(op rho)."""
    op_m = _as_matrix(op)
    rho_m = _as_matrix(rho)
    if op_m.shape != rho_m.shape:
        raise DimensionError(f"dimension mismatch: {op_m.shape} vs {rho_m.shape}")
    return complex(np.einsum("ij,ji->", op_m, rho_m))


def _coverage_flag(values: np.ndarray, grid: PhaseSpaceGrid, integral: float,
                   target: float) -> bool:
    """Heuristic under-resolution/coverage test for phase-space fields."""
    if abs(integral - target) > 1e-2 * max(abs(target), 1.0):
        return True
    edge = max(np.abs(values[0, :]).max(), np.abs(values[-1, :]).max(),
               np.abs(values[:, 0]).max(), np.abs(values[:, -1]).max())
    return bool(edge > 1e-3 * max(np.abs(values).max(), 1e-300))


def _displacement_elements(beta_grid: np.ndarray, dim: int) -> np.ndarray:
    """Matrix elements <n|D(beta)|m> for every beta on a flat grid.

    Closed Laguerre form: for n >= m,
        <n|D|m> = sqrt(m!/n!) beta^(n-m) e^(-|beta|^2/2) L_m^(n-m)(|beta|^2)
    and <n|D|m> = sqrt(n!/m!) (-beta*)^(m-n) e^(-|beta|^2/2) L_n^(m-n)(|beta|^2)
    for n < m.  Shape of the result: (len(beta_grid), dim, dim).
    """
    beta = np.asarray(beta_grid, dtype=complex).ravel()
    absq = np.abs(beta) ** 2
    out = np.empty((beta.size, dim, dim), dtype=complex)
    gauss = np.exp(-0.5 * absq)
    logfact = gammaln(np.arange(dim) + 1)
    for n in range(dim):
        for m in range(dim):
            k = min(n, m)
            d = abs(n - m)
            amp = np.exp(0.5 * (logfact[k] - logfact[max(n, m)]))
            lag = eval_genlaguerre(k, d, absq)
            if n >= m:
                pref = beta ** d
            else:
                pref = (-np.conj(beta)) ** d
            out[:, n, m] = amp * pref * gauss * lag
    return out


def wigner(rho, grid: PhaseSpaceGrid) -> PhaseSpaceField:
    """Wigner function W(x, p) by the Laguerre series, point by point.

    Uses W = (1/pi) Tr[rho D(2 alpha) Pi] with alpha = (x + i p)/sqrt(2)
    and Pi the photon-number parity; integral carries the dx dp measure.
    Vacuum peaks at 1/pi and integrates to one.
    """
    rho_m = _as_matrix(rho)
    dim = rho_m.shape[0]
    xs, ps = grid.x, grid.p
    xg, pg = np.meshgrid(xs, ps, indexing="ij")
    alpha = (xg + 1j * pg) / np.sqrt(2.0)
    dmat = _displacement_elements(2.0 * alpha.ravel(), dim)
    parity = (-1.0) ** np.arange(dim)
    # Tr[rho D Pi] = sum_{m,n} rho_mn D_nm (-1)^m
    weights = rho_m.T * parity[None, :] * (1.0 / np.pi)
    vals = np.real(np.einsum("knm,nm->k", dmat, weights)).reshape(grid.n_x, grid.n_p)
    integral = float(np.trapezoid(np.trapezoid(vals, ps, axis=1), xs))
    return PhaseSpaceField(grid, vals, integral, measure="dx dp",
                           coarse=_coverage_flag(vals, grid, integral, 1.0))


def husimi_q(rho, grid: PhaseSpaceGrid) -> PhaseSpaceField:
    """Husimi function Q(beta) = <beta|rho|beta>/pi at beta = (x + i p)/sqrt(2).

    Nonnegative by construction; the reported integral uses the coherent
    measure d^2 beta = dx dp / 2 and equals one for a well-covered state.
    """
    rho_m = _as_matrix(rho)
    dim = rho_m.shape[0]
    xs, ps = grid.x, grid.p
    xg, pg = np.meshgrid(xs, ps, indexing="ij")
    beta = ((xg + 1j * pg) / np.sqrt(2.0)).ravel()
    n = np.arange(dim)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_mag = np.where(
            np.abs(beta)[:, None] > 0,
            n[None, :] * np.log(np.where(np.abs(beta) > 0, np.abs(beta), 1.0))[:, None],
            np.where(n[None, :] == 0, 0.0, -np.inf),
        )
    coh = np.exp(-0.5 * np.abs(beta)[:, None] ** 2 + log_mag
                 - 0.5 * gammaln(n + 1)[None, :]) * np.exp(1j * n[None, :] * np.angle(beta)[:, None])
    vals = np.real(np.einsum("kn,nm,km->k", coh.conj(), rho_m, coh)) / np.pi
    vals = vals.reshape(grid.n_x, grid.n_p)
    integral = 0.5 * float(np.trapezoid(np.trapezoid(vals, ps, axis=1), xs))
    return PhaseSpaceField(grid, vals, integral, measure="dx dp / 2",
                           coarse=_coverage_flag(vals, grid, integral, 1.0))


def converged_dim(observables, start_dim: int = 8, rtol: float = 1e-6,
                  max_dim: int = 256) -> int:
    """Double the truncation until the observable vector stops moving.

    ``observables(dim)`` must return a 1-D float/complex array.  Returns
    the first dim whose observables agree with those at 2*dim to relative
    tolerance ``rtol``.  Raises RuntimeError beyond ``max_dim``.
    """
    dim = max(4, int(start_dim))
    prev = np.atleast_1d(np.asarray(observables(dim)))
    while 2 * dim <= max_dim:
        nxt = np.atleast_1d(np.asarray(observables(2 * dim)))
        scale = np.maximum(np.abs(nxt), 1e-30)
        if np.max(np.abs(nxt - prev) / scale) < rtol:
            return dim
        dim *= 2
        prev = nxt
    raise RuntimeError(f"observables not converged at max dim {max_dim}")
