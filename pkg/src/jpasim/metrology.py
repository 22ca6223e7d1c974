"""Amplifier metrology on the numerical model.

Probe-response quadrature gain matrix, phase-preserving and
phase-sensitive quantum efficiency, optimal measurement phases, and the
intracavity deviation from ideal parametric-amplifier statistics.

The probe is a weak static drive added to the rotating-frame
Hamiltonian, H_probe = eps d^dag + eps* d, equivalent to a coherent
input of amplitude <a_in> = -i eps / sqrt(kappa); the output follows
from the boundary condition a_out = sqrt(kappa) d - a_in.  Output noise
is referred to the zero-frequency spectrum of the kappa port, obtained
from the integrated regression propagator (the Liouvillian resolvent,
i.e. the closed-form time integral of the two-time correlators).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fock import FockOperator, annihilation, expectation
from .lindblad import build_liouvillian, steady_state, resolvent_apply
from .models import JpaModel, PumpScheme, build_hamiltonian

__all__ = [
    "GainMatrix",
    "NoiseMatrices",
    "gain_matrix",
    "phase_preserving_gain_from_matrix",
    "output_noise_spectrum_zero",
    "quantum_efficiency_pp",
    "added_noise_matrix",
    "eta_theta",
    "optimal_phases",
    "dpa_deviation",
    "induced_displacement_ratio",
    "ProbeTooStrongError",
    "UnsupportedSchemeError",
]


class ProbeTooStrongError(RuntimeError):
    """Probe response is nonlinear beyond the accepted tolerance."""


class UnsupportedSchemeError(ValueError):
    """Raised for schemes excluded from probe metrology (mono current)."""


@dataclass(frozen=True)
class GainMatrix:
    """2x2 quadrature amplitude gain: (X_out, P_out) = G (X_in, P_in)."""

    g11: float
    g12: float
    g21: float
    g22: float

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.g11, self.g12], [self.g21, self.g22]])

    def rotated(self, theta: float) -> np.ndarray:
        r = _rotation(theta)
        return r.T @ self.matrix @ r

    @staticmethod
    def from_matrix(mat: np.ndarray) -> "GainMatrix":
        return GainMatrix(float(mat[0, 0]), float(mat[0, 1]),
                          float(mat[1, 0]), float(mat[1, 1]))


@dataclass(frozen=True)
class NoiseMatrices:
    """Symmetrized 2x2 quadrature noise: output, input and added (input-referred)."""

    sigma_out: np.ndarray
    sigma_in: np.ndarray
    sigma_A: np.ndarray


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _quadratures(mean: complex) -> np.ndarray:
    return np.array([math.sqrt(2.0) * mean.real, math.sqrt(2.0) * mean.imag])


def _check_scheme(model: JpaModel):
    if model.scheme is PumpScheme.MONO_CURRENT:
        raise UnsupportedSchemeError(
            "probe metrology excludes the mono current pump; its cubic "
            "displacement shifts the operating point under the probe")


def _probe_response(model: JpaModel, dim: int, eps: complex):
    """Output-field mean under a static probe, baseline subtracted."""
    a = annihilation(dim).matrix
    h = build_hamiltonian(model, dim).matrix
    hp = h + eps * a.conj().T + np.conj(eps) * a
    rho = steady_state(build_liouvillian(FockOperator(hp), [(a, model.kappa_tot)]))
    return expectation(a, rho)


def gain_matrix(model: JpaModel, dim: int, eps_probe: float | None = None,
                linearity_tol: float = 0.01, max_halvings: int = 4) -> GainMatrix:
    """Quadrature gain matrix from two orthogonal-phase probe responses.

    The probe amplitude defaults to kappa/1000 and is halved (up to
    ``max_halvings``) until doubling the probe doubles the response
    within ``linearity_tol``; persistent nonlinearity raises
    ProbeTooStrongError.
    """
    _check_scheme(model)
    kap = model.kappa
    if kap <= 0:
        raise ValueError("gain matrix requires a coupled input port (kappa > 0)")
    eps0 = kap / 1000.0 if eps_probe is None else float(eps_probe)
    if eps_probe is not None and eps_probe > kap / 100.0:
        raise ValueError("probe must satisfy eps_probe <= kappa/100")
    a = annihilation(dim).matrix
    base = expectation(a, steady_state(build_liouvillian(
        build_hamiltonian(model, dim), [(a, model.kappa_tot)])))

    eps = eps0
    for _ in range(max_halvings + 1):
        cols_in, cols_out, ok = [], [], True
        for phase in (1.0, 1.0j):
            d_full = _probe_response(model, dim, phase * eps) - base
            d_half = _probe_response(model, dim, phase * eps / 2.0) - base
            if abs(d_full - 2.0 * d_half) > linearity_tol * max(abs(d_full), 1e-300):
                ok = False
                break
            a_in = -1j * phase * eps / math.sqrt(kap)
            a_out = math.sqrt(kap) * d_full - a_in
            cols_in.append(_quadratures(a_in))
            cols_out.append(_quadratures(a_out))
        if ok:
            g = np.column_stack(cols_out) @ np.linalg.inv(np.column_stack(cols_in))
            return GainMatrix.from_matrix(g)
        eps /= 2.0
    raise ProbeTooStrongError("response nonlinear even at the smallest probe")


def phase_preserving_gain_from_matrix(g: GainMatrix | np.ndarray) -> float:
    """Photon-number gain of the phase-preserving mode: |g11+g22+i(g21-g12)|^2 / 4."""
    m = g.matrix if isinstance(g, GainMatrix) else np.asarray(g)
    return float(abs(m[0, 0] + m[1, 1] + 1j * (m[1, 0] - m[0, 1])) ** 2) / 4.0


def output_noise_spectrum_zero(model: JpaModel, dim: int) -> tuple[float, complex]:
    """Zero-frequency output spectra (n_out[0], m_out[0]) of the kappa port.

    n_out[0] = kappa 2 Re integral <da^dag(t) da(0)>, m_out[0] =
    kappa 2 integral <da(t) da(0)>; the time integrals are evaluated in
    closed form with the steady-state-pinned resolvent.
    """
    a = annihilation(dim).matrix
    liou = build_liouvillian(build_hamiltonian(model, dim), [(a, model.kappa_tot)])
    rho = steady_state(liou)
    da = a - expectation(a, rho) * np.eye(dim)
    kern = resolvent_apply(liou, rho.matrix, da @ rho.matrix)
    n0 = model.kappa * 2.0 * float(np.real(np.trace(da.conj().T @ kern)))
    m0 = model.kappa * 2.0 * complex(np.trace(da @ kern))
    return n0, m0


def quantum_efficiency_pp(model: JpaModel, dim: int,
                          gain: float | None = None) -> float:
    """Phase-preserving quantum efficiency eta = 1 / (1 + 2 A).

    The input-referred added noise A follows from the vacuum-input
    relation <|a_out|^2> = G (A + 1/2) with <|a_out|^2> = n_out[0] + 1/2
    and G the probe-measured phase-preserving gain.
    """
    _check_scheme(model)
    if gain is None:
        gain = phase_preserving_gain_from_matrix(gain_matrix(model, dim))
    n0, _ = output_noise_spectrum_zero(model, dim)
    a_bar = (n0 + 0.5) / gain - 0.5
    return 1.0 / (1.0 + 2.0 * a_bar)


def added_noise_matrix(model: JpaModel, dim: int,
                       g: GainMatrix | None = None) -> NoiseMatrices:
    """Input-referred added-noise matrix sigma_A = G^-1 sigma_out G^-T - sigma_in.

    sigma_out is the symmetrized zero-frequency quadrature spectral
    matrix of the output, with the vacuum floor 1/2 on the diagonal;
    sigma_in is the vacuum input, identity / 2.
    """
    _check_scheme(model)
    if g is None:
        g = gain_matrix(model, dim)
    n0, m0 = output_noise_spectrum_zero(model, dim)
    sigma_out = np.array([
        [0.5 + n0 + m0.real, m0.imag],
        [m0.imag, 0.5 + n0 - m0.real],
    ])
    sigma_in = 0.5 * np.eye(2)
    ginv = np.linalg.inv(g.matrix)
    sigma_a = ginv @ sigma_out @ ginv.T - sigma_in
    return NoiseMatrices(sigma_out=sigma_out, sigma_in=sigma_in, sigma_A=sigma_a)


def eta_theta(model: JpaModel, theta, dim: int,
              noise: NoiseMatrices | None = None):
    """Phase-sensitive quantum efficiency eta(theta) = 1 / (1 + 2 A(theta)).

    A(theta) is the first diagonal element of the added-noise matrix in
    the frame rotated by the measurement phase.
    """
    _check_scheme(model)
    if noise is None:
        noise = added_noise_matrix(model, dim)
    thetas = np.atleast_1d(np.asarray(theta, dtype=float))
    out = np.empty_like(thetas)
    for i, th in enumerate(thetas):
        r = _rotation(th)
        a_th = (r.T @ noise.sigma_A @ r)[0, 0]
        if a_th < -1e-6:
            raise RuntimeError(f"negative added noise {a_th:.3e} at theta={th}")
        out[i] = 1.0 / (1.0 + 2.0 * max(a_th, 0.0))
    return float(out[0]) if np.isscalar(theta) else out


def _golden_refine(fun, lo: float, hi: float, tol: float = 1e-4) -> float:
    """Golden-section minimizer of a scalar function on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while abs(b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def optimal_phases(model: JpaModel, dim: int, grid_n: int = 720,
                   g: GainMatrix | None = None) -> tuple[float, float]:
    """Measurement phases (theta_m, theta_o) in [0, pi).

    theta_m maximizes the direct gain |G(theta)_11|; theta_o minimizes
    the cross gain |G(theta)_12|; grid scan then golden-section
    refinement to 1e-4 rad.
    """
    if grid_n < 360:
        raise ValueError("grid_n must be >= 360")
    _check_scheme(model)
    if g is None:
        g = gain_matrix(model, dim)
    grid = np.linspace(0.0, math.pi, grid_n, endpoint=False)
    g11 = np.array([abs(g.rotated(t)[0, 0]) for t in grid])
    g12 = np.array([abs(g.rotated(t)[0, 1]) for t in grid])
    step = math.pi / grid_n

    i_m = int(np.argmax(g11))
    theta_m = _golden_refine(lambda t: -abs(g.rotated(t)[0, 0]),
                             grid[i_m] - step, grid[i_m] + step)
    i_o = int(np.argmin(g12))
    theta_o = _golden_refine(lambda t: abs(g.rotated(t)[0, 1]),
                             grid[i_o] - step, grid[i_o] + step)
    return theta_m % math.pi, theta_o % math.pi


def dpa_deviation(rho) -> float:
    """Deviation of the centered moments from ideal-DPA statistics.

    Xi = 1 - |M| / sqrt(N (N + 1/2)) with M = <d^2> - <d>^2 and
    N = <d^dag d> - |<d>|^2; defined as zero for an (almost) empty cavity.
    """
    mat = np.asarray(getattr(rho, "matrix", rho))
    dim = mat.shape[0]
    a = annihilation(dim).matrix
    mean = expectation(a, mat)
    n = float(np.real(expectation(a.conj().T @ a, mat))) - abs(mean) ** 2
    m = expectation(a @ a, mat) - mean ** 2
    if n < 1e-12:
        return 0.0
    return 1.0 - abs(m) / math.sqrt(n * (n + 0.5))


def induced_displacement_ratio(model: JpaModel, dim: int) -> float:
    """|<d>_ss| / |alpha|: displacement generated by the cubic corrections.

    Identically zero for the quartic-only schemes (parity symmetry); for
    the mono current pump the ratio is measured against the classical
    pump field alpha.
    """
    if model.scheme is not PumpScheme.MONO_CURRENT:
        return 0.0
    a = annihilation(dim).matrix
    rho = steady_state(build_liouvillian(build_hamiltonian(model, dim),
                                         [(a, model.kappa_tot)]))
    mean = expectation(a, rho)
    if model.alpha == 0:
        return 0.0
    return abs(mean) / abs(model.alpha)
