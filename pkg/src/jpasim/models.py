"""Physical parameter records and Hamiltonian builders.

Covers the circuit-to-Kerr mapping of a capacitively shunted Josephson
junction, the classical pump-field solutions, and the rotating-frame
Hamiltonians of the ideal degenerate parametric amplifier (DPA) and of
the three pumping schemes (monochromatic current, bichromatic current,
flux) including their leading non-quadratic corrections.

All energies and rates are angular frequencies (hbar = 1).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, asdict, replace

import numpy as np
from scipy.special import jv

from .fock import FockOperator, annihilation

__all__ = [
    "PumpScheme",
    "CircuitParams",
    "KerrParams",
    "JpaModel",
    "circuit_to_kerr",
    "parametric_threshold",
    "mean_field_abscissa",
    "classical_field_mono",
    "classical_fields_bi",
    "flux_fourier_coefficients",
    "effective_pump_and_shift",
    "build_hamiltonian",
    "BifurcationRegimeError",
    "NoConvergenceError",
]


class BifurcationRegimeError(RuntimeError):
    """The classical pump equation has three coexisting real branches."""


class NoConvergenceError(RuntimeError):
    """Fixed-point iteration for the classical fields did not converge."""


class PumpScheme(enum.Enum):
    DPA = "dpa"
    MONO_CURRENT = "mono"
    BI_CURRENT = "bi"
    FLUX = "flux"


@dataclass(frozen=True)
class CircuitParams:
    """Junction circuit energies; optional static flux and pump amplitude.

    F and delta_f parametrize the SQUID flux drive F + delta_f cos(w_p t)
    in units of the reduced flux quantum.
    """

    E_J: float
    E_C: float
    F: float = 0.0
    delta_f: float = 0.0

    def __post_init__(self):
        if self.E_J <= 0 or self.E_C <= 0:
            raise ValueError("E_J and E_C must be positive")
        if abs(self.delta_f) >= 1:
            raise ValueError("flux-pump amplitude must satisfy |delta_f| < 1")


@dataclass(frozen=True)
class KerrParams:
    """Oscillator parameters derived from the circuit.

    omega0 = sqrt(8 E_J E_C), phi_zpf = 2 sqrt(E_C / omega0),
    Lambda = -E_C / 2, omega0_tilde = omega0 - 2 Lambda.
    """

    omega0: float
    phi_zpf: float
    Lambda: float
    omega0_tilde: float


def circuit_to_kerr(cp: CircuitParams) -> KerrParams:
    """Map junction energies to oscillator frequency, zero-point flux and Kerr."""
    omega0 = math.sqrt(8.0 * cp.E_J * cp.E_C)
    phi_zpf = 2.0 * math.sqrt(cp.E_C / omega0)
    Lambda = -0.5 * cp.E_C
    return KerrParams(omega0=omega0, phi_zpf=phi_zpf, Lambda=Lambda,
                      omega0_tilde=omega0 - 2.0 * Lambda)


def parametric_threshold(Delta: float, kappa_tot: float) -> float:
    """Pump strength at which the linear gain diverges: sqrt(Delta^2 + kappa_tot^2/4)."""
    if kappa_tot <= 0:
        raise ValueError("kappa_tot must be positive")
    return math.hypot(Delta, kappa_tot / 2.0)


def mean_field_abscissa(Delta: float, lambda_abs: float, kappa_tot: float) -> float:
    """Largest growth rate of the linearized first-moment dynamics.

    Negative below the parametric threshold, zero at it, positive above;
    a finite- dimensional threshold detector (the truncated Lindblad
    generator itself never develops growing modes).
    """
    disc = lambda_abs ** 2 - Delta ** 2
    rate = math.sqrt(disc) if disc > 0 else 0.0
    return -0.5 * kappa_tot + rate


def classical_field_mono(epsilon: complex, detuning: float, Lambda: float,
                         kappa_tot: float) -> complex:
    """Steady classical field of a single current pump on the Kerr cavity.

    Solves eps + (detuning + 2 Lambda |alpha|^2 - i kappa_tot/2) alpha = 0,
    with ``detuning`` the bare pump detuning (population shift not yet
    included).  The photon number n = |alpha|^2 obeys the cubic

        4 Lambda^2 n^3 + 4 Lambda detuning n^2
            + (detuning^2 + kappa_tot^2/4) n - |eps|^2 = 0.

    The returned root is the one continuously connected to the linear
    (Lambda -> 0) solution; three coexisting positive branches raise
    BifurcationRegimeError.
    """
    if epsilon == 0:
        return 0.0 + 0.0j
    if Lambda == 0.0:
        return -epsilon / (detuning - 0.5j * kappa_tot)

    def cubic_roots(lam):
        coeffs = [4.0 * lam ** 2, 4.0 * lam * detuning,
                  detuning ** 2 + kappa_tot ** 2 / 4.0, -abs(epsilon) ** 2]
        return np.roots(coeffs)

    roots = cubic_roots(Lambda)
    real = roots[np.abs(roots.imag) < 1e-9 * max(np.abs(roots).max(), 1.0)].real
    positive = np.sort(real[real > 0])
    if len(positive) == 3 and np.min(np.diff(positive)) > 1e-9 * positive[-1]:
        raise BifurcationRegimeError(
            "three coexisting classical branches; operate below the bifurcation")

    # homotopy in Lambda from the linear solution picks the physical branch
    n = abs(epsilon) ** 2 / (detuning ** 2 + kappa_tot ** 2 / 4.0)
    for s in np.linspace(0.0, 1.0, 21)[1:]:
        r = cubic_roots(s * Lambda)
        r = r[np.abs(r.imag) < 1e-9 * max(np.abs(r).max(), 1.0)].real
        r = r[r > 0]
        n = float(r[np.argmin(np.abs(r - n))])
    alpha = -epsilon / (detuning + 2.0 * Lambda * n - 0.5j * kappa_tot)
    residual = abs(epsilon + (detuning + 2.0 * Lambda * abs(alpha) ** 2
                              - 0.5j * kappa_tot) * alpha)
    if residual > 1e-10 * max(abs(epsilon), 1.0):
        raise NoConvergenceError(f"classical-field residual {residual:.2e}")
    return complex(alpha)


def classical_fields_bi(eps1: complex, eps2: complex, omega1: float, omega2: float,
                        kerr: KerrParams, kappa_tot: float,
                        damping: float = 0.5, tol: float = 1e-12,
                        max_iter: int = 10_000) -> tuple[complex, complex]:
    """Steady classical fields of two current pumps after dropping beat terms.

    Solves the coupled equations (j, k = 1, 2; j != k)

        0 = eps_j + (w0t - omega_j + 2 L |alpha_j|^2 + 4 L |alpha_k|^2
                     - i kappa_tot / 2) alpha_j

    by damped fixed-point iteration.  Terms oscillating at the pump
    detuning Delta12 = omega1 - omega2 are dropped, so Delta12 must be
    nonzero.
    """
    if omega1 == omega2:
        raise ValueError("pump frequencies must differ (Delta12 != 0)")
    w0t, L = kerr.omega0_tilde, kerr.Lambda
    d1, d2 = w0t - omega1, w0t - omega2

    def step(a1, a2):
        n1, n2 = abs(a1) ** 2, abs(a2) ** 2
        b1 = -eps1 / (d1 + 2 * L * n1 + 4 * L * n2 - 0.5j * kappa_tot)
        b2 = -eps2 / (d2 + 2 * L * n2 + 4 * L * n1 - 0.5j * kappa_tot)
        return b1, b2

    a1 = -eps1 / (d1 - 0.5j * kappa_tot)
    a2 = -eps2 / (d2 - 0.5j * kappa_tot)
    for _ in range(max_iter):
        b1, b2 = step(a1, a2)
        new1 = (1 - damping) * a1 + damping * b1
        new2 = (1 - damping) * a2 + damping * b2
        err = max(abs(new1 - a1), abs(new2 - a2))
        a1, a2 = new1, new2
        if err < tol * max(abs(a1), abs(a2), 1e-30):
            return complex(a1), complex(a2)
    raise NoConvergenceError(f"no fixed point after {max_iter} iterations")


def flux_fourier_coefficients(E_J: float, F: float, delta_f: float,
                              n_max: int) -> list[float]:
    """Harmonics E^(n) of E_J cos(F + delta_f cos w_p t) = sum_n E^(n) cos(n w_p t).

    E^(0) = E_J J0(df) cos F, E^(2n-1) = 2 E_J (-1)^n J_{2n-1}(df) sin F,
    E^(2n) = 2 E_J (-1)^n J_{2n}(df) cos F.
    """
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    out = [E_J * jv(0, delta_f) * math.cos(F)]
    for n in range(1, n_max + 1):
        sign = (-1.0) ** ((n + 1) // 2)
        trig = math.sin(F) if n % 2 else math.cos(F)
        out.append(2.0 * E_J * sign * jv(n, delta_f) * trig)
    return out


@dataclass(frozen=True)
class JpaModel:
    """Rotating-frame amplifier model: quadratic part plus corrections.

    The Hamiltonian built from a model is

        H = Delta d^dag d + (lambda_eff/2) d^dag^2 + h.c.
            + mu d^dag^2 d + mu* d^dag d^2          (mono current)
            + Lambda d^dag^2 d^2                     (all Kerr schemes)
            + c3 (d^dag d^3 + d^dag^3 d) + c4 (d^4 + d^dag^4)   (flux)

    ``Delta`` is the full rotating-frame detuning, pump-induced shift
    included.  ``Lambda`` is the (possibly flux-renormalized) Kerr
    coefficient.  Scheme-specific bookkeeping fields keep the classical
    fields and drive parameters used to derive the effective quantities.
    """

    scheme: PumpScheme
    Lambda: float
    kappa: float
    gamma: float
    Delta: float
    lambda_eff: complex
    mu: complex = 0.0 + 0.0j
    c3: float = 0.0
    c4: float = 0.0
    leading_only: bool = False
    alpha: complex = 0.0 + 0.0j
    alpha1: complex = 0.0 + 0.0j
    alpha2: complex = 0.0 + 0.0j
    Delta12: float = 0.0
    epsilon: complex = 0.0 + 0.0j
    epsilon1: complex = 0.0 + 0.0j
    epsilon2: complex = 0.0 + 0.0j
    E_J: float = 0.0
    E_C: float = 0.0
    F: float = 0.0
    delta_f: float = 0.0

    def __post_init__(self):
        if self.kappa < 0 or self.gamma < 0:
            raise ValueError("rates must be nonnegative")
        if self.kappa_tot <= 0:
            raise ValueError("kappa + gamma must be positive")
        if abs(self.lambda_eff) >= self.threshold:
            raise ValueError(
                f"|lambda| = {abs(self.lambda_eff):.4g} is not below the "
                f"parametric threshold {self.threshold:.4g}")

    @property
    def kappa_tot(self) -> float:
        return self.kappa + self.gamma

    @property
    def threshold(self) -> float:
        return parametric_threshold(self.Delta, self.kappa_tot)

    @property
    def rwa_valid(self) -> bool:
        """Bichromatic beat-term check: |Delta12| >= 10 |2 lambda_eff|."""
        if self.scheme is not PumpScheme.BI_CURRENT:
            return True
        return abs(self.Delta12) >= 20.0 * abs(self.lambda_eff)

    @property
    def parity_symmetric(self) -> bool:
        """True when H commutes with photon-number parity (no odd terms)."""
        if self.scheme is PumpScheme.MONO_CURRENT:
            return self.mu == 0
        if self.scheme is PumpScheme.FLUX:
            return self.leading_only or self.c3 == 0.0
        return True

    # ----- constructors -------------------------------------------------

    @staticmethod
    def dpa(lambda_eff: complex, Delta: float = 0.0, kappa: float = 1.0,
            gamma: float = 0.0) -> "JpaModel":
        return JpaModel(PumpScheme.DPA, Lambda=0.0, kappa=kappa, gamma=gamma,
                        Delta=Delta, lambda_eff=complex(lambda_eff))

    @staticmethod
    def mono_from_effective(lambda_eff: complex, Lambda: float, Delta: float = 0.0,
                            kappa: float = 1.0, gamma: float = 0.0) -> "JpaModel":
        """Monochromatic current pump pinned by (lambda, Lambda) directly.

        The classical field follows from lambda = 2 Lambda alpha^2 and
        fixes the cubic coefficient mu = 2 Lambda alpha.
        """
        if Lambda == 0:
            raise ValueError("mono scheme requires a nonzero Kerr coefficient")
        alpha = np.sqrt(complex(lambda_eff) / (2.0 * Lambda))
        return JpaModel(PumpScheme.MONO_CURRENT, Lambda=Lambda, kappa=kappa,
                        gamma=gamma, Delta=Delta, lambda_eff=complex(lambda_eff),
                        mu=2.0 * Lambda * alpha, alpha=complex(alpha))

    @staticmethod
    def mono_from_pump(epsilon: complex, omega_p: float, kerr: KerrParams,
                       kappa: float, gamma: float = 0.0) -> "JpaModel":
        """Monochromatic current pump from the physical drive amplitude."""
        kt = kappa + gamma
        alpha = classical_field_mono(epsilon, kerr.omega0_tilde - omega_p,
                                     kerr.Lambda, kt)
        Delta = kerr.omega0_tilde + 4.0 * kerr.Lambda * abs(alpha) ** 2 - omega_p
        return JpaModel(PumpScheme.MONO_CURRENT, Lambda=kerr.Lambda, kappa=kappa,
                        gamma=gamma, Delta=Delta,
                        lambda_eff=2.0 * kerr.Lambda * alpha ** 2,
                        mu=2.0 * kerr.Lambda * alpha, alpha=complex(alpha),
                        epsilon=complex(epsilon))

    @staticmethod
    def bi_from_effective(lambda_eff: complex, Lambda: float, Delta: float = 0.0,
                          kappa: float = 1.0, gamma: float = 0.0,
                          Delta12: float | None = None) -> "JpaModel":
        """Bichromatic current pump pinned by (lambda, Lambda).

        Symmetric classical fields alpha1 = alpha2 = sqrt(lambda / 4 Lambda)
        are recorded for bookkeeping; Delta12 defaults to the smallest
        detuning satisfying the beat-term validity margin.
        """
        if Lambda == 0:
            raise ValueError("bi scheme requires a nonzero Kerr coefficient")
        alpha = np.sqrt(complex(lambda_eff) / (4.0 * Lambda))
        if Delta12 is None:
            Delta12 = 20.0 * abs(lambda_eff) if lambda_eff else kappa + gamma
        return JpaModel(PumpScheme.BI_CURRENT, Lambda=Lambda, kappa=kappa,
                        gamma=gamma, Delta=Delta, lambda_eff=complex(lambda_eff),
                        alpha1=complex(alpha), alpha2=complex(alpha),
                        Delta12=float(Delta12))

    @staticmethod
    def bi_from_pumps(eps1: complex, eps2: complex, omega1: float, omega2: float,
                      kerr: KerrParams, kappa: float, gamma: float = 0.0) -> "JpaModel":
        """Bichromatic current pump from the two physical drives."""
        kt = kappa + gamma
        a1, a2 = classical_fields_bi(eps1, eps2, omega1, omega2, kerr, kt)
        Omega12 = 0.5 * (omega1 + omega2)
        Delta = kerr.omega0_tilde + 4.0 * kerr.Lambda * (abs(a1) ** 2 + abs(a2) ** 2) \
            - Omega12
        return JpaModel(PumpScheme.BI_CURRENT, Lambda=kerr.Lambda, kappa=kappa,
                        gamma=gamma, Delta=Delta,
                        lambda_eff=4.0 * kerr.Lambda * a1 * a2,
                        alpha1=a1, alpha2=a2, Delta12=omega1 - omega2,
                        epsilon1=complex(eps1), epsilon2=complex(eps2))

    @staticmethod
    def flux_from_effective(lambda_eff: float, Lambda: float, Delta: float = 0.0,
                            kappa: float = 1.0, gamma: float = 0.0,
                            leading_only: bool = True) -> "JpaModel":
        """Flux pump reduced to its leading (Kerr-only) correction."""
        return JpaModel(PumpScheme.FLUX, Lambda=Lambda, kappa=kappa, gamma=gamma,
                        Delta=Delta, lambda_eff=complex(lambda_eff),
                        leading_only=leading_only)

    @staticmethod
    def flux_from_circuit(cp: CircuitParams, omega_p: float, kappa: float,
                          gamma: float = 0.0, leading_only: bool = False) -> "JpaModel":
        """Flux pump from circuit parameters at the static working point.

        The oscillator frequency and zero-point flux are evaluated with
        the DC Josephson energy E^(0); the drive harmonics E^(1), E^(2)
        set the parametric pump and the subleading corrections.
        """
        ej = flux_fourier_coefficients(cp.E_J, cp.F, cp.delta_f, 2)
        if ej[0] <= 0:
            raise ValueError("static working point must have positive E_J cos F")
        kerr0 = circuit_to_kerr(CircuitParams(ej[0], cp.E_C))
        phi4 = kerr0.phi_zpf ** 4
        Lambda_f = -0.25 * ej[0] * phi4
        lam = 0.5 * ej[1] * kerr0.phi_zpf ** 2
        Delta = kerr0.omega0 - 2.0 * Lambda_f - 0.5 * omega_p
        return JpaModel(PumpScheme.FLUX, Lambda=Lambda_f, kappa=kappa, gamma=gamma,
                        Delta=Delta, lambda_eff=complex(lam),
                        c3=-ej[1] * phi4 / 12.0, c4=-ej[2] * phi4 / 48.0,
                        leading_only=leading_only,
                        E_J=cp.E_J, E_C=cp.E_C, F=cp.F, delta_f=cp.delta_f)

    # ----- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scheme"] = self.scheme.value
        for key, val in d.items():
            if isinstance(val, complex):
                d[key] = [val.real, val.imag]
        return d

    @staticmethod
    def from_dict(d: dict) -> "JpaModel":
        kwargs = dict(d)
        kwargs["scheme"] = PumpScheme(kwargs["scheme"])
        for key, val in kwargs.items():
            if isinstance(val, (list, tuple)) and len(val) == 2:
                kwargs[key] = complex(val[0], val[1])
        return JpaModel(**kwargs)

    def replace(self, **changes) -> "JpaModel":
        return replace(self, **changes)


def effective_pump_and_shift(model: JpaModel) -> tuple[complex, float]:
    """Effective parametric pump strength and pump-induced frequency shift.

    Mono: (2 Lambda alpha^2, 4 Lambda |alpha|^2).
    Bi:   (4 Lambda alpha1 alpha2, 4 Lambda (|alpha1|^2 + |alpha2|^2)).
    Flux: (E^(1) phi_zpf^2 / 2, omega0 (sqrt(J0(df)) - 1)); requires a
          circuit-backed model.  The ideal DPA returns (lambda, 0).
    """
    L = model.Lambda
    if model.scheme is PumpScheme.DPA:
        return model.lambda_eff, 0.0
    if model.scheme is PumpScheme.MONO_CURRENT:
        return 2.0 * L * model.alpha ** 2, 4.0 * L * abs(model.alpha) ** 2
    if model.scheme is PumpScheme.BI_CURRENT:
        return (4.0 * L * model.alpha1 * model.alpha2,
                4.0 * L * (abs(model.alpha1) ** 2 + abs(model.alpha2) ** 2))
    if model.E_J == 0.0:
        return model.lambda_eff, 0.0
    ej = flux_fourier_coefficients(model.E_J, model.F, model.delta_f, 2)
    kerr0 = circuit_to_kerr(CircuitParams(ej[0], model.E_C))
    omega0_static = circuit_to_kerr(
        CircuitParams(model.E_J * math.cos(model.F), model.E_C)).omega0
    lam = 0.5 * ej[1] * kerr0.phi_zpf ** 2
    shift = omega0_static * (math.sqrt(jv(0, model.delta_f)) - 1.0)
    return complex(lam), shift


def build_hamiltonian(model: JpaModel, dim: int) -> FockOperator:
    """Rotating-frame Hamiltonian of the model on a truncated Fock space."""
    if dim < 4:
        raise ValueError("dim must be >= 4")
    a = annihilation(dim).matrix
    ad = a.conj().T
    lam = complex(model.lambda_eff)
    h = model.Delta * (ad @ a) + 0.5 * lam * (ad @ ad) + 0.5 * np.conj(lam) * (a @ a)

    if model.scheme in (PumpScheme.MONO_CURRENT, PumpScheme.BI_CURRENT):
        h = h + model.Lambda * (ad @ ad @ a @ a)
    if model.scheme is PumpScheme.MONO_CURRENT:
        mu = complex(model.mu)
        h = h + mu * (ad @ ad @ a) + np.conj(mu) * (ad @ a @ a)
    if model.scheme is PumpScheme.FLUX:
        h = h + model.Lambda * (ad @ ad @ a @ a)
        if not model.leading_only:
            h = h + model.c3 * (ad @ a @ a @ a + ad @ ad @ ad @ a)
            h = h + model.c4 * (a @ a @ a @ a + ad @ ad @ ad @ ad)

    herm_err = np.abs(h - h.conj().T).max()
    assert herm_err < 1e-12 * max(np.abs(h).max(), 1.0), "non-Hermitian assembly"
    return FockOperator(h, hermitian=True)
