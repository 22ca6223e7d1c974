"""Closed-form results for the ideal degenerate parametric amplifier.

Input-output solution of the damped cavity with a quadratic two-photon
drive: amplitude gains, intracavity moments, output-field spectra and
filtered squeezing.  These expressions act as the independent oracle for
the numerical Lindblad machinery.

Frequency convention: omega = 0 is the center of the amplified band
(half the parametric pump frequency).  Spectra are defined such that
integral dw/2pi N_out[w] equals the output photon flux kappa * N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .models import parametric_threshold

__all__ = [
    "DpaParams",
    "signal_idler_gains",
    "phase_preserving_gain",
    "phase_preserving_gain_db",
    "lambda_for_gain",
    "intracavity_moments",
    "output_spectra",
    "output_spectra_as_printed",
    "filtered_moments",
    "narrowband_squeezing",
    "squeezing_level_from_moments",
]


@dataclass(frozen=True)
class DpaParams:
    """Ideal DPA parameters; must sit below the parametric threshold."""

    Delta: float
    lam: complex
    kappa: float
    gamma: float = 0.0

    def __post_init__(self):
        if abs(self.lam) >= self.threshold:
            raise ValueError("pump at or above the parametric threshold")

    @property
    def kappa_tot(self) -> float:
        return self.kappa + self.gamma

    @property
    def threshold(self) -> float:
        return parametric_threshold(self.Delta, self.kappa + self.gamma)


def _denominator(p: DpaParams, omega):
    """D[w] = Delta^2 + (kappa_tot/2 - i w)^2 - |lambda|^2."""
    return p.Delta ** 2 + (0.5 * p.kappa_tot - 1j * np.asarray(omega)) ** 2 \
        - abs(p.lam) ** 2


def signal_idler_gains(p: DpaParams, omega=0.0):
    """Amplitude gains (g_S, g_I) relating output to input and conjugate input."""
    D = _denominator(p, omega)
    g_s = (0.5 * p.kappa * p.kappa_tot - 1j * p.kappa * (p.Delta + np.asarray(omega))) / D - 1.0
    g_i = -1j * p.kappa * p.lam / D
    return g_s, g_i


def phase_preserving_gain(p: DpaParams, omega=0.0):
    """Photon-number gain |g_S|^2 when the idler band is not measured."""
    g_s, _ = signal_idler_gains(p, omega)
    return np.abs(g_s) ** 2


def phase_preserving_gain_db(p: DpaParams, omega=0.0):
    return 10.0 * np.log10(phase_preserving_gain(p, omega))


def lambda_for_gain(gain: float, kappa: float, gamma: float = 0.0) -> float:
    """Pump magnitude giving phase-preserving gain ``gain`` at Delta = omega = 0.

    Inverts |g_S|^2 = ((c + x)/(c - x))^2 for the lossless resonant case
    with c = kappa_tot^2/4, x = |lambda|^2; with loss the inversion is
    done numerically.
    """
    if gain < 1.0:
        raise ValueError("gain must be >= 1")
    kt = kappa + gamma
    c = kt ** 2 / 4.0
    if gamma == 0.0:
        s = math.sqrt(gain)
        return math.sqrt(c * (s - 1.0) / (s + 1.0))
    from scipy.optimize import brentq
    f = lambda lam: phase_preserving_gain(DpaParams(0.0, lam, kappa, gamma)) - gain
    return brentq(f, 0.0, 0.5 * kt * (1 - 1e-12))


def intracavity_moments(p: DpaParams):
    """Second-order steady moments (N, M) = (<d^dag d>, <d^2>) of the cavity field."""
    denom = 2.0 * (p.Delta ** 2 + p.kappa_tot ** 2 / 4.0 - abs(p.lam) ** 2)
    N = abs(p.lam) ** 2 / denom
    M = -p.lam * (p.Delta + 0.5j * p.kappa_tot) / denom
    return float(N), complex(M)


def output_spectra(p: DpaParams, omega):
    """Output spectra (N_out[w], M_out[w]) of the measured kappa port.

    N_out[w] = |lambda|^2 kappa kappa_tot / |D[w]|^2 and the anomalous
    spectrum is derived from the input-output solution,

        M_out[w] = -i kappa lambda [(kappa_tot/2 - i Delta)^2 + w^2
                                    + |lambda|^2] / |D[w]|^2,

    which satisfies the sum rules integral N_out dw/2pi = kappa N and
    integral M_out dw/2pi = kappa M.
    """
    w = np.asarray(omega, dtype=float)
    den = (p.Delta ** 2 + p.kappa_tot ** 2 / 4.0 - w ** 2 - abs(p.lam) ** 2) ** 2 \
        + p.kappa_tot ** 2 * w ** 2
    n_out = abs(p.lam) ** 2 * p.kappa * p.kappa_tot / den
    m_out = -1j * p.kappa * p.lam * ((0.5 * p.kappa_tot - 1j * p.Delta) ** 2
                                     + w ** 2 + abs(p.lam) ** 2) / den
    return n_out, m_out


def output_spectra_as_printed(p: DpaParams, omega):
    """Anomalous output spectrum with the inner bracket (kappa_tot - i Delta)^2.

    Kept only for comparison: this variant fails the integral sum rule
    against the intracavity moments and is not used anywhere else.
    """
    w = np.asarray(omega, dtype=float)
    den = (p.Delta ** 2 + p.kappa_tot ** 2 / 4.0 - w ** 2 - abs(p.lam) ** 2) ** 2 \
        + p.kappa_tot ** 2 * w ** 2
    return -1j * p.kappa * p.lam * ((p.kappa_tot - 1j * p.Delta) ** 2
                                    + w ** 2 + abs(p.lam) ** 2) / den


def _filter_weight(spec, omega):
    """|f_bar[w]|^2 / 2pi for a FilterSpec; integrates to one over omega."""
    w = np.asarray(omega, dtype=float) - spec.center_omega
    if spec.shape == "boxcar":
        T = spec.duration
        x = 0.5 * w * T
        return T * np.sinc(x / np.pi) ** 2 / (2.0 * np.pi)
    sigma_w2 = 2.0 * np.pi * spec.bandwidth ** 2
    return np.exp(-w ** 2 / (2.0 * sigma_w2)) / (spec.bandwidth * 2.0 * np.pi)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _panel_edges(p: DpaParams, spec, omega_max: float) -> np.ndarray:
    """Quadrature panels resolving both the filter lobes and the cavity lines."""
    width_cavity = p.kappa_tot / 8.0
    edges = set(np.arange(-omega_max, omega_max + width_cavity, width_cavity))
    if spec.shape == "boxcar":
        lobe = 2.0 * np.pi / spec.duration
        n_lobes = int(omega_max / lobe) + 1
        zeros = spec.center_omega + lobe * np.arange(-n_lobes, n_lobes + 1)
        edges.update(zeros[np.abs(zeros) <= omega_max])
    else:
        sig = np.sqrt(2.0 * np.pi) * spec.bandwidth
        fine = spec.center_omega + np.arange(-12, 13) * sig / 2.0
        edges.update(fine[np.abs(fine) <= omega_max])
    edges.update((-omega_max, omega_max))
    return np.array(sorted(edges))


def filtered_moments(p: DpaParams, spec) -> tuple[float, complex]:
    """Filtered output moments (N_f, M_f) by frequency quadrature.

    N_f = integral dw |f[w]|^2/2pi N_out[w] and likewise for M_f.
    Composite 16-point Gauss panels are aligned to the filter lobes and
    the cavity linewidth on (-W, W); W doubles from
    50 max(kappa_tot, angular bandwidth) until the relative change is
    below 1e-9.
    """
    bw = 1.0 / spec.duration if spec.shape == "boxcar" else spec.bandwidth
    omega_max = 50.0 * max(p.kappa_tot, 2.0 * np.pi * bw) + abs(spec.center_omega)

    def integrate(omega_hi):
        edges = _panel_edges(p, spec, omega_hi)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        nodes = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
        wts = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
        n_spec, m_spec = output_spectra(p, nodes)
        fw = _filter_weight(spec, nodes)
        return float(np.dot(wts, n_spec * fw)), complex(np.dot(wts, m_spec * fw))

    n_prev, m_prev = integrate(omega_max)
    for _ in range(8):
        omega_max *= 2.0
        n_new, m_new = integrate(omega_max)
        scale = max(abs(n_new), abs(m_new), 1e-300)
        if abs(n_new - n_prev) / scale < 1e-9 and abs(m_new - m_prev) / scale < 1e-9:
            return n_new, m_new
        n_prev, m_prev = n_new, m_new
    raise RuntimeError("filtered-moment quadrature did not converge")


def narrowband_squeezing(omega0: float, lambda_abs: float, kappa: float) -> float:
    """Squeezing level of a delta filter at offset omega0 (lossless, resonant).

    S_f(w0) = 1 + 2 kappa |lambda| / ((kappa/2 - |lambda|)^2 + w0^2);
    finite even at threshold for w0 != 0, where it reaches 1 + kappa^2/w0^2.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    return 1.0 + 2.0 * kappa * lambda_abs / ((0.5 * kappa - lambda_abs) ** 2
                                             + omega0 ** 2)


def squeezing_level_from_moments(N_f: float, M_f: complex) -> float:
    """Vacuum variance over the minimal filtered quadrature variance."""
    den = N_f + 0.5 - abs(M_f)
    if den <= 0:
        raise ValueError(f"unphysical moments: minimal variance {den}")
    return 0.5 / den
