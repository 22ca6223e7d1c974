"""Synthetic homodyne histograms and single-path moment reconstruction.

The measurement-chain model: the digitized complex quadrature is
S = sqrt(G_c) (a + h^dag) with a the signal mode, h an effective noise
mode (thermal, occupancy n_h) and G_c the photon-number power gain of
the chain.  S is a normal operator, so its samples have classical
moments

    <S^dag^n S^m> = G_c^{(n+m)/2} sum_{i,j} C(n,i) C(m,j)
                    <a^dag^i a^j> <h^{n-i} h^dag^{m-j}>,

normally ordered in the signal and antinormally in the noise.  Pump-off
histograms (vacuum signal) isolate the noise moments; the pump-on
histogram is then solved order by order for the signal moments.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from math import comb

import numpy as np

from .outfield import cumulants as _cumulants_from_moments

__all__ = [
    "GaussianSignal",
    "HomodyneHistogram",
    "ReconstructedMoments",
    "synthesize_homodyne",
    "single_path_reconstruct",
    "histogram_cumulants",
    "thermal_antinormal_moments",
]

_MAGIC = b"JPAH"


@dataclass(frozen=True)
class GaussianSignal:
    """Gaussian signal mode: mean alpha0 and centered moments (N, M)."""

    N: float
    M: complex
    mean: complex = 0.0 + 0.0j

    def __post_init__(self):
        if self.N < 0:
            raise ValueError("N must be nonnegative")
        if abs(self.M) > math.sqrt(self.N * (self.N + 1.0)) + 1e-12:
            raise ValueError("moments violate |M| <= sqrt(N(N+1))")

    def normal_moments(self, max_order: int = 4) -> dict:
        """Normally ordered signal moments <a^dag^i a^j> to total order 4.

        Wick expansion of the displaced Gaussian with contractions
        <da^dag da> = N and <da da> = M.
        """
        out = {}
        for i in range(max_order + 1):
            for j in range(max_order + 1 - i):
                out[(i, j)] = self._moment(i, j)
        return out

    def _moment(self, i: int, j: int) -> complex:
        labels = ["d"] * i + ["a"] * j
        return _gaussian_normal_moment(labels, self.mean, self.N, self.M)


def _gaussian_normal_moment(labels, mean, N, M) -> complex:
    """<prod labels> for a Gaussian mode; 'd' is a^dag, 'a' is a (normal order)."""
    if not labels:
        return 1.0 + 0.0j
    contract = {("d", "d"): np.conj(M), ("a", "a"): M,
                ("d", "a"): N, ("a", "d"): N}
    means = {"d": np.conj(mean), "a": mean}

    def rec(items):
        if not items:
            return 1.0 + 0.0j
        head, rest = items[0], items[1:]
        total = means[head[0]] * rec(rest)
        for idx in range(len(rest)):
            pair = contract[(head[0], rest[idx][0])]
            if pair != 0:
                total += pair * rec(rest[:idx] + rest[idx + 1:])
        return total

    return complex(rec([(lbl, k) for k, lbl in enumerate(labels)]))


def thermal_antinormal_moments(n_h: float, max_order: int = 4) -> dict:
    """Antinormal noise moments <h^n h^dag^m> of a thermal mode.

    Diagonal in (n, m): <h^n h^dag^n> = n! (n_h + 1)^n; zero otherwise.
    """
    out = {}
    for n in range(max_order + 1):
        for m in range(max_order + 1 - n):
            out[(n, m)] = float(math.factorial(n)) * (n_h + 1.0) ** n \
                if n == m else 0.0
    return out


@dataclass(frozen=True)
class HomodyneHistogram:
    """2-D counts over the complex quadrature plane S = (V_X + i V_P)/sqrt(2).

    ``counts[i, j]`` bins V_X in row i, V_P in column j; bin centers are
    midpoints of the uniform grid.
    """

    v_min: float
    v_max: float
    n_bins: int
    counts: np.ndarray
    n_samples: int
    gain_chain: float

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.shape != (self.n_bins, self.n_bins):
            raise ValueError("counts shape does not match n_bins")
        if int(counts.sum()) != self.n_samples:
            raise ValueError("counts do not sum to n_samples")

    @property
    def bin_centers(self) -> np.ndarray:
        edges = np.linspace(self.v_min, self.v_max, self.n_bins + 1)
        return 0.5 * (edges[:-1] + edges[1:])

    def moments(self, max_order: int = 4) -> dict:
        """Histogram moments <S^dag^n S^m>, midpoint rule (no binning correction)."""
        c = self.bin_centers
        s = (c[:, None] + 1j * c[None, :]) / math.sqrt(2.0)
        w = self.counts / self.n_samples
        out = {}
        for n in range(max_order + 1):
            for m in range(max_order + 1 - n):
                out[(n, m)] = complex(np.sum(w * np.conj(s) ** n * s ** m))
        return out

    # -- binary container -------------------------------------------------

    def to_bytes(self) -> bytes:
        head = struct.pack("<4sIddQd", _MAGIC, self.n_bins, self.v_min,
                           self.v_max, self.n_samples, self.gain_chain)
        return head + np.ascontiguousarray(self.counts, dtype="<u8").tobytes()

    @staticmethod
    def from_bytes(blob: bytes) -> "HomodyneHistogram":
        head_size = struct.calcsize("<4sIddQd")
        magic, n_bins, v_min, v_max, n_samples, gain = struct.unpack(
            "<4sIddQd", blob[:head_size])
        if magic != _MAGIC:
            raise ValueError("not a homodyne histogram blob")
        counts = np.frombuffer(blob[head_size:], dtype="<u8").reshape(n_bins, n_bins)
        return HomodyneHistogram(v_min, v_max, n_bins, counts.astype(np.uint64),
                                 int(n_samples), gain)

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @staticmethod
    def load(path: str) -> "HomodyneHistogram":
        with open(path, "rb") as fh:
            return HomodyneHistogram.from_bytes(fh.read())

    def to_csv(self, path_or_buf) -> None:
        own = isinstance(path_or_buf, (str, bytes))
        fh = open(path_or_buf, "w", encoding="utf-8") if own else path_or_buf
        try:
            fh.write(f"# n_samples = {self.n_samples}\n")
            fh.write(f"# gain_chain = {self.gain_chain:.12g}\n")
            fh.write("v_x,v_p,count\n")
            c = self.bin_centers
            for i in range(self.n_bins):
                for j in range(self.n_bins):
                    fh.write(f"{c[i]:.12g},{c[j]:.12g},{int(self.counts[i, j])}\n")
        finally:
            if own:
                fh.close()


def _sample_gaussian_quadratures(rng, signal: GaussianSignal, n_h: float,
                                 n: int) -> np.ndarray:
    """Measured (V_X, V_P) samples of a + h^dag before chain gain.

    The sampled distribution is the convolution of the signal Husimi
    function with the thermal noise: Gaussian with quadrature covariance
    sigma_sym(signal) + (n_h + 1/2) I.
    """
    sxx = 0.5 + signal.N + signal.M.real
    spp = 0.5 + signal.N - signal.M.real
    sxp = signal.M.imag
    cov = np.array([[sxx, sxp], [sxp, spp]]) + (n_h + 0.5) * np.eye(2)
    mean = np.array([math.sqrt(2.0) * signal.mean.real,
                     math.sqrt(2.0) * signal.mean.imag])
    chol = np.linalg.cholesky(cov)
    z = rng.standard_normal((n, 2))
    return mean + z @ chol.T


def _sample_q_function(rng, q_sampler, n_h: float, n: int) -> np.ndarray:
    """Samples from a user-supplied Husimi sampler plus thermal noise."""
    vx, vp = q_sampler(rng, n)
    noise = rng.standard_normal((n, 2)) * math.sqrt(max(n_h, 0.0))
    return np.column_stack([vx, vp]) + noise


def synthesize_homodyne(signal: GaussianSignal | None, n_h: float, gain_chain: float,
                        n_samples: int, seed: int, n_bins: int = 256,
                        v_max: float | None = None, q_sampler=None,
                        chunk: int = 1_000_000) -> tuple[HomodyneHistogram, HomodyneHistogram]:
    """Pump-on and pump-off histograms of the measurement chain output.

    The signal is either a GaussianSignal or a custom Husimi sampler
    ``q_sampler(rng, n) -> (V_X, V_P)`` for non-Gaussian states; pump-off
    replaces the signal by vacuum.  Sampling is chunked with one
    counter-based Philox stream per chunk, so histograms are
    reproducible for a fixed seed regardless of chunking.
    """
    if signal is None and q_sampler is None:
        raise ValueError("provide a GaussianSignal or a q_sampler")
    root = math.sqrt(gain_chain)
    if v_max is None:
        n_sig = signal.N if signal is not None else 4.0
        spread = math.sqrt(max(1.0 + n_sig + abs(signal.M if signal else 0.0),
                               1.0) + n_h + 0.5)
        center = abs(signal.mean) if signal is not None else 0.0
        v_max = root * (6.0 * spread + math.sqrt(2.0) * center)
    vacuum = GaussianSignal(0.0, 0.0)

    def run(which: str, stream: int) -> HomodyneHistogram:
        edges = np.linspace(-v_max, v_max, n_bins + 1)
        counts = np.zeros((n_bins, n_bins), dtype=np.uint64)
        done = 0
        chunk_idx = 0
        while done < n_samples:
            take = min(chunk, n_samples - done)
            rng = np.random.Generator(np.random.Philox(key=seed,
                                                       counter=[stream, chunk_idx, 0, 0]))
            if which == "on" and q_sampler is not None:
                vxp = _sample_q_function(rng, q_sampler, n_h, take)
            else:
                src = signal if which == "on" else vacuum
                vxp = _sample_gaussian_quadratures(rng, src, n_h, take)
            vxp = vxp * root
            hist, _, _ = np.histogram2d(
                np.clip(vxp[:, 0], -v_max, v_max * (1 - 1e-12)),
                np.clip(vxp[:, 1], -v_max, v_max * (1 - 1e-12)),
                bins=[edges, edges])
            counts += hist.astype(np.uint64)
            done += take
            chunk_idx += 1
        return HomodyneHistogram(-v_max, v_max, n_bins, counts, n_samples,
                                 gain_chain)

    return run("on", 1), run("off", 2)


@dataclass(frozen=True)
class ReconstructedMoments:
    """Signal moments to order 4 with bootstrap standard errors."""

    moments: dict
    errors: dict
    noise_moments: dict
    gain_chain: float
    n_samples: int

    def moment(self, n: int, m: int) -> complex:
        return self.moments[(n, m)]

    def error(self, n: int, m: int) -> float:
        return self.errors[(n, m)]

    @property
    def N(self) -> float:
        return float(np.real(self.moments[(1, 1)])) - abs(self.moments[(0, 1)]) ** 2

    @property
    def M(self) -> complex:
        return self.moments[(0, 2)] - self.moments[(0, 1)] ** 2

    def squeezing_level(self) -> float:
        den = self.N + 0.5 - abs(self.M)
        if den <= 0:
            raise ValueError(f"unphysical reconstructed variance {den}")
        return 0.5 / den

    def to_json_dict(self) -> dict:
        def cplx(z):
            return [float(np.real(z)), float(np.imag(z))]
        return {
            "gain_chain": self.gain_chain,
            "n_samples": self.n_samples,
            "moments": {f"{n},{m}": cplx(v) for (n, m), v in sorted(self.moments.items())},
            "errors": {f"{n},{m}": float(v) for (n, m), v in sorted(self.errors.items())},
            "noise_moments": {f"{n},{m}": cplx(v) for (n, m), v
                              in sorted(self.noise_moments.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def _solve_signal_moments(on_moments: dict, noise: dict, gain_chain: float,
                          max_order: int) -> dict:
    """Order-by-order triangular solve of the signal-noise convolution."""
    sig = {(0, 0): 1.0 + 0.0j}
    for order in range(1, max_order + 1):
        for n in range(order + 1):
            m = order - n
            total = on_moments[(n, m)] / gain_chain ** ((n + m) / 2.0)
            for i in range(n + 1):
                for j in range(m + 1):
                    if (i, j) == (n, m):
                        continue
                    h = noise.get((n - i, m - j), 0.0)
                    if h == 0.0:
                        continue
                    total -= comb(n, i) * comb(m, j) * sig[(i, j)] * h
            sig[(n, m)] = total
    return sig


def _moment_basis(hist: HomodyneHistogram, max_order: int) -> dict:
    """Per-bin values of conj(S)^n S^m, flattened, for fast resampled moments."""
    c = hist.bin_centers
    s = ((c[:, None] + 1j * c[None, :]) / math.sqrt(2.0)).ravel()
    return {(n, m): np.conj(s) ** n * s ** m
            for n in range(max_order + 1) for m in range(max_order + 1 - n)}


def single_path_reconstruct(on: HomodyneHistogram, off: HomodyneHistogram,
                            gain_chain: float | None = None, max_order: int = 4,
                            n_bootstrap: int = 200, seed: int = 7) -> ReconstructedMoments:
    """Recover signal moments from pump-on/pump-off histograms.

    Noise moments come from the pump-off histogram (vacuum signal); the
    pump-on moments are then solved triangularly, order by order.  Errors
    are bootstrap standard deviations over multinomially resampled
    histograms; exploding high-order error bars are reported, never
    silently truncated.
    """
    if (on.v_min, on.v_max, on.n_bins) != (off.v_min, off.v_max, off.n_bins):
        raise ValueError("histograms must share the same grid")
    g = float(gain_chain) if gain_chain is not None else on.gain_chain
    if g <= 0:
        raise ValueError("chain gain must be positive")
    basis = _moment_basis(on, max_order)

    def moments_of(counts, n_samples):
        w = counts.ravel() / n_samples
        return {key: complex(vec @ w) for key, vec in basis.items()}

    def reconstruct(on_m, off_m):
        noise = {key: val / g ** ((key[0] + key[1]) / 2.0)
                 for key, val in off_m.items()}
        return _solve_signal_moments(on_m, noise, g, max_order), noise

    moments, noise = reconstruct(moments_of(on.counts, on.n_samples),
                                 moments_of(off.counts, off.n_samples))

    rng = np.random.default_rng(seed)
    samples: dict = {key: [] for key in moments}
    p_on = (on.counts / on.n_samples).ravel()
    p_off = (off.counts / off.n_samples).ravel()
    for _ in range(n_bootstrap):
        c_on = rng.multinomial(on.n_samples, p_on)
        c_off = rng.multinomial(off.n_samples, p_off)
        boot, _ = reconstruct(moments_of(c_on, on.n_samples),
                              moments_of(c_off, off.n_samples))
        for key, val in boot.items():
            samples[key].append(val)
    errors = {key: float(np.std(np.asarray(vals))) if vals else 0.0
              for key, vals in samples.items()}
    return ReconstructedMoments(moments=moments, errors=errors,
                                noise_moments=noise, gain_chain=g,
                                n_samples=on.n_samples)


def histogram_cumulants(rm: ReconstructedMoments, max_order: int = 4) -> dict:
    """Cumulants of the reconstructed signal moments (same recursion as outfield)."""
    return _cumulants_from_moments(rm.moments, max_order=max_order)
