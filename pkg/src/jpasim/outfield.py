"""Filtered output-field moments via the quantum regression theorem.

The measured mode is D = integral f(-t) a_out(t) dt with a real filter f
normalized to integral |f|^2 dt = 1, so [D, D^dag] = 1.  Its normally
ordered moments <(D^dag)^n D^m> are nested time integrals of multi-time
output correlators; for vacuum inputs these reduce to kappa^{(n+m)/2}
times intracavity correlators once the operators are arranged
canonically (creation times increasing left to right, annihilation times
decreasing).  Each canonical correlator is evaluated by propagating an
operator-conditioned kernel with the Liouvillian: chronologically, an
annihilation operator multiplies the kernel from the left and a creation
operator from the right, and the latest operator closes the trace.

The k-fold filter integrals are decomposed over time orderings.  With
gaps g_1..g_{k-1} >= 0 between consecutive event times, the filter
factors reduce to an analytic overlap kernel W(g) (triangle-type for the
boxcar, Gaussian for the Gaussian filter), and each ordering contributes

    n! m! * integral dg W(g) * C_branch(g)

summed over the C(k, n) assignments of creation operators to time ranks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm as dense_expm

from .fock import annihilation, expectation
from .lindblad import Liouvillian, build_liouvillian, steady_state, propagate_trajectory
from .models import JpaModel, build_hamiltonian

__all__ = [
    "FilterSpec",
    "FilterKernel",
    "filter_kernel",
    "OutfieldSolver",
    "multitime_correlator",
    "filtered_moment",
    "moment_set",
    "MomentSet",
    "squeezing_level",
    "cumulants",
    "output_spectrum_numeric",
    "InsufficientDecayError",
    "UnderResolvedGridError",
]

_SQRT2PI = math.sqrt(2.0 * math.pi)


class InsufficientDecayError(ValueError):
    """Time grid does not cover the correlator decay."""


class UnderResolvedGridError(ValueError):
    """Grid does not resolve the filter duration/bandwidth."""


@dataclass(frozen=True)
class FilterSpec:
    """Temporal filter: boxcar of given duration or Gaussian of given bandwidth.

    ``duration`` is the boxcar length (time units of 1/kappa); the
    Gaussian ``bandwidth`` is the equivalent-noise bandwidth in ordinary
    frequency (1/time units), defined as
    [integral |f[w]|^2 dw/2pi] / |f[0]|^2.  A boxcar of duration T has
    effective bandwidth 1/T.  Optional grid overrides: time step ``dt``
    and span ``span`` used by the moment integrator.
    """

    shape: str
    duration: float | None = None
    bandwidth: float | None = None
    dt: float | None = None
    span: float | None = None
    center_omega: float = 0.0

    def __post_init__(self):
        if self.shape not in ("boxcar", "gaussian"):
            raise ValueError(f"unknown filter shape {self.shape!r}")
        if self.shape == "boxcar" and not self.duration:
            raise ValueError("boxcar filter requires a duration")
        if self.shape == "gaussian" and not self.bandwidth:
            raise ValueError("gaussian filter requires a bandwidth")

    @staticmethod
    def boxcar(duration: float, **kw) -> "FilterSpec":
        return FilterSpec("boxcar", duration=duration, **kw)

    @staticmethod
    def gaussian(bandwidth: float, **kw) -> "FilterSpec":
        return FilterSpec("gaussian", bandwidth=bandwidth, **kw)

    @property
    def effective_bandwidth(self) -> float:
        if self.shape == "boxcar":
            return 1.0 / self.duration
        return self.bandwidth

    @property
    def sigma_t(self) -> float:
        """Gaussian kernel time width; f(t) ~ exp(-t^2 / 4 sigma_t^2)."""
        if self.shape != "gaussian":
            raise ValueError("sigma_t applies to gaussian filters")
        return 1.0 / (2.0 * _SQRT2PI * self.bandwidth)

    @property
    def support(self) -> float:
        """Time span beyond which kernel overlaps are negligible (exact for boxcar)."""
        return self.duration if self.shape == "boxcar" else 12.0 * self.sigma_t

    def time_profile(self, t: np.ndarray) -> np.ndarray:
        """f(t): unit-power boxcar on [0, duration) or centered Gaussian."""
        t = np.asarray(t, dtype=float)
        if self.shape == "boxcar":
            return np.where((t >= 0) & (t < self.duration),
                            1.0 / math.sqrt(self.duration), 0.0)
        s = self.sigma_t
        return (2.0 * math.pi * s * s) ** (-0.25) * np.exp(-t * t / (4.0 * s * s))

    def mean_weight(self) -> float:
        """integral f(t) dt, the weight of a static mean in <D>."""
        if self.shape == "boxcar":
            return math.sqrt(self.duration)
        return (8.0 * math.pi * self.sigma_t ** 2) ** 0.25

    def overlap_kernel(self, cum: list[np.ndarray]) -> np.ndarray:
        """W(g) = integral dt prod_j f(-t - U_j) for cumulative gap sums U.

        ``cum`` lists the broadcastable cumulative times U_1..U_{k-1}
        (U_0 = 0 implicit).  Boxcar: T^{-k/2} (T - U_max)_+ for ordered
        gaps; Gaussian: closed form of the product-Gaussian integral.
        """
        k = len(cum) + 1
        if self.shape == "boxcar":
            T = self.duration
            total = cum[-1]
            return T ** (-k / 2.0) * np.maximum(0.0, T - total)
        s2 = self.sigma_t ** 2
        usum = sum(cum)
        usq = sum(u * u for u in cum)
        quad = usq - (usum * usum) / k
        pref = (2.0 * math.pi * s2) ** (-k / 4.0) * math.sqrt(4.0 * math.pi * s2 / k)
        return pref * np.exp(-quad / (4.0 * s2))

    def spectral_weight(self, omega) -> np.ndarray:
        """|f[w]|^2 / 2pi; integrates to one over angular frequency."""
        w = np.asarray(omega, dtype=float) - self.center_omega
        if self.shape == "boxcar":
            T = self.duration
            return T * np.sinc(0.5 * w * T / math.pi) ** 2 / (2.0 * math.pi)
        sig_w2 = 2.0 * math.pi * self.bandwidth ** 2
        return np.exp(-w * w / (2.0 * sig_w2)) / (self.bandwidth * 2.0 * math.pi)

    def to_dict(self) -> dict:
        return {"shape": self.shape, "duration": self.duration,
                "bandwidth": self.bandwidth, "center_omega": self.center_omega}


@dataclass(frozen=True)
class FilterKernel:
    """Discretized filter: time grid, samples, and spectral samples."""

    spec: FilterSpec
    t: np.ndarray
    f: np.ndarray
    omega: np.ndarray
    f_abs2_over_2pi: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.trapezoid(self.f ** 2, self.t))

    @property
    def effective_bandwidth(self) -> float:
        return self.spec.effective_bandwidth


def filter_kernel(spec: FilterSpec, dt: float | None = None,
                  n_min: int = 32) -> FilterKernel:
    """Sample the filter on a uniform grid and renormalize to unit power.

    The grid must resolve the duration/bandwidth by at least ``n_min``
    points, else UnderResolvedGridError.  After discretization the
    samples are rescaled so the trapezoid of |f|^2 is one to 1e-10.
    """
    width = spec.duration if spec.shape == "boxcar" else 8.0 * spec.sigma_t
    step = dt if dt is not None else spec.dt
    if step is None:
        step = width / 256.0
    if width / step < n_min:
        raise UnderResolvedGridError(
            f"step {step} resolves the filter by fewer than {n_min} points")
    if spec.shape == "boxcar":
        t = np.arange(0.0, spec.duration + step / 2, step)
    else:
        half = 6.0 * spec.sigma_t
        t = np.arange(-half, half + step / 2, step)
    f = spec.time_profile(t)
    norm = np.trapezoid(f ** 2, t)
    f = f / math.sqrt(norm)
    omega = np.linspace(-20.0 / width, 20.0 / width, 2001) * 2.0 * math.pi \
        + spec.center_omega
    return FilterKernel(spec=spec, t=t, f=f, omega=omega,
                        f_abs2_over_2pi=spec.spectral_weight(omega))


def _mult_superops(a: np.ndarray):
    """Row-major vec superoperators: left-multiply by a, right-multiply by a^dag."""
    dim = a.shape[0]
    eye = np.eye(dim)
    left_a = np.kron(a, eye)
    right_adag = np.kron(eye, a.conj())
    return left_a, right_adag


class OutfieldSolver:
    """Regression machinery bound to one (model, dim) pair.

    Caches the Liouvillian, steady state and, when k >= 3 moments are
    requested, the dense single-step propagator used by the nested
    integrator.
    """

    MAX_NESTED_DIM = 36

    def __init__(self, model: JpaModel, dim: int):
        self.model = model
        self.dim = dim
        self.h = build_hamiltonian(model, dim)
        self.a = annihilation(dim).matrix
        self.liou = build_liouvillian(self.h, [(self.a, model.kappa_tot)])
        self.rho = steady_state(self.liou)
        self.mean_a = expectation(self.a, self.rho)
        self._left_a, self._right_adag = _mult_superops(self.a)
        self._prop_cache: dict[float, np.ndarray] = {}

    # -- grid policy ----------------------------------------------------

    def decay_rate(self) -> float:
        """Estimated slowest correlator decay: threshold margin of the quadratic part."""
        kt = self.model.kappa_tot
        margin = 0.5 * kt - abs(self.model.lambda_eff)
        return max(margin, 0.02 * kt)

    def gap_grid(self, spec: FilterSpec, order: int) -> np.ndarray:
        kt = self.model.kappa_tot
        span = spec.span if spec.span is not None else min(
            spec.support, 40.0 / self.decay_rate())
        step = spec.dt if spec.dt is not None else min(
            1.0 / (20.0 * kt), spec.support / 64.0)
        n = int(math.ceil(span / step)) + 1
        cap = 4096 if order <= 2 else 96
        n = min(n, cap)
        if n < 16:
            raise UnderResolvedGridError("fewer than 16 quadrature points per axis")
        return np.linspace(0.0, span, n)

    # -- kernel propagation ---------------------------------------------

    def _one_step_propagator(self, h: float) -> np.ndarray:
        key = round(h, 15)
        if key not in self._prop_cache:
            if self.dim > self.MAX_NESTED_DIM:
                raise MemoryError(
                    f"nested moments limited to dim <= {self.MAX_NESTED_DIM}")
            self._prop_cache[key] = dense_expm(self.liou.dense() * h)
        return self._prop_cache[key]

    def _branch_grid_k2(self, dagger_ranks: tuple[int, ...], g: np.ndarray,
                        centered: bool) -> np.ndarray:
        """Two-operator branch values on the gap grid via exact trajectories."""
        k0, closing = self._branch_endpoints(dagger_ranks, 2, centered)
        traj = propagate_trajectory(self.liou, k0.reshape(-1), g)
        return traj @ closing

    def _branch_grid_nested(self, dagger_ranks: tuple[int, ...], k: int,
                            g: np.ndarray, centered: bool) -> np.ndarray:
        """k >= 3 branch values on the uniform tensor gap grid.

        Returns an array of shape (n,) * (k - 1), axes ordered
        (g_{k-1}, ..., g_1).
        """
        n = len(g)
        h = g[1] - g[0]
        P = self._one_step_propagator(h)
        k0, closing = self._branch_endpoints(dagger_ranks, k, centered)
        ops = self._rank_ops(dagger_ranks, k, centered)

        X = k0.reshape(-1)[:, None]                     # (n2, 1)
        for j in range(1, k - 1):
            n2, rest = X.shape
            out = np.empty((n2, n, rest), dtype=complex)
            out[:, 0, :] = X
            cur = X
            for i in range(1, n):
                cur = P @ cur
                out[:, i, :] = cur
            X = ops[j] @ out.reshape(n2, n * rest)      # apply op at rank j
        # closing row propagated backwards: rows[i] = closing^T P^i
        rows = np.empty((n, X.shape[0]), dtype=complex)
        r = closing.copy()
        rows[0] = r
        for i in range(1, n):
            r = r @ P
            rows[i] = r
        val = rows @ X                                  # (n, n^{k-2})
        return val.reshape((n,) * (k - 1))

    def _rank_ops(self, dagger_ranks, k, centered):
        """Vectorized multiplication superoperator for each time rank."""
        if centered:
            left, right = _mult_superops(self.a - self.mean_a * np.eye(self.dim))
        else:
            left, right = self._left_a, self._right_adag
        return [right if r in dagger_ranks else left for r in range(k)]

    def _branch_endpoints(self, dagger_ranks, k, centered):
        """Initial kernel (rank-0 op applied to rho) and closing row (rank k-1)."""
        a = self.a - self.mean_a * np.eye(self.dim) if centered else self.a
        ad = a.conj().T
        rho = self.rho.matrix
        k0 = rho @ ad if 0 in dagger_ranks else a @ rho
        last = ad if (k - 1) in dagger_ranks else a
        # the final operator closes the trace: tr(op K) = vec(op^T) . vec(K)
        closing = last.T.reshape(-1)
        return k0, closing

    # -- public computations ----------------------------------------------

    def correlator(self, ops: str, times) -> complex | np.ndarray:
        """Normally ordered output-field correlator at explicit times.

        ``ops`` is a whitespace-separated string of 'ad' and 'a' tokens,
        all 'ad' first (normal order); ``times`` is a length-k sequence
        or an (n_eval, k) array.  Output operators at distinct times
        commute, so the value is independent of the written time order;
        it equals kappa^{k/2} times the canonical intracavity correlator.
        """
        tokens = ops.split()
        if any(t not in ("a", "ad") for t in tokens):
            raise ValueError(f"bad operator string {ops!r}")
        n_dag = sum(t == "ad" for t in tokens)
        if tokens[:n_dag] != ["ad"] * n_dag:
            raise ValueError("operator string must be normally ordered (ad first)")
        k = len(tokens)
        arr = np.atleast_2d(np.asarray(times, dtype=float))
        if arr.shape[1] != k:
            raise ValueError(f"times must have {k} entries per evaluation")
        out = np.array([self._correlator_single(n_dag, k, row) for row in arr])
        return out[0] if np.asarray(times).ndim == 1 else out

    def _correlator_single(self, n_dag: int, k: int, times: np.ndarray) -> complex:
        dag_times = np.sort(times[:n_dag])
        a_times = np.sort(times[n_dag:])[::-1]
        events = [(t, "ad") for t in dag_times] + [(t, "a") for t in a_times]
        events.sort(key=lambda e: e[0])
        ad = self.a.conj().T
        kern = self.rho.matrix
        t_prev = events[0][0]
        for idx, (t, typ) in enumerate(events):
            if t > t_prev:
                vec = propagate_trajectory(
                    self.liou, kern.reshape(-1), np.array([0.0, t - t_prev]))[-1]
                kern = vec.reshape(self.dim, self.dim)
                t_prev = t
            if idx == len(events) - 1:
                op = ad if typ == "ad" else self.a
                return complex(np.trace(op @ kern)) * self.model.kappa ** (k / 2.0)
            kern = kern @ ad if typ == "ad" else self.a @ kern
        raise AssertionError("unreachable")

    def filtered_moment(self, spec: FilterSpec, n_dag: int, m: int,
                        centered: bool = False) -> complex:
        """<(D^dag)^n D^m> for the kappa-port output filtered by ``spec``."""
        if spec.center_omega != 0.0:
            raise ValueError("time-domain moments require a real (centered) filter")
        k = n_dag + m
        if k == 0:
            return 1.0 + 0.0j
        if k > 4:
            raise ValueError("moments above total order 4 are not supported")
        kap = self.model.kappa
        if k == 1:
            mean = self.mean_a if m == 1 else np.conj(self.mean_a)
            if centered:
                mean = 0.0
            return math.sqrt(kap) * mean * spec.mean_weight()
        g = self.gap_grid(spec, k)
        mult = math.factorial(n_dag) * math.factorial(m)
        total = 0.0 + 0.0j
        for ranks in _combinations(k, n_dag):
            if k == 2:
                vals = self._branch_grid_k2(ranks, g, centered)
                cum = [g]
                w = spec.overlap_kernel(cum)
                total += mult * np.trapezoid(w * vals, g)
            else:
                vals = self._branch_grid_nested(ranks, k, g, centered)
                # axes of vals: (g_{k-1}, ..., g_1)
                shapes = []
                for j in range(k - 1):
                    sh = [1] * (k - 1)
                    sh[k - 2 - j] = len(g)
                    shapes.append(g.reshape(sh))
                cum = []
                run = 0.0
                for j in range(k - 1):
                    run = run + shapes[j]
                    cum.append(run)
                w = spec.overlap_kernel(cum)
                integrand = w * vals
                for _ in range(k - 1):
                    integrand = np.trapezoid(integrand, g, axis=-1)
                total += mult * integrand
        return complex(kap ** (k / 2.0) * total)

    def quadrature_norm(self, spec: FilterSpec) -> float:
        """Discretized integral |f|^2 dt at the integrator's step (for [D, D^dag])."""
        g = self.gap_grid(spec, 2)
        step = g[1] - g[0]
        if spec.shape == "boxcar":
            t = np.arange(0.0, spec.duration + step / 2, step)
        else:
            t = np.arange(-6 * spec.sigma_t, 6 * spec.sigma_t + step / 2, step)
        f = spec.time_profile(t)
        return float(np.trapezoid(f * f, t))


def _combinations(k: int, n: int):
    from itertools import combinations as comb
    return [tuple(c) for c in comb(range(k), n)]


def multitime_correlator(model: JpaModel, ops: str, times, dim: int):
    """Convenience wrapper: see OutfieldSolver.correlator."""
    return OutfieldSolver(model, dim).correlator(ops, times)


def filtered_moment(model: JpaModel, spec: FilterSpec, n_dag: int, m: int,
                    dim: int) -> complex:
    return OutfieldSolver(model, dim).filtered_moment(spec, n_dag, m)


def squeezing_level(N_f: float, M_f: complex, mean_D: complex = 0.0) -> float:
    """S_f = (1/2) / (N_c + 1/2 - |M_c|) with moments centered by mean_D."""
    N_c = N_f - abs(mean_D) ** 2
    M_c = M_f - mean_D ** 2
    den = N_c + 0.5 - abs(M_c)
    if den <= 0:
        raise ValueError(f"unphysical moments: minimal variance {den}")
    return 0.5 / den


def _set_partitions(items: list):
    """All partitions of a list of hashable labels (Bell-number many)."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def cumulants(moments: dict, max_order: int = 4) -> dict:
    """Normally ordered cumulants <<(D^dag)^n D^m>> from the moment map.

    Standard multivariate moment-to-cumulant inversion treating (D^dag, D)
    as a pair of formal variables in normal order:
    <<S>> = sum over partitions of (-1)^{p-1} (p-1)! prod of block moments.
    For a Gaussian state all cumulants of order >= 3 vanish.
    """
    out = {}
    for (n, m), _ in sorted(moments.items()):
        order = n + m
        if order < 1 or order > max_order:
            continue
        labels = [("d", i) for i in range(n)] + [("a", i) for i in range(m)]
        total = 0.0 + 0.0j
        for part in _set_partitions(labels):
            term = (-1.0) ** (len(part) - 1) * math.factorial(len(part) - 1)
            for block in part:
                nd = sum(1 for lbl in block if lbl[0] == "d")
                ma = len(block) - nd
                term *= moments[(nd, ma)]
            total += term
        out[(n, m)] = complex(total)
    return out


@dataclass(frozen=True)
class MomentSet:
    """Filtered-field moments to total order <= 4 plus derived quantities."""

    spec: FilterSpec
    moments: dict
    cumulants: dict
    mean: complex
    N_f: float
    M_f: complex
    squeezing: float
    squeezing_db: float
    commutator_check: float
    max_order: int

    def moment(self, n_dag: int, m: int) -> complex:
        return self.moments[(n_dag, m)]

    def cumulant(self, n_dag: int, m: int) -> complex:
        return self.cumulants[(n_dag, m)]

    def to_json_dict(self) -> dict:
        def cplx(z):
            return [float(np.real(z)), float(np.imag(z))]
        return {
            "filter": self.spec.to_dict(),
            "moments": {f"{n},{m}": cplx(v) for (n, m), v in sorted(self.moments.items())},
            "cumulants": {f"{n},{m}": cplx(v) for (n, m), v in sorted(self.cumulants.items())},
            "mean": cplx(self.mean),
            "N_f": self.N_f,
            "M_f": cplx(self.M_f),
            "squeezing": self.squeezing,
            "squeezing_db": self.squeezing_db,
            "commutator_check": self.commutator_check,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def moment_set(model: JpaModel, spec: FilterSpec, dim: int, max_order: int = 2,
               assume_parity: bool | None = None,
               solver: OutfieldSolver | None = None) -> MomentSet:
    """All filtered moments with n + m <= max_order and derived quantities.

    Conjugate pairs are filled by symmetry <(D^dag)^n D^m> =
    conj(<(D^dag)^m D^n>).  When the model Hamiltonian commutes with
    photon-number parity, odd moments vanish identically and are skipped
    unless ``assume_parity=False`` forces their computation.
    """
    if max_order > 4:
        raise ValueError("moments above total order 4 are not supported")
    sol = solver if solver is not None else OutfieldSolver(model, dim)
    parity = model.parity_symmetric if assume_parity is None else assume_parity
    moments: dict = {(0, 0): 1.0 + 0.0j}
    for order in range(1, max_order + 1):
        for n in range(order + 1):
            m = order - n
            if n > m:
                continue
            if parity and order % 2 == 1:
                moments[(n, m)] = 0.0 + 0.0j
            else:
                moments[(n, m)] = sol.filtered_moment(spec, n, m)
        for n in range(order + 1):
            m = order - n
            if n > m:
                moments[(n, m)] = np.conj(moments[(m, n)])
    mean = moments.get((0, 1), 0.0 + 0.0j)
    N_f = float(np.real(moments[(1, 1)])) - abs(mean) ** 2
    M_f = moments[(0, 2)] - mean ** 2
    cums = cumulants(moments, max_order=max_order)
    sq = squeezing_level(float(np.real(moments[(1, 1)])), moments[(0, 2)], mean)
    commut = sol.quadrature_norm(spec)
    return MomentSet(spec=spec, moments=moments, cumulants=cums, mean=mean,
                     N_f=N_f, M_f=M_f, squeezing=sq,
                     squeezing_db=10.0 * math.log10(sq),
                     commutator_check=commut, max_order=max_order)


def output_spectrum_numeric(model: JpaModel, omega_grid, dim: int,
                            span: float | None = None,
                            dt: float | None = None) -> np.ndarray:
    """Output photon spectrum n_out[w] from the two-time regression correlator.

    n_out[w] = kappa * 2 Re integral_0^inf e^{i w tau} <da^dag(tau) da(0)> dtau
    on a uniform tau grid (trapezoid), with da the mean-subtracted field.
    """
    sol = OutfieldSolver(model, dim)
    kt = model.kappa_tot
    span = span if span is not None else max(15.0 / kt, 40.0 / sol.decay_rate())
    if span < 10.0 / kt:
        raise InsufficientDecayError(f"span {span} < 10/kappa_tot")
    step = dt if dt is not None else 1.0 / (20.0 * kt)
    n = min(int(math.ceil(span / step)) + 1, 20001)
    tau = np.linspace(0.0, span, n)
    da = sol.a - sol.mean_a * np.eye(dim)
    k0 = (da @ sol.rho.matrix).reshape(-1)
    traj = propagate_trajectory(sol.liou, k0, tau)
    closing = da.conj().reshape(-1)  # vec((da^dag)^T): tr(da^dag K)
    corr = traj @ closing
    w = np.atleast_1d(np.asarray(omega_grid, dtype=float))
    phase = np.exp(1j * np.outer(w, tau))
    integ = np.trapezoid(phase * corr[None, :], tau, axis=1)
    return model.kappa * 2.0 * np.real(integ)
