"""Closed-form dynamics of the emitter-driven displaced oscillators.

Dropping the emitter splitting, each sigma_x eigenstate |+> or |-> drives
every cavity mode into a coherent state whose amplitude circles in phase
space. Everything here follows from the amplitudes

    beta_n(t) = beta_0/sqrt(n+1) * (exp(-i (n+1) omega_c t) - 1),  beta_0 = i g/omega_c,

with the |+> branch carrying -beta_n and the |-> branch +beta_n.
Field quantities are reported in units of hbar*g^2/(eps0*A*L*omega_c)
(intensities) or its square root (mean fields).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConvergenceError, ParameterError
from .model import ModelParams

EULER_GAMMA = 0.57721566490153286061


def mode_functions(x, M: int) -> np.ndarray:
    """cos(2*pi*x*(n+1)) for n = 0..M-1, shape (len(x), M)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return np.cos(2.0 * np.pi * np.outer(x, np.arange(1, M + 1)))


def _check_positions(x):
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 0.5 + 1e-12):
        raise ParameterError("positions must lie in [-1/2, 1/2] (units of L)")
    return x


def beta0(params: ModelParams) -> complex:
    return 1j * params.g / params.omega_c


def beta_n(t, n: int, params: ModelParams):
    if not 0 <= n < params.M:
        raise ParameterError(f"mode index {n} out of range for {params.M} modes")
    phase = np.exp(-1j * (n + 1) * params.omega_c * np.asarray(t, dtype=float))
    return beta0(params) / math.sqrt(n + 1) * (phase - 1.0)


def beta_all(t, params: ModelParams) -> np.ndarray:
    """Amplitudes of all modes, shape (len(t), M)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    k = np.arange(1, params.M + 1)
    return beta0(params) / np.sqrt(k) * (np.exp(-1j * params.omega_c * np.outer(t, k)) - 1.0)


def overlap_exponent(t, params: ModelParams):
    """S(t) = sum_n |beta_n(t)|^2, summed in order n = 0..M-1 in extended precision."""
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=np.longdouble))
    k = np.arange(1, params.M + 1, dtype=np.longdouble)
    terms = (2.0 / k) * (1.0 - np.cos(np.outer(t, k) * params.omega_c))
    acc = np.zeros(len(t), dtype=np.longdouble)
    for j in range(params.M):
        acc += terms[:, j]
    S = (np.longdouble(params.g) / params.omega_c) ** 2 * acc
    S = S.astype(float)
    return float(S[0]) if scalar else S


def overlap(t, params: ModelParams):
    return np.exp(-2.0 * np.asarray(overlap_exponent(t, params)))


def revival_probability(t, params: ModelParams):
    return np.exp(-np.asarray(overlap_exponent(t, params)))


def tls_population(t, params: ModelParams):
    return 0.5 * (1.0 + overlap(t, params))


@dataclass(frozen=True)
class CoherentSolution:
    """Evaluator bundle for the analytic solution at fixed parameters."""

    params: ModelParams

    @property
    def beta0(self) -> complex:
        return beta0(self.params)

    def beta(self, t, n: int):
        return beta_n(t, n, self.params)

    def exponent(self, t):
        return overlap_exponent(t, self.params)

    def overlap(self, t):
        return overlap(t, self.params)

    def revival(self, t):
        return revival_probability(t, self.params)

    def population(self, t):
        return tls_population(t, self.params)

    def field(self, x, t):
        return field_amplitude(x, t, self.params)

    def correlations(self, t):
        return coherent_correlations(t, self.params)


def steady_overlap(params: ModelParams) -> float:
    """Closed-form plateau overlap 1/[2 e^gamma M]^(4 g^2/omega_c^2)."""
    if params.M < 2:
        raise ParameterError("steady overlap needs at least 2 modes")
    expo = 4.0 * (params.g / params.omega_c) ** 2
    return float((2.0 * math.exp(EULER_GAMMA) * params.M) ** (-expo))


def steady_overlap_exact(params: ModelParams) -> float:
    """Overlap at mid-roundtrip t = pi/omega_c from the direct mode sum."""
    return float(overlap(math.pi / params.omega_c, params))


def decay_time(params: ModelParams, samples_per_roundtrip: int = 20000) -> float:
    """First time at which the overlap falls below (1 + O_mid)/2."""
    level = 0.5 * (1.0 + steady_overlap_exact(params))
    t = np.linspace(0.0, math.pi / params.omega_c, samples_per_roundtrip // 2 + 1)
    o = overlap(t, params)
    idx = int(np.argmax(o < level))
    if o[idx] >= level:
        return math.inf
    # linear interpolation between the bracketing samples
    t0, t1, o0, o1 = t[idx - 1], t[idx], o[idx - 1], o[idx]
    return float(t0 + (o0 - level) * (t1 - t0) / (o0 - o1))


def lambert_w(x: float, tol: float = 1e-12, max_iter: int = 100) -> float:
    """Principal branch of the Lambert W function for x >= 0 (Halley iteration)."""
    if x < 0:
        raise ParameterError("lambert_w is implemented for x >= 0 only")
    if x == 0:
        return 0.0
    w = math.log1p(x)
    for _ in range(max_iter):
        ew = math.exp(w)
        f = w * ew - x
        step = f / (ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0))
        w -= step
        if abs(step) <= tol * max(1.0, abs(w)):
            return w
    raise ConvergenceError(f"Halley iteration for W({x}) did not converge")


@dataclass(frozen=True)
class CriticalCoupling:
    M: int
    omega_x: float
    closed_form: float
    numerical: float

    @property
    def relative_difference(self) -> float:
        if self.numerical == 0:
            return abs(self.closed_form)
        return abs(self.closed_form - self.numerical) / self.numerical


def _bisect(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-13) -> float:
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < tol * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def critical_coupling(M: int, omega_x: float, omega_c: float = 1.0) -> CriticalCoupling:
    """Coupling at which g = omega_x * O_mid(g).

    ``closed_form`` uses the Lambert-W expression built on the plateau
    estimate; ``numerical`` bisects on the exact mid-roundtrip overlap.
    """
    if M < 2:
        raise ParameterError("critical coupling needs at least 2 modes")
    if omega_x < 0:
        raise ParameterError("omega_x must be >= 0")
    if omega_x == 0:
        return CriticalCoupling(M, omega_x, 0.0, 0.0)
    log_term = math.log(2.0 * math.exp(EULER_GAMMA) * M)
    closed = omega_c * math.sqrt(lambert_w(8.0 * omega_x ** 2 * log_term / omega_c ** 2) / (8.0 * log_term))

    k = np.arange(1, M + 1, dtype=float)
    odd_sum = math.fsum((2.0 / k) * (1.0 - np.cos(k * math.pi)))

    def f(g):
        return g - omega_x * math.exp(-2.0 * (g / omega_c) ** 2 * odd_sum)

    lo, hi = 1e-300, 10.0 * omega_c
    if not (f(lo) < 0 < f(hi)):
        raise ConvergenceError(f"critical coupling not bracketed in (0, {hi}] for M={M}, omega_x={omega_x}")
    return CriticalCoupling(M, omega_x, closed, _bisect(f, lo, hi))


def breakdown_conditions(params: ModelParams, factor: float = 10.0) -> dict:
    """Predicates for multi-mode physics: M*omega_c >> omega_x and omega_x*O_mid << g."""
    o_mid = steady_overlap_exact(params)
    return {
        "fast_decay": params.M * params.omega_c >= factor * params.omega_x,
        "small_overlap": factor * params.omega_x * o_mid <= params.g,
        "factor": factor,
    }


def _phases(t, params):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    k = np.arange(1, params.M + 1)
    return np.exp(-1j * params.omega_c * np.outer(t, k))


def _squeeze(arr, x, t):
    if np.ndim(t) == 0:
        arr = arr[0]
        if np.ndim(x) == 0:
            arr = arr[0]
    elif np.ndim(x) == 0:
        arr = arr[:, 0]
    return arr


@dataclass
class FieldComponents:
    total: np.ndarray
    bound: np.ndarray
    propagating: np.ndarray
    interference: np.ndarray


def field_components(x, t, params: ModelParams) -> FieldComponents:
    """Split the intensity into its static (bound) and time-dependent parts.

    The intensity is |sum_n f_n(x) (exp(-i(n+1) t) - 1)|^2 with
    f_n(x) = cos(2 pi x (n+1)). The constant term gives the bound cloud
    (sum_n f_n)^2, the pure exponential term the free wavefronts, and the
    remainder their interference. Arrays have shape (len(t), len(x)).
    """
    x = _check_positions(x)
    f = mode_functions(x, params.M)
    moving = _phases(t, params) @ f.T
    static = f.sum(axis=1)
    total = np.abs(moving - static[None, :]) ** 2
    bound = np.broadcast_to(static ** 2, total.shape).copy()
    propagating = np.abs(moving) ** 2
    interference = total - bound - propagating
    return FieldComponents(total, bound, propagating, interference)


def field_amplitude(x, t, params: ModelParams):
    """Normally ordered intensity <E^- E^+>(x, t) of the |e>|0> solution."""
    return _squeeze(field_components(x, t, params).total, x, t)


def bound_cloud(x, params: ModelParams) -> np.ndarray:
    """Time-independent part of the intensity, (sum_n cos(2 pi x (n+1)))^2."""
    x = _check_positions(x)
    return mode_functions(x, params.M).sum(axis=1) ** 2


def mean_field(x, t, branch: str, params: ModelParams):
    """<E^+>(x, t) for the emitter prepared in |+> or |->.

    The |+> branch carries the amplitudes -beta_n, so the result is
    -(omega_c/g) * sum_n sqrt(n+1) f_n(x) beta_n(t) = -i sum_n f_n(x)(e^{-i(n+1)t} - 1),
    and the |-> branch is its exact negation.
    """
    if branch not in ("+", "-"):
        raise ParameterError(f"branch must be '+' or '-', got {branch!r}")
    x = _check_positions(x)
    f = mode_functions(x, params.M)
    value = -1j * ((_phases(t, params) - 1.0) @ f.T)
    if branch == "-":
        value = -value
    return _squeeze(value, x, t)


def coherent_correlations(t, params: ModelParams) -> np.ndarray:
    """<a_n^dag a_m> = conj(beta_n) beta_m for |e>|0>, shape (len(t), M, M).

    Cross terms between the two branches vanish because <+|-> = 0.
    """
    b = beta_all(t, params)
    return np.conj(b)[:, :, None] * b[:, None, :]


@dataclass(frozen=True)
class PhaseSpacePoint:
    n: int
    t: float
    re: float
    im: float
    branch: str


def phase_trajectories(params: ModelParams, n_max: int, samples: int) -> list:
    """Sample -beta_n (branch '+') and +beta_n (branch '-') over one roundtrip."""
    if n_max > params.M:
        raise ParameterError(f"n_max={n_max} exceeds the mode count {params.M}")
    t = np.linspace(0.0, 2.0 * math.pi / params.omega_c, samples)
    points = []
    for branch, sign in (("+", -1.0), ("-", 1.0)):
        for n in range(n_max):
            b = sign * beta_n(t, n, params)
            points.extend(PhaseSpacePoint(n, float(ti), float(bi.real), float(bi.imag), branch)
                          for ti, bi in zip(t, b))
    return points
