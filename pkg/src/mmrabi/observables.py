"""Post-processing: field maps, revival detection, bound cloud and light-cone analysis."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import signal

from . import analytic
from .errors import ParameterError
from .model import ModelParams, light_speed
from .records import csv_text


@dataclass
class FieldMap:
    """Intensity <E^- E^+>(x, t) on a grid, shape (len(t_grid), len(x_grid))."""

    x_grid: np.ndarray
    t_grid: np.ndarray
    amplitude: np.ndarray
    source: str = "analytic"

    def __post_init__(self):
        if self.amplitude.shape != (len(self.t_grid), len(self.x_grid)):
            raise ParameterError("amplitude shape must be (len(t_grid), len(x_grid))")

    def __add__(self, other: "FieldMap") -> "FieldMap":
        return FieldMap(self.x_grid, self.t_grid, self.amplitude + other.amplitude, self.source)

    def at(self, t: float) -> np.ndarray:
        return self.amplitude[int(np.argmin(np.abs(self.t_grid - t)))]

    def to_csv(self) -> str:
        rows = ((x, t, a) for t, row in zip(self.t_grid, self.amplitude)
                for x, a in zip(self.x_grid, row))
        return csv_text(["x", "t", "amplitude"], rows)


def field_map_from_correlations(correlations, t_grid, x_grid, g: float, omega_c: float = 1.0,
                                source: str = "mps") -> FieldMap:
    """Intensity from star correlations <a_n^dag a_m>(t).

    amplitude = (omega_c/g)^2 sum_{n,m} sqrt((n+1)(m+1)) f_n(x) f_m(x) <a_n^dag a_m>,
    i.e. in units of hbar*g^2/(eps0*A*L*omega_c); the sqrt(n+1) factors are the
    mode-frequency weights of the field operator. For g == 0 the unit is
    dropped (scale 1).
    """
    C = np.asarray(correlations)
    if C.ndim == 2:
        C = C[None]
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    x_grid = np.asarray(x_grid, dtype=float)
    if C.shape[0] != len(t_grid) or C.shape[1] != C.shape[2]:
        raise ParameterError(f"correlations of shape {C.shape} do not match {len(t_grid)} times")
    M = C.shape[1]
    F = analytic.mode_functions(x_grid, M) * np.sqrt(np.arange(1, M + 1))
    scale = (omega_c / g) ** 2 if g else 1.0
    amp = np.real(np.einsum("xn,tnm,xm->tx", F, C, F, optimize=True)) * scale
    return FieldMap(x_grid, t_grid, amp, source)


def analytic_field_map(params: ModelParams, t_grid, x_grid) -> FieldMap:
    amp = analytic.field_components(x_grid, t_grid, params).total
    return FieldMap(np.asarray(x_grid, float), np.atleast_1d(np.asarray(t_grid, float)), amp, "analytic")


def relative_l2(a, b) -> float:
    b = np.asarray(b)
    return float(np.linalg.norm(np.asarray(a) - b) / np.linalg.norm(b))


@dataclass
class RevivalReport:
    peak_times: np.ndarray
    peak_heights: np.ndarray
    plateau: float
    peak_widths: np.ndarray

    @property
    def count(self) -> int:
        return len(self.peak_times)

    def to_dict(self) -> dict:
        return {
            "peak_times": self.peak_times.tolist(),
            "peak_heights": self.peak_heights.tolist(),
            "plateau": self.plateau,
            "peak_widths": self.peak_widths.tolist(),
        }


def detect_revivals(times, values, prominence: float = 0.1) -> RevivalReport:
    """Local maxima with at least ``prominence``; widths at half prominence."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    dt = float(np.mean(np.diff(times))) if len(times) > 1 else 0.0
    peaks, props = signal.find_peaks(values, prominence=prominence, width=0, rel_height=0.5)
    widths = props.get("widths", np.zeros(0)) * dt
    mask = np.ones(len(values), dtype=bool)
    for p, w in zip(peaks, props.get("widths", [])):
        half = int(math.ceil(w))
        mask[max(0, p - 2 * half):p + 2 * half + 1] = False
    plateau = float(np.median(values[mask] if mask.any() else values))
    return RevivalReport(times[peaks], values[peaks], plateau, np.asarray(widths))


# Fraction of the global maximum that marks the front. The truncated mode sum
# rings with an envelope of about 1/(2 pi M |x|) of the peak, so lower
# thresholds track static sidelobes instead of the moving front.
FRONT_THRESHOLD = 0.1


@dataclass
class CausalityReport:
    front_times: np.ndarray
    front_positions: np.ndarray
    front_speed: float
    leakage: float
    leakage_integral: float
    total_signal: float
    mode_count: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "mode_count": self.mode_count,
            "front_speed": self.front_speed,
            "leakage": self.leakage,
            "leakage_integral": self.leakage_integral,
            "total_signal": self.total_signal,
        }


def causality_analysis(field_plus, field_minus, x_grid, t_grid, speed: float,
                       threshold: float = FRONT_THRESHOLD, fit_window=(0.2, 0.8),
                       mode_count: Optional[int] = None) -> CausalityReport:
    """Light-cone diagnostics of the branch-distinguishing signal |E_+ - E_-|.

    The front at time t is the largest |x| where the signal exceeds
    ``threshold`` times its global maximum; its speed is a least-squares fit
    over ``fit_window`` (fractions of the time the light needs to reach the
    cavity edge). ``leakage`` is the share of the integrated signal lying
    outside |x| <= speed*t; ``leakage_integral`` is the unnormalized integral.
    """
    x = np.asarray(x_grid, dtype=float)
    t = np.asarray(t_grid, dtype=float)
    sig = np.abs(np.asarray(field_plus) - np.asarray(field_minus))
    if sig.shape != (len(t), len(x)):
        raise ParameterError("branch fields must share the (t, x) grid")
    level = threshold * sig.max() if sig.size else 0.0
    above = sig > level
    absx = np.abs(x)
    front = np.array([absx[row].max() if row.any() else 0.0 for row in above])
    t_edge = absx.max() / speed
    sel = (t >= fit_window[0] * t_edge) & (t <= fit_window[1] * t_edge)
    speed_fit = float(np.polyfit(t[sel], front[sel], 1)[0]) if sel.sum() >= 2 else math.nan
    outside = absx[None, :] > speed * t[:, None]
    total = float(np.trapezoid(np.trapezoid(sig, x, axis=1), t))
    leak = float(np.trapezoid(np.trapezoid(sig * outside, x, axis=1), t))
    frac = leak / total if total > 0 else 0.0
    return CausalityReport(t, front, speed_fit, frac, leak, total, mode_count)


def causality_grids(M: int, omega_c: float = 1.0, x_points: Optional[int] = None,
                    t_points: int = 300):
    """Default grids: t in [0, pi/omega_c] (light reaches the edge) and at least
    16 x samples per wavelength of the highest mode."""
    nx = x_points or max(401, 16 * M + 1)
    return np.linspace(-0.5, 0.5, nx), np.linspace(0.0, math.pi / omega_c, t_points + 1)


@dataclass
class CausalitySweep:
    reports: dict
    single_mode: CausalityReport

    @property
    def leakage(self) -> dict:
        return {M: r.leakage for M, r in self.reports.items()}

    def to_dict(self) -> dict:
        return {
            "per_mode_count": [r.to_dict() for r in self.reports.values()],
            "single_mode": self.single_mode.to_dict(),
        }


def causality_sweep(params: ModelParams, mode_counts=(10, 30, 100), threshold: float = FRONT_THRESHOLD,
                    x_points: Optional[int] = None, t_points: int = 300) -> CausalitySweep:
    """Analytic branch fields for each mode count plus the single-mode model."""
    c = light_speed(params.omega_c)

    def run(M):
        p = params.replace(mode_count=M)
        x, t = causality_grids(M, params.omega_c, x_points, t_points)
        plus = analytic.mean_field(x, t, "+", p)
        minus = analytic.mean_field(x, t, "-", p)
        return causality_analysis(plus, minus, x, t, c, threshold=threshold, mode_count=M)

    return CausalitySweep({M: run(M) for M in mode_counts}, run(1))


@dataclass
class CloudProfile:
    x_grid: np.ndarray
    profile: np.ndarray
    analytic: np.ndarray
    relative_l2: float

    @property
    def peak_position(self) -> float:
        return float(self.x_grid[int(np.argmax(self.profile))])

    def to_csv(self) -> str:
        return csv_text(["x", "profile", "analytic_bound"], zip(self.x_grid, self.profile, self.analytic))


def ground_cloud_extract(source, params: ModelParams, x_grid=None) -> CloudProfile:
    """Bound-cloud profile from ground-state star correlations or a ground-state FieldMap.

    A FieldMap is averaged over its time axis. The comparison target is the
    time-independent term (sum_n f_n(x))^2 of the analytic intensity.
    """
    if isinstance(source, FieldMap):
        x_grid = source.x_grid
        profile = source.amplitude.mean(axis=0)
    else:
        x_grid = np.linspace(-0.5, 0.5, 401) if x_grid is None else np.asarray(x_grid, float)
        profile = field_map_from_correlations(np.asarray(source), [0.0], x_grid, params.g,
                                              params.omega_c, "mps").amplitude[0]
    target = analytic.bound_cloud(x_grid, params)
    if params.g == 0 or not np.any(target):
        err = float(np.linalg.norm(profile))
    else:
        err = relative_l2(profile, target)
    return CloudProfile(np.asarray(x_grid), profile, target, err)


@dataclass
class KerrSignatures:
    """Front arrival at the cavity edge and the emitter disturbance on the photon's return."""

    front_time: float
    expected_front_time: float
    disturbance_time: float
    disturbance: float
    background: float

    @property
    def front_error(self) -> float:
        return abs(self.front_time - self.expected_front_time) / self.expected_front_time

    @property
    def disturbance_detected(self) -> bool:
        return self.disturbance > max(2.0 * self.background, 0.01)

    def to_dict(self) -> dict:
        return {
            "front_time": self.front_time,
            "expected_front_time": self.expected_front_time,
            "front_error": self.front_error,
            "disturbance_time": self.disturbance_time,
            "disturbance": self.disturbance,
            "background": self.background,
            "disturbance_detected": self.disturbance_detected,
        }


def front_arrival(field_map: FieldMap, edge: float = 0.5, omega_c: float = 1.0) -> float:
    """Time of maximal intensity at x = +-edge within the first roundtrip."""
    x = field_map.x_grid
    cols = [int(np.argmin(np.abs(x - edge))), int(np.argmin(np.abs(x + edge)))]
    sel = field_map.t_grid < 2.0 * math.pi / omega_c
    if not sel.any():
        raise ParameterError("field map does not cover the first roundtrip")
    trace = field_map.amplitude[sel][:, cols].mean(axis=1)
    return float(field_map.t_grid[sel][int(np.argmax(trace))])


def population_disturbance(times, population, omega_c: float = 1.0, window: float = 0.1) -> tuple:
    """(time, size, background) of the emitter response near one roundtrip.

    The reference level is the mean over [0.4, 0.6] roundtrips; the size is
    the largest deviation from it within +-``window`` of the roundtrip, and the
    background is the largest deviation over [0.3, 0.7] roundtrips.
    """
    t = np.asarray(times, float) * omega_c / (2.0 * math.pi)
    p = np.asarray(population, float)
    ref_sel = (t >= 0.4) & (t <= 0.6)
    near = np.abs(t - 1.0) <= window
    quiet = (t >= 0.3) & (t <= 0.7)
    if not (ref_sel.any() and near.any()):
        raise ParameterError("population trace must cover [0.4, 1 + window] roundtrips")
    ref = float(p[ref_sel].mean())
    dev = np.abs(p - ref)
    k = int(np.argmax(np.where(near, dev, -np.inf)))
    return float(times[k]), float(dev[k]), float(dev[quiet].max())


def kerr_signatures(times, population, field_map: FieldMap, omega_c: float = 1.0) -> KerrSignatures:
    front = front_arrival(field_map, 0.5, omega_c)
    t_d, size, bg = population_disturbance(times, population, omega_c)
    return KerrSignatures(front, math.pi / omega_c, t_d, size, bg)
