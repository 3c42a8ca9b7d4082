"""Reproduction scenarios. Each writes CSV data (plus SVG figures) and returns
its convergence outcomes; ``run`` wraps them with the manifest."""
from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analytic, exact, observables, tebd
from . import mps as mpslib
from .chain import build_chain_mapping, star_correlations, verify_against_closed_form
from .config import ScenarioSpec
from .errors import ConfigError, MMRabiError, PrecisionError, ResourceError
from .manifest import RunManifest
from .model import ModelParams, light_speed, validate_cutoffs
from .records import csv_text

logger = logging.getLogger(__name__)

WORKERS_ENV = "MMRABI_WORKERS"


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"expected a positive integer, got {raw!r}", WORKERS_ENV) from None
    if n < 1:
        raise ConfigError(f"expected a positive integer, got {raw!r}", WORKERS_ENV)
    return n


def parallel_map(fn, items) -> list:
    """Ordered map over independent points; a process pool when MMRABI_WORKERS > 1."""
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def jsonable(value):
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


class Outputs:
    """Writes files into the run directory and registers them with the manifest."""

    def __init__(self, out_dir: Path, manifest: RunManifest, svg: bool = True):
        self.dir = Path(out_dir)
        self.manifest = manifest
        self.svg = svg

    def csv(self, name: str, text: str) -> Path:
        path = self.dir / name
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self.manifest.add_output(path)
        return path

    def figure(self, name: str, render, *args, **kwargs):
        if not self.svg:
            return None
        from . import plotting

        path = getattr(plotting, render)(self.dir / name, *args, **kwargs)
        self.manifest.add_output(path)
        return path


# ---------------------------------------------------------------------------
# dynamics engines


def _auto_cutoff(params: ModelParams, max_cutoff: int, mapping=None) -> tuple:
    d = params.fock_cutoff
    while True:
        diag = validate_cutoffs(params.replace(fock_cutoff=d), mapping=mapping)
        if diag.passed or d >= max_cutoff:
            return d, diag
        d += 1


def _time_grid(evolution: tebd.EvolutionConfig) -> np.ndarray:
    n = evolution.n_steps
    idx = list(range(0, n, evolution.stride)) + [n]
    return np.asarray(sorted(set(idx)), float) * evolution.dt


def _run_dynamics(job) -> dict:
    """One parameter point; returns plain arrays (picklable for the pool)."""
    params, evolution, engine, initial, want_corr = job
    if engine == "analytic":
        t = _time_grid(evolution)
        out = {"times": t, "population": analytic.tls_population(t, params)}
        if want_corr:
            out["corr_times"] = t
            out["star_correlations"] = analytic.coherent_correlations(t, params)
        return out
    if engine == "exact":
        t = _time_grid(evolution)
        series = exact.evolve_exact(params, initial, t, form="star", correlations=want_corr)
        out = {"times": t, "population": series["emitter_population"],
               "norm_drift": float(np.max(np.abs(series["norm"] - 1.0))),
               "energy_drift": float(np.ptp(series["energy"]))}
        if want_corr:
            out["corr_times"] = t
            out["star_correlations"] = series["correlations"]
        return out
    mapping = build_chain_mapping(params.M)
    state = mpslib.init_product_state(params, initial)
    series, state = tebd.evolve(state, tebd.trotter_gates(params, mapping), evolution)
    out = {"times": series.times, "population": series["emitter_population"],
           "norm_drift": float(np.max(np.abs(series["norm"] - 1.0))),
           "energy_drift": float(np.ptp(series["energy"])),
           "discarded_weight": float(state.discarded_weight),
           "max_bond": int(np.max(series["max_bond"]))}
    if want_corr:
        out["corr_times"] = series.meta["correlation_times"]
        out["star_correlations"] = star_correlations(mapping, series["correlations"])
    return out


def _evolution_for(spec: ScenarioSpec, correlations: bool) -> tebd.EvolutionConfig:
    evo = spec.evolution
    if correlations and evo.correlation_stride < 1:
        evo = tebd.EvolutionConfig(**{**evo.to_dict(), "correlation_stride": 1})
    if not correlations and evo.correlation_stride:
        evo = tebd.EvolutionConfig(**{**evo.to_dict(), "correlation_stride": 0})
    return evo


# ---------------------------------------------------------------------------
# scenarios


def scenario_dynamics(spec: ScenarioSpec, out: Outputs) -> dict:
    opts = spec.options
    evolution = _evolution_for(spec, False)
    jobs, cutoffs = [], {}
    for g in opts["g_grid"]:
        params = spec.model.replace(g=float(g))
        if opts["auto_cutoff"] and opts["engine"] != "analytic":
            d, diag = _auto_cutoff(params, opts["max_cutoff"])
            params = params.replace(fock_cutoff=d)
            cutoffs[g] = diag.summary()
        jobs.append((params, evolution, opts["engine"], opts["initial"], False))
    results = parallel_map(_run_dynamics, jobs)
    rows = ((g, t, p) for g, r in zip(opts["g_grid"], results) for t, p in zip(r["times"], r["population"]))
    out.csv("population.csv", csv_text(["g", "t", "population"], rows))
    grid = np.array([r["population"] for r in results])
    out.figure("population.svg", "contour", np.asarray(opts["g_grid"]), results[0]["times"], grid,
               mark=spec.model.g)
    per_point = []
    for g, r in zip(opts["g_grid"], results):
        entry = {"g": g, **{k: v for k, v in r.items() if np.ndim(v) == 0}}
        if g in cutoffs:
            entry["cutoff_check"] = cutoffs[g]
        per_point.append(entry)
    return {"engine": opts["engine"], "points": per_point}


def scenario_field_map(spec: ScenarioSpec, out: Outputs) -> dict:
    opts = spec.options
    params = spec.model
    evolution = _evolution_for(spec, True)
    result = _run_dynamics((params, evolution, opts["engine"], opts["initial"], True))
    x = np.linspace(-0.5, 0.5, opts["x_points"])
    fmap = observables.field_map_from_correlations(result["star_correlations"], result["corr_times"], x,
                                                   params.g, params.omega_c, opts["engine"])
    ref = observables.analytic_field_map(params, fmap.t_grid, x)
    out.csv("field_map.csv", fmap.to_csv())
    out.csv("field_map_analytic.csv", ref.to_csv())
    errors = [observables.relative_l2(a, b) if np.any(b) else 0.0
              for a, b in zip(fmap.amplitude, ref.amplitude)]
    out.csv("field_map_comparison.csv", csv_text(["t", "relative_l2"], zip(fmap.t_grid, errors)))
    out.csv("population.csv", csv_text(["t", "population"], zip(result["times"], result["population"])))
    out.figure("field_map.svg", "heatmap", x, fmap.t_grid, fmap.amplitude, title=f"{opts['engine']} field")
    out.figure("field_map_analytic.svg", "heatmap", x, ref.t_grid, ref.amplitude, title="coherent-state field")
    quarter = int(np.argmin(np.abs(fmap.t_grid - math.pi / (2 * params.omega_c))))
    return {
        "engine": opts["engine"],
        "relative_l2_at_quarter_roundtrip": errors[quarter],
        "quarter_time": float(fmap.t_grid[quarter]),
        **{k: v for k, v in result.items() if np.ndim(v) == 0},
    }


def scenario_phase_space(spec: ScenarioSpec, out: Outputs) -> dict:
    opts = spec.options
    points = analytic.phase_trajectories(spec.model, opts["n_max"], opts["samples"])
    rows = ((p.branch, p.n, p.t, p.re, p.im) for p in points)
    out.csv("phase_space.csv", csv_text(["branch", "n", "t", "re", "im"], rows))
    paths = {}
    for branch, color in (("+", "tab:blue"), ("-", "tab:red")):
        for n in range(opts["n_max"]):
            sel = [p for p in points if p.branch == branch and p.n == n]
            paths[f"{branch}{n}"] = ([p.re for p in sel], [p.im for p in sel], {"color": color, "lw": 0.8})
    out.figure("phase_space.svg", "scatter_paths", paths)
    b0 = analytic.beta0(spec.model)
    return {"beta0": [b0.real, b0.imag]}


def _spectrum_point(job):
    params, k = job
    return exact.lowest_levels(params, k, form="star")


def _gap_difference(single, multi) -> np.ndarray:
    """Largest relative deviation of the excited gaps (levels 1..k-1) per g."""
    out = []
    for s, m in zip(single, multi):
        gs, gm = s.gaps[1:], m.gaps[1:]
        out.append(float(np.max(np.abs(gm - gs) / np.abs(gs))))
    return np.asarray(out)


def doublet_gap(result) -> float:
    """Splitting between the two lowest parity doublets at strong coupling."""
    E = result.energies
    return float(0.5 * (E[2] + E[3]) - 0.5 * (E[0] + E[1]))


def scenario_spectrum(spec: ScenarioSpec, out: Outputs) -> dict:
    opts = spec.options
    k = opts["k_levels"]
    grid = [float(g) for g in opts["g_grid"]]
    multi_p = spec.model
    single_p = spec.model.replace(mode_count=1, fock_cutoff=opts["single_fock_cutoff"])
    multi = parallel_map(_spectrum_point, [(multi_p.replace(g=g), k) for g in grid])
    single = parallel_map(_spectrum_point, [(single_p.replace(g=g), k) for g in grid])
    out.csv("spectrum_multi.csv", exact.spectrum_csv(multi))
    out.csv("spectrum_single.csv", exact.spectrum_csv(single))
    diff = _gap_difference(single, multi)
    out.csv("spectrum_difference.csv", csv_text(["g", "max_relative_gap_difference"], zip(grid, diff)))
    series = {}
    styles = {}
    for i in range(1, k):
        series[f"M={multi_p.M} level {i}"] = [r.gaps[i] for r in multi]
        series[f"M=1 level {i}"] = [r.gaps[i] for r in single]
        styles[f"M=1 level {i}"] = {"ls": "--", "color": "k", "lw": 0.8}
    out.figure("spectrum.svg", "line_plot", grid, series, xlabel=r"$g/\omega_c$", ylabel=r"$E_k-E_0$",
               styles=styles)
    outcome = {"max_relative_gap_difference": dict(zip(grid, diff.tolist()))}
    if k >= 4:
        outcome["single_mode_doublet_gap"] = dict(zip(grid, [doublet_gap(r) for r in single]))
    return outcome


def scenario_ground_state(spec: ScenarioSpec, out: Outputs) -> dict:
    params = spec.model
    mapping = build_chain_mapping(params.M)
    cfg = tebd.EvolutionConfig(**{**spec.evolution.to_dict(), "mode": "imaginary", "correlation_stride": 0})
    gs = tebd.ground_state_imaginary(params, mapping, cfg)
    x = np.linspace(-0.5, 0.5, spec.options["x_points"])
    cloud = observables.ground_cloud_extract(star_correlations(mapping, gs.correlations), params, x)
    out.csv("cloud.csv", cloud.to_csv())
    summary = {"energy": gs.energy, "emitter_population": gs.emitter_population,
               "cloud_relative_l2": cloud.relative_l2}
    out.csv("ground_state.csv", csv_text(["quantity", "value"], summary.items()))
    out.csv("energy_trace.csv", csv_text(["dt", "tau", "energy"], gs.energy_trace))
    out.figure("cloud.svg", "line_plot", x, {"MPS ground state": cloud.profile,
                                             "coherent-state bound term": cloud.analytic},
               xlabel="x / L", ylabel="intensity", styles={"coherent-state bound term": {"ls": "--"}})
    return {**summary, "converged": gs.converged, "max_bond": max(gs.state.bond_dims)}


def _roundtrip_grid(params, roundtrips, samples):
    n = int(round(roundtrips * samples))
    return np.linspace(0.0, roundtrips * 2.0 * math.pi / params.omega_c, n + 1)


def scenario_overlap(spec: ScenarioSpec, out: Outputs) -> dict:
    opts = spec.options
    t = _roundtrip_grid(spec.model, opts["roundtrips"], opts["samples"])
    rows, steady, curves = [], [], {}
    for g in opts["g_grid"]:
        p = spec.model.replace(g=float(g))
        O = analytic.overlap(t, p)
        curves[f"g={g:g}"] = O
        rows.extend((g, ti, oi) for ti, oi in zip(t, O))
        steady.append((g, analytic.steady_overlap(p), analytic.steady_overlap_exact(p)))
    out.csv("overlap.csv", csv_text(["g", "t", "overlap"], rows))
    out.csv("steady_overlap.csv", csv_text(["g", "closed_form", "overlap_at_half_roundtrip"], steady))
    out.figure("overlap.svg", "line_plot", t / (2 * math.pi), curves, xlabel=r"$t\,\omega_c/2\pi$",
               ylabel="overlap")
    return {"steady_relative_difference": {g: abs(a - b) / b for g, a, b in steady}}


def scenario_critical_coupling(spec: ScenarioSpec, out: Outputs) -> dict:
    opts = spec.options
    results = [analytic.critical_coupling(M, spec.model.omega_x, spec.model.omega_c)
               for M in opts["mode_counts"]]
    rows = ((r.M, r.closed_form, r.numerical, r.relative_difference) for r in results)
    out.csv("critical_coupling.csv", csv_text(["M", "closed_form", "numerical", "relative_difference"], rows))
    Ms = [r.M for r in results]
    out.figure("critical_coupling.svg", "line_plot", Ms,
               {"root": [r.numerical for r in results], "Lambert W": [r.closed_form for r in results]},
               xlabel="M", ylabel=r"$g_c/\omega_c$", styles={"Lambert W": {"ls": "--"}})
    return {"max_relative_difference": max(r.relative_difference for r in results)}


def scenario_n_sweep(spec: ScenarioSpec, out: Outputs) -> dict:
    opts = spec.options
    t = _roundtrip_grid(spec.model, opts["roundtrips"], opts["samples"])
    rows, curves, outcome = [], {}, {}
    for M in opts["mode_counts"]:
        p = spec.model.replace(mode_count=int(M))
        O = analytic.overlap(t, p)
        pop = 0.5 * (1.0 + O)
        curves[f"M={M}"] = pop
        rows.extend((M, ti, oi, pi) for ti, oi, pi in zip(t, O, pop))
        outcome[int(M)] = {"steady_overlap": analytic.steady_overlap(p), "decay_time": analytic.decay_time(p)}
    out.csv("n_sweep.csv", csv_text(["M", "t", "overlap", "population"], rows))
    out.figure("n_sweep.svg", "line_plot", t / (2 * math.pi), curves, xlabel=r"$t\,\omega_c/2\pi$",
               ylabel="emitter population")
    return outcome


def scenario_kerr(spec: ScenarioSpec, out: Outputs) -> dict:
    opts = spec.options
    params = spec.model
    if params.emitter.is_tls:
        raise ConfigError("the kerr scenario needs emitter=kerr", "emitter")
    evolution = _evolution_for(spec, True)
    result = _run_dynamics((params, evolution, "mps", opts["initial"], True))
    x = np.linspace(-0.5, 0.5, opts["x_points"])
    fmap = observables.field_map_from_correlations(result["star_correlations"], result["corr_times"], x,
                                                   params.g, params.omega_c, "mps")
    out.csv("population.csv", csv_text(["t", "emitter_population"], zip(result["times"], result["population"])))
    out.csv("field_map.csv", fmap.to_csv())
    out.figure("field_map.svg", "heatmap", x, fmap.t_grid, fmap.amplitude, title="Kerr emitter")
    out.figure("population.svg", "line_plot", result["times"] / (2 * math.pi),
               {"emitter": result["population"]}, xlabel=r"$t\,\omega_c/2\pi$", ylabel=r"$\langle b^\dagger b\rangle$")
    sig = observables.kerr_signatures(result["times"], result["population"], fmap, params.omega_c)
    return {**sig.to_dict(), **{k: v for k, v in result.items() if np.ndim(v) == 0}}


def scenario_causality(spec: ScenarioSpec, out: Outputs) -> dict:
    opts = spec.options
    sweep = observables.causality_sweep(spec.model, opts["mode_counts"], threshold=opts["threshold"],
                                        x_points=opts.get("x_points"), t_points=opts["t_points"])
    reports = [sweep.single_mode] + [sweep.reports[M] for M in opts["mode_counts"]]
    rows = ((r.mode_count, r.front_speed, r.leakage, r.leakage_integral, r.total_signal) for r in reports)
    out.csv("causality.csv", csv_text(["M", "front_speed", "leakage_fraction", "leakage_integral",
                                       "total_signal"], rows))
    fronts = ((r.mode_count, t, f) for r in reports for t, f in zip(r.front_times, r.front_positions))
    out.csv("fronts.csv", csv_text(["M", "t", "front_position"], fronts))
    c = light_speed(spec.model.omega_c)
    t = reports[-1].front_times
    series = {f"M={r.mode_count}": r.front_positions for r in reports}
    series["light cone"] = np.minimum(c * t, 0.5)
    out.figure("fronts.svg", "line_plot", t / (2 * math.pi), series, xlabel=r"$t\,\omega_c/2\pi$",
               ylabel="|x| / L", styles={"light cone": {"ls": "--", "color": "k"}})
    return {"light_speed": c, **{f"M={r.mode_count}": r.to_dict() for r in reports}}


def scenario_chain_check(spec: ScenarioSpec, out: Outputs) -> dict:
    mapping = build_chain_mapping(spec.model.M)
    report = verify_against_closed_form(mapping)
    out.csv("chain.csv", mapping.to_csv())
    from .chain import ORTHOGONALITY_TOL

    checks = [
        ("orthogonality", report.orthogonality, ORTHOGONALITY_TOL),
        ("spectral_equivalence", report.spectral_deviation, report.tolerance),
        ("onsite_closed_form", report.max_omega_deviation, report.tolerance),
        ("hopping_closed_form", report.max_hopping_deviation, report.tolerance),
    ]
    rows = ((name, value, tol, value < tol) for name, value, tol in checks)
    out.csv("chain_report.csv", csv_text(["check", "value", "tolerance", "passed"], rows))
    return report.to_dict()


SCENARIO_FUNCS = {
    "dynamics": scenario_dynamics,
    "field-map": scenario_field_map,
    "phase-space": scenario_phase_space,
    "spectrum": scenario_spectrum,
    "ground-state": scenario_ground_state,
    "overlap": scenario_overlap,
    "critical-coupling": scenario_critical_coupling,
    "n-sweep": scenario_n_sweep,
    "kerr": scenario_kerr,
    "causality": scenario_causality,
    "chain-check": scenario_chain_check,
}


def run(spec: ScenarioSpec) -> RunManifest:
    """Execute a scenario; the manifest is written even when the engine fails."""
    out_dir = Path(spec.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ResourceError(f"output directory {out_dir} is not writable: {exc.strerror}") from None
    manifest = RunManifest(scenario=spec.scenario, config=jsonable(spec.resolved()),
                           overrides=jsonable(spec.overrides()))
    outputs = Outputs(out_dir, manifest, svg=spec.options.get("svg", True))
    start = time.perf_counter()
    try:
        manifest.convergence = jsonable(SCENARIO_FUNCS[spec.scenario](spec, outputs))
        if spec.scenario == "chain-check" and not manifest.convergence["passed"]:
            raise PrecisionError("chain mapping failed its checks; see chain_report.csv")
    except MMRabiError as exc:
        manifest.status = "failed"
        manifest.error = f"{type(exc).__name__}: {exc}"
        trace = getattr(exc, "trace", None)
        if trace is not None and hasattr(trace, "to_csv"):
            outputs.csv("partial.csv", trace.to_csv())
        raise
    finally:
        manifest.wall_time = time.perf_counter() - start
        manifest.write(out_dir)
    return manifest
