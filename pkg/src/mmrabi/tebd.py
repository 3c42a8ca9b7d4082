"""Second-order TEBD on the emitter + chain MPS.

The Hamiltonian is a sum of bond terms h_b on sites (b, b+1). Bond 0 holds
the emitter Hamiltonian and the emitter coupling g*rho0; bond b >= 1 holds
the hopping t_{b-1}. Chain on-site energies are shared evenly between the
bonds touching the site. One step is exp(-H_even dt/2) exp(-H_odd dt)
exp(-H_even dt/2); consecutive half steps are merged between measurements.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from . import mps as mpslib
from .chain import ChainMapping, build_chain_mapping
from .errors import ConvergenceError, ParameterError, TruncationBudgetError
from .model import ModelParams
from .operators import annihilation, emitter_coupling_op, emitter_onsite
from .records import TimeSeries

logger = logging.getLogger(__name__)

DEFAULT_DT = 2.0 * math.pi / 2000.0


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float = DEFAULT_DT
    order: int = 2
    chi_max: int = 64
    svd_cut: float = 1e-10
    t_final: float = 2.0 * math.pi
    stride: int = 10
    mode: str = "real"
    max_discarded: float = 1e-3
    correlation_stride: int = 0  # in units of ``stride``; 0 disables correlation measurements

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError("invariant violated: dt > 0")
        if self.order != 2:
            raise ParameterError("only second-order splitting is implemented")
        if not 0 < self.svd_cut <= 1e-6:
            raise ParameterError("invariant violated: svd_cut in (0, 1e-6]")
        if self.chi_max < 2:
            raise ParameterError("invariant violated: chi_max >= 2")
        if self.mode not in ("real", "imaginary"):
            raise ParameterError("mode must be 'real' or 'imaginary'")
        if self.stride < 1:
            raise ParameterError("stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GateSet:
    bond_hamiltonians: list
    dims: list
    mode: str = "real"
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_bonds(self) -> int:
        return len(self.bond_hamiltonians)

    def gate(self, bond: int, tau: float) -> np.ndarray:
        """exp(-i h tau) in real time, exp(-h tau) in imaginary time, shape (dl, dr, dl, dr)."""
        key = (bond, tau, self.mode)
        if key not in self._cache:
            h = self.bond_hamiltonians[bond]
            gen = -1j * tau * h if self.mode == "real" else -tau * h
            dl, dr = self.dims[bond], self.dims[bond + 1]
            self._cache[key] = sla.expm(gen).reshape(dl, dr, dl, dr).astype(complex)
        return self._cache[key]

    def with_mode(self, mode: str) -> "GateSet":
        return GateSet(self.bond_hamiltonians, self.dims, mode)


def bond_hamiltonians(params: ModelParams, mapping: ChainMapping, local_dims=None) -> list:
    M = params.M
    if mapping.size != M:
        raise ParameterError(f"mapping has {mapping.size} sites but the model has {M} modes")
    dims = mpslib.chain_dims(params, local_dims)
    de = params.emitter_cutoff
    wc = params.omega_c
    ops = [annihilation(d) for d in dims]

    def share(site):
        # number of bonds touching chain site (1..M)
        return 2 if site < M else 1

    def n_op(i):
        return ops[i].T @ ops[i]

    hams = []
    I0 = np.eye(dims[0])
    h0 = np.kron(emitter_onsite(params), I0)
    h0 = h0 + np.kron(np.eye(de), mapping.omegas[0] * wc * n_op(0) / share(1))
    h0 = h0 + params.g * mapping.rho0 * np.kron(emitter_coupling_op(params), ops[0] + ops[0].T)
    hams.append(h0)
    for b in range(1, M):
        l, r = b - 1, b  # chain indices of the two sites
        Il, Ir = np.eye(dims[l]), np.eye(dims[r])
        h = mapping.omegas[l] * wc * np.kron(n_op(l), Ir) / share(b)
        h = h + mapping.omegas[r] * wc * np.kron(Il, n_op(r)) / share(b + 1)
        hop = np.kron(ops[l].T, ops[r])
        h = h + mapping.hoppings[l] * wc * (hop + hop.T)
        hams.append(h)
    return hams


def trotter_gates(params: ModelParams, mapping: Optional[ChainMapping] = None,
                  config: Optional[EvolutionConfig] = None, local_dims=None) -> GateSet:
    """Bond gates for the chain; ``local_dims`` optionally varies the Fock dimension per site."""
    mapping = mapping or build_chain_mapping(params.M)
    mode = config.mode if config else "real"
    dims = [params.emitter_cutoff] + mpslib.chain_dims(params, local_dims)
    return GateSet(bond_hamiltonians(params, mapping, local_dims), dims, mode)


def _apply_layer(state, gates: GateSet, parity: int, tau: float, config: EvolutionConfig):
    bonds = list(range(parity, gates.n_bonds, 2))
    if not bonds:
        return False
    hit_any = False
    left_first = bonds[0] - state.center <= state.center - (bonds[-1] + 1)
    if state.center <= bonds[0] or (state.center <= bonds[-1] and left_first):
        for b in bonds:
            mpslib.move_center(state, b)
            _, hit, _ = mpslib.apply_two_site(state, b, gates.gate(b, tau), config.chi_max,
                                              config.svd_cut, "right")
            hit_any |= hit
    else:
        for b in reversed(bonds):
            mpslib.move_center(state, b + 1)
            _, hit, _ = mpslib.apply_two_site(state, b, gates.gate(b, tau), config.chi_max,
                                              config.svd_cut, "left")
            hit_any |= hit
    return hit_any


def apply_steps(state, gates: GateSet, config: EvolutionConfig, n_steps: int, dt=None) -> bool:
    """Advance ``n_steps`` second-order steps; returns whether chi_max capped a truncation."""
    dt = config.dt if dt is None else dt
    if n_steps <= 0:
        return False
    hit = _apply_layer(state, gates, 0, dt / 2, config)
    for k in range(n_steps):
        hit |= _apply_layer(state, gates, 1, dt, config)
        tau = dt if k < n_steps - 1 else dt / 2
        hit |= _apply_layer(state, gates, 0, tau, config)
    return hit


def apply_layers(state, gates: GateSet, config: EvolutionConfig, n_layers: int, tau: float) -> None:
    """Apply ``n_layers`` alternating even/odd gate layers (circuit light-cone checks)."""
    for k in range(n_layers):
        _apply_layer(state, gates, k % 2, tau, config)


def default_observer(state, gates: GateSet, with_correlations: bool) -> dict:
    out = {
        "emitter_population": mpslib.emitter_population(state),
        "occupations": mpslib.occupations(state),
        "norm": mpslib.norm(state),
        "energy": mpslib.energy(state, gates.bond_hamiltonians),
        "discarded_weight": state.discarded_weight,
        "max_bond": max(state.bond_dims),
    }
    if with_correlations:
        out["correlations"] = mpslib.correlation_matrix(state)
    return out


def _stack(records: list, times) -> TimeSeries:
    data = {}
    for key in records[0]:
        if key == "correlations":
            continue
        data[key] = np.array([r[key] for r in records])
    corr_t = [t for t, r in zip(times, records) if "correlations" in r]
    series = TimeSeries(np.asarray(times), data)
    if corr_t:
        # correlations are sampled on their own (coarser) grid
        series.meta["correlation_times"] = np.asarray(corr_t)
        series.data["correlations"] = np.array([r["correlations"] for r in records if "correlations" in r])
    return series


def evolve(state, gates: GateSet, config: EvolutionConfig,
           observers: Optional[list] = None) -> tuple:
    """Real-time evolution up to ``config.t_final``; returns (TimeSeries, final state).

    Observers are callables ``f(t, state) -> dict`` called at every
    measurement time, after the built-in observables.
    """
    if gates.mode != config.mode:
        gates = gates.with_mode(config.mode)
    n_steps = config.n_steps
    times, records = [], []
    step = 0
    block = 0

    def record(step_index):
        with_corr = config.correlation_stride > 0 and (step_index // config.stride) % config.correlation_stride == 0
        rec = default_observer(state, gates, with_corr)
        for obs in observers or ():
            rec.update(obs(step_index * config.dt, state))
        times.append(step_index * config.dt)
        records.append(rec)

    record(0)
    while step < n_steps:
        k = min(config.stride, n_steps - step)
        hit = apply_steps(state, gates, config, k)
        step += k
        block += 1
        if config.mode == "imaginary":
            _renormalize(state)
        record(step)
        if hit and state.discarded_weight > config.max_discarded:
            partial = _stack(records, times)
            raise TruncationBudgetError(
                f"chi_max={config.chi_max} saturated with discarded weight "
                f"{state.discarded_weight:.3e} > {config.max_discarded:.1e}", trace=partial)
    series = _stack(records, times)
    series.meta.update({"source": "mps", "config": config.to_dict()})
    return series, state


def _renormalize(state):
    A = state.tensors[state.center]
    state.tensors[state.center] = A / np.linalg.norm(A)


@dataclass
class GroundStateResult:
    state: object
    energy: float
    emitter_population: float
    correlations: np.ndarray
    energy_trace: list
    converged: bool


DEFAULT_SCHEDULE = ((0.1, 30.0), (0.03, 6.0), (0.01, 3.0), (0.003, 1.5), (0.001, 1.0))


def ground_state_imaginary(params: ModelParams, mapping: Optional[ChainMapping] = None,
                           config: Optional[EvolutionConfig] = None, schedule=DEFAULT_SCHEDULE,
                           tol: float = 1e-8, check_every: float = 0.1,
                           emitter_state="g", local_dims=None) -> GroundStateResult:
    """Imaginary-time TEBD with a decreasing step schedule.

    Each stage (dt, tau_max) runs until the energy changes by less than
    ``tol`` per unit imaginary time, measured every ``check_every``. The last
    stage must converge, otherwise a ConvergenceError carries the energy trace.
    """
    mapping = mapping or build_chain_mapping(params.M)
    config = config or EvolutionConfig(mode="imaginary")
    gates = trotter_gates(params, mapping, local_dims=local_dims).with_mode("imaginary")
    state = mpslib.init_product_state(params, emitter_state, local_dims)
    trace = []
    e_prev = mpslib.energy(state, gates.bond_hamiltonians)
    converged = False
    for dt, tau_max in schedule:
        steps_per_check = max(1, int(round(check_every / dt)))
        tau = 0.0
        converged = False
        while tau < tau_max - 1e-12:
            apply_steps(state, gates, config, steps_per_check, dt=dt)
            _renormalize(state)
            tau += steps_per_check * dt
            e = mpslib.energy(state, gates.bond_hamiltonians)
            trace.append((dt, tau, e))
            rate = abs(e - e_prev) / (steps_per_check * dt)
            e_prev = e
            if rate < tol:
                converged = True
                break
        logger.debug("imaginary stage dt=%g tau=%g E=%.12f converged=%s", dt, tau, e_prev, converged)
    if not converged:
        raise ConvergenceError("imaginary-time evolution did not converge", trace=trace)
    corr = mpslib.correlation_matrix(state)
    return GroundStateResult(state, e_prev, mpslib.emitter_population(state), corr, trace, converged)
