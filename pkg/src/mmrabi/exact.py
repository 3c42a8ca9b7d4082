"""Brute-force reference: Hamiltonians in a truncated Fock basis.

Sites are ordered [emitter, mode_0, ..., mode_{M-1}] in both the star form
(emitter coupled to every mode) and the chain form (emitter coupled to chain
site 0, nearest-neighbour hopping). The flat index is row-major in that order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chain import ChainMapping, build_chain_mapping
from .errors import ConvergenceError, ParameterError, ResourceError
from .model import ModelParams
from .operators import annihilation, emitter_coupling_op, emitter_onsite, emitter_vector
from .records import TimeSeries, csv_text

DENSE_LIMIT = 4096
MAX_DIMENSION = 3_000_000


@dataclass(frozen=True)
class FockBasis:
    dims: tuple

    @classmethod
    def for_params(cls, params: ModelParams) -> "FockBasis":
        return cls((params.emitter_cutoff,) + (params.fock_cutoff,) * params.M)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    def encode(self, occupations) -> np.ndarray:
        return np.ravel_multi_index(tuple(np.asarray(occupations).T), self.dims)

    def decode(self, index) -> np.ndarray:
        return np.stack(np.unravel_index(index, self.dims), axis=-1)

    def occupations(self) -> np.ndarray:
        """Occupation of every site for every basis state, shape (size, n_sites)."""
        return self.decode(np.arange(self.size))

    def embed(self, op, site: int) -> sp.csr_matrix:
        left = int(np.prod(self.dims[:site], dtype=np.int64))
        right = int(np.prod(self.dims[site + 1:], dtype=np.int64))
        out = sp.csr_matrix(op)
        if left > 1:
            out = sp.kron(sp.identity(left, format="csr"), out, format="csr")
        if right > 1:
            out = sp.kron(out, sp.identity(right, format="csr"), format="csr")
        return out


def _check_budget(basis: FockBasis, max_dim: int):
    if basis.size > max_dim:
        raise ResourceError(
            f"Hilbert space dimension {basis.size} exceeds budget {max_dim}; "
            "reduce mode_count or fock_cutoff, or use the MPS engine")


def assemble_hamiltonian(params: ModelParams, basis: Optional[FockBasis] = None, form: str = "star",
                         mapping: Optional[ChainMapping] = None,
                         max_dim: int = MAX_DIMENSION) -> sp.csr_matrix:
    basis = basis or FockBasis.for_params(params)
    _check_budget(basis, max_dim)
    d = params.fock_cutoff
    a = annihilation(d)
    x = a + a.T
    n_op = a.T @ a
    H = basis.embed(emitter_onsite(params), 0).astype(float)
    emitter_x = basis.embed(emitter_coupling_op(params), 0)
    wc = params.omega_c
    if form == "star":
        for n in range(params.M):
            H = H + (n + 1) * wc * basis.embed(n_op, n + 1)
            if params.g:
                H = H + params.g * math.sqrt(n + 1) * (emitter_x @ basis.embed(x, n + 1))
    elif form == "chain":
        mapping = mapping or build_chain_mapping(params.M)
        for i in range(params.M):
            H = H + mapping.omegas[i] * wc * basis.embed(n_op, i + 1)
            if i < params.M - 1:
                hop = basis.embed(a.T, i + 1) @ basis.embed(a, i + 2)
                H = H + mapping.hoppings[i] * wc * (hop + hop.T)
        if params.g:
            H = H + params.g * mapping.rho0 * (emitter_x @ basis.embed(x, 1))
    else:
        raise ParameterError(f"unknown Hamiltonian form {form!r}")
    return H.tocsr()


def parity_vector(basis: FockBasis) -> np.ndarray:
    """(-1)^(total excitations) for every basis state; conserved by both forms."""
    return np.where(basis.occupations().sum(axis=1) % 2 == 0, 1, -1)


@dataclass
class SpectrumResult:
    g: float
    energies: np.ndarray
    parities: np.ndarray
    emitter_excitation: np.ndarray = field(default=None)
    photon_number: np.ndarray = field(default=None)

    @property
    def gaps(self) -> np.ndarray:
        return self.energies - self.energies[0]


def _lowest_in_block(H, k, dense_limit):
    dim = H.shape[0]
    if dim <= dense_limit:
        vals, vecs = sla.eigh(H.toarray())
        return vals[:k], vecs[:, :k]
    k_eff = min(k, dim - 2)
    try:
        vals, vecs = spla.eigsh(H, k=k_eff, which="SA", tol=1e-12, maxiter=20000)
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError(f"eigsh did not converge for block of size {dim}",
                               trace={"converged": len(exc.eigenvalues)}) from exc
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


def lowest_levels(params: ModelParams, k: int, form: str = "star",
                  dense_limit: int = DENSE_LIMIT, max_dim: int = MAX_DIMENSION) -> SpectrumResult:
    """Lowest ``k`` eigenvalues, computed separately in each parity sector."""
    if k < 1:
        raise ParameterError("k must be >= 1")
    basis = FockBasis.for_params(params)
    H = assemble_hamiltonian(params, basis, form=form, max_dim=max_dim)
    parity = parity_vector(basis)
    occ = basis.occupations()
    emitter_n = occ[:, 0].astype(float)
    photons = occ[:, 1:].sum(axis=1).astype(float)
    energies, labels, exc, nph = [], [], [], []
    for sector in (1, -1):
        idx = np.flatnonzero(parity == sector)
        block = H[idx][:, idx]
        vals, vecs = _lowest_in_block(block, k, dense_limit)
        prob = np.abs(vecs) ** 2
        energies.extend(vals)
        labels.extend([sector] * len(vals))
        exc.extend(emitter_n[idx] @ prob)
        nph.extend(photons[idx] @ prob)
    energies, labels, exc, nph = map(np.asarray, (energies, labels, exc, nph))
    # deterministic order: energy, then emitter excitation, then photon number
    order = np.lexsort((nph, exc, np.round(energies, 9)))[:k]
    return SpectrumResult(params.g, energies[order], labels[order], exc[order], nph[order])


def spectrum_sweep(params: ModelParams, g_grid, k_levels: int, form: str = "star") -> list:
    if k_levels < 2:
        raise ParameterError("k_levels must be >= 2")
    return [lowest_levels(params.replace(g=float(g)), k_levels, form=form) for g in g_grid]


def spectrum_csv(results) -> str:
    rows = ((r.g, i, gap) for r in results for i, gap in enumerate(r.gaps))
    return csv_text(["g", "level_index", "energy_gap"], rows)


def initial_state(params: ModelParams, emitter_state, basis: FockBasis) -> np.ndarray:
    """Emitter state times the photon vacuum, as a flat vector."""
    psi = np.zeros(basis.size, dtype=complex)
    stride = basis.size // basis.dims[0]
    psi[::stride] = emitter_vector(emitter_state, params)
    return psi


def evolve_exact(params: ModelParams, emitter_state, t_grid, form: str = "star",
                 correlations: bool = False, dense_limit: int = DENSE_LIMIT,
                 max_dim: int = MAX_DIMENSION) -> TimeSeries:
    """Exact unitary evolution from ``emitter_state`` times the photon vacuum.

    Records the emitter excitation, the mode occupations of the chosen form
    (star modes a_n or chain sites b_i), energy, norm and optionally the full
    correlation matrices.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    basis = FockBasis.for_params(params)
    H = assemble_hamiltonian(params, basis, form=form, max_dim=max_dim)
    psi0 = initial_state(params, emitter_state, basis)
    occ = basis.occupations().astype(float)

    if basis.size <= dense_limit:
        E, V = sla.eigh(H.toarray())
        c0 = V.conj().T @ psi0
        states = (V @ (np.exp(-1j * np.outer(E, t_grid)) * c0[:, None])).T
    else:
        steps = np.diff(t_grid)
        if len(t_grid) > 1 and not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
            raise ParameterError("sparse exact evolution needs a uniform time grid")
        states = spla.expm_multiply(-1j * H, psi0, start=t_grid[0], stop=t_grid[-1],
                                    num=len(t_grid), endpoint=True)
        if len(t_grid) == 1:
            states = np.atleast_2d(states)

    prob = np.abs(states) ** 2
    data = {
        "emitter_population": prob @ occ[:, 0],
        "norm": np.sqrt(prob.sum(axis=1)),
        "energy": np.real(np.einsum("ti,ti->t", states.conj(), (H @ states.T).T)),
        "occupations": prob @ occ[:, 1:],
    }
    if correlations:
        a = annihilation(params.fock_cutoff)
        lowered = [(basis.embed(a, i + 1) @ states.T).T for i in range(params.M)]
        corr = np.empty((len(t_grid), params.M, params.M), dtype=complex)
        for i in range(params.M):
            for j in range(params.M):
                corr[:, i, j] = np.einsum("ti,ti->t", lowered[i].conj(), lowered[j])
        data["correlations"] = corr
    return TimeSeries(t_grid, data, {"source": "exact", "form": form, "params": params.to_dict()})


def ground_state(params: ModelParams, form: str = "star") -> tuple:
    """Ground energy and vector (dense below DENSE_LIMIT, Lanczos above)."""
    basis = FockBasis.for_params(params)
    H = assemble_hamiltonian(params, basis, form=form)
    vals, vecs = _lowest_in_block(H, 1, DENSE_LIMIT)
    return float(vals[0]), vecs[:, 0]
