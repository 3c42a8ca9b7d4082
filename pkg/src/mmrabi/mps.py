"""Matrix product states for the emitter + photon chain.

Site 0 is the emitter and sites 1..M are the chain orbitals b_0..b_{M-1}.
Tensors have shape (chi_left, d, chi_right). The state is kept in mixed
canonical form: tensors left of ``center`` are left isometries, those to the
right are right isometries.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import ParameterError
from .model import ModelParams
from .operators import annihilation, emitter_vector


@dataclass
class MpsState:
    tensors: list
    center: int = 0
    discarded_weight: float = 0.0
    discarded_log: list = field(default_factory=list)
    normalized: bool = True

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def local_dims(self) -> list:
        return [A.shape[1] for A in self.tensors]

    @property
    def bond_dims(self) -> list:
        return [A.shape[2] for A in self.tensors[:-1]]

    def copy(self) -> "MpsState":
        return MpsState([A.copy() for A in self.tensors], self.center, self.discarded_weight,
                        list(self.discarded_log), self.normalized)

    def to_dense(self) -> np.ndarray:
        """Full state vector (only for small systems)."""
        psi = self.tensors[0]
        for A in self.tensors[1:]:
            psi = np.tensordot(psi, A, axes=(psi.ndim - 1, 0))
        return psi.reshape(-1)


def init_product_state(params: ModelParams, emitter_state="e", local_dims=None) -> MpsState:
    """Emitter state times the photon vacuum, with bond dimension 1.

    The chain transform is passive, so the chain vacuum is the star vacuum.
    ``local_dims`` optionally sets the Fock dimension of every chain site
    (default: ``params.fock_cutoff`` everywhere).
    """
    e = emitter_vector(emitter_state, params)
    tensors = [e.reshape(1, -1, 1)]
    for d in chain_dims(params, local_dims):
        vac = np.zeros(d, dtype=complex)
        vac[0] = 1.0
        tensors.append(vac.reshape(1, -1, 1))
    return MpsState(tensors, center=0)


def chain_dims(params: ModelParams, local_dims) -> list:
    if local_dims is None:
        return [params.fock_cutoff] * params.M
    dims = [int(d) for d in local_dims]
    if len(dims) != params.M or min(dims) < 2:
        raise ParameterError(f"local_dims needs {params.M} entries >= 2")
    return dims


def move_center(state: MpsState, site: int) -> None:
    """Shift the orthogonality center with QR decompositions."""
    if not 0 <= site < state.n_sites:
        raise ParameterError(f"site {site} outside the chain")
    T = state.tensors
    while state.center < site:
        c = state.center
        chi_l, d, chi_r = T[c].shape
        Q, R = sla.qr(T[c].reshape(chi_l * d, chi_r), mode="economic")
        T[c] = Q.reshape(chi_l, d, Q.shape[1])
        T[c + 1] = np.tensordot(R, T[c + 1], axes=(1, 0))
        state.center += 1
    while state.center > site:
        c = state.center
        chi_l, d, chi_r = T[c].shape
        Q, R = sla.qr(T[c].reshape(chi_l, d * chi_r).T, mode="economic")
        T[c] = Q.T.reshape(Q.shape[1], d, chi_r)
        T[c - 1] = np.tensordot(T[c - 1], R.T, axes=(2, 0))
        state.center -= 1


def _canonical_signs(U, Vh):
    # largest-magnitude entry of each left singular vector made real positive
    idx = np.argmax(np.abs(U), axis=0)
    phase = U[idx, np.arange(U.shape[1])]
    phase = phase / np.abs(phase)
    return U * phase.conj()[None, :], Vh * phase[:, None]


def truncated_svd(matrix, chi_max: int, svd_cut: float):
    """SVD keeping at most ``chi_max`` values above ``svd_cut`` times the largest.

    Returns (U, S, Vh, discarded_weight, hit_chi_max), with S renormalized to unit norm.
    """
    try:
        U, S, Vh = sla.svd(matrix, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        U, S, Vh = sla.svd(matrix, full_matrices=False, lapack_driver="gesvd")
    total = float(np.sum(S ** 2))
    if total == 0.0:
        raise ParameterError("cannot truncate a zero state")
    keep = int(np.count_nonzero(S > svd_cut * S[0]))
    hit = keep > chi_max
    keep = max(1, min(keep, chi_max))
    discarded = float(np.sum(S[keep:] ** 2)) / total
    U, S, Vh = U[:, :keep], S[:keep], Vh[:keep]
    U, Vh = _canonical_signs(U, Vh)
    S = S / np.linalg.norm(S)
    return U, S, Vh, discarded, hit


def apply_two_site(state: MpsState, bond: int, gate: np.ndarray, chi_max: int, svd_cut: float,
                   direction: str = "right"):
    """Apply a two-site gate on sites (bond, bond+1) and split with truncation.

    The center must sit on one of the two sites. ``gate`` has shape
    (d_l, d_r, d_l, d_r) with output indices first. After a 'right' split the
    center is on bond+1, after a 'left' split on bond.
    """
    if state.center not in (bond, bond + 1):
        raise ParameterError("orthogonality center must be on the gate's bond")
    T = state.tensors
    A, B = T[bond], T[bond + 1]
    chi_l, dl, _ = A.shape
    _, dr, chi_r = B.shape
    theta = np.tensordot(A, B, axes=(2, 0))
    theta = np.tensordot(gate, theta, axes=([2, 3], [1, 2])).transpose(2, 0, 1, 3)
    U, S, Vh, discarded, hit = truncated_svd(theta.reshape(chi_l * dl, dr * chi_r), chi_max, svd_cut)
    k = len(S)
    if direction == "right":
        T[bond] = U.reshape(chi_l, dl, k)
        T[bond + 1] = (S[:, None] * Vh).reshape(k, dr, chi_r)
        state.center = bond + 1
    else:
        T[bond] = (U * S[None, :]).reshape(chi_l, dl, k)
        T[bond + 1] = Vh.reshape(k, dr, chi_r)
        state.center = bond
    state.discarded_weight += discarded
    state.discarded_log.append(discarded)
    return discarded, hit, S


# ---------------------------------------------------------------------------
# measurements


def _transfer(env, A, op=None):
    """Propagate a left environment env[a, a'] through site tensor A (optionally with op)."""
    top = np.tensordot(env, A, axes=(0, 0))  # (a', d, b)
    if op is not None:
        top = np.tensordot(top, op, axes=(1, 1)).transpose(0, 2, 1)
    return np.tensordot(top, A.conj(), axes=([0, 1], [0, 1]))


def _environments(state: MpsState):
    T = state.tensors
    left = [np.ones((1, 1), dtype=complex)]
    for A in T:
        left.append(_transfer(left[-1], A))
    right = [np.ones((1, 1), dtype=complex)]
    for A in reversed(T):
        env = np.tensordot(A, right[-1], axes=(2, 0))  # (a, d, b')
        right.append(np.tensordot(env, A.conj(), axes=([1, 2], [1, 2])))
    right = right[::-1]
    return left, right


def norm(state: MpsState) -> float:
    A = state.tensors[state.center]
    return float(np.sqrt(np.real(np.vdot(A, A))))


def local_expectations(state: MpsState, ops) -> np.ndarray:
    """<op_s> for every site s; ``ops`` is a list with one operator (or None) per site."""
    left, right = _environments(state)
    nrm = np.real(left[-1][0, 0])
    out = np.full(state.n_sites, np.nan, dtype=complex)
    for s, op in enumerate(ops):
        if op is None:
            continue
        env = _transfer(left[s], state.tensors[s], op)
        out[s] = np.tensordot(env, right[s + 1], axes=([0, 1], [0, 1])) / nrm
    return out


def emitter_population(state: MpsState) -> float:
    d = state.local_dims[0]
    ops = [np.diag(np.arange(d, dtype=float))] + [None] * (state.n_sites - 1)
    return float(np.real(local_expectations(state, ops)[0]))


def occupations(state: MpsState) -> np.ndarray:
    """<b_i^dag b_i> for the chain sites."""
    ops = [None] + [np.diag(np.arange(d, dtype=float)) for d in state.local_dims[1:]]
    return np.real(local_expectations(state, ops)[1:])


def correlation_matrix(state: MpsState) -> np.ndarray:
    """<b_i^dag b_j> over chain sites, Hermitian (M, M)."""
    left, right = _environments(state)
    nrm = np.real(left[-1][0, 0])
    T = state.tensors
    M = state.n_sites - 1
    corr = np.zeros((M, M), dtype=complex)
    for i in range(M):
        s = i + 1
        a = annihilation(T[s].shape[1])
        n_op = a.T @ a
        corr[i, i] = np.tensordot(_transfer(left[s], T[s], n_op), right[s + 1], axes=([0, 1], [0, 1]))
        env = _transfer(left[s], T[s], a.T)
        for j in range(i + 1, M):
            s2 = j + 1
            a2 = annihilation(T[s2].shape[1])
            closed = _transfer(env, T[s2], a2)
            corr[i, j] = np.tensordot(closed, right[s2 + 1], axes=([0, 1], [0, 1]))
            env = _transfer(env, T[s2])
    corr = corr / nrm
    corr = np.triu(corr, 1) + np.triu(corr, 1).conj().T + np.diag(np.real(np.diag(corr)))
    return corr


def bond_expectation(state: MpsState, bond: int, op2) -> complex:
    """<op2> for a two-site operator (d_l*d_r square matrix) on (bond, bond+1)."""
    left, right = _environments(state)
    return _bond_expectation(state, left, right, bond, op2)


def _bond_expectation(state, left, right, bond, op2):
    A, B = state.tensors[bond], state.tensors[bond + 1]
    dl, dr = A.shape[1], B.shape[1]
    theta = np.tensordot(A, B, axes=(2, 0))
    op = op2.reshape(dl, dr, dl, dr)
    top = np.tensordot(op, theta, axes=([2, 3], [1, 2])).transpose(2, 0, 1, 3)
    val = np.tensordot(left[bond], top, axes=(0, 0))  # (a', dl, dr, b)
    val = np.tensordot(val, right[bond + 2], axes=(3, 0))  # (a', dl, dr, b')
    nrm = np.real(left[-1][0, 0])
    return complex(np.tensordot(val, theta.conj(), axes=([0, 1, 2, 3], [0, 1, 2, 3]))) / nrm


def energy(state: MpsState, bond_hamiltonians) -> float:
    left, right = _environments(state)
    return float(sum(np.real(_bond_expectation(state, left, right, b, h))
                     for b, h in enumerate(bond_hamiltonians)))


def bond_entropies(state: MpsState) -> np.ndarray:
    """Von Neumann entanglement entropy across every bond."""
    work = state.copy()
    move_center(work, 0)
    out = []
    T = work.tensors
    for s in range(work.n_sites - 1):
        chi_l, d, chi_r = T[s].shape
        U, S, Vh = sla.svd(T[s].reshape(chi_l * d, chi_r), full_matrices=False)
        T[s] = U.reshape(chi_l, d, -1)
        T[s + 1] = np.tensordot(S[:, None] * Vh, T[s + 1], axes=(1, 0))
        p = S ** 2 / np.sum(S ** 2)
        p = p[p > 1e-300]
        out.append(float(-np.sum(p * np.log(p))))
    return np.maximum(np.array(out), 0.0)


def measure(state: MpsState, what: str):
    """Dispatch to one of: population, occupations, correlations, entropies, norm."""
    if what == "population":
        return emitter_population(state)
    if what == "occupations":
        return occupations(state)
    if what == "correlations":
        return correlation_matrix(state)
    if what == "entropies":
        return bond_entropies(state)
    if what == "norm":
        return norm(state)
    raise ParameterError(f"unknown measurement {what!r}")


# ---------------------------------------------------------------------------
# checkpoints


def params_hash(params: ModelParams) -> str:
    blob = json.dumps(params.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def save_checkpoint(path, state: MpsState, params: ModelParams, step: int) -> None:
    manifest = {
        "format": "mmrabi-mps-checkpoint/1",
        "params": params.to_dict(),
        "params_hash": params_hash(params),
        "step": int(step),
        "center": state.center,
        "discarded_weight": state.discarded_weight,
        "shapes": [list(A.shape) for A in state.tensors],
    }
    arrays = {f"site_{i:04d}": A for i, A in enumerate(state.tensors)}
    arrays["discarded_log"] = np.asarray(state.discarded_log, dtype=float)
    with open(path, "wb") as fh:
        np.savez(fh, manifest=np.array(json.dumps(manifest, sort_keys=True)), **arrays)


def load_checkpoint(path):
    """Returns (state, manifest)."""
    with np.load(path, allow_pickle=False) as data:
        manifest = json.loads(str(data["manifest"]))
        n = len(manifest["shapes"])
        tensors = [data[f"site_{i:04d}"].copy() for i in range(n)]
        log = list(map(float, data["discarded_log"]))
    for A, shape in zip(tensors, manifest["shapes"]):
        if list(A.shape) != shape:
            raise ParameterError("checkpoint tensor shape does not match its header")
    state = MpsState(tensors, manifest["center"], manifest["discarded_weight"], log)
    return state, manifest
