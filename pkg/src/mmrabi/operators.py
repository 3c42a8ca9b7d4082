"""Local operators and initial emitter states shared by the exact and MPS engines.

Every local basis is ordered by excitation number: for the two-level emitter
index 0 is |g> and index 1 is |e>, so sigma^dag sigma = diag(0, 1) coincides
with the number operator of a cutoff-2 oscillator.
"""
import math

import numpy as np

from .errors import ParameterError
from .model import ModelParams


def annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)


def number(dim: int) -> np.ndarray:
    return np.diag(np.arange(dim, dtype=float))


SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])
SIGMA_Z = np.array([[-1.0, 0.0], [0.0, 1.0]])


def emitter_onsite(params: ModelParams) -> np.ndarray:
    """Emitter Hamiltonian: omega_x/2 sigma_z, or omega_x n + chi n(n-1) for Kerr."""
    if params.emitter.is_tls:
        return 0.5 * params.omega_x * SIGMA_Z
    n = number(params.emitter_cutoff)
    return params.omega_x * n + params.emitter.chi * n @ (n - np.eye(params.emitter_cutoff))


def emitter_coupling_op(params: ModelParams) -> np.ndarray:
    """Emitter factor of the coupling: sigma_x, or b + b^dag for Kerr."""
    if params.emitter.is_tls:
        return SIGMA_X
    b = annihilation(params.emitter_cutoff)
    return b + b.T


def emitter_vector(state, params: ModelParams) -> np.ndarray:
    """Local emitter state from a label ('g', 'e', '+', '-'), a Fock index, or a vector."""
    dim = params.emitter_cutoff
    vec = np.zeros(dim, dtype=complex)
    if isinstance(state, str):
        if state == "g":
            vec[0] = 1
        elif state == "e":
            vec[1] = 1
        elif state in ("+", "-"):
            vec[0] = 1 / math.sqrt(2)
            vec[1] = (1 if state == "+" else -1) / math.sqrt(2)
        else:
            raise ParameterError(f"unknown emitter state {state!r}")
        return vec
    if isinstance(state, (int, np.integer)):
        if not 0 <= state < dim:
            raise ParameterError(f"emitter Fock index {state} outside cutoff {dim}")
        vec[state] = 1
        return vec
    arr = np.asarray(state, dtype=complex)
    if arr.shape != (dim,) or not np.isclose(np.linalg.norm(arr), 1.0):
        raise ParameterError("emitter state vector must be normalized with the emitter dimension")
    return arr
