"""Star-to-chain mapping of the linear-dispersion cavity.

The emitter couples to mode n with strength g*sqrt(n+1). A Lanczos
tridiagonalization of diag(1..M) seeded with the normalized coupling vector
yields an orthogonal U (rows are chain orbitals, ``b_i = sum_n U[i, n] a_n``)
such that the emitter couples only to chain site 0 with strength g*rho0 and
the photons hop between nearest neighbours. Energies are in units of omega_c.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, PrecisionError

ORTHOGONALITY_TOL = 1e-10


@dataclass(frozen=True)
class ChainMapping:
    U: np.ndarray
    omegas: np.ndarray
    hoppings: np.ndarray
    rho0: float

    @property
    def size(self) -> int:
        return len(self.omegas)

    def tridiagonal(self) -> np.ndarray:
        return np.diag(self.omegas) + np.diag(self.hoppings, 1) + np.diag(self.hoppings, -1)

    def to_csv(self) -> str:
        buf = io.StringIO(newline="")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["i", "omega_i", "t_i"])
        for i, w in enumerate(self.omegas):
            t = f"{self.hoppings[i]:.17g}" if i < len(self.hoppings) else ""
            writer.writerow([i, f"{w:.17g}", t])
        return buf.getvalue()


def lanczos_tridiagonalize(diagonal, seed, reorthogonalize=2):
    """Lanczos on a diagonal matrix with full reorthogonalization.

    Returns ``(alpha, beta, Q)`` with ``Q`` holding the Lanczos vectors as rows,
    so that ``Q @ diag(diagonal) @ Q.T`` is tridiagonal with diagonal ``alpha``
    and off-diagonal ``beta`` (all beta >= 0).
    """
    d = np.asarray(diagonal, dtype=float)
    size = len(d)
    q = np.asarray(seed, dtype=float)
    q = q / np.linalg.norm(q)
    Q = np.zeros((size, size))
    alpha = np.zeros(size)
    beta = np.zeros(max(size - 1, 0))
    Q[0] = q
    for k in range(size):
        w = d * Q[k]
        alpha[k] = Q[k] @ w
        if k == size - 1:
            break
        # classical Gram-Schmidt against every previous vector, repeated
        for _ in range(reorthogonalize):
            w = w - Q[: k + 1].T @ (Q[: k + 1] @ w)
        beta[k] = np.linalg.norm(w)
        if beta[k] < 1e-12 * max(1.0, abs(alpha[k])):
            raise PrecisionError(f"Lanczos breakdown at step {k}: invariant subspace of size {k + 1}")
        Q[k + 1] = w / beta[k]
    return alpha, beta, Q


def build_chain_mapping(M: int) -> ChainMapping:
    if int(M) != M or M < 1:
        raise ParameterError(f"mode count must be a positive integer, got {M}")
    M = int(M)
    energies = np.arange(1, M + 1, dtype=float)
    seed = np.sqrt(energies)
    rho0 = math.sqrt(M * (M + 1) / 2.0)
    alpha, beta, Q = lanczos_tridiagonalize(energies, seed)
    # gauge: flip every other orbital so that all hoppings are <= 0
    signs = (-1.0) ** np.arange(M)
    Q = Q * signs[:, None]
    hoppings = -beta
    deviation = np.max(np.abs(Q @ Q.T - np.eye(M)))
    if deviation > ORTHOGONALITY_TOL:
        raise PrecisionError(f"chain transform lost orthogonality: max|UU^T - I| = {deviation:.3e}")
    return ChainMapping(U=Q, omegas=alpha, hoppings=hoppings, rho0=rho0)


def closed_form_coefficients(M: int):
    """On-site energies and hopping magnitudes from the Hahn-polynomial recurrence.

    With N = M - 1, omega_i = 1 + A_i + C_i and |t_i| = sqrt(A_i * C_{i+1}).
    """
    N = M - 1
    i = np.arange(M, dtype=float)
    A = (i + 2) ** 2 * (N - i) / (2 * (i + 1) * (2 * i + 3))
    C = i ** 2 * (i + 2 + N) / (2 * (i + 1) * (2 * i + 1))
    omegas = 1.0 + A + C
    hop = np.sqrt(A[:-1] * C[1:])
    return A, C, omegas, hop


@dataclass
class ClosedFormReport:
    M: int
    max_omega_deviation: float
    max_hopping_deviation: float
    rho_ratios: np.ndarray
    orthogonality: float
    spectral_deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return (self.max_omega_deviation < self.tolerance
                and self.max_hopping_deviation < self.tolerance
                and self.orthogonality < ORTHOGONALITY_TOL
                and self.spectral_deviation < self.tolerance)

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "max_omega_deviation": self.max_omega_deviation,
            "max_hopping_deviation": self.max_hopping_deviation,
            "orthogonality": self.orthogonality,
            "spectral_deviation": self.spectral_deviation,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def verify_against_closed_form(mapping: ChainMapping, tol: float = 1e-8) -> ClosedFormReport:
    """Compare the numerical chain with the closed-form recurrence coefficients.

    The normalization ratios rho_{i+1}/rho_i are reported as |t_i|/A_i, i.e.
    from the relation |t_i| = A_i * rho_{i+1}/rho_i with the numerical hoppings.
    """
    M = mapping.size
    A, _, omegas, hop = closed_form_coefficients(M)
    dev_w = float(np.max(np.abs(mapping.omegas - omegas)))
    dev_t = float(np.max(np.abs(np.abs(mapping.hoppings) - hop), initial=0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.abs(mapping.hoppings) / A[:-1]
    ortho = float(np.max(np.abs(mapping.U @ mapping.U.T - np.eye(M))))
    eig = np.linalg.eigvalsh(mapping.tridiagonal())
    spec = float(np.max(np.abs(eig - np.arange(1, M + 1))))
    return ClosedFormReport(M, dev_w, dev_t, ratios, ortho, spec, tol)


def star_correlations(mapping: ChainMapping, chain_corr) -> np.ndarray:
    """Map chain correlations <b_i^dag b_j> to star correlations <a_n^dag a_m>.

    Accepts a single (M, M) matrix or a stack (..., M, M).
    """
    C = np.asarray(chain_corr)
    M = mapping.size
    if C.shape[-2:] != (M, M):
        raise ParameterError(f"correlation matrix shape {C.shape[-2:]} does not match chain size {M}")
    U = mapping.U
    return np.einsum("in,...ij,jm->...nm", U, C, U)


def chain_displacements(mapping: ChainMapping, star_amplitudes) -> np.ndarray:
    """Coherent amplitudes in the chain basis, b_i = sum_n U[i, n] a_n."""
    return mapping.U @ np.asarray(star_amplitudes)
