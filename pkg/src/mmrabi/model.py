"""Model parameters, unit conventions and symbolic Hamiltonian term lists.

Units: hbar = 1 and omega_c = 1 by default, so one cavity roundtrip lasts
2*pi. Positions are in units of the cavity length L with x in [-1/2, 1/2]
and the emitter at x = 0. The light speed is then c = L*omega_c/(2*pi).

Coupling convention. Internally the emitter couples through the real form
``g*sqrt(n+1)*sigma_x*(a_n + a_n^dag)``. The textbook form
``-i*g*sqrt(n+1)*sigma_x*(a_n - a_n^dag)`` is obtained by the mode rotation
``a_n -> i*a_n`` applied to every mode at once; populations, normally ordered
field correlations and spectra are invariant under it.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .errors import ParameterError

COUPLING_CONVENTION = "real: g*sqrt(n+1)*sx*(a_n + a_n^dag); a_n -> i*a_n gives -i*g*sqrt(n+1)*sx*(a_n - a_n^dag)"


@dataclass(frozen=True)
class UnitsConvention:
    hbar: float = 1.0
    omega_c: float = 1.0
    cavity_length: float = 1.0
    emitter_position: float = 0.0
    time_unit: str = "1/omega_c"
    field_unit: str = "hbar*g^2/(eps0*A*L*omega_c)"

    @property
    def light_speed(self) -> float:
        return self.cavity_length * self.omega_c / (2.0 * math.pi)

    @property
    def roundtrip(self) -> float:
        return 2.0 * math.pi / self.omega_c


UNITS = UnitsConvention()


def light_speed(omega_c: float = 1.0, length: float = 1.0) -> float:
    return length * omega_c / (2.0 * math.pi)


@dataclass(frozen=True)
class EmitterKind:
    """Emitter model: a two-level system or a Kerr oscillator with coefficient ``chi``."""

    kind: str = "tls"
    chi: float = 0.0

    def __post_init__(self):
        if self.kind not in ("tls", "kerr"):
            raise ParameterError(f"emitter kind must be 'tls' or 'kerr', got {self.kind!r}")
        if self.kind == "kerr" and self.chi < 0:
            raise ParameterError("invariant violated: chi >= 0 for a Kerr emitter")
        if self.kind == "tls" and self.chi != 0:
            raise ParameterError("chi is only meaningful for a Kerr emitter")

    @classmethod
    def tls(cls) -> "EmitterKind":
        return cls("tls")

    @classmethod
    def kerr(cls, chi: float) -> "EmitterKind":
        return cls("kerr", float(chi))

    @property
    def is_tls(self) -> bool:
        return self.kind == "tls"


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the emitter + multi-mode cavity model.

    ``mode_count`` is the number M of symmetric cavity modes, with mode index
    n = 0..M-1 and frequencies (n+1)*omega_c.
    """

    omega_x: float = 1.0
    g: float = 0.6
    mode_count: int = 50
    emitter: EmitterKind = field(default_factory=EmitterKind)
    fock_cutoff: int = 12
    emitter_cutoff: int = 2
    omega_c: float = 1.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not (self.omega_x > 0):
            raise ParameterError(f"invariant violated: omega_x > 0 (got {self.omega_x})")
        if not (self.omega_c > 0):
            raise ParameterError(f"invariant violated: omega_c > 0 (got {self.omega_c})")
        if not (self.g >= 0):
            raise ParameterError(f"invariant violated: g >= 0 (got {self.g})")
        if int(self.mode_count) != self.mode_count or self.mode_count < 1:
            raise ParameterError(f"invariant violated: mode_count >= 1 (got {self.mode_count})")
        if int(self.fock_cutoff) != self.fock_cutoff or self.fock_cutoff < 2:
            raise ParameterError(f"invariant violated: fock_cutoff >= 2 (got {self.fock_cutoff})")
        if self.emitter.is_tls and self.emitter_cutoff != 2:
            raise ParameterError(
                f"invariant violated: emitter_cutoff == 2 for a TLS (got {self.emitter_cutoff})")
        if self.emitter_cutoff < 2:
            raise ParameterError(f"invariant violated: emitter_cutoff >= 2 (got {self.emitter_cutoff})")

    @property
    def M(self) -> int:
        return int(self.mode_count)

    def replace(self, **changes) -> "ModelParams":
        data = self.to_dict()
        data.update(changes)
        return ModelParams.from_dict(data)

    def to_dict(self) -> dict:
        data = asdict(self)
        emitter = data.pop("emitter")
        data["emitter"] = emitter["kind"]
        data["chi"] = emitter["chi"]
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        data = dict(data)
        kind = data.pop("emitter", "tls")
        chi = float(data.pop("chi", 0.0))
        if isinstance(kind, EmitterKind):
            emitter = kind
        else:
            emitter = EmitterKind(kind, chi if kind == "kerr" else 0.0)
        if "emitter_cutoff" not in data:
            data["emitter_cutoff"] = 2 if emitter.is_tls else 4
        known = {"omega_x", "g", "mode_count", "fock_cutoff", "emitter_cutoff", "omega_c"}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown model parameter(s): {sorted(unknown)}")
        return cls(emitter=emitter, **data)


@dataclass(frozen=True)
class Term:
    sites: tuple
    op: str
    coeff: float


@dataclass(frozen=True)
class HamiltonianTerms:
    """Star-geometry term list. Site ``"e"`` is the emitter, integers are modes."""

    terms: tuple
    coupling_convention: str = COUPLING_CONVENTION

    def mode_energies(self) -> np.ndarray:
        return np.array([t.coeff for t in self.terms if t.op == "n" and t.sites != ("e",)])

    def couplings(self) -> np.ndarray:
        return np.array([t.coeff for t in self.terms if len(t.sites) == 2])

    def emitter_terms(self) -> list:
        return [t for t in self.terms if t.sites == ("e",)]

    def __len__(self):
        return len(self.terms)


def build_terms(params: ModelParams) -> HamiltonianTerms:
    params.validate()
    terms = []
    if params.emitter.is_tls:
        terms.append(Term(("e",), "sz", params.omega_x / 2.0))
        coupling_op = "sx*(a+adag)"
    else:
        terms.append(Term(("e",), "n", params.omega_x))
        if params.emitter.chi != 0:
            terms.append(Term(("e",), "bdag bdag b b", params.emitter.chi))
        coupling_op = "(b+bdag)*(a+adag)"
    for n in range(params.M):
        terms.append(Term((n,), "n", (n + 1) * params.omega_c))
    if params.g != 0:
        for n in range(params.M):
            terms.append(Term(("e", n), coupling_op, math.sqrt(n + 1) * params.g))
    return HamiltonianTerms(tuple(terms))


@dataclass
class CutoffDiagnostics:
    fock_cutoff: int
    threshold: float
    star_displacement: np.ndarray
    star_tail: np.ndarray
    chain_displacement: np.ndarray
    chain_tail: np.ndarray
    head_estimate: float
    passed: bool

    def summary(self) -> dict:
        return {
            "fock_cutoff": self.fock_cutoff,
            "threshold": self.threshold,
            "max_star_displacement": float(np.max(self.star_displacement, initial=0.0)),
            "max_star_tail": float(np.max(self.star_tail, initial=0.0)),
            "max_chain_displacement": float(np.max(self.chain_displacement, initial=0.0)),
            "max_chain_tail": float(np.max(self.chain_tail, initial=0.0)),
            "head_estimate": self.head_estimate,
            "passed": self.passed,
        }


def coherent_tail(amplitude, cutoff: int) -> np.ndarray:
    """Population of Fock states n >= cutoff in a coherent state of the given amplitude."""
    lam = np.abs(np.asarray(amplitude, dtype=float)) ** 2
    return stats.poisson.sf(cutoff - 1, lam)


def validate_cutoffs(params: ModelParams, threshold: float = 1e-6,
                     mapping: Optional[object] = None) -> CutoffDiagnostics:
    """Advisory check that the Fock cutoff holds the largest coherent displacements.

    Star mode n reaches at most 2*g/(omega_c*sqrt(n+1)). Chain sites use the
    largest amplitude of the displaced-oscillator solution projected onto each
    chain orbital over one roundtrip (the star maxima are never reached at
    the same time, so projecting them directly overestimates the chain).
    """
    from .chain import build_chain_mapping

    n = np.arange(params.M)
    star = 2.0 * params.g / (params.omega_c * np.sqrt(n + 1.0))
    if mapping is None:
        mapping = build_chain_mapping(params.M)
    chain = chain_amplitudes(params, mapping)
    head = 2.0 * params.g * mapping.rho0 / (params.omega_c * mapping.omegas[0])
    star_tail = coherent_tail(star, params.fock_cutoff)
    chain_tail = coherent_tail(chain, params.fock_cutoff)
    passed = bool(np.all(star_tail < threshold) and np.all(chain_tail < threshold))
    return CutoffDiagnostics(params.fock_cutoff, threshold, star, star_tail, chain, chain_tail,
                             float(head), passed)


def chain_amplitudes(params: ModelParams, mapping, samples: int = 4096) -> np.ndarray:
    """Largest |<b_i>| per chain site over one roundtrip of the displaced-oscillator solution."""
    t = np.linspace(0.0, 2.0 * math.pi / params.omega_c, samples + 1)
    k = np.arange(1, params.M + 1)
    beta = (1j * params.g / params.omega_c) / np.sqrt(k) * (np.exp(-1j * params.omega_c * np.outer(t, k)) - 1.0)
    return np.abs(beta @ mapping.U.T).max(axis=0)


def chain_cutoffs(params: ModelParams, threshold: float = 1e-8, mapping: Optional[object] = None,
                  samples: int = 4096) -> np.ndarray:
    """Per-site Fock dimensions for the chain, capped at ``params.fock_cutoff``.

    Each chain orbital gets the smallest dimension whose coherent-state tail,
    evaluated at the largest amplitude the site reaches during one roundtrip
    of the displaced-oscillator solution, stays below ``threshold``.
    """
    from .chain import build_chain_mapping

    if mapping is None:
        mapping = build_chain_mapping(params.M)
    amax = chain_amplitudes(params, mapping, samples)
    dims = np.full(params.M, params.fock_cutoff, dtype=int)
    for i, a in enumerate(amax):
        for d in range(2, params.fock_cutoff + 1):
            if coherent_tail(a, d) < threshold:
                dims[i] = d
                break
    return dims
