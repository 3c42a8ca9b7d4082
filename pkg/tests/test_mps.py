import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from mmrabi import ConvergenceError, ModelParams, ParameterError, TruncationBudgetError
from mmrabi import exact
from mmrabi import mps
from mmrabi import tebd
from mmrabi.chain import build_chain_mapping, star_correlations
from mmrabi.model import EmitterKind
from mmrabi.operators import SIGMA_X, emitter_onsite, number

SMALL = ModelParams(g=0.3, mode_count=3, fock_cutoff=5)


def _random_state(seed, dims=(2, 3, 3, 3), chi=3):
    rng = np.random.default_rng(seed)
    tensors, left = [], 1
    for i, d in enumerate(dims):
        right = 1 if i == len(dims) - 1 else chi
        tensors.append(rng.normal(size=(left, d, right)) + 1j * rng.normal(size=(left, d, right)))
        left = right
    state = mps.MpsState(tensors, center=len(dims) - 1)
    mps.move_center(state, 0)
    A = state.tensors[0]
    state.tensors[0] = A / np.linalg.norm(A)
    return state


def test_initial_states():
    s = mps.init_product_state(SMALL, "e")
    assert mps.emitter_population(s) == pytest.approx(1.0)
    np.testing.assert_allclose(mps.occupations(s), 0.0)
    assert s.bond_dims == [1, 1, 1]
    np.testing.assert_allclose(mps.correlation_matrix(s), 0.0)
    plus = mps.init_product_state(SMALL, "+")
    sx = mps.local_expectations(plus, [SIGMA_X, None, None, None])[0]
    assert sx.real == pytest.approx(1.0)
    np.testing.assert_allclose(s.to_dense(), exact.initial_state(SMALL, "e", exact.FockBasis.for_params(SMALL)))
    with pytest.raises(ParameterError):
        mps.init_product_state(SMALL, "x")


@given(st.integers(0, 2 ** 31 - 1), st.integers(0, 3))
def test_move_center_keeps_state_and_isometries(seed, site):
    s = _random_state(seed)
    psi = s.to_dense()
    mps.move_center(s, site)
    np.testing.assert_allclose(s.to_dense(), psi, atol=1e-12)
    for i, A in enumerate(s.tensors):
        if i < site:
            m = A.reshape(-1, A.shape[2])
            np.testing.assert_allclose(m.conj().T @ m, np.eye(m.shape[1]), atol=1e-12)
        elif i > site:
            m = A.reshape(A.shape[0], -1)
            np.testing.assert_allclose(m @ m.conj().T, np.eye(m.shape[0]), atol=1e-12)
    assert mps.norm(s) == pytest.approx(1.0)


def test_truncated_svd_budget_and_signs():
    rng = np.random.default_rng(1)
    m = rng.normal(size=(8, 8))
    U, S, Vh, disc, hit = mps.truncated_svd(m, chi_max=3, svd_cut=1e-10)
    assert len(S) == 3 and hit
    full = np.linalg.svd(m, compute_uv=False)
    assert disc == pytest.approx(np.sum(full[3:] ** 2) / np.sum(full ** 2))
    assert np.linalg.norm(S) == pytest.approx(1.0)
    idx = np.argmax(np.abs(U), axis=0)
    assert np.all(U[idx, np.arange(3)].real > 0)
    again = mps.truncated_svd(m, 3, 1e-10)
    np.testing.assert_array_equal(again[0], U)


def test_decoupled_gates_factorize():
    p = SMALL.replace(g=0.0)
    mapping = build_chain_mapping(3)
    gates = tebd.trotter_gates(p, mapping)
    he = emitter_onsite(p)
    h1 = mapping.omegas[0] * number(5) / 2
    expected = np.kron(sla.expm(-0.1j * he), sla.expm(-0.1j * h1))
    np.testing.assert_allclose(gates.gate(0, 0.1).reshape(10, 10), expected, atol=1e-12)


def test_gate_time_reversal():
    gates = tebd.trotter_gates(SMALL)
    for b in range(gates.n_bonds):
        d = gates.dims[b] * gates.dims[b + 1]
        fwd = gates.gate(b, 0.05).reshape(d, d)
        back = gates.gate(b, -0.05).reshape(d, d)
        np.testing.assert_allclose(back, fwd.conj().T, atol=1e-12)
        np.testing.assert_allclose(fwd @ back, np.eye(d), atol=1e-12)


def test_bond_hamiltonians_sum_to_chain_hamiltonian():
    p = SMALL
    mapping = build_chain_mapping(3)
    hams = tebd.bond_hamiltonians(p, mapping)
    dims = [2, 5, 5, 5]
    total = np.zeros((250, 250))
    for b, h in enumerate(hams):
        left = int(np.prod(dims[:b]))
        right = int(np.prod(dims[b + 2:]))
        total += np.kron(np.kron(np.eye(left), h), np.eye(right))
    H = exact.assemble_hamiltonian(p, form="chain", mapping=mapping).toarray()
    np.testing.assert_allclose(total, H, atol=1e-12)
    with pytest.raises(ParameterError):
        tebd.bond_hamiltonians(p, build_chain_mapping(4))


def test_uncoupled_population_is_constant():
    p = SMALL.replace(g=0.0)
    cfg = tebd.EvolutionConfig(t_final=2.0, stride=50)
    ts, _ = tebd.evolve(mps.init_product_state(p, "e"), tebd.trotter_gates(p), cfg)
    np.testing.assert_allclose(ts["emitter_population"], 1.0, atol=1e-12)


def test_short_time_oracle_and_correlations():
    t_final = 1.0
    cfg = tebd.EvolutionConfig(t_final=t_final, stride=100, correlation_stride=1)
    mapping = build_chain_mapping(3)
    ts, state = tebd.evolve(mps.init_product_state(SMALL, "e"), tebd.trotter_gates(SMALL, mapping), cfg)
    ref = exact.evolve_exact(SMALL, "e", ts.times, form="chain", correlations=True)
    np.testing.assert_allclose(ts["emitter_population"], ref["emitter_population"], atol=1e-4)
    np.testing.assert_allclose(ts["occupations"], ref["occupations"], atol=1e-4)
    np.testing.assert_allclose(ts["correlations"], ref["correlations"], atol=1e-4)
    C = ts["correlations"][-1]
    np.testing.assert_allclose(C, C.conj().T, atol=1e-14)
    assert np.trace(star_correlations(mapping, C)).real == pytest.approx(np.trace(C).real, rel=1e-12)
    assert np.all(mps.bond_entropies(state) >= 0)
    assert np.all(np.diff(ts["discarded_weight"]) >= 0)


def _one_time_error(dt):
    p = ModelParams(g=0.5, mode_count=2, fock_cutoff=6)
    cfg = tebd.EvolutionConfig(dt=dt, t_final=1.0, stride=10 ** 6)
    ts, _ = tebd.evolve(mps.init_product_state(p, "e"), tebd.trotter_gates(p), cfg)
    ref = exact.evolve_exact(p, "e", [0.0, 1.0], form="chain")
    return abs(ts["emitter_population"][-1] - ref["emitter_population"][-1])


def test_second_order_convergence():
    e1, e2 = _one_time_error(0.1), _one_time_error(0.05)
    assert 3.0 < e1 / e2 < 5.0


def test_circuit_light_cone():
    p = ModelParams(g=0.6, mode_count=6, fock_cutoff=4)
    gates = tebd.trotter_gates(p)
    cfg = tebd.EvolutionConfig()
    s = mps.init_product_state(p, "e")
    tebd.apply_layers(s, gates, cfg, 1, 0.3)
    C = mps.correlation_matrix(s)
    assert np.abs(C[0, 0]) > 0
    np.testing.assert_array_equal(C[1:, 1:], 0)
    for k in range(2, 6):
        s = mps.init_product_state(p, "e")
        tebd.apply_layers(s, gates, cfg, k, 0.3)
        occ = mps.occupations(s)
        # k layers reach chain site k-1 at most
        assert np.all(occ[k:] == 0)
        assert occ[k - 1] > 0 or k % 2 == 1


def test_norm_and_energy_over_three_roundtrips():
    p = ModelParams(g=0.3, mode_count=2, fock_cutoff=5)
    cfg = tebd.EvolutionConfig(t_final=3 * 2 * math.pi, stride=200)
    ts, _ = tebd.evolve(mps.init_product_state(p, "e"), tebd.trotter_gates(p), cfg)
    assert np.max(np.abs(ts["norm"] - 1)) < 1e-6
    assert np.ptp(ts["energy"]) / abs(ts["energy"][0]) < 1e-4


def test_truncation_budget_error_carries_trace():
    p = ModelParams(g=0.8, mode_count=4, fock_cutoff=5)
    cfg = tebd.EvolutionConfig(chi_max=2, max_discarded=1e-12, t_final=3.0, stride=5)
    with pytest.raises(TruncationBudgetError) as info:
        tebd.evolve(mps.init_product_state(p, "e"), tebd.trotter_gates(p), cfg)
    trace = info.value.trace
    assert len(trace.times) >= 2
    assert "emitter_population" in trace.data


def test_kerr_emitter_runs_through_the_same_pipeline():
    p = ModelParams(g=0.3, mode_count=2, fock_cutoff=5, emitter=EmitterKind.kerr(2.0), emitter_cutoff=3)
    cfg = tebd.EvolutionConfig(t_final=1.0, stride=100)
    ts, _ = tebd.evolve(mps.init_product_state(p, "e"), tebd.trotter_gates(p), cfg)
    ref = exact.evolve_exact(p, "e", ts.times, form="chain")
    np.testing.assert_allclose(ts["emitter_population"], ref["emitter_population"], atol=1e-4)


def test_imaginary_time_ground_states():
    p = ModelParams(g=0.0, mode_count=2, fock_cutoff=3)
    gs = tebd.ground_state_imaginary(p)
    assert gs.energy == pytest.approx(-0.5, abs=1e-10)
    np.testing.assert_allclose(np.diag(gs.correlations).real, 0.0, atol=1e-12)
    p = ModelParams(g=0.4, mode_count=2, fock_cutoff=6)
    gs = tebd.ground_state_imaginary(p)
    e_exact, _ = exact.ground_state(p, form="chain")
    assert gs.energy == pytest.approx(e_exact, abs=1e-6)
    # energy decreases monotonically within each step-size stage
    trace = np.array([(dt, e) for dt, _, e in gs.energy_trace])
    for dt in np.unique(trace[:, 0]):
        e = trace[trace[:, 0] == dt, 1]
        assert np.all(np.diff(e) <= 1e-12)


def test_imaginary_time_non_convergence():
    with pytest.raises(ConvergenceError) as info:
        tebd.ground_state_imaginary(ModelParams(g=0.5, mode_count=2, fock_cutoff=4),
                                    schedule=((0.01, 0.05),), tol=1e-14)
    assert info.value.trace


def test_checkpoint_round_trip(tmp_path):
    p = SMALL
    cfg = tebd.EvolutionConfig(t_final=0.3, stride=10)
    _, s = tebd.evolve(mps.init_product_state(p, "e"), tebd.trotter_gates(p), cfg)
    path = tmp_path / "state.npz"
    mps.save_checkpoint(path, s, p, step=cfg.n_steps)
    loaded, header = mps.load_checkpoint(path)
    assert header["params_hash"] == mps.params_hash(p)
    assert header["step"] == cfg.n_steps
    for A, B in zip(s.tensors, loaded.tensors):
        np.testing.assert_array_equal(A, B)
    assert loaded.discarded_log == s.discarded_log
    assert loaded.center == s.center


def test_config_invariants():
    for kw in ({"dt": 0}, {"svd_cut": 1e-5}, {"chi_max": 1}, {"order": 4}, {"mode": "complex"}):
        with pytest.raises(ParameterError):
            tebd.EvolutionConfig(**kw)
