"""Tensor-network primitives checked against dense brute force."""

import numpy as np
import pytest

from oracles import (
    PAULI,
    afc_overlap_dense,
    afc_windows,
    gm_fidelity_dense,
    kron_chain,
    max_fidelity_dense,
    partial_trace,
)
from shadow_mpo import (
    MPOperator,
    MPState,
    NotTranslationInvariantError,
    afc_fidelity_exact,
    afc_partition,
    canonicalize,
    dense_to_mpo,
    dense_to_mps,
    expectation,
    fidelities,
    hermiticity_residual,
    load_state,
    maximally_mixed,
    mpo_add,
    mpo_dagger,
    mpo_overlap,
    mpo_purity,
    mpo_scale,
    mpo_to_dense,
    mpo_trace,
    mps_expectation,
    mps_norm,
    mps_operator_expectation,
    mps_overlap,
    mps_reduced_density_matrix,
    mps_to_dense,
    mps_to_mpo,
    normalize_mps,
    random_mpdo,
    random_mpo,
    reduced_density_matrix,
    renyi2_entropy,
    save_state,
    transfer_spectrum,
    von_neumann_entropy,
    zero_state,
)


def random_mps(n: int, chi: int, seed: int) -> MPState:
    rng = np.random.default_rng(seed)
    dims = [1] + [chi] * (n - 1) + [1]
    ts = []
    for j in range(n):
        t = rng.standard_normal((dims[j], 2, dims[j + 1])) + 1j * rng.standard_normal(
            (dims[j], 2, dims[j + 1])
        )
        ts.append(t / np.linalg.norm(t))
    return MPState(ts)


def test_product_mpo_matches_kron():
    # X (x) Z (x) I with qubit 1 most significant
    ts = [PAULI[p].reshape(1, 2, 2, 1) for p in "XZI"]
    dense = mpo_to_dense(MPOperator(ts))
    np.testing.assert_allclose(dense, kron_chain([PAULI["X"], PAULI["Z"], PAULI["I"]]))


def test_dense_mpo_roundtrip():
    rng = np.random.default_rng(3)
    mat = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    op = dense_to_mpo(mat)
    assert op.num_qubits == 4
    np.testing.assert_allclose(mpo_to_dense(op), mat, atol=1e-12)


def test_dense_mps_roundtrip():
    rng = np.random.default_rng(4)
    vec = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    psi = dense_to_mps(vec)
    assert psi.num_qubits == 5
    np.testing.assert_allclose(mps_to_dense(psi), vec, atol=1e-12)


def test_trace_overlap_purity_against_dense():
    for seed in range(4):
        a = random_mpo(5, 3, seed)
        b = random_mpo(5, 2, seed + 100)
        da, db = mpo_to_dense(a), mpo_to_dense(b)
        assert mpo_trace(a) == pytest.approx(np.trace(da), abs=1e-12)
        assert mpo_overlap(a, b) == pytest.approx(np.trace(da @ db), abs=1e-12)
        rho = random_mpdo(5, 2, seed)
        dr = mpo_to_dense(rho)
        assert mpo_purity(rho) == pytest.approx(np.trace(dr @ dr).real, abs=1e-12)


def test_reduced_density_matrix_against_partial_trace():
    rho = random_mpdo(6, 3, 7)
    dense = mpo_to_dense(rho)
    for first, last in [(1, 2), (2, 4), (4, 6), (3, 3), (1, 6)]:
        got = reduced_density_matrix(rho, (first, last))
        want = partial_trace(dense, first, last, 6)
        np.testing.assert_allclose(got, want, atol=1e-12)


def test_pauli_expectation_against_dense():
    rho = random_mpdo(4, 2, 11)
    dense = mpo_to_dense(rho)
    for pauli in ["XZII", "IIXY", "ZZZZ"]:
        want = np.trace(dense @ kron_chain([PAULI[p] for p in pauli])).real
        assert expectation(rho, pauli) == pytest.approx(want, abs=1e-12)
    # dict form addresses sites sparsely
    want = np.trace(dense @ kron_chain([PAULI[p] for p in "IZIX"])).real
    assert expectation(rho, {2: "Z", 4: "X"}) == pytest.approx(want, abs=1e-12)


def test_fidelities_match_dense_oracle():
    for seed in range(5):
        a = random_mpdo(4, 2, seed)
        b = random_mpdo(4, 3, seed + 50)
        da, db = mpo_to_dense(a), mpo_to_dense(b)
        got = fidelities(a, b)
        assert got.f_max == pytest.approx(max_fidelity_dense(da, db), abs=1e-10)
        assert got.f_gm == pytest.approx(gm_fidelity_dense(da, db), abs=1e-10)


def test_self_fidelity_is_one():
    rho = random_mpdo(5, 3, 21)
    got = fidelities(rho, rho)
    assert got.f_max == pytest.approx(1.0, abs=1e-12)
    assert got.f_gm == pytest.approx(1.0, abs=1e-12)


def test_afc_partition_blocks():
    assert afc_partition(8, 2) == [(1, 2), (3, 4), (5, 6), (7, 8)]
    # the trailing remainder is absorbed into the last block
    assert afc_partition(8, 3) == [(1, 3), (4, 8)]
    assert afc_partition(9, 2) == afc_windows(9, 2)
    # fewer than two blocks leaves no interior overlap to divide by
    with pytest.raises(ValueError):
        afc_partition(5, 5)
    with pytest.raises(ValueError):
        afc_partition(4, 5)


def test_afc_fidelity_against_dense():
    for n, k in [(5, 1), (5, 2), (6, 2), (6, 3)]:
        a = random_mpdo(n, 2, n * 10 + k)
        b = random_mpdo(n, 2, n * 10 + k + 1)
        da, db = mpo_to_dense(a), mpo_to_dense(b)
        got = afc_fidelity_exact(a, b, k)
        overlap = afc_overlap_dense(da, db, n, k)
        pa = afc_overlap_dense(da, da, n, k)
        pb = afc_overlap_dense(db, db, n, k)
        assert got.overlap == pytest.approx(overlap, abs=1e-10)
        assert got.f_max_afc == pytest.approx(overlap / max(pa, pb), abs=1e-10)
        assert got.f_gm_afc == pytest.approx(overlap / np.sqrt(pa * pb), abs=1e-10)


def test_afc_with_two_blocks_reduces_to_plain_fidelity():
    # k = N/2 leaves a single pair union covering the whole chain
    a = random_mpdo(4, 2, 91)
    b = random_mpdo(4, 2, 92)
    afc = afc_fidelity_exact(a, b, 2)
    plain = fidelities(a, b)
    assert afc.f_max_afc == pytest.approx(plain.f_max, abs=1e-10)
    assert afc.f_gm_afc == pytest.approx(plain.f_gm, abs=1e-10)


def test_renyi2_of_maximally_mixed_is_qubit_count():
    for n in (1, 3, 8):
        assert renyi2_entropy(maximally_mixed(n)) == pytest.approx(float(n), abs=1e-12)


def test_hermiticity_residual():
    rho = random_mpdo(4, 2, 31)
    assert hermiticity_residual(rho) < 1e-7
    skew = random_mpo(4, 2, 32)  # generic complex operator, far from Hermitian
    dense = mpo_to_dense(skew)
    want = np.linalg.norm(dense - dense.conj().T) / np.linalg.norm(dense)
    assert hermiticity_residual(skew) == pytest.approx(want, abs=1e-8)


def test_transfer_spectrum_against_dense_eigenvalues():
    rng = np.random.default_rng(17)
    t = rng.standard_normal((3, 2, 2, 3)) + 1j * rng.standard_normal((3, 2, 2, 3))
    op = MPOperator([t[:1, :, :, :1]] * 4)  # open chain, but spectrum wants uniform bulk
    uniform = MPOperator([t] * 4, periodic=True)
    mat = np.einsum("lssr->lr", t)
    want = np.linalg.eigvals(mat)
    want = want[np.argsort(-np.abs(want))]
    got = transfer_spectrum(uniform)
    np.testing.assert_allclose(np.abs(got.eigenvalues), np.abs(want), atol=1e-12)
    # sum of eigenvalue powers reproduces the periodic trace
    assert np.sum(got.eigenvalues**4) == pytest.approx(mpo_trace(uniform), abs=1e-10)
    assert op.num_qubits == 4


def test_transfer_spectrum_rejects_nonuniform_chain():
    a = random_mpo(4, 2, 1)
    with pytest.raises(NotTranslationInvariantError):
        transfer_spectrum(a)


def test_transfer_correlation_length():
    # diag(1, 1/e) transfer matrix has correlation length exactly 1
    t = np.zeros((2, 2, 2, 2), dtype=complex)
    t[0, 0, 0, 0] = 1.0
    t[1, 0, 0, 1] = np.exp(-1.0)
    op = MPOperator([t] * 3, periodic=True)
    spec = transfer_spectrum(op)
    assert spec.correlation_length == pytest.approx(1.0, abs=1e-12)


def test_canonicalize_keeps_state_and_makes_isometries():
    psi = random_mps(5, 3, 41)
    vec = mps_to_dense(psi)
    for center in (1, 3, 5):
        can = canonicalize(psi, center)
        got = mps_to_dense(can)
        # global phase is not fixed by canonicalization
        phase = got @ vec.conj() / abs(got @ vec.conj())
        np.testing.assert_allclose(got, phase * vec, atol=1e-10)
        for j in range(1, center):
            t = can.tensors[j - 1]
            m = t.reshape(-1, t.shape[2])
            np.testing.assert_allclose(m.conj().T @ m, np.eye(t.shape[2]), atol=1e-10)
        for j in range(center + 1, 6):
            t = can.tensors[j - 1]
            m = t.reshape(t.shape[0], -1)
            np.testing.assert_allclose(m @ m.conj().T, np.eye(t.shape[0]), atol=1e-10)


def test_von_neumann_entropy_of_bell_pair():
    bell = np.zeros(4)
    bell[0] = bell[3] = 1 / np.sqrt(2)
    psi = dense_to_mps(bell)
    assert von_neumann_entropy(psi, 1) == pytest.approx(1.0, abs=1e-12)
    assert von_neumann_entropy(zero_state(4), 2) == pytest.approx(0.0, abs=1e-12)


def test_mps_overlap_norm_expectation_against_dense():
    a = random_mps(4, 3, 51)
    b = random_mps(4, 2, 52)
    va, vb = mps_to_dense(a), mps_to_dense(b)
    assert mps_overlap(a, b) == pytest.approx(np.vdot(va, vb), abs=1e-12)
    assert mps_norm(a) == pytest.approx(np.linalg.norm(va), abs=1e-12)
    unit = normalize_mps(a)
    vu = mps_to_dense(unit)
    z1 = kron_chain([PAULI[p] for p in "ZIII"])
    assert mps_expectation(unit, {1: "Z"}) == pytest.approx(
        np.vdot(vu, z1 @ vu).real, abs=1e-12
    )


def test_mps_operator_expectation_and_rdm():
    psi = normalize_mps(random_mps(4, 2, 61))
    rho = random_mpdo(4, 2, 62)
    v = mps_to_dense(psi)
    dense = mpo_to_dense(rho)
    assert mps_operator_expectation(psi, rho) == pytest.approx(
        np.vdot(v, dense @ v).real, abs=1e-12
    )
    got = mps_reduced_density_matrix(psi, (2, 3))
    want = partial_trace(np.outer(v, v.conj()), 2, 3, 4)
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_mps_to_mpo_is_projector_onto_state():
    psi = normalize_mps(random_mps(3, 2, 71))
    v = mps_to_dense(psi)
    proj = mps_to_mpo(psi)
    np.testing.assert_allclose(mpo_to_dense(proj), np.outer(v, v.conj()), atol=1e-12)


def test_mpo_algebra_against_dense():
    a = random_mpo(4, 2, 81)
    b = random_mpo(4, 3, 82)
    da, db = mpo_to_dense(a), mpo_to_dense(b)
    np.testing.assert_allclose(mpo_to_dense(mpo_add(a, b)), da + db, atol=1e-12)
    np.testing.assert_allclose(mpo_to_dense(mpo_scale(a, 2.5j)), 2.5j * da, atol=1e-12)
    np.testing.assert_allclose(mpo_to_dense(mpo_dagger(a)), da.conj().T, atol=1e-12)
    summed = mpo_add(a, b)
    assert summed.bond_dimensions()[2] == a.bond_dimensions()[2] + b.bond_dimensions()[2]


def test_save_load_roundtrip(tmp_path):
    rho = random_mpdo(4, 2, 91)
    p = tmp_path / "rho.json"
    save_state(rho, p)
    back = load_state(p)
    assert isinstance(back, MPOperator)
    assert len(back.tensors) == 4
    for t0, t1 in zip(rho.tensors, back.tensors):
        np.testing.assert_array_equal(t0, t1)

    psi = random_mps(3, 2, 92)
    q = tmp_path / "psi.json"
    save_state(psi, q)
    back_psi = load_state(q)
    assert isinstance(back_psi, MPState)
    for t0, t1 in zip(psi.tensors, back_psi.tensors):
        np.testing.assert_array_equal(t0, t1)


def test_load_rejects_malformed_payload(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"kind": "mpo", "tensors": "nope"}')
    with pytest.raises(Exception):
        load_state(p)


def test_validate_flags_bond_mismatch():
    good = random_mpo(3, 2, 95)
    good.validate()
    bad = good.copy()
    bad.tensors[1] = np.zeros((3, 2, 2, 2), dtype=complex)
    with pytest.raises(ValueError):
        bad.validate()
