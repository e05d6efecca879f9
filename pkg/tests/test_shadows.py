"""Statistical estimators: unbiasedness, variance bounds, and CRM reduction."""

import numpy as np
import pytest

from oracles import pauli_string_matrix
from shadow_mpo import (
    CircuitSpec,
    CrmPrior,
    DegenerateEstimateError,
    GibbsSpec,
    apply_depolarizing,
    afc_fidelity_exact,
    crm_interval_shadow,
    estimate_afc_fidelity,
    estimate_afc_purity,
    estimate_observable,
    estimate_overlap_with_known,
    estimate_purity_hamming,
    expectation,
    fit_depolarization_prior,
    generate_dataset,
    interval_shadow_average,
    interval_shadow_noise,
    ising_gibbs,
    kicked_ising_state,
    maximally_mixed,
    mps_to_mpo,
    mpo_purity,
    random_mpdo,
    reduced_density_matrix,
    zero_state,
)
from shadow_mpo.shadows import _purity_hamming

STATE = random_mpdo(5, 2, 123)
WINDOW = (2, 4)
EXACT_RDM = reduced_density_matrix(STATE, WINDOW)


def replica_datasets(state, n_replicas, n_bases, n_shots, base_seed):
    return [
        generate_dataset(state, n_bases, n_shots, n_bases, seed=base_seed + r)
        for r in range(n_replicas)
    ]


def assert_unbiased(samples, truth, label):
    samples = np.asarray(samples)
    mean = samples.mean()
    se = samples.std(ddof=1) / np.sqrt(len(samples))
    assert abs(mean - truth) <= 3.0 * se + 1e-12, (
        f"{label}: mean {mean:.5f} vs truth {truth:.5f} (3 SE = {3 * se:.5f})"
    )


def test_interval_shadow_unbiased():
    reps = replica_datasets(STATE, 40, 25, 64, base_seed=900)
    stack = np.stack([interval_shadow_average(ds, WINDOW).matrix for ds in reps])
    mean = stack.mean(axis=0)
    se = stack.std(axis=0, ddof=1) / np.sqrt(len(reps))
    gap = np.abs(mean - EXACT_RDM)
    assert np.all(gap <= 3.0 * np.abs(se) + 1e-12)


def test_observable_estimator_unbiased():
    truth = expectation(STATE, {2: "Z", 3: "X"})
    reps = replica_datasets(STATE, 40, 25, 64, base_seed=1300)
    samples = [estimate_observable(ds, {2: "Z", 3: "X"}) for ds in reps]
    assert_unbiased(samples, truth, "ZX observable")


def test_observable_variance_bound():
    # Var[o] <= 2^|I| ||O||_2^2 / M at one shot per basis; |I| = 2 Pauli
    # support gives ||O||_2^2 = 4 and bound 16/M.
    m_bases = 64
    reps = replica_datasets(STATE, 60, m_bases, 1, base_seed=1700)
    samples = np.array([estimate_observable(ds, {2: "Z", 3: "X"}) for ds in reps])
    bound = (2**2) * 4.0 / m_bases
    assert samples.var(ddof=1) <= bound


def test_shadow_error_within_chebyshev_bound():
    # Pr(||err||_2 >= eps) <= 4^w 2^w / (M eps^2); at the 95% level every
    # replica should stay far below eps for this loose bound
    w = WINDOW[1] - WINDOW[0] + 1
    m_bases = 250
    eps95 = np.sqrt(4**w * 2**w / (0.05 * m_bases))
    reps = replica_datasets(STATE, 20, m_bases, 1, base_seed=2100)
    errs = [
        np.linalg.norm(interval_shadow_average(ds, WINDOW).matrix - EXACT_RDM)
        for ds in reps
    ]
    assert np.quantile(errs, 0.95) < eps95


def test_hamming_purity_unbiased_and_signed_kernel_required():
    truth = float(np.einsum("xy,yx->", EXACT_RDM, EXACT_RDM).real)
    reps = replica_datasets(STATE, 50, 30, 64, base_seed=2500)
    signed = np.array([estimate_purity_hamming(ds, WINDOW, split="all") for ds in reps])
    assert_unbiased(signed, truth, "signed Hamming purity")
    # the unsigned 2^{-D} kernel is systematically off
    unsigned = np.array([_purity_hamming(ds, WINDOW, "all", base=2.0) for ds in reps])
    se = unsigned.std(ddof=1) / np.sqrt(len(unsigned))
    assert abs(unsigned.mean() - truth) > 5.0 * se


def test_overlap_with_known_unbiased():
    sigma = random_mpdo(5, 2, 321)
    target = reduced_density_matrix(sigma, WINDOW)
    truth = float(np.einsum("xy,yx->", EXACT_RDM, target).real)
    reps = replica_datasets(STATE, 40, 25, 64, base_seed=2900)
    samples = [estimate_overlap_with_known(ds, sigma, WINDOW, split="all") for ds in reps]
    assert_unbiased(samples, truth, "overlap with known")


def test_afc_estimate_tracks_exact_value():
    rho = ising_gibbs(GibbsSpec(num_qubits=6, beta=2.0, g=1.01, h=0.04))
    sigma = ising_gibbs(GibbsSpec(num_qubits=6, beta=1.0, g=1.01, h=0.04))
    ds = generate_dataset(rho, n_bases=1500, n_shots=256, n_learning=0, seed=77)
    got = estimate_afc_fidelity(ds, sigma, k=2, split="testing")
    want = afc_fidelity_exact(rho, sigma, k=2)
    assert got.f_max_afc == pytest.approx(want.f_max_afc, abs=0.05)
    assert got.f_gm_afc == pytest.approx(want.f_gm_afc, abs=0.05)
    roles = {f["role"] for f in got.factors}
    assert roles == {"pair", "interior"}


def test_afc_purity_estimate_and_degenerate_error():
    rho = ising_gibbs(GibbsSpec(num_qubits=6, beta=2.0, g=1.01, h=0.04))
    ds = generate_dataset(rho, n_bases=1500, n_shots=256, n_learning=0, seed=78)
    got = estimate_afc_purity(ds, k=2, split="testing")
    want = mpo_purity(rho)
    assert got == pytest.approx(want, rel=0.25)
    # starved statistics push a Hamming factor negative
    starved = generate_dataset(maximally_mixed(4), 4, 2, 0, seed=1)
    with pytest.raises(DegenerateEstimateError, match="non-positive"):
        estimate_afc_purity(starved, 2, split="testing")


def test_crm_with_exact_prior_suppresses_variance():
    prior = CrmPrior(mpo=STATE)
    reps = replica_datasets(STATE, 30, 10, 1024, base_seed=3300)
    plain = np.stack([interval_shadow_average(ds, WINDOW, split="all").matrix for ds in reps])
    crm = np.stack(
        [crm_interval_shadow(ds, prior, WINDOW, split="all").matrix for ds in reps]
    )
    var_plain = plain.var(axis=0, ddof=1).sum()
    var_crm = crm.var(axis=0, ddof=1).sum()
    assert var_crm < 0.1 * var_plain
    # CRM stays unbiased with an imperfect prior
    rough = CrmPrior(mpo=apply_depolarizing(STATE, 0.3))
    crm_rough = np.stack(
        [crm_interval_shadow(ds, rough, WINDOW, split="all").matrix for ds in reps]
    )
    mean = crm_rough.mean(axis=0)
    se = crm_rough.std(axis=0, ddof=1) / np.sqrt(len(reps))
    assert np.all(np.abs(mean - EXACT_RDM) <= 3.0 * np.abs(se) + 1e-12)


def test_crm_with_flat_prior_matches_plain_variance():
    psi = kicked_ising_state(CircuitSpec(num_qubits=5, depth=1))
    pure = mps_to_mpo(psi)
    flat = CrmPrior(mpo=maximally_mixed(5))
    reps = replica_datasets(pure, 30, 10, 256, base_seed=3700)
    plain = np.stack([interval_shadow_average(ds, WINDOW, split="all").matrix for ds in reps])
    crm = np.stack([crm_interval_shadow(ds, flat, WINDOW, split="all").matrix for ds in reps])
    ratio = crm.var(axis=0, ddof=1).sum() / plain.var(axis=0, ddof=1).sum()
    assert 0.8 < ratio < 1.2


def test_interval_shadow_noise_scales_with_bases():
    ds_small = generate_dataset(STATE, 50, 64, 50, seed=4100)
    ds_large = generate_dataset(STATE, 200, 64, 200, seed=4100)
    e_small = interval_shadow_noise(ds_small, WINDOW)
    e_large = interval_shadow_noise(ds_large, WINDOW)
    # quadrupling the bases should halve the noise, within estimator scatter
    assert 1.4 < e_small / e_large < 2.9
    single = generate_dataset(STATE, 1, 64, 1, seed=4200)
    assert interval_shadow_noise(single, WINDOW) == 1.0


def test_fit_depolarization_prior_recovers_amplitude():
    psi = kicked_ising_state(CircuitSpec(num_qubits=6, depth=1))
    noisy = apply_depolarizing(mps_to_mpo(psi), 0.15)
    ds = generate_dataset(noisy, n_bases=400, n_shots=256, n_learning=400, seed=4500)
    prior = fit_depolarization_prior(ds, psi, k=3)
    fitted = list(prior.fitted_p.values())
    assert len(fitted) == 4
    assert abs(np.median(fitted) - 0.15) < 0.05
    # the prior marginals then feed CRM corrections
    shadow = crm_interval_shadow(ds, prior, (2, 4))
    np.testing.assert_allclose(
        shadow.matrix, reduced_density_matrix(noisy, (2, 4)), atol=0.08
    )


def test_observable_on_zero_state():
    data = generate_dataset(zero_state(3), n_bases=600, n_shots=16, n_learning=600, seed=4900)
    z1 = estimate_observable(data, {1: "Z"})
    assert z1 == pytest.approx(1.0, abs=0.05)
    assert estimate_observable(data, "III") == 1.0
    x2 = estimate_observable(data, {2: "X"})
    assert abs(x2) < 0.15


def test_identity_support_shortcut_matches_dense():
    # sanity anchor for pauli_string_matrix used across oracle tests
    mat = pauli_string_matrix(3, {2: "Z"})
    want = np.kron(np.eye(2), np.kron(np.diag([1.0, -1.0]), np.eye(2)))
    np.testing.assert_array_equal(mat, want)
