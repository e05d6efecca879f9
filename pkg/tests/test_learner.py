"""Local-update reconstruction: algebra oracle, convergence, and robustness."""

import numpy as np
import pytest

from shadow_mpo import (
    ConditioningError,
    GibbsSpec,
    LearnerConfig,
    build_local_normal_map,
    fidelities,
    generate_dataset,
    hermiticity_residual,
    ising_gibbs,
    learn,
    local_update_one_site,
    local_update_two_site,
    maximally_mixed,
    mpo_to_dense,
    mpo_trace,
    random_mpdo,
    reduced_density_matrix,
)
from shadow_mpo.learner import _update_window


def dense_window_map(sigma, j, window):
    """Jacobian of the window marginal w.r.t. tensor j, built densely.

    Columns are vec(window marginal) for each unit tensor in the slot; the
    normal matrix is J^dag J. Everything here is plain kron/einsum on the
    dense window, independent of the learner's environment contractions.
    """
    first, last = window
    n = sigma.num_qubits
    t = sigma.tensors[j - 1]
    cols = []
    for idx in np.ndindex(t.shape):
        unit = np.zeros_like(t)
        unit[idx] = 1.0
        probe = sigma.copy()
        probe.tensors[j - 1] = unit
        # trace out the complement densely
        full = mpo_to_dense(probe)
        d_left = 2 ** (first - 1)
        d_win = 2 ** (last - first + 1)
        d_right = 2 ** (n - last)
        arr = full.reshape(d_left, d_win, d_right, d_left, d_win, d_right)
        win = np.einsum("xwyxvy->wv", arr)
        cols.append(win.reshape(-1))
    return np.stack(cols, axis=1)


def test_normal_map_matches_dense_jacobian():
    sigma = random_mpdo(4, 2, 3)
    for j, ell in [(2, 1), (3, 1), (1, 1)]:
        window = _update_window(j, ell, 4, "one-site")
        jac = dense_window_map(sigma, j, window)
        want = jac.conj().T @ jac
        got = build_local_normal_map(sigma, j, ell)
        np.testing.assert_allclose(got, want, atol=1e-12)


def test_spanning_window_reproduces_target_in_one_sweep():
    # ell = 2 makes every two-site window cover all four qubits, so the local
    # solve is the unrestricted least-squares fit
    rho = random_mpdo(4, 2, 17)
    cfg = LearnerConfig(ell=2, chi_max=4, n_sweeps=2)
    rep = learn(None, cfg, exact_target=rho)
    fid = fidelities(rho, rep.sigma)
    assert 1.0 - fid.f_gm < 1e-10
    assert 1.0 - fid.f_max < 1e-10


def test_product_state_recovered_with_one_site_updates():
    rho = random_mpdo(5, 1, 23)
    cfg = LearnerConfig(ell=1, chi_max=1, n_sweeps=4, update_mode="one-site")
    rep = learn(None, cfg, exact_target=rho)
    assert 1.0 - fidelities(rho, rep.sigma).f_max < 1e-8


def test_exact_mode_converges_on_thermal_state():
    rho = ising_gibbs(GibbsSpec(num_qubits=8, beta=2.0, g=1.01, h=0.04))
    cfg = LearnerConfig(ell=1, chi_max=4, n_sweeps=10)
    rep = learn(None, cfg, exact_target=rho)
    fid = fidelities(rho, rep.sigma)
    assert 1.0 - fid.f_max < 1e-3
    assert rep.monitor_mode == "exact"
    assert rep.selected_sweep is not None


def test_converged_state_is_a_fixed_point():
    rho = ising_gibbs(GibbsSpec(num_qubits=6, beta=1.0, g=1.01, h=0.04))
    cfg = LearnerConfig(ell=2, chi_max=4, n_sweeps=8)
    rep = learn(None, cfg, exact_target=rho)
    sigma = rep.sigma
    f_before = fidelities(rho, sigma).f_gm
    for j in list(range(1, 6)) + list(range(5, 0, -1)):
        window = _update_window(j, cfg.ell, 6, "two-site")
        marginal = reduced_density_matrix(rho, window)
        sigma = local_update_two_site(sigma, j, marginal, cfg)
    f_after = fidelities(rho, sigma).f_gm
    assert abs(f_after - f_before) < 1e-8


def test_updates_preserve_trace_and_hermiticity():
    rho = ising_gibbs(GibbsSpec(num_qubits=6, beta=1.0, g=1.01, h=0.04))
    sigma = maximally_mixed(6)
    cfg = LearnerConfig(ell=1, chi_max=4)
    for j in (1, 3, 5):
        window = _update_window(j, 1, 6, "two-site")
        sigma = local_update_two_site(sigma, j, reduced_density_matrix(rho, window), cfg)
        assert mpo_trace(sigma).real == pytest.approx(1.0, abs=1e-12)
        # the relative Hermiticity gap has a cancellation floor near 1e-8
        assert hermiticity_residual(sigma) < 5e-8


def test_edge_windows_are_clipped():
    assert _update_window(1, 2, 16, "two-site") == (1, 4)
    assert _update_window(15, 2, 16, "two-site") == (13, 16)
    assert _update_window(8, 2, 16, "two-site") == (6, 11)
    assert _update_window(1, 1, 8, "one-site") == (1, 2)
    assert _update_window(8, 1, 8, "one-site") == (7, 8)


def test_window_mismatch_is_rejected():
    from shadow_mpo import IntervalShadow

    rho = ising_gibbs(GibbsSpec(num_qubits=6, beta=1.0, g=1.01, h=0.04))
    sigma = maximally_mixed(6)
    cfg = LearnerConfig(ell=1, chi_max=4)
    shadow = IntervalShadow(1, 4, reduced_density_matrix(rho, (1, 4)), 1)
    with pytest.raises(ValueError, match="window"):
        local_update_two_site(sigma, 4, shadow, cfg)  # j=4 wants (3, 6)
    with pytest.raises(ValueError, match="shape"):
        local_update_two_site(sigma, 2, np.eye(4, dtype=complex) / 4.0, cfg)


def test_singular_environment_raises_conditioning_error():
    sigma = maximally_mixed(5)
    sigma.tensors[0] = np.zeros_like(sigma.tensors[0])
    marginal = np.eye(8, dtype=complex) / 8.0
    with pytest.raises(ConditioningError):
        local_update_one_site(sigma, 2, marginal, LearnerConfig(ell=1, chi_max=4))


def test_noisy_learning_improves_with_data():
    rho = ising_gibbs(GibbsSpec(num_qubits=8, beta=2.0, g=1.01, h=0.04))
    sizes = [100, 400, 1600]
    medians = []
    for nul in sizes:
        errs = []
        for seed in range(5):
            ds = generate_dataset(rho, nul + 30, 256, nul, seed=6000 + 31 * seed)
            # monitor_k = 2 keeps the AFC monitor windows narrow enough for
            # the 30-basis testing split
            rep = learn(ds, LearnerConfig(ell=2, chi_max=4, n_sweeps=8, monitor_k=2))
            errs.append(1.0 - fidelities(rho, rep.sigma).f_gm)
        medians.append(float(np.median(errs)))
    assert medians[0] > medians[1] > medians[2]


def test_learner_reports_failed_sweeps():
    # two shots per basis starve the AFC monitor into degenerate factors
    rho = maximally_mixed(4)
    ds = generate_dataset(rho, n_bases=6, n_shots=2, n_learning=3, seed=1)
    with pytest.warns(UserWarning, match="monitor"):
        rep = learn(ds, LearnerConfig(ell=1, chi_max=2, n_sweeps=2))
    assert rep.selected_sweep is None
    assert all(row.error is not None for row in rep.sweep_trace)
    assert all(row.f_max_afc is None for row in rep.sweep_trace)


def test_config_validation():
    with pytest.raises(ValueError, match="4\\^ell"):
        LearnerConfig(ell=1, chi_max=5).validate()
    with pytest.raises(ValueError):
        LearnerConfig(ell=0).validate()
    with pytest.raises(ValueError):
        LearnerConfig(lambda_reg=-1.0).validate()
    with pytest.raises(ValueError):
        learn(None, LearnerConfig())
    ds = generate_dataset(maximally_mixed(4), n_bases=3, n_shots=4, n_learning=2, seed=3)
    with pytest.raises(ValueError, match="prior"):
        learn(ds, LearnerConfig(ell=1, chi_max=2, use_crm=True))


def test_monitor_k_requires_enough_qubits():
    rho = maximally_mixed(4)
    ds = generate_dataset(rho, n_bases=4, n_shots=8, n_learning=2, seed=2)
    with pytest.raises(ValueError, match="monitor_k"):
        learn(ds, LearnerConfig(ell=2, chi_max=4, monitor_k=3))
