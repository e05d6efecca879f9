"""Basis sampling, Born-rule simulation, and dataset serialization."""

import numpy as np
import pytest
from scipy import stats

from oracles import born_probabilities
from shadow_mpo import (
    DatasetFormatError,
    generate_dataset,
    mpo_to_dense,
    random_mpdo,
    read_dataset,
    sample_bitstrings,
    sample_cue_unitary,
    write_dataset,
)


def test_cue_unitaries_are_unitary_and_haar():
    rng = np.random.default_rng(0)
    us = [sample_cue_unitary(rng) for _ in range(4000)]
    for u in us[:50]:
        np.testing.assert_allclose(u.conj().T @ u, np.eye(2), atol=1e-12)
    # first two moments of |u_00|^2 under Haar: 1/2 and 1/3
    p = np.array([abs(u[0, 0]) ** 2 for u in us])
    assert np.mean(p) == pytest.approx(0.5, abs=0.02)
    assert np.mean(p**2) == pytest.approx(1.0 / 3.0, abs=0.02)


def test_sampled_bitstrings_follow_born_distribution():
    rho = random_mpdo(3, 2, 5)
    rng = np.random.default_rng(7)
    shots = 8000
    for trial in range(3):
        us = np.stack([sample_cue_unitary(rng) for _ in range(3)])
        outcomes = sample_bitstrings(rho, us, shots, rng)
        codes = outcomes @ (1 << np.arange(2, -1, -1))
        counts = np.bincount(codes, minlength=8)
        probs = born_probabilities(mpo_to_dense(rho), us)
        chi2 = np.sum((counts - shots * probs) ** 2 / (shots * probs))
        assert chi2 < stats.chi2.ppf(0.9999, df=7)


def test_dataset_prefix_regeneration():
    # per-basis RNG streams make any prefix reproducible without the rest
    rho = random_mpdo(4, 2, 9)
    full = generate_dataset(rho, n_bases=8, n_shots=16, n_learning=6, seed=42)
    prefix = generate_dataset(rho, n_bases=3, n_shots=16, n_learning=3, seed=42)
    for a, b in zip(prefix.records, full.records[:3]):
        np.testing.assert_array_equal(a.unitaries, b.unitaries)
        np.testing.assert_array_equal(a.outcomes, b.outcomes)


def test_dataset_splits():
    rho = random_mpdo(3, 2, 11)
    ds = generate_dataset(rho, n_bases=5, n_shots=4, n_learning=3, seed=1)
    assert len(ds.split("learning")) == 3
    assert len(ds.split("testing")) == 2
    assert len(ds.split("all")) == 5
    with pytest.raises(ValueError):
        ds.split("holdout")


def test_dataset_roundtrip_is_bit_exact(tmp_path):
    rho = random_mpdo(4, 3, 13)
    ds = generate_dataset(rho, n_bases=6, n_shots=32, n_learning=4, seed=3)
    path = tmp_path / "data.jsonl"
    write_dataset(ds, path)
    back = read_dataset(path)
    assert back.num_qubits == 4
    assert back.shots_per_basis == 32
    assert back.learning_bases == 4
    assert back.seed == 3
    assert back.num_bases == 6
    for a, b in zip(ds.records, back.records):
        assert a.index == b.index
        np.testing.assert_array_equal(a.unitaries, b.unitaries)
        np.testing.assert_array_equal(a.outcomes, b.outcomes)
    # a second write of the parsed dataset is byte-identical
    path2 = tmp_path / "data2.jsonl"
    write_dataset(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_read_rejects_malformed_files(tmp_path):
    rho = random_mpdo(3, 2, 17)
    ds = generate_dataset(rho, n_bases=3, n_shots=8, n_learning=2, seed=5)
    path = tmp_path / "data.jsonl"
    write_dataset(ds, path)
    lines = path.read_text().splitlines()

    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    with pytest.raises(DatasetFormatError):
        read_dataset(empty)

    wrong_format = tmp_path / "wrong.jsonl"
    wrong_format.write_text('{"format": "something-else"}\n')
    with pytest.raises(DatasetFormatError, match="not a"):
        read_dataset(wrong_format)

    truncated = tmp_path / "short.jsonl"
    truncated.write_text("\n".join(lines[:2]) + "\n")
    with pytest.raises(DatasetFormatError):
        read_dataset(truncated)

    corrupt = tmp_path / "corrupt.jsonl"
    bad = lines.copy()
    bad[2] = bad[2].replace('"s"', '"x"', 1)
    corrupt.write_text("\n".join(bad) + "\n")
    with pytest.raises(DatasetFormatError, match="line 3"):
        read_dataset(corrupt)


def test_generate_dataset_validates_split():
    rho = random_mpdo(3, 2, 19)
    with pytest.raises(ValueError):
        generate_dataset(rho, n_bases=2, n_shots=4, n_learning=3, seed=0)
