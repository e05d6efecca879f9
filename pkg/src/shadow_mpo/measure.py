"""Randomized local measurements: basis sampling, exact Born sampling, datasets.

Each measurement basis applies one Haar-random SU(2) per qubit; outcomes are
drawn from the exact Born distribution of the rotated state with a single
left-to-right sweep, vectorized across shots. Per-basis RNG streams are
derived from (seed, basis index) so datasets are reproducible independently
of evaluation order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _json
from .errors import DatasetFormatError, SamplingError
from .mpo import MPOperator, MPState, mps_to_mpo

DATASET_FORMAT = "rm-dataset"
DATASET_VERSION = 1


def sample_cue_unitary(rng: np.random.Generator) -> np.ndarray:
    """One 2x2 unitary from the circular unitary ensemble (Haar measure).

    QR of a complex Ginibre matrix, with the R diagonal phases folded into Q
    so the distribution is exactly Haar rather than QR-convention dependent.
    """
    z = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


@dataclass
class BasisRecord:
    """Outcomes of one randomized basis: unitaries (N,2,2), outcomes (N_M,N) in {0,1}."""

    index: int
    unitaries: np.ndarray
    outcomes: np.ndarray

    def validate(self) -> None:
        n = self.unitaries.shape[0]
        if self.unitaries.shape != (n, 2, 2):
            raise ValueError(f"unitaries shape {self.unitaries.shape}")
        if self.outcomes.ndim != 2 or self.outcomes.shape[1] != n:
            raise ValueError(f"outcomes shape {self.outcomes.shape} for {n} qubits")
        eye = np.eye(2)
        for j in range(n):
            u = self.unitaries[j]
            if not np.allclose(u.conj().T @ u, eye, atol=1e-12):
                raise ValueError(f"basis {self.index}: qubit {j + 1} unitary fails unitarity")
        if not np.isin(self.outcomes, (0, 1)).all():
            raise ValueError(f"basis {self.index}: outcomes must be bits")


@dataclass
class MeasurementDataset:
    """A collection of randomized-measurement records with a learning/testing split."""

    num_qubits: int
    shots_per_basis: int
    seed: int
    learning_bases: int
    records: list[BasisRecord]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def num_bases(self) -> int:
        return len(self.records)

    def split(self, which: str) -> list[BasisRecord]:
        if which == "learning":
            return self.records[: self.learning_bases]
        if which == "testing":
            return self.records[self.learning_bases :]
        if which == "all":
            return self.records
        raise ValueError(f"unknown split {which!r} (use learning/testing/all)")

    def validate(self) -> None:
        if not 0 <= self.learning_bases <= len(self.records):
            raise ValueError("learning split larger than the dataset")
        for rec in self.records:
            if rec.unitaries.shape[0] != self.num_qubits:
                raise ValueError(f"basis {rec.index}: wrong qubit count")
            if rec.outcomes.shape[0] != self.shots_per_basis:
                raise ValueError(f"basis {rec.index}: wrong shot count")
            rec.validate()


def _rotate_site(t: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.einsum("sx,lxyr,ty->lstr", u, t, u.conj(), optimize=True)


def sample_bitstrings(
    state: MPOperator | MPState,
    unitaries: np.ndarray,
    n_shots: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw exact Born-distribution samples of U rho U^dag in the computational basis.

    All shots advance together through one left-to-right sweep; per-shot
    boundary vectors are renormalized after each site so conditionals stay
    well scaled. Conditional probabilities below -1e-10 (relative) raise a
    sampling error; smaller negative values are clipped to zero.
    """
    if isinstance(state, MPState):
        state = mps_to_mpo(state)
    if state.periodic:
        raise ValueError("sampling implemented for open chains only")
    n = state.num_qubits
    if unitaries.shape != (n, 2, 2):
        raise ValueError(f"need {n} single-qubit unitaries, got {unitaries.shape}")
    rotated = [_rotate_site(t, unitaries[j]) for j, t in enumerate(state.tensors)]
    right = [np.ones(1, dtype=complex)]
    for t in reversed(rotated[1:]):
        right.append(np.einsum("lssr,r->l", t, right[-1]))
    right.reverse()  # right[j] closes sites j+2..N (0-based j)
    bits = np.zeros((n_shots, n), dtype=np.uint8)
    lvec = np.ones((n_shots, 1), dtype=complex)
    for j in range(n):
        v0 = rotated[j][:, 0, 0, :] @ right[j]
        v1 = rotated[j][:, 1, 1, :] @ right[j]
        p0 = (lvec @ v0).real
        p1 = (lvec @ v1).real
        total = p0 + p1
        if np.any(~np.isfinite(total)) or np.any(np.abs(total) < 1e-300):
            raise SamplingError(f"site {j + 1}: degenerate marginal normalization")
        c0 = p0 / total
        c1 = p1 / total
        worst = min(c0.min(), c1.min())
        if worst < -1e-10:
            raise SamplingError(
                f"site {j + 1}: conditional probability {worst:.3e} below tolerance"
            )
        c0 = np.clip(c0, 0.0, None)
        c1 = np.clip(c1, 0.0, None)
        c0 = c0 / (c0 + c1)
        draw = rng.random(n_shots)
        chosen = (draw >= c0).astype(np.uint8)
        bits[:, j] = chosen
        t0 = rotated[j][:, 0, 0, :]
        t1 = rotated[j][:, 1, 1, :]
        nxt = np.where(chosen[:, None] == 0, lvec @ t0, lvec @ t1)
        prob = np.where(chosen == 0, c0, 1.0 - c0)
        lvec = nxt / (total * prob)[:, None]
    return bits


def generate_dataset(
    state: MPOperator | MPState,
    n_bases: int,
    n_shots: int,
    n_learning: int,
    seed: int,
) -> MeasurementDataset:
    """Simulate a full randomized-measurement dataset from a reference state.

    Basis r uses the RNG stream SeedSequence(seed, spawn_key=(r,)), so any
    subset of bases can be regenerated without replaying the others.
    """
    if isinstance(state, MPState):
        state = mps_to_mpo(state)
    num_qubits = state.num_qubits
    if not 0 <= n_learning <= n_bases:
        raise ValueError("learning split must be within the dataset")
    records = []
    for r in range(n_bases):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(r,)))
        us = np.stack([sample_cue_unitary(rng) for _ in range(num_qubits)])
        outcomes = sample_bitstrings(state, us, n_shots, rng)
        records.append(BasisRecord(index=r, unitaries=us, outcomes=outcomes))
    ds = MeasurementDataset(
        num_qubits=num_qubits,
        shots_per_basis=n_shots,
        seed=seed,
        learning_bases=n_learning,
        records=records,
    )
    ds.validate()
    return ds


# ---------------------------------------------------------------------------
# Line-delimited JSON serialization


def write_dataset(dataset: MeasurementDataset, path: str | Path) -> None:
    """Header line, then one JSON record per basis (deterministic float format)."""
    header = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "num_qubits": dataset.num_qubits,
        "num_bases": dataset.num_bases,
        "shots_per_basis": dataset.shots_per_basis,
        "learning_bases": dataset.learning_bases,
        "seed": dataset.seed,
    }
    with open(path, "w") as handle:
        handle.write(_json.dumps(header) + "\n")
        for rec in dataset.records:
            row = {
                "r": rec.index,
                "u": [
                    [[float(z.real), float(z.imag)] for z in u.reshape(-1)]
                    for u in rec.unitaries
                ],
                "s": ["".join(str(b) for b in shot) for shot in rec.outcomes],
            }
            handle.write(_json.dumps(row) + "\n")


def _parse_record(obj: dict, num_qubits: int, shots: int, line_no: int) -> BasisRecord:
    try:
        index = int(obj["r"])
        raw_u = obj["u"]
        raw_s = obj["s"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"line {line_no}: malformed record ({exc})") from exc
    if len(raw_u) != num_qubits:
        raise DatasetFormatError(f"line {line_no}: expected {num_qubits} unitaries")
    us = np.zeros((num_qubits, 2, 2), dtype=complex)
    for j, entries in enumerate(raw_u):
        if len(entries) != 4:
            raise DatasetFormatError(f"line {line_no}: qubit {j + 1} unitary needs 4 entries")
        us[j] = np.array([complex(re, im) for re, im in entries]).reshape(2, 2)
    if len(raw_s) != shots:
        raise DatasetFormatError(
            f"line {line_no}: expected {shots} shots, found {len(raw_s)}"
        )
    outcomes = np.zeros((shots, num_qubits), dtype=np.uint8)
    for m, shot in enumerate(raw_s):
        if len(shot) != num_qubits or any(c not in "01" for c in shot):
            raise DatasetFormatError(f"line {line_no}: bad outcome string {shot!r}")
        outcomes[m] = [int(c) for c in shot]
    return BasisRecord(index=index, unitaries=us, outcomes=outcomes)


def read_dataset(path: str | Path) -> MeasurementDataset:
    path = Path(path)
    with open(path) as handle:
        lines = handle.read().splitlines()
    if not lines:
        raise DatasetFormatError(f"{path}: empty file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path}: line 1: invalid JSON ({exc.msg})") from exc
    if header.get("format") != DATASET_FORMAT:
        raise DatasetFormatError(f"{path}: not a {DATASET_FORMAT} file")
    if header.get("version") != DATASET_VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {header.get('version')!r}")
    try:
        num_qubits = int(header["num_qubits"])
        num_bases = int(header["num_bases"])
        shots = int(header["shots_per_basis"])
        learning = int(header["learning_bases"])
        seed = int(header["seed"])
    except (KeyError, ValueError) as exc:
        raise DatasetFormatError(f"{path}: header missing field ({exc})") from exc
    records = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"{path}: line {line_no}: invalid JSON ({exc.msg})") from exc
        records.append(_parse_record(obj, num_qubits, shots, line_no))
    if len(records) != num_bases:
        last = records[-1].index if records else None
        raise DatasetFormatError(
            f"{path}: header declares {num_bases} bases but {len(records)} complete "
            f"records found (last complete record r={last})"
        )
    ds = MeasurementDataset(
        num_qubits=num_qubits,
        shots_per_basis=shots,
        seed=seed,
        learning_bases=learning,
        records=records,
    )
    ds.validate()
    return ds
