"""Matrix product operators and states: algebra, reductions, fidelities.

Conventions used throughout the package:

* An MPO site tensor has index order ``(left bond, phys out, phys in, right
  bond)``; an MPS site tensor has ``(left bond, phys, right bond)``. Physical
  dimension is 2 (qubits), sites are numbered 1..N.
* The dense matrix element is ``rho[x, y] = <x|rho|y>`` where the bitstring
  ``x = x_1 x_2 ... x_N`` has qubit 1 as the most significant bit.
* Open boundaries have bond dimension 1 at both ends. A periodic chain keeps
  matching boundary bonds and closes the trace over them.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import _json
from .errors import (
    CapacityError,
    DegenerateFactorizationError,
    NotTranslationInvariantError,
)

MAX_DENSE_MPO_QUBITS = 10
MAX_DENSE_MPS_QUBITS = 20
MAX_WINDOW_QUBITS = 12


@dataclass
class MPOperator:
    """Operator on N qubits as a chain of (left, out, in, right) tensors."""

    tensors: list[np.ndarray]
    periodic: bool = False

    @property
    def num_qubits(self) -> int:
        return len(self.tensors)

    def bond_dimensions(self) -> list[int]:
        """Bond sizes chi_1..chi_{N+1} (left of site 1 through right of site N)."""
        return [t.shape[0] for t in self.tensors] + [self.tensors[-1].shape[3]]

    def validate(self) -> None:
        if not self.tensors:
            raise ValueError("MPOperator needs at least one site tensor")
        for j, t in enumerate(self.tensors, start=1):
            if t.ndim != 4 or t.shape[1] != 2 or t.shape[2] != 2:
                raise ValueError(f"site {j}: expected shape (chi, 2, 2, chi'), got {t.shape}")
            if j > 1 and t.shape[0] != self.tensors[j - 2].shape[3]:
                raise ValueError(f"bond mismatch between sites {j - 1} and {j}")
        left, right = self.tensors[0].shape[0], self.tensors[-1].shape[3]
        if self.periodic:
            if left != right:
                raise ValueError("periodic chain needs matching boundary bonds")
        elif left != 1 or right != 1:
            raise ValueError("open chain needs boundary bonds of dimension 1")

    def copy(self) -> "MPOperator":
        return MPOperator([t.copy() for t in self.tensors], self.periodic)


@dataclass
class MPState:
    """Pure state on N qubits as a chain of (left, phys, right) tensors.

    ``center`` tracks the orthogonality center after canonicalize(); it is
    None for states in no particular gauge.
    """

    tensors: list[np.ndarray]
    periodic: bool = False
    center: int | None = field(default=None, compare=False)

    @property
    def num_qubits(self) -> int:
        return len(self.tensors)

    def bond_dimensions(self) -> list[int]:
        return [t.shape[0] for t in self.tensors] + [self.tensors[-1].shape[2]]

    def validate(self) -> None:
        if not self.tensors:
            raise ValueError("MPState needs at least one site tensor")
        for j, t in enumerate(self.tensors, start=1):
            if t.ndim != 3 or t.shape[1] != 2:
                raise ValueError(f"site {j}: expected shape (chi, 2, chi'), got {t.shape}")
            if j > 1 and t.shape[0] != self.tensors[j - 2].shape[2]:
                raise ValueError(f"bond mismatch between sites {j - 1} and {j}")
        left, right = self.tensors[0].shape[0], self.tensors[-1].shape[2]
        if self.periodic:
            if left != right:
                raise ValueError("periodic chain needs matching boundary bonds")
        elif left != 1 or right != 1:
            raise ValueError("open chain needs boundary bonds of dimension 1")

    def copy(self) -> "MPState":
        return MPState([t.copy() for t in self.tensors], self.periodic, self.center)


class Fidelities(NamedTuple):
    f_max: float
    f_gm: float


class AfcValue(NamedTuple):
    f_max_afc: float
    f_gm_afc: float
    overlap: float
    purity_a: float
    purity_b: float


@dataclass
class TransferSpectrum:
    """Eigenvalues of a transfer operator, sorted by magnitude then phase."""

    eigenvalues: np.ndarray
    kind: str
    correlation_length: float


def _interval(op_sites: int, interval: tuple[int, int]) -> tuple[int, int]:
    first, last = int(interval[0]), int(interval[1])
    if not (1 <= first <= last <= op_sites):
        raise ValueError(f"interval {interval} out of range for {op_sites} sites")
    return first, last


def _trace_transfer(t: np.ndarray) -> np.ndarray:
    return np.einsum("lssr->lr", t)


def mpo_trace(op: MPOperator) -> complex:
    """tr[rho], folding the traced site transfer matrices left to right."""
    env = np.eye(op.tensors[0].shape[0], dtype=complex)
    for t in op.tensors:
        env = env @ _trace_transfer(t)
    return complex(np.trace(env))


def mpo_overlap(a: MPOperator, b: MPOperator) -> complex:
    """tr[a b] for two MPOs on the same number of sites."""
    if a.num_qubits != b.num_qubits:
        raise ValueError("operator length mismatch")
    if a.periodic or b.periodic:
        chi_a = a.tensors[0].shape[0]
        chi_b = b.tensors[0].shape[0]
        env = np.eye(chi_a * chi_b, dtype=complex)
        for ta, tb in zip(a.tensors, b.tensors):
            k = np.einsum("astr,btsq->abrq", ta, tb)
            k = k.reshape(ta.shape[0] * tb.shape[0], ta.shape[3] * tb.shape[3])
            env = env @ k
        return complex(np.trace(env))
    env = np.ones((1, 1), dtype=complex)
    for ta, tb in zip(a.tensors, b.tensors):
        env = np.einsum("ab,astr,btsq->rq", env, ta, tb, optimize=True)
    return complex(env[0, 0])


def mpo_purity(op: MPOperator) -> float:
    """tr[rho^2]; real for Hermitian input."""
    return float(mpo_overlap(op, op).real)


def renyi2_entropy(op: MPOperator) -> float:
    """S2 = -log2 tr[rho^2]."""
    p = mpo_purity(op)
    if p <= 0.0:
        raise ValueError(f"purity {p} is not positive, entropy undefined")
    return float(-math.log2(p))


def hermiticity_residual(op: MPOperator) -> float:
    """Relative Hilbert-Schmidt distance ||rho - rho^dag||_2 / ||rho||_2."""
    n2 = mpo_overlap(op, mpo_dagger(op)).real
    if n2 <= 0.0:
        return 0.0
    gap = 2.0 * n2 - 2.0 * mpo_overlap(op, op).real
    return float(math.sqrt(max(gap, 0.0)) / math.sqrt(n2))


def _boundary_envs(op: MPOperator, first: int, last: int) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Traced environment of the complement of [first, last].

    Open chains return the pair (left row vector, right column vector);
    periodic chains return the complement transfer product as a matrix with
    indices (right bond of site `last`, left bond of site `first`).
    """
    ts = op.tensors
    n = len(ts)
    if op.periodic:
        env = np.eye(ts[last - 1].shape[3], dtype=complex)
        for j in list(range(last + 1, n + 1)) + list(range(1, first)):
            env = env @ _trace_transfer(ts[j - 1])
        return env
    left = np.ones(1, dtype=complex)
    for j in range(1, first):
        left = left @ _trace_transfer(ts[j - 1])
    right = np.ones(1, dtype=complex)
    for j in range(n, last, -1):
        right = _trace_transfer(ts[j - 1]) @ right
    return left, right


def _interleaved_to_matrix(block: np.ndarray, width: int) -> np.ndarray:
    """(s1,t1,s2,t2,...) axes -> 2^w x 2^w matrix with site 1 most significant."""
    perm = list(range(0, 2 * width, 2)) + list(range(1, 2 * width, 2))
    return block.transpose(perm).reshape(2**width, 2**width)


def reduced_density_matrix(op: MPOperator, interval: tuple[int, int]) -> np.ndarray:
    """Dense reduced operator on a contiguous interval (1-based, inclusive).

    Complement sites are traced through their transfer matrices, so the cost
    is linear in N and exponential only in the interval width (guarded at
    12 sites).
    """
    first, last = _interval(op.num_qubits, interval)
    width = last - first + 1
    if width > MAX_WINDOW_QUBITS:
        raise CapacityError(f"interval width {width} exceeds guard {MAX_WINDOW_QUBITS}")
    envs = _boundary_envs(op, first, last)
    if op.periodic:
        # env[r_last, l_first]: fold window sites onto the l_first leg, then
        # close the loop by tracing r_last against the final right bond.
        block = envs
        for j in range(first, last + 1):
            block = np.tensordot(block, op.tensors[j - 1], axes=([-1], [0]))
        block = np.trace(block, axis1=0, axis2=block.ndim - 1)
    else:
        left, right = envs
        block = left
        for j in range(first, last + 1):
            block = np.tensordot(block, op.tensors[j - 1], axes=([-1], [0]))
        block = np.tensordot(block, right, axes=([-1], [0]))
    return _interleaved_to_matrix(block, width)


_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli_string(op_sites: int, pauli: str | dict[int, str]) -> str:
    """Normalize a Pauli specification to an IXYZ string of length N."""
    if isinstance(pauli, dict):
        letters = ["I"] * op_sites
        for site, letter in pauli.items():
            if not (1 <= int(site) <= op_sites):
                raise ValueError(f"Pauli site {site} out of range")
            letters[int(site) - 1] = letter
        pauli = "".join(letters)
    pauli = pauli.upper()
    if len(pauli) != op_sites:
        raise ValueError(f"Pauli string length {len(pauli)} != {op_sites} sites")
    if any(c not in _PAULI for c in pauli):
        raise ValueError(f"Pauli string may only contain IXYZ, got {pauli!r}")
    return pauli


def expectation(op: MPOperator, pauli: str | dict[int, str]) -> float:
    """tr[rho P] for a Pauli string P, as a real number."""
    pauli = pauli_string(op.num_qubits, pauli)
    env = np.eye(op.tensors[0].shape[0], dtype=complex)
    for t, letter in zip(op.tensors, pauli):
        env = env @ np.einsum("lstr,ts->lr", t, _PAULI[letter])
    return float(np.trace(env).real)


def fidelities(a: MPOperator, b: MPOperator) -> Fidelities:
    """Max fidelity tr[ab]/max(tr a^2, tr b^2) and its geometric-mean variant.

    Inputs are expected trace-1; off-trace inputs are renormalized with a
    warning so the returned values always refer to unit-trace operators.
    """
    ta = mpo_trace(a).real
    tb = mpo_trace(b).real
    for name, tr in (("first", ta), ("second", tb)):
        if abs(tr - 1.0) > 1e-8:
            warnings.warn(f"{name} operator has trace {tr:.6g}; renormalizing", stacklevel=2)
    if ta == 0.0 or tb == 0.0:
        raise ValueError("cannot renormalize a traceless operator")
    overlap = mpo_overlap(a, b).real / (ta * tb)
    pa = mpo_purity(a) / ta**2
    pb = mpo_purity(b) / tb**2
    denom = max(pa, pb)
    if denom <= 0.0 or pa <= 0.0 or pb <= 0.0:
        raise ValueError("non-positive purity, fidelity undefined")
    return Fidelities(f_max=overlap / denom, f_gm=overlap / math.sqrt(pa * pb))


def afc_partition(num_qubits: int, k: int) -> list[tuple[int, int]]:
    """Split 1..N into floor(N/k) intervals of size k, the last absorbing N mod k."""
    if k < 1:
        raise ValueError("k must be at least 1")
    r = num_qubits // k
    if r < 2:
        raise ValueError(f"need at least two intervals: N={num_qubits}, k={k}")
    bounds = [( (j - 1) * k + 1, j * k) for j in range(1, r)]
    bounds.append(((r - 1) * k + 1, num_qubits))
    return bounds


def _window_overlap(a: MPOperator, b: MPOperator, window: tuple[int, int]) -> float:
    ra = reduced_density_matrix(a, window)
    rb = reduced_density_matrix(b, window)
    return float(np.einsum("xy,yx->", ra, rb).real)


def afc_overlap_exact(a: MPOperator, b: MPOperator, k: int) -> float:
    """Factorized overlap: products of pair-window overlaps over interior-window overlaps."""
    if a.num_qubits != b.num_qubits:
        raise ValueError("operator length mismatch")
    parts = afc_partition(a.num_qubits, k)
    value = 1.0
    for j in range(len(parts) - 1):
        value *= _window_overlap(a, b, (parts[j][0], parts[j + 1][1]))
    for j in range(1, len(parts) - 1):
        d = _window_overlap(a, b, parts[j])
        if d <= 0.0:
            raise DegenerateFactorizationError(
                f"window {parts[j]} has non-positive overlap {d:.3e}"
            )
        value /= d
    return value


def afc_purity_exact(a: MPOperator, k: int) -> float:
    """Factorized purity, i.e. the factorized overlap of a with itself."""
    return afc_overlap_exact(a, a, k)


def afc_fidelity_exact(a: MPOperator, b: MPOperator, k: int) -> AfcValue:
    """Factorized max and geometric-mean fidelities from exact window marginals."""
    overlap = afc_overlap_exact(a, b, k)
    pa = afc_purity_exact(a, k)
    pb = afc_purity_exact(b, k)
    if pa <= 0.0 or pb <= 0.0:
        raise DegenerateFactorizationError(
            f"non-positive factorized purity (a: {pa:.3e}, b: {pb:.3e})"
        )
    return AfcValue(
        f_max_afc=overlap / max(pa, pb),
        f_gm_afc=overlap / math.sqrt(pa * pb),
        overlap=overlap,
        purity_a=pa,
        purity_b=pb,
    )


def transfer_spectrum(a: MPOperator, b: MPOperator | None = None, n: int = 1) -> TransferSpectrum:
    """Spectrum of the n-fold (or mixed) transfer operator of a uniform chain.

    Requires literally identical site tensors; the full eigenvalue list is
    returned so that sum(lambda^N) reproduces traced moments of periodic
    chains. The correlation length is -1/log|e1/e0|.
    """

    def _uniform(op: MPOperator) -> np.ndarray:
        t0 = op.tensors[0]
        for j, t in enumerate(op.tensors[1:], start=2):
            if t.shape != t0.shape or not np.array_equal(t, t0):
                raise NotTranslationInvariantError(f"site {j} tensor differs from site 1")
        return t0

    ta = _uniform(a)
    if b is not None:
        tb = _uniform(b)
        mat = np.einsum("lstr,mtsq->lmrq", ta, tb)
        mat = mat.reshape(ta.shape[0] * tb.shape[0], ta.shape[3] * tb.shape[3])
        kind = "mixed"
    elif n == 1:
        mat = _trace_transfer(ta)
        kind = "single"
    elif n == 2:
        mat = np.einsum("lstr,mtsq->lmrq", ta, ta)
        mat = mat.reshape(ta.shape[0] ** 2, ta.shape[3] ** 2)
        kind = "doubled"
    else:
        raise ValueError(f"transfer order n={n} not supported (use 1 or 2)")
    if mat.shape[0] != mat.shape[1]:
        raise NotTranslationInvariantError("boundary bonds differ, chain is not uniform")
    eig = np.linalg.eigvals(mat)
    order = np.lexsort((np.angle(eig), -np.abs(eig)))
    eig = eig[order]
    if len(eig) < 2 or abs(eig[0]) == 0.0:
        xi = math.inf
    else:
        ratio = abs(eig[1]) / abs(eig[0])
        if ratio >= 1.0 - 1e-12:
            xi = math.inf
        elif ratio == 0.0:
            xi = 0.0
        else:
            xi = -1.0 / math.log(ratio)
    return TransferSpectrum(eigenvalues=eig, kind=kind, correlation_length=xi)


# ---------------------------------------------------------------------------
# MPS operations


def mps_norm(psi: MPState) -> float:
    return float(math.sqrt(max(mps_overlap(psi, psi).real, 0.0)))


def mps_overlap(a: MPState, b: MPState) -> complex:
    """<a|b> (first argument conjugated)."""
    if a.num_qubits != b.num_qubits:
        raise ValueError("state length mismatch")
    if a.periodic or b.periodic:
        chi = a.tensors[0].shape[0] * b.tensors[0].shape[0]
        env = np.eye(chi, dtype=complex)
        for ta, tb in zip(a.tensors, b.tensors):
            k = np.einsum("asr,bsq->abrq", ta.conj(), tb)
            env = env @ k.reshape(ta.shape[0] * tb.shape[0], ta.shape[2] * tb.shape[2])
        return complex(np.trace(env))
    env = np.ones((1, 1), dtype=complex)
    for ta, tb in zip(a.tensors, b.tensors):
        env = np.einsum("ab,asr,bsq->rq", env, ta.conj(), tb, optimize=True)
    return complex(env[0, 0])


def normalize_mps(psi: MPState) -> MPState:
    norm = mps_norm(psi)
    if norm == 0.0:
        raise ValueError("cannot normalize the zero state")
    out = psi.copy()
    out.tensors[0] = out.tensors[0] / norm
    return out


def mps_expectation(psi: MPState, pauli: str | dict[int, str]) -> float:
    """<psi|P|psi> for a Pauli string, assuming a normalized state."""
    pauli = pauli_string(psi.num_qubits, pauli)
    if psi.periodic:
        raise ValueError("Pauli expectation implemented for open chains only")
    env = np.ones((1, 1), dtype=complex)
    for t, letter in zip(psi.tensors, pauli):
        rotated = np.einsum("st,ltr->lsr", _PAULI[letter], t)
        env = np.einsum("ab,asr,bsq->rq", env, t.conj(), rotated, optimize=True)
    return float(env[0, 0].real)


def mps_operator_expectation(psi: MPState, op: MPOperator) -> float:
    """<psi|O|psi> for an MPO, zippered in one pass."""
    if psi.num_qubits != op.num_qubits:
        raise ValueError("length mismatch")
    if psi.periodic or op.periodic:
        raise ValueError("implemented for open chains only")
    env = np.ones((1, 1, 1), dtype=complex)
    for a, w in zip(psi.tensors, op.tensors):
        env = np.einsum("xoy,xsa,ostp,ytb->apb", env, a.conj(), w, a, optimize=True)
    return float(env[0, 0, 0].real)


def mps_reduced_density_matrix(psi: MPState, interval: tuple[int, int]) -> np.ndarray:
    """Dense reduced density matrix of a pure state on a contiguous interval."""
    first, last = _interval(psi.num_qubits, interval)
    width = last - first + 1
    if width > MAX_WINDOW_QUBITS:
        raise CapacityError(f"interval width {width} exceeds guard {MAX_WINDOW_QUBITS}")
    if psi.periodic:
        raise ValueError("implemented for open chains only")
    left = np.ones((1, 1), dtype=complex)
    for j in range(1, first):
        t = psi.tensors[j - 1]
        left = np.einsum("ab,asr,bsq->rq", left, t.conj(), t, optimize=True)
    right = np.ones((1, 1), dtype=complex)
    for j in range(psi.num_qubits, last, -1):
        t = psi.tensors[j - 1]
        right = np.einsum("asr,bsq,rq->ab", t.conj(), t, right, optimize=True)
    # Fold window tensors: ket legs become the row index, bra legs the column.
    block = left
    for j in range(first, last + 1):
        t = psi.tensors[j - 1]
        block = np.einsum("...ab,asx,bty->...tsxy", block, t.conj(), t, optimize=True)
    rho = np.einsum("...xy,xy->...", block, right)
    perm = list(range(0, 2 * width, 2)) + list(range(1, 2 * width, 2))
    return rho.transpose(perm).reshape(2**width, 2**width)


def canonicalize(psi: MPState, center: int) -> MPState:
    """Mixed-canonical form with the orthogonality center at `center` (1-based)."""
    n = psi.num_qubits
    if not (1 <= center <= n):
        raise ValueError(f"center {center} out of range")
    if psi.periodic:
        raise ValueError("canonical forms implemented for open chains only")
    ts = [t.copy() for t in psi.tensors]
    for j in range(1, center):
        t = ts[j - 1]
        chi_l, _, chi_r = t.shape
        q, r = np.linalg.qr(t.reshape(chi_l * 2, chi_r))
        ts[j - 1] = q.reshape(chi_l, 2, q.shape[1])
        ts[j] = np.tensordot(r, ts[j], axes=([1], [0]))
    for j in range(n, center, -1):
        t = ts[j - 1]
        chi_l, _, chi_r = t.shape
        q, r = np.linalg.qr(t.reshape(chi_l, 2 * chi_r).conj().T)
        ts[j - 1] = q.conj().T.reshape(q.shape[1], 2, chi_r)
        ts[j - 2] = np.tensordot(ts[j - 2], r.conj().T, axes=([2], [0]))
    return MPState(ts, periodic=False, center=center)


def von_neumann_entropy(psi: MPState, cut: int) -> float:
    """Entanglement entropy (base 2) across the bond between sites cut, cut+1."""
    n = psi.num_qubits
    if not (1 <= cut <= n - 1):
        raise ValueError(f"cut {cut} out of range for {n} sites")
    canon = canonicalize(psi, cut)
    t = canon.tensors[cut - 1]
    s = np.linalg.svd(t.reshape(t.shape[0] * 2, t.shape[2]), compute_uv=False)
    weights = s**2
    total = weights.sum()
    if total <= 0.0:
        raise ValueError("zero-norm state")
    weights = weights / total
    weights = weights[weights > 1e-24]
    return float(-np.sum(weights * np.log2(weights)))


# ---------------------------------------------------------------------------
# Structural algebra


def mpo_dagger(op: MPOperator) -> MPOperator:
    return MPOperator(
        [np.ascontiguousarray(t.conj().transpose(0, 2, 1, 3)) for t in op.tensors],
        op.periodic,
    )


def mpo_scale(op: MPOperator, factor: complex) -> MPOperator:
    out = op.copy()
    out.tensors[0] = out.tensors[0] * factor
    return out


def mpo_add(a: MPOperator, b: MPOperator) -> MPOperator:
    """a + b by direct sum of bond spaces (open chains)."""
    if a.num_qubits != b.num_qubits:
        raise ValueError("operator length mismatch")
    if a.periodic or b.periodic:
        raise ValueError("direct-sum addition implemented for open chains only")
    n = a.num_qubits
    if n == 1:
        return MPOperator([a.tensors[0] + b.tensors[0]])
    out: list[np.ndarray] = []
    for j in range(1, n + 1):
        ta, tb = a.tensors[j - 1], b.tensors[j - 1]
        if j == 1:
            out.append(np.concatenate([ta, tb], axis=3))
        elif j == n:
            out.append(np.concatenate([ta, tb], axis=0))
        else:
            t = np.zeros(
                (ta.shape[0] + tb.shape[0], 2, 2, ta.shape[3] + tb.shape[3]),
                dtype=complex,
            )
            t[: ta.shape[0], :, :, : ta.shape[3]] = ta
            t[ta.shape[0] :, :, :, ta.shape[3] :] = tb
            out.append(t)
    return MPOperator(out)


def mps_add(a: MPState, b: MPState) -> MPState:
    """|a> + |b> by direct sum of bond spaces (open chains)."""
    if a.num_qubits != b.num_qubits:
        raise ValueError("state length mismatch")
    if a.periodic or b.periodic:
        raise ValueError("direct-sum addition implemented for open chains only")
    n = a.num_qubits
    if n == 1:
        return MPState([a.tensors[0] + b.tensors[0]])
    out: list[np.ndarray] = []
    for j in range(1, n + 1):
        ta, tb = a.tensors[j - 1], b.tensors[j - 1]
        if j == 1:
            out.append(np.concatenate([ta, tb], axis=2))
        elif j == n:
            out.append(np.concatenate([ta, tb], axis=0))
        else:
            t = np.zeros((ta.shape[0] + tb.shape[0], 2, ta.shape[2] + tb.shape[2]), dtype=complex)
            t[: ta.shape[0], :, : ta.shape[2]] = ta
            t[ta.shape[0] :, :, ta.shape[2] :] = tb
            out.append(t)
    return MPState(out)


def mps_to_mpo(psi: MPState) -> MPOperator:
    """|psi><psi| as an MPO with bond dimension chi^2."""
    out = []
    for t in psi.tensors:
        chi_l, _, chi_r = t.shape
        m = np.einsum("lsr,mtq->lmstrq", t, t.conj())
        out.append(m.reshape(chi_l * chi_l, 2, 2, chi_r * chi_r))
    return MPOperator(out, psi.periodic)


# ---------------------------------------------------------------------------
# Dense conversions


def mpo_to_dense(op: MPOperator) -> np.ndarray:
    n = op.num_qubits
    if n > MAX_DENSE_MPO_QUBITS:
        raise CapacityError(f"dense MPO conversion guarded at {MAX_DENSE_MPO_QUBITS} qubits")
    chi0 = op.tensors[0].shape[0]
    block = np.eye(chi0, dtype=complex).reshape(1, 1, chi0, chi0)
    dim = 1
    for t in op.tensors:
        block = np.einsum("xyal,lstr->xsytar", block, t, optimize=True)
        dim *= 2
        block = block.reshape(dim, dim, chi0, t.shape[3])
    return np.trace(block, axis1=2, axis2=3)


def mps_to_dense(psi: MPState) -> np.ndarray:
    n = psi.num_qubits
    if n > MAX_DENSE_MPS_QUBITS:
        raise CapacityError(f"dense MPS conversion guarded at {MAX_DENSE_MPS_QUBITS} qubits")
    chi0 = psi.tensors[0].shape[0]
    block = np.eye(chi0, dtype=complex).reshape(1, chi0, chi0)
    dim = 1
    for t in psi.tensors:
        block = np.einsum("xal,lsr->xsar", block, t, optimize=True)
        dim *= 2
        block = block.reshape(dim, chi0, t.shape[2])
    return np.trace(block, axis1=1, axis2=2)


def _split_dense(arr: np.ndarray, site_dim: int, n: int, tol: float) -> list[np.ndarray]:
    tensors = []
    rest = arr.reshape(1, site_dim**n)
    chi = 1
    for _ in range(n - 1):
        rest = rest.reshape(chi * site_dim, -1)
        u, s, vh = np.linalg.svd(rest, full_matrices=False)
        keep = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 1
        keep = max(keep, 1)
        tensors.append(u[:, :keep].reshape(chi, site_dim, keep))
        rest = s[:keep, None] * vh[:keep]
        chi = keep
    tensors.append(rest.reshape(chi, site_dim, 1))
    return tensors


def dense_to_mps(vec: np.ndarray, tol: float = 1e-14) -> MPState:
    """Sequential-SVD factorization of a 2^N vector into an open-chain MPS."""
    vec = np.asarray(vec, dtype=complex).ravel()
    n = int(round(math.log2(vec.size)))
    if 2**n != vec.size:
        raise ValueError(f"vector length {vec.size} is not a power of 2")
    return MPState(_split_dense(vec, 2, n, tol))


def dense_to_mpo(mat: np.ndarray, tol: float = 1e-14) -> MPOperator:
    """Sequential-SVD factorization of a 2^N x 2^N matrix into an open-chain MPO."""
    mat = np.asarray(mat, dtype=complex)
    n = int(round(math.log2(mat.shape[0])))
    if mat.shape != (2**n, 2**n):
        raise ValueError(f"expected a square power-of-2 matrix, got {mat.shape}")
    arr = mat.reshape([2] * (2 * n))
    perm: list[int] = []
    for j in range(n):
        perm += [j, n + j]
    arr = arr.transpose(perm)
    tensors = _split_dense(arr, 4, n, tol)
    return MPOperator([t.reshape(t.shape[0], 2, 2, t.shape[2]) for t in tensors])


# ---------------------------------------------------------------------------
# Serialization


def _tensor_payload(t: np.ndarray) -> dict:
    flat = t.reshape(-1)
    return {
        "shape": [int(d) for d in t.shape],
        "data": [[float(z.real), float(z.imag)] for z in flat],
    }


def _tensor_from_payload(entry: dict, ndim: int, where: str) -> np.ndarray:
    try:
        shape = tuple(int(d) for d in entry["shape"])
        data = entry["data"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{where}: malformed tensor entry ({exc})") from exc
    if len(shape) != ndim:
        raise ValueError(f"{where}: expected {ndim} indices, got shape {shape}")
    expected = 1
    for d in shape:
        expected *= d
    if len(data) != expected:
        raise ValueError(f"{where}: shape {shape} needs {expected} entries, got {len(data)}")
    flat = np.array([complex(re, im) for re, im in data], dtype=complex)
    return flat.reshape(shape)


def save_state(obj: MPOperator | MPState, path: str | Path) -> None:
    """Write an MPO or MPS as JSON (row-major complex pairs, fixed float format)."""
    if isinstance(obj, MPOperator):
        kind = "mpo"
    elif isinstance(obj, MPState):
        kind = "mps"
    else:
        raise TypeError(f"cannot serialize {type(obj)!r}")
    payload = {
        "kind": kind,
        "num_qubits": obj.num_qubits,
        "tensors": [_tensor_payload(t) for t in obj.tensors],
    }
    Path(path).write_text(_json.dumps(payload) + "\n")


def load_state(path: str | Path) -> MPOperator | MPState:
    """Read an MPO or MPS written by save_state.

    The boundary kind is inferred from the shapes: matching boundary bonds
    larger than 1 mean a periodic chain.
    """
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from exc
    kind = payload.get("kind")
    if kind not in ("mpo", "mps"):
        raise ValueError(f"{path}: unknown kind {kind!r}")
    entries = payload.get("tensors")
    if not isinstance(entries, list) or not entries:
        raise ValueError(f"{path}: missing tensors")
    ndim = 4 if kind == "mpo" else 3
    tensors = [
        _tensor_from_payload(entry, ndim, f"{path}: tensor {j}")
        for j, entry in enumerate(entries, start=1)
    ]
    declared = payload.get("num_qubits")
    if declared is not None and int(declared) != len(tensors):
        raise ValueError(f"{path}: num_qubits {declared} != {len(tensors)} tensors")
    periodic = tensors[0].shape[0] != 1 or tensors[-1].shape[-1] != 1
    obj: MPOperator | MPState
    if kind == "mpo":
        obj = MPOperator(tensors, periodic)
    else:
        obj = MPState(tensors, periodic)
    obj.validate()
    return obj


def pauli_matrix(letter: str) -> np.ndarray:
    """The 2x2 matrix for one of I, X, Y, Z."""
    return _PAULI[letter.upper()].copy()
