"""Reference-state factories: kicked-Ising circuits, thermal chains, noise.

The Gibbs construction evolves the identity operator symmetrically,
rho = W I W with W approximating exp(-beta H / 2), using second-order
Trotter sweeps in a doubled-index representation (each MPO site tensor seen
as an MPS tensor with physical dimension 4). Truncations keep the
orthogonality center at the active bond so discarded weight is the true
error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, NormalizationError
from .mpo import MPOperator, MPState, mpo_trace, pauli_matrix


@dataclass
class CircuitSpec:
    """Kicked-Ising circuit: depth layers of X kicks then ZZ couplings."""

    num_qubits: int
    depth: int

    def validate(self) -> None:
        if self.num_qubits < 2:
            raise ValueError("need at least 2 qubits")
        if self.depth < 0:
            raise ValueError("depth must be non-negative")


@dataclass
class GibbsSpec:
    """Thermal state of the open-chain Ising Hamiltonian.

    H = (1/4) [ sum_j Z_j Z_{j+1} + sum_j (g X_j + h Z_j) ]
    """

    num_qubits: int
    beta: float
    g: float
    h: float
    svd_cutoff: float = 1e-20
    trotter_step: float = 0.01

    def validate(self) -> None:
        if self.num_qubits < 2:
            raise ValueError("need at least 2 qubits")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.svd_cutoff <= 0:
            raise ValueError("svd_cutoff must be positive")
        if self.trotter_step <= 0:
            raise ValueError("trotter_step must be positive")


# ---------------------------------------------------------------------------
# Generic two-site gate engine on a chain of (left, d, right) tensors.


def _right_canonicalize(ts: list[np.ndarray]) -> list[np.ndarray]:
    for j in range(len(ts), 1, -1):
        t = ts[j - 1]
        chi_l, d, chi_r = t.shape
        q, r = np.linalg.qr(t.reshape(chi_l, d * chi_r).conj().T)
        ts[j - 1] = q.conj().T.reshape(q.shape[1], d, chi_r)
        ts[j - 2] = np.tensordot(ts[j - 2], r.conj().T, axes=([2], [0]))
    return ts


def _move_center(ts: list[np.ndarray], center: int, target: int) -> int:
    while center < target:
        t = ts[center - 1]
        chi_l, d, chi_r = t.shape
        q, r = np.linalg.qr(t.reshape(chi_l * d, chi_r))
        ts[center - 1] = q.reshape(chi_l, d, q.shape[1])
        ts[center] = np.tensordot(r, ts[center], axes=([1], [0]))
        center += 1
    while center > target:
        t = ts[center - 1]
        chi_l, d, chi_r = t.shape
        q, r = np.linalg.qr(t.reshape(chi_l, d * chi_r).conj().T)
        ts[center - 1] = q.conj().T.reshape(q.shape[1], d, chi_r)
        ts[center - 2] = np.tensordot(ts[center - 2], r.conj().T, axes=([2], [0]))
        center -= 1
    return center


def _apply_bond_gate(
    ts: list[np.ndarray],
    center: int,
    j: int,
    gate: np.ndarray,
    keep,
    chi_cap: int,
) -> int:
    """Apply a d^2 x d^2 gate at bond (j, j+1); returns the new center (j+1)."""
    if center < j or center > j + 1:
        center = _move_center(ts, center, j)
    a, b = ts[j - 1], ts[j]
    chi_l, d, _ = a.shape
    chi_r = b.shape[2]
    theta = np.tensordot(a, b, axes=([2], [0])).reshape(chi_l, d * d, chi_r)
    theta = np.einsum("PQ,lQr->lPr", gate, theta)
    u, s, vh = np.linalg.svd(theta.reshape(chi_l * d, d * chi_r), full_matrices=False)
    k = keep(s)
    if k > chi_cap:
        raise CapacityError(f"bond {j} needs dimension {k}, above the cap {chi_cap}")
    ts[j - 1] = u[:, :k].reshape(chi_l, d, k)
    ts[j] = (s[:k, None] * vh[:k]).reshape(k, d, chi_r)
    return j + 1


def _keep_by_relative_value(tol: float):
    def keep(s: np.ndarray) -> int:
        if s.size == 0 or s[0] <= 0.0:
            return 1
        return max(1, int(np.sum(s > tol * s[0])))

    return keep


def _keep_by_discarded_weight(cutoff: float):
    def keep(s: np.ndarray) -> int:
        weights = s**2
        total = weights.sum()
        if total <= 0.0:
            return 1
        tail = np.cumsum(weights[::-1])
        droppable = int(np.searchsorted(tail, cutoff * total, side="right"))
        return max(1, len(s) - droppable)

    return keep


# ---------------------------------------------------------------------------
# Kicked-Ising circuit


def zero_state(num_qubits: int) -> MPState:
    """|0...0> as a bond-1 MPS."""
    t = np.zeros((1, 2, 1), dtype=complex)
    t[0, 0, 0] = 1.0
    return MPState([t.copy() for _ in range(num_qubits)])


def kicked_ising_state(spec: CircuitSpec, svd_tol: float = 1e-12) -> MPState:
    """Apply depth layers of exp(-i pi/8 X) kicks then exp(+i pi/4 ZZ) couplings to |0..0>.

    Bond dimension grows by exactly a factor 2 per layer (the coupling gate
    has operator Schmidt rank 2), so depth D yields bond 2^D.
    """
    spec.validate()
    n = spec.num_qubits
    x = pauli_matrix("X")
    rx = math.cos(math.pi / 8) * np.eye(2) - 1j * math.sin(math.pi / 8) * x
    zz = np.diag(np.exp(1j * math.pi / 4 * np.array([1.0, -1.0, -1.0, 1.0])))
    keep = _keep_by_relative_value(svd_tol)
    ts = list(zero_state(n).tensors)
    center = 1
    chi_cap = 2 ** (spec.depth + 1)
    for _ in range(spec.depth):
        for j in range(1, n + 1):
            ts[j - 1] = np.einsum("ab,lbr->lar", rx, ts[j - 1])
        for j in range(1, n):
            center = _apply_bond_gate(ts, center, j, zz, keep, chi_cap)
        center = _move_center(ts, center, 1)
    return MPState(ts, center=center)


# ---------------------------------------------------------------------------
# Thermal Ising chain


def _bond_hamiltonians(spec: GibbsSpec) -> list[np.ndarray]:
    """One 4x4 term per bond; single-site fields split 1/2 inside, full at ends."""
    n = spec.num_qubits
    z = pauli_matrix("Z").real
    x = pauli_matrix("X").real
    eye = np.eye(2)
    terms = []
    for j in range(1, n):
        a = 1.0 if j == 1 else 0.5
        b = 1.0 if j + 1 == n else 0.5
        field = spec.g * x + spec.h * z
        h = np.kron(z, z) + a * np.kron(field, eye) + b * np.kron(eye, field)
        terms.append(0.25 * h)
    return terms


def _doubled_gate(k: np.ndarray) -> np.ndarray:
    """Two-sided action rho -> K rho K^dag on the doubled index p = (s, t)."""
    kt = k.reshape(2, 2, 2, 2)
    d = np.einsum("abuv,cdxy->acbduxvy", kt, kt.conj())
    return d.reshape(16, 16)


def ising_gibbs(spec: GibbsSpec, chi_cap: int = 128) -> MPOperator:
    """Normalized thermal state exp(-beta H)/Z as an MPO.

    round(beta / trotter_step) symmetric steps are applied, with the step
    size adjusted so they sum to beta exactly. Truncation keeps the relative
    discarded squared-singular-value weight below svd_cutoff; bonds beyond
    chi_cap raise a capacity error.
    """
    spec.validate()
    n = spec.num_qubits
    eye_doubled = np.eye(2, dtype=complex).reshape(1, 4, 1)
    ts = [eye_doubled.copy() for _ in range(n)]
    if spec.beta > 0:
        steps = max(1, round(spec.beta / spec.trotter_step))
        dt = spec.beta / steps
        keep = _keep_by_discarded_weight(spec.svd_cutoff)
        gates: dict[tuple[int, float], np.ndarray] = {}
        for j, h in enumerate(_bond_hamiltonians(spec), start=1):
            evals, vecs = np.linalg.eigh(h)
            for tau in (dt / 4.0, dt / 2.0):
                k = (vecs * np.exp(-tau * evals)) @ vecs.conj().T
                gates[(j, tau)] = _doubled_gate(k)
        odd = list(range(1, n, 2))
        even = list(range(2, n, 2))
        layers = [(odd, dt / 4.0), (even, dt / 2.0), (odd, dt / 4.0)]
        ts = _right_canonicalize(ts)
        center = 1
        for _ in range(steps):
            for bonds, tau in layers:
                for j in bonds:
                    center = _apply_bond_gate(ts, center, j, gates[(j, tau)], keep, chi_cap)
                center = _move_center(ts, center, 1)
    op = MPOperator([t.reshape(t.shape[0], 2, 2, t.shape[2]) for t in ts])
    trace = mpo_trace(op)
    if not (abs(trace) > 1e-300 and math.isfinite(abs(trace))):
        raise NormalizationError(f"thermal evolution produced trace {trace}")
    if abs(trace.imag) > 1e-8 * abs(trace.real):
        raise NormalizationError(f"thermal state trace is not real: {trace}")
    op.tensors[0] = op.tensors[0] / trace.real
    return op


# ---------------------------------------------------------------------------
# Noise and random states


def apply_depolarizing(op: MPOperator, p: float | list[float]) -> MPOperator:
    """Single-site depolarizing channel rho -> (1-p) rho + p tr_j[rho] I_j / 2 per site.

    Acts locally on each tensor, so bond dimensions are unchanged.
    """
    n = op.num_qubits
    probs = [float(p)] * n if np.isscalar(p) else [float(q) for q in p]
    if len(probs) != n:
        raise ValueError(f"need {n} probabilities, got {len(probs)}")
    if any(not 0.0 <= q <= 1.0 for q in probs):
        raise ValueError("depolarizing probabilities must lie in [0, 1]")
    out = []
    eye = np.eye(2, dtype=complex)
    for t, q in zip(op.tensors, probs):
        traced = np.einsum("luur->lr", t)
        out.append((1.0 - q) * t + 0.5 * q * np.einsum("st,lr->lstr", eye, traced))
    return MPOperator(out, op.periodic)


def maximally_mixed(num_qubits: int) -> MPOperator:
    """(I/2)^(x)N as a bond-1 MPO."""
    t = (np.eye(2, dtype=complex) / 2.0).reshape(1, 2, 2, 1)
    return MPOperator([t.copy() for _ in range(num_qubits)])


def _crandn(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def random_mpo(num_qubits: int, chi: int, seed: int) -> MPOperator:
    """Unnormalized random complex MPO (not Hermitian); algebra-test plumbing."""
    rng = np.random.default_rng(seed)
    dims = [1] + [chi] * (num_qubits - 1) + [1]
    tensors = []
    for j in range(num_qubits):
        t = _crandn(rng, (dims[j], 2, 2, dims[j + 1]))
        tensors.append(t / math.sqrt(t.size))
    return MPOperator(tensors)


def random_mpdo(num_qubits: int, chi: int, seed: int) -> MPOperator:
    """Random mixed state rho = A A^dag / tr from a bond-chi purification.

    chi is the purification bond dimension; the returned MPO has bond chi^2.
    Positivity and Hermiticity hold by construction.
    """
    rng = np.random.default_rng(seed)
    dims = [1] + [chi] * (num_qubits - 1) + [1]
    tensors = []
    for j in range(num_qubits):
        a = _crandn(rng, (dims[j], 2, 2, dims[j + 1]))  # (left, phys, kraus, right)
        a = a / np.linalg.norm(a)
        m = np.einsum("lskr,mtkq->lmstrq", a, a.conj())
        tensors.append(
            m.reshape(dims[j] ** 2, 2, 2, dims[j + 1] ** 2)
        )
    op = MPOperator(tensors)
    trace = mpo_trace(op).real
    if trace <= 0.0:
        raise NormalizationError("random purification produced a non-positive trace")
    op.tensors[0] = op.tensors[0] / trace
    return op
