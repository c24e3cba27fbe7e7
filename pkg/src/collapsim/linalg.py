"""Finite-dimensional Hilbert-space value types and elementary operations.

States, Hermitian operators, commuting operator families (stored through a
shared eigenbasis) and density matrices, plus expectation values, variances,
interaction-picture conjugation and pure-state projectors.  hbar = 1
throughout; dense storage, designed for dimensions up to ~64.

All types are immutable after construction and safe to share across tasks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HERMITICITY_TOL = 1e-12
UNITARITY_TOL = 1e-12
NORMALIZATION_TOL = 1e-6
COMMUTATOR_TOL = 1e-8

PAULI = {
    "pauli-x": np.array([[0, 1], [1, 0]], dtype=complex),
    "pauli-y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "pauli-z": np.array([[1, 0], [0, -1]], dtype=complex),
    "identity-2": np.eye(2, dtype=complex),
}


def _as_complex_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m.view(float))):
        raise ValueError("matrix has non-finite entries")
    return m


@dataclass(frozen=True)
class StateVector:
    """Complex amplitude vector; `normalized()` enforces unit norm."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size == 0:
            raise ValueError("state must have positive dimension")
        if not np.all(np.isfinite(amps.view(float))):
            raise ValueError("state has non-finite amplitudes")
        object.__setattr__(self, "amplitudes", amps)
        self.amplitudes.setflags(write=False)

    @property
    def d(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def is_normalized(self, tol: float = NORMALIZATION_TOL) -> bool:
        return abs(self.norm() - 1.0) <= tol

    def normalized(self) -> "StateVector":
        n = self.norm()
        if n < 1e-300:
            raise ValueError("cannot normalize a (numerically) zero state")
        return StateVector(self.amplitudes / n)


@dataclass(frozen=True)
class HermitianOperator:
    """Dense Hermitian matrix (an observable; energy units for Hamiltonians)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = _as_complex_matrix(self.matrix)
        dev = np.max(np.abs(m - m.conj().T))
        if dev > HERMITICITY_TOL * max(1.0, np.max(np.abs(m))):
            raise ValueError(f"matrix is not Hermitian (deviation {dev:.3e})")
        # store the exactly-Hermitian average
        object.__setattr__(self, "matrix", 0.5 * (m + m.conj().T))
        self.matrix.setflags(write=False)

    @property
    def d(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_name(cls, name: str) -> "HermitianOperator":
        if name not in PAULI:
            raise ValueError(f"unknown operator preset {name!r}")
        return cls(PAULI[name])


@dataclass(frozen=True)
class CommutingFamily:
    """N mutually commuting Hermitian operators sharing one eigenbasis.

    Stored as a unitary `basis` V (columns are the joint eigenvectors) and a
    real table `eigenvalues` of shape (N, d); operator i is
    V @ diag(eigenvalues[i]) @ V^dagger.  Commutativity holds exactly by
    construction.
    """

    basis: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        v = _as_complex_matrix(self.basis)
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.ndim == 1:
            lam = lam[None, :]
        if lam.ndim != 2 or lam.shape[1] != v.shape[0]:
            raise ValueError("eigenvalue table shape does not match basis")
        dev = np.max(np.abs(v.conj().T @ v - np.eye(v.shape[0])))
        if dev > 1e-10:
            raise ValueError(f"basis is not unitary (deviation {dev:.3e})")
        object.__setattr__(self, "basis", v)
        object.__setattr__(self, "eigenvalues", lam)
        self.basis.setflags(write=False)
        self.eigenvalues.setflags(write=False)

    @property
    def d(self) -> int:
        return self.basis.shape[0]

    @property
    def n_ops(self) -> int:
        return self.eigenvalues.shape[0]

    def operator(self, i: int) -> HermitianOperator:
        v = self.basis
        m = (v * self.eigenvalues[i]) @ v.conj().T
        return HermitianOperator(m)

    def operators(self) -> list[HermitianOperator]:
        return [self.operator(i) for i in range(self.n_ops)]

    def matrices(self) -> np.ndarray:
        """Reconstructed operators as an (N, d, d) array."""
        v = self.basis
        return np.stack([(v * lam) @ v.conj().T for lam in self.eigenvalues])

    @classmethod
    def diagonal(cls, eigenvalues) -> "CommutingFamily":
        lam = np.atleast_2d(np.asarray(eigenvalues, dtype=float))
        return cls(np.eye(lam.shape[1], dtype=complex), lam)

    @classmethod
    def from_matrices(cls, mats, tol: float = COMMUTATOR_TOL) -> "CommutingFamily":
        """Extract a joint eigenbasis from user-supplied commuting matrices.

        Raises if any pairwise commutator norm exceeds `tol`.
        """
        ops = [HermitianOperator(m).matrix for m in mats]
        d = ops[0].shape[0]
        for m in ops:
            if m.shape[0] != d:
                raise ValueError("operators have mismatched dimensions")
        for i in range(len(ops)):
            for j in range(i + 1, len(ops)):
                c = ops[i] @ ops[j] - ops[j] @ ops[i]
                if np.linalg.norm(c) > tol:
                    raise ValueError(
                        f"operators {i} and {j} do not commute "
                        f"(commutator norm {np.linalg.norm(c):.3e})")
        v = _joint_eigenbasis(ops)
        lam = np.array([np.real(np.diag(v.conj().T @ m @ v)) for m in ops])
        return cls(v, lam)


def _joint_eigenbasis(ops: list[np.ndarray]) -> np.ndarray:
    """Sequentially refine eigenspaces until every operator is diagonal."""
    d = ops[0].shape[0]
    v = np.eye(d, dtype=complex)
    blocks = [np.arange(d)]
    for m in ops:
        new_blocks = []
        for idx in blocks:
            if idx.size == 1:
                new_blocks.append(idx)
                continue
            sub = v[:, idx].conj().T @ m @ v[:, idx]
            w, u = np.linalg.eigh(0.5 * (sub + sub.conj().T))
            v[:, idx] = v[:, idx] @ u
            # split into near-degenerate clusters of this operator
            start = 0
            for k in range(1, idx.size + 1):
                if k == idx.size or w[k] - w[start] > 1e-9 * max(1.0, abs(w[-1])):
                    new_blocks.append(idx[start:k])
                    start = k
        blocks = new_blocks
    return v


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite matrix (within tolerance)."""

    matrix: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        m = _as_complex_matrix(self.matrix)
        if self.check:
            if np.max(np.abs(m - m.conj().T)) > 1e-10:
                raise ValueError("density matrix is not Hermitian")
            if abs(np.trace(m).real - 1.0) > 1e-10:
                raise ValueError(f"trace is {np.trace(m).real!r}, expected 1")
            w = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
            if w[0] < -1e-8:
                raise ValueError(f"smallest eigenvalue {w[0]:.3e} < -1e-8")
        object.__setattr__(self, "matrix", m)
        self.matrix.setflags(write=False)

    @property
    def d(self) -> int:
        return self.matrix.shape[0]


def _check_state_for_expectation(psi: StateVector, d: int):
    if psi.d != d:
        raise ValueError(f"dimension mismatch: operator d={d}, state d={psi.d}")
    if not psi.is_normalized():
        raise ValueError(f"state is not normalized (norm {psi.norm()!r})")


def expectation(op: HermitianOperator, psi: StateVector) -> float:
    """<psi|O|psi> for a normalized state; the imaginary part (roundoff) is
    checked against 1e-10 and discarded."""
    _check_state_for_expectation(psi, op.d)
    val = np.vdot(psi.amplitudes, op.matrix @ psi.amplitudes)
    scale = max(1.0, float(np.max(np.abs(op.matrix))))
    if abs(val.imag) > 1e-10 * scale:
        raise ValueError(f"expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


def variance(op: HermitianOperator, psi: StateVector) -> float:
    """<O^2> - <O>^2; clipped at the -1e-10 roundoff floor."""
    _check_state_for_expectation(psi, op.d)
    opsi = op.matrix @ psi.amplitudes
    m2 = float(np.real(np.vdot(opsi, opsi)))
    m1 = float(np.real(np.vdot(psi.amplitudes, opsi)))
    var = m2 - m1 * m1
    if var < -1e-10:
        raise ValueError(f"variance {var:.3e} below roundoff floor")
    return max(var, 0.0)


def interaction_picture(op: HermitianOperator, h: HermitianOperator,
                        tau: float) -> HermitianOperator:
    """exp(iH tau) O exp(-iH tau), computed via the eigendecomposition of H.

    tau may be negative (memory integrands evaluate at earlier times).
    """
    if op.d != h.d:
        raise ValueError("operator/Hamiltonian dimension mismatch")
    w, u = np.linalg.eigh(h.matrix)
    phases = np.exp(1j * w * tau)
    o_tilde = u.conj().T @ op.matrix @ u
    m = u @ (np.outer(phases, phases.conj()) * o_tilde) @ u.conj().T
    return HermitianOperator(0.5 * (m + m.conj().T))


def pure_density(psi: StateVector) -> DensityMatrix:
    """Rank-one projector |psi><psi| for a normalized state."""
    if not psi.is_normalized():
        raise ValueError(f"state is not normalized (norm {psi.norm()!r})")
    a = psi.amplitudes
    return DensityMatrix(np.outer(a, a.conj()))


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """(1/2) * trace norm of rho - sigma."""
    delta = np.asarray(rho, dtype=complex) - np.asarray(sigma, dtype=complex)
    delta = 0.5 * (delta + delta.conj().T)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(delta))))
