"""Dense complex linear algebra on small Hilbert spaces and the doubled space.

Vectors and operators are plain ``numpy`` arrays of dtype ``complex128``.
The helpers here validate shapes and freeze the arrays so that values can be
shared between workers without copies.

Basis convention for two-level systems: index 0 is the ground state
``|0>``, index 1 the excited state ``|1>``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.complex128, copy=True)
    a.setflags(write=False)
    return a


def as_vector(x, dim: int | None = None) -> np.ndarray:
    """Return ``x`` as a read-only complex vector, checking its dimension."""
    v = np.asarray(x, dtype=np.complex128)
    if v.ndim != 1 or v.size < 1:
        raise ValueError(f"expected a non-empty 1-d vector, got shape {v.shape}")
    if dim is not None and v.size != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return _frozen(v)


def as_operator(m, dim: int | None = None) -> np.ndarray:
    """Return ``m`` as a read-only square complex matrix."""
    op = np.asarray(m, dtype=np.complex128)
    if op.ndim != 2 or op.shape[0] != op.shape[1] or op.shape[0] < 1:
        raise ValueError(f"expected a square matrix, got shape {op.shape}")
    if dim is not None and op.shape[0] != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {op.shape[0]}")
    return _frozen(op)


def norm2(x) -> float:
    """Squared Euclidean norm."""
    x = np.asarray(x)
    return float(np.sum(x.real**2 + x.imag**2))


def outer_product(phi, psi) -> np.ndarray:
    """``|phi><psi|`` with entries ``phi[a] * conj(psi[b])``."""
    phi = np.asarray(phi, dtype=np.complex128)
    psi = np.asarray(psi, dtype=np.complex128)
    if phi.shape != psi.shape or phi.ndim != 1:
        raise ValueError(f"dimension mismatch: {phi.shape} vs {psi.shape}")
    return np.outer(phi, psi.conj())


@dataclass(frozen=True)
class DoubledState:
    """A pair ``theta = (phi, psi)`` in the direct sum H + H.

    The reduced density matrix is estimated by averaging ``|phi><psi|`` over
    realizations, so ``phi`` and ``psi`` are not normalized individually.
    """

    phi: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        phi = as_vector(self.phi)
        psi = as_vector(self.psi, phi.size)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "psi", psi)

    @classmethod
    def from_pure(cls, chi) -> "DoubledState":
        return cls(chi, chi)

    @classmethod
    def from_array(cls, blocks) -> "DoubledState":
        blocks = np.asarray(blocks)
        return cls(blocks[0], blocks[1])

    @property
    def dim(self) -> int:
        return self.phi.size

    def norm2(self) -> float:
        return norm2(self.phi) + norm2(self.psi)

    def density(self) -> np.ndarray:
        return outer_product(self.phi, self.psi)

    def as_array(self) -> np.ndarray:
        """Stacked ``(2, dim)`` array, block 0 is ``phi``."""
        return np.stack([self.phi, self.psi])


def doubled_apply(f_block, g_block, theta: DoubledState) -> DoubledState:
    """Apply the block-diagonal operator ``diag(f_block, g_block)`` to ``theta``."""
    f_block = as_operator(f_block, theta.dim)
    g_block = as_operator(g_block, theta.dim)
    return DoubledState(f_block @ theta.phi, g_block @ theta.psi)


# two-level operators

def sigma_minus() -> np.ndarray:
    """Lowering operator ``|0><1|``."""
    return _frozen([[0.0, 1.0], [0.0, 0.0]])


def sigma_plus() -> np.ndarray:
    """Raising operator ``|1><0|``."""
    return _frozen([[0.0, 0.0], [1.0, 0.0]])


def excited_projector() -> np.ndarray:
    """``sigma_plus @ sigma_minus = |1><1|``."""
    return _frozen([[0.0, 0.0], [0.0, 1.0]])


def two_level_density(rho11: float, rho10: complex = 0.0) -> np.ndarray:
    """Two-level density matrix from its excited population and coherence.

    ``rho10`` is the ``<1|rho|0>`` element; ``rho01`` is its conjugate.
    """
    if not -1e-12 <= rho11 <= 1 + 1e-12:
        raise ValueError(f"population {rho11} outside [0, 1]")
    rho = np.array(
        [[1.0 - rho11, np.conj(rho10)], [rho10, rho11]], dtype=np.complex128
    )
    return rho


def check_density_matrix(rho, atol: float = 1e-9) -> np.ndarray:
    """Validate Hermiticity, unit trace and positivity to ``atol``."""
    rho = as_operator(rho)
    if np.max(np.abs(rho - rho.conj().T)) > atol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > atol:
        raise ValueError(f"density matrix has trace {np.trace(rho).real:.12g}")
    if np.linalg.eigvalsh(rho).min() < -atol:
        raise ValueError("density matrix is not positive semidefinite")
    return rho
