"""Operators, superoperators and the Liouville-space conventions.

Density matrices are vectorized row-major: the element ``rho[i, j]`` lives in
slot ``i * d + j``.  With this convention ``vec(A X B) = kron(A, B.T) vec(X)``,
so left multiplication by ``A`` is ``kron(A, I)`` and right multiplication by
``B`` is ``kron(I, B.T)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

__all__ = [
    "HERMITIAN_RTOL",
    "EnergyBasis",
    "anticommutator_superop",
    "check_hermitian",
    "commutator_superop",
    "devectorize",
    "eigendecompose",
    "left_superop",
    "matrix_exponential",
    "right_superop",
    "trace_distance",
    "vectorize",
]

HERMITIAN_RTOL = 1e-12


def _square(op, name: str = "operator") -> np.ndarray:
    arr = np.asarray(op)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {arr.shape}")
    return arr


def vectorize(op) -> np.ndarray:
    """Stack a square matrix row by row into a vector of length ``d**2``."""
    arr = _square(op)
    return np.array(arr, dtype=complex).reshape(-1)


def devectorize(vec, dim: int | None = None) -> np.ndarray:
    """Inverse of :func:`vectorize`."""
    vec = np.asarray(vec)
    if vec.ndim != 1:
        raise ValueError("expected a one-dimensional Liouville vector")
    if dim is None:
        dim = int(round(np.sqrt(vec.size)))
    if dim * dim != vec.size:
        raise ValueError(f"vector of length {vec.size} is not a vectorized {dim}x{dim} matrix")
    return vec.reshape(dim, dim).copy()


def left_superop(a) -> np.ndarray:
    """Superoperator of ``X -> A X``."""
    a = _square(a)
    return np.kron(a, np.eye(a.shape[0]))


def right_superop(b) -> np.ndarray:
    """Superoperator of ``X -> X B``."""
    b = _square(b)
    return np.kron(np.eye(b.shape[0]), b.T)


def commutator_superop(a) -> np.ndarray:
    """Superoperator of ``X -> A X - X A``."""
    return left_superop(a) - right_superop(a)


def anticommutator_superop(a) -> np.ndarray:
    """Superoperator of ``X -> A X + X A``."""
    return left_superop(a) + right_superop(a)


def check_hermitian(op, rtol: float = HERMITIAN_RTOL, name: str = "operator") -> np.ndarray:
    """Return ``op`` as a complex array, raising if it is not Hermitian.

    The tolerance is relative to the largest entry magnitude.
    """
    arr = np.asarray(_square(op, name), dtype=complex)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    scale = np.max(np.abs(arr)) if arr.size else 0.0
    if np.max(np.abs(arr - arr.conj().T), initial=0.0) > rtol * max(scale, np.finfo(float).tiny):
        raise ValueError(f"{name} is not Hermitian")
    return arr


@dataclass(frozen=True)
class EnergyBasis:
    """Eigendecomposition of a Hermitian Hamiltonian.

    Attributes
    ----------
    energies : ndarray
        Eigenvalues in ascending order (rad/ps).
    vectors : ndarray
        Unitary matrix whose columns are the eigenvectors.
    """

    energies: np.ndarray
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.energies.size

    @cached_property
    def gaps(self) -> np.ndarray:
        """Matrix of transition frequencies ``gaps[i, j] = e_i - e_j``."""
        return self.energies[:, None] - self.energies[None, :]

    @cached_property
    def liouville_gaps(self) -> np.ndarray:
        """Transition frequencies flattened in Liouville order."""
        return self.gaps.reshape(-1)

    @cached_property
    def liouville_transform(self) -> np.ndarray:
        """Unitary ``T`` with ``vec(U X U^dag) = T vec(X)``."""
        return np.kron(self.vectors, self.vectors.conj())

    def to_eigen(self, op) -> np.ndarray:
        """Express a site-basis operator in the eigenbasis."""
        u = self.vectors
        return u.conj().T @ np.asarray(op) @ u

    def to_site(self, op) -> np.ndarray:
        """Express an eigenbasis operator in the original basis."""
        u = self.vectors
        return u @ np.asarray(op) @ u.conj().T

    def superop_to_site(self, sop) -> np.ndarray:
        t = self.liouville_transform
        return t @ sop @ t.conj().T

    def superop_to_eigen(self, sop) -> np.ndarray:
        t = self.liouville_transform
        return t.conj().T @ sop @ t

    def free_phases(self, t: float) -> np.ndarray:
        """Diagonal of the closed-system Liouville propagator in the eigenbasis."""
        return np.exp(-1j * self.liouville_gaps * t)


def eigendecompose(h, rtol: float = HERMITIAN_RTOL) -> EnergyBasis:
    """Diagonalize a Hermitian matrix with a reproducible phase convention.

    Eigenvalues are sorted ascending.  Each eigenvector is rotated so that its
    largest-magnitude component (first one on ties) is real and positive.

    Parameters
    ----------
    h : array_like
        Hermitian matrix.
    rtol : float
        Hermiticity tolerance relative to the largest entry.
    """
    h = check_hermitian(h, rtol, "Hamiltonian")
    h = 0.5 * (h + h.conj().T)
    energies, vectors = np.linalg.eigh(h)
    vectors = np.array(vectors, dtype=complex)
    for k in range(vectors.shape[1]):
        col = vectors[:, k]
        pivot = col[np.argmax(np.abs(col))]
        vectors[:, k] = col * (abs(pivot) / pivot)
        vectors[np.argmax(np.abs(col)), k] = abs(pivot)
    return EnergyBasis(energies=energies, vectors=vectors)


def matrix_exponential(s, scale: float | complex = 1.0) -> np.ndarray:
    """Return ``exp(scale * S)`` (scaling and squaring with a Pade approximant)."""
    s = np.asarray(s)
    if not np.all(np.isfinite(s)):
        raise ValueError("matrix exponential of a matrix with non-finite entries")
    out = scipy.linalg.expm(scale * _square(s))
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("matrix exponential overflowed")
    return out


def trace_distance(rho1, rho2) -> float:
    """Trace distance ``(1/2) sum |eig(rho1 - rho2)|`` between density matrices."""
    a = _square(rho1, "rho1")
    b = _square(rho2, "rho2")
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = np.asarray(a - b, dtype=complex)
    diff = 0.5 * (diff + diff.conj().T)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))
