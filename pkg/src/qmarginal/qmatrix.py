"""Dense complex Hermitian linear algebra.

Every other module funnels its spectral work through the few functions
here, so tolerances live in one place.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DimensionError, HermiticityError, RangeError

HERMITICITY_TOL = 1e-12
EXP_LIMIT = 700.0


class EigenDecomposition(NamedTuple):
    """Ascending eigenvalues and the matching orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def _as_square(a) -> np.ndarray:
    arr = np.asarray(a.matrix if isinstance(a, HermitianOp) else a)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise DimensionError(f"expected a non-empty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix has non-finite entries")
    return arr.astype(complex, copy=False)


def hermiticity_error(a) -> float:
    """Largest entrywise deviation ``|A - A^dagger|``."""
    arr = _as_square(a)
    return float(np.max(np.abs(arr - arr.conj().T)))


def as_hermitian(a, tol: float = HERMITICITY_TOL) -> np.ndarray:
    """Validate and symmetrize ``a`` into a complex Hermitian ndarray.

    The tolerance is relative to ``max(1, max|a_ij|)`` so that large
    Hamiltonians assembled from many terms are not rejected for round-off.
    """
    if isinstance(a, HermitianOp):
        return a.matrix
    arr = _as_square(a)
    scale = max(1.0, float(np.max(np.abs(arr))))
    err = float(np.max(np.abs(arr - arr.conj().T)))
    if err > tol * scale:
        raise HermiticityError(f"matrix deviates from Hermitian by {err:.3e} (tolerance {tol * scale:.1e})")
    return 0.5 * (arr + arr.conj().T)


class HermitianOp:
    """Immutable Hermitian matrix.

    Parameters
    ----------
    matrix : array_like
        Square matrix, Hermitian up to ``tol``; it is replaced by
        ``(A + A^dagger)/2`` on construction.
    """

    __slots__ = ("_m",)

    def __init__(self, matrix, tol: float = HERMITICITY_TOL):
        m = np.array(as_hermitian(matrix, tol), dtype=complex)
        m.setflags(write=False)
        self._m = m

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    @property
    def dim(self) -> int:
        return self._m.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self._m if dtype is None else self._m.astype(dtype)

    def __add__(self, other):
        return HermitianOp(self._m + np.asarray(other))

    def __sub__(self, other):
        return HermitianOp(self._m - np.asarray(other))

    def __mul__(self, scalar):
        if not np.isrealobj(scalar):
            raise TypeError("only real scalars preserve hermiticity")
        return HermitianOp(self._m * float(scalar))

    __rmul__ = __mul__

    def __repr__(self):
        return f"HermitianOp(dim={self.dim})"


def eig_hermitian(a) -> EigenDecomposition:
    """Spectral decomposition of a Hermitian matrix, eigenvalues ascending.

    Raises
    ------
    HermiticityError
        If ``a`` is not Hermitian within tolerance.
    """
    h = as_hermitian(a)
    w, v = np.linalg.eigh(h)
    return EigenDecomposition(w, v)


def eigvalsh(a) -> np.ndarray:
    return np.linalg.eigvalsh(as_hermitian(a))


def expm_hermitian(a) -> HermitianOp:
    """``exp(A)`` through the spectral decomposition.

    Raises
    ------
    RangeError
        If the largest eigenvalue exceeds 700, where ``exp`` overflows doubles.
    """
    w, v = eig_hermitian(a)
    if w[-1] > EXP_LIMIT:
        raise RangeError(
            f"largest eigenvalue {w[-1]:.4g} exceeds {EXP_LIMIT}; exp would overflow. "
            "Use expm_shifted for normalized Gibbs states."
        )
    return HermitianOp((v * np.exp(w)) @ v.conj().T)


def expm_shifted(a) -> tuple[np.ndarray, float]:
    """Return ``(exp(A - lmax I), lmax)`` so that ``exp(A) = e^lmax * first``."""
    w, v = eig_hermitian(a)
    shift = float(w[-1])
    return (v * np.exp(w - shift)) @ v.conj().T, shift


def trace_norm(a) -> float:
    """Sum of absolute eigenvalues."""
    return float(np.sum(np.abs(eigvalsh(a))))


def operator_norm(a) -> float:
    """Largest absolute eigenvalue."""
    w = eigvalsh(a)
    return float(max(abs(w[0]), abs(w[-1])))


def min_eigenvalue(a) -> tuple[float, np.ndarray]:
    """Smallest eigenvalue and a normalized eigenvector for it."""
    w, v = eig_hermitian(a)
    return float(w[0]), v[:, 0]


def max_eigenvalue(a) -> tuple[float, np.ndarray]:
    w, v = eig_hermitian(a)
    return float(w[-1]), v[:, -1]


def psd_projection(a) -> np.ndarray:
    """Nearest positive semidefinite matrix in Frobenius norm."""
    w, v = eig_hermitian(a)
    return (v * np.clip(w, 0.0, None)) @ v.conj().T


def random_hermitian(dim: int, rng=None, scale: float = 1.0) -> np.ndarray:
    rng = np.random.default_rng(rng)
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * 0.5 * (g + g.conj().T)
