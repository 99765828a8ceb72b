"""Qubit and qudit operator algebra.

Pauli strings, embedding and partial trace, local Pauli sets, the map
between marginals and local expectation vectors, and the qudit
generalization of the Pauli basis.

Qubit indices are 1-based in every public signature; qubit 1 is the most
significant tensor factor.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import (
    CapacityError,
    CoverageError,
    DimensionError,
    MarginalDisagreementWarning,
    PreconditionError,
)
from .qmatrix import as_hermitian, eigvalsh

MAX_QUBITS = 12
DISAGREEMENT_TOL = 1e-8

_SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _check_subset(subset, n: int) -> tuple[int, ...]:
    sub = tuple(int(q) for q in subset)
    if len(sub) == 0:
        raise IndexError("subset must be nonempty")
    if any(q < 1 or q > n for q in sub):
        raise IndexError(f"subset {sub} out of range 1..{n}")
    if len(set(sub)) != len(sub):
        raise IndexError(f"subset {sub} has repeated indices")
    return sub


def _num_sites(dim: int, local_dim: int) -> int:
    n = int(round(np.log(dim) / np.log(local_dim)))
    if local_dim**n != dim:
        raise DimensionError(f"dimension {dim} is not a power of {local_dim}")
    return n


@dataclass(frozen=True, order=True)
class PauliString:
    """Tensor product of single-qubit Paulis, written as a word over IXYZ."""

    letters: str

    def __post_init__(self):
        if not self.letters or any(c not in "IXYZ" for c in self.letters):
            raise ValueError(f"invalid Pauli word {self.letters!r}")

    @property
    def n(self) -> int:
        return len(self.letters)

    @property
    def support(self) -> tuple[int, ...]:
        """1-based indices of the non-identity factors."""
        return tuple(i + 1 for i, c in enumerate(self.letters) if c != "I")

    @property
    def is_identity(self) -> bool:
        return all(c == "I" for c in self.letters)

    def restrict(self, subset: Sequence[int]) -> "PauliString":
        """Restriction ``P|_C`` to the (1-based) qubits of ``subset``."""
        sub = _check_subset(subset, self.n)
        if any(q not in sub for q in self.support):
            raise CoverageError(f"{self.letters} is not supported inside {sub}")
        return PauliString("".join(self.letters[q - 1] for q in sub))

    @classmethod
    def from_support(cls, n: int, subset: Sequence[int], word: str) -> "PauliString":
        letters = ["I"] * n
        for q, c in zip(_check_subset(subset, n), word):
            letters[q - 1] = c
        return cls("".join(letters))

    def __str__(self):
        return self.letters


@lru_cache(maxsize=4096)
def _pauli_word_matrix(word: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for c in word:
        out = np.kron(out, _SINGLE[c])
    out.setflags(write=False)
    return out


def pauli_matrix(P) -> np.ndarray:
    """Dense ``2^n x 2^n`` matrix of a Pauli string (or word).

    Raises
    ------
    CapacityError
        For more than 12 qubits.
    """
    word = P.letters if isinstance(P, PauliString) else PauliString(str(P)).letters
    if len(word) > MAX_QUBITS:
        raise CapacityError(f"{len(word)} qubits exceeds the dense limit of {MAX_QUBITS}")
    return _pauli_word_matrix(word)


def all_pauli_words(n: int, include_identity: bool = True) -> list[str]:
    words = ["".join(w) for w in itertools.product("IXYZ", repeat=n)]
    return words if include_identity else words[1:]


def _embedding_axes(subset0: Sequence[int], n: int) -> list[int]:
    order = list(subset0) + [q for q in range(n) if q not in subset0]
    inv = list(np.argsort(order))
    return inv + [n + i for i in inv]


def embed_operator(op, subset: Sequence[int], n: int, local_dim: int = 2) -> np.ndarray:
    """Lift an operator on ``subset`` to ``op (x) I`` on ``n`` sites, respecting site order."""
    sub0 = [q - 1 for q in _check_subset(subset, n)]
    k = len(sub0)
    op = np.asarray(op, dtype=complex)
    if op.shape != (local_dim**k, local_dim**k):
        raise DimensionError(f"operator shape {op.shape} does not act on {k} sites")
    full = np.kron(op, np.eye(local_dim ** (n - k)))
    t = full.reshape([local_dim] * (2 * n)).transpose(_embedding_axes(sub0, n))
    return t.reshape(local_dim**n, local_dim**n)


def partial_trace(rho, keep: Sequence[int], local_dim: int = 2) -> np.ndarray:
    """Reduced operator on the 1-based sites ``keep`` (output follows the order given).

    Raises
    ------
    IndexError
        If ``keep`` is empty, repeats an index or is out of range.
    """
    rho = np.asarray(rho, dtype=complex)
    n = _num_sites(rho.shape[0], local_dim)
    sub0 = [q - 1 for q in _check_subset(keep, n)]
    rest = [q for q in range(n) if q not in sub0]
    k = len(sub0)
    t = rho.reshape([local_dim] * (2 * n))
    t = t.transpose(sub0 + rest + [n + q for q in sub0] + [n + q for q in rest])
    dk, dr = local_dim**k, local_dim ** (n - k)
    return np.einsum("ajbj->ab", t.reshape(dk, dr, dk, dr))


def ket_partial_trace(psi, keep: Sequence[int], local_dim: int = 2) -> np.ndarray:
    """Reduced density matrix of a pure state vector."""
    psi = np.asarray(psi, dtype=complex).ravel()
    n = _num_sites(psi.size, local_dim)
    sub0 = [q - 1 for q in _check_subset(keep, n)]
    rest = [q for q in range(n) if q not in sub0]
    m = psi.reshape([local_dim] * n).transpose(sub0 + rest).reshape(local_dim ** len(sub0), -1)
    return m @ m.conj().T


def expectation(obs, rho) -> float:
    """``Tr(O rho)`` as a real number."""
    o = np.asarray(obs.matrix if hasattr(obs, "matrix") else obs)
    r = np.asarray(rho)
    if o.shape != r.shape:
        raise DimensionError(f"observable {o.shape} and state {r.shape} differ")
    return float(np.real(np.einsum("ij,ji->", o, r)))


def is_density_matrix(rho, tol: float = 1e-9) -> bool:
    try:
        h = as_hermitian(rho, tol=1e-10)
    except Exception:
        return False
    return abs(np.trace(h).real - 1.0) <= tol and eigvalsh(h)[0] >= -tol


def check_density_matrix(rho, tol: float = 1e-9, name: str = "rho") -> np.ndarray:
    h = as_hermitian(rho, tol=1e-10)
    tr = np.trace(h).real
    if abs(tr - 1.0) > tol:
        raise PreconditionError(f"{name} has trace {tr:.12g}, expected 1")
    lo = eigvalsh(h)[0]
    if lo < -tol:
        raise PreconditionError(f"{name} has negative eigenvalue {lo:.3e}")
    return h


def random_density_matrix(dim: int, rng=None, rank: int | None = None, real: bool = False) -> np.ndarray:
    """Random mixed state from the induced (Hilbert-Schmidt when ``rank=dim``) measure."""
    rng = np.random.default_rng(rng)
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank))
    if not real:
        g = g + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_pure_state(dim: int, rng=None) -> np.ndarray:
    rng = np.random.default_rng(rng)
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def bell_state() -> np.ndarray:
    v = np.zeros(4, dtype=complex)
    v[0] = v[3] = 1 / np.sqrt(2)
    return np.outer(v, v.conj())


def ghz_state(n: int) -> np.ndarray:
    v = np.zeros(2**n, dtype=complex)
    v[0] = v[-1] = 1 / np.sqrt(2)
    return np.outer(v, v.conj())


@dataclass(frozen=True)
class SubsetMarginal:
    """A local operator ``rho`` claimed to describe the qubits in ``subset``.

    ``rho`` is Hermitian by construction but is not required to be positive:
    points outside the consistent set map to non-positive matrices, and
    callers inspect :meth:`is_state`.
    """

    subset: tuple[int, ...]
    rho: np.ndarray = field(repr=False)

    def __post_init__(self):
        sub = tuple(int(q) for q in self.subset)
        if len(sub) == 0 or any(b <= a for a, b in zip(sub, sub[1:])):
            raise IndexError(f"subset {sub} must be nonempty and strictly increasing")
        if sub[0] < 1:
            raise IndexError(f"subset {sub} uses 1-based indices")
        rho = as_hermitian(self.rho, tol=1e-10)
        if rho.shape != (2 ** len(sub), 2 ** len(sub)):
            raise DimensionError(f"marginal of shape {rho.shape} does not match subset {sub}")
        rho = np.array(rho)
        rho.setflags(write=False)
        object.__setattr__(self, "subset", sub)
        object.__setattr__(self, "rho", rho)

    @property
    def k(self) -> int:
        return len(self.subset)

    def min_eigenvalue(self) -> float:
        return float(eigvalsh(self.rho)[0])

    def is_state(self, tol: float = 1e-9) -> bool:
        return is_density_matrix(self.rho, tol)


class LocalPauliSet:
    """All non-identity Pauli strings supported inside one of the subsets.

    Members are deduplicated and ordered lexicographically on
    ``(support, word)`` so that expectation vectors have a stable layout.

    Parameters
    ----------
    n : int
        Number of qubits.
    subsets : sequence of sequences of int
        The 1-based subsets ``C_1..C_m``.
    """

    def __init__(self, n: int, subsets: Sequence[Sequence[int]]):
        if n < 1 or n > MAX_QUBITS:
            raise CapacityError(f"n={n} outside 1..{MAX_QUBITS}")
        self.n = int(n)
        self.subsets = [tuple(sorted(_check_subset(c, n))) for c in subsets]
        if not self.subsets:
            raise PreconditionError("at least one subset is required")
        members = set()
        for c in self.subsets:
            for word in all_pauli_words(len(c), include_identity=False):
                members.add(PauliString.from_support(n, c, word))
        self.members: list[PauliString] = sorted(members, key=lambda p: (p.support, p.letters))
        self.index = {p: i for i, p in enumerate(self.members)}
        # subset i -> (member indices supported in C_i, restricted matrices)
        self._local = []
        for c in self.subsets:
            idx = [i for i, p in enumerate(self.members) if set(p.support) <= set(c)]
            mats = np.array([pauli_matrix(self.members[i].restrict(c)) for i in idx])
            self._local.append((np.array(idx, dtype=int), mats))
        self.first_cover = np.array([self._first_cover(p) for p in self.members], dtype=int)

    def _first_cover(self, p: PauliString) -> int:
        for i, c in enumerate(self.subsets):
            if set(p.support) <= set(c):
                return i
        raise CoverageError(f"{p} not supported in any subset")

    @property
    def d(self) -> int:
        return len(self.members)

    @property
    def m(self) -> int:
        return len(self.subsets)

    @property
    def k(self) -> int:
        return max(len(c) for c in self.subsets)

    def local_members(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Indices of members supported in ``C_i`` and their restricted matrices."""
        return self._local[i]

    def labels(self) -> list[str]:
        return [p.letters for p in self.members]

    def __len__(self):
        return self.d

    def __repr__(self):
        return f"LocalPauliSet(n={self.n}, m={self.m}, d={self.d})"


def _local_expectations(rho: np.ndarray, mats: np.ndarray) -> np.ndarray:
    return np.real(np.einsum("pij,ji->p", mats, rho))


def marginal_disagreement(marginals: Sequence[SubsetMarginal], S: LocalPauliSet) -> float:
    """Largest spread of ``Tr(P rho_i)`` over subsets that all cover ``P``."""
    lo = np.full(S.d, np.inf)
    hi = np.full(S.d, -np.inf)
    for mg in marginals:
        idx = [i for i, p in enumerate(S.members) if set(p.support) <= set(mg.subset)]
        if not idx:
            continue
        mats = np.array([pauli_matrix(S.members[i].restrict(mg.subset)) for i in idx])
        vals = _local_expectations(mg.rho, mats)
        lo[idx] = np.minimum(lo[idx], vals)
        hi[idx] = np.maximum(hi[idx], vals)
    spread = hi - lo
    spread = spread[np.isfinite(spread)]
    return float(spread.max()) if spread.size else 0.0


def marginals_to_alpha(marginals: Sequence[SubsetMarginal], S: LocalPauliSet) -> np.ndarray:
    """Expectation vector ``alpha_P = Tr(P|_C rho_i)`` using the first covering marginal.

    Warns with :class:`MarginalDisagreementWarning` when overlapping
    marginals disagree by more than 1e-8.

    Raises
    ------
    CoverageError
        If some member of ``S`` is not supported inside any marginal's subset.
    """
    alpha = np.full(S.d, np.nan)
    for mg in marginals:
        todo = [i for i, p in enumerate(S.members) if np.isnan(alpha[i]) and set(p.support) <= set(mg.subset)]
        if todo:
            mats = np.array([pauli_matrix(S.members[i].restrict(mg.subset)) for i in todo])
            alpha[todo] = _local_expectations(mg.rho, mats)
    if np.any(np.isnan(alpha)):
        missing = [S.members[i].letters for i in np.flatnonzero(np.isnan(alpha))]
        raise CoverageError(f"no marginal covers {missing[:5]}")
    gap = marginal_disagreement(marginals, S)
    if gap > DISAGREEMENT_TOL:
        warnings.warn(
            f"overlapping marginals disagree by up to {gap:.3e}", MarginalDisagreementWarning, stacklevel=2
        )
    return alpha


def alpha_to_marginals(alpha, S: LocalPauliSet) -> list[SubsetMarginal]:
    """Marginals ``rho_i = 2^{-|C_i|} (I + sum_P alpha_P P|_{C_i})``.

    Output matrices are Hermitian with unit trace but may fail to be
    positive when ``alpha`` lies outside the consistent set.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (S.d,):
        raise DimensionError(f"alpha has shape {alpha.shape}, expected ({S.d},)")
    out = []
    for i, c in enumerate(S.subsets):
        idx, mats = S.local_members(i)
        dim = 2 ** len(c)
        rho = (np.eye(dim) + np.tensordot(alpha[idx], mats, axes=1)) / dim
        out.append(SubsetMarginal(c, rho))
    return out


def state_to_alpha(sigma, S: LocalPauliSet) -> np.ndarray:
    """``Tr(P sigma)`` for every member, computed from the local reductions of ``sigma``."""
    alpha = np.empty(S.d)
    for i, c in enumerate(S.subsets):
        idx, mats = S.local_members(i)
        alpha[idx] = _local_expectations(partial_trace(sigma, c), mats)
    return alpha


def alpha_to_operator(alpha, S: LocalPauliSet) -> np.ndarray:
    """Minimum-norm Hermitian ``(I + sum_P alpha_P P) / 2^n`` carrying the given local expectations."""
    alpha = np.asarray(alpha, dtype=float)
    n = S.n
    out = np.eye(2**n, dtype=complex)
    for i, c in enumerate(S.subsets):
        idx, mats = S.local_members(i)
        own = S.first_cover[idx] == i
        if np.any(own):
            local = np.tensordot(alpha[idx[own]], mats[own], axes=1)
            out += embed_operator(local, c, n)
    return out / 2**n


def marginals_of(sigma, subsets: Sequence[Sequence[int]]) -> list[SubsetMarginal]:
    return [SubsetMarginal(tuple(sorted(c)), partial_trace(sigma, sorted(c))) for c in subsets]


@dataclass(frozen=True)
class QuditObservableBasis:
    """Traceless Hermitian basis for one ``d``-level system.

    ``X_ij = |j><i| + |i><j|``, ``Y_ij = i|j><i| - i|i><j|`` for ``i < j``
    and the diagonal ``Z_i`` with ``1/(i+1)`` in the first ``i+1``
    positions followed by ``-1``.
    """

    d: int
    labels: tuple[str, ...]
    matrices: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.labels)

    def gram(self) -> np.ndarray:
        return np.real(np.einsum("aij,bji->ab", self.matrices, self.matrices))

    def __getitem__(self, label: str) -> np.ndarray:
        return self.matrices[self.labels.index(label)]


def qudit_basis(d: int) -> QuditObservableBasis:
    """The ``d^2 - 1`` single-qudit observables.

    Raises
    ------
    PreconditionError
        Unless ``2 <= d <= 8``.
    """
    if not (2 <= int(d) <= 8):
        raise PreconditionError(f"qudit dimension {d} outside 2..8")
    d = int(d)
    labels, mats = [], []
    for i in range(d):
        for j in range(i + 1, d):
            x = np.zeros((d, d), dtype=complex)
            x[j, i] = x[i, j] = 1
            labels.append(f"X{i}{j}")
            mats.append(x)
    for i in range(d):
        for j in range(i + 1, d):
            y = np.zeros((d, d), dtype=complex)
            y[j, i] = 1j
            y[i, j] = -1j
            labels.append(f"Y{i}{j}")
            mats.append(y)
    for i in range(d - 1):
        z = np.zeros((d, d), dtype=complex)
        z[np.arange(i + 1), np.arange(i + 1)] = 1.0 / (i + 1)
        z[i + 1, i + 1] = -1
        labels.append(f"Z{i}")
        mats.append(z)
    return QuditObservableBasis(d, tuple(labels), np.array(mats))
