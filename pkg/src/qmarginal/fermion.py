"""Fermionic Fock space, 2-particle reduced density matrices and N-representability.

Conventions
-----------
Modes are numbered ``1..M``.  A Fock basis state is an occupation bitstring
with mode 1 as the most significant bit, so ``|I>`` for ``I = {i_1 < ... < i_N}``
is ``a_{i_1}^dag ... a_{i_N}^dag |vac>``.  Annihilation then acts as
``a_i |I> = (-1)^{#{j in I : j < i}} |I \\ {i}>``.

Within the N-particle sector, basis states are the sorted subsets in
lexicographic order.  Pair indices ``I = (i1, i2)`` with ``i1 < i2`` follow the
same order, and the last pair is ``L = (M-1, M)``.

The 2-RDM is stored in the pair basis, ``rho[I, J] = c Tr(a_J^dag a_I sigma)``
with ``a_I = a_{i2} a_{i1}`` and ``c = 2 / (N (N-1))``, so that it has trace 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations, permutations

import numpy as np
import scipy.sparse as sp

from .errors import CapacityError, DimensionError, PreconditionError
from .qmatrix import as_hermitian, eigvalsh, min_eigenvalue, operator_norm, trace_norm
from .qstate import check_density_matrix, pauli_matrix
from .verdict import Verdict

FOCK_MAX_MODES = 12
NREP_MAX_DIM = 2000

_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SZ = np.diag([1.0, -1.0]).astype(complex)


# ------------------------------------------------------------ Fock basis


@dataclass(frozen=True)
class FockIndex:
    """An occupied-mode set ``I`` among ``M`` modes."""

    M: int
    occupied: tuple

    def __post_init__(self):
        occ = tuple(sorted(int(i) for i in self.occupied))
        if len(set(occ)) != len(occ) or any(i < 1 or i > self.M for i in occ):
            raise IndexError(f"bad occupation {self.occupied} for M={self.M}")
        object.__setattr__(self, "occupied", occ)

    @property
    def N(self) -> int:
        return len(self.occupied)

    def rank(self) -> int:
        """Lexicographic position among the ``N``-subsets of ``1..M``."""
        return _sector_index(self.M, self.N)[self.occupied]

    @classmethod
    def from_rank(cls, M: int, N: int, rank: int) -> "FockIndex":
        return cls(M, sector_basis(M, N)[rank])

    def bitstring(self) -> int:
        """Position in the full ``2^M`` Fock space."""
        return sum(1 << (self.M - i) for i in self.occupied)


@lru_cache(maxsize=None)
def sector_basis(M: int, N: int) -> tuple:
    """Sorted ``N``-subsets of ``1..M`` in lexicographic order."""
    if not 0 <= N <= M:
        raise PreconditionError(f"need 0 <= N <= M, got N={N}, M={M}")
    return tuple(combinations(range(1, M + 1), N))


@lru_cache(maxsize=None)
def _sector_index(M: int, N: int) -> dict:
    return {occ: r for r, occ in enumerate(sector_basis(M, N))}


def pairs(M: int) -> tuple:
    return sector_basis(M, 2)


def _sign(occ, i) -> int:
    return -1 if sum(1 for j in occ if j < i) % 2 else 1


def annihilate(i: int, state, M: int, N: int) -> np.ndarray:
    """Apply ``a_i`` to a vector in the ``N``-particle sector; returns a sector ``N-1`` vector."""
    state = np.asarray(state)
    basis = sector_basis(M, N)
    if state.shape[0] != len(basis):
        raise DimensionError(f"state has length {state.shape[0]}, sector has {len(basis)}")
    return sector_annihilator(i, M, N) @ state


@lru_cache(maxsize=None)
def _sector_annihilator(i: int, M: int, N: int) -> sp.csr_matrix:
    if not 1 <= i <= M:
        raise IndexError(f"mode {i} outside 1..{M}")
    src = sector_basis(M, N)
    dst = _sector_index(M, N - 1)
    rows, cols, vals = [], [], []
    for c, occ in enumerate(src):
        if i in occ:
            rows.append(dst[tuple(j for j in occ if j != i)])
            cols.append(c)
            vals.append(_sign(occ, i))
    return sp.csr_matrix((vals, (rows, cols)), shape=(math.comb(M, N - 1), len(src)), dtype=complex)


def sector_annihilator(i: int, M: int, N: int) -> sp.csr_matrix:
    """``a_i`` as a sparse map from sector ``N`` to sector ``N-1``."""
    if N < 1:
        raise PreconditionError("cannot annihilate in the vacuum sector")
    return _sector_annihilator(i, M, N)


def pair_annihilator(pair, M: int, N: int) -> sp.csr_matrix:
    """``a_I = a_{i2} a_{i1}`` from sector ``N`` to sector ``N-2``."""
    i1, i2 = pair
    return sector_annihilator(i2, M, N - 1) @ sector_annihilator(i1, M, N)


@lru_cache(maxsize=None)
def _fock_annihilator(i: int, M: int) -> sp.csr_matrix:
    if M > FOCK_MAX_MODES:
        raise CapacityError(f"M={M} exceeds {FOCK_MAX_MODES}")
    if not 1 <= i <= M:
        raise IndexError(f"mode {i} outside 1..{M}")
    bit = 1 << (M - i)
    higher = ~((bit << 1) - 1) & ((1 << M) - 1)
    rows, cols, vals = [], [], []
    for s in range(1 << M):
        if s & bit:
            rows.append(s ^ bit)
            cols.append(s)
            vals.append(-1.0 if bin(s & higher).count("1") % 2 else 1.0)
    return sp.csr_matrix((vals, (rows, cols)), shape=(1 << M, 1 << M), dtype=complex)


def annihilation_operator(i: int, M: int) -> sp.csr_matrix:
    """``a_i`` on the full ``2^M``-dimensional Fock space."""
    return _fock_annihilator(i, M)


def creation_operator(i: int, M: int) -> sp.csr_matrix:
    return _fock_annihilator(i, M).conj().T.tocsr()


def number_operator(M: int) -> sp.csr_matrix:
    return sp.diags([float(bin(s).count("1")) for s in range(1 << M)]).tocsr()


def sector_slice(M: int, N: int) -> np.ndarray:
    """Fock-space positions of the sector ``N`` basis, in sector order."""
    return np.array([FockIndex(M, occ).bitstring() for occ in sector_basis(M, N)])


def anticommutators_check(M: int) -> dict:
    """Largest deviation from the canonical anticommutation relations on ``2^M`` dimensions."""
    if M > 8:
        raise CapacityError(f"M={M} exceeds 8")
    ident = sp.identity(1 << M, dtype=complex, format="csr")
    a = [annihilation_operator(i, M) for i in range(1, M + 1)]
    ad = [creation_operator(i, M) for i in range(1, M + 1)]

    def dev(x):
        return float(abs(x).max()) if x.nnz else 0.0

    out = {"a_adag": 0.0, "a_a": 0.0, "adag_adag": 0.0}
    for i in range(M):
        for j in range(M):
            out["a_adag"] = max(out["a_adag"], dev(a[i] @ ad[j] + ad[j] @ a[i] - (ident if i == j else 0 * ident)))
            out["a_a"] = max(out["a_a"], dev(a[i] @ a[j] + a[j] @ a[i]))
            out["adag_adag"] = max(out["adag_adag"], dev(ad[i] @ ad[j] + ad[j] @ ad[i]))
    out["max"] = max(out.values())
    return out


# ------------------------------------------------------------ Jordan-Wigner


def jordan_wigner(i: int, M: int, leading_sign: int = 1) -> sp.csr_matrix:
    """Qubit image of ``a_i``: ``leading_sign * (Z x ... x Z) x |0><1|`` on qubit ``i``.

    With the default ``leading_sign=1`` the operator coincides with
    :func:`annihilation_operator` under the occupation encoding ``|1> = occupied``.
    """
    if M > FOCK_MAX_MODES:
        raise CapacityError(f"M={M} exceeds {FOCK_MAX_MODES}")
    lower = sp.csr_matrix(np.array([[0, 1], [0, 0]], dtype=complex))
    out = sp.identity(1, dtype=complex, format="csr")
    for k in range(1, M + 1):
        if k < i:
            f = sp.csr_matrix(_SZ)
        elif k == i:
            f = lower
        else:
            f = sp.identity(2, dtype=complex, format="csr")
        out = sp.kron(out, f, format="csr")
    return leading_sign * out


def number_sector_measurement(state, M: int) -> np.ndarray:
    """Distribution of ``T = sum_k |1><1|_k`` on a qubit state (vector or density matrix)."""
    state = np.asarray(state)
    w = np.abs(state) ** 2 if state.ndim == 1 else np.real(np.diag(state))
    counts = np.array([bin(s).count("1") for s in range(1 << M)])
    return np.bincount(counts, weights=w, minlength=M + 1)


# ------------------------------------------------------------- 2-RDMs


@lru_cache(maxsize=None)
def _pair_stack(M: int, N: int) -> np.ndarray:
    """Dense ``a_I`` for every pair, shape ``(P, C(M, N-2), C(M, N))``."""
    return np.array([pair_annihilator(p, M, N).toarray() for p in pairs(M)])


def _rdm_scale(N: int) -> float:
    return 2.0 / (N * (N - 1))


def two_rdm(sigma, M: int, N: int) -> np.ndarray:
    """Pair-basis 2-RDM ``rho[I, J] = (2/(N(N-1))) Tr(a_J^dag a_I sigma)`` of a sector-``N`` state.

    ``sigma`` may be a density matrix or a state vector on the sector.
    """
    if N < 2:
        raise PreconditionError("need N >= 2")
    sigma = np.asarray(sigma, dtype=complex)
    dim = math.comb(M, N)
    if sigma.shape[0] != dim:
        raise DimensionError(f"sigma has dimension {sigma.shape[0]}, sector N={N} of M={M} has {dim}")
    B = _pair_stack(M, N)
    c = _rdm_scale(N)
    if sigma.ndim == 1:
        w = B @ sigma
        return c * w @ w.conj().T
    return c * np.einsum("iab,bc,jac->ij", B, sigma, B.conj(), optimize=True)


def two_rdm_adjoint(Y, M: int, N: int) -> np.ndarray:
    """Adjoint of :func:`two_rdm` with respect to the trace inner product."""
    B = _pair_stack(M, N)
    return _rdm_scale(N) * np.einsum("ji,jab,iac->bc", np.asarray(Y), B.conj(), B, optimize=True)


def slater_tensor(occ, M: int) -> np.ndarray:
    """First-quantized antisymmetric tensor of ``|I>``, shape ``(M,)*N``."""
    N = len(occ)
    t = np.zeros((M,) * N)
    norm = 1 / math.sqrt(math.factorial(N))
    for perm in permutations(range(N)):
        inv = sum(1 for x in range(N) for y in range(x + 1, N) if perm[x] > perm[y])
        t[tuple(occ[p] - 1 for p in perm)] = (-1) ** inv * norm
    return t


def first_quantized_two_rdm(sigma, M: int, N: int) -> np.ndarray:
    """2-RDM by the explicit partial trace over particles ``3..N``, expressed in the pair basis."""
    sigma = np.asarray(sigma, dtype=complex)
    if sigma.ndim == 1:
        sigma = np.outer(sigma, sigma.conj())
    basis = sector_basis(M, N)
    vecs = np.array([slater_tensor(o, M).reshape(-1) for o in basis]).T
    big = vecs @ sigma @ vecs.conj().T
    rest = M ** (N - 2)
    big = big.reshape(M * M, rest, M * M, rest)
    red = np.einsum("arbr->ab", big)
    pv = np.array([slater_tensor(p, M).reshape(-1) for p in pairs(M)]).T
    return pv.conj().T @ red @ pv


def mixed_sector_state(M: int, N: int) -> np.ndarray:
    dim = math.comb(M, N)
    return np.eye(dim, dtype=complex) / dim


def random_sector_state(M: int, N: int, rng=None, rank: int | None = None) -> np.ndarray:
    """Random density matrix on the ``N``-particle sector."""
    from .qstate import random_density_matrix

    return random_density_matrix(math.comb(M, N), rng, rank=rank)


@dataclass(frozen=True)
class TwoRDM:
    """Pair-basis 2-particle density matrix of an ``N``-fermion state on ``M`` modes."""

    M: int
    matrix: np.ndarray

    def __post_init__(self):
        P = math.comb(self.M, 2)
        mat = np.array(as_hermitian(self.matrix, tol=1e-10), dtype=complex)
        if mat.shape != (P, P):
            raise DimensionError(f"2-RDM must be {P}x{P} for M={self.M}")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def P(self) -> int:
        return self.matrix.shape[0]

    def is_state(self, tol: float = 1e-9) -> bool:
        return bool(abs(np.trace(self.matrix).real - 1) <= tol and eigvalsh(self.matrix)[0] >= -tol)


# --------------------------------------------------------- observable set


@dataclass(frozen=True)
class FermionObservableSet:
    """The 2-particle observables ``Z_I`` (``I != L``), ``X_IJ`` and ``Y_IJ`` (``I < J``).

    ``matrices`` holds each observable restricted to the 2-particle sector,
    so ``Z_I = |I><I|``, ``X_IJ = |I><J| + |J><I|``, ``Y_IJ = -i|I><J| + i|J><I|``.
    """

    M: int
    labels: tuple
    matrices: np.ndarray
    kinds: tuple
    index_pairs: tuple

    @property
    def ell(self) -> int:
        return len(self.labels)

    def expectations(self, rho) -> np.ndarray:
        """``Tr(S rho)`` for every member, rho a pair-basis operator."""
        rho = rho.matrix if isinstance(rho, TwoRDM) else np.asarray(rho)
        return np.real(np.einsum("kij,ji->k", self.matrices, rho))

    def reconstruct(self, alpha) -> np.ndarray:
        """The unique trace-1 pair operator with expectations ``alpha``."""
        alpha = np.asarray(alpha, dtype=float)
        P = self.matrices.shape[1]
        out = np.zeros((P, P), dtype=complex)
        out[P - 1, P - 1] = 1.0
        for a, m, kind in zip(alpha, self.matrices, self.kinds):
            if kind == "Z":
                out += a * (m - _unit(P, P - 1))
            else:
                out += 0.5 * a * m
        return out

    def sector_operator(self, k: int, N: int) -> np.ndarray:
        """Member ``k`` as an operator on the ``N``-particle sector."""
        I, J = self.index_pairs[k]
        B = _pair_stack(self.M, N)
        aIJ = B[I].conj().T @ B[J]
        kind = self.kinds[k]
        if kind == "Z":
            return aIJ
        if kind == "X":
            return aIJ + aIJ.conj().T
        return -1j * aIJ + 1j * aIJ.conj().T


def _unit(P, i):
    u = np.zeros((P, P), dtype=complex)
    u[i, i] = 1.0
    return u


@lru_cache(maxsize=None)
def build_observables(M: int) -> FermionObservableSet:
    """The observable set in a fixed order: all ``Z_I``, then ``X_IJ``, then ``Y_IJ``."""
    if M > 8:
        raise CapacityError(f"M={M} exceeds 8")
    if M < 2:
        raise PreconditionError("need at least two modes")
    prs = pairs(M)
    P = len(prs)
    labels, mats, kinds, idx = [], [], [], []
    for I in range(P - 1):
        labels.append(f"Z{prs[I]}")
        mats.append(_unit(P, I))
        kinds.append("Z")
        idx.append((I, I))
    for kind in ("X", "Y"):
        for I in range(P):
            for J in range(I + 1, P):
                m = np.zeros((P, P), dtype=complex)
                if kind == "X":
                    m[I, J] = m[J, I] = 1.0
                else:
                    m[I, J], m[J, I] = -1j, 1j
                labels.append(f"{kind}{prs[I]}{prs[J]}")
                mats.append(m)
                kinds.append(kind)
                idx.append((I, J))
    mats = np.array(mats)
    mats.setflags(write=False)
    return FermionObservableSet(M, tuple(labels), mats, tuple(kinds), tuple(idx))


def distinguishing_observable(rho, rho_other) -> tuple[str, float]:
    """Member of the observable set with the largest expectation gap between two 2-RDMs."""
    a = rho if isinstance(rho, TwoRDM) else TwoRDM(_modes_from_pairs(np.asarray(rho).shape[0]), rho)
    b = rho_other if isinstance(rho_other, TwoRDM) else TwoRDM(a.M, rho_other)
    if a.M != b.M:
        raise DimensionError("2-RDMs on different mode counts")
    obs = build_observables(a.M)
    diff = np.abs(obs.expectations(a) - obs.expectations(b))
    k = int(np.argmax(diff))
    return obs.labels[k], float(diff[k])


def _modes_from_pairs(P: int) -> int:
    M = int(round((1 + math.sqrt(1 + 8 * P)) / 2))
    if math.comb(M, 2) != P:
        raise DimensionError(f"{P} is not a pair count")
    return M


def k2_ball_point(eta, M: int) -> np.ndarray:
    """Pair state ``I/P + sum eta_Z (Z_I - Z_L) + (1/2) sum eta_X X + (1/2) sum eta_Y Y``."""
    obs = build_observables(M)
    P = math.comb(M, 2)
    alpha = np.concatenate([np.full(P - 1, 1 / P), np.zeros(obs.ell - P + 1)]) + np.asarray(eta)
    return obs.reconstruct(alpha)


# ------------------------------------------------------- particle-hole map


def complement_state(sigma, M: int, N: int) -> np.ndarray:
    """Image of a sector-``N`` state under ``|I> -> s(I) |complement of I>``.

    The sign ``s(I)`` is the one for which hole expectations of ``sigma``
    equal particle expectations of the image, with no extra signs.
    """
    src = sector_basis(M, N)
    dst = _sector_index(M, M - N)
    U = np.zeros((math.comb(M, M - N), len(src)), dtype=complex)
    for c, occ in enumerate(src):
        comp = tuple(j for j in range(1, M + 1) if j not in occ)
        # bit flip of every mode, then the phase (-1)^(sum of occupied labels)
        U[dst[comp], c] = (-1) ** sum(comp)
    sigma = np.asarray(sigma, dtype=complex)
    if sigma.ndim == 1:
        return U @ sigma
    return U @ sigma @ U.conj().T


def hole_expectations(sigma, M: int, N: int) -> np.ndarray:
    """``Tr(S' sigma)`` for the hole observables ``a_I a_J^dag`` in the order of :func:`build_observables`."""
    obs = build_observables(M)
    sigma = np.asarray(sigma, dtype=complex)
    hole = _hole_stack(M, N)
    G = np.einsum("jab,bc,ica->ij", hole, sigma, hole.conj().transpose(0, 2, 1), optimize=True)
    # G[I, J] = Tr(a_I a_J^dag sigma)
    out = np.empty(obs.ell)
    for k, ((I, J), kind) in enumerate(zip(obs.index_pairs, obs.kinds)):
        g = G[I, J]
        if kind == "Z":
            out[k] = g.real
        elif kind == "X":
            out[k] = 2 * g.real
        else:
            out[k] = 2 * g.imag
    return out


@lru_cache(maxsize=None)
def _hole_stack(M: int, N: int) -> np.ndarray:
    """``a_I^dag`` from sector ``N`` to sector ``N+2`` for every pair."""
    return np.array([pair_annihilator(p, M, N + 2).toarray().conj().T for p in pairs(M)])


def particle_expectations(sigma, M: int, N: int) -> np.ndarray:
    """``Tr(S sigma)`` on a sector-``N`` state (unnormalized, no 2-RDM factor)."""
    obs = build_observables(M)
    return obs.expectations(two_rdm(sigma, M, N) / _rdm_scale(N))


@dataclass(frozen=True)
class ParticleHoleMap:
    """Affine map ``alpha' = matrix @ alpha + offset`` from particle to hole expectations on 2-particle states."""

    M: int
    matrix: np.ndarray
    offset: np.ndarray

    @property
    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.matrix, compute_uv=False)

    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)

    def apply(self, alpha) -> np.ndarray:
        return self.matrix @ np.asarray(alpha) + self.offset


@lru_cache(maxsize=None)
def particle_hole_map(M: int) -> ParticleHoleMap:
    """Change of coordinates from 2-particle to 2-hole expectation vectors."""
    if M > 8:
        raise CapacityError(f"M={M} exceeds 8")
    if M < 4:
        raise PreconditionError("need M >= 4 for two holes")
    obs = build_observables(M)
    base = hole_expectations(obs.reconstruct(np.zeros(obs.ell)), M, 2)
    cols = []
    for k in range(obs.ell):
        e = np.zeros(obs.ell)
        e[k] = 1.0
        cols.append(hole_expectations(obs.reconstruct(e), M, 2) - base)
    return ParticleHoleMap(M, np.array(cols).T, base)


# --------------------------------------------------------- spin to fermion


@dataclass
class FermionHamiltonian:
    """``H_fermi = H_A + penalty * H_B`` on ``M = 2n`` modes; qubit ``i`` uses modes ``2i-1`` (a) and ``2i`` (b)."""

    n: int
    H_A: np.ndarray
    H_B: np.ndarray
    penalty: float

    @property
    def M(self) -> int:
        return 2 * self.n

    @property
    def matrix(self) -> np.ndarray:
        return self.H_A + self.penalty * self.H_B

    def constrained_space(self) -> np.ndarray:
        """Fock positions spanning the null space of ``H_B`` (one fermion per site)."""
        return np.flatnonzero(np.abs(np.diag(self.H_B)) < 1e-12)

    def restricted_spectrum(self) -> np.ndarray:
        idx = self.constrained_space()
        return eigvalsh(self.matrix[np.ix_(idx, idx)])


def _site_operators(i: int, M: int) -> dict:
    a = annihilation_operator(2 * i - 1, M).toarray()
    b = annihilation_operator(2 * i, M).toarray()
    ad, bd = a.conj().T, b.conj().T
    ident = np.eye(1 << M, dtype=complex)
    return {
        "I": ident,
        "X": ad @ b + bd @ a,
        "Y": 1j * (bd @ a - ad @ b),
        "Z": ident - 2 * bd @ b,
        "pi": ident + (2 * ad @ a - ident) @ (2 * bd @ b - ident),
    }


def pauli_coefficients(h: np.ndarray, n: int) -> dict:
    """``{word: Tr(P h)/2^n}`` over nonzero coefficients."""
    from .qstate import all_pauli_words

    out = {}
    for w in all_pauli_words(n):
        c = np.trace(pauli_matrix(w) @ h) / 2**n
        if abs(c) > 1e-14:
            out[w] = float(np.real(c))
    return out


def spin_to_fermion(h_qubit, n: int | None = None, penalty_factor: float = 2.0) -> FermionHamiltonian:
    """Fermionic Hamiltonian whose one-fermion-per-site block reproduces ``h_qubit``.

    ``h_qubit`` is a :class:`~qmarginal.localham.LocalHamInstance` or a dense
    ``2^n`` matrix.  Pauli words map site by site to
    ``X -> a^dag b + b^dag a``, ``Y -> i(b^dag a - a^dag b)``, ``Z -> 1 - 2 b^dag b``.
    The penalty is ``H_B = sum_i (1 + (2 a_i^dag a_i - 1)(2 b_i^dag b_i - 1))``
    weighted by ``penalty_factor * ||H_A||``.
    """
    if hasattr(h_qubit, "assemble"):
        n = h_qubit.n
        h = h_qubit.assemble()
    else:
        h = np.asarray(h_qubit, dtype=complex)
        n = n if n is not None else int(round(math.log2(h.shape[0])))
    if n > 4:
        raise CapacityError(f"n={n} exceeds 4")
    M = 2 * n
    sites = [_site_operators(i, M) for i in range(1, n + 1)]
    H_A = np.zeros((1 << M, 1 << M), dtype=complex)
    for word, coef in pauli_coefficients(h, n).items():
        term = sites[0]["I"].copy()
        for i, letter in enumerate(word):
            if letter != "I":
                term = term @ sites[i][letter]
        H_A += coef * term
    H_B = sum(s["pi"] for s in sites)
    norm_a = operator_norm(H_A)
    return FermionHamiltonian(n, H_A, np.real(H_B).astype(complex), penalty_factor * max(norm_a, 1e-300))


def qubit_embedding(n: int) -> np.ndarray:
    """Isometry ``|z> -> prod_i (a_i^dag)^(1-z_i) (b_i^dag)^(z_i) |vac>`` as a ``2^(2n) x 2^n`` matrix."""
    M = 2 * n
    cre = [creation_operator(j, M).toarray() for j in range(1, M + 1)]
    vac = np.zeros(1 << M, dtype=complex)
    vac[0] = 1.0
    cols = []
    for z in range(1 << n):
        bits = [(z >> (n - 1 - i)) & 1 for i in range(n)]
        v = vac.copy()
        for i in reversed(range(n)):
            v = cre[2 * i + bits[i]] @ v
        cols.append(v)
    return np.array(cols).T


# ------------------------------------------------------ N-representability


@dataclass(frozen=True)
class NRepInstance:
    """Is ``rho`` within trace distance ``beta`` of the 2-RDM of some ``N``-fermion state?"""

    M: int
    N: int
    rho: TwoRDM
    beta: float = 0.1

    def __post_init__(self):
        if not 2 <= self.N <= self.M:
            raise PreconditionError(f"need 2 <= N <= M, got N={self.N}, M={self.M}")
        rho = self.rho if isinstance(self.rho, TwoRDM) else TwoRDM(self.M, self.rho)
        if rho.M != self.M:
            raise DimensionError("2-RDM mode count differs from M")
        object.__setattr__(self, "rho", rho)


@dataclass
class NRepReport:
    verdict: Verdict
    residual: float
    witness: np.ndarray | None
    lower_bound: float
    iterations: int


def nrep_oracle(inst: NRepInstance, tol: float | None = None, max_iter: int = 5000) -> NRepReport:
    """Frank-Wolfe search for an ``N``-particle state with the given 2-RDM.

    Minimizes ``f(sigma) = ||two_rdm(sigma) - rho||_F^2`` over sector density
    matrices with exact line search.  YES once the trace-norm residual is at
    most ``tol`` (default ``beta/2``).  NO once the duality-gap lower bound on
    ``f`` exceeds ``(beta/(2 sqrt(P)))^2``, which rules out every state within
    ``beta/2`` in Frobenius norm.
    """
    M, N = inst.M, inst.N
    dim = math.comb(M, N)
    if dim > NREP_MAX_DIM:
        raise CapacityError(f"sector dimension {dim} exceeds {NREP_MAX_DIM}")
    tol = inst.beta / 2 if tol is None else tol
    target = inst.rho.matrix
    P = target.shape[0]
    threshold = (inst.beta / (2 * math.sqrt(P))) ** 2
    B = _pair_stack(M, N)
    c = _rdm_scale(N)

    sigma = mixed_sector_state(M, N)
    cur = two_rdm(sigma, M, N)
    lower = 0.0
    for it in range(max_iter + 1):
        diff = cur - target
        f = float(np.sum(np.abs(diff) ** 2))
        residual = trace_norm(diff)
        if residual <= tol:
            return NRepReport(Verdict.YES, residual, sigma, lower, it)
        grad = 2 * two_rdm_adjoint(diff, M, N)
        lam, v = min_eigenvalue(grad)
        gap = float(np.real(np.sum(grad * sigma.T))) - lam
        lower = max(lower, f - gap)
        if lower > threshold:
            return NRepReport(Verdict.NO, residual, None, lower, it)
        if it == max_iter:
            break
        w = B @ v
        step_dir = c * (w @ w.conj().T) - cur
        denom = float(np.sum(np.abs(step_dir) ** 2))
        if denom <= 0:
            break
        g = min(1.0, max(0.0, -float(np.real(np.sum(diff.conj() * step_dir))) / denom))
        sigma = (1 - g) * sigma + g * np.outer(v, v.conj())
        cur = cur + g * step_dir
    return NRepReport(Verdict.UNDECIDED, trace_norm(cur - target), None, lower, max_iter)


def max_pair_occupation(g, M: int, N: int) -> float:
    """Largest eigenvalue of ``a_g^dag a_g`` on sector ``N`` for the pair function ``g``."""
    B = _pair_stack(M, N)
    ag = np.tensordot(np.asarray(g).conj(), B, axes=1)
    return float(eigvalsh(ag.conj().T @ ag)[-1])


def check_sector_state(sigma, M: int, N: int) -> np.ndarray:
    return check_density_matrix(np.asarray(sigma), name=f"sector-{N} state")
