"""Monte-Carlo simulation of the Pauli-sampling consistency verifier and the swap test.

The verifier picks a subset ``C_i`` and a Pauli word ``Q`` on it uniformly,
measures ``Q`` on each of ``r`` witness registers, and accepts when the mean
outcome ``Y`` is within ``eps`` of ``Tr(Q rho_i)``.  Outcome distributions are
computed exactly from the witness (Born rule in the eigenbasis of ``Q``) and
only the final draws are random.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binomtest

from .consistency import ConsistencyInstance
from .errors import CapacityError, DimensionError, PreconditionError
from .qmatrix import as_hermitian
from .qstate import all_pauli_words, embed_operator, partial_trace, pauli_matrix

WITNESS_MAX_QUBITS_DENSE = 12
WITNESS_MAX_QUBITS_PURE = 20
ONE_SIGMA = 0.6826894921370859


@dataclass(frozen=True)
class VerifierParams:
    """``eps = beta / (2 * 4^k)`` and ``r = ceil((16/eps^2) ln(8 * 4^k * m / eps))``."""

    beta: float
    k: int
    m: int

    @property
    def eps(self) -> float:
        return 0.5 * self.beta / 4**self.k

    @property
    def r(self) -> int:
        e = self.eps
        return int(math.ceil(16 / e**2 * math.log(8 * 4**self.k * self.m / e)))

    @property
    def yes_rejection_bound(self) -> float:
        """``(1/4)(eps / (4^k m))``."""
        return 0.25 * self.eps / (4**self.k * self.m)

    @property
    def no_rejection_bound(self) -> float:
        """``(1/2)(eps / (4^k m))``."""
        return 0.5 * self.eps / (4**self.k * self.m)

    @classmethod
    def for_instance(cls, inst: ConsistencyInstance) -> "VerifierParams":
        return cls(inst.beta, max(mg.k for mg in inst.marginals), inst.m)


@dataclass(frozen=True)
class ProductWitness:
    """``sigma^{(x) r}``; registers are independent so outcome counts are binomial."""

    sigma: np.ndarray
    r: int

    @property
    def n(self) -> int:
        return int(round(math.log2(self.sigma.shape[0])))


@dataclass(frozen=True)
class WitnessState:
    """A state on ``r`` registers of ``n`` qubits: a density matrix or a state vector."""

    state: np.ndarray
    r: int
    n: int

    def __post_init__(self):
        st = np.asarray(self.state, dtype=complex)
        total = self.r * self.n
        if st.shape[0] != 2**total:
            raise DimensionError(f"witness dimension {st.shape[0]} does not match r*n = {total} qubits")
        limit = WITNESS_MAX_QUBITS_PURE if st.ndim == 1 else WITNESS_MAX_QUBITS_DENSE
        if total > limit:
            raise CapacityError(f"{total} witness qubits exceeds {limit}")
        if st.ndim == 1:
            st = st / np.linalg.norm(st)
        else:
            st = as_hermitian(st, tol=1e-10)
        object.__setattr__(self, "state", st)

    @property
    def is_pure(self) -> bool:
        return self.state.ndim == 1

    def register_state(self, j: int) -> np.ndarray:
        """Reduced state of register ``j`` (1-based)."""
        keep = list(range((j - 1) * self.n + 1, j * self.n + 1))
        rho = np.outer(self.state, self.state.conj()) if self.is_pure else self.state
        return partial_trace(rho, keep)

    def average_register_state(self) -> np.ndarray:
        """``tau* = (1/r) sum_j tau^{(j)}``."""
        return sum(self.register_state(j) for j in range(1, self.r + 1)) / self.r


def _outcome_distribution(witness: WitnessState, Q: np.ndarray) -> np.ndarray:
    """Exact distribution of the number of ``-1`` outcomes when ``Q`` is measured on every register."""
    w, U = np.linalg.eigh(Q)
    minus = (w < 0).astype(int)
    Ud = U.conj().T
    r, d = witness.r, 2**witness.n
    if witness.is_pure:
        psi = witness.state.reshape((d,) * r)
        for ax in range(r):
            psi = np.moveaxis(np.tensordot(Ud, psi, axes=([1], [ax])), 0, ax)
        probs = np.abs(psi) ** 2
    else:
        rho = witness.state.reshape((d,) * (2 * r))
        for ax in range(r):
            rho = np.moveaxis(np.tensordot(Ud, rho, axes=([1], [ax])), 0, ax)
            rho = np.moveaxis(np.tensordot(rho, U, axes=([r + ax], [0])), -1, r + ax)
        probs = np.real(np.einsum(rho.reshape(d**r, d**r), [0, 0], [0])).reshape((d,) * r)
    counts = sum(np.meshgrid(*([minus] * r), indexing="ij")) if r > 1 else minus
    dist = np.bincount(np.ravel(counts), weights=np.ravel(probs), minlength=r + 1)
    return np.clip(dist, 0, None) / dist.sum()


def _product_distribution(sigma: np.ndarray, Q: np.ndarray, r: int) -> tuple[float, int]:
    p_minus = 0.5 * (1 - float(np.real(np.trace(Q @ sigma))))
    return min(max(p_minus, 0.0), 1.0), r


@dataclass
class VerifierRun:
    trials: int
    accepted: int
    params: VerifierParams
    r: int
    eps: float

    @property
    def acceptance(self) -> float:
        return self.accepted / self.trials

    @property
    def rejection(self) -> float:
        return 1 - self.acceptance

    def wilson_halfwidth(self, confidence: float = ONE_SIGMA) -> float:
        return wilson_halfwidth(self.trials - self.accepted, self.trials, confidence)


def wilson_halfwidth(successes: int, trials: int, confidence: float = ONE_SIGMA) -> float:
    """Half the width of the Wilson score interval; one-sigma coverage by default."""
    ci = binomtest(int(successes), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return 0.5 * (ci.high - ci.low)


def verifier_choices(inst: ConsistencyInstance) -> list[tuple[int, str, np.ndarray, float]]:
    """Every ``(i, word, Q on n qubits, Tr(Q rho_i))`` the verifier may draw."""
    out = []
    for i, mg in enumerate(inst.marginals):
        for word in all_pauli_words(len(mg.subset)):
            q_local = pauli_matrix(word)
            target = float(np.real(np.trace(q_local @ mg.rho)))
            out.append((i, word, embed_operator(q_local, mg.subset, inst.n), target))
    return out


def run_consistency_verifier(
    inst: ConsistencyInstance,
    witness,
    trials: int,
    rng=None,
    params: VerifierParams | None = None,
) -> VerifierRun:
    """Simulate ``trials`` independent runs of the verifier on ``witness``.

    ``witness`` is a :class:`ProductWitness` (any ``r``; outcome counts are
    drawn from a binomial) or a :class:`WitnessState` (entangled registers;
    the joint distribution is computed exactly).  ``eps`` comes from
    ``params``; the register count is the witness's own.
    """
    if trials < 1000:
        raise PreconditionError("need at least 1000 trials")
    if isinstance(witness, ProductWitness) and witness.sigma.shape[0] != 2**inst.n:
        raise DimensionError(f"product witness acts on {witness.n} qubits, instance has n={inst.n}")
    rng = np.random.default_rng(rng)
    params = params if params is not None else VerifierParams.for_instance(inst)
    eps = params.eps
    choices = verifier_choices(inst)
    m = inst.m
    # draw i uniformly, then Q uniformly on C_i
    by_subset = [[c for c in choices if c[0] == i] for i in range(m)]
    i_draw = rng.integers(m, size=trials)
    accepted = 0
    for i in range(m):
        n_i = int(np.sum(i_draw == i))
        if n_i == 0:
            continue
        opts = by_subset[i]
        q_draw = rng.integers(len(opts), size=n_i)
        for q_idx, (_, _, Q, target) in enumerate(opts):
            cnt = int(np.sum(q_draw == q_idx))
            if cnt == 0:
                continue
            if isinstance(witness, ProductWitness):
                p_minus, r = _product_distribution(witness.sigma, Q, witness.r)
                minus = rng.binomial(r, p_minus, size=cnt)
            else:
                dist = _outcome_distribution(witness, Q)
                r = witness.r
                minus = rng.choice(r + 1, size=cnt, p=dist)
            Y = (r - 2 * minus) / r
            accepted += int(np.sum(np.abs(Y - target) <= eps + 1e-12))
    r_used = witness.r
    return VerifierRun(trials, accepted, params, r_used, eps)


@dataclass
class SoundnessRow:
    name: str
    rejection: float
    bound: float
    halfwidth: float
    mean_Y_error: float

    @property
    def passed(self) -> bool:
        return self.rejection >= self.bound - 3 * self.halfwidth


def expected_Y(witness: WitnessState, Q_local: np.ndarray, subset) -> float:
    """``Tr((Q x I) tau*)``."""
    return float(np.real(np.trace(Q_local @ partial_trace(witness.average_register_state(), subset))))


def markov_soundness_experiment(
    inst: ConsistencyInstance,
    witnesses: dict,
    trials: int,
    rng=None,
    params: VerifierParams | None = None,
) -> list[SoundnessRow]:
    """Rejection frequency of each adversarial witness against the ``(1/2)(eps/4^k m)`` floor.

    ``mean_Y_error`` is the largest gap, over the verifier's choices, between
    the exact mean of ``Y`` and ``Tr((Q x I) tau*)``.
    """
    rng = np.random.default_rng(rng)
    params = params if params is not None else VerifierParams.for_instance(inst)
    rows = []
    for name, w in witnesses.items():
        run = run_consistency_verifier(inst, w, trials, rng, params)
        err = 0.0
        for i, word, Q, _ in verifier_choices(inst):
            dist = _outcome_distribution(w, Q)
            mean = float(np.dot(dist, (w.r - 2 * np.arange(w.r + 1)) / w.r))
            err = max(err, abs(mean - expected_Y(w, pauli_matrix(word), inst.marginals[i].subset)))
        rows.append(SoundnessRow(name, run.rejection, params.no_rejection_bound, run.wilson_halfwidth(), err))
    return rows


def ghz_across_registers(r: int, n: int) -> WitnessState:
    """``(|0...0> + |1...1>)/sqrt 2`` over all ``r * n`` qubits."""
    v = np.zeros(2 ** (r * n), dtype=complex)
    v[0] = v[-1] = 1 / math.sqrt(2)
    return WitnessState(v, r, n)


def bell_pairs_across_registers(n: int) -> WitnessState:
    """Two registers with qubit ``q`` of the first maximally entangled with qubit ``q`` of the second."""
    bell = np.zeros(4, dtype=complex)
    bell[0] = bell[3] = 1 / math.sqrt(2)
    # pair order (1, n+1), (2, n+2), ...: build in pair order then permute axes
    v = bell
    for _ in range(n - 1):
        v = np.kron(v, bell)
    t = v.reshape((2,) * (2 * n))
    order = [2 * q for q in range(n)] + [2 * q + 1 for q in range(n)]
    return WitnessState(np.transpose(t, order).reshape(-1), 2, n)


# ---------------------------------------------------------------- swap test


def swap_operator(dim: int) -> np.ndarray:
    S = np.zeros((dim * dim, dim * dim))
    for a in range(dim):
        for b in range(dim):
            S[b * dim + a, a * dim + b] = 1.0
    return S


@dataclass
class SwapTestResult:
    trials: int
    zeros: int
    probability: float

    @property
    def frequency(self) -> float:
        return self.zeros / self.trials

    def wilson_halfwidth(self, confidence: float = ONE_SIGMA) -> float:
        return wilson_halfwidth(self.zeros, self.trials, confidence)


def swap_test(nu, eta, trials: int, rng=None) -> SwapTestResult:
    """Sample the swap test on ``nu (x) eta``; outcome 0 has probability ``(1 + Tr(Swap (nu x eta)))/2``."""
    nu = np.asarray(nu, dtype=complex)
    eta = np.asarray(eta, dtype=complex)
    if nu.shape != eta.shape:
        raise DimensionError(f"swap test needs equal dimensions, got {nu.shape} and {eta.shape}")
    rng = np.random.default_rng(rng)
    p0 = 0.5 * (1 + float(np.real(np.trace(swap_operator(nu.shape[0]) @ np.kron(nu, eta)))))
    p0 = min(max(p0, 0.0), 1.0)
    return SwapTestResult(trials, int(rng.binomial(trials, p0)), p0)
