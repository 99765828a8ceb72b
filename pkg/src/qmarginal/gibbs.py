"""Maximum-entropy fitting: Gibbs states ``exp(sum_i theta_i T_i) / Z`` with prescribed expectations.

The log partition function ``psi(theta) = log Tr exp(sum_i theta_i T_i)`` is
smooth and convex with gradient ``<T_i>_theta``.  Minimizing
``psi(theta) - theta . t`` therefore matches the targets ``t`` whenever they
come from a full-rank state, and the minimizer is the entropy-maximizing
state with those expectations.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .consistency import ConsistencyInstance
from .errors import PreconditionError
from .qmatrix import eig_hermitian, trace_norm
from .qstate import LocalPauliSet, embed_operator, marginals_to_alpha, partial_trace, pauli_matrix

DIVERGENCE_RADIUS = 200.0
GRAM_RANK_TOL = 1e-8


class FitStatus(str, enum.Enum):
    CONVERGED = "CONVERGED"
    DIVERGING = "DIVERGING"
    MAXITER = "MAXITER"


@dataclass(frozen=True)
class ObservableSet:
    """Hermitian observables ``T_1..T_r`` with target expectations ``t_1..t_r``.

    ``{I, T_1, ..., T_r}`` must be linearly independent.
    """

    observables: np.ndarray
    targets: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        T = np.array(self.observables, dtype=complex)
        if T.ndim != 3 or T.shape[1] != T.shape[2]:
            raise PreconditionError("observables must be a stack of square matrices")
        if not np.allclose(T, T.conj().transpose(0, 2, 1), atol=1e-10):
            raise PreconditionError("observables must be Hermitian")
        t = np.asarray(self.targets, dtype=float)
        if t.shape != (T.shape[0],):
            raise PreconditionError("one target per observable")
        dim = T.shape[1]
        basis = np.concatenate([np.eye(dim)[None], T]).reshape(T.shape[0] + 1, -1)
        sv = np.linalg.svd(basis, compute_uv=False)
        if sv[-1] <= GRAM_RANK_TOL * sv[0]:
            raise PreconditionError("observables together with the identity are linearly dependent")
        T.setflags(write=False)
        object.__setattr__(self, "observables", T)
        object.__setattr__(self, "targets", t)

    @property
    def r(self) -> int:
        return self.observables.shape[0]

    @property
    def dim(self) -> int:
        return self.observables.shape[1]

    def generator(self, theta) -> np.ndarray:
        return np.tensordot(np.asarray(theta, dtype=float), self.observables, axes=1)


@dataclass
class GibbsFitResult:
    theta: np.ndarray
    state: np.ndarray
    residual: float
    status: FitStatus
    iterations: int
    history: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status is FitStatus.CONVERGED


@dataclass
class _Spectral:
    w: np.ndarray
    v: np.ndarray
    log_z: float
    probs: np.ndarray

    def state(self) -> np.ndarray:
        return (self.v * self.probs) @ self.v.conj().T


def _spectral(theta, obs: ObservableSet) -> _Spectral:
    dec = eig_hermitian(obs.generator(theta))
    w = dec.eigenvalues
    top = w[-1]
    e = np.exp(w - top)
    s = e.sum()
    return _Spectral(w, dec.eigenvectors, float(top + np.log(s)), e / s)


def log_partition(theta, obs: ObservableSet) -> float:
    """``log Tr exp(sum_i theta_i T_i)``, computed with the largest eigenvalue shifted out."""
    return _spectral(theta, obs).log_z


def gibbs_state(theta, obs: ObservableSet) -> np.ndarray:
    return _spectral(theta, obs).state()


def _expectations(spec: _Spectral, obs: ObservableSet) -> np.ndarray:
    # Tr(T_i rho) in the eigenbasis of the generator
    Tb = np.einsum("ab,kbc,cd->kad", spec.v.conj().T, obs.observables, spec.v, optimize=True)
    return np.real(np.einsum("kaa,a->k", Tb, spec.probs)), Tb


def grad_log_partition(theta, obs: ObservableSet) -> np.ndarray:
    """``d psi / d theta_i = Tr(T_i rho(theta))``."""
    return _expectations(_spectral(theta, obs), obs)[0]


def hessian_log_partition(theta, obs: ObservableSet) -> np.ndarray:
    """Exact Hessian of ``psi`` from divided differences of ``exp`` in the generator's eigenbasis."""
    spec = _spectral(theta, obs)
    g, Tb = _expectations(spec, obs)
    w, p = spec.w, spec.probs
    dw = w[:, None] - w[None, :]
    close = np.abs(dw) < 1e-10
    with np.errstate(divide="ignore", invalid="ignore"):
        kernel = np.where(close, 0.5 * (p[:, None] + p[None, :]), (p[:, None] - p[None, :]) / np.where(close, 1, dw))
    H = np.real(np.einsum("iab,jba,ab->ij", Tb, Tb, kernel, optimize=True))
    return 0.5 * (H + H.T) - np.outer(g, g)


def von_neumann_entropy(rho) -> float:
    w = np.linalg.eigvalsh(np.asarray(rho))
    w = w[w > 1e-300]
    return float(-np.sum(w * np.log(w)))


def fit_gibbs(
    obs: ObservableSet,
    tol: float = 1e-10,
    max_iter: int = 200,
    theta0=None,
    divergence_radius: float = DIVERGENCE_RADIUS,
) -> GibbsFitResult:
    """Fit ``theta`` so the Gibbs state reproduces the targets.

    Damped Newton on the convex objective ``psi(theta) - theta . t`` with
    backtracking.  CONVERGED when ``max_i |<T_i> - t_i| <= tol``; DIVERGING
    when ``|theta|`` passes ``divergence_radius`` while the residual stays
    above ``tol`` (targets outside the interior of the feasible set).
    """
    theta = np.zeros(obs.r) if theta0 is None else np.asarray(theta0, dtype=float).copy()
    t = obs.targets
    history = []

    def objective(th):
        return log_partition(th, obs) - th @ t

    for it in range(max_iter + 1):
        spec = _spectral(theta, obs)
        g = _expectations(spec, obs)[0] - t
        residual = float(np.max(np.abs(g)))
        history.append(residual)
        if residual <= tol:
            return GibbsFitResult(theta, spec.state(), residual, FitStatus.CONVERGED, it, history)
        if np.linalg.norm(theta) > divergence_radius:
            return GibbsFitResult(theta, spec.state(), residual, FitStatus.DIVERGING, it, history)
        if it == max_iter:
            break
        H = hessian_log_partition(theta, obs)
        # Levenberg damping keeps the step defined when H is nearly singular
        lam = 1e-12 * max(1.0, np.trace(H))
        try:
            step = -np.linalg.solve(H + lam * np.eye(obs.r), g)
        except np.linalg.LinAlgError:
            step = -g
        if g @ step >= 0:
            step = -g
        f0 = spec.log_z - theta @ t
        slope = float(g @ step)
        # the slack absorbs roundoff once the decrease is below machine precision
        slack = 1e-14 * max(1.0, abs(f0))
        s = 1.0
        while s > 1e-12:
            cand = theta + s * step
            if objective(cand) <= f0 + 1e-4 * s * slope + slack:
                break
            s *= 0.5
        theta = theta + s * step
    spec = _spectral(theta, obs)
    return GibbsFitResult(theta, spec.state(), history[-1], FitStatus.MAXITER, max_iter, history)


def pauli_observable_set(S: LocalPauliSet, targets) -> ObservableSet:
    """Embed every member of ``S`` as an ``n``-qubit operator."""
    mats = np.array([pauli_matrix(p) for p in S.members])
    return ObservableSet(mats, np.asarray(targets, dtype=float), tuple(S.labels()))


@dataclass
class GibbsConsistencyResult:
    fit: GibbsFitResult
    marginal_residual: float
    local_terms: list

    @property
    def status(self) -> FitStatus:
        return self.fit.status

    @property
    def state(self) -> np.ndarray:
        return self.fit.state


def gibbs_consistent_state(inst: ConsistencyInstance, tol: float = 1e-10, max_iter: int = 200) -> GibbsConsistencyResult:
    """Gibbs state ``exp(M_1 + ... + M_m)/Z`` whose marginals match the instance.

    Each ``M_i`` collects the Pauli terms first covered by subset ``i`` and is
    therefore local to it.  ``marginal_residual`` is the largest trace
    distance ``(1/2)|Tr_{~C_i} sigma - rho_i|_1``.
    """
    S = inst.pauli_set()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        alpha = marginals_to_alpha(inst.marginals, S)
    obs = pauli_observable_set(S, alpha)
    fit = fit_gibbs(obs, tol=tol, max_iter=max_iter)
    resid = max(0.5 * trace_norm(partial_trace(fit.state, mg.subset) - mg.rho) for mg in inst.marginals)
    terms = []
    for i, sub in enumerate(S.subsets):
        local = np.zeros((2 ** len(sub),) * 2, dtype=complex)
        for j in np.flatnonzero(S.first_cover == i):
            local += fit.theta[j] * pauli_matrix(S.members[j].restrict(sub))
        terms.append((sub, local))
    return GibbsConsistencyResult(fit, float(resid), terms)


def local_terms_generator(terms, n: int) -> np.ndarray:
    """``sum_i M_i`` as an ``n``-qubit operator."""
    return sum(embed_operator(h, sub, n) for sub, h in terms)


def single_qubit_targets(z: float, x: float) -> ObservableSet:
    """Targets ``<sigma_z> = z``, ``<sigma_x> = x`` on one qubit."""
    return ObservableSet(np.array([pauli_matrix("Z"), pauli_matrix("X")]), np.array([z, x]), ("Z", "X"))
