"""Local Hamiltonians and the reductions to and from Consistency.

``LH -> Consistency``: the ground energy is a linear function of the local
expectation vector, so deciding it is weak optimization over the set of
consistent vectors, which the consistency solver answers membership
queries for.

``Consistency -> LH``: Lagrange duality turns consistency into the value of
``min s  s.t.  F(x) <= s I`` over a box, and membership in that feasible
set is a ground-energy question about ``-F(x)``.

The stoquastic variants replace equality of marginals by entrywise
domination and the Pauli basis by matrix-element observables.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .consistency import (
    ConsistencyInstance,
    MarginalMap,
    make_kprime_oracle,
    solve_consistency_exact,
)
from .errors import (
    BudgetExhausted,
    CapacityError,
    ConvergenceError,
    DegenerateInstanceError,
    InvariantError,
    PreconditionError,
)
from .oracle_geometry import (
    ConvexBodyParams,
    ReductionLog,
    WOptQuery,
    wopt_star_via_wmem_star,
    wopt_via_wmem,
)
from .qmatrix import as_hermitian, eigvalsh, min_eigenvalue, operator_norm
from .qstate import (
    LocalPauliSet,
    SubsetMarginal,
    embed_operator,
    marginals_of,
    marginals_to_alpha,
    partial_trace,
    pauli_matrix,
)
from .verdict import Verdict

LH_MAX_QUBITS = 10
STOQUASTIC_TOL = 1e-12

LHOracle = Callable[["LocalHamInstance"], Verdict]


@dataclass(frozen=True)
class LocalHamInstance:
    """``H = sum_i H_i`` with ``H_i`` acting on ``C_i``; is some eigenvalue ``<= a`` or all ``>= b``?

    ``strict=False`` skips the ``b - a >= 1e-6`` floor; it is used for the
    sub-precision queries issued inside reductions.
    """

    n: int
    terms: tuple
    a: float
    b: float
    k: int = 2
    strict: bool = True

    def __post_init__(self):
        terms = []
        for sub, h in self.terms:
            sub = tuple(int(q) for q in sub)
            if any(q < 1 or q > self.n for q in sub) or list(sub) != sorted(set(sub)):
                raise IndexError(f"bad subset {sub} for n={self.n}")
            if len(sub) > self.k:
                raise PreconditionError(f"term on {sub} exceeds locality k={self.k}")
            h = np.array(as_hermitian(h), dtype=complex)
            if h.shape != (2 ** len(sub),) * 2:
                raise PreconditionError(f"term on {sub} has shape {h.shape}")
            if operator_norm(h) > 1 + 1e-9:
                raise PreconditionError(f"term on {sub} has norm {operator_norm(h):.6g} > 1")
            h.setflags(write=False)
            terms.append((sub, h))
        if not terms:
            raise PreconditionError("need at least one term")
        if self.strict and self.b - self.a < 1e-6:
            raise PreconditionError(f"threshold gap b - a = {self.b - self.a} below 1e-6")
        if self.b < self.a:
            raise PreconditionError("need a <= b")
        object.__setattr__(self, "terms", tuple(terms))

    @property
    def m(self) -> int:
        return len(self.terms)

    @property
    def subsets(self) -> list[tuple[int, ...]]:
        return [s for s, _ in self.terms]

    def pauli_set(self) -> LocalPauliSet:
        return LocalPauliSet(self.n, self.subsets)

    def assemble(self) -> np.ndarray:
        if self.n > LH_MAX_QUBITS:
            raise CapacityError(f"n={self.n} exceeds {LH_MAX_QUBITS}")
        out = np.zeros((2**self.n,) * 2, dtype=complex)
        for sub, h in self.terms:
            out += embed_operator(h, sub, self.n)
        return out

    def with_thresholds(self, a: float, b: float) -> "LocalHamInstance":
        return LocalHamInstance(self.n, self.terms, a, b, self.k, self.strict)


def ground_energy_exact(inst: LocalHamInstance) -> float:
    """Smallest eigenvalue of the assembled Hamiltonian."""
    return float(eigvalsh(inst.assemble())[0])


def classify_exact(inst: LocalHamInstance) -> Verdict:
    """YES if ``E0 <= a``, NO if ``E0 >= b``, UNDECIDED inside the promise gap."""
    e0 = ground_energy_exact(inst)
    if e0 <= inst.a:
        return Verdict.YES
    if e0 >= inst.b:
        return Verdict.NO
    return Verdict.UNDECIDED


def exact_lh_oracle(inst: LocalHamInstance) -> Verdict:
    """A valid Local Hamiltonian oracle: compares the ground energy with ``(a + b)/2``."""
    return Verdict.from_bool(ground_energy_exact(inst) <= 0.5 * (inst.a + inst.b))


def random_local_hamiltonian(n: int, subsets, rng=None, a: float = -1.0, b: float = 0.0) -> LocalHamInstance:
    """Random terms on the given subsets, each scaled to operator norm 1."""
    rng = np.random.default_rng(rng)
    terms = []
    for sub in subsets:
        dim = 2 ** len(sub)
        g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        h = 0.5 * (g + g.conj().T)
        terms.append((tuple(sub), h / operator_norm(h)))
    k = max(len(s) for s in subsets)
    return LocalHamInstance(n, tuple(terms), a, b, k=k)


# ---------------------------------------------------------------- LH -> WOPT


@dataclass
class LHWoptReduction:
    """Weak optimization query over the consistent set encoding an LH instance."""

    query: WOptQuery
    body: ConvexBodyParams
    S: LocalPauliSet
    eta: np.ndarray
    nu: float
    eta_terms: np.ndarray
    nu_terms: np.ndarray

    @property
    def eps(self) -> float:
        return self.query.eps

    def energy(self, alpha) -> float:
        """``sum_i Tr(H_i rho_i) = nu + eta . alpha``."""
        return float(self.nu + self.eta @ np.asarray(alpha))


def _term_coefficients(inst: LocalHamInstance, S: LocalPauliSet):
    eta_terms = np.zeros((inst.m, S.d))
    nu_terms = np.zeros(inst.m)
    for i, (sub, h) in enumerate(inst.terms):
        dim = 2 ** len(sub)
        nu_terms[i] = np.trace(h).real / dim
        for j, p in enumerate(S.members):
            if set(p.support) <= set(sub):
                eta_terms[i, j] = np.real(np.trace(h @ pauli_matrix(p.restrict(sub))) / dim)
    return eta_terms, nu_terms


def lh_to_wopt(inst: LocalHamInstance, S: LocalPauliSet | None = None) -> LHWoptReduction:
    """Map an LH instance to weak optimization over the consistent set.

    With ``eta_P = sum_i 2^{-|C_i|} Tr(H_i P|_{C_i})`` and
    ``nu = sum_i 2^{-|C_i|} Tr(H_i)`` the energy is ``nu + eta . alpha``.
    The query asks to maximize ``c = -eta/|eta|`` with
    ``eps = (b - a) / (2|eta| + m + 2 sqrt(d) m)``.

    Raises
    ------
    DegenerateInstanceError
        If ``eta = 0``; the energy is then the constant ``nu``.
    """
    S = S if S is not None else inst.pauli_set()
    m = inst.m
    if abs(inst.a) > m or abs(inst.b) > m:
        raise PreconditionError(f"thresholds must satisfy |a|, |b| <= m = {m}")
    eta_terms, nu_terms = _term_coefficients(inst, S)
    eta = eta_terms.sum(axis=0)
    nu = float(nu_terms.sum())
    norm_eta = float(np.linalg.norm(eta))
    if norm_eta <= 1e-14:
        raise DegenerateInstanceError(f"Hamiltonian is {nu:.6g} times the identity")
    d = S.d
    eps = (inst.b - inst.a) / (2 * norm_eta + m + 2 * math.sqrt(d) * m)
    gamma = -((inst.a - nu + 2 * eps * math.sqrt(d) * m) / norm_eta + eps)
    body = ConvexBodyParams(d, math.sqrt(d), 1 / math.sqrt(d))
    return LHWoptReduction(WOptQuery(-eta / norm_eta, gamma, eps), body, S, eta, nu, eta_terms, nu_terms)


def _compare_constant(nu: float, a: float, b: float) -> Verdict:
    if nu <= a:
        return Verdict.YES
    if nu >= b:
        return Verdict.NO
    return Verdict.UNDECIDED


def solve_lh_via_consistency(
    inst: LocalHamInstance,
    oracle=None,
    log: ReductionLog | None = None,
    max_iter: int = 2000,
) -> Verdict:
    """Decide Local Hamiltonian with only a consistency (membership) oracle.

    Composes :func:`lh_to_wopt` with :func:`wopt_via_wmem` over the
    consistent set.  The oracle defaults to :func:`make_kprime_oracle`,
    which runs the exact consistency solver at ``beta = delta/sqrt(d)``.
    Budget exhaustion in ``log`` yields UNDECIDED.
    """
    log = log if log is not None else ReductionLog()
    try:
        red = lh_to_wopt(inst)
    except DegenerateInstanceError:
        nu = sum(np.trace(h).real / h.shape[0] for _, h in inst.terms)
        return _compare_constant(nu, inst.a, inst.b)
    S = red.S
    inner = oracle if oracle is not None else make_kprime_oracle(S, max_iter=max_iter)
    sqrt_d = math.sqrt(S.d)

    def tracked(alpha, delta):
        beta = delta / sqrt_d
        log.params["consistency_beta"] = min(beta, log.params.get("consistency_beta", math.inf))
        return inner(alpha, delta)

    log.note("lh_eps", red.eps)
    log.note("lh_gamma", red.query.gamma)
    k = S.k
    log.note("consistency_beta_scale", (inst.b - inst.a) ** 3 / (4 ** (11 * k) * inst.m**14))
    try:
        return wopt_via_wmem(red.body, tracked, red.query, log)
    except (BudgetExhausted, ConvergenceError) as exc:
        log.note("stopped", str(exc))
        return Verdict.UNDECIDED


# ------------------------------------------------------ duality machinery


@dataclass
class DualProgram:
    """``F(x) = sum_p x_p F_p + I`` with ``F_p = embed(O_p) - shift_p I`` over a box.

    The primal is ``min s`` subject to ``F(x) <= s I``, ``x`` in the box
    ``[lower, 1]^d`` and ``s`` in ``[1 - 2d, 1 + 2d]``.  Every ``O_p`` is local
    to ``subsets[owner[p]]``.
    """

    n: int
    subsets: list
    owner: np.ndarray
    local_ops: list
    shifts: np.ndarray
    lower: float = -1.0
    real: bool = False
    _full: np.ndarray | None = field(default=None, repr=False)

    @property
    def d(self) -> int:
        return len(self.local_ops)

    @property
    def dim(self) -> int:
        return 2**self.n

    def observables(self) -> np.ndarray:
        """Dense ``F_p`` stacked along axis 0."""
        if self._full is None:
            eye = np.eye(self.dim)
            self._full = np.array(
                [embed_operator(o, self.subsets[i], self.n) - s * eye for o, i, s in zip(self.local_ops, self.owner, self.shifts)]
            )
        return self._full

    def F(self, x) -> np.ndarray:
        return np.tensordot(np.asarray(x, dtype=float), self.observables(), axes=1) + np.eye(self.dim)

    def body(self) -> ConvexBodyParams:
        d = self.d
        R = math.sqrt(d + (1 + 2 * d) ** 2)
        if self.lower < 0:
            center = np.zeros(d + 1)
            center[-1] = 2.0
            return ConvexBodyParams(d + 1, R, 1 / (4 * (d + 1)), center)
        center = np.full(d + 1, 1 / (3 * d))
        center[-1] = 2.0
        return ConvexBodyParams(d + 1, R, 1 / (6 * (d + 1)), center)

    def hamiltonian(self, x, a: float, b: float) -> LocalHamInstance:
        """``-F(x) / (2d + 1)`` as a local Hamiltonian with thresholds ``a, b``."""
        x = np.asarray(x, dtype=float)
        scale = 2 * self.d + 1
        terms = []
        ident = float(x @ self.shifts) - 1.0
        k = max(len(c) for c in self.subsets)
        for i, c in enumerate(self.subsets):
            dim = 2 ** len(c)
            h = np.zeros((dim, dim), dtype=complex)
            own = np.flatnonzero(self.owner == i)
            for p in own:
                h -= x[p] * self.local_ops[p]
            if i == 0:
                h += ident * np.eye(dim)
            terms.append((c, h / scale))
        return LocalHamInstance(self.n, tuple(terms), a, b, k=k, strict=False)

    def in_box(self, point) -> bool:
        x, s = point[:-1], point[-1]
        d = self.d
        return bool(np.all(x >= self.lower) and np.all(x <= 1) and 1 - 2 * d <= s <= 1 + 2 * d)

    def membership_oracle(self, lh_oracle: LHOracle | None = None, stoquastic: bool = False):
        """Starred membership in ``K = {(x, s) in box : F(x) <= s I}`` through an LH oracle.

        The LH question is whether ``-F(x)/(2d+1)`` has an eigenvalue at most
        ``(-s - delta)/(2d+1)``; a YES answer means the point is not in K.
        """
        lh_oracle = lh_oracle if lh_oracle is not None else exact_lh_oracle
        scale = 2 * self.d + 1

        def oracle(point, delta):
            point = np.asarray(point, dtype=float)
            if not self.in_box(point):
                return False
            x, s = point[:-1], point[-1]
            ham = self.hamiltonian(x, (-s - delta) / scale, -s / scale)
            if stoquastic and not is_stoquastic(ham.assemble()):
                raise InvariantError("-F(x) is not stoquastic")
            return lh_oracle(ham) is not Verdict.YES

        return oracle

    # dense reference solves --------------------------------------------

    def _embed_real(self, mats):
        re, im = np.real(mats), np.imag(mats)
        if self.real:
            return re
        top = np.concatenate([re, -im], axis=-1)
        bot = np.concatenate([im, re], axis=-1)
        return np.concatenate([top, bot], axis=-2)

    def primal_dense(self, solver: str = "CLARABEL") -> tuple[float, np.ndarray]:
        """Optimal ``(p*, x*)`` of the primal by a generic conic solver."""
        import cvxpy as cp

        d = self.d
        Fe = self._embed_real(self.observables())
        n2 = Fe.shape[-1]
        x = cp.Variable(d)
        s = cp.Variable()
        expr = sum(x[p] * Fe[p] for p in range(d)) + np.eye(n2)
        lmi = s * np.eye(n2) - expr
        cons = [0.5 * (lmi + lmi.T) >> 0, x >= self.lower, x <= 1, s >= 1 - 2 * d, s <= 1 + 2 * d]
        prob = cp.Problem(cp.Minimize(s), cons)
        prob.solve(solver=solver)
        if prob.status not in ("optimal", "optimal_inaccurate"):
            raise ConvergenceError(f"primal solve ended with status {prob.status}")
        return float(prob.value), np.asarray(x.value)

    def dual_dense(self, solver: str = "CLARABEL") -> tuple[float, np.ndarray]:
        """Optimal ``(d*, Z*)`` of ``max_Z inf_x Tr(Z F(x))`` over density matrices."""
        import cvxpy as cp

        N = self.dim
        F = self.observables()
        if self.real:
            Z = cp.Variable((N, N), symmetric=True)
            cons = [Z >> 0, cp.trace(Z) == 1]
            t = cp.hstack([cp.trace(Z @ np.real(Fp)) for Fp in F])
        else:
            W = cp.Variable((2 * N, 2 * N), symmetric=True)
            cons = [W >> 0, W[:N, :N] == W[N:, N:], W[:N, N:] == -W[N:, :N], cp.trace(W) == 2]
            Fe = self._embed_real(F)
            t = cp.hstack([0.5 * cp.trace(W @ Fp) for Fp in Fe])
        if self.lower < 0:
            g = 1 - cp.sum(cp.abs(t))
        else:
            g = 1 + cp.sum(cp.minimum(t, 0))
        prob = cp.Problem(cp.Maximize(g), cons)
        prob.solve(solver=solver)
        if prob.status not in ("optimal", "optimal_inaccurate"):
            raise ConvergenceError(f"dual solve ended with status {prob.status}")
        if self.real:
            Zv = np.asarray(Z.value)
        else:
            Wv = np.asarray(W.value)
            Zv = Wv[:N, :N] + 1j * Wv[N:, :N]
        return float(prob.value), Zv


def consistency_dual_program(inst: ConsistencyInstance) -> DualProgram:
    """``F_P = P - alpha_P I`` over the local Pauli set, box ``[-1, 1]^d``."""
    S = inst.pauli_set()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        alpha = marginals_to_alpha(inst.marginals, S)
    owner = S.first_cover.copy()
    ops = [pauli_matrix(p.restrict(S.subsets[i])) for p, i in zip(S.members, owner)]
    return DualProgram(inst.n, list(S.subsets), owner, ops, alpha, lower=-1.0)


def _dual_decision(
    prog: DualProgram, beta: float, lh_oracle, method: str, log: ReductionLog | None, stoquastic: bool
) -> Verdict:
    log = log if log is not None else ReductionLog()
    log.note("dual_dimension", prog.d)
    if method == "dense":
        p_star, x_star = prog.primal_dense()
        log.note("p_star", p_star)
        return Verdict.from_bool(p_star >= 1 - beta / 2)
    if method != "wopt":
        raise ValueError(f"unknown method {method!r}")
    body = prog.body()
    log.note("body_R", body.R)
    log.note("body_r", body.r)
    c = np.zeros(prog.d + 1)
    c[-1] = -1.0
    q = WOptQuery(c, -(1 - beta / 2), beta / 2)
    oracle = prog.membership_oracle(lh_oracle, stoquastic=stoquastic)
    try:
        ans = wopt_star_via_wmem_star(body, oracle, q, log)
    except (BudgetExhausted, ConvergenceError) as exc:
        log.note("stopped", str(exc))
        return Verdict.UNDECIDED
    # a YES for the optimization query means p* <= 1 - beta, i.e. not consistent
    return ans.negate()


def consistency_to_lh(
    inst: ConsistencyInstance,
    lh_oracle: LHOracle | None = None,
    method: str = "wopt",
    log: ReductionLog | None = None,
) -> Verdict:
    """Decide Consistency with a Local Hamiltonian oracle through the dual program.

    ``method="wopt"`` runs the membership-oracle optimization chain with LH
    queries on ``-F(x)``; ``method="dense"`` solves the primal directly and
    serves as a reference.
    """
    return _dual_decision(consistency_dual_program(inst), inst.beta, lh_oracle, method, log, stoquastic=False)


# -------------------------------------------------------------- stoquastic


@dataclass(frozen=True)
class StoquasticFlag:
    terms: tuple
    total: bool

    def __bool__(self):
        return self.total and all(self.terms)


def is_stoquastic(h, tol: float = STOQUASTIC_TOL) -> bool:
    """All off-diagonal entries real and ``<= tol`` in the standard basis."""
    h = np.asarray(h)
    off = h[~np.eye(h.shape[0], dtype=bool)]
    return bool(np.all(np.abs(np.imag(off)) <= tol) and np.all(np.real(off) <= tol))


def stoquastic_flags(inst: LocalHamInstance) -> StoquasticFlag:
    per = tuple(is_stoquastic(h) for _, h in inst.terms)
    return StoquasticFlag(per, is_stoquastic(inst.assemble()))


@dataclass(frozen=True)
class StoqConsistencyInstance:
    """Real matrices ``rho_i`` on ``C_i``: is there a state whose marginals dominate them entrywise?"""

    n: int
    marginals: tuple
    beta: float = 0.1

    def __post_init__(self):
        out = []
        for mg in self.marginals:
            if not isinstance(mg, SubsetMarginal):
                mg = SubsetMarginal(tuple(mg[0]), np.asarray(mg[1]))
            if np.max(np.abs(np.imag(mg.rho))) > 1e-12:
                raise PreconditionError("stoquastic marginals must be real")
            if mg.subset[-1] > self.n:
                raise IndexError(f"subset {mg.subset} exceeds n={self.n}")
            out.append(mg)
        if self.n > 8:
            raise CapacityError(f"n={self.n} exceeds 8")
        object.__setattr__(self, "marginals", tuple(out))

    @property
    def subsets(self):
        return [mg.subset for mg in self.marginals]

    def violation(self, sigma) -> float:
        """Largest entrywise shortfall ``max(rho_i - Tr_{~C_i} sigma)``, floored at 0."""
        worst = 0.0
        for mg in self.marginals:
            worst = max(worst, float(np.max(np.real(mg.rho) - np.real(partial_trace(sigma, mg.subset)))))
        return worst


@dataclass
class StoqReport:
    verdict: Verdict
    violation: float
    witness: np.ndarray | None
    lower_bound: float
    iterations: int


class _HingeMap:
    """Wrap the marginal map so Frank-Wolfe minimizes a squared hinge."""

    def __init__(self, lmap: MarginalMap, targets):
        self.lmap = lmap
        self.targets = [np.real(t) for t in targets]

    def residuals(self, fwd):
        return [np.maximum(t - np.real(a), 0.0) for a, t in zip(fwd, self.targets)]


def stoquastic_consistency_oracle(inst: StoqConsistencyInstance, tol: float = 1e-6, max_iter: int = 5000) -> StoqReport:
    """Entrywise-domination feasibility over real density matrices.

    Minimizes ``f(sigma) = sum_i sum_entries max(0, rho_i - Tr_{~C_i} sigma)^2``
    by Frank-Wolfe with exact (piecewise quadratic) line search.  NO is
    certified once the Frank-Wolfe lower bound on ``f`` implies that every
    state leaves some entry short by more than ``tol``.
    """
    from scipy.optimize import minimize_scalar

    n = inst.n
    dim = 2**n
    lmap = MarginalMap(n, inst.subsets)
    hinge = _HingeMap(lmap, [mg.rho for mg in inst.marginals])
    entries = sum(mg.rho.size for mg in inst.marginals)
    threshold = entries * tol**2

    # exact marginals of some state: try the equality route first
    traces = [np.trace(mg.rho).real for mg in inst.marginals]
    if all(abs(t - 1) < 1e-9 for t in traces) and all(mg.is_state() for mg in inst.marginals):
        cinst = ConsistencyInstance(n, inst.marginals, beta=max(inst.beta, 1e-6), k=max(len(c) for c in inst.subsets))
        rep = solve_consistency_exact(cinst, tol=tol, max_iter=200)
        if rep.verdict is Verdict.YES:
            w = np.real(rep.witness)
            if inst.violation(w) <= tol:
                return StoqReport(Verdict.YES, inst.violation(w), w, 0.0, rep.iterations)

    sigma = np.eye(dim) / dim
    fwd = [np.real(a) for a in lmap.forward(sigma)]
    res = hinge.residuals(fwd)
    f = float(sum((r**2).sum() for r in res))
    lower = -np.inf
    for it in range(max_iter + 1):
        viol = inst.violation(sigma)
        if viol <= tol:
            return StoqReport(Verdict.YES, viol, sigma, max(lower, 0.0), it)
        grad = np.real(lmap.adjoint([-2 * r for r in res]))
        lam, v = min_eigenvalue(grad)
        v = np.real(v)
        v = v / np.linalg.norm(v)
        gap = float(np.sum(grad * sigma)) - lam
        lower = max(lower, f - gap)
        if lower > threshold:
            return StoqReport(Verdict.NO, viol, None, lower, it)
        if it == max_iter:
            break
        fs = [np.real(a) for a in lmap.forward_ket(v)]
        diff = [a - b for a, b in zip(fs, fwd)]

        def along(g):
            return sum(
                (np.maximum(t - (a + g * dd), 0.0) ** 2).sum() for a, dd, t in zip(fwd, diff, hinge.targets)
            )

        g = float(minimize_scalar(along, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-12}).x)
        if along(g) > f:
            g = 0.0
        sigma = (1 - g) * sigma + g * np.outer(v, v)
        fwd = [a + g * dd for a, dd in zip(fwd, diff)]
        res = hinge.residuals(fwd)
        f = float(sum((r**2).sum() for r in res))
    return StoqReport(Verdict.UNDECIDED, inst.violation(sigma), None, max(lower, 0.0), max_iter)


def _shift_nonpositive(h: np.ndarray) -> tuple[np.ndarray, float]:
    shift = float(np.max(np.real(np.diag(h))))
    return np.real(h) - shift * np.eye(h.shape[0]), shift


@dataclass
class StoqLHReduction:
    instance: StoqConsistencyInstance
    value: float
    shift: float
    verdict: Verdict
    oracle_report: StoqReport


def stoq_lh_to_stoq_consistency(inst: LocalHamInstance, solver: str = "CLARABEL") -> StoqLHReduction:
    """Ground energy of a stoquastic LH as a program over dominated marginals.

    Each term is shifted to be entrywise nonpositive; then
    ``min sum_i Tr(H_i rho_i)`` over states ``rho_i`` dominated entrywise by the
    marginals of some real state equals the shifted ground energy.  The
    optimal ``rho_i`` form the emitted instance, which is confirmed with
    :func:`stoquastic_consistency_oracle`.
    """
    import cvxpy as cp

    flags = stoquastic_flags(inst)
    if not all(flags.terms):
        raise PreconditionError("every term must be stoquastic")
    n = inst.n
    shifted = [_shift_nonpositive(h) for _, h in inst.terms]
    total_shift = sum(s for _, s in shifted)
    N = 2**n
    sigma = cp.Variable((N, N), symmetric=True)
    rhos = [cp.Variable((2 ** len(c),) * 2, symmetric=True) for c in inst.subsets]
    cons = [sigma >> 0, cp.trace(sigma) == 1]
    for rho, c in zip(rhos, inst.subsets):
        cons += [rho >> 0, cp.trace(rho) == 1, _cvx_partial_trace(sigma, c, n) >= rho]
    obj = sum(cp.trace(h @ rho) for (h, _), rho in zip(shifted, rhos))
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver=solver)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise ConvergenceError(f"stoquastic program ended with status {prob.status}")
    value = float(prob.value) + total_shift
    margs = tuple(SubsetMarginal(c, 0.5 * (r.value + r.value.T)) for c, r in zip(inst.subsets, rhos))
    out = StoqConsistencyInstance(n, margs)
    rep = stoquastic_consistency_oracle(out, tol=1e-5)
    if value <= inst.a:
        verdict = Verdict.YES
    elif value >= inst.b:
        verdict = Verdict.NO
    else:
        verdict = Verdict.UNDECIDED
    return StoqLHReduction(out, value, total_shift, verdict, rep)


def _cvx_partial_trace(sigma, keep, n):
    import cvxpy as cp

    expr = sigma
    dims = [2] * n
    for q in sorted(set(range(1, n + 1)) - set(keep), reverse=True):
        expr = cp.partial_trace(expr, dims, axis=q - 1)
        dims.pop(q - 1)
    return expr


def matrix_element_observables(dim: int) -> list[tuple[int, int, np.ndarray]]:
    """``X_st = (|s><t| + |t><s|)/2`` for ``s <= t`` in lexicographic order."""
    out = []
    for s in range(dim):
        for t in range(s, dim):
            x = np.zeros((dim, dim))
            x[s, t] += 0.5
            x[t, s] += 0.5
            out.append((s, t, x))
    return out


def stoquastic_dual_program(inst: StoqConsistencyInstance) -> DualProgram:
    """``F_p = X_st - <s|rho_i|t> I`` with ``x`` restricted to ``[0, 1]^d``."""
    owner, ops, shifts = [], [], []
    for i, mg in enumerate(inst.marginals):
        rho = np.real(mg.rho)
        if np.max(np.abs(rho)) > 1:
            raise PreconditionError("entries of rho_i must lie in [-1, 1]")
        for s, t, x in matrix_element_observables(rho.shape[0]):
            owner.append(i)
            ops.append(x)
            shifts.append(rho[s, t])
    return DualProgram(inst.n, inst.subsets, np.array(owner), ops, np.array(shifts), lower=0.0, real=True)


def stoq_consistency_to_stoq_lh(
    inst: StoqConsistencyInstance,
    lh_oracle: LHOracle | None = None,
    method: str = "wopt",
    log: ReductionLog | None = None,
) -> Verdict:
    """Decide stoquastic consistency with stoquastic LH queries on ``-F(x)``.

    Every queried ``-F(x)`` is checked to be stoquastic before the oracle
    sees it.
    """
    return _dual_decision(stoquastic_dual_program(inst), inst.beta, lh_oracle, method, log, stoquastic=True)


def planted_lh_instance(n: int, subsets, rng=None, gap: float = 0.2, offset: float = 0.05, yes: bool = True):
    """Random LH with thresholds ``gap`` apart, placed ``offset`` above (YES) or below (NO) ``E0``."""
    inst = random_local_hamiltonian(n, subsets, rng)
    e0 = ground_energy_exact(inst)
    if yes:
        a = e0 + offset
    else:
        a = e0 - offset - gap
    return inst.with_thresholds(a, a + gap)


def ground_state_marginals(inst: LocalHamInstance) -> list[SubsetMarginal]:
    """Marginals of a ground state on the instance's own subsets."""
    w, v = np.linalg.eigh(inst.assemble())
    psi = v[:, 0]
    return marginals_of(np.outer(psi, psi.conj()), inst.subsets)
