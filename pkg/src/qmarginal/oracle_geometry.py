"""Weak optimization from weak membership, by the simple (non-ellipsoid) chain.

The chain is::

    WOPT  --perceptron-->  WSEP  --cone refinement-->  WSEP^beta
          --shrink-->  WMEM^1  --shift toward p-->  WMEM

Every reduction accepts an optional :class:`ReductionLog` which records
the precision parameters actually used, counts oracle calls, stores the
cuts it produced and can enforce a query or wall-clock budget.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np

from .errors import BudgetExhausted, ClampWarning, ConvergenceError, PreconditionError
from .verdict import Verdict

MembershipOracle = Callable[[np.ndarray, float], "bool | Verdict"]

BINARY_SEARCH_CAP = 64
ROTATION_SKIP = 1e-8


@dataclass(frozen=True)
class ConvexBodyParams:
    """Geometry record: ``S(p, r) <= K <= S(0, R)`` in dimension ``d``."""

    d: int
    R: float
    r: float
    p: np.ndarray = field(default=None)

    def __post_init__(self):
        p = np.zeros(self.d) if self.p is None else np.asarray(self.p, dtype=float)
        if self.d < 1:
            raise PreconditionError("dimension must be positive")
        if not (0 < self.r <= self.R):
            raise PreconditionError(f"need 0 < r <= R, got r={self.r}, R={self.R}")
        if p.shape != (self.d,):
            raise PreconditionError(f"center has shape {p.shape}, expected ({self.d},)")
        object.__setattr__(self, "p", p)


class SepTag(str, Enum):
    INSIDE = "INSIDE"
    CUT = "CUT"


class SeparationAnswer(NamedTuple):
    tag: SepTag
    cut_normal: np.ndarray | None = None

    @property
    def inside(self) -> bool:
        return self.tag is SepTag.INSIDE


@dataclass(frozen=True)
class WOptQuery:
    """Is there a deep point with ``c.x >= gamma + eps``, or is ``c.x <= gamma - eps`` near K?"""

    c: np.ndarray
    gamma: float
    eps: float

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if abs(np.linalg.norm(c) - 1.0) > 1e-12:
            raise PreconditionError(f"direction must be a unit vector, |c| = {np.linalg.norm(c)!r}")
        if self.eps <= 0:
            raise PreconditionError("eps must be positive")
        object.__setattr__(self, "c", c)

    @classmethod
    def along(cls, direction, gamma: float, eps: float) -> "WOptQuery":
        direction = np.asarray(direction, dtype=float)
        return cls(direction / np.linalg.norm(direction), gamma, eps)


class CutRecord(NamedTuple):
    point: np.ndarray
    normal: np.ndarray
    slack: float
    beta: float
    kind: str


@dataclass
class ReductionLog:
    """Parameters, counters and cuts produced by a reduction run.

    Parameters
    ----------
    max_queries : int, optional
        Raise :class:`BudgetExhausted` once this many membership calls were made.
    seconds : float, optional
        Raise :class:`BudgetExhausted` once this much wall time has elapsed.
    keep_trajectory : bool
        Store every perceptron iterate.
    """

    max_queries: int | None = None
    seconds: float | None = None
    keep_trajectory: bool = False
    params: dict = field(default_factory=dict)
    membership_queries: int = 0
    separation_queries: int = 0
    perceptron_updates: int = 0
    cone_iterations: list = field(default_factory=list)
    binary_search_steps: list = field(default_factory=list)
    cuts: list = field(default_factory=list)
    trajectory: list = field(default_factory=list)
    started: float = field(default_factory=time.perf_counter)

    def charge(self):
        self.membership_queries += 1
        if self.max_queries is not None and self.membership_queries > self.max_queries:
            raise BudgetExhausted(f"membership query budget {self.max_queries} exhausted")
        if self.seconds is not None and time.perf_counter() - self.started > self.seconds:
            raise BudgetExhausted(f"wall-time budget {self.seconds}s exhausted")

    def note(self, key: str, value):
        self.params[key] = value

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.started


def _answer(ans) -> bool:
    if isinstance(ans, Verdict):
        if ans is Verdict.UNDECIDED:
            raise BudgetExhausted("membership oracle returned UNDECIDED")
        return ans is Verdict.YES
    return bool(ans)


def _below_one(name: str, value: float) -> float:
    if value <= 0:
        raise PreconditionError(f"{name} must be positive, got {value}")
    if value >= 1:
        warnings.warn(f"{name}={value} clamped into (0, 1)", ClampWarning, stacklevel=3)
        return 1.0 - 1e-9
    return value


def mem1_via_mem(body: ConvexBodyParams, oracle: MembershipOracle, y, delta: float, log: ReductionLog | None = None) -> bool:
    """One-sided membership: True for every ``y`` in K, False outside ``S(K, delta)``.

    Queries the two-sided oracle at ``y`` pulled toward ``p`` by ``delta/4R``
    with precision ``r delta / 4R``.
    """
    log = log if log is not None else ReductionLog()
    y = np.asarray(y, dtype=float)
    if _norm(y - body.p) >= 2 * body.R:
        return False
    shift = delta / (4 * body.R)
    inner_delta = body.r * delta / (4 * body.R)
    log.note("mem1_inner_delta", inner_delta)
    log.charge()
    return _answer(oracle((1 - shift) * y + shift * body.p, inner_delta))


def _norm(x: np.ndarray) -> float:
    return math.sqrt(float(x @ x))


@lru_cache(maxsize=None)
def _identity(d: int) -> np.ndarray:
    return np.eye(d)


def simplex_vertices(v: np.ndarray, alpha: float) -> np.ndarray:
    """Regular simplex in the hyperplane ``v^perp + cos^2(alpha) v`` with apex angle ``alpha``.

    Built from the standard basis by the rotation ``Q = A + I - P`` taking
    ``u = (1,..,1)/sqrt(d)`` onto ``v/|v|`` followed by the scaling ``T``.
    Rows are vertices.
    """
    d = v.size
    nv = _norm(v)
    vh = v / nv
    if d == 1:
        return (math.cos(alpha) ** 2 * v).reshape(1, 1)
    uh = np.full(d, 1 / math.sqrt(d))
    eye = _identity(d)
    if _norm(uh - vh) <= ROTATION_SKIP:
        rot = eye
    else:
        a_ = float(vh @ uh)
        w = vh - a_ * uh
        b_ = _norm(w)
        if b_ <= ROTATION_SKIP:
            # antipodal: a reflection through u^perp does the job
            rot = eye - 2 * uh[:, None] * uh[None, :]
        else:
            wh = w / b_
            A = vh[:, None] * uh[None, :] + (-b_ * uh + a_ * wh)[:, None] * wh[None, :]
            P = uh[:, None] * uh[None, :] + wh[:, None] * wh[None, :]
            rot = A + eye - P
    ca, sa = math.cos(alpha), math.sin(alpha)
    vv = vh[:, None] * vh[None, :]
    T = math.sqrt(d) * ca**2 * nv * vv + (1 - 1 / d) ** -0.5 * sa * ca * nv * (eye - vv)
    return (T @ rot).T


def wsepb_params(body: ConvexBodyParams, delta: float, beta: float) -> dict:
    d, R, r = body.d, body.R, body.r
    delta1 = r * delta / (R + r)
    r1 = r * delta1 / (4 * d * R)
    eps1 = beta**2 * r1 / (16 * d**4)
    alpha = math.atan(beta / (4 * d**2))
    # -log cos(alpha) written to survive alpha below 1e-8, where cos rounds to 1
    cap = math.log(delta1 / r1) / -math.log1p(-2 * math.sin(alpha / 2) ** 2)
    return {"delta1": delta1, "r1": r1, "eps1": eps1, "alpha": alpha, "cone_iteration_bound": cap}


def wsepb_via_mem1(
    body: ConvexBodyParams,
    mem1: Callable[[np.ndarray, float], bool],
    y,
    delta: float,
    beta: float,
    log: ReductionLog | None = None,
) -> SeparationAnswer:
    """Separation up to a cone of slope ``beta`` from one-sided membership.

    On CUT the normal ``c`` satisfies ``c.x <= c.y + delta + beta |x - y|``
    for every ``x`` in K.

    Raises
    ------
    ConvergenceError
        If the cone loop outlives its proven iteration bound, which means
        the membership oracle broke its contract.
    """
    log = log if log is not None else ReductionLog()
    delta = _below_one("delta", delta)
    beta = _below_one("beta", beta)
    y = np.asarray(y, dtype=float)
    prm = wsepb_params(body, delta, beta)
    for key, val in prm.items():
        log.note(f"wsepb_{key}", val)
    eps1, r1, delta1, alpha = prm["eps1"], prm["r1"], prm["delta1"], prm["alpha"]
    if mem1(y, eps1):
        return SeparationAnswer(SepTag.INSIDE)

    yes_pt, no_pt = body.p.copy(), y.copy()
    steps = 0
    while _norm(no_pt - yes_pt) > delta1 / (2 * body.d) and steps < BINARY_SEARCH_CAP:
        mid = 0.5 * (yes_pt + no_pt)
        if mem1(mid, eps1):
            yes_pt = mid
        else:
            no_pt = mid
        steps += 1
    log.binary_search_steps.append(steps)

    center = ((body.r - r1) * yes_pt + (r1 + eps1) * body.p) / (body.r + eps1)
    v = no_pt - center
    cap = int(math.ceil(prm["cone_iteration_bound"])) + 1
    start = 0
    for it in range(cap + 1):
        if not np.any(v):
            break
        verts = simplex_vertices(v, alpha)
        moved = False
        # any NO vertex may be taken; rotating the scan start avoids a steady drift
        for j in range(body.d):
            vert = verts[(start + j) % body.d]
            if not mem1(vert + center, eps1):
                v = vert
                moved = True
                start = (start + j + 1) % body.d
                break
        if not moved:
            log.cone_iterations.append(it)
            return SeparationAnswer(SepTag.CUT, v / _norm(v))
    raise ConvergenceError(f"cone refinement exceeded its bound of {cap} iterations")


def wsep_via_wmem(
    body: ConvexBodyParams, oracle: MembershipOracle, y, eps: float, log: ReductionLog | None = None
) -> SeparationAnswer:
    """Weak separation at precision ``eps`` from weak membership.

    Points outside ``S(0, R)`` are cut by ``y/|y|`` directly; otherwise the
    cone separation runs with ``beta = eps/4R`` and ``delta = eps/2``.
    """
    log = log if log is not None else ReductionLog()
    eps = _below_one("eps", eps)
    y = np.asarray(y, dtype=float)
    log.separation_queries += 1
    ny = np.linalg.norm(y)
    d, R, r = body.d, body.R, body.r
    log.note("wsep_required_delta", r**3 * eps**3 / (16384 * d**5 * R**5))
    if ny > R:
        c = y / ny
        log.cuts.append(CutRecord(y, c, eps, 0.0, "outer-ball"))
        return SeparationAnswer(SepTag.CUT, c)
    beta = eps / (4 * R)
    prm = wsepb_params(body, eps / 2, beta)
    log.note("wsep_beta", beta)
    log.note("wsep_membership_delta", r * prm["eps1"] / (4 * R))

    def mem1(pt, e):
        return mem1_via_mem(body, oracle, pt, e, log)

    ans = wsepb_via_mem1(body, mem1, y, eps / 2, beta, log)
    if not ans.inside:
        log.cuts.append(CutRecord(y, ans.cut_normal, eps / 2, beta, "cone"))
    return ans


def wopt_via_wsep(
    body: ConvexBodyParams,
    sep: Callable[[np.ndarray], SeparationAnswer],
    q: WOptQuery,
    log: ReductionLog | None = None,
) -> Verdict:
    """Perceptron over ``K'(c, gamma) = K  intersect  {c.x >= gamma}``.

    ``sep`` must be a separation oracle for K at precision ``eps/3``.  Each
    cut moves ``z`` by ``eps/3`` against the normal; after
    ``R^2 / (eps/3)^2`` cuts without an INSIDE answer the slab is declared empty.
    """
    log = log if log is not None else ReductionLog()
    delta = q.eps / 3
    step = q.eps - 2 * delta
    max_updates = int(math.floor(body.R**2 / step**2))
    log.note("perceptron_delta", delta)
    log.note("perceptron_update_bound", max_updates)
    z = np.zeros(body.d)
    for _ in range(max_updates + 1):
        if log.keep_trajectory:
            log.trajectory.append(z.copy())
        ans = sep(z)
        if ans.inside:
            if q.c @ z >= q.gamma:
                return Verdict.YES
            s = -q.c
        else:
            s = ans.cut_normal
        if log.perceptron_updates >= max_updates:
            break
        z = z - step * s
        log.perceptron_updates += 1
    return Verdict.NO


def wopt_via_wmem(
    body: ConvexBodyParams, oracle: MembershipOracle, q: WOptQuery, log: ReductionLog | None = None
) -> Verdict:
    """Weak optimization from weak membership by composing the perceptron with :func:`wsep_via_wmem`."""
    log = log if log is not None else ReductionLog()
    d, R, r = body.d, body.R, body.r
    log.note("wopt_eps", q.eps)
    log.note("wopt_required_delta", r**3 * q.eps**3 / (442368 * d**5 * R**5))
    sep_eps = q.eps / 3

    def sep(z):
        return wsep_via_wmem(body, oracle, z, sep_eps, log)

    return wopt_via_wsep(body, sep, q, log)


def wopt_star_via_wmem_star(
    body: ConvexBodyParams, oracle: MembershipOracle, q: WOptQuery, log: ReductionLog | None = None
) -> Verdict:
    """Starred weak optimization: YES if some ``x`` in K has ``c.x >= gamma + eps``.

    Shrinking K toward ``p`` by ``eps/4R`` turns the question into ordinary
    weak optimization at precision ``eps r / 4R``; any starred membership
    oracle is in particular a weak one.
    """
    log = log if log is not None else ReductionLog()
    shift = q.eps / (4 * body.R)
    log.note("wopt_star_shift", shift)
    inner = WOptQuery(q.c, q.gamma, q.eps * body.r / (4 * body.R))
    return wopt_via_wmem(body, oracle, inner, log)


def ball_oracle(center, radius: float) -> MembershipOracle:
    """Exact membership for a Euclidean ball (valid at every precision)."""
    center = np.asarray(center, dtype=float)

    def oracle(y, delta):
        return bool(np.linalg.norm(np.asarray(y) - center) <= radius)

    return oracle


def box_oracle(lower, upper) -> MembershipOracle:
    """Exact membership for an axis-aligned box."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)

    def oracle(y, delta):
        y = np.asarray(y)
        return bool((y >= lower).all() and (y <= upper).all())

    return oracle
