import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmarginal.errors import BudgetExhausted, ClampWarning, ConvergenceError, PreconditionError
from qmarginal.oracle_geometry import (
    ConvexBodyParams,
    ReductionLog,
    SepTag,
    SeparationAnswer,
    WOptQuery,
    ball_oracle,
    box_oracle,
    mem1_via_mem,
    simplex_vertices,
    wopt_star_via_wmem_star,
    wopt_via_wmem,
    wopt_via_wsep,
    wsep_via_wmem,
    wsepb_params,
    wsepb_via_mem1,
)
from qmarginal.verdict import Verdict

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def unit_ball(d):
    return ConvexBodyParams(d, R=1.0, r=1.0), ball_oracle(np.zeros(d), 1.0)


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


# ------------------------------------------------------------ data types


def test_body_params_validation():
    with pytest.raises(PreconditionError):
        ConvexBodyParams(2, R=1.0, r=2.0)
    with pytest.raises(PreconditionError):
        ConvexBodyParams(0, R=1.0, r=1.0)
    with pytest.raises(PreconditionError):
        ConvexBodyParams(2, R=1.0, r=0.5, p=np.zeros(3))
    assert np.array_equal(ConvexBodyParams(3, 1.0, 0.5).p, np.zeros(3))


def test_wopt_query_needs_unit_direction():
    with pytest.raises(PreconditionError):
        WOptQuery(np.array([1.0, 1.0]), 0.0, 0.1)
    with pytest.raises(PreconditionError):
        WOptQuery(np.array([1.0, 0.0]), 0.0, 0.0)
    q = WOptQuery.along([3.0, 4.0], 0.2, 0.1)
    assert np.allclose(q.c, [0.6, 0.8])


# ------------------------------------------------------------------- mem1


def test_mem1_deep_interior():
    body, oracle = unit_ball(3)
    assert mem1_via_mem(body, oracle, np.zeros(3), 0.1) is True


def test_mem1_far_point_answers_without_query():
    body, oracle = unit_ball(3)
    log = ReductionLog()
    assert mem1_via_mem(body, oracle, np.array([3.0, 0, 0]), 0.1, log) is False
    assert log.membership_queries == 0


def test_mem1_inner_precision_recorded():
    body = ConvexBodyParams(2, R=2.0, r=0.5)
    log = ReductionLog()
    mem1_via_mem(body, ball_oracle(np.zeros(2), 1.0), np.array([0.2, 0.1]), 0.1, log)
    assert log.params["mem1_inner_delta"] == pytest.approx(0.5 * 0.1 / (4 * 2.0))


@given(seed=seeds)
def test_mem1_one_sided(seed):
    g = np.random.default_rng(seed)
    body, oracle = unit_ball(2)
    y = g.uniform(-1.5, 1.5, size=2)
    r = np.linalg.norm(y)
    ans = mem1_via_mem(body, oracle, y, 0.1)
    if r <= 1:
        assert ans
    if r > 1.1:
        assert not ans


# ------------------------------------------------------------------ simplex


@pytest.mark.parametrize("d", [2, 3, 5, 8])
def test_simplex_vertices_geometry(d, rng):
    v = rng.normal(size=d)
    alpha = 0.3
    verts = simplex_vertices(v, alpha)
    vh = _unit(v)
    # every vertex lies in the hyperplane v.x = cos^2(alpha) |v|^2 at angle alpha from v
    assert np.allclose(verts @ vh, math.cos(alpha) ** 2 * np.linalg.norm(v))
    angles = np.arccos(np.clip(verts @ vh / np.linalg.norm(verts, axis=1), -1, 1))
    assert np.allclose(angles, alpha, atol=1e-10)
    # regular: all pairwise distances equal
    dists = [np.linalg.norm(verts[i] - verts[j]) for i in range(d) for j in range(i + 1, d)]
    assert np.ptp(dists) < 1e-10
    # centroid on the axis
    assert np.allclose(verts.mean(axis=0), math.cos(alpha) ** 2 * v)


@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_simplex_vertices_rotation_edge_cases(sign):
    d = 4
    v = sign * np.ones(d)
    verts = simplex_vertices(v, 0.2)
    assert np.allclose(verts.mean(axis=0), math.cos(0.2) ** 2 * v)


def test_simplex_vertices_one_dimension():
    out = simplex_vertices(np.array([2.0]), 0.1)
    assert out.shape == (1, 1)
    assert out[0, 0] == pytest.approx(math.cos(0.1) ** 2 * 2.0)


# --------------------------------------------------------------- wsepb/wsep


def test_wsepb_parameters():
    body = ConvexBodyParams(2, R=2.0, r=0.5)
    prm = wsepb_params(body, 0.2, 0.1)
    d1 = 0.5 * 0.2 / 2.5
    r1 = 0.5 * d1 / (4 * 2 * 2.0)
    assert prm["delta1"] == pytest.approx(d1)
    assert prm["r1"] == pytest.approx(r1)
    assert prm["eps1"] == pytest.approx(0.01 * r1 / (16 * 16))
    assert prm["alpha"] == pytest.approx(math.atan(0.1 / 16))
    assert prm["cone_iteration_bound"] == pytest.approx(math.log(d1 / r1) / -math.log(math.cos(prm["alpha"])), rel=1e-9)


@pytest.mark.parametrize("beta", [1e-6, 1e-9, 1e-12])
def test_wsepb_iteration_bound_finite_for_tiny_slopes(beta):
    # cos(alpha) rounds to 1 here; small-angle form is 2 log(delta1/r1) / alpha^2
    body = ConvexBodyParams(28, R=55.0, r=0.01)
    prm = wsepb_params(body, 3e-7, beta)
    assert math.isfinite(prm["cone_iteration_bound"])
    assert prm["cone_iteration_bound"] == pytest.approx(2 * math.log(prm["delta1"] / prm["r1"]) / prm["alpha"] ** 2, rel=1e-6)


def test_wsepb_deep_point_inside():
    body, oracle = unit_ball(2)
    ans = wsepb_via_mem1(body, lambda y, e: mem1_via_mem(body, oracle, y, e), np.zeros(2), 0.05, 0.1)
    assert ans.tag is SepTag.INSIDE


def test_wsepb_ball_radial_cut_and_iteration_bound():
    body, oracle = unit_ball(2)
    log = ReductionLog()
    ans = wsepb_via_mem1(body, lambda y, e: mem1_via_mem(body, oracle, y, e, log), np.array([2.0, 0.0]), 0.05, 0.1, log)
    assert ans.tag is SepTag.CUT
    assert abs(np.linalg.norm(ans.cut_normal) - 1) < 1e-12
    assert ans.cut_normal @ np.array([1.0, 0.0]) >= 0.9
    prm = wsepb_params(body, 0.05, 0.1)
    looser = math.log(prm["delta1"] / prm["r1"]) / (0.5 * 0.1**2 / (17 * 2**4))
    assert log.cone_iterations[-1] < looser
    assert log.cone_iterations[-1] <= prm["cone_iteration_bound"]
    assert log.binary_search_steps[-1] <= 64


def test_wsepb_broken_oracle_raises():
    body = ConvexBodyParams(1, R=1.0, r=0.5)
    flip = iter(range(10**9))

    def liar(y, e):
        # YES for the centre, then NO forever: no cone vertex is ever accepted
        return next(flip) == 0 and np.linalg.norm(y) < 1e-12

    with pytest.raises(ConvergenceError):
        wsepb_via_mem1(body, liar, np.array([0.9]), 0.9, 0.9)


def test_wsep_clamps_with_warning():
    body, oracle = unit_ball(1)
    with pytest.warns(ClampWarning):
        wsep_via_wmem(body, oracle, np.zeros(1), 1.5)


def test_wsep_outside_outer_ball_is_radial():
    body, oracle = unit_ball(3)
    y = np.array([0.0, 2.0, 0.0])
    log = ReductionLog()
    ans = wsep_via_wmem(body, oracle, y, 0.1, log)
    assert ans.tag is SepTag.CUT
    assert np.allclose(ans.cut_normal, y / 2)
    assert log.membership_queries == 0
    assert log.cuts[-1].kind == "outer-ball"


def test_wsep_interior_and_precision_constant():
    body = ConvexBodyParams(2, R=1.5, r=1.0)
    log = ReductionLog()
    ans = wsep_via_wmem(body, ball_oracle(np.zeros(2), 1.0), np.array([0.1, 0.2]), 0.2, log)
    assert ans.inside
    assert log.params["wsep_required_delta"] == pytest.approx(1.0 * 0.2**3 / (16384 * 2**5 * 1.5**5))
    assert log.params["wsep_beta"] == pytest.approx(0.2 / 6)


def test_wsep_cone_cut_valid_off_centre_ball(rng):
    centre = np.array([0.5, 0.0])
    body = ConvexBodyParams(2, R=1.5, r=1.0, p=centre)
    oracle = ball_oracle(centre, 1.0)
    log = ReductionLog()
    y = np.array([-0.7, 0.3])
    eps = 0.9
    ans = wsep_via_wmem(body, oracle, y, eps, log)
    assert ans.tag is SepTag.CUT
    cut = log.cuts[-1]
    assert cut.kind == "cone"
    x = rng.normal(size=(10_000, 2))
    x = centre + x * (rng.uniform(size=(10_000, 1)) ** 0.5) / np.linalg.norm(x, axis=1, keepdims=True)
    assert np.all(x @ ans.cut_normal <= ans.cut_normal @ y + eps)
    assert np.all(x @ cut.normal <= cut.normal @ y + cut.slack + cut.beta * np.linalg.norm(x - y, axis=1) + 1e-12)


# ------------------------------------------------------------- perceptron


def test_wopt_unit_ball_yes_and_no():
    body, oracle = unit_ball(2)
    assert wopt_via_wmem(body, oracle, WOptQuery(np.array([1.0, 0.0]), 0.5, 0.1)) is Verdict.YES
    log = ReductionLog()
    assert wopt_via_wmem(body, oracle, WOptQuery(np.array([1.0, 0.0]), 1.5, 0.1), log) is Verdict.NO
    assert log.params["perceptron_update_bound"] == math.floor(9 * 1.0 / 0.1**2)
    assert log.perceptron_updates <= 900
    assert log.params["wopt_required_delta"] == pytest.approx(0.1**3 / (442368 * 2**5))


def test_wopt_via_wsep_with_exact_separation():
    # analytic separation for the unit disc
    def sep(z):
        nz = np.linalg.norm(z)
        if nz <= 1:
            return SeparationAnswer(SepTag.INSIDE)
        return SeparationAnswer(SepTag.CUT, z / nz)

    body = ConvexBodyParams(2, 1.0, 1.0)
    assert wopt_via_wsep(body, sep, WOptQuery(_unit([1, 1]), 0.6, 0.1)) is Verdict.YES
    assert wopt_via_wsep(body, sep, WOptQuery(_unit([1, 1]), 1.3, 0.1)) is Verdict.NO


def test_wopt_sphere_matches_support_function(rng):
    rad = 1.3
    body = ConvexBodyParams(3, R=rad, r=rad)
    oracle = ball_oracle(np.zeros(3), rad)
    eps = 0.2
    checked = 0
    while checked < 20:
        c = _unit(rng.normal(size=3))
        gamma = rng.uniform(-0.5, 2.0)
        if gamma <= rad - 2 * eps:
            expected = Verdict.YES
        elif gamma >= rad + 2 * eps:
            expected = Verdict.NO
        else:
            continue
        assert wopt_via_wmem(body, oracle, WOptQuery(c, gamma, eps)) is expected
        checked += 1


@pytest.mark.parametrize("seed", range(4))
def test_wopt_box_matches_vertex_enumeration(seed):
    # off-centre intervals exercise the cone step; larger boxes are covered by the acceptance run
    g = np.random.default_rng(seed)
    d = 1
    half = g.uniform(1.0, 1.4, size=d)
    ctr = g.uniform(-0.2, 0.2, size=d)
    body = ConvexBodyParams(d, R=float(np.linalg.norm(np.abs(ctr) + half)), r=float(half.min()), p=ctr)
    oracle = box_oracle(ctr - half, ctr + half)
    eps = 0.9
    c = _unit(g.normal(size=d))
    corners = ctr + half * np.array(np.meshgrid(*[[-1, 1]] * d)).reshape(d, -1).T
    support = float(np.max(corners @ c))
    deep_support = support - eps * float(np.sum(np.abs(c)))
    yes_gamma = deep_support - eps - 0.05
    no_gamma = support + eps + 0.05
    assert wopt_via_wmem(body, oracle, WOptQuery(c, yes_gamma, eps)) is Verdict.YES
    assert wopt_via_wmem(body, oracle, WOptQuery(c, no_gamma, eps)) is Verdict.NO


def test_wopt_star_shift_and_ball_agreement():
    body, oracle = unit_ball(2)
    log = ReductionLog()
    q = WOptQuery(np.array([0.0, 1.0]), 0.2, 0.2)
    assert wopt_star_via_wmem_star(body, oracle, q, log) is Verdict.YES
    assert log.params["wopt_star_shift"] == pytest.approx(0.2 / 4)
    assert wopt_via_wmem(body, oracle, q) is Verdict.YES


@pytest.mark.parametrize("seed", range(20))
def test_wopt_star_agrees_on_interval(seed):
    g = np.random.default_rng(100 + seed)
    h = g.uniform(0.5, 1.5)
    body = ConvexBodyParams(1, R=h, r=h)
    oracle = box_oracle([-h], [h])
    c = np.array([g.choice([-1.0, 1.0])])
    eps = 0.3
    gamma = g.choice([h - 3 * eps, h + 3 * eps]) + g.uniform(-0.05, 0.05)
    plain = wopt_via_wmem(body, oracle, WOptQuery(c, gamma, eps))
    star = wopt_star_via_wmem_star(body, oracle, WOptQuery(c, gamma, eps))
    assert plain is star


def test_budget_exhaustion_raises():
    body = ConvexBodyParams(2, R=1.5, r=1.0, p=np.array([0.5, 0.0]))
    log = ReductionLog(max_queries=5)
    with pytest.raises(BudgetExhausted):
        wopt_via_wmem(body, ball_oracle(np.array([0.5, 0.0]), 1.0), WOptQuery(np.array([1.0, 0.0]), 1.3, 0.5), log)


# -------------------------------------------------------------- properties


@given(seed=seeds)
@settings(max_examples=15)
def test_perceptron_progress_on_ball(seed):
    g = np.random.default_rng(seed)
    d = int(g.integers(1, 4))
    rad = g.uniform(0.8, 1.5)
    eps = 0.2
    body = ConvexBodyParams(d, R=rad, r=rad)
    c = _unit(g.normal(size=d))
    gamma = g.uniform(-rad, rad - 2 * eps)
    y_star = (gamma + eps) * c  # deep point of the slab
    log = ReductionLog(keep_trajectory=True)
    assert wopt_via_wmem(body, ball_oracle(np.zeros(d), rad), WOptQuery(c, gamma, eps), log) is Verdict.YES
    step = eps / 3
    dist = [float(np.sum((z - y_star) ** 2)) for z in log.trajectory]
    assert all(b <= a - step**2 + 1e-12 for a, b in zip(dist, dist[1:]))


@given(seed=seeds)
@settings(max_examples=10)
def test_shell_answers_do_not_change_promise_verdicts(seed):
    g = np.random.default_rng(seed)
    rad = g.uniform(0.8, 1.2)
    eps = 0.3
    body = ConvexBodyParams(1, R=rad, r=rad)

    def shell_flipping(y, delta):
        r = abs(float(y[0]))
        if r <= rad - delta:
            return True
        if r > rad + delta:
            return False
        # arbitrary but deterministic answer inside the shell
        return bool(int(r * 1e9) % 2)

    c = np.array([g.choice([-1.0, 1.0])])
    gamma = float(g.choice([rad - 3 * eps, rad + 3 * eps]))
    exact = wopt_via_wmem(body, ball_oracle(np.zeros(1), rad), WOptQuery(c, gamma, eps))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        flipped = wopt_via_wmem(body, shell_flipping, WOptQuery(c, gamma, eps))
    assert exact is flipped
    assert exact is (Verdict.YES if gamma < rad else Verdict.NO)


@given(seed=seeds)
@settings(max_examples=10)
def test_outer_cut_validity(seed):
    g = np.random.default_rng(seed)
    d = int(g.integers(1, 4))
    body, oracle = unit_ball(d)
    y = _unit(g.normal(size=d)) * g.uniform(1.05, 3.0)
    eps = 0.1
    ans = wsep_via_wmem(body, oracle, y, eps)
    x = g.normal(size=(10_000, d))
    x *= g.uniform(size=(10_000, 1)) ** (1 / d) / np.linalg.norm(x, axis=1, keepdims=True)
    assert np.all(x @ ans.cut_normal <= ans.cut_normal @ y + eps)
