import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from qmarginal.consistency import ConsistencyInstance
from qmarginal.errors import CapacityError, DimensionError, PreconditionError
from qmarginal.qstate import SubsetMarginal, bell_state, partial_trace, pauli_matrix, random_density_matrix, random_pure_state
from qmarginal.verifier_sim import (
    ProductWitness,
    VerifierParams,
    WitnessState,
    _outcome_distribution,
    bell_pairs_across_registers,
    expected_Y,
    ghz_across_registers,
    markov_soundness_experiment,
    run_consistency_verifier,
    swap_operator,
    swap_test,
    verifier_choices,
    wilson_halfwidth,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def bell_triple():
    bell = bell_state()
    return ConsistencyInstance(3, (SubsetMarginal((1, 2), bell), SubsetMarginal((2, 3), bell)), beta=0.1)


# ------------------------------------------------------------- parameters


def test_verifier_params_formulas():
    p = VerifierParams(beta=0.1, k=2, m=3)
    assert p.eps == pytest.approx(0.1 / 32)
    assert p.r == math.ceil(16 / p.eps**2 * math.log(8 * 16 * 3 / p.eps))
    assert p.yes_rejection_bound == pytest.approx(p.eps / (4 * 16 * 3))
    assert p.no_rejection_bound == pytest.approx(2 * p.yes_rejection_bound)
    # the Chernoff tail at this r is within the YES bound
    assert 2 * math.exp(-p.eps**2 * p.r / 16) <= p.yes_rejection_bound * (1 + 1e-12)


def test_params_for_instance():
    p = VerifierParams.for_instance(bell_triple())
    assert (p.beta, p.k, p.m) == (0.1, 2, 2)


def test_verifier_choices_include_every_local_pauli():
    choices = verifier_choices(bell_triple())
    assert len(choices) == 2 * 16
    targets = {(i, w): t for i, w, _, t in choices}
    assert targets[(0, "II")] == pytest.approx(1.0)
    assert targets[(0, "XX")] == pytest.approx(1.0)
    assert targets[(1, "YY")] == pytest.approx(-1.0)


def test_wilson_halfwidth_shrinks():
    assert wilson_halfwidth(500, 1000) > wilson_halfwidth(5000, 10000)
    assert wilson_halfwidth(500, 1000) == pytest.approx(math.sqrt(0.25 / 1000), rel=0.05)
    assert wilson_halfwidth(0, 1000) > 0


# ---------------------------------------------------------------- witnesses


def test_witness_state_checks():
    with pytest.raises(DimensionError):
        WitnessState(np.ones(8), 2, 2)
    with pytest.raises(CapacityError):
        WitnessState(np.eye(2**13) / 2**13, 13, 1)
    w = WitnessState(np.ones(4), 2, 1)
    assert w.is_pure
    assert np.linalg.norm(w.state) == pytest.approx(1.0)


def test_register_states_of_cross_register_witnesses():
    ghz = ghz_across_registers(3, 1)
    for j in (1, 2, 3):
        assert np.allclose(ghz.register_state(j), np.diag([0.5, 0.5]))
    pairs = bell_pairs_across_registers(2)
    for j in (1, 2):
        assert np.allclose(pairs.register_state(j), np.eye(4) / 4)
    # qubit q of register 1 is a Bell pair with qubit q of register 2
    full = np.outer(pairs.state, pairs.state.conj())
    assert np.allclose(partial_trace(full, [1, 3]), bell_state())
    assert np.allclose(partial_trace(full, [2, 4]), bell_state())


@pytest.mark.parametrize("word", ["Z", "X", "Y", "I"])
def test_outcome_distribution_of_product_is_binomial(word, rng):
    sigma = random_density_matrix(2, rng)
    r = 3
    w = WitnessState(np.kron(np.kron(sigma, sigma), sigma), r, 1)
    Q = pauli_matrix(word)
    p_minus = 0.5 * (1 - np.trace(Q @ sigma).real)
    assert np.allclose(_outcome_distribution(w, Q), binom.pmf(np.arange(r + 1), r, p_minus), atol=1e-12)


def test_outcome_distribution_marginalizes_to_register_born_rule(rng):
    n, r = 1, 3
    w = WitnessState(random_pure_state(2 ** (n * r), rng), r, n)
    Q = pauli_matrix("X")
    dist = _outcome_distribution(w, Q)
    mean_Y = float(np.dot(dist, (r - 2 * np.arange(r + 1)) / r))
    born = np.mean([np.trace(Q @ w.register_state(j)).real for j in range(1, r + 1)])
    assert mean_Y == pytest.approx(born, abs=1e-12)
    assert mean_Y == pytest.approx(expected_Y(w, Q, (1,)), abs=1e-12)
    dense = WitnessState(np.outer(w.state, w.state.conj()), r, n)
    assert np.allclose(_outcome_distribution(dense, Q), dist, atol=1e-12)


# ---------------------------------------------------------------- verifier


def test_trial_floor():
    inst = ConsistencyInstance(1, (SubsetMarginal((1,), np.eye(2) / 2),), k=1)
    with pytest.raises(PreconditionError):
        run_consistency_verifier(inst, ProductWitness(np.eye(2) / 2, 10), 999)


def test_maximally_mixed_instance_accepts():
    inst = ConsistencyInstance(1, (SubsetMarginal((1,), np.eye(2) / 2),), k=1)
    params = VerifierParams.for_instance(inst)
    run = run_consistency_verifier(inst, ProductWitness(np.eye(2) / 2, params.r), 5000, 0, params)
    assert run.acceptance >= 0.999
    assert run.r == params.r


def test_yes_instance_product_witness_within_bound(rng):
    sigma = random_density_matrix(4, rng)
    inst = ConsistencyInstance(2, (SubsetMarginal((1,), partial_trace(sigma, [1])),), beta=0.1, k=1)
    params = VerifierParams.for_instance(inst)
    run = run_consistency_verifier(inst, ProductWitness(sigma, params.r), 20_000, rng, params)
    assert run.rejection <= params.yes_rejection_bound + 3 * run.wilson_halfwidth()
    with pytest.raises(DimensionError):
        run_consistency_verifier(inst, ProductWitness(partial_trace(sigma, [1]), params.r), 1000, rng, params)


@given(seed=seeds, r=st.sampled_from([4000, 8000, 16000]))
@settings(max_examples=8)
def test_chernoff_envelope_for_product_witnesses(seed, r):
    g = np.random.default_rng(seed)
    sigma = random_density_matrix(2, g)
    inst = ConsistencyInstance(1, (SubsetMarginal((1,), sigma),), beta=0.8, k=1)
    params = VerifierParams.for_instance(inst)
    run = run_consistency_verifier(inst, ProductWitness(sigma, r), 4000, g, params)
    tail = 2 * math.exp(-params.eps**2 * r / 16)
    assert run.rejection <= tail + 3 * run.wilson_halfwidth()


def test_mismatched_witness_is_rejected(rng):
    inst = ConsistencyInstance(1, (SubsetMarginal((1,), np.diag([1.0, 0.0])),), beta=0.1, k=1)
    params = VerifierParams.for_instance(inst)
    # the maximally mixed witness misses the Z target by 1
    run = run_consistency_verifier(inst, ProductWitness(np.eye(2) / 2, params.r), 4000, rng, params)
    assert run.rejection >= params.no_rejection_bound - 3 * run.wilson_halfwidth()
    assert run.rejection > 0.1


def test_markov_soundness_on_bell_triple(rng):
    inst = bell_triple()
    witnesses = {"ghz": ghz_across_registers(2, 3), "pairs": bell_pairs_across_registers(3)}
    rows = markov_soundness_experiment(inst, witnesses, 2000, rng)
    assert [row.name for row in rows] == ["ghz", "pairs"]
    for row in rows:
        assert row.passed
        assert row.rejection > row.bound
        assert row.mean_Y_error <= 1e-12


# ---------------------------------------------------------------- swap test


def test_swap_operator_swaps(rng):
    a = random_pure_state(3, rng)
    b = random_pure_state(3, rng)
    S = swap_operator(3)
    assert np.allclose(S @ np.kron(a, b), np.kron(b, a))
    assert np.allclose(S @ S, np.eye(9))


def test_swap_test_identical_and_orthogonal():
    up = np.diag([1.0, 0.0])
    down = np.diag([0.0, 1.0])
    same = swap_test(up, up, 2000, 1)
    assert same.probability == pytest.approx(1.0) and same.frequency == 1.0
    ortho = swap_test(up, down, 20_000, 2)
    assert ortho.probability == pytest.approx(0.5)
    assert abs(ortho.frequency - 0.5) <= 3 * ortho.wilson_halfwidth()


def test_swap_test_dimension_mismatch():
    with pytest.raises(DimensionError):
        swap_test(np.eye(2) / 2, np.eye(4) / 4, 1000)


@given(seed=seeds)
@settings(max_examples=20)
def test_swap_test_probability_and_symmetry(seed):
    g = np.random.default_rng(seed)
    nu = random_density_matrix(4, g)
    eta = random_density_matrix(4, g)
    a = swap_test(nu, eta, 1000, g)
    b = swap_test(eta, nu, 1000, g)
    assert a.probability == pytest.approx(0.5 + 0.5 * np.trace(nu @ eta).real, abs=1e-12)
    assert a.probability == pytest.approx(b.probability, abs=1e-12)
    # a mixed nu caps the pass probability for every eta
    eps = 1 - np.trace(nu @ nu).real
    assert a.probability <= 1 - eps / 4 + 1e-12
