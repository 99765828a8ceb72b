import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qmarginal.errors import HermiticityError, RangeError
from qmarginal.qmatrix import (
    HermitianOp,
    as_hermitian,
    eig_hermitian,
    eigvalsh,
    expm_hermitian,
    expm_shifted,
    min_eigenvalue,
    operator_norm,
    psd_projection,
    random_hermitian,
    trace_norm,
)
from qmarginal.qstate import embed_operator, random_density_matrix

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)

seeds = st.integers(min_value=0, max_value=2**32 - 1)
dims = st.integers(min_value=1, max_value=8)


@pytest.mark.parametrize(
    "matrix, expected",
    [
        (SX, [-1.0, 1.0]),
        (np.diag([2.0, -1.0]), [-1.0, 2.0]),
    ],
)
def test_eig_hermitian_small_spectra(matrix, expected):
    assert np.allclose(eig_hermitian(matrix).eigenvalues, expected, atol=1e-14)


def test_eig_hermitian_residual_random(rng):
    a = random_hermitian(8, rng)
    w, v = eig_hermitian(a)
    for lam, vec in zip(w, v.T):
        assert np.linalg.norm(a @ vec - lam * vec) < 1e-9
    assert np.allclose(v.conj().T @ v, np.eye(8), atol=1e-12)
    assert np.all(np.diff(w) >= 0)


def test_eig_hermitian_rejects_non_hermitian():
    with pytest.raises(HermiticityError):
        eig_hermitian(np.array([[0, 1], [0, 0]]))


def test_as_hermitian_symmetrizes_roundoff():
    a = random_hermitian(4, 1)
    b = a + 1e-14 * np.triu(np.ones((4, 4)), 1)
    h = as_hermitian(b)
    assert np.allclose(h, h.conj().T, atol=0)


def test_hermitian_op_arithmetic():
    a = HermitianOp(SZ)
    assert a.dim == 2
    assert np.allclose(np.asarray(a + a), 2 * SZ)
    assert np.allclose(np.asarray(a - a), 0)
    assert np.allclose(np.asarray(3 * a), 3 * SZ)


def test_expm_zero_is_identity():
    assert np.allclose(np.asarray(expm_hermitian(np.zeros((3, 3)))), np.eye(3))


@pytest.mark.parametrize("theta", [-2.0, -0.3, 0.0, 0.7, 5.0])
def test_expm_diagonal(theta):
    out = np.asarray(expm_hermitian(theta * SZ))
    assert np.allclose(out, np.diag([np.exp(theta), np.exp(-theta)]), rtol=1e-13)


def test_expm_inverse_identity(rng):
    a = random_hermitian(6, rng)
    prod = np.asarray(expm_hermitian(a)) @ np.asarray(expm_hermitian(-a))
    assert np.linalg.norm(prod - np.eye(6)) < 1e-8


def test_expm_overflow_raises():
    with pytest.raises(RangeError, match="700"):
        expm_hermitian(np.diag([701.0, 0.0]))


def test_expm_shifted_matches_plain(rng):
    a = random_hermitian(5, rng)
    scaled, shift = expm_shifted(a)
    assert np.allclose(np.exp(shift) * scaled, np.asarray(expm_hermitian(a)), rtol=1e-12)
    big, shift = expm_shifted(np.diag([900.0, 899.0]))
    assert shift == 900.0
    assert np.allclose(big, np.diag([1.0, np.exp(-1.0)]))


def test_trace_norm_examples(rng):
    rho = random_density_matrix(4, rng)
    assert trace_norm(rho) == pytest.approx(1.0, abs=1e-12)
    assert trace_norm(SZ) == pytest.approx(2.0)
    assert trace_norm(rho - rho) == 0.0


def test_min_eigenvalue_examples():
    lam, v = min_eigenvalue(SZ)
    assert lam == -1.0
    assert abs(abs(v[1]) - 1) < 1e-14 and abs(v[0]) < 1e-14
    lam, v = min_eigenvalue(np.eye(3))
    assert lam == 1.0
    assert np.linalg.norm(v) == pytest.approx(1.0)


def test_min_eigenvalue_of_local_hamiltonian(rng):
    h = sum(embed_operator(random_hermitian(4, rng), sub, 3) for sub in [(1, 2), (2, 3), (1, 3)])
    lam, v = min_eigenvalue(h)
    # full-spectrum oracle through scipy rather than numpy
    from scipy.linalg import eigh

    assert abs(lam - eigh(h, eigvals_only=True)[0]) < 1e-10
    assert np.linalg.norm(h @ v - lam * v) < 1e-9


def test_psd_projection_is_nearest(rng):
    a = random_hermitian(5, rng)
    p = psd_projection(a)
    assert eigvalsh(p)[0] >= -1e-12
    w = eigvalsh(a)
    assert np.linalg.norm(a - p) == pytest.approx(np.linalg.norm(np.clip(w, None, 0)), rel=1e-10)


def test_operator_norm_matches_spectral_norm(rng):
    a = random_hermitian(6, rng)
    assert operator_norm(a) == pytest.approx(np.linalg.norm(a, 2), rel=1e-12)


@given(seed=seeds, dim=dims)
def test_trace_equals_eigenvalue_sum(seed, dim):
    a = random_hermitian(dim, seed)
    w = eigvalsh(a)
    assert np.all(np.isreal(w))
    assert abs(np.trace(a).real - w.sum()) < 1e-9


@given(seed=seeds, dim=dims)
def test_expm_commutes(seed, dim):
    a = random_hermitian(dim, seed, scale=0.5)
    e = np.asarray(expm_hermitian(a))
    assert np.linalg.norm(e @ a - a @ e) < 1e-8
    assert eigvalsh(e)[0] > 0


@given(seed=seeds, dim=dims)
def test_trace_norm_triangle(seed, dim):
    g = np.random.default_rng(seed)
    a, b, c = (random_hermitian(dim, g) for _ in range(3))
    assert trace_norm(a - c) <= trace_norm(a - b) + trace_norm(b - c) + 1e-9
    assert trace_norm(a) >= 0
