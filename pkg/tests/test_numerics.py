import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unravel.channels import X, Z
from unravel.numerics import LinAlgError, herm_eig, matmul, qr_unitary, svd

seeds = st.integers(0, 2**32 - 1)


def ginibre(rng, m, n=None):
    n = m if n is None else n
    return (rng.normal(size=(m, n)) + 1j * rng.normal(size=(m, n))) / np.sqrt(2)


def naive_matmul(a, b):
    out = [[0j] * len(b[0]) for _ in range(len(a))]
    for i in range(len(a)):
        for j in range(len(b[0])):
            out[i][j] = sum(a[i][k] * b[k][j] for k in range(len(b)))
    return np.array(out)


def test_matmul_trivial():
    assert np.allclose(matmul(np.eye(2), np.eye(2)), np.eye(2))
    assert np.allclose(matmul(Z, Z), np.eye(2))


def test_matmul_against_triple_loop():
    rng = np.random.default_rng(1)
    a, b = ginibre(rng, 4), ginibre(rng, 4)
    assert np.allclose(matmul(a, b), naive_matmul(a.tolist(), b.tolist()), atol=1e-13)


def test_matmul_dimension_mismatch():
    with pytest.raises(LinAlgError):
        matmul(np.eye(2), np.eye(3))


def test_herm_eig_examples():
    assert np.allclose(herm_eig(np.diag([1.0, 3.0])).eigenvalues, [1, 3])
    assert np.allclose(herm_eig(X).eigenvalues, [-1, 1])


def test_herm_eig_rejects_nonhermitian():
    with pytest.raises(LinAlgError):
        herm_eig(np.array([[0, 1], [0, 0]], dtype=complex))


@given(seeds)
@settings(max_examples=30, deadline=None)
def test_herm_eig_reconstruction(seed):
    rng = np.random.default_rng(seed)
    g = ginibre(rng, 8)
    h = (g + g.conj().T) / 2
    w, v = herm_eig(h)
    rec = v @ np.diag(w) @ v.conj().T
    assert np.linalg.norm(rec - h) / np.linalg.norm(h) < 1e-10
    assert np.all(np.diff(w) >= 0)
    assert abs(w.sum() - np.trace(h).real) < 1e-10 * max(1, np.abs(h).max())


def test_svd_examples():
    assert np.allclose(svd(np.diag([3.0, 0.0])).singular_values, [3, 0])
    q = qr_unitary(ginibre(np.random.default_rng(2), 5))
    assert np.allclose(svd(q).singular_values, 1, atol=1e-12)


@given(seeds)
@settings(max_examples=30, deadline=None)
def test_svd_norm_identity(seed):
    a = ginibre(np.random.default_rng(seed), 6, 4)
    u, s, vh = svd(a)
    assert abs(np.sum(s**2) - np.linalg.norm(a) ** 2) < 1e-10 * np.linalg.norm(a) ** 2
    assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
    assert np.allclose(u.conj().T @ u, np.eye(u.shape[1]), atol=1e-10)
    assert np.allclose(vh @ vh.conj().T, np.eye(vh.shape[0]), atol=1e-10)
    assert np.linalg.norm(u @ np.diag(s) @ vh - a) / np.linalg.norm(a) < 1e-10


@given(seeds)
@settings(max_examples=30, deadline=None)
def test_svd_of_psd_matches_eigenvalues(seed):
    g = ginibre(np.random.default_rng(seed), 5)
    h = g @ g.conj().T
    assert np.allclose(svd(h).singular_values, herm_eig(h).eigenvalues[::-1], atol=1e-10)


def test_qr_unitary_examples():
    assert np.allclose(qr_unitary(np.eye(3)), np.eye(3))
    assert np.allclose(qr_unitary(np.diag([2j, 3])), np.diag([1j, 1]))


@given(seeds)
@settings(max_examples=30, deadline=None)
def test_qr_unitary_is_unitary(seed):
    q = qr_unitary(ginibre(np.random.default_rng(seed), 4))
    assert np.abs(q.conj().T @ q - np.eye(4)).max() < 1e-12
    assert np.all(np.isfinite(q))


def test_qr_unitary_rank_deficient():
    with pytest.raises(LinAlgError):
        qr_unitary(np.array([[1, 1], [1, 1]], dtype=complex))
