import numpy as np
import pytest
import scipy.linalg

from fedunlearn.models import qr_rank_one
from fedunlearn.models.qr import givens, orthogonality_drift


def random_qr(rng, n):
    A = rng.normal(size=(n, n)) + n * np.eye(n)
    Q, R = np.linalg.qr(A)
    return A, Q, R


def test_givens_zeroes_second_component():
    c, s = givens(3.0, 4.0)
    assert np.allclose(np.array([[c, s], [-s, c]]) @ [3.0, 4.0], [5.0, 0.0])
    assert givens(-2.0, 0.0) == (1.0, 0.0)


def test_zero_update_leaves_factors():
    rng = np.random.default_rng(0)
    _, Q, R = random_qr(rng, 5)
    Q1, R1, _ = qr_rank_one(Q, R, np.zeros(5), rng.normal(size=5))
    assert np.array_equal(Q1, Q) and np.array_equal(R1, R)


def test_identity_plus_e1():
    e1 = np.array([1.0, 0.0])
    Q1, R1, _ = qr_rank_one(np.eye(2), np.eye(2), e1, e1)
    assert np.allclose(Q1 @ R1, np.diag([2.0, 1.0]), atol=1e-15)
    # refactorization-from-scratch oracle: |R| is unique for a nonsingular matrix
    _, Rref = np.linalg.qr(np.diag([2.0, 1.0]))
    assert np.allclose(np.abs(R1), np.abs(Rref))


@pytest.mark.parametrize("seed", range(10))
def test_random_update_matches_refactorization(seed):
    rng = np.random.default_rng(seed)
    A, Q, R = random_qr(rng, 8)
    u, v = rng.normal(size=8), rng.normal(size=8)
    Q1, R1, ops = qr_rank_one(Q, R, u, v)
    target = A + np.outer(u, v)
    assert np.max(np.abs(Q1 @ R1 - target)) <= 1e-10 * np.max(np.abs(A))
    assert np.array_equal(np.tril(R1, -1), np.zeros((8, 8)))
    assert orthogonality_drift(Q1) <= 1e-12
    # cross-check against LAPACK's updater (independent route)
    Qs, Rs = scipy.linalg.qr_update(Q, R, u, v)
    assert np.allclose(np.abs(np.diag(R1)), np.abs(np.diag(Rs)), rtol=1e-10)


def test_op_count_is_quadratic():
    rng = np.random.default_rng(1)
    counts = []
    for n in (8, 16, 32, 64):
        _, Q, R = random_qr(rng, n)
        counts.append(qr_rank_one(Q, R, rng.normal(size=n), rng.normal(size=n))[2])
    ratios = [counts[i + 1] / counts[i] for i in range(3)]
    assert all(3.5 < r < 4.5 for r in ratios)
    assert counts[-1] <= 26 * 64 * 64


def test_inputs_not_mutated():
    rng = np.random.default_rng(2)
    _, Q, R = random_qr(rng, 4)
    Qc, Rc = Q.copy(), R.copy()
    qr_rank_one(Q, R, rng.normal(size=4), rng.normal(size=4))
    assert np.array_equal(Q, Qc) and np.array_equal(R, Rc)
