"""Rank-one modification of a QR factorization with Givens rotations.

Given ``A = Q R`` the factors of ``A + u v^T`` are obtained in O(d^2) by
first rotating ``w = Q^T u`` onto a multiple of ``e_1`` (which leaves ``R``
upper Hessenberg), adding ``|w| e_1 v^T`` to the first row, and then
restoring triangularity with a second sweep of rotations.
"""
from __future__ import annotations

import math

import numpy as np

# flops charged per element pair a rotation touches (4 mul + 2 add)
ROTATION_FLOPS = 6


def givens(a, b):
    """Cosine/sine ``(c, s)`` with ``[[c, s], [-s, c]] @ [a, b] = [r, 0]``."""
    if b == 0.0:
        return 1.0, 0.0
    r = math.hypot(a, b)
    return a / r, b / r


def _rotate_rows(R, k, c, s, start):
    top = R[k, start:].copy()
    bottom = R[k + 1, start:]
    R[k, start:] = c * top + s * bottom
    R[k + 1, start:] = c * bottom - s * top


def _rotate_cols(Q, k, c, s):
    left = Q[:, k].copy()
    right = Q[:, k + 1]
    Q[:, k] = c * left + s * right
    Q[:, k + 1] = c * right - s * left


def qr_rank_one(Q, R, u, v):
    """Return ``(Q1, R1, ops)`` with ``Q1 @ R1 == Q @ R + outer(u, v)``.

    ``Q`` must be square orthogonal and ``R`` upper triangular.  The inputs are
    not modified.  ``ops`` is the number of floating point operations spent,
    which is Theta(d^2).
    """
    Q = np.array(Q, dtype=float)
    R = np.array(R, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n = R.shape[0]
    if Q.shape != (n, n) or u.shape != (n,) or v.shape != (n,):
        raise ValueError("dimension mismatch in qr_rank_one")
    w = Q.T @ u
    ops = 2 * n * n
    if not w.any():
        return Q, R, ops

    for k in range(n - 2, -1, -1):
        c, s = givens(w[k], w[k + 1])
        if s == 0.0:
            continue
        w[k] = c * w[k] + s * w[k + 1]
        w[k + 1] = 0.0
        _rotate_rows(R, k, c, s, k)
        _rotate_cols(Q, k, c, s)
        ops += ROTATION_FLOPS * ((n - k) + n)

    R[0, :] += w[0] * v
    ops += 2 * n

    for k in range(n - 1):
        c, s = givens(R[k, k], R[k + 1, k])
        if s == 0.0:
            continue
        _rotate_rows(R, k, c, s, k)
        R[k + 1, k] = 0.0
        _rotate_cols(Q, k, c, s)
        ops += ROTATION_FLOPS * ((n - k) + n)
    return Q, R, ops


def orthogonality_drift(Q):
    """``max |Q^T Q - I|``."""
    return float(np.max(np.abs(Q.T @ Q - np.eye(Q.shape[0]))))


def back_substitute(R, y):
    """Solve ``R x = y`` for upper-triangular ``R``; returns ``(x, ops)``."""
    n = R.shape[0]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - R[i, i + 1:] @ x[i + 1:]) / R[i, i]
    return x, n * n
