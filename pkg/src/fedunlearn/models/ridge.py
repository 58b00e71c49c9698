"""Tikhonov-regularized least squares kept as ``z = M^T r`` and ``QR = M^T M + lam I``.

Adding or removing an observation is a rank-one change of the regularized
gram matrix, so both are handled by ``qr_rank_one`` and a back substitution,
at a cost independent of how many rows were incorporated.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InputDomainError
from .qr import back_substitute, orthogonality_drift, qr_rank_one
from .records import Observation

DIAG_RTOL = 1e-12
ORTH_TOL = 1e-8


@dataclass
class RidgeDelta:
    """``dz`` plus the signed rank-one gram terms ``sign * m m^T``."""

    dz: np.ndarray
    terms: list[tuple[int, tuple[float, ...]]] = field(default_factory=list)

    kind = "ridge"

    @classmethod
    def from_records(cls, removed=(), added=()):
        removed, added = list(removed), list(added)
        rows = removed + added
        if not rows:
            return cls(np.zeros(0), [])
        d = len(rows[0].row)
        dz = np.zeros(d)
        terms = []
        for obs in removed:
            dz -= obs.vector * obs.target
            terms.append((-1, obs.row))
        for obs in added:
            dz += obs.vector * obs.target
            terms.append((1, obs.row))
        return cls(dz, terms)

    def negate(self):
        return RidgeDelta(-self.dz, [(-s, row) for s, row in reversed(self.terms)])

    def is_identity(self):
        return not self.terms

    def summary(self):
        return {
            "added": sum(1 for s, _ in self.terms if s > 0),
            "removed": sum(1 for s, _ in self.terms if s < 0),
        }


class RidgeModel:
    """Decremental ridge regression.

    Parameters
    ----------
    dim : int
        Feature dimension ``d``.
    lam : float
        Regularization strength, strictly positive so the gram matrix stays
        positive definite under any sequence of forgets.
    """

    kind = "ridge"

    def __init__(self, dim, lam=1.0):
        if dim < 1:
            raise InputDomainError("dim must be positive")
        if not lam > 0:
            raise InputDomainError("lambda must be strictly positive")
        self.dim = int(dim)
        self.lam = float(lam)
        self.z = np.zeros(self.dim)
        self.gram = self.lam * np.eye(self.dim)
        self.Q = np.eye(self.dim)
        self.R = self.lam * np.eye(self.dim)
        self.h = np.zeros(self.dim)
        self.n_rows = 0
        self.refactor_count = 0
        self.op_count = 0
        self.hooks: list[int] = []
        self.trace: list | None = None

    def copy(self):
        other = RidgeModel.__new__(RidgeModel)
        other.dim, other.lam = self.dim, self.lam
        other.z, other.gram = self.z.copy(), self.gram.copy()
        other.Q, other.R, other.h = self.Q.copy(), self.R.copy(), self.h.copy()
        other.n_rows = self.n_rows
        other.refactor_count = self.refactor_count
        other.op_count = 0
        other.hooks = []
        other.trace = None
        return other

    def drain_hooks(self):
        hooks, self.hooks = self.hooks, []
        return hooks

    def _touch(self, *entry):
        if self.trace is not None:
            self.trace.append(entry)

    def _check_row(self, m):
        m = np.asarray(m, dtype=float)
        if m.shape != (self.dim,):
            raise InputDomainError(f"row has dimension {m.shape}, expected ({self.dim},)")
        return m

    # -- factor maintenance ----------------------------------------------------
    def _healthy(self):
        diag = np.abs(np.diag(self.R))
        if diag.min() < DIAG_RTOL * np.abs(self.R).max():
            return False
        return orthogonality_drift(self.Q) <= ORTH_TOL

    def refactor(self):
        """Recompute ``Q, R`` from the accumulated gram matrix."""
        self.Q, self.R = np.linalg.qr(self.gram)
        self.R = np.triu(self.R)
        self.refactor_count += 1

    def _rank_one(self, sign, m):
        Q, R, ops = qr_rank_one(self.Q, self.R, sign * m, m)
        self.Q, self.R = Q, R
        self.gram += sign * np.outer(m, m)
        self.op_count += ops + self.dim * self.dim
        self._touch("G")
        self._touch("Q")
        self._touch("R")
        # health checks are diagnostics and are not charged to op_count
        if not self._healthy():
            self.refactor()

    def _solve(self):
        y = self.Q.T @ self.z
        self.h, ops = back_substitute(self.R, y)
        self.op_count += 2 * self.dim * self.dim + ops
        self._touch("h")

    def _shift_z(self, sign, m, r):
        self.z += sign * r * m
        self.op_count += 2 * self.dim
        self._touch("z")

    # -- update / forget -------------------------------------------------------
    def update(self, obs: Observation):
        m = self._check_row(obs.row)
        self._shift_z(1.0, m, obs.target)
        self._rank_one(1.0, m)
        self._solve()
        self.n_rows += 1
        self.hooks.append(1)
        return self

    def forget(self, obs: Observation):
        m = self._check_row(obs.row)
        self._shift_z(-1.0, m, obs.target)
        self._rank_one(-1.0, m)
        self._solve()
        self.n_rows -= 1
        self.hooks.append(-1)
        return self

    def apply_delta(self, delta: RidgeDelta, device=None):
        if delta.is_identity():
            return self
        self.z += delta.dz
        self.op_count += 2 * self.dim
        self._touch("z")
        for sign, row in delta.terms:
            self._rank_one(float(sign), self._check_row(row))
            self.n_rows += sign
        self._solve()
        return self

    def predict(self, m_new):
        m = self._check_row(m_new)
        return float(self.h @ m)

    # -- retraining ------------------------------------------------------------
    @classmethod
    def fit(cls, observations, dim, lam=1.0, trace=None):
        """Direct build: accumulate ``M^T M`` and ``M^T r``, then one QR."""
        model = cls(dim, lam=lam)
        model.trace = trace
        d = model.dim
        for obs in observations:
            m = model._check_row(obs.row)
            model.gram += np.outer(m, m)
            model.z += obs.target * m
            model.op_count += 2 * d * d + 2 * d
            model.n_rows += 1
            model._touch("z")
            model._touch("G")
        model.Q, model.R = np.linalg.qr(model.gram)
        model.R = np.triu(model.R)
        model.op_count += (4 * d**3) // 3
        model._touch("Q")
        model._touch("R")
        model._solve()
        model.trace = None
        return model

    def state_close(self, other, rtol=1e-6):
        """``h`` and the factored gram matrix agree within ``rtol`` (relative)."""
        def close(a, b):
            return np.linalg.norm(a - b) <= rtol * (1.0 + np.linalg.norm(b))
        return (
            self.dim == other.dim
            and close(self.h, other.h)
            and close(self.Q @ self.R, other.Q @ other.R)
            and close(self.z, other.z)
        )


def ridge_update(model: RidgeModel, row: Observation) -> RidgeModel:
    return model.update(row)


def ridge_forget(model: RidgeModel, row: Observation) -> RidgeModel:
    return model.forget(row)


def ridge_predict(m_new, model: RidgeModel) -> float:
    return model.predict(m_new)
