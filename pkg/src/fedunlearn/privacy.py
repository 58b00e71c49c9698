"""Recovering deleted data from stale models, and the limits of doing so."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np

from .errors import DegenerateReportError
from .models.ppr import PprModel, jaccard


@dataclass
class RecoveryReport:
    recovered: list[int]
    ground_truth: list[int] | None = None
    exact_match: bool | None = None
    evidence: dict[int, list[tuple[int, int]]] = field(default_factory=dict)
    single_deletion_consistent: bool = True

    def to_dict(self):
        return {
            "recovered": self.recovered,
            "ground_truth": self.ground_truth,
            "exact_match": self.exact_match,
            "single_deletion_consistent": self.single_deletion_consistent,
            "evidence": {str(i): [list(p) for p in pairs] for i, pairs in sorted(self.evidence.items())},
        }


def _as_fraction(triple):
    c, va, vb = triple
    denom = va + vb - c
    return Fraction(c, denom) if denom else Fraction(0)


def _triples(stale):
    if isinstance(stale, PprModel):
        return stale.similarity_triples()
    return {tuple(k): tuple(int(x) for x in t) for k, t in stale.items()}


def recover_deleted_items(stale, updated_users, item_count, ground_truth=None) -> RecoveryReport:
    """Items of a single deleted user, inferred from a stale similarity model.

    ``stale`` is the model trained before the deletion (or its count triples
    ``(c, v_a, v_b)`` keyed by item pair); ``updated_users`` is the history
    after removing one user.  Similarities are rebuilt from the updated
    history and compared exactly as rationals.  An item is reported when one
    of its similarity entries changed and the stale count attached to that
    entry differs from the rebuilt count; the latter condition keeps the
    untouched endpoint of a changed pair out of the result.

    Items whose similarities are all numerically unchanged by the deletion
    cannot be seen and are missed.
    """
    stale_triples = _triples(stale)
    fresh = PprModel.fit(list(updated_users), item_count)
    fresh_triples = fresh.similarity_triples()
    evidence: dict[int, list[tuple[int, int]]] = {}
    stale_counts: dict[int, int] = {}
    for (a, b), (_, va, vb) in stale_triples.items():
        stale_counts[a] = va
        stale_counts[b] = vb
    consistent = all(0 <= stale_counts[i] - fresh.v[i] <= 1 for i in stale_counts)
    zero = (0, 0, 0)
    for key in sorted(set(stale_triples) | set(fresh_triples)):
        old = stale_triples.get(key, zero)
        new = fresh_triples.get(key, zero)
        if _as_fraction(old) == _as_fraction(new):
            continue
        if key not in stale_triples:
            # a pair can only appear through deletion if the pre-condition is violated
            consistent = False
            continue
        for pos, item in enumerate(key):
            if old[1 + pos] != fresh.v[item]:
                evidence.setdefault(item, []).append(key)
    recovered = sorted(evidence)
    truth = sorted(set(ground_truth)) if ground_truth is not None else None
    exact = (recovered == truth) if (truth is not None and consistent) else None
    return RecoveryReport(recovered, truth, exact, evidence, consistent)


def user_similarity_leak(users):
    """All user pairs ranked by Jaccard similarity of their item sets (descending)."""
    users = list(users)
    ranked = []
    for (ia, a), (ib, b) in combinations(enumerate(users), 2):
        sa, sb = set(a.items), set(b.items)
        inter = len(sa & sb)
        ranked.append((ia, ib, jaccard(inter, len(sa), len(sb))))
    ranked.sort(key=lambda e: (-e[2], e[0], e[1]))
    return [(users[ia].user_id, users[ib].user_id, s) for ia, ib, s in ranked]


def guess_from_neighbors(target_id, users, min_similarity=0.5):
    """Items the most similar surviving users share, as a guess for ``target_id``'s history.

    Returns ``(neighbors, guessed_items)`` where neighbors are
    ``(user_id, similarity)`` above ``min_similarity``.
    """
    users = list(users)
    by_id = {u.user_id: u for u in users}
    neighbors = []
    for a, b, s in user_similarity_leak(users):
        if s < min_similarity:
            break
        if a == target_id:
            neighbors.append((b, s))
        elif b == target_id:
            neighbors.append((a, s))
    guessed = set()
    for uid, _ in neighbors:
        guessed |= set(by_id[uid].items)
    return neighbors, sorted(guessed)


@dataclass
class SubspaceReport:
    """Affine set ``{x : normal . x = offset}`` with a unit normal."""

    normal: list[float]
    offset: float
    dimension: int
    point: list[float]

    def contains(self, x, tol=1e-9):
        return abs(float(np.dot(self.normal, x)) - self.offset) <= tol * (1.0 + abs(self.offset))

    def to_dict(self):
        return {"normal": self.normal, "offset": self.offset, "dimension": self.dimension, "point": self.point}


def ridge_subspace_report(h, r_d) -> SubspaceReport:
    """Constraint ``h . M_d = r_d`` on a deleted row; no reconstruction is attempted."""
    h = np.asarray(h, dtype=float)
    norm = float(np.linalg.norm(h))
    if norm == 0.0:
        raise DegenerateReportError("weight vector is zero; the constraint is empty or everything")
    normal = h / norm
    offset = float(r_d) / norm
    return SubspaceReport(normal.tolist(), offset, h.size - 1, (offset * normal).tolist())
