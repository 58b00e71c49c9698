"""Item-item co-occurrence model (personalized PageRank style) with exact forgetting.

The model keeps three intermediates: per-item interaction counts ``v``, the
co-occurrence counts ``C = Y^T Y`` (off-diagonal, keyed by ``(i1, i2)`` with
``i1 < i2``; the diagonal is ``v`` itself) and the Jaccard similarities ``L``
derived from them.  Updates and forgets touch only the rows of the items the
user interacted with.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

from ..errors import ConsistencyError, InputDomainError
from .records import UserItems


def jaccard(c, v1, v2):
    """Jaccard similarity ``c / (v1 + v2 - c)`` from co-occurrence counts.

    Two items nobody interacted with have similarity 0.
    """
    if c < 0 or v1 < 0 or v2 < 0:
        raise ConsistencyError(f"negative count in jaccard({c}, {v1}, {v2})")
    if c > min(v1, v2):
        raise ConsistencyError(f"co-occurrence {c} exceeds min({v1}, {v2})")
    denom = v1 + v2 - c
    if denom == 0:
        return 0.0
    return c / denom


def _pair(a, b):
    return (a, b) if a < b else (b, a)


@dataclass
class PprDelta:
    """Net change of ``v`` and ``C`` produced by a batch of forgets and updates."""

    dv: dict[int, int] = field(default_factory=dict)
    dC: dict[tuple[int, int], int] = field(default_factory=dict)

    kind = "ppr"

    @classmethod
    def from_records(cls, removed=(), added=()):
        dv: dict[int, int] = {}
        dC: dict[tuple[int, int], int] = {}
        for sign, users in ((-1, removed), (1, added)):
            for user in users:
                for i in user.items:
                    dv[i] = dv.get(i, 0) + sign
                for key in combinations(user.items, 2):
                    dC[key] = dC.get(key, 0) + sign
        return cls(
            {i: d for i, d in sorted(dv.items()) if d},
            {k: d for k, d in sorted(dC.items()) if d},
        )

    def negate(self):
        return PprDelta({i: -d for i, d in self.dv.items()}, {k: -d for k, d in self.dC.items()})

    def is_identity(self):
        return not self.dv and not self.dC

    def summary(self):
        return {"items": len(self.dv), "pairs": len(self.dC)}


class PprModel:
    """Decremental item-item Jaccard similarity model.

    Parameters
    ----------
    item_count : int
        Number of items ``|I|``; item indices lie in ``[0, item_count)``.
    top_k : int, optional
        When set, only the ``top_k`` most similar neighbours of each item are
        retained in ``L``.  ``C`` is never truncated, so truncated rows are
        always rebuilt from exact counts.
    """

    kind = "ppr"

    def __init__(self, item_count, top_k=None):
        if item_count < 0:
            raise InputDomainError("item_count must be non-negative")
        if top_k is not None and top_k < 1:
            raise InputDomainError("top_k must be positive")
        self.item_count = int(item_count)
        self.top_k = top_k
        self.v = [0] * self.item_count
        self.C: dict[tuple[int, int], int] = {}
        self.neighbors: list[set[int]] = [set() for _ in range(self.item_count)]
        # untruncated: one similarity per unordered pair; truncated: per-item rows
        self.L: dict[tuple[int, int], float] = {}
        self.rows: dict[int, list[tuple[int, float]]] = {}
        self.op_count = 0
        self.hooks: list[int] = []
        self.trace: list | None = None

    # -- bookkeeping -------------------------------------------------------
    def _touch(self, *entry):
        if self.trace is not None:
            self.trace.append(entry)

    def _check_items(self, items):
        for i in items:
            if not 0 <= i < self.item_count:
                raise InputDomainError(f"item index {i} outside [0, {self.item_count})")

    def copy(self):
        other = PprModel.__new__(PprModel)
        other.item_count = self.item_count
        other.top_k = self.top_k
        other.v = list(self.v)
        other.C = dict(self.C)
        other.neighbors = [set(n) for n in self.neighbors]
        other.L = dict(self.L)
        other.rows = {i: list(r) for i, r in self.rows.items()}
        other.op_count = 0
        other.hooks = []
        other.trace = None
        return other

    def drain_hooks(self):
        hooks, self.hooks = self.hooks, []
        return hooks

    # -- similarity access ---------------------------------------------------
    def co_occurrence(self, i1, i2):
        if i1 == i2:
            return self.v[i1]
        return self.C.get(_pair(i1, i2), 0)

    def similarity(self, i1, i2):
        """Exact Jaccard similarity from the stored counts (diagonal included)."""
        if i1 == i2:
            return 1.0 if self.v[i1] > 0 else 0.0
        return jaccard(self.co_occurrence(i1, i2), self.v[i1], self.v[i2])

    def similarity_row(self, item):
        """Stored ``L`` entries of one item as ``{neighbor: similarity}``."""
        if self.top_k is not None:
            return dict(self.rows.get(item, ()))
        return {j: self.L[_pair(item, j)] for j in self.neighbors[item]}

    def similarity_entries(self):
        """All stored ``L`` entries keyed by ``(row, col)``; symmetric when untruncated."""
        out = {}
        if self.top_k is not None:
            for i, row in self.rows.items():
                for j, s in row:
                    out[(i, j)] = s
            return out
        for (a, b), s in self.L.items():
            out[(a, b)] = s
            out[(b, a)] = s
        return out

    def similarity_triples(self):
        """Stored pairs as exact count triples ``(c, v_a, v_b)`` keyed by ``(a, b)``, ``a < b``."""
        keys = set()
        if self.top_k is not None:
            for i, row in self.rows.items():
                keys.update(_pair(i, j) for j, _ in row)
        else:
            keys = set(self.L)
        return {(a, b): (self.C[(a, b)], self.v[a], self.v[b]) for a, b in sorted(keys)}

    # -- similarity maintenance ---------------------------------------------
    def _refresh_pairs(self, keys):
        """Recompute (or drop) the ``L`` entries for the given pairs, in key order."""
        for key in sorted(keys):
            self.op_count += 1
            self._touch("L", *key)
            c = self.C.get(key, 0)
            if c:
                self.L[key] = jaccard(c, self.v[key[0]], self.v[key[1]])
            else:
                self.L.pop(key, None)

    def _rebuild_rows(self, items):
        k = self.top_k
        for i in sorted(items):
            scored = []
            for j in self.neighbors[i]:
                self.op_count += 1
                self._touch("L", i, j)
                scored.append((-jaccard(self.C[_pair(i, j)], self.v[i], self.v[j]), j))
            scored.sort()
            if scored:
                self.rows[i] = [(j, -s) for s, j in scored[:k]]
            else:
                self.rows.pop(i, None)

    def _refresh(self, touched_items, touched_pairs):
        """Bring ``L`` back in line with ``v`` and ``C`` after they changed.

        Every entry whose row or column item had its count changed is recomputed;
        pairs whose co-occurrence dropped to zero are removed.
        """
        if self.top_k is not None:
            affected = set(touched_items)
            for i in touched_items:
                affected.update(self.neighbors[i])
            for a, b in touched_pairs:
                affected.update((a, b))
            self._rebuild_rows(affected)
            return
        keys = set(touched_pairs)
        for i in touched_items:
            keys.update(_pair(i, j) for j in self.neighbors[i])
        self._refresh_pairs(keys)

    def _refresh_truncated_after_forget(self, items):
        """Top-k maintenance after a forget, one recalculation per changed pair.

        Rows of the forgotten items are rebuilt from ``C``.  For any other item
        ``j`` only the entries ``(j, i)`` with ``i`` forgotten change, and they
        can only grow (``C_ij`` is unchanged while ``v_i`` dropped), so row
        ``j`` is patched by insertion without rescanning its neighbours.
        """
        k = self.top_k
        forgotten = set(items)
        values = {}
        for i in items:
            for j in self.neighbors[i]:
                values[_pair(i, j)] = None
        for key in sorted(values):
            self.op_count += 1
            self._touch("L", *key)
            values[key] = jaccard(self.C[key], self.v[key[0]], self.v[key[1]])
        for i in sorted(forgotten):
            scored = sorted((-values[_pair(i, j)], j) for j in self.neighbors[i])
            if scored:
                self.rows[i] = [(j, -s) for s, j in scored[:k]]
            else:
                self.rows.pop(i, None)
        patches: dict[int, list] = {}
        for (a, b), s in values.items():
            for row, other in ((a, b), (b, a)):
                if row not in forgotten:
                    patches.setdefault(row, []).append((other, s))
        for j in sorted(patches):
            changed = {i for i, _ in patches[j]}
            kept = [(i, s) for i, s in self.rows.get(j, []) if i not in changed]
            merged = sorted(kept + patches[j], key=lambda e: (-e[1], e[0]))
            self.rows[j] = merged[:k]

    # -- update / forget -----------------------------------------------------
    def update(self, user: UserItems):
        """Incorporate one user's item set."""
        items = user.items
        self._check_items(items)
        for i in items:
            self.v[i] += 1
            self.op_count += 1
            self._touch("v", i)
        pairs = list(combinations(items, 2))
        for key in pairs:
            c = self.C.get(key, 0) + 1
            self.C[key] = c
            if c == 1:
                self.neighbors[key[0]].add(key[1])
                self.neighbors[key[1]].add(key[0])
            self.op_count += 1
            self._touch("C", *key)
        self._refresh(items, pairs)
        # one up-step per recomputed similarity row
        self.hooks.extend([1] * len(items))
        return self

    def forget(self, user: UserItems):
        """Remove a previously incorporated user's item set exactly."""
        items = user.items
        self._check_items(items)
        for i in items:
            if self.v[i] < 1:
                raise ConsistencyError(f"item {i} count would go negative; user {user.user_id} not incorporated")
        pairs = list(combinations(items, 2))
        for key in pairs:
            if self.C.get(key, 0) < 1:
                raise ConsistencyError(f"pair {key} count would go negative; user {user.user_id} not incorporated")
        for i in items:
            self.v[i] -= 1
            self.op_count += 1
            self._touch("v", i)
        for key in pairs:
            c = self.C[key] - 1
            if c:
                self.C[key] = c
            else:
                del self.C[key]
                self.neighbors[key[0]].discard(key[1])
                self.neighbors[key[1]].discard(key[0])
            self.op_count += 1
            self._touch("C", *key)
            self.hooks.append(-1)
        if self.top_k is not None:
            self._refresh_truncated_after_forget(items)
        else:
            self._refresh(items, pairs)
        if items:
            self.hooks.append(0)
        return self

    def apply_delta(self, delta: PprDelta, device=None):
        """Merge a worker's net count change, then refresh the affected similarities."""
        for i, d in delta.dv.items():
            self._check_items((i,))
            if self.v[i] + d < 0:
                raise ConsistencyError(f"item {i} count would go negative", device=device)
        for key, d in delta.dC.items():
            self._check_items(key)
            if self.C.get(key, 0) + d < 0:
                raise ConsistencyError(f"pair {key} count would go negative", device=device)
        for i, d in delta.dv.items():
            self.v[i] += d
            self.op_count += 1
        for key, d in delta.dC.items():
            before = self.C.get(key, 0)
            c = before + d
            if c:
                self.C[key] = c
            else:
                self.C.pop(key, None)
            if before == 0 and c > 0:
                self.neighbors[key[0]].add(key[1])
                self.neighbors[key[1]].add(key[0])
            elif before > 0 and c == 0:
                self.neighbors[key[0]].discard(key[1])
                self.neighbors[key[1]].discard(key[0])
            self.op_count += 1
        touched = set(delta.dv)
        for a, b in delta.dC:
            touched.update((a, b))
        self._refresh(touched, delta.dC)
        return self

    # -- prediction ----------------------------------------------------------
    def predict(self, item, k):
        """Top-``k`` most similar items, ties broken by ascending index."""
        self._check_items((item,))
        if k < 1:
            raise InputDomainError("k must be positive")
        row = self.similarity_row(item)
        ranked = sorted(row.items(), key=lambda e: (-e[1], e[0]))
        return ranked[:k]

    def recommend(self, history, k):
        """Items scored by summed similarity to ``history``, excluding it."""
        scores: dict[int, float] = {}
        seen = set(history)
        for i in seen:
            for j, s in self.similarity_row(i).items():
                if j not in seen:
                    scores[j] = scores.get(j, 0.0) + s
        ranked = sorted(scores.items(), key=lambda e: (-e[1], e[0]))
        return [j for j, _ in ranked[:k]]

    # -- retraining ----------------------------------------------------------
    @classmethod
    def fit(cls, users, item_count, top_k=None, trace=None):
        """Build from scratch over ``users`` (the full-retrain baseline)."""
        model = cls(item_count, top_k=top_k)
        model.trace = trace
        for user in users:
            model._check_items(user.items)
            for i in user.items:
                model.v[i] += 1
                model.op_count += 1
                model._touch("v", i)
            for key in combinations(user.items, 2):
                c = model.C.get(key, 0) + 1
                model.C[key] = c
                if c == 1:
                    model.neighbors[key[0]].add(key[1])
                    model.neighbors[key[1]].add(key[0])
                model.op_count += 1
                model._touch("C", *key)
        if top_k is None:
            model._refresh_pairs(model.C.keys())
        else:
            model._rebuild_rows(range(model.item_count))
        model.trace = None
        return model

    def state_equal(self, other):
        """Exact equality of counts and stored similarities."""
        return (
            self.item_count == other.item_count
            and self.top_k == other.top_k
            and self.v == other.v
            and self.C == other.C
            and self.similarity_entries() == other.similarity_entries()
        )


def ppr_update(model: PprModel, user: UserItems) -> PprModel:
    return model.update(user)


def ppr_forget(model: PprModel, user: UserItems) -> PprModel:
    return model.forget(user)


def ppr_predict(item, k, model: PprModel):
    return model.predict(item, k)
