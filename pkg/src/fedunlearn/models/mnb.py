"""Count-based multinomial naive Bayes; forgetting is exact count subtraction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConsistencyError, InputDomainError
from .records import Document


@dataclass
class MnbDelta:
    dclass: dict[int, int]
    dfeat: dict[tuple[int, int], int]

    kind = "mnb"

    @classmethod
    def from_records(cls, removed=(), added=()):
        dclass: dict[int, int] = {}
        dfeat: dict[tuple[int, int], int] = {}
        for sign, docs in ((-1, removed), (1, added)):
            for doc in docs:
                dclass[doc.label] = dclass.get(doc.label, 0) + sign
                for idx, cnt in doc.counts:
                    key = (doc.label, idx)
                    dfeat[key] = dfeat.get(key, 0) + sign * cnt
        return cls(
            {c: d for c, d in sorted(dclass.items()) if d},
            {k: d for k, d in sorted(dfeat.items()) if d},
        )

    def negate(self):
        return MnbDelta({c: -d for c, d in self.dclass.items()}, {k: -d for k, d in self.dfeat.items()})

    def is_identity(self):
        return not self.dclass and not self.dfeat

    def summary(self):
        return {"classes": len(self.dclass), "features": len(self.dfeat)}


class MnbModel:
    """Multinomial naive Bayes over ``vocab`` count features and ``n_classes`` labels."""

    kind = "mnb"

    def __init__(self, n_classes, vocab, alpha=1.0):
        if n_classes < 1 or vocab < 1:
            raise InputDomainError("n_classes and vocab must be positive")
        if not alpha > 0:
            raise InputDomainError("alpha must be strictly positive")
        self.n_classes = int(n_classes)
        self.vocab = int(vocab)
        self.alpha = float(alpha)
        self.class_counts = np.zeros(self.n_classes, dtype=np.int64)
        self.feature_counts = np.zeros((self.n_classes, self.vocab), dtype=np.int64)
        self.op_count = 0
        self.hooks: list[int] = []
        self.trace: list | None = None

    def copy(self):
        other = MnbModel(self.n_classes, self.vocab, self.alpha)
        other.class_counts = self.class_counts.copy()
        other.feature_counts = self.feature_counts.copy()
        return other

    def drain_hooks(self):
        hooks, self.hooks = self.hooks, []
        return hooks

    def _touch(self, *entry):
        if self.trace is not None:
            self.trace.append(entry)

    def _check(self, doc: Document):
        if not 0 <= doc.label < self.n_classes:
            raise InputDomainError(f"label {doc.label} outside [0, {self.n_classes})")
        for idx, cnt in doc.counts:
            if not 0 <= idx < self.vocab:
                raise InputDomainError(f"feature {idx} outside [0, {self.vocab})")
            if cnt < 0:
                raise InputDomainError(f"negative count {cnt} for feature {idx}")

    def _add(self, doc, sign):
        self.class_counts[doc.label] += sign
        self.op_count += 1
        self._touch("N", doc.label)
        for idx, cnt in doc.counts:
            self.feature_counts[doc.label, idx] += sign * cnt
            self.op_count += 1
            self._touch("F", doc.label, idx)

    def update(self, doc: Document):
        self._check(doc)
        self._add(doc, 1)
        self.hooks.append(1)
        return self

    def forget(self, doc: Document):
        self._check(doc)
        if self.class_counts[doc.label] < 1:
            raise ConsistencyError(f"class {doc.label} has no documents; {doc.user_id} not incorporated")
        for idx, cnt in doc.counts:
            if self.feature_counts[doc.label, idx] < cnt:
                raise ConsistencyError(f"feature {idx} of class {doc.label} would go negative")
        self._add(doc, -1)
        self.hooks.append(-1)
        return self

    def apply_delta(self, delta: MnbDelta, device=None):
        for c, d in delta.dclass.items():
            if self.class_counts[c] + d < 0:
                raise ConsistencyError(f"class {c} count would go negative", device=device)
        for (c, f), d in delta.dfeat.items():
            if self.feature_counts[c, f] + d < 0:
                raise ConsistencyError(f"feature ({c}, {f}) count would go negative", device=device)
        for c, d in delta.dclass.items():
            self.class_counts[c] += d
            self.op_count += 1
        for (c, f), d in delta.dfeat.items():
            self.feature_counts[c, f] += d
            self.op_count += 1
        return self

    def log_posterior(self, counts):
        """Unnormalized log posterior per class; ``-inf`` for classes with no documents."""
        total = self.class_counts.sum()
        out = np.full(self.n_classes, -np.inf)
        if total == 0:
            return out
        x = np.zeros(self.vocab)
        for idx, cnt in counts:
            if 0 <= idx < self.vocab:
                x[idx] += cnt
        denom = self.feature_counts.sum(axis=1) + self.alpha * self.vocab
        for c in range(self.n_classes):
            if self.class_counts[c] == 0:
                continue
            loglik = np.log((self.feature_counts[c] + self.alpha) / denom[c])
            out[c] = np.log(self.class_counts[c] / total) + x @ loglik
        return out

    def predict(self, counts):
        """Most probable class; ties go to the lowest class index."""
        return int(np.argmax(self.log_posterior(counts)))

    def frequencies(self):
        """Class priors and per-class feature frequencies, used for convergence checks."""
        total = self.class_counts.sum()
        prior = self.class_counts / total if total else np.zeros(self.n_classes, dtype=float)
        rows = self.feature_counts.sum(axis=1, keepdims=True)
        freq = np.divide(self.feature_counts, rows, out=np.zeros(self.feature_counts.shape), where=rows > 0)
        return prior, freq

    @classmethod
    def fit(cls, docs, n_classes, vocab, alpha=1.0, trace=None):
        model = cls(n_classes, vocab, alpha)
        model.trace = trace
        for doc in docs:
            model._check(doc)
            model._add(doc, 1)
        model.trace = None
        return model

    def state_equal(self, other):
        return (
            self.alpha == other.alpha
            and np.array_equal(self.class_counts, other.class_counts)
            and np.array_equal(self.feature_counts, other.feature_counts)
        )


def mnb_update(model, row):
    return model.update(row)


def mnb_forget(model, row):
    return model.forget(row)


def mnb_predict(model, features):
    return model.predict(features)
