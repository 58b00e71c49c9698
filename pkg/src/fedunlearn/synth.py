"""Seeded synthetic datasets for the three model families."""
from __future__ import annotations

import numpy as np

from .dataio import LabeledVector, RatingsRecord
from .models import Document, Observation, UserItems


def ratings_records(n_users, n_items, mean_items=8, n_clusters=4, seed=0):
    """Ratings triples with clustered user tastes (timestamps increase with user id)."""
    rng = np.random.default_rng(seed)
    prefs = rng.dirichlet(np.full(n_items, 0.3), size=n_clusters)
    out = []
    t = 1_000_000
    for u in range(n_users):
        cluster = int(rng.integers(n_clusters))
        size = int(min(n_items, max(1, rng.poisson(mean_items))))
        items = rng.choice(n_items, size=size, replace=False, p=prefs[cluster])
        for i in sorted(items.tolist()):
            t += 1
            out.append(RatingsRecord(str(u), str(i), float(rng.integers(1, 6)), t))
    return out


def user_items(n_users, n_items, mean_items=8, n_clusters=4, seed=0):
    """Binary interaction histories as model records."""
    rng = np.random.default_rng(seed)
    prefs = rng.dirichlet(np.full(n_items, 0.3), size=n_clusters)
    users = []
    for u in range(n_users):
        cluster = int(rng.integers(n_clusters))
        size = int(min(n_items, max(1, rng.poisson(mean_items))))
        items = rng.choice(n_items, size=size, replace=False, p=prefs[cluster])
        users.append(UserItems(u, items.tolist()))
    return users


def regression_rows(n_rows, dim, noise=0.1, seed=0):
    """Rows ``x`` with target ``x . w + noise`` for a hidden weight vector ``w``."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=dim)
    x = rng.normal(size=(n_rows, dim))
    y = x @ w + noise * rng.normal(size=n_rows)
    return [Observation(u, tuple(x[u].tolist()), float(y[u])) for u in range(n_rows)], w


def count_documents(n_docs, n_classes, vocab, length=20, seed=0):
    """Bag-of-features documents drawn from class-specific multinomials."""
    rng = np.random.default_rng(seed)
    theta = rng.dirichlet(np.full(vocab, 0.5), size=n_classes)
    docs = []
    for u in range(n_docs):
        label = int(rng.integers(n_classes))
        counts = rng.multinomial(length, theta[label])
        docs.append(Document(u, [(j, int(c)) for j, c in enumerate(counts) if c], label))
    return docs


def labeled_vectors(records):
    """Model records as sparse labeled vectors (for writing sample files)."""
    out = []
    for rec in records:
        if isinstance(rec, Observation):
            feats = tuple((j, float(x)) for j, x in enumerate(rec.row) if x != 0)
            out.append(LabeledVector(float(rec.target), feats))
        else:
            out.append(LabeledVector(float(rec.label), tuple((j, float(c)) for j, c in rec.counts)))
    return out
