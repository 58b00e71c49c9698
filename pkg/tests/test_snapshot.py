import random

import numpy as np
import pytest

from fedunlearn.errors import ParseError
from fedunlearn.models import (Document, MnbModel, Observation, PprModel, RidgeModel, UserItems, from_snapshot,
                               to_snapshot)


def test_ppr_round_trip():
    rng = random.Random(1)
    users = [UserItems(u, rng.sample(range(12), 4)) for u in range(20)]
    model = PprModel.fit(users, 12)
    text = to_snapshot(model)
    back = from_snapshot(text)
    assert back.state_equal(model)
    assert to_snapshot(back) == text


def test_ppr_top_k_round_trip():
    rng = random.Random(2)
    users = [UserItems(u, rng.sample(range(10), 3)) for u in range(15)]
    model = PprModel.fit(users, 10, top_k=3)
    text = to_snapshot(model)
    assert to_snapshot(from_snapshot(text)) == text


def test_ridge_round_trip():
    rng = np.random.default_rng(0)
    obs = [Observation(u, tuple(rng.normal(size=4).tolist()), float(rng.normal())) for u in range(30)]
    model = RidgeModel.fit(obs, 4, lam=0.5)
    text = to_snapshot(model)
    back = from_snapshot(text)
    assert np.array_equal(back.h, model.h) and np.array_equal(back.Q, model.Q)
    assert np.array_equal(back.gram, model.gram)
    assert to_snapshot(back) == text
    back.update(obs[0])
    model.update(obs[0])
    assert np.array_equal(back.h, model.h)


def test_mnb_round_trip():
    docs = [Document(u, [(u % 5, 2), (7, 1)], u % 3) for u in range(12)]
    model = MnbModel.fit(docs, 3, 8)
    back = from_snapshot(to_snapshot(model))
    assert back.state_equal(model)


@pytest.mark.parametrize("text, line", [
    ("", 1),
    ("not-a-snapshot 1 ppr\n", 1),
    ("fedunlearn-snapshot 9 ppr items=3 top_k=none\n", 1),
    ("fedunlearn-snapshot 1 ppr items=3 top_k=none\nv 0 1\nX 1 2\n", 3),
    ("fedunlearn-snapshot 1 mnb classes=2 vocab=2 alpha=1.0\nN zero 1\n", 1),
    ("fedunlearn-snapshot 1 forest\n", 1),
])
def test_malformed(text, line):
    with pytest.raises(ParseError) as info:
        from_snapshot(text)
    assert info.value.line == line
