"""Per-user training records understood by the decremental models."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class UserItems:
    """One row of the binary interaction history: the items a user touched."""

    user_id: str
    items: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(sorted(set(int(i) for i in self.items))))


@dataclass(frozen=True)
class Observation:
    """A regression row ``M_u`` with its target ``r_u``."""

    user_id: str
    row: tuple[float, ...]
    target: float

    def __post_init__(self):
        object.__setattr__(self, "row", tuple(float(x) for x in self.row))
        object.__setattr__(self, "target", float(self.target))

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.row, dtype=float)


@dataclass(frozen=True)
class Document:
    """Feature-count row with a class index, for multinomial naive Bayes."""

    user_id: str
    counts: tuple[tuple[int, int], ...]
    label: int

    def __post_init__(self):
        merged: dict[int, int] = {}
        for idx, cnt in self.counts:
            merged[int(idx)] = merged.get(int(idx), 0) + int(cnt)
        object.__setattr__(
            self, "counts", tuple(sorted((i, c) for i, c in merged.items() if c != 0))
        )
        object.__setattr__(self, "label", int(self.label))
