"""Ratings-triple and sparse labeled-vector files, binarization and device sharding."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, TextIO

from .errors import ParseError
from .models.records import UserItems

DELIMITERS = {"::": "::", "tab": "\t", "\\t": "\t", "\t": "\t", ",": ",", "comma": ","}


@dataclass(frozen=True)
class RatingsRecord:
    user: str
    item: str
    rating: float
    timestamp: int | None = None


@dataclass(frozen=True)
class LabeledVector:
    label: float
    features: tuple[tuple[int, float], ...] = ()  # 0-based, strictly ascending

    @property
    def dimension(self):
        return self.features[-1][0] + 1 if self.features else 0


@dataclass
class InteractionHistory:
    """Binary user x item history; item indices follow first appearance."""

    users: list[UserItems] = field(default_factory=list)
    item_count: int = 0
    item_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for u in self.users:
            if u.user_id in seen:
                raise ValueError(f"duplicate user id {u.user_id!r}")
            seen.add(u.user_id)
            if u.items and u.items[-1] >= self.item_count:
                raise ValueError(f"user {u.user_id!r} references item outside [0, {self.item_count})")


def _lines(stream):
    for n, line in enumerate(stream, start=1):
        yield n, line.rstrip("\r\n")


def parse_ratings(stream: TextIO | Iterable[str], delimiter="::", skip_header=False):
    """Parse ``user<d>item<d>rating[<d>timestamp]`` lines into records."""
    sep = DELIMITERS.get(delimiter, delimiter)
    out = []
    for n, line in _lines(stream):
        if not line.strip():
            continue
        if skip_header and n == 1:
            continue
        fields = [f.strip() for f in line.split(sep)]
        if len(fields) < 3:
            raise ParseError(n, f"expected at least 3 fields, found {len(fields)}")
        user, item = fields[0], fields[1]
        if not user or not item:
            raise ParseError(n, "empty user or item token")
        try:
            rating = float(fields[2])
        except ValueError:
            raise ParseError(n, f"unparseable rating {fields[2]!r}") from None
        ts = None
        if len(fields) > 3 and fields[3]:
            try:
                ts = int(fields[3])
            except ValueError:
                raise ParseError(n, f"unparseable timestamp {fields[3]!r}") from None
        out.append(RatingsRecord(user, item, rating, ts))
    return out


def serialize_ratings(records, delimiter="::"):
    sep = DELIMITERS.get(delimiter, delimiter)
    lines = []
    for r in records:
        fields = [r.user, r.item, repr(r.rating)]
        if r.timestamp is not None:
            fields.append(str(r.timestamp))
        lines.append(sep.join(fields))
    return "".join(line + "\n" for line in lines)


def binarize(records, threshold) -> InteractionHistory:
    """Keep ``(user, item)`` interactions rated at least ``threshold``."""
    item_index: dict[str, int] = {}
    user_items: dict[str, set[int]] = {}
    for r in records:
        if r.user not in user_items:
            user_items[r.user] = set()
        if r.rating >= threshold:
            if r.item not in item_index:
                item_index[r.item] = len(item_index)
            user_items[r.user].add(item_index[r.item])
    users = [UserItems(u, items) for u, items in user_items.items()]
    return InteractionHistory(users, len(item_index), list(item_index))


def parse_labeled(stream: TextIO | Iterable[str]):
    """Parse ``label idx:val ...`` lines (1-based indices) into 0-based vectors."""
    out = []
    for n, line in _lines(stream):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        tokens = body.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise ParseError(n, f"unparseable label {tokens[0]!r}") from None
        feats = []
        last = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(n, f"expected idx:val, found {tok!r}")
            try:
                idx, val = int(idx_s), float(val_s)
            except ValueError:
                raise ParseError(n, f"malformed feature {tok!r}") from None
            if idx < 1:
                raise ParseError(n, f"feature index {idx} must be >= 1")
            if idx <= last:
                raise ParseError(n, f"feature indices must be strictly ascending ({idx} after {last})")
            last = idx
            feats.append((idx - 1, val))
        out.append(LabeledVector(label, tuple(feats)))
    return out


def serialize_labeled(vectors):
    lines = []
    for v in vectors:
        label = repr(v.label)
        feats = " ".join(f"{i + 1}:{x!r}" for i, x in v.features)
        lines.append(f"{label} {feats}".rstrip())
    return "".join(line + "\n" for line in lines)


def infer_dimension(vectors):
    return max((v.dimension for v in vectors), default=0)


def device_of(key, n, seed):
    digest = hashlib.blake2b(f"{seed}:{key}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") % n


def shard(records, n, seed, key=lambda r: r.user_id):
    """Deterministically split records over ``n`` devices by hashed key."""
    if n < 1:
        raise ValueError("need at least one device")
    shards = [[] for _ in range(n)]
    for r in records:
        shards[device_of(key(r), n, seed)].append(r)
    return shards
