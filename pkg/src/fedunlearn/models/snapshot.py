"""Deterministic text snapshots of model state.

Layout: one header line ``fedunlearn-snapshot <version> <kind> key=value ...``
followed by one whitespace-separated record per stored entry in ascending key
order.  Floats are written with ``repr`` so a load/dump round trip is exact.
"""
from __future__ import annotations

import numpy as np

from ..errors import ParseError
from .mnb import MnbModel
from .ppr import PprModel
from .ridge import RidgeModel

MAGIC = "fedunlearn-snapshot"
VERSION = 1
TAGS = {"ppr": {"v", "C", "L"}, "ridge": {"z", "G", "Q", "R", "h"}, "mnb": {"N", "F"}}


def _header(kind, **fields):
    parts = [MAGIC, str(VERSION), kind]
    parts += [f"{k}={v}" for k, v in fields.items()]
    return " ".join(parts)


def _matrix_lines(tag, mat, upper=False):
    n, m = mat.shape
    for i in range(n):
        for j in range(i if upper else 0, m):
            yield f"{tag} {i} {j} {float(mat[i, j])!r}"


def to_snapshot(model) -> str:
    lines = []
    if isinstance(model, PprModel):
        top_k = "none" if model.top_k is None else model.top_k
        lines.append(_header("ppr", items=model.item_count, top_k=top_k))
        lines += [f"v {i} {c}" for i, c in enumerate(model.v) if c]
        lines += [f"C {a} {b} {c}" for (a, b), c in sorted(model.C.items())]
        lines += [f"L {a} {b} {s!r}" for (a, b), s in sorted(model.similarity_entries().items())]
    elif isinstance(model, RidgeModel):
        lines.append(_header("ridge", dim=model.dim, **{"lambda": repr(model.lam)}, rows=model.n_rows,
                             refactors=model.refactor_count))
        lines += [f"z {i} {float(x)!r}" for i, x in enumerate(model.z)]
        lines += list(_matrix_lines("G", model.gram, upper=True))
        lines += list(_matrix_lines("Q", model.Q))
        lines += list(_matrix_lines("R", model.R, upper=True))
        lines += [f"h {i} {float(x)!r}" for i, x in enumerate(model.h)]
    elif isinstance(model, MnbModel):
        lines.append(_header("mnb", classes=model.n_classes, vocab=model.vocab, alpha=repr(model.alpha)))
        lines += [f"N {c} {int(n)}" for c, n in enumerate(model.class_counts) if n]
        rows, cols = np.nonzero(model.feature_counts)
        lines += [f"F {c} {f} {int(model.feature_counts[c, f])}" for c, f in zip(rows, cols)]
    else:
        raise TypeError(f"cannot snapshot {type(model).__name__}")
    return "\n".join(lines) + "\n"


def _parse_header(line):
    parts = line.split()
    if len(parts) < 3 or parts[0] != MAGIC:
        raise ParseError(1, "missing snapshot header")
    if parts[1] != str(VERSION):
        raise ParseError(1, f"unsupported snapshot version {parts[1]}")
    fields = {}
    for token in parts[3:]:
        key, _, value = token.partition("=")
        fields[key] = value
    return parts[2], fields


def from_snapshot(text: str):
    lines = text.splitlines()
    if not lines:
        raise ParseError(1, "empty snapshot")
    kind, fields = _parse_header(lines[0])
    records = [(n, line.split()) for n, line in enumerate(lines[1:], start=2) if line.strip()]
    allowed = TAGS.get(kind)
    if allowed is None:
        raise ParseError(1, f"unknown model kind {kind!r}")
    for n, rec in records:
        if rec[0] not in allowed:
            raise ParseError(n, f"unexpected record {rec[0]!r} in a {kind} snapshot")
    try:
        if kind == "ppr":
            top_k = None if fields["top_k"] == "none" else int(fields["top_k"])
            model = PprModel(int(fields["items"]), top_k=top_k)
            entries = {}
            for _, rec in records:
                if rec[0] == "v":
                    model.v[int(rec[1])] = int(rec[2])
                elif rec[0] == "C":
                    a, b = int(rec[1]), int(rec[2])
                    model.C[(a, b)] = int(rec[3])
                    model.neighbors[a].add(b)
                    model.neighbors[b].add(a)
                elif rec[0] == "L":
                    entries[(int(rec[1]), int(rec[2]))] = float(rec[3])
            if top_k is None:
                model.L = {k: s for k, s in entries.items() if k[0] < k[1]}
            else:
                for (i, j), s in entries.items():
                    model.rows.setdefault(i, []).append((j, s))
                for i in model.rows:
                    model.rows[i].sort(key=lambda e: (-e[1], e[0]))
            return model
        if kind == "ridge":
            d = int(fields["dim"])
            model = RidgeModel(d, lam=float(fields["lambda"]))
            model.n_rows = int(fields["rows"])
            model.refactor_count = int(fields.get("refactors", 0))
            model.R = np.zeros((d, d))
            model.gram = np.zeros((d, d))
            for _, rec in records:
                tag = rec[0]
                if tag in ("z", "h"):
                    getattr(model, tag)[int(rec[1])] = float(rec[2])
                elif tag == "G":
                    i, j, x = int(rec[1]), int(rec[2]), float(rec[3])
                    model.gram[i, j] = model.gram[j, i] = x
                elif tag in ("Q", "R"):
                    getattr(model, tag)[int(rec[1]), int(rec[2])] = float(rec[3])
            return model
        if kind == "mnb":
            model = MnbModel(int(fields["classes"]), int(fields["vocab"]), float(fields["alpha"]))
            for _, rec in records:
                if rec[0] == "N":
                    model.class_counts[int(rec[1])] = int(rec[2])
                elif rec[0] == "F":
                    model.feature_counts[int(rec[1]), int(rec[2])] = int(rec[3])
            return model
    except (KeyError, IndexError, ValueError) as exc:
        raise ParseError(1, f"malformed {kind} snapshot: {exc}") from exc
