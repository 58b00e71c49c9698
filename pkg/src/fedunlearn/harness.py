"""Experiment runner: end-to-end federated runs, unlearning benchmarks,
recovery-attack demos and bandit-only simulations.

Every output file is a deterministic function of the configuration and seed.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import synth
from .bandit import AvailabilityModel, SelectionConfig, SelectionTrace, simulate_selection
from .dataio import binarize, infer_dimension, parse_labeled, parse_ratings, shard
from .energy import builtin_profiles, load_profiles, training_time
from .errors import ConfigError, InputDomainError
from .federation import FederationConfig, build_federation, run_summary, write_json, write_round_csv
from .models import Document, Observation, UserItems, build_model
from .models.ppr import PprModel
from .privacy import guess_from_neighbors, recover_deleted_items, user_similarity_leak

MODES = ("run", "bench", "attack", "select-sim")


class DatasetConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format: Literal["synthetic", "ratings", "labeled"] = "synthetic"
    path: str | None = None
    delimiter: str = "::"
    skip_header: bool = False
    threshold: float | None = None
    # synthetic generator sizes
    n_records: int = Field(400, ge=0)
    n_items: int = Field(30, ge=1)
    mean_items: int = Field(6, ge=1)
    dim: int = Field(8, ge=1)
    vocab: int = Field(20, ge=1)
    n_classes: int = Field(3, ge=1)

    @model_validator(mode="after")
    def _check(self):
        if self.format != "synthetic":
            if self.path is None:
                raise ValueError(f"a path is required for format {self.format!r}")
            if not Path(self.path).is_file():
                raise ValueError(f"file {self.path!r} does not exist")
        if self.format == "ratings" and self.threshold is None:
            raise ValueError("ratings datasets need an explicit binarization threshold")
        return self


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["ppr", "ridge", "mnb"] = "ppr"
    lam: float = 1.0
    alpha: float = 1.0
    top_k: int | None = None
    eval_k: int = Field(5, ge=1)

    @field_validator("lam")
    @classmethod
    def _lam(cls, v):
        if not v > 0:
            raise ValueError("lambda must be strictly positive")
        return v

    @field_validator("alpha")
    @classmethod
    def _alpha(cls, v):
        if not v > 0:
            raise ValueError("alpha must be strictly positive")
        return v


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["run", "bench", "attack", "select-sim"] = "run"
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    n_workers: int = Field(10, ge=1)
    m: int = Field(3, ge=1)
    ttl_ms: float = Field(1000.0, gt=0)
    epsilon: float = Field(1e-3, ge=0)
    rounds: int = Field(50, ge=0)
    theta: float = Field(0.3, ge=0, le=1)
    forget_every: int = Field(1, ge=1)
    initial_fraction: float = Field(0.5, ge=0, le=1)
    arrivals_per_round: int = Field(1, ge=0)
    holdout: float = Field(0.2, ge=0, lt=1)
    stop_on_convergence: bool = False
    profiles: str | None = None
    availability: float | list[float] = 1.0
    g: list[float] | None = None
    min_fraction: list[float] | None = None
    beta: float = Field(0.05, ge=0)
    reward_weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    reward_normalizers: tuple[float, float, float] = (100.0, 1000.0, 1.0)
    baseline: Literal["deal", "original", "newfl"] = "deal"
    seed: int = Field(0, ge=0, lt=2**64)
    out: str = "out"
    # bench
    bench_sizes: list[int] = Field(default_factory=lambda: [0, 100, 200, 400, 800])
    # attack
    delete_user: str | None = None
    min_similarity: float = Field(0.5, ge=0, le=1)
    # select-sim
    means: list[float] | None = None

    @field_validator("profiles")
    @classmethod
    def _profiles(cls, v):
        if v is not None and not Path(v).is_file():
            raise ValueError(f"file {v!r} does not exist")
        return v

    @model_validator(mode="after")
    def _check(self):
        if self.m > self.n_workers:
            raise ValueError(f"m={self.m} exceeds n_workers={self.n_workers}")
        if isinstance(self.availability, list):
            if len(self.availability) != self.n_workers:
                raise ValueError("availability needs one probability per worker")
            if any(not 0 <= p <= 1 for p in self.availability):
                raise ValueError("availability probabilities must lie in [0, 1]")
        elif not 0 <= self.availability <= 1:
            raise ValueError("availability must lie in [0, 1]")
        if abs(sum(self.reward_weights) - 1.0) > 1e-9 or min(self.reward_weights) < 0:
            raise ValueError("reward_weights must be non-negative and sum to 1")
        if min(self.reward_normalizers) <= 0:
            raise ValueError("reward_normalizers must be positive")
        if self.means is not None and (len(self.means) != self.n_workers
                                       or any(not 0 <= x <= 1 for x in self.means)):
            raise ValueError("means needs one value in [0, 1] per worker")
        return self

    def availability_vector(self):
        if isinstance(self.availability, list):
            return np.asarray(self.availability, dtype=float)
        return np.full(self.n_workers, float(self.availability))


def _field_name(loc):
    return ".".join(str(p) for p in loc) or "config"


def load_config(source=None, **overrides) -> ExperimentConfig:
    """Validate a config from a JSON file path or a dict, with top-level overrides."""
    if source is None:
        doc = {}
    elif isinstance(source, dict):
        doc = dict(source)
    else:
        try:
            doc = json.loads(Path(source).read_text())
        except FileNotFoundError:
            raise ConfigError("config", f"file {str(source)!r} does not exist") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    doc.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig.model_validate(doc)
    except ValidationError as exc:
        err = exc.errors()[0]
        raise ConfigError(_field_name(err["loc"]), err["msg"]) from None


# -- datasets ------------------------------------------------------------------------


class Dataset:
    """Model records plus the parameters needed to build an empty model."""

    def __init__(self, kind, records, params):
        self.kind = kind
        self.records = records
        self.params = params

    def empty_model(self):
        return build_model(self.kind, **self.params)

    def fit(self, records):
        return type(self.empty_model()).fit(records, **self.params)


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    ds, mc = cfg.dataset, cfg.model
    kind = mc.kind
    if ds.format == "synthetic":
        if kind == "ppr":
            recs = synth.user_items(ds.n_records, ds.n_items, ds.mean_items, seed=cfg.seed)
            return Dataset(kind, recs, {"item_count": ds.n_items, "top_k": mc.top_k})
        if kind == "ridge":
            recs, _ = synth.regression_rows(ds.n_records, ds.dim, seed=cfg.seed)
            return Dataset(kind, recs, {"dim": ds.dim, "lam": mc.lam})
        recs = synth.count_documents(ds.n_records, ds.n_classes, ds.vocab, seed=cfg.seed)
        return Dataset(kind, recs, {"n_classes": ds.n_classes, "vocab": ds.vocab, "alpha": mc.alpha})

    with open(ds.path, encoding="utf-8", newline="") as fh:
        if ds.format == "ratings":
            if kind != "ppr":
                raise ConfigError("model.kind", "ratings datasets feed the ppr model")
            history = binarize(parse_ratings(fh, ds.delimiter, ds.skip_header), ds.threshold)
            return Dataset(kind, history.users, {"item_count": history.item_count, "top_k": mc.top_k})
        vectors = parse_labeled(fh)
    dim = infer_dimension(vectors)
    if kind == "ridge":
        recs = []
        for u, vec in enumerate(vectors):
            row = np.zeros(dim)
            for j, x in vec.features:
                row[j] = x
            recs.append(Observation(u, tuple(row.tolist()), vec.label))
        return Dataset(kind, recs, {"dim": max(dim, 1), "lam": mc.lam})
    if kind == "mnb":
        labels = sorted({v.label for v in vectors})
        index = {lab: c for c, lab in enumerate(labels)}
        recs = []
        for u, vec in enumerate(vectors):
            counts = []
            for j, x in vec.features:
                if x < 0 or x != int(x):
                    raise ConfigError("dataset", f"record {u + 1}: feature {j + 1} value {x} is not a count")
                counts.append((j, int(x)))
            recs.append(Document(u, counts, index[vec.label]))
        return Dataset(kind, recs, {"n_classes": max(len(labels), 1), "vocab": max(dim, 1), "alpha": mc.alpha})
    raise ConfigError("model.kind", "labeled datasets feed the ridge or mnb model")


def holdout_split(records, fraction, seed):
    """Seeded user-level split: ``(train, test)`` with about ``fraction`` held out."""
    if fraction <= 0:
        return list(records), []
    ids = sorted({r.user_id for r in records}, key=str)
    rng = np.random.default_rng([seed, 0x5EED])
    n_test = int(round(fraction * len(ids)))
    test_ids = {ids[i] for i in rng.permutation(len(ids))[:n_test]}
    train = [r for r in records if r.user_id not in test_ids]
    test = [r for r in records if r.user_id in test_ids]
    return train, test


def evaluate(model, test, k=5):
    """RMSE (ridge), hit-rate@k (ppr, leave-last-item-out) or accuracy (mnb)."""
    if not test:
        return None
    if model.kind == "ridge":
        err = [(model.predict(o.row) - o.target) ** 2 for o in test]
        return {"metric": "rmse", "value": math.sqrt(sum(err) / len(err))}
    if model.kind == "mnb":
        hits = sum(model.predict(d.counts) == d.label for d in test)
        return {"metric": "accuracy", "value": hits / len(test)}
    hits = trials = 0
    for u in test:
        if len(u.items) < 2:
            continue
        held = u.items[-1]
        trials += 1
        hits += held in model.recommend(u.items[:-1], k)
    return {"metric": f"hit_rate@{k}", "value": hits / trials if trials else 0.0}


def _profiles(cfg):
    return load_profiles(cfg.profiles) if cfg.profiles else builtin_profiles()


# -- modes -----------------------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig, out_dir=None):
    """End-to-end federated run; writes rounds.csv, energy.csv, selection.csv, summary.json."""
    out = Path(out_dir or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    data = load_dataset(cfg)
    train, test = holdout_split(data.records, cfg.holdout, cfg.seed)
    shards = shard(train, cfg.n_workers, cfg.seed)
    initial, streams = [], []
    for s in shards:
        cut = int(math.floor(cfg.initial_fraction * len(s)))
        initial.append(s[:cut])
        streams.append(s[cut:])
    fcfg = FederationConfig(
        model_kind=data.kind, model_params=data.params, m=cfg.m, ttl_ms=cfg.ttl_ms, epsilon=cfg.epsilon,
        rounds=cfg.rounds, theta=cfg.theta, baseline=cfg.baseline, forget_every=cfg.forget_every,
        beta=cfg.beta, g=cfg.g, min_fraction=cfg.min_fraction, reward_weights=cfg.reward_weights,
        reward_normalizers=cfg.reward_normalizers, stop_on_convergence=cfg.stop_on_convergence,
    )
    fed = build_federation(data.empty_model(), _profiles(cfg), initial, streams, fcfg,
                           cfg.availability_vector(), seed=cfg.seed,
                           arrivals_per_round=cfg.arrivals_per_round, trace_selection=True)
    fed.run()
    n = cfg.n_workers
    write_round_csv(out / "rounds.csv", fed.server.log, n)
    fed.energy_trace.write_csv(out / "energy.csv")
    fed.selection_trace.write_csv(out / "selection.csv")
    summary = run_summary(fed, {
        "seed": cfg.seed,
        "accuracy": evaluate(fed.server.model, test, cfg.model.eval_k),
        "n_workers": n,
    })
    write_json(out / "summary.json", summary)
    return summary


BENCH_COLUMNS = ["model", "s", "decremental_ops", "retrain_ops", "newdata_ops", "decremental_ms",
                 "retrain_ms", "newdata_ms", "retrain_over_decremental", "retrain_over_newdata", "forget_bound"]


def bench_row(data: Dataset, records, s, profile):
    """Costs of one forget+update step against a shard of ``s`` records.

    (a) decremental: forget the oldest record, add one new record;
    (b) retrain: build from scratch on the surviving records plus the new one;
    (c) new-data-only: build on the new record alone.
    """
    shard_recs = records[:s]
    new = records[s:s + 1] if s else []
    model = data.fit(shard_recs)
    model.op_count = 0
    bound = None
    if shard_recs:
        victim = shard_recs[0]
        model.forget(victim)
        if data.kind == "ppr":
            y = len(victim.items)
            bound = y * y + y * data.params["item_count"]
    for rec in new:
        model.update(rec)
    dec = model.op_count
    survivors = shard_recs[1:] + new
    ret = data.fit(survivors).op_count if survivors else 0
    newonly = data.fit(new).op_count if new else 0

    def ms(ops):
        return training_time(profile, ops)

    return [data.kind, s, dec, ret, newonly, ms(dec), ms(ret), ms(newonly),
            ret / dec if dec else None, ret / newonly if newonly else None, bound]


def unlearn_bench(cfg: ExperimentConfig, out_dir=None):
    """Op-count and simulated-time table for decremental vs retrain vs new-data-only."""
    out = Path(out_dir or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    data = load_dataset(cfg)
    need = max(cfg.bench_sizes, default=0) + 1
    if len(data.records) < need:
        raise ConfigError("bench_sizes", f"dataset has {len(data.records)} records, need {need}")
    profile = _profiles(cfg)[0]
    rows = [bench_row(data, data.records, s, profile) for s in sorted(cfg.bench_sizes)]
    with open(out / "bench.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BENCH_COLUMNS)
        for r in rows:
            writer.writerow(["" if x is None else (repr(x) if isinstance(x, float) else x) for x in r])
    return [dict(zip(BENCH_COLUMNS, r)) for r in rows]


def attack_demo(cfg: ExperimentConfig, out_dir=None):
    """Delete one user, then recover their items from the stale similarity model."""
    out = Path(out_dir or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.model.kind != "ppr":
        raise ConfigError("model.kind", "the attack demo needs a ratings (ppr) dataset")
    data = load_dataset(cfg)
    users = data.records
    target = cfg.delete_user if cfg.delete_user is not None else (str(users[0].user_id) if users else None)
    victim = next((u for u in users if str(u.user_id) == target), None)
    if victim is None:
        raise InputDomainError(f"user {target!r} is not in the dataset")
    item_count = data.params["item_count"]
    stale = PprModel.fit(users, item_count)
    remaining = [u for u in users if u is not victim]
    report = recover_deleted_items(stale, remaining, item_count, ground_truth=victim.items)
    # attacker re-inserts the recovered history to look for similar users
    probe = UserItems("__recovered__", report.recovered)
    neighbors, guessed = guess_from_neighbors(probe.user_id, remaining + [probe], cfg.min_similarity)
    leak = [(str(a), str(b), s) for a, b, s in user_similarity_leak(remaining + [probe])
            if probe.user_id in (a, b)][:5]
    doc = {
        "deleted_user": target,
        "recovery": report.to_dict(),
        "similar_users": [[str(uid), s] for uid, s in neighbors],
        "guessed_items": guessed,
        "top_pairs": [list(p) for p in leak],
    }
    write_json(out / "attack.json", doc)
    return doc


def select_sim(cfg: ExperimentConfig, out_dir=None):
    """Bandit-only run with Bernoulli rewards; writes selection.csv and summary.json."""
    out = Path(out_dir or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    means = np.asarray(cfg.means) if cfg.means is not None else rng.uniform(0.1, 0.9, cfg.n_workers)
    sel = SelectionConfig(cfg.n_workers, cfg.m, g=cfg.g, r=cfg.min_fraction, beta=cfg.beta, seed=cfg.seed)
    sim_rng = np.random.default_rng([cfg.seed, 1])
    avail = AvailabilityModel(cfg.availability_vector(), np.random.default_rng([cfg.seed, 2]))
    trace = SelectionTrace(cfg.n_workers)
    res = simulate_selection(sel, means, cfg.rounds, availability=avail, trace=trace, rng=sim_rng)
    trace.write_csv(out / "selection.csv")
    doc = {
        "rounds": cfg.rounds,
        "means": [float(x) for x in means],
        "average_q": res["average_q"],
        "clairvoyant_q": res["clairvoyant_q"],
        "fractions": [float(x) for x in res["fractions"]],
        "seed": cfg.seed,
    }
    write_json(out / "summary.json", doc)
    return doc


RUNNERS = {"run": run_experiment, "bench": unlearn_bench, "attack": attack_demo, "select-sim": select_sim}


def run_mode(cfg: ExperimentConfig, mode=None, out_dir=None):
    return RUNNERS[mode or cfg.mode](cfg, out_dir)


__all__ = ["ExperimentConfig", "load_config", "load_dataset", "holdout_split", "evaluate", "run_experiment",
           "unlearn_bench", "attack_demo", "select_sim", "run_mode"]
