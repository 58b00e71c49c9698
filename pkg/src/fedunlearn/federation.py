"""Round-based server/worker orchestration with TTL and majority-triggered aggregation.

Workers exchange sufficient-statistic deltas, so the server model after any
sequence of rounds equals a from-scratch build over every record the workers
currently hold.  A worker's local changes are committed only when its delta
is aggregated; late (sleeping) workers recompute from the latest snapshot the
next time they are selected.
"""
from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .bandit import (AvailabilityModel, BanditState, SelectionConfig, SelectionTrace, bitmask,
                     composite_reward, observe_rewards, select_workers, ucb_estimates)
from .energy import (DeviceProfile, DvfsState, EnergyRecord, EnergyTrace, ThetaLruCache,
                     execute_operations, layout_for, model_access_trace, round_energy)
from .errors import ConfigError, ConsistencyError, InputDomainError
from .models import delta_from_records

BASELINES = ("deal", "original", "newfl")


@dataclass
class FederationConfig:
    model_kind: str
    model_params: dict
    m: int
    ttl_ms: float = 1000.0
    epsilon: float = 1e-3
    rounds: int = 100
    theta: float = 0.3
    baseline: str = "deal"
    forget_every: int = 1
    weight: float = 1.0
    beta: float = 0.05
    g: list | None = None
    min_fraction: list | None = None
    reward_weights: tuple = (1 / 3, 1 / 3, 1 / 3)
    reward_normalizers: tuple = (100.0, 1000.0, 1.0)
    stop_on_convergence: bool = False
    page_block: int = 64
    trace_pages: bool = True

    def __post_init__(self):
        if self.baseline not in BASELINES:
            raise ConfigError("baseline", f"must be one of {BASELINES}")
        if not 0 <= self.theta <= 1:
            raise ConfigError("theta", "must lie in [0, 1]")
        if self.baseline == "newfl":
            self.theta = 1.0
        elif self.baseline == "original":
            self.theta = 0.0
        if self.forget_every < 1:
            raise ConfigError("forget_every", "must be positive")
        if self.ttl_ms <= 0:
            raise ConfigError("ttl_ms", "must be positive")


@dataclass
class WorkerState:
    """A simulated device with its data, DVFS state and page cache."""

    device: int
    profile: DeviceProfile
    theta: float
    incorporated: deque = field(default_factory=deque)  # oldest first
    pending: deque = field(default_factory=deque)
    stream: deque = field(default_factory=deque)
    arrivals_per_round: int = 0
    replica: object = None
    replica_version: int = -1
    steps: int = 0
    dvfs: DvfsState = None
    cache: ThetaLruCache = None

    def __post_init__(self):
        if self.dvfs is None:
            self.dvfs = DvfsState.for_profile(self.profile)
        if self.cache is None:
            self.cache = ThetaLruCache(self.profile.page_capacity, theta=self.theta if self.theta > 0 else 1.0)

    def receive_arrivals(self):
        for _ in range(min(self.arrivals_per_round, len(self.stream))):
            self.pending.append(self.stream.popleft())


@dataclass
class LocalResult:
    device: int
    delta: object
    time_ms: float
    energy: float
    replica: object
    forgotten: list
    added: list
    op_count: int
    hooks: int
    dvfs_steps: int
    levels: tuple
    page_faults: int
    page_swaps: int

    @property
    def data_volume(self):
        return len(self.added)


def _forget_count(worker: WorkerState, cfg: FederationConfig):
    if worker.theta <= 0 or (worker.steps + 1) % cfg.forget_every:
        return 0
    return min(len(worker.incorporated), math.ceil(worker.theta * len(worker.incorporated)))


def _fit(model_kind, records, params, trace):
    from .models import MnbModel, PprModel, RidgeModel
    cls = {"ppr": PprModel, "ridge": RidgeModel, "mnb": MnbModel}[model_kind]
    return cls.fit(records, **params, trace=trace)


def local_step(worker: WorkerState, version: int, snapshot, cfg: FederationConfig) -> LocalResult:
    """Run one worker's local round against the published model.

    The worker adopts ``snapshot``, forgets its oldest ``ceil(theta * n)``
    incorporated records and incorporates everything pending.  Under the
    ``original`` baseline the cost is instead that of retraining on the full
    local data.  Worker bookkeeping is not changed here; see ``commit``.
    """
    if worker.replica is not None and version < worker.replica_version:
        raise InputDomainError("snapshot older than the worker's replica")
    n_forget = _forget_count(worker, cfg)
    forgotten = [worker.incorporated[i] for i in range(n_forget)]
    added = list(worker.pending)
    replica = snapshot.copy()
    entries: list | None = [] if cfg.trace_pages else None
    operations = []
    replica.trace = entries
    try:
        for rec in forgotten:
            before = replica.op_count
            replica.forget(rec)
            operations.append((replica.op_count - before, replica.drain_hooks()))
        for rec in added:
            before = replica.op_count
            replica.update(rec)
            operations.append((replica.op_count - before, replica.drain_hooks()))
    except ConsistencyError as exc:
        raise ConsistencyError(str(exc), device=worker.device) from exc
    replica.trace = None
    op_kind = "forget" if forgotten else "update"
    if cfg.baseline == "original":
        local = list(worker.incorporated)[n_forget:] + added
        entries = [] if cfg.trace_pages else None
        params = _fit_params(snapshot)
        retrained = _fit(snapshot.kind, local, params, entries)
        operations = [(retrained.op_count, [])] if local else []
        op_kind = "retrain"

    worker.dvfs.level = worker.dvfs.default_level
    steps_before = worker.dvfs.steps
    time_ms, segments, levels = execute_operations(worker.profile, worker.dvfs, operations, weight=cfg.weight)
    energy = round_energy(worker.profile, segments)
    faults0, swaps0 = worker.cache.faults, worker.cache.swaps
    if entries:
        pages = model_access_trace(layout_for(snapshot), op_kind, entries, block=cfg.page_block)
        worker.cache.run(pages)
    return LocalResult(
        device=worker.device,
        delta=delta_from_records(snapshot.kind, removed=forgotten, added=added),
        time_ms=time_ms,
        energy=energy,
        replica=replica,
        forgotten=forgotten,
        added=added,
        op_count=sum(ops for ops, _ in operations),
        hooks=sum(len(h) for _, h in operations),
        dvfs_steps=worker.dvfs.steps - steps_before,
        levels=tuple(levels),
        page_faults=worker.cache.faults - faults0,
        page_swaps=worker.cache.swaps - swaps0,
    )


def _fit_params(model):
    if model.kind == "ppr":
        return {"item_count": model.item_count, "top_k": model.top_k}
    if model.kind == "ridge":
        return {"dim": model.dim, "lam": model.lam}
    return {"n_classes": model.n_classes, "vocab": model.vocab, "alpha": model.alpha}


def commit(worker: WorkerState, result: LocalResult, version: int):
    """Make an aggregated local result the worker's new state."""
    for _ in result.forgotten:
        worker.incorporated.popleft()
    for _ in result.added:
        worker.pending.popleft()
    worker.incorporated.extend(result.added)
    worker.replica = result.replica
    worker.replica_version = version
    worker.steps += 1


def aggregate(model, deltas):
    """Apply ``(device, delta)`` pairs in ascending device order."""
    for device, delta in sorted(deltas, key=lambda e: e[0]):
        model.apply_delta(delta, device=device)
    return model


def convergence_metric(previous, current) -> float:
    if previous.kind != current.kind:
        raise InputDomainError(f"cannot compare {previous.kind} with {current.kind}")
    if current.kind == "ridge":
        if previous.dim != current.dim:
            raise InputDomainError("dimension mismatch")
        return float(np.linalg.norm(current.h - previous.h) / (1.0 + np.linalg.norm(previous.h)))
    if current.kind == "ppr":
        if previous.item_count != current.item_count:
            raise InputDomainError("item count mismatch")
        a, b = previous.similarity_entries(), current.similarity_entries()
        return max((abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in set(a) | set(b)), default=0.0)
    if (previous.n_classes, previous.vocab) != (current.n_classes, current.vocab):
        raise InputDomainError("shape mismatch")
    (pa, fa), (pb, fb) = previous.frequencies(), current.frequencies()
    return float(max(np.abs(pa - pb).max(), np.abs(fa - fb).max()))


@dataclass
class WorkerOutcome:
    time_ms: float
    energy: float
    delta: dict
    aggregated: bool
    op_count: int


@dataclass
class RoundRecord:
    k: int
    available: list[int]
    selected: list[int]
    outcomes: dict[int, WorkerOutcome]
    q: float
    aggregated: bool
    convergence: float | None
    time_ms: float
    version: int
    privacy_proportion: float | None

    @property
    def responders(self):
        return sorted(i for i, o in self.outcomes.items() if o.aggregated)

    @property
    def energy(self):
        return sum(o.energy for o in self.outcomes.values())

    @property
    def op_count(self):
        return sum(o.op_count for o in self.outcomes.values())


@dataclass
class ServerState:
    model: object
    cfg: FederationConfig
    selection: SelectionConfig
    bandit: BanditState
    version: int = 0
    k: int = 0
    log: list[RoundRecord] = field(default_factory=list)
    below_epsilon: int = 0
    converged_round: int | None = None


def _responders(results, ttl):
    """Aggregation set and simulated round duration (strict majority or TTL)."""
    if not results:
        return [], 0.0
    majority = len(results) // 2 + 1
    in_time = sorted((r for r in results if r.time_ms <= ttl), key=lambda r: (r.time_ms, r.device))
    if len(in_time) >= majority:
        chosen = in_time[:majority]
        return chosen, chosen[-1].time_ms
    return in_time, ttl


def run_round(server: ServerState, workers, availability: AvailabilityModel, k=None, selection_trace=None):
    cfg = server.cfg
    if k is not None and k != server.k:
        raise InputDomainError(f"round {k} does not match server round {server.k}")
    k = server.k
    for w in workers:
        w.receive_arrivals()
    available = availability.draw()
    selected = select_workers(server.bandit, available, server.selection, k)
    estimates = ucb_estimates(server.bandit, k) if selection_trace is not None else None
    snapshot = server.model
    results = [local_step(workers[i], server.version, snapshot, cfg) for i in selected]
    chosen, duration = _responders(results, cfg.ttl_ms)
    chosen_ids = {r.device for r in chosen}

    convergence = None
    proportion = None
    if chosen:
        previous = server.model.copy()
        aggregate(server.model, [(r.device, r.delta) for r in chosen])
        server.version += 1
        for r in sorted(chosen, key=lambda r: r.device):
            commit(workers[r.device], r, server.version)
        convergence = convergence_metric(previous, server.model)
        if convergence < cfg.epsilon:
            server.below_epsilon += 1
        else:
            server.below_epsilon = 0
        if server.below_epsilon >= 3 and server.converged_round is None:
            server.converged_round = k
        # share of the participating workers' data that arrived this round
        total = sum(len(workers[r.device].incorporated) for r in chosen)
        fresh = sum(len(r.added) for r in chosen)
        proportion = fresh / total if total else None

    rewards = {}
    for r in results:
        if r.device in chosen_ids:
            rewards[r.device] = composite_reward(r.time_ms, r.energy, r.data_volume,
                                                 cfg.reward_weights, cfg.reward_normalizers)
        else:
            rewards[r.device] = 0.0
    _, q = observe_rewards(server.bandit, selected, rewards, server.selection)
    if selection_trace is not None:
        selection_trace.record(k, available, selected, estimates, q)

    outcomes = {
        r.device: WorkerOutcome(r.time_ms, r.energy, r.delta.summary(), r.device in chosen_ids, r.op_count)
        for r in results
    }
    record = RoundRecord(k, available, selected, outcomes, q, bool(chosen), convergence, duration,
                         server.version, proportion)
    server.log.append(record)
    server.k += 1
    return record, results


@dataclass
class Federation:
    """A server, its workers and the availability process, advanced round by round."""

    server: ServerState
    workers: list[WorkerState]
    availability: AvailabilityModel
    energy_trace: EnergyTrace = field(default_factory=EnergyTrace)
    selection_trace: SelectionTrace | None = None

    def step(self):
        record, results = run_round(self.server, self.workers, self.availability,
                                    selection_trace=self.selection_trace)
        for r in results:
            self.energy_trace.add(EnergyRecord(record.k, r.device, r.time_ms, r.energy, r.levels,
                                               r.page_faults, r.page_swaps, r.op_count, r.hooks,
                                               r.dvfs_steps))
        return record

    def run(self, rounds=None, on_round=None):
        rounds = self.server.cfg.rounds if rounds is None else rounds
        for _ in range(rounds):
            record = self.step()
            if on_round is not None:
                on_round(self, record)
            if self.server.cfg.stop_on_convergence and self.server.converged_round is not None:
                break
        return self.server.log

    def incorporated_records(self):
        return [rec for w in self.workers for rec in w.incorporated]


def build_federation(model, profiles, initial, streams, cfg: FederationConfig, availability_p,
                     seed=0, arrivals_per_round=1, trace_selection=False):
    """Wire up a federation.

    ``initial[i]`` are device ``i``'s records incorporated before round 0 (the
    server model is built from them); ``streams[i]`` arrive afterwards,
    ``arrivals_per_round`` per round.
    """
    n = len(initial)
    rng = np.random.default_rng(seed)
    avail_rng = rng.spawn(1)[0]
    workers = []
    for i in range(n):
        profile = profiles[i % len(profiles)]
        workers.append(WorkerState(i, profile, cfg.theta, deque(initial[i]), deque(), deque(streams[i]),
                                   arrivals_per_round))
    for w in workers:
        for rec in w.incorporated:
            model.update(rec)
    model.op_count = 0
    model.drain_hooks()
    selection = SelectionConfig(n, min(cfg.m, n), g=cfg.g, r=cfg.min_fraction, beta=cfg.beta, seed=seed)
    server = ServerState(model, cfg, selection, BanditState(n))
    for w in workers:
        w.replica = None
        w.replica_version = 0
    availability = AvailabilityModel(availability_p, avail_rng)
    trace = SelectionTrace(n) if trace_selection else None
    return Federation(server, workers, availability, selection_trace=trace)


ROUND_COLUMNS = ["k", "available_count", "selected_mask", "responders_mask", "time_ms", "time_norm", "Q",
                 "convergence", "round_energy", "cumulative_energy", "op_count", "privacy_proportion",
                 "aggregated", "version"]


def round_rows(log, n):
    times = [r.time_ms for r in log]
    lo, hi = (min(times), max(times)) if times else (0.0, 0.0)
    cumulative = 0.0
    rows = []
    for r in log:
        cumulative += r.energy
        norm = (r.time_ms - lo) / (hi - lo) if hi > lo else 0.0
        rows.append([
            r.k, len(r.available), bitmask(r.selected, n), bitmask(r.responders, n), repr(float(r.time_ms)),
            repr(float(norm)), repr(float(r.q)), "" if r.convergence is None else repr(float(r.convergence)),
            repr(float(r.energy)), repr(float(cumulative)), r.op_count,
            "" if r.privacy_proportion is None else repr(float(r.privacy_proportion)),
            int(r.aggregated), r.version,
        ])
    return rows


def write_round_csv(path, log, n):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ROUND_COLUMNS)
        writer.writerows(round_rows(log, n))


def run_summary(federation: Federation, extra=None):
    log = federation.server.log
    total_time = 0.0
    total_energy = 0.0
    total_ops = 0
    for r in log:
        total_time += float(r.time_ms)
        total_energy += float(r.energy)
        total_ops += r.op_count
    summary = {
        "rounds": len(log),
        "aggregated_rounds": sum(1 for r in log if r.aggregated),
        "total_time_ms": total_time,
        "total_energy": total_energy,
        "total_q": sum(float(r.q) for r in log),
        "total_ops": total_ops,
        "convergence_round": federation.server.converged_round,
        "final_version": federation.server.version,
        "privacy_proportion": [r.privacy_proportion for r in log],
        "incorporated_records": len(federation.incorporated_records()),
        "baseline": federation.server.cfg.baseline,
        "model": federation.server.model.kind,
    }
    if extra:
        summary.update(extra)
    return summary


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
