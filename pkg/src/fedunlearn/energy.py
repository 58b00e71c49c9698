"""Simulated device resources: DVFS levels, energy and latency models, theta-LRU paging."""
from __future__ import annotations

import csv
import json
import math
from collections import OrderedDict
from dataclasses import dataclass, field

from .errors import ConfigError

# max frequency (GHz) and core count of the reference phones
REFERENCE_DEVICES = {
    "Honor": (8, 2.11),
    "Lenovo": (4, 1.04),
    "ZTE": (4, 1.09),
    "Mi": (6, 1.44),
    "Nexus": (4, 2.65),
}


@dataclass(frozen=True)
class FrequencyLevel:
    freq_ghz: float
    coefficient: float  # energy units per utilization-second


@dataclass
class DeviceProfile:
    name: str
    core_count: int
    freq_levels: tuple[FrequencyLevel, ...]
    static_draws: tuple[tuple[str, float], ...] = ()
    A: float = 1e-3  # ms per weighted operation at the default level
    B: float = 5.0  # ms of fixed per-round overhead
    page_capacity: int = 64
    default_level: int | None = None

    def __post_init__(self):
        self.freq_levels = tuple(
            lvl if isinstance(lvl, FrequencyLevel) else FrequencyLevel(*lvl) for lvl in self.freq_levels
        )
        self.static_draws = tuple((str(n), float(p)) for n, p in self.static_draws)
        if not self.freq_levels:
            raise ConfigError(f"{self.name}.freq_levels", "need at least one level")
        freqs = [lvl.freq_ghz for lvl in self.freq_levels]
        coeffs = [lvl.coefficient for lvl in self.freq_levels]
        if any(f <= 0 for f in freqs) or any(b <= a for a, b in zip(freqs, freqs[1:])):
            raise ConfigError(f"{self.name}.freq_levels", "frequencies must be positive and strictly increasing")
        if any(c < 0 for c in coeffs) or any(b < a for a, b in zip(coeffs, coeffs[1:])):
            raise ConfigError(f"{self.name}.freq_levels", "coefficients must be non-negative and non-decreasing")
        if self.A < 0 or self.B < 0:
            raise ConfigError(f"{self.name}.A/B", "time constants must be non-negative")
        if any(p < 0 for _, p in self.static_draws):
            raise ConfigError(f"{self.name}.static_draws", "draws must be non-negative")
        if self.page_capacity < 1:
            raise ConfigError(f"{self.name}.page_capacity", "must be positive")
        if self.default_level is None:
            self.default_level = (len(self.freq_levels) - 1) // 2
        if not 0 <= self.default_level < len(self.freq_levels):
            raise ConfigError(f"{self.name}.default_level", "out of range")

    @property
    def n_levels(self):
        return len(self.freq_levels)

    @property
    def static_total(self):
        return sum(p for _, p in self.static_draws)

    def speedup(self, level):
        return self.freq_levels[level].freq_ghz / self.freq_levels[self.default_level].freq_ghz

    def to_dict(self):
        return {
            "name": self.name,
            "cores": self.core_count,
            "frequencies": [[lvl.freq_ghz, lvl.coefficient] for lvl in self.freq_levels],
            "static": [[n, p] for n, p in self.static_draws],
            "A": self.A,
            "B": self.B,
            "page_capacity": self.page_capacity,
            "default_level": self.default_level,
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(
                name=str(doc["name"]),
                core_count=int(doc["cores"]),
                freq_levels=tuple(FrequencyLevel(float(f), float(c)) for f, c in doc["frequencies"]),
                static_draws=tuple((n, float(p)) for n, p in doc.get("static", [])),
                A=float(doc.get("A", 1e-3)),
                B=float(doc.get("B", 5.0)),
                page_capacity=int(doc.get("page_capacity", 64)),
                default_level=doc.get("default_level"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"profile {doc.get('name', '?')}", f"malformed: {exc}") from exc


def cubic_profile(name, cores, max_ghz, n_levels=5, max_coefficient=1.0, min_fraction=0.4, **kwargs):
    """Profile whose power coefficient scales with the cube of frequency."""
    levels = []
    for j in range(n_levels):
        frac = min_fraction + (1.0 - min_fraction) * j / max(n_levels - 1, 1)
        levels.append(FrequencyLevel(round(max_ghz * frac, 6), max_coefficient * frac**3))
    kwargs.setdefault("static_draws", (("display", 0.02), ("radio", 0.03)))
    return DeviceProfile(name, cores, tuple(levels), **kwargs)


def builtin_profiles():
    return [cubic_profile(name, cores, ghz) for name, (cores, ghz) in REFERENCE_DEVICES.items()]


def load_profiles(path):
    """Read device profiles from a JSON list (or ``{"devices": [...]}``)."""
    with open(path) as fh:
        doc = json.load(fh)
    if isinstance(doc, dict):
        doc = doc.get("devices", [])
    if not isinstance(doc, list) or not doc:
        raise ConfigError("profiles", f"{path} holds no device documents")
    return [DeviceProfile.from_dict(d) for d in doc]


# -- DVFS -------------------------------------------------------------------------


@dataclass
class DvfsState:
    n_levels: int
    default_level: int
    level: int | None = None
    history: list[int] = field(default_factory=list)
    steps: int = 0

    def __post_init__(self):
        if self.level is None:
            self.level = self.default_level

    @classmethod
    def for_profile(cls, profile: DeviceProfile):
        return cls(profile.n_levels, profile.default_level)


def dvfs_step(state: DvfsState, delta: int) -> DvfsState:
    """+1 raises a level, -1 lowers one (both saturate), 0 resets to default."""
    if delta > 0:
        state.level = min(state.level + 1, state.n_levels - 1)
    elif delta < 0:
        state.level = max(state.level - 1, 0)
    else:
        state.level = state.default_level
    state.steps += 1
    state.history.append(state.level)
    return state


# -- time and energy ----------------------------------------------------------------


def training_time(profile: DeviceProfile, op_count, weight=1.0, level=None):
    """Round latency in ms: ``A * (w * F) / speedup + B``."""
    if level is None:
        level = profile.default_level
    return profile.A * (weight * op_count) / profile.speedup(level) + profile.B


def round_energy(profile: DeviceProfile, segments):
    """Energy over constant-level segments ``(level, utilization, seconds)``.

    Dynamic part ``coefficient(level) * utilization * seconds`` plus the static
    draws of the other components over the whole duration.
    """
    total = 0.0
    duration = 0.0
    for level, util, secs in segments:
        total += profile.freq_levels[level].coefficient * util * secs
        duration += secs
    return total + profile.static_total * duration


def execute_operations(profile: DeviceProfile, dvfs: DvfsState, operations, weight=1.0, utilization=1.0):
    """Run a sequence of ``(op_count, hooks)`` model operations on one device.

    Each operation runs at the current level; its DVFS hooks are applied once
    it finishes.  The fixed overhead ``B`` is charged as an idle segment.
    Returns ``(time_ms, segments, levels)``.
    """
    segments = [(dvfs.level, 0.0, profile.B / 1000.0)]
    time_ms = profile.B
    levels = [dvfs.level]
    for ops, hooks in operations:
        dt = profile.A * weight * ops / profile.speedup(dvfs.level)
        segments.append((dvfs.level, utilization, dt / 1000.0))
        time_ms += dt
        for h in hooks:
            dvfs_step(dvfs, h)
        if levels[-1] != dvfs.level:
            levels.append(dvfs.level)
    return time_ms, segments, levels


# -- paging ---------------------------------------------------------------------------


class ThetaLruCache:
    """Page cache whose victim is drawn from the oldest ``ceil(theta * capacity)`` pages."""

    def __init__(self, capacity, theta=1.0):
        if capacity < 1:
            raise ConfigError("page_capacity", "must be positive")
        if not 0 < theta <= 1:
            raise ConfigError("theta", "must lie in (0, 1]")
        self.capacity = int(capacity)
        self.theta = float(theta)
        self.pages: OrderedDict = OrderedDict()  # oldest first
        self.hits = 0
        self.faults = 0
        self.swaps = 0
        self.evicted: list = []

    @property
    def window(self):
        return max(1, math.ceil(self.theta * self.capacity))

    def access(self, page) -> bool:
        if page in self.pages:
            self.pages.move_to_end(page)
            self.hits += 1
            return True
        self.faults += 1
        if len(self.pages) >= self.capacity:
            candidates = []
            for p in self.pages:
                candidates.append(p)
                if len(candidates) == self.window:
                    break
            victim = candidates[0]  # least recently used inside the window
            del self.pages[victim]
            self.evicted.append(victim)
            self.swaps += 1
        self.pages[page] = None
        return False

    def run(self, trace):
        for page in trace:
            self.access(page)
        return self


def lru_access(cache: ThetaLruCache, page):
    return cache, cache.access(page)


class MemoryLayout:
    """Linear addresses of model entries, region by region."""

    def __init__(self, regions):
        self.offsets = {}
        self.shapes = {}
        offset = 0
        for name, shape in regions:
            self.offsets[name] = offset
            self.shapes[name] = shape
            offset += math.prod(shape)
        self.size = offset

    def address(self, name, *index):
        shape = self.shapes[name]
        flat = 0
        for i, n in zip(index, shape):
            flat = flat * n + i
        return self.offsets[name] + flat

    def region_range(self, name):
        start = self.offsets[name]
        return start, start + math.prod(self.shapes[name])


def layout_for(model):
    kind = model.kind
    if kind == "ppr":
        n = model.item_count
        return MemoryLayout([("v", (n,)), ("C", (n, n)), ("L", (n, n))])
    if kind == "ridge":
        d = model.dim
        return MemoryLayout([("z", (d,)), ("G", (d, d)), ("Q", (d, d)), ("R", (d, d)), ("h", (d,))])
    if kind == "mnb":
        return MemoryLayout([("N", (model.n_classes,)), ("F", (model.n_classes, model.vocab))])
    raise ValueError(f"no layout for {kind!r}")


def model_access_trace(layout: MemoryLayout, operation, entries, block=64):
    """Page ids touched by a model operation, in entry-touch order.

    An entry is ``(region, *index)``; a bare ``(region,)`` touches the whole
    region.  A ``retrain`` first sweeps every page, as a from-scratch build
    initializes all of its storage.  Consecutive repeats of a page collapse.
    """
    pages = []

    def emit(page):
        if not pages or pages[-1] != page:
            pages.append(page)

    if operation == "retrain":
        for p in range(-(-layout.size // block)):
            emit(p)
    for entry in entries:
        name, index = entry[0], entry[1:]
        if index:
            emit(layout.address(name, *index) // block)
        else:
            start, stop = layout.region_range(name)
            for p in range(start // block, (stop - 1) // block + 1):
                emit(p)
    return pages


# -- trace export -------------------------------------------------------------------


@dataclass
class EnergyRecord:
    round: int
    device: int
    time_ms: float
    energy: float
    levels: tuple[int, ...]
    page_faults: int
    page_swaps: int
    op_count: int
    hooks: int
    dvfs_steps: int


@dataclass
class EnergyTrace:
    records: list[EnergyRecord] = field(default_factory=list)

    COLUMNS = ["round", "device", "time_ms", "energy", "levels", "page_faults", "page_swaps",
               "op_count", "hooks", "dvfs_steps"]

    def add(self, record: EnergyRecord):
        self.records.append(record)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.COLUMNS)
            for r in self.records:
                writer.writerow([r.round, r.device, repr(r.time_ms), repr(r.energy),
                                 ";".join(map(str, r.levels)), r.page_faults, r.page_swaps,
                                 r.op_count, r.hooks, r.dvfs_steps])
