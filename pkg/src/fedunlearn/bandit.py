"""Worker selection as a combinatorial bandit with minimum-selection-fraction queues.

Each round the server sees the available devices ``G(k)`` and picks at most
``m`` of them.  Scores combine a truncated UCB estimate of each device's mean
reward, weighted by ``g_i``, with a virtual queue ``Z_i`` that grows while a
device falls behind its minimum selection fraction ``r_i``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputDomainError


@dataclass
class SelectionConfig:
    """Static selection parameters.

    ``g`` defaults to all ones and ``r`` to all zeros.
    """

    n: int
    m: int
    g: np.ndarray | None = None
    r: np.ndarray | None = None
    beta: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n", "need at least one device")
        if not 0 < self.m <= self.n:
            raise ConfigError("m", f"must satisfy 0 < m <= n (got m={self.m}, n={self.n})")
        self.g = np.ones(self.n) if self.g is None else np.asarray(self.g, dtype=float)
        self.r = np.zeros(self.n) if self.r is None else np.asarray(self.r, dtype=float)
        if self.g.shape != (self.n,) or np.any(self.g <= 0):
            raise ConfigError("g", "need one strictly positive weight per device")
        if self.r.shape != (self.n,) or np.any(self.r < 0) or np.any(self.r >= 1):
            raise ConfigError("r", "need one fraction in [0, 1) per device")
        if self.r.sum() > self.m + 1e-12:
            raise ConfigError("r", f"sum of minimum fractions {self.r.sum():.3f} exceeds m={self.m}")
        if self.beta < 0:
            raise ConfigError("beta", "must be non-negative")

    @property
    def g_max(self):
        return float(self.g.max())


@dataclass
class BanditState:
    """Per-device selection counts, reward sums and fairness queues."""

    n: int
    k: int = 0
    counts: np.ndarray = field(default=None)
    reward_sums: np.ndarray = field(default=None)
    queues: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros(self.n, dtype=np.int64)
        if self.reward_sums is None:
            self.reward_sums = np.zeros(self.n)
        if self.queues is None:
            self.queues = np.zeros(self.n)

    @property
    def mu_hat(self):
        """Empirical means, 1 for devices never selected."""
        out = np.ones(self.n)
        played = self.counts > 0
        out[played] = self.reward_sums[played] / self.counts[played]
        return out

    def copy(self):
        return BanditState(self.n, self.k, self.counts.copy(), self.reward_sums.copy(), self.queues.copy())


def ucb_estimates(state: BanditState, k: int) -> np.ndarray:
    """Truncated UCB estimate for every device at round ``k``.

    ``min(mu_hat + sqrt(3 log k / (2 c)), 1)`` using counts up to round
    ``k - 1``; devices never selected get 1.
    """
    out = np.ones(state.n)
    played = state.counts > 0
    if k >= 1:
        bonus = np.sqrt(3.0 * math.log(k) / (2.0 * state.counts[played]))
    else:
        bonus = 0.0
    out[played] = np.minimum(state.mu_hat[played] + bonus, 1.0)
    return out


def ucb_estimate(state: BanditState, device: int, k: int) -> float:
    c = state.counts[device]
    if c == 0:
        return 1.0
    mu = state.reward_sums[device] / c
    bonus = math.sqrt(3.0 * math.log(k) / (2.0 * c)) if k >= 1 else 0.0
    return min(mu + bonus, 1.0)


def select_workers(state: BanditState, available, cfg: SelectionConfig, k: int) -> list[int]:
    """At most ``m`` available devices with the largest scores, ties by index."""
    avail = np.asarray(sorted(set(int(i) for i in available)), dtype=np.int64)
    if avail.size and (avail[0] < 0 or avail[-1] >= cfg.n):
        raise InputDomainError(f"available devices must lie in [0, {cfg.n})")
    if avail.size <= cfg.m:
        return avail.tolist()
    score = cfg.g * ucb_estimates(state, k) + cfg.beta * state.queues
    s = score[avail]
    # lexsort: last key is primary
    order = np.lexsort((avail, -s))
    return sorted(avail[order[: cfg.m]].tolist())


def observe_rewards(state: BanditState, selected, rewards, cfg: SelectionConfig):
    """Record the round's rewards; returns ``(state, Q)`` with ``Q = sum g_i X_i``.

    ``rewards`` maps each selected device to a value in [0, 1].  Fairness queues
    advance for every device: ``Z_i <- max(Z_i + r_i - b_i, 0)``.
    """
    selected = sorted(set(int(i) for i in selected))
    if set(rewards) != set(selected):
        raise InputDomainError("rewards must be given for exactly the selected devices")
    b = np.zeros(state.n)
    q = 0.0
    for i in selected:
        x = float(rewards[i])
        if not 0.0 <= x <= 1.0 or math.isnan(x):
            raise InputDomainError(f"reward {x} of device {i} outside [0, 1]")
        state.counts[i] += 1
        state.reward_sums[i] += x
        b[i] = 1.0
        q += cfg.g[i] * x
    state.queues = np.maximum(state.queues + cfg.r - b, 0.0)
    state.k += 1
    return state, q


def composite_reward(time_ms, energy_units, data_volume, weights=(1 / 3, 1 / 3, 1 / 3),
                     normalizers=(1.0, 1.0, 1.0)) -> float:
    """Reward in [0, 1] favouring data volume and penalizing latency and energy.

    ``weights`` and ``normalizers`` are ordered (volume, time, energy).
    """
    w_d, w_t, w_e = weights
    n_d, n_t, n_e = normalizers
    if abs(w_d + w_t + w_e - 1.0) > 1e-9:
        raise ConfigError("reward.weights", "must sum to 1")
    if min(n_d, n_t, n_e) <= 0:
        raise ConfigError("reward.normalizers", "must be positive")
    value = (
        w_d * min(data_volume / n_d, 1.0)
        + w_t * (1.0 - min(time_ms / n_t, 1.0))
        + w_e * (1.0 - min(energy_units / n_e, 1.0))
    )
    return min(max(value, 0.0), 1.0)


class AvailabilityModel:
    """Independent per-device Bernoulli availability, redrawn every round."""

    def __init__(self, probabilities, rng):
        self.p = np.asarray(probabilities, dtype=float)
        if np.any(self.p < 0) or np.any(self.p > 1):
            raise ConfigError("availability", "probabilities must lie in [0, 1]")
        self.rng = rng

    def draw(self) -> list[int]:
        return np.flatnonzero(self.rng.random(self.p.size) < self.p).tolist()


def bitmask(devices, n):
    """Device set as a 0/1 string, device 0 first."""
    bits = ["0"] * n
    for i in devices:
        bits[i] = "1"
    return "".join(bits)


def clairvoyant_value(means, g, available, m):
    """Best achievable expected weighted reward given the available set."""
    vals = sorted((g[i] * means[i] for i in available), reverse=True)
    return float(sum(vals[:m]))


@dataclass
class SelectionTrace:
    n: int
    rows: list = field(default_factory=list)

    def record(self, k, available, selected, estimates, q):
        self.rows.append((k, bitmask(available, self.n), bitmask(selected, self.n),
                          ";".join(repr(float(x)) for x in estimates), float(q)))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["k", "available_mask", "selected_mask", "ucb_estimates", "Q"])
            writer.writerows(self.rows)


def simulate_selection(cfg: SelectionConfig, means, rounds, availability=None, trace=None,
                       rng=None):
    """Bandit-only run with Bernoulli rewards of the given means.

    Returns a dict with the final state, the time-average ``Q``, the
    clairvoyant average on the realized availability sets and the empirical
    selection fractions.
    """
    means = np.asarray(means, dtype=float)
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    avail_rng, reward_rng = rng.spawn(2)
    if availability is None:
        availability = AvailabilityModel(np.ones(cfg.n), avail_rng)
    state = BanditState(cfg.n)
    total_q = 0.0
    total_best = 0.0
    for k in range(rounds):
        available = availability.draw()
        selected = select_workers(state, available, cfg, k)
        draws = reward_rng.random(cfg.n) < means
        rewards = {i: float(draws[i]) for i in selected}
        if trace is not None:
            trace.record(k, available, selected, ucb_estimates(state, k), 0.0)
        state, q = observe_rewards(state, selected, rewards, cfg)
        if trace is not None:
            row = trace.rows[-1]
            trace.rows[-1] = row[:4] + (float(q),)
        total_q += q
        total_best += clairvoyant_value(means, cfg.g, available, cfg.m)
    return {
        "state": state,
        "average_q": total_q / rounds if rounds else 0.0,
        "clairvoyant_q": total_best / rounds if rounds else 0.0,
        "fractions": (state.counts / rounds).tolist() if rounds else [0.0] * cfg.n,
    }
