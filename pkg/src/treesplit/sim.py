"""Slotted Poisson-traffic simulation over the tree protocols.

One run strings collision-resolution intervals back to back under a
channel access policy:

  gated     arrivals during an interval are blocked and jointly start
            the next one (the first interval serves arrivals from one
            bootstrap slot);
  windowed  the arrival axis is cut into windows of ``delta`` slots and
            the k-th window's batch starts its interval once both the
            window has closed and the previous interval has finished.
            Backlogged windows queue whole, first in first out.

Every run is a pure function of (protocol, policy, rate, budget, seed):
arrival counts, arrival positions, and split coins all come from
counter-derived sub-streams of the master seed, so replications are
order-independent and reports are bit-identical across reruns.

Slot/time conventions: slot ``t`` (1-based) covers real time [t-1, t).
A packet generated during slot ``t`` (or at real instant ``u``) is first
eligible in the next slot, and that eligibility slot is stored as its
arrival slot; delay is decode slot minus arrival slot, so a packet
served immediately at its first eligible slot has delay 0.

The slot budget bounds when new intervals may start; the interval in
progress when the budget is hit runs to completion, so a report can
cover slightly more than ``budget`` slots (unstable rates are flagged,
never run forever).
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field, asdict
from typing import NamedTuple, Optional, Union

import numpy as np

from .engines import ProtocolKind, RULES, run_cri
from .rng import CoinSource, derive_seed, stream_seed

# Backlog drift (packets per slot) above which the trailing-half
# regression declares the run unstable.  A rate 2-3% above the maximum
# stable throughput drifts at ~0.03 packets/slot, a stable rate at ~0.
_INSTABILITY_SLOPE = 0.005
_MIN_TREND_POINTS = 8


class ProtocolError(ValueError):
    """An operation was asked of a protocol that lacks the feature."""


class EmptySampleError(ValueError):
    """A statistic was requested over zero samples."""


@dataclass(frozen=True)
class Gated:
    """Blocked access: each interval serves the arrivals of the previous one."""

    def describe(self) -> str:
        return "gated"


@dataclass(frozen=True)
class Windowed:
    """Windowed access with window length ``delta`` (in slots, may be fractional)."""

    delta: float

    def __post_init__(self):
        if not (float(self.delta) > 0.0):
            raise ValueError(f"window length must be positive, got {self.delta}")

    def describe(self) -> str:
        return f"windowed:{self.delta:g}"


AccessPolicy = Union[Gated, Windowed]


def _coerce_policy(policy) -> AccessPolicy:
    if isinstance(policy, (Gated, Windowed)):
        return policy
    if isinstance(policy, str):
        text = policy.strip().lower()
        if text == "gated":
            return Gated()
        if text.startswith("windowed:"):
            return Windowed(float(text.split(":", 1)[1]))
    raise ValueError(f"unrecognized access policy: {policy!r}")


@dataclass
class MetricsReport:
    """Everything one simulation run measured.

    Histograms map value to count; per-interval lists are aligned with
    interval completion order.  ``arrivals_total`` counts every packet
    generated inside the simulated horizon, so it always equals
    ``packets_decoded + terminal_backlog``.
    """

    protocol: str
    policy: str
    rate: float
    budget: int
    seed: int
    packet_bits: int = 256
    slots_simulated: int = 0
    cri_count: int = 0
    packets_decoded: int = 0
    arrivals_total: int = 0
    terminal_backlog: int = 0
    throughput: float = 0.0
    unstable: bool = False
    idle_slots: int = 0
    success_slots: int = 0
    collision_slots: int = 0
    z_broadcast_slots: int = 0
    skipped_slots: int = 0
    delay_samples: list = field(default_factory=list)
    collision_degree_hist: dict = field(default_factory=dict)
    feedback_k_hist: dict = field(default_factory=dict)
    collisions_per_cri: list = field(default_factory=list)
    decoded_per_cri: list = field(default_factory=list)
    ap_memory_highwater: list = field(default_factory=list)
    feedback_bits: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        # JSON object keys are strings; keep histogram keys explicit.
        for key in ("collision_degree_hist", "feedback_k_hist", "feedback_bits"):
            out[key] = {str(k): v for k, v in sorted(out[key].items())}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        data = dict(data)
        for key in ("collision_degree_hist", "feedback_k_hist", "feedback_bits"):
            data[key] = {int(k): int(v) for k, v in data.get(key, {}).items()}
        return cls(**data)


class _Batch(NamedTuple):
    ids: list       # packet ids, arrival order
    arrivals: list  # arrival (first-eligible) slot per id, same order


def _bit_width(kmax: int) -> int:
    """Feedback field width covering idle/collision plus skip counts up to kmax."""
    return max(2, math.ceil(math.log2(kmax + 3)))


def _fill_feedback_bits(report: MetricsReport, rules) -> None:
    """Populate the per-slot bit-cost histogram from the run's counters."""
    hist: dict = {}

    def add(bits: int, count: int):
        if count:
            hist[bits] = hist.get(bits, 0) + count

    total = report.slots_simulated
    if not rules.saves_collisions:
        add(2, total)                      # ternary flag only
    elif not rules.z_on_collision:
        kmax = max(report.feedback_k_hist, default=0)
        add(_bit_width(kmax), total)       # flag and skip count, fixed width
    else:
        B = report.packet_bits
        if rules.z_on_success:
            z_slots = report.collision_slots + report.z_broadcast_slots
            add(2 + B, z_slots)
            add(2, total - z_slots)
        else:
            kmax = max(report.feedback_k_hist, default=0)
            add(2 + B, report.collision_slots)
            add(_bit_width(kmax), report.success_slots)
            add(2, report.idle_slots)
    report.feedback_bits = hist


def _finalize(report: MetricsReport, rules, backlog_points: list) -> None:
    report.throughput = (report.packets_decoded / report.slots_simulated
                         if report.slots_simulated else 0.0)
    _fill_feedback_bits(report, rules)
    report.unstable = _detect_instability(report, backlog_points)


def _detect_instability(report: MetricsReport, backlog_points: list) -> bool:
    """Trailing-half backlog drift test, with a mass fallback for runs
    whose final intervals are so long that the trend has too few points."""
    horizon = report.slots_simulated
    if horizon <= 0:
        return False
    tail = [(s, b) for s, b in backlog_points if s >= horizon / 2]
    if len(tail) >= _MIN_TREND_POINTS:
        xs = np.array([s for s, _ in tail], dtype=float)
        ys = np.array([b for _, b in tail], dtype=float)
        slope = np.polyfit(xs, ys, 1)[0]
        if slope > _INSTABILITY_SLOPE and ys.mean() > 25.0:
            return True
    # A backlog holding a large fraction of all traffic is unstable no
    # matter how few intervals completed.
    return report.terminal_backlog > max(100.0, 0.25 * report.rate * horizon)


def simulate(
    protocol: Union[ProtocolKind, str],
    policy: Union[AccessPolicy, str],
    rate: float,
    budget: int,
    seed: int,
    *,
    p: float = 0.5,
    packet_bits: int = 256,
) -> MetricsReport:
    """Run intervals back to back until ``budget`` slots and report metrics.

    ``rate`` is the Poisson arrival intensity in packets per slot (zero is
    allowed and produces an all-idle run); ``p`` is the split bias handed
    to the protocol engine.  Deterministic: identical arguments give an
    identical report.
    """
    kind = ProtocolKind(protocol)
    rules = RULES[kind]
    policy = _coerce_policy(policy)
    rate = float(rate)
    budget = int(budget)
    if rate < 0.0:
        raise ValueError(f"arrival rate must be non-negative, got {rate}")
    if budget < 1:
        raise ValueError(f"slot budget must be at least 1, got {budget}")

    report = MetricsReport(
        protocol=kind.value, policy=policy.describe(), rate=rate,
        budget=budget, seed=int(seed), packet_bits=int(packet_bits),
    )
    master = int(seed)
    arrivals_base = derive_seed(master, "arrivals")
    coins_base = derive_seed(master, "coins")

    if isinstance(policy, Gated):
        _run_gated(report, kind, rules, rate, budget, p, arrivals_base, coins_base)
    else:
        _run_windowed(report, kind, rules, rate, budget, p,
                      arrivals_base, coins_base, policy.delta)
    return report


def _serve_batch(report, kind, rate_unused, p, coins_base, batch, start) -> int:
    """Run one interval for ``batch`` beginning at slot ``start``.

    Returns the index of the last slot the interval consumed and folds
    the interval's metrics into the report.
    """
    coins = CoinSource(stream_seed(coins_base, report.cri_count), p)
    trace = run_cri(kind, batch.ids, p, coins, record_slots=False)
    arrival_of = dict(zip(batch.ids, batch.arrivals))
    base = start - 1
    delays = report.delay_samples
    for pid, rel_slot in trace.decoded_order:
        delays.append(base + rel_slot - arrival_of[pid])
    report.cri_count += 1
    report.packets_decoded += len(batch.ids)
    report.success_slots += trace.successes
    report.collision_slots += trace.collisions
    report.idle_slots += trace.idles
    report.skipped_slots += trace.skipped_slots
    report.z_broadcast_slots += trace.z_success_slots
    for deg in trace.collision_degrees:
        report.collision_degree_hist[deg] = report.collision_degree_hist.get(deg, 0) + 1
    for k in trace.k_values:
        report.feedback_k_hist[k] = report.feedback_k_hist.get(k, 0) + 1
    report.collisions_per_cri.append(trace.collisions)
    report.decoded_per_cri.append(len(batch.ids))
    report.ap_memory_highwater.append(trace.memory_highwater)
    return base + trace.length


def _run_gated(report, kind, rules, rate, budget, p, arrivals_base, coins_base):
    next_id = 0

    def draw_batch(cri_index: int, span_start: int, span_len: int) -> _Batch:
        """Arrivals generated during [span_start, span_start+span_len-1]."""
        nonlocal next_id
        rng = np.random.default_rng(stream_seed(arrivals_base, cri_index))
        count = int(rng.poisson(rate * span_len)) if rate > 0.0 else 0
        if count == 0:
            return _Batch([], [])
        gen_slots = np.sort(rng.integers(span_start, span_start + span_len,
                                         size=count))
        ids = list(range(next_id, next_id + count))
        next_id += count
        return _Batch(ids, [int(g) + 1 for g in gen_slots])

    # Bootstrap: the first interval serves arrivals of a single slot-0 epoch.
    batch = draw_batch(0, 0, 1)
    report.arrivals_total += len(batch.ids)
    consumed = 0
    backlog_points: list = []
    while True:
        start = consumed + 1
        consumed = _serve_batch(report, kind, rate, p, coins_base, batch, start)
        # Arrivals blocked during the interval just served form the next batch.
        batch = draw_batch(report.cri_count, start, consumed - start + 1)
        report.arrivals_total += len(batch.ids)
        backlog_points.append((consumed, len(batch.ids)))
        if consumed >= budget:
            break
    report.slots_simulated = consumed
    report.terminal_backlog = len(batch.ids)
    _finalize(report, rules, backlog_points)


def _run_windowed(report, kind, rules, rate, budget, p,
                  arrivals_base, coins_base, delta):
    next_id = 0

    def draw_window(j: int) -> _Batch:
        """Arrivals of window j, spanning real time [j*delta, (j+1)*delta)."""
        nonlocal next_id
        rng = np.random.default_rng(stream_seed(arrivals_base, j))
        count = int(rng.poisson(rate * delta)) if rate > 0.0 else 0
        if count == 0:
            return _Batch([], [])
        instants = np.sort(rng.uniform(j * delta, (j + 1) * delta, size=count))
        ids = list(range(next_id, next_id + count))
        next_id += count
        # First slot whose start lies at or after the arrival instant.
        return _Batch(ids, [math.ceil(float(u) + 1.0 - 1e-9) for u in instants])

    consumed = 0
    window = 0
    backlog_points: list = []
    backlog = 0
    while consumed < budget:
        batch = draw_window(window)
        report.arrivals_total += len(batch.ids)
        backlog += len(batch.ids)
        window_close = (window + 1) * delta
        start = max(consumed + 1, math.ceil(window_close + 1.0 - 1e-9))
        if start - 1 > consumed:
            # The channel idles until the window closes; those waiting
            # slots count toward the horizon but belong to no interval.
            report.idle_slots += start - 1 - consumed
            consumed = start - 1
        consumed = _serve_batch(report, kind, rate, p, coins_base, batch, start)
        backlog -= len(batch.ids)
        backlog_points.append((consumed, backlog))
        window += 1
    # Windows that closed inside the horizon but were never served still
    # contain arrivals of the simulated period: count them as backlog.
    while (window + 1) * delta <= consumed:
        pending = draw_window(window)
        report.arrivals_total += len(pending.ids)
        backlog += len(pending.ids)
        window += 1
    report.slots_simulated = consumed
    report.terminal_backlog = backlog
    _finalize(report, rules, backlog_points)


class DelayStats(NamedTuple):
    mean: float
    variance: float
    percentiles: dict  # percentile level -> value


def delay_stats(report: MetricsReport) -> DelayStats:
    """Sample mean, population variance, and percentiles of packet delay."""
    samples = report.delay_samples
    if not samples:
        raise EmptySampleError("no decoded packets: delay statistics undefined")
    arr = np.asarray(samples, dtype=float)
    pct = {q: float(np.percentile(arr, q)) for q in (50, 90, 95, 99)}
    return DelayStats(float(arr.mean()), float(arr.var()), pct)


def feedback_value_histogram(report: MetricsReport) -> dict:
    """Normalized mass function of the announced skip count on successes."""
    kind = ProtocolKind(report.protocol)
    if not RULES[kind].saves_collisions:
        raise ProtocolError(
            f"{kind.value} announces no skip counts; histogram undefined"
        )
    total = sum(report.feedback_k_hist.values())
    if total == 0:
        return {}
    return {k: c / total for k, c in sorted(report.feedback_k_hist.items())}


class CollisionCdf(NamedTuple):
    """Empirical CDF over collisions per interval, plus the C/n ratio."""

    support: tuple
    cumulative: tuple
    ratio: float

    def at(self, x: float) -> float:
        i = bisect_right(self.support, x)
        return self.cumulative[i - 1] if i else 0.0


def collisions_per_cri_cdf(report: MetricsReport) -> CollisionCdf:
    """CDF of per-interval collision counts and mean(collisions)/mean(batch)."""
    counts = report.collisions_per_cri
    if not counts:
        raise EmptySampleError("no completed intervals: CDF undefined")
    values, freqs = np.unique(np.asarray(counts), return_counts=True)
    cum = np.cumsum(freqs) / len(counts)
    mean_decoded = float(np.mean(report.decoded_per_cri))
    ratio = (float(np.mean(counts)) / mean_decoded) if mean_decoded > 0 else 0.0
    return CollisionCdf(tuple(int(v) for v in values),
                        tuple(float(c) for c in cum), ratio)


class FeedbackCostStats(NamedTuple):
    mean_bits: float
    max_bits: int
    histogram: dict  # bits per slot -> slot count


def feedback_cost(protocol: Union[ProtocolKind, str], report: MetricsReport,
                  packet_bits: int = 256) -> FeedbackCostStats:
    """Downlink feedback cost in bits per slot.

    BTA/MTA broadcast a ternary flag: 2 bits always.  SICTA appends the
    skip count, at a fixed width covering the largest value seen (4 bits
    in practice).  The broadcast-signal protocols spend ``packet_bits``
    on every slot whose broadcast carries a signal, plus the flag.
    """
    kind = ProtocolKind(protocol)
    rules = RULES[kind]
    if rules.z_on_collision and packet_bits < 1:
        raise ValueError(f"packet_bits must be at least 1, got {packet_bits}")
    shadow = MetricsReport(**{**report.__dict__})
    shadow.packet_bits = int(packet_bits)
    _fill_feedback_bits(shadow, rules)
    hist = shadow.feedback_bits
    total = sum(hist.values())
    if total == 0:
        return FeedbackCostStats(0.0, 0, {})
    mean = sum(b * c for b, c in hist.items()) / total
    return FeedbackCostStats(mean, max(hist), dict(sorted(hist.items())))


def throughput_estimate(report: MetricsReport) -> float:
    """Decoded packets per simulated slot."""
    if report.slots_simulated < 1:
        raise EmptySampleError("no slots simulated: throughput undefined")
    return report.packets_decoded / report.slots_simulated
