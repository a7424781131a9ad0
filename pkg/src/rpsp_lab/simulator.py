"""Seeded Monte Carlo of a saturated stop-and-wait sender over an i.i.d. bit-error link.

Each generated packet (one sequence number) is sent with the same size until it
gets through or the retry limit is used up. Before every attempt the sender backs
off a uniform number of slots on ``[0, CW_r]``; a lost attempt costs the
error airtime, a successful one the success airtime. The next packet starts
right after (the sender is never idle).

Random streams: ``SeedSequence(seed).spawn(replications)`` gives one sequence per
replication, and each of those spawns three children feeding the size, loss
and backoff generators, in that order.

Two engines are available:

* ``"per_attempt"`` draws one Bernoulli loss and one backoff counter per attempt.
* ``"geometric"`` (default) draws the attempt count of each packet from its
  exact (truncated) geometric law, and the backoff total at the capped window
  as a sum of binomial bit counts, which is exact when ``CW_max + 1`` is a
  power of two. It scales to loss probabilities within 1e-8 of one, where
  packets need ~10^8 attempts.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dcf_timing import (
    DcfParams, cap_stage, contention_window, expected_cycle_time, t_bit_error, t_success,
)
from .goodput import goodput
from .laws import PointMassLaw, ks_distance
from .message_models import DEFAULT_TAIL_MASS, MessageSizeDistribution
from .retransmission import (
    DivergenceError, LossModel, RetryPolicy, TransferredPacketDistribution, delivery_prob,
    expected_attempts, transferred_distribution,
)
from .segmentation import GeneratedPacketDistribution, SegmentationConfig, segment, segment_messages

METHODS = ("geometric", "per_attempt")
_BATCH = 1 << 18
# geometric draws beyond this many expected attempts risk int64 overflow
_MAX_MEAN_ATTEMPTS = 1e15


class ParameterMismatchError(ValueError):
    """A simulation report and an analytic bundle describe different systems."""


@dataclass(frozen=True)
class SimConfig:
    seed: int
    num_generated_packets: int
    loss: LossModel
    policy: RetryPolicy
    dcf: DcfParams = field(default_factory=DcfParams)
    packets: GeneratedPacketDistribution | None = None
    messages: MessageSizeDistribution | None = None
    segmentation: SegmentationConfig | None = None
    replications: int = 1
    method: str = "geometric"

    def __post_init__(self):
        if self.num_generated_packets < 1:
            raise ValueError("num_generated_packets must be >= 1")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if (self.packets is None) == (self.messages is None):
            raise ValueError("give exactly one of packets (packet mode) or messages (message mode)")
        if self.messages is not None and self.segmentation is None:
            raise ValueError("message mode needs a SegmentationConfig")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")

    @property
    def mode(self) -> str:
        return "packet" if self.packets is not None else "message"

    @property
    def swp_header(self) -> int:
        if self.segmentation is not None:
            return self.segmentation.swp_header
        return self.packets.swp_header

    def describe_source(self) -> dict:
        if self.packets is not None:
            return {
                "mode": "packet",
                "swp_header": int(self.packets.swp_header),
                "sizes": self.packets.sizes.tolist(),
                "weights": self.packets.weights.tolist(),
            }
        return {
            "mode": "message",
            "message_law": self.messages.describe(),
            "payload_size": self.segmentation.payload_size,
            "swp_header": self.segmentation.swp_header,
        }

    def echo(self) -> dict:
        return {
            "seed": self.seed,
            "num_generated_packets": self.num_generated_packets,
            "replications": self.replications,
            "method": self.method,
            "loss": asdict(self.loss),
            "retry_limit": str(self.policy),
            "dcf": self.dcf.to_dict(),
            "source": self.describe_source(),
        }


@dataclass
class SimCounters:
    """Per-size counts accumulated over one or more replications."""

    sizes: np.ndarray
    packets: np.ndarray        # generated packets (sequence numbers) of each size
    attempts: np.ndarray       # transmissions of each size
    successes: np.ndarray      # delivered packets of each size
    cycle_time: np.ndarray     # seconds spent on attempts of each size
    backoff_slots: np.ndarray
    max_attempts_per_packet: int = 0

    @classmethod
    def empty(cls, sizes: np.ndarray) -> SimCounters:
        k = len(sizes)
        return cls(sizes, *(np.zeros(k, dtype=np.int64) for _ in range(3)), np.zeros(k),
                   np.zeros(k, dtype=np.int64))

    @property
    def elapsed(self) -> float:
        return float(self.cycle_time.sum())

    def delivered_bits(self, swp_header: int) -> int:
        return int(np.dot(self.successes, 8 * (self.sizes.astype(np.int64) - swp_header)))

    def merge(self, other: SimCounters) -> SimCounters:
        return SimCounters(
            self.sizes,
            self.packets + other.packets,
            self.attempts + other.attempts,
            self.successes + other.successes,
            self.cycle_time + other.cycle_time,
            self.backoff_slots + other.backoff_slots,
            max(self.max_attempts_per_packet, other.max_attempts_per_packet),
        )


def _sum_uniform(rng: np.random.Generator, counts: np.ndarray, modulus: int) -> np.ndarray:
    """Sum of ``counts[i]`` independent uniform integers on ``[0, modulus)``, per entry."""
    counts = np.asarray(counts, dtype=np.int64)
    if modulus == 1:
        return np.zeros(len(counts), dtype=np.int64)
    bits = modulus.bit_length() - 1
    if modulus == 1 << bits:
        # a uniform on [0, 2^b) is b independent fair bits
        out = np.zeros(len(counts), dtype=np.int64)
        for j in range(bits):
            out += rng.binomial(counts, 0.5).astype(np.int64) << j
        return out
    out = np.zeros(len(counts), dtype=np.int64)
    small = counts <= 64
    if small.any():
        c = counts[small]
        draws = rng.integers(0, modulus, size=(len(c), int(c.max(initial=0))))
        draws[np.arange(draws.shape[1]) >= c[:, None]] = 0
        out[small] = draws.sum(axis=1)
    values = np.arange(modulus)
    for i in np.flatnonzero(~small):
        out[i] = np.dot(rng.multinomial(counts[i], np.full(modulus, 1 / modulus)), values)
    return out


def _support(cfg: SimConfig) -> np.ndarray:
    if cfg.packets is not None:
        return np.asarray(cfg.packets.sizes, dtype=np.int64)
    seg = cfg.segmentation
    return np.arange(seg.swp_header + 1, seg.body_size + 1, dtype=np.int64)


class _PacketSource:
    """Stream of generated-packet support indices."""

    def __init__(self, cfg: SimConfig, rng: np.random.Generator, support: np.ndarray):
        self.cfg = cfg
        self.rng = rng
        self.offset = int(support[0])
        self.pending = np.zeros(0, dtype=np.int64)
        if cfg.packets is not None:
            self.cum = np.cumsum(cfg.packets.weights)

    def take(self, n: int) -> np.ndarray:
        cfg = self.cfg
        if cfg.packets is not None:
            u = self.rng.random(n) * self.cum[-1]
            return np.minimum(np.searchsorted(self.cum, u, side="right"), len(self.cum) - 1)
        while len(self.pending) < n:
            msgs = cfg.messages.sample(self.rng, max(1024, n // 2))
            self.pending = np.concatenate((self.pending, segment_messages(msgs, cfg.segmentation)))
        out, self.pending = self.pending[:n], self.pending[n:]
        return out - self.offset


def _attempts_geometric(cfg, q, loss_rng):
    n = cfg.policy.retry_limit
    if cfg.policy.infinite:
        return loss_rng.geometric(q).astype(np.int64), np.ones(len(q), dtype=bool)
    trials = np.full(len(q), int(n) + 2, dtype=np.int64)
    ok = q > 0
    trials[ok] = loss_rng.geometric(q[ok])
    delivered = trials <= n + 1
    return np.minimum(trials, int(n) + 1), delivered


def _backoff_geometric(cfg, attempts, backoff_rng):
    r0 = cap_stage(cfg.dcf)
    total = np.zeros(len(attempts), dtype=np.int64)
    for r in range(r0):
        active = attempts > r
        total[active] += backoff_rng.integers(0, contention_window(cfg.dcf, r) + 1, size=int(active.sum()))
    capped = np.maximum(attempts - r0, 0)
    total += _sum_uniform(backoff_rng, capped, cfg.dcf.cw_max + 1)
    return total


def _per_attempt(cfg, sizes, q, loss_rng, backoff_rng):
    n = cfg.policy.retry_limit
    count = len(q)
    attempts = np.zeros(count, dtype=np.int64)
    backoff = np.zeros(count, dtype=np.int64)
    delivered = np.zeros(count, dtype=bool)
    active = np.arange(count)
    r = 0
    while len(active):
        size_now = sizes[active]
        backoff[active] += backoff_rng.integers(0, contention_window(cfg.dcf, r) + 1, size=len(active))
        ok = loss_rng.random(len(active)) < q[active]
        attempts[active] += 1
        delivered[active[ok]] = True
        # size preservation: a retransmission reuses the packet's original size
        assert np.array_equal(sizes[active], size_now)
        active = active[~ok]
        r += 1
        if r > n:
            break
    return attempts, delivered, backoff


def _run_replication(cfg: SimConfig, seq: np.random.SeedSequence, count: int) -> SimCounters:
    size_rng, loss_rng, backoff_rng = (np.random.default_rng(s) for s in seq.spawn(3))
    support = _support(cfg)
    log_q = np.asarray(cfg.loss.log_success(support), dtype=float)
    q_support = np.exp(log_q)
    if cfg.policy.infinite and np.any(q_support * _MAX_MEAN_ATTEMPTS < 1):
        raise DivergenceError("unlimited retries over a packet size that is (almost) never delivered")
    tsuc = np.asarray(t_success(cfg.dcf, support))
    tbit = np.asarray(t_bit_error(cfg.dcf, support))
    source = _PacketSource(cfg, size_rng, support)
    counters = SimCounters.empty(support)
    k = len(support)
    done = 0
    while done < count:
        batch = min(_BATCH, count - done)
        idx = source.take(batch)
        q = q_support[idx]
        if cfg.method == "geometric":
            attempts, delivered = _attempts_geometric(cfg, q, loss_rng)
            backoff = _backoff_geometric(cfg, attempts, backoff_rng)
        else:
            attempts, delivered, backoff = _per_attempt(cfg, support[idx], q, loss_rng, backoff_rng)
        if attempts.min() < 1 or attempts.max() > cfg.policy.max_attempts:
            raise AssertionError("attempt count outside [1, n_RL + 1]")
        time = (cfg.dcf.slot * backoff + (attempts - delivered) * tbit[idx]
                + np.where(delivered, tsuc[idx], 0.0))
        counters.packets += np.bincount(idx, minlength=k)
        counters.attempts += np.bincount(idx, weights=attempts, minlength=k).astype(np.int64)
        counters.successes += np.bincount(idx, weights=delivered, minlength=k).astype(np.int64)
        counters.cycle_time += np.bincount(idx, weights=time, minlength=k)
        counters.backoff_slots += np.bincount(idx, weights=backoff, minlength=k).astype(np.int64)
        counters.max_attempts_per_packet = max(counters.max_attempts_per_packet, int(attempts.max()))
        done += batch
    return counters


@dataclass
class SimReport:
    """Counting estimators from a simulation run (or exact values, see :func:`analytic_report`)."""

    config: dict
    sizes: np.ndarray
    transferred_weights: np.ndarray
    mean_transferred_size: float
    mean_attempts: float
    attempts_per_size: np.ndarray
    delivery_per_size: np.ndarray
    cycle_time_per_size: np.ndarray
    mean_cycle_time: float
    goodput: float
    half_widths: dict
    counters: SimCounters | None = None

    def transferred_law(self) -> PointMassLaw:
        keep = self.transferred_weights > 0
        w = self.transferred_weights[keep]
        return PointMassLaw(self.sizes[keep], w / w.sum())

    def to_dict(self) -> dict:
        def num(v):
            v = float(v)
            return None if math.isnan(v) else v

        out = {
            "config": self.config,
            "estimates": {
                "mean_transferred_size": num(self.mean_transferred_size),
                "mean_attempts": num(self.mean_attempts),
                "mean_cycle_time_s": num(self.mean_cycle_time),
                "goodput_bps": num(self.goodput),
            },
            "half_widths_95": {k: num(v) for k, v in self.half_widths.items()},
            "per_size": {
                "size_bytes": self.sizes.tolist(),
                "transferred_weight": [num(v) for v in self.transferred_weights],
                "attempts_per_packet": [num(v) for v in self.attempts_per_size],
                "delivery_ratio": [num(v) for v in self.delivery_per_size],
                "mean_cycle_time_s": [num(v) for v in self.cycle_time_per_size],
            },
        }
        if self.counters is not None:
            c = self.counters
            out["counters"] = {
                "packets": c.packets.tolist(),
                "attempts": c.attempts.tolist(),
                "successes": c.successes.tolist(),
                "cycle_time_s": c.cycle_time.tolist(),
                "backoff_slots": c.backoff_slots.tolist(),
                "elapsed_s": c.elapsed,
                "delivered_payload_bits": c.delivered_bits(self.config["source"]["swp_header"]),
                "max_attempts_per_packet": c.max_attempts_per_packet,
            }
        return out

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    def write_csv(self, path) -> Path:
        """Empirical transferred-size CDF rows: ``size_bytes,weight,cdf``."""
        path = Path(path)
        cum = np.cumsum(self.transferred_weights)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["size_bytes", "weight", "cdf"])
            for s, w, c in zip(self.sizes.tolist(), self.transferred_weights.tolist(), cum.tolist()):
                writer.writerow([s, repr(w), repr(c)])
        return path


def _estimates(c: SimCounters, swp_header: int) -> dict:
    seen = c.packets > 0
    total_attempts = c.attempts.sum()
    with np.errstate(invalid="ignore", divide="ignore"):
        return {
            "sizes": c.sizes[seen],
            "transferred_weights": c.attempts[seen] / total_attempts,
            "mean_transferred_size": float(np.dot(c.attempts, c.sizes) / total_attempts),
            "mean_attempts": float(total_attempts / c.packets.sum()),
            "attempts_per_size": c.attempts[seen] / c.packets[seen],
            "delivery_per_size": c.successes[seen] / c.packets[seen],
            "cycle_time_per_size": c.cycle_time[seen] / c.attempts[seen],
            "mean_cycle_time": c.elapsed / total_attempts,
            "goodput": c.delivered_bits(swp_header) / c.elapsed,
        }


_SPREAD_KEYS = ("mean_transferred_size", "mean_attempts", "mean_cycle_time", "goodput")


def run_simulation(cfg: SimConfig) -> SimReport:
    """Run all replications and pool their counters in replication order."""
    seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.replications)
    base, extra = divmod(cfg.num_generated_packets, cfg.replications)
    per_rep = []
    for i, seq in enumerate(seqs):
        count = base + (1 if i < extra else 0)
        if count:
            per_rep.append(_run_replication(cfg, seq, count))
    pooled = per_rep[0]
    for c in per_rep[1:]:
        pooled = pooled.merge(c)
    est = _estimates(pooled, cfg.swp_header)
    half = {}
    for key in _SPREAD_KEYS:
        vals = np.array([_estimates(c, cfg.swp_header)[key] for c in per_rep])
        half[key] = 1.96 * vals.std(ddof=1) / math.sqrt(len(vals)) if len(vals) > 1 else float("nan")
    return SimReport(config=cfg.echo(), half_widths=half, counters=pooled, **est)


# -- analytic side -----------------------------------------------------------

@dataclass
class AnalyticBundle:
    """Closed-form counterparts of every simulator estimate for one parameterization."""

    config: dict
    loss: LossModel
    policy: RetryPolicy
    generated: GeneratedPacketDistribution
    transferred: TransferredPacketDistribution
    cycle_time_per_size: np.ndarray
    goodput: float

    @property
    def mean_cycle_time(self) -> float:
        return float(np.dot(self.transferred.weights, self.cycle_time_per_size))


def analytic_bundle(cfg: SimConfig, tail_mass: float = DEFAULT_TAIL_MASS,
                    generated: GeneratedPacketDistribution | None = None) -> AnalyticBundle:
    """Analytic values matching ``cfg``; pass ``generated`` to reuse an existing segmentation."""
    if generated is None:
        generated = cfg.packets if cfg.packets is not None else segment(cfg.messages, cfg.segmentation, tail_mass)
    tq = transferred_distribution(generated, cfg.loss, cfg.policy)
    cycle = np.asarray(expected_cycle_time(cfg.dcf, cfg.loss, cfg.policy, generated.sizes), dtype=float)
    return AnalyticBundle(
        config=cfg.echo(), loss=cfg.loss, policy=cfg.policy, generated=generated, transferred=tq,
        cycle_time_per_size=cycle, goodput=goodput(generated, cfg.loss, cfg.policy, cfg.dcf),
    )


def analytic_report(bundle: AnalyticBundle) -> SimReport:
    """A report carrying the exact values, i.e. what an infinitely long run converges to."""
    loss, policy = bundle.loss, bundle.policy
    sizes = bundle.generated.sizes
    return SimReport(
        config=bundle.config,
        sizes=np.asarray(sizes),
        transferred_weights=np.asarray(bundle.transferred.weights),
        mean_transferred_size=bundle.transferred.mean,
        mean_attempts=bundle.transferred.mean_attempts,
        attempts_per_size=np.atleast_1d(expected_attempts(loss, policy, sizes)),
        delivery_per_size=np.atleast_1d(delivery_prob(loss, policy, sizes)),
        cycle_time_per_size=bundle.cycle_time_per_size,
        mean_cycle_time=bundle.mean_cycle_time,
        goodput=bundle.goodput,
        half_widths={k: 0.0 for k in _SPREAD_KEYS},
    )


THRESHOLDS = {
    "ks_transferred": 0.01,
    "mean_transferred_size": 0.005,
    "mean_attempts": 0.01,
    "mean_cycle_time": 0.005,
    "goodput": 0.01,
}

_PARAMETER_KEYS = ("loss", "retry_limit", "dcf", "source")


@dataclass
class ComparisonResult:
    """Simulation-vs-analytic deltas; relative errors except the KS distance."""

    deltas: dict
    thresholds: dict
    cycle_time_per_size_error: float

    @property
    def flags(self) -> list[str]:
        return [k for k, v in self.deltas.items() if not v <= self.thresholds[k]]

    @property
    def passed(self) -> bool:
        return not self.flags

    def lines(self) -> list[str]:
        return [f"{'FAIL' if k in self.flags else 'ok'}  {k:<22} {v:.3e} (limit {self.thresholds[k]:g})"
                for k, v in self.deltas.items()]


def _rel(a: float, b: float) -> float:
    if a == b:
        return 0.0
    return abs(a - b) / abs(b)


def compare_to_analytic(report: SimReport, bundle: AnalyticBundle,
                        thresholds: dict | None = None) -> ComparisonResult:
    for key in _PARAMETER_KEYS:
        if report.config.get(key) != bundle.config.get(key):
            raise ParameterMismatchError(f"report and analytic bundle differ in {key!r}")
    exact = bundle.transferred
    deltas = {
        "ks_transferred": ks_distance(report.transferred_law(), exact),
        "mean_transferred_size": _rel(report.mean_transferred_size, exact.mean),
        "mean_attempts": _rel(report.mean_attempts, exact.mean_attempts),
        "mean_cycle_time": _rel(report.mean_cycle_time, bundle.mean_cycle_time),
        "goodput": _rel(report.goodput, bundle.goodput),
    }
    support = bundle.generated.sizes
    pos = np.minimum(np.searchsorted(support, report.sizes), len(support) - 1)
    known = support[pos] == report.sizes
    analytic_cycle = bundle.cycle_time_per_size[pos[known]]
    err = np.abs(report.cycle_time_per_size[known] - analytic_cycle) / analytic_cycle
    w = report.transferred_weights[known]
    per_size = float(np.dot(w, err) / w.sum()) if len(w) else float("nan")
    return ComparisonResult(deltas, dict(thresholds or THRESHOLDS), per_size)
