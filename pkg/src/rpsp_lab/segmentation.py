"""Segmentation of messages into generated packets.

A message of ``x`` bytes becomes ``k = ceil(x / payload)`` packets: ``k - 1`` body
packets carrying a full payload and one edge packet carrying the remainder
(a full payload when ``x`` is a multiple of it). Every packet gets the SWP header.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .laws import PointMassLaw, merge_point_masses
from .message_models import DEFAULT_MAX_SIZE, DEFAULT_TAIL_MASS, MessageSizeDistribution


@dataclass(frozen=True)
class SegmentationConfig:
    payload_size: int
    swp_header: int = 34

    def __post_init__(self):
        if self.payload_size <= 0:
            raise ValueError("payload_size must be positive")
        if self.swp_header < 0:
            raise ValueError("swp_header must be nonnegative")

    @property
    def body_size(self) -> int:
        return self.payload_size + self.swp_header


@dataclass(frozen=True, eq=False)
class GeneratedPacketDistribution(PointMassLaw):
    """Generated-packet law ``F^(p)`` plus the segmentation facts it came from."""

    edge_probability: float = 1.0
    message_mean: float = float("nan")
    swp_header: int = 0

    @property
    def mean_identity(self) -> float:
        """Mean packet size predicted from the message mean: ``pi_E * l_m + header``."""
        return self.edge_probability * self.message_mean + self.swp_header


def _segments(sizes: np.ndarray, cfg: SegmentationConfig) -> np.ndarray:
    return -(-np.asarray(sizes, dtype=np.int64) // cfg.payload_size)


def _require_discrete(msg: MessageSizeDistribution):
    if not msg.is_discrete:
        raise TypeError("expected a discrete message law; quantize continuous laws first")


def edge_probability(msg: MessageSizeDistribution, cfg: SegmentationConfig) -> float:
    """Probability that a generated packet is an edge packet, ``1 / E[k]``."""
    _require_discrete(msg)
    extra = np.dot(msg.weights, _segments(msg.sizes, cfg) - 1)
    return float(1.0 / (1.0 + extra))


def edge_distribution(msg: MessageSizeDistribution, cfg: SegmentationConfig) -> PointMassLaw:
    _require_discrete(msg)
    k = _segments(msg.sizes, cfg)
    edges = msg.sizes - (k - 1) * cfg.payload_size + cfg.swp_header
    sizes, weights = merge_point_masses(edges, msg.weights)
    return PointMassLaw(sizes, weights / weights.sum())


def _segment_discrete(msg: MessageSizeDistribution, cfg: SegmentationConfig) -> GeneratedPacketDistribution:
    pi_e = edge_probability(msg, cfg)
    edge = edge_distribution(msg, cfg)
    sizes = np.concatenate(([cfg.body_size], edge.sizes))
    weights = np.concatenate(([1.0 - pi_e], pi_e * edge.weights))
    sizes, weights = merge_point_masses(sizes, weights)
    return GeneratedPacketDistribution(
        sizes, weights / weights.sum(),
        edge_probability=pi_e, message_mean=msg.mean(), swp_header=cfg.swp_header,
    )


def _segment_continuous(msg: MessageSizeDistribution, cfg: SegmentationConfig, tail_mass: float,
                        max_size: int) -> GeneratedPacketDistribution:
    # Fold the quantized law block by block: a block of `payload` consecutive
    # message sizes shares the same k and maps onto every edge size once.
    ld = cfg.payload_size
    blocks_per_chunk = max(1, (1 << 21) // ld)
    edge = np.zeros(ld)
    total = 0.0
    k_mass = 0.0
    size_mass = 0.0
    for start, w in msg.iter_quantized(tail_mass, chunk=blocks_per_chunk * ld, max_size=max_size):
        rows = w.reshape(blocks_per_chunk, ld)
        block_k = (start - 1) // ld + 1 + np.arange(blocks_per_chunk)
        edge += rows.sum(axis=0)
        row_mass = rows.sum(axis=1)
        total += row_mass.sum()
        k_mass += np.dot(row_mass, block_k - 1)
        size_mass += np.dot(w, np.arange(start, start + len(w), dtype=float))
    pi_e = 1.0 / (1.0 + k_mass / total)
    edge_sizes = np.arange(1, ld + 1) + cfg.swp_header
    sizes = np.concatenate(([cfg.body_size], edge_sizes))
    weights = np.concatenate(([1.0 - pi_e], pi_e * edge / total))
    sizes, weights = merge_point_masses(sizes, weights)
    return GeneratedPacketDistribution(
        sizes, weights / weights.sum(),
        edge_probability=pi_e, message_mean=size_mass / total, swp_header=cfg.swp_header,
    )


def segment(msg: MessageSizeDistribution, cfg: SegmentationConfig,
            tail_mass: float = DEFAULT_TAIL_MASS,
            max_size: int = DEFAULT_MAX_SIZE) -> GeneratedPacketDistribution:
    """Generated-packet law ``F^(p)`` for a message law.

    Continuous laws are quantized to whole bytes with ``tail_mass`` left in the
    truncated tail (assigned to the truncation point). The result is identical
    to ``segment(msg.quantize(tail_mass), cfg)`` but never materializes the
    quantized law, so heavy tails stay cheap in memory.
    """
    if msg.is_discrete:
        return _segment_discrete(msg, cfg)
    return _segment_continuous(msg, cfg, tail_mass, max_size)


def segment_messages(message_sizes: np.ndarray, cfg: SegmentationConfig) -> np.ndarray:
    """Packet sizes produced by segmenting each message in order (body packets first)."""
    message_sizes = np.asarray(message_sizes, dtype=np.int64)
    k = _segments(message_sizes, cfg)
    ends = np.cumsum(k)
    out = np.full(int(ends[-1]) if len(ends) else 0, cfg.body_size, dtype=np.int64)
    out[ends - 1] = message_sizes - (k - 1) * cfg.payload_size + cfg.swp_header
    return out
