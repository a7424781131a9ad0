"""Frame loss, retry-limited attempts and the size-biased transferred-packet law.

Everything is driven by the log success probability of a single transmission,
``log(1 - g(x))``, so that loss probabilities within 1e-300 of one still give
finite attempt counts (in log form) and reweighting never overflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .laws import PointMassLaw
from .segmentation import GeneratedPacketDistribution

# Success probabilities below this are treated as exactly zero.
_TINY = 1e-300
_LOG_TINY = math.log(_TINY)


class DivergenceError(ArithmeticError):
    """Expected attempt count is infinite (unlimited retries over a link that always loses)."""


@dataclass(frozen=True)
class LossModel:
    bit_error_rate: float
    lower_header: int = 24
    size_unit: str = "bits"

    def __post_init__(self):
        if not 0 <= self.bit_error_rate < 1:
            raise ValueError("bit_error_rate must lie in [0, 1)")
        if self.lower_header < 0:
            raise ValueError("lower_header must be nonnegative")
        if self.size_unit not in ("bits", "bytes"):
            raise ValueError("size_unit must be 'bits' or 'bytes'")

    def log_success(self, x):
        """``log(1 - g(x))`` for transferred-packet size ``x`` in bytes."""
        units = 8 if self.size_unit == "bits" else 1
        exponent = units * (np.asarray(x, dtype=float) + self.lower_header)
        if self.bit_error_rate == 0:
            return np.zeros_like(exponent)
        return exponent * math.log1p(-self.bit_error_rate)


@dataclass(frozen=True)
class RetryPolicy:
    """Retry limit ``n_RL`` (``math.inf`` for unlimited retransmissions)."""

    retry_limit: float = 7

    def __post_init__(self):
        n = self.retry_limit
        if n != math.inf and (n < 0 or int(n) != n):
            raise ValueError("retry_limit must be a nonnegative integer or math.inf")

    @property
    def infinite(self) -> bool:
        return self.retry_limit == math.inf

    @property
    def max_attempts(self) -> float:
        return self.retry_limit + 1

    def __str__(self) -> str:
        return "inf" if self.infinite else str(int(self.retry_limit))

    @classmethod
    def parse(cls, value) -> RetryPolicy:
        if isinstance(value, str):
            value = value.strip().lower()
            if value in ("inf", "infinite", "infinity"):
                return cls(math.inf)
            return cls(int(value))
        return cls(value)


INFINITE = RetryPolicy(math.inf)


def _scalar(out):
    return float(out) if np.ndim(out) == 0 else out


def _log_loss(log_q):
    """``log g`` from ``log(1 - g)``; ``-inf`` on an error-free link."""
    log_q = np.asarray(log_q, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(log_q > -math.log(2), np.log(-np.expm1(log_q)), np.log1p(-np.exp(log_q)))


def loss_prob(loss: LossModel, x):
    """Per-transmission loss probability ``g(x)``."""
    return _scalar(-np.expm1(loss.log_success(x)))


def log_expected_attempts(loss: LossModel, policy: RetryPolicy, x):
    """``log h(x, n_RL)``, the log of the expected number of transmissions per packet."""
    log_q = np.asarray(loss.log_success(x), dtype=float)
    if policy.infinite:
        if np.any(np.isneginf(log_q)):
            raise DivergenceError("divergent attempt count: loss probability is 1")
        return _scalar(-log_q)
    n1 = policy.max_attempts
    with np.errstate(divide="ignore", invalid="ignore"):
        log_delivery = np.log(-np.expm1(n1 * _log_loss(log_q)))
        out = np.where(log_q < _LOG_TINY, math.log(n1), log_delivery - log_q)
    return _scalar(out)


def expected_attempts(loss: LossModel, policy: RetryPolicy, x):
    """``h(x, n_RL) = (1 - g^(n_RL+1)) / (1 - g)``."""
    return _scalar(np.exp(log_expected_attempts(loss, policy, x)))


def delivery_prob(loss: LossModel, policy: RetryPolicy, x):
    """Probability that a packet is delivered within the retry limit, ``1 - g^(n_RL+1)``."""
    log_q = np.asarray(loss.log_success(x), dtype=float)
    if policy.infinite:
        return _scalar(np.where(np.isneginf(log_q), 0.0, 1.0))
    with np.errstate(divide="ignore"):
        return _scalar(-np.expm1(policy.max_attempts * _log_loss(log_q)))


@dataclass(frozen=True, eq=False)
class TransferredPacketDistribution(PointMassLaw):
    """Transferred-packet law ``F^(q)``: ``F^(p)`` reweighted by expected attempts."""

    log_mean_attempts: float = 0.0
    asymptotic_max: float = float("nan")

    @property
    def mean_attempts(self) -> float:
        """``E[R + 1]``; ``inf`` if it overflows a float (see ``log_mean_attempts``)."""
        with np.errstate(over="ignore"):
            return float(np.exp(self.log_mean_attempts))


def transferred_distribution(gen: GeneratedPacketDistribution, loss: LossModel,
                             policy: RetryPolicy) -> TransferredPacketDistribution:
    log_h = np.asarray(log_expected_attempts(loss, policy, gen.sizes), dtype=float)
    log_w = np.log(gen.weights) + log_h
    log_total = float(logsumexp(log_w))
    if np.all(log_h == log_h[0]):
        # a constant attempt count leaves the law unchanged; skip the rounding
        weights = np.array(gen.weights)
        log_total = float(log_h[0])
    else:
        weights = np.exp(log_w - log_total)
        # atoms can underflow to zero weight at extreme loss; keep the support intact
        weights = np.maximum(weights, np.finfo(float).tiny)
        weights /= weights.sum()
    return TransferredPacketDistribution(
        gen.sizes, weights,
        log_mean_attempts=log_total, asymptotic_max=asymptotic_max(gen),
    )


def asymptotic_max(gen: PointMassLaw):
    """Limit of the mean transferred size as the bit error rate tends to one."""
    return gen.max_size


def frame_distribution(tq: PointMassLaw, loss: LossModel) -> PointMassLaw:
    """Frame-size law: every transferred-packet atom grows by the lower-layer header."""
    return tq.shifted(loss.lower_header)
