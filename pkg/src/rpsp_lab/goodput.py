"""Goodput of the size-preserving SWP sender and its constant-size approximation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .dcf_timing import DcfParams, expected_cycle_time
from .retransmission import LossModel, RetryPolicy, delivery_prob, log_expected_attempts
from .segmentation import GeneratedPacketDistribution


@dataclass(frozen=True)
class GoodputResult:
    G: float
    G_hat: float

    @property
    def relative_difference(self) -> float:
        if self.G == 0:
            raise ZeroDivisionError("goodput is zero: no packet can be delivered")
        return (self.G_hat - self.G) / self.G


def _goodput(sizes, weights, swp_header, loss, policy, params) -> float:
    sizes = np.asarray(sizes, dtype=float)
    payload_bits = 8 * (sizes - swp_header)
    delivered = np.dot(weights * np.asarray(delivery_prob(loss, policy, sizes)), payload_bits)
    if delivered <= 0:
        return 0.0
    log_cost = (np.log(weights)
                + np.asarray(log_expected_attempts(loss, policy, sizes))
                + np.log(np.asarray(expected_cycle_time(params, loss, policy, sizes))))
    return float(math.exp(math.log(delivered) - logsumexp(log_cost)))


def goodput(gen: GeneratedPacketDistribution, loss: LossModel, policy: RetryPolicy,
            params: DcfParams) -> float:
    """Delivered payload bits per second over the generated-packet law."""
    if gen.sizes[0] < gen.swp_header:
        raise ValueError("packet smaller than its SWP header")
    return _goodput(gen.sizes, gen.weights, gen.swp_header, loss, policy, params)


def goodput_approx(gen: GeneratedPacketDistribution, loss: LossModel, policy: RetryPolicy,
                   params: DcfParams) -> float:
    """Goodput when every packet is assumed to have the mean generated size (not rounded)."""
    return _goodput([gen.mean], [1.0], gen.swp_header, loss, policy, params)


def relative_difference(gen, loss, policy, params) -> float:
    return evaluate(gen, loss, policy, params).relative_difference


def evaluate(gen, loss, policy, params) -> GoodputResult:
    return GoodputResult(goodput(gen, loss, policy, params), goodput_approx(gen, loss, policy, params))
