"""Single-sender IEEE 802.11 DCF cycle times (no collisions, negligible propagation delay)."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .retransmission import _LOG_TINY, DivergenceError, LossModel, RetryPolicy, _log_loss, _scalar


@dataclass(frozen=True)
class DcfParams:
    """MAC/PHY constants. Times in seconds, rates in bit/s, sizes in bytes."""

    slot: float = 20e-6
    cw_min: int = 31
    cw_max: int = 1023
    data_rate: float = 11e6
    basic_rate: float = 1e6
    t_sifs: float = 10e-6
    t_difs: float = 50e-6
    t_eifs: float = 263e-6
    ack_size: int = 14
    lower_header: int = 24

    def __post_init__(self):
        if not 0 <= self.cw_min <= self.cw_max:
            raise ValueError("need 0 <= cw_min <= cw_max")
        if self.data_rate <= 0 or self.basic_rate <= 0:
            raise ValueError("rates must be positive")
        for name in ("slot", "t_sifs", "t_difs", "t_eifs", "ack_size", "lower_header"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)

    def scaled_time(self, factor: float) -> DcfParams:
        """Same link with every duration multiplied by ``factor`` (rates divided)."""
        return DcfParams(
            slot=self.slot * factor, cw_min=self.cw_min, cw_max=self.cw_max,
            data_rate=self.data_rate / factor, basic_rate=self.basic_rate / factor,
            t_sifs=self.t_sifs * factor, t_difs=self.t_difs * factor, t_eifs=self.t_eifs * factor,
            ack_size=self.ack_size, lower_header=self.lower_header,
        )


def contention_window(params: DcfParams, r: int) -> int:
    """``CW_r = min(2^r (CW_min + 1) - 1, CW_max)``."""
    if r < 0:
        raise ValueError("backoff stage must be nonnegative")
    if r >= 64:
        return params.cw_max
    return min((params.cw_min + 1) * 2 ** r - 1, params.cw_max)


def cap_stage(params: DcfParams) -> int:
    """First backoff stage whose window equals ``CW_max``."""
    r = 0
    while contention_window(params, r) < params.cw_max:
        r += 1
    return r


def mean_backoff(params: DcfParams, r: int) -> float:
    """Mean backoff counter (in slots) at stage ``r``; the counter is uniform on ``[0, CW_r]``."""
    return contention_window(params, r) / 2


def t_success(params: DcfParams, x):
    x = np.asarray(x, dtype=float)
    out = (8 * (x + params.ack_size) / params.data_rate
           + 8 * 2 * params.lower_header / params.basic_rate
           + params.t_sifs + params.t_difs)
    return _scalar(out)


def t_bit_error(params: DcfParams, x):
    x = np.asarray(x, dtype=float)
    out = 8 * x / params.data_rate + 8 * params.lower_header / params.basic_rate + params.t_eifs
    return _scalar(out)


def mean_backoff_slots(params: DcfParams, loss: LossModel, policy: RetryPolicy, x):
    """Mean backoff slots preceding one transmission attempt of a size-``x`` packet.

    This is ``(1 - g) / (1 - g^(n+1)) * sum_{r<=n} b_r g^r``, i.e. the backoff
    spent per packet divided by the expected number of attempts per packet.
    Stages from the window cap onward are summed as a geometric series.
    """
    log_q = np.asarray(loss.log_success(x), dtype=float)
    if policy.infinite and np.any(np.isneginf(log_q)):
        raise DivergenceError("divergent backoff: loss probability is 1 with unlimited retries")
    q = np.exp(log_q)
    log_g = _log_loss(log_q)
    r0 = cap_stage(params)
    b_cap = mean_backoff(params, r0)
    n = policy.retry_limit
    head = min(r0 - 1, n)

    def g_pow(r):
        return np.ones_like(log_g) if r == 0 else np.exp(r * log_g)

    with np.errstate(divide="ignore", invalid="ignore", under="ignore"):
        prefix = sum(mean_backoff(params, r) * g_pow(r) for r in range(int(head) + 1))
        if policy.infinite:
            # delivery is certain; tail sum_{r>=r0} b_cap g^r = b_cap g^r0 / q
            return _scalar(q * prefix + b_cap * g_pow(r0))
        delivery = -np.expm1((n + 1) * log_g)
        if n >= r0:
            tail = b_cap * g_pow(r0) * -np.expm1((n - r0 + 1) * log_g)
        else:
            tail = 0.0
        value = (q * prefix + tail) / delivery
        # no success possible: every one of the n+1 attempts happens
        flat = sum(mean_backoff(params, r) for r in range(int(min(n, r0)) + 1))
        flat += b_cap * max(0, n - r0)
        value = np.where(log_q < _LOG_TINY, flat / (n + 1), value)
    return _scalar(value)


def tau(params: DcfParams, loss: LossModel, policy: RetryPolicy, x):
    """Per-slot transmission probability of the lone sender."""
    return _scalar(1.0 / (1.0 + np.asarray(mean_backoff_slots(params, loss, policy, x))))


def cycle_time_forms(params: DcfParams, loss: LossModel, policy: RetryPolicy, x):
    """Both expressions of ``E[T^cycle | L = x]``: via ``tau`` and in closed form."""
    slots = np.asarray(mean_backoff_slots(params, loss, policy, x), dtype=float)
    g = -np.expm1(np.asarray(loss.log_success(x), dtype=float))
    airtime = (1 - g) * t_success(params, x) + g * t_bit_error(params, x)
    t = 1.0 / (1.0 + slots)
    via_tau = (1 - t) * params.slot / t + airtime
    closed = params.slot * slots + airtime
    return _scalar(via_tau), _scalar(closed)


def expected_cycle_time(params: DcfParams, loss: LossModel, policy: RetryPolicy, x, rtol: float = 1e-12):
    """Mean duration of one transmission attempt (backoff plus airtime) for size ``x``."""
    via_tau, closed = cycle_time_forms(params, loss, policy, x)
    if not np.allclose(via_tau, closed, rtol=rtol, atol=0):
        raise ArithmeticError("cycle-time forms disagree")
    return closed
