"""Packet-size distributions, DCF cycle times and goodput under retransmitted packet
size preservation, with a seeded Monte Carlo cross-check."""

__version__ = "0.1.0"

from .dcf_timing import DcfParams, contention_window, expected_cycle_time, tau
from .goodput import GoodputResult, evaluate, goodput, goodput_approx, relative_difference
from .laws import PointMassLaw, ks_distance
from .message_models import MessageSizeDistribution, QuantizationError
from .retransmission import (
    INFINITE, DivergenceError, LossModel, RetryPolicy, delivery_prob, expected_attempts,
    frame_distribution, loss_prob, transferred_distribution,
)
from .segmentation import SegmentationConfig, edge_probability, segment, segment_messages
from .simulator import (
    ParameterMismatchError, SimConfig, analytic_bundle, compare_to_analytic, run_simulation,
)

__all__ = [
    "DcfParams", "DivergenceError", "GoodputResult", "INFINITE", "LossModel",
    "MessageSizeDistribution", "ParameterMismatchError", "PointMassLaw", "QuantizationError",
    "RetryPolicy", "SegmentationConfig", "SimConfig", "analytic_bundle", "compare_to_analytic",
    "contention_window", "delivery_prob", "edge_probability", "evaluate", "expected_attempts",
    "expected_cycle_time", "frame_distribution", "goodput", "goodput_approx", "ks_distance",
    "loss_prob", "relative_difference", "run_simulation", "segment", "segment_messages", "tau",
    "transferred_distribution",
]
