"""Web-object scenarios and link constants used for the reported numbers."""

from __future__ import annotations

import math

from .dcf_timing import DcfParams
from .message_models import MessageSizeDistribution

SWP_HEADER = 34
LOWER_HEADER = 24
PAYLOAD = 2312
DEFAULT_RETRY_LIMIT = 7

TABLE1_DCF = DcfParams()

PRESETS = {
    # static Web objects (long-tailed)
    "static": MessageSizeDistribution.lognormal(6.34, 2.07),
    # dynamic Web objects, entertainment site
    "dynamic": MessageSizeDistribution.weibull(4.02e-4, 1.9),
}

# mean transferred size (bytes) at payload 2312, unlimited retries
TABLE2_PE = (1e-6, 1e-5, 1e-4, 1e-3)
TABLE2 = {
    "static": (1761.4, 1815.0, 2161.4, 2344.6),
    "dynamic": (1552.0, 1592.9, 1926.8, 2334.8),
}
TABLE2_MAX_PACKET = 2346.0

# sweep grids behind the figure-style CSVs
FIGURE_PE = dict(start=1e-7, stop=1e-3, per_decade=4)
FIGURE_PAYLOADS = (576, 1024, 1500, 2312)
FIG6_RETRY_LIMITS = tuple(range(8))
FIG3_RETRY_LIMIT = math.inf


def preset(name: str) -> MessageSizeDistribution:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def log_grid(start: float, stop: float, per_decade: int) -> list[float]:
    """Log-spaced grid from ``start`` to ``stop`` inclusive with ``per_decade`` points per decade."""
    if not 0 < start <= stop:
        raise ValueError("need 0 < start <= stop")
    if per_decade < 1:
        raise ValueError("per_decade must be >= 1")
    lo, hi = math.log10(start), math.log10(stop)
    n = round((hi - lo) * per_decade)
    if n == 0:
        return [start]
    return [float(10 ** (lo + (hi - lo) * i / n)) for i in range(n + 1)]
