"""Message-size laws: discrete, empirical, lognormal and Weibull.

All sizes are in bytes. Continuous laws are turned into byte-granular discrete
laws by :meth:`MessageSizeDistribution.quantize`, which is what the exact
segmentation pipeline consumes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
from scipy import special

DISCRETE_KINDS = ("discrete", "empirical")
CONTINUOUS_KINDS = ("lognormal", "weibull")

DEFAULT_TAIL_MASS = 1e-9
# The static-Web lognormal needs ~1.4e8 bytes of support at tail_mass=1e-9.
DEFAULT_MAX_SIZE = 200_000_000
_CHUNK = 1 << 21


class QuantizationError(ValueError):
    """Truncation point of a continuous law exceeds the configured cap."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MessageSizeDistribution:
    """A message-size law ``F^(m)``.

    Use the constructors :meth:`discrete`, :meth:`lognormal`, :meth:`weibull`
    and :meth:`from_csv` rather than the raw initializer.
    """

    kind: str
    sizes: np.ndarray | None = None
    weights: np.ndarray | None = None
    mu: float | None = None
    sigma_ln: float | None = None
    lam: float | None = None
    nu: float | None = None

    def __post_init__(self):
        if self.kind in DISCRETE_KINDS:
            sizes, weights = self.sizes, self.weights
            if sizes is None or weights is None or len(sizes) == 0 or len(sizes) != len(weights):
                raise ValueError("discrete laws need equal-length, nonempty sizes and weights")
            if sizes[0] <= 0:
                raise ValueError("message sizes must be strictly positive")
            if not np.all(sizes[1:] > sizes[:-1]):
                raise ValueError("message sizes must be strictly increasing")
            if not np.all(weights > 0):
                raise ValueError("message weights must be strictly positive")
            total = float(weights.sum())
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"message weights sum to {total!r}, not 1")
        elif self.kind == "lognormal":
            if self.mu is None or not (self.sigma_ln and self.sigma_ln > 0):
                raise ValueError("lognormal needs mu and sigma_ln > 0")
        elif self.kind == "weibull":
            if not (self.lam and self.lam > 0) or not (self.nu and self.nu > 0):
                raise ValueError("weibull needs lam > 0 and nu > 0")
        else:
            raise ValueError(f"unknown kind {self.kind!r}")

    # -- constructors -------------------------------------------------------

    @classmethod
    def discrete(cls, point_masses, kind: str = "discrete") -> MessageSizeDistribution:
        """Build from ``(size, weight)`` pairs; pairs may come in any order."""
        pairs = sorted((int(s), float(w)) for s, w in point_masses)
        sizes = np.array([s for s, _ in pairs], dtype=np.int64)
        weights = np.array([w for _, w in pairs], dtype=float)
        return cls(kind=kind, sizes=_readonly(sizes), weights=_readonly(weights))

    @classmethod
    def lognormal(cls, mu: float, sigma_ln: float) -> MessageSizeDistribution:
        return cls(kind="lognormal", mu=float(mu), sigma_ln=float(sigma_ln))

    @classmethod
    def weibull(cls, lam: float, nu: float) -> MessageSizeDistribution:
        return cls(kind="weibull", lam=float(lam), nu=float(nu))

    @classmethod
    def from_csv(cls, path) -> MessageSizeDistribution:
        """Load an empirical law from a ``size_bytes,probability`` CSV with a header row."""
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader, [])]
            if header != ["size_bytes", "probability"]:
                raise ValueError(f"{path}: expected header 'size_bytes,probability', got {header}")
            pairs = []
            for lineno, row in enumerate(reader, start=2):
                if not row or not "".join(row).strip():
                    continue
                try:
                    pairs.append((int(row[0]), float(row[1])))
                except (ValueError, IndexError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad row {row!r}") from exc
        sizes = [s for s, _ in pairs]
        if len(set(sizes)) != len(sizes):
            raise ValueError(f"{path}: duplicate sizes")
        return cls.discrete(pairs, kind="empirical")

    # -- evaluation ---------------------------------------------------------

    @property
    def is_discrete(self) -> bool:
        return self.kind in DISCRETE_KINDS

    def describe(self) -> dict:
        """JSON-friendly parameter echo."""
        if self.kind == "lognormal":
            return {"kind": "lognormal", "mu": self.mu, "sigma": self.sigma_ln}
        if self.kind == "weibull":
            return {"kind": "weibull", "lambda": self.lam, "nu": self.nu}
        return {
            "kind": self.kind,
            "points": [[int(s), float(w)] for s, w in zip(self.sizes, self.weights)]
            if len(self.sizes) <= 64 else f"<{len(self.sizes)} atoms>",
        }

    def cdf(self, x):
        x_arr = np.asarray(x, dtype=float)
        if self.is_discrete:
            cum = np.concatenate(([0.0], np.cumsum(self.weights)))
            cum[-1] = 1.0
            out = cum[np.searchsorted(self.sizes, x_arr, side="right")]
        elif self.kind == "lognormal":
            with np.errstate(divide="ignore"):
                z = (np.log(np.maximum(x_arr, 0.0)) - self.mu) / self.sigma_ln
            out = np.where(x_arr > 0, special.ndtr(z), 0.0)
        else:
            out = np.where(x_arr > 0, -np.expm1(-(self.lam * np.maximum(x_arr, 0.0)) ** self.nu), 0.0)
        return float(out) if out.ndim == 0 else out

    def sf(self, x):
        """Survival function ``1 - F(x)``, accurate deep in the tail."""
        x_arr = np.asarray(x, dtype=float)
        if self.is_discrete:
            return 1.0 - self.cdf(x_arr)
        if self.kind == "lognormal":
            with np.errstate(divide="ignore"):
                z = (np.log(np.maximum(x_arr, 0.0)) - self.mu) / self.sigma_ln
            out = np.where(x_arr > 0, special.ndtr(-z), 1.0)
        else:
            out = np.exp(-(self.lam * np.maximum(x_arr, 0.0)) ** self.nu)
        return float(out) if out.ndim == 0 else out

    def mean(self) -> float:
        if self.is_discrete:
            return float(np.dot(self.weights, self.sizes))
        if self.kind == "lognormal":
            return math.exp(self.mu + self.sigma_ln ** 2 / 2)
        return math.gamma(1 + 1 / self.nu) / self.lam

    def sample(self, rng: np.random.Generator, size=None):
        """Draw i.i.d. message sizes; continuous draws are rounded up to whole bytes."""
        if self.is_discrete:
            cum = np.cumsum(self.weights)
            u = rng.random(size) * cum[-1]
            idx = np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1)
            return self.sizes[idx]
        if self.kind == "lognormal":
            raw = rng.lognormal(self.mu, self.sigma_ln, size)
        else:
            raw = rng.weibull(self.nu, size) / self.lam
        return np.maximum(np.ceil(raw), 1).astype(np.int64)

    # -- quantization -------------------------------------------------------

    def truncation_point(self, tail_mass: float = DEFAULT_TAIL_MASS) -> int:
        """Smallest integer ``S >= 1`` with ``1 - F(S) <= tail_mass``."""
        if self.is_discrete:
            return int(self.sizes[-1])
        if self.kind == "lognormal":
            guess = math.exp(self.mu - self.sigma_ln * special.ndtri(tail_mass))
        else:
            guess = (-math.log(tail_mass)) ** (1 / self.nu) / self.lam
        s = max(1, math.ceil(guess))
        while s > 1 and self.sf(s - 1) <= tail_mass:
            s -= 1
        while self.sf(s) > tail_mass:
            s += 1
        return s

    def _check_tail(self, tail_mass: float, max_size: int) -> int:
        if not 0 < tail_mass <= 1e-6:
            raise ValueError(f"tail_mass must lie in (0, 1e-6], got {tail_mass}")
        s = self.truncation_point(tail_mass)
        if s > max_size:
            raise QuantizationError(
                f"{self.kind} law needs support up to {s} bytes for tail_mass={tail_mass}, "
                f"above the cap of {max_size}"
            )
        return s

    def iter_quantized(self, tail_mass: float = DEFAULT_TAIL_MASS, chunk: int = _CHUNK,
                       max_size: int = DEFAULT_MAX_SIZE) -> Iterator[tuple[int, np.ndarray]]:
        """Yield ``(first_size, weights)`` blocks of the byte-quantized law.

        Each block covers sizes ``first_size .. first_size + chunk - 1``; blocks are
        zero-padded past the truncation point. Weights are not renormalized (they
        telescope to 1 up to rounding).
        """
        if self.is_discrete:
            raise TypeError("iter_quantized only applies to continuous laws")
        last = self._check_tail(tail_mass, max_size)
        for start in range(1, last + 1, chunk):
            x = np.arange(start - 1, start + chunk, dtype=float)
            x[x > last] = last
            surv = self.sf(x)
            w = -np.diff(surv)
            if surv[0] > 0.5:
                # below the median, differences of the CDF cancel less
                w = np.where(surv[1:] > 0.5, np.diff(self.cdf(x)), w)
            stop = last - start
            if stop < chunk:
                w[stop] += surv[-1]  # residual tail mass goes to the truncation point
                w[stop + 1:] = 0.0
            yield start, w

    def quantize(self, tail_mass: float = DEFAULT_TAIL_MASS,
                 max_size: int = DEFAULT_MAX_SIZE) -> MessageSizeDistribution:
        """Byte-granular discrete version of this law (identity on discrete laws)."""
        if self.is_discrete:
            return self
        last = self._check_tail(tail_mass, max_size)
        weights = np.empty(last, dtype=float)
        for start, w in self.iter_quantized(tail_mass, max_size=max_size):
            n = min(len(w), last - start + 1)
            weights[start - 1:start - 1 + n] = w[:n]
        weights /= weights.sum()
        dtype = np.int32 if last < np.iinfo(np.int32).max else np.int64
        sizes = np.arange(1, last + 1, dtype=dtype)
        # zero-mass bytes (e.g. underflow far in a light tail) are dropped
        if not np.all(weights > 0):
            keep = weights > 0
            sizes, weights = sizes[keep], weights[keep]
            weights /= weights.sum()
        return MessageSizeDistribution(kind="discrete", sizes=_readonly(sizes), weights=_readonly(weights))


def cdf(dist: MessageSizeDistribution, x):
    return dist.cdf(x)


def mean(dist: MessageSizeDistribution) -> float:
    return dist.mean()


def sample(dist: MessageSizeDistribution, rng: np.random.Generator, size=None):
    return dist.sample(rng, size)


def quantize(dist: MessageSizeDistribution, tail_mass: float = DEFAULT_TAIL_MASS,
             max_size: int = DEFAULT_MAX_SIZE) -> MessageSizeDistribution:
    return dist.quantize(tail_mass, max_size)
