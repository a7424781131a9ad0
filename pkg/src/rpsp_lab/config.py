"""Experiment configuration: JSON file, then command-line overrides (flags win)."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from . import presets
from .dcf_timing import DcfParams
from .message_models import DEFAULT_TAIL_MASS, MessageSizeDistribution
from .retransmission import RetryPolicy

OUT_ENV = "RPSP_LAB_OUT"
DEFAULT_OUT = "rpsp_out"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimulationBlock:
    seed: int = 42
    packets: int = 1_000_000
    replications: int = 4
    method: str = "geometric"
    mode: str = "packet"


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str | None = "static"
    distribution: dict | None = None
    p_e: tuple = (1e-6, 1e-5, 1e-4, 1e-3)
    retry_limits: tuple = (7,)
    payloads: tuple = (presets.PAYLOAD,)
    dcf: DcfParams = field(default_factory=DcfParams)
    size_unit: str = "bits"
    swp_header: int = presets.SWP_HEADER
    tail_mass: float = DEFAULT_TAIL_MASS
    simulation: SimulationBlock = field(default_factory=SimulationBlock)
    output_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        if not self.p_e or not self.retry_limits or not self.payloads:
            raise ConfigError("sweep grids must be nonempty")
        if self.preset is None and self.distribution is None:
            raise ConfigError("give a preset or an inline distribution")
        if self.preset is not None and self.preset not in presets.PRESETS:
            raise ConfigError(f"preset: unknown preset {self.preset!r}; known: {sorted(presets.PRESETS)}")

    @property
    def scenario(self) -> str:
        return self.preset if self.distribution is None else self.distribution.get("kind", "inline")

    def message_law(self) -> MessageSizeDistribution:
        if self.distribution is None:
            return presets.preset(self.preset)
        return parse_distribution(self.distribution, "distribution")

    def policies(self) -> list[RetryPolicy]:
        return [RetryPolicy.parse(n) for n in self.retry_limits]

    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir or os.environ.get(OUT_ENV) or DEFAULT_OUT)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["retry_limits"] = [str(p) for p in self.policies()]
        out["output_dir"] = str(self.resolved_output_dir())
        out["p_e"] = list(self.p_e)
        out["payloads"] = list(self.payloads)
        return out


def _num(value, where: str, kind=float, positive: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if kind is int and int(value) != value:
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(f"{where}: must be positive, got {value!r}")
    return kind(value)


def parse_distribution(block: dict, where: str) -> MessageSizeDistribution:
    if not isinstance(block, dict) or "kind" not in block:
        raise ConfigError(f"{where}: expected an object with a 'kind' field")
    kind = block["kind"]
    try:
        if kind == "lognormal":
            return MessageSizeDistribution.lognormal(_num(block.get("mu"), f"{where}.mu"),
                                                     _num(block.get("sigma"), f"{where}.sigma"))
        if kind == "weibull":
            return MessageSizeDistribution.weibull(_num(block.get("lambda"), f"{where}.lambda"),
                                                   _num(block.get("nu"), f"{where}.nu"))
        if kind == "discrete":
            return MessageSizeDistribution.discrete(block.get("points", []))
        if kind == "empirical":
            return MessageSizeDistribution.from_csv(block["path"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}.kind: unknown kind {kind!r}")


def _p_e_grid(value, where: str) -> tuple:
    if isinstance(value, dict):
        try:
            grid = presets.log_grid(_num(value.get("start"), f"{where}.start"),
                                    _num(value.get("stop"), f"{where}.stop"),
                                    _num(value.get("per_decade", 1), f"{where}.per_decade", int))
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
        return tuple(grid)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, list):
        raise ConfigError(f"{where}: expected a list or a {{start, stop, per_decade}} object")
    out = []
    for i, v in enumerate(value):
        v = _num(v, f"{where}[{i}]")
        if not 0 <= v < 1:
            raise ConfigError(f"{where}[{i}]: bit error rate must lie in [0, 1)")
        out.append(v)
    return tuple(out)


def _retry_grid(value, where: str) -> tuple:
    if not isinstance(value, list):
        value = [value]
    out = []
    for i, v in enumerate(value):
        try:
            policy = RetryPolicy.parse(v)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}[{i}]: expected a nonnegative integer or \"inf\", got {v!r}") from None
        out.append(math.inf if policy.infinite else int(policy.retry_limit))
    return tuple(out)


def _int_grid(value, where: str) -> tuple:
    if not isinstance(value, list):
        value = [value]
    return tuple(_num(v, f"{where}[{i}]", int, positive=True) for i, v in enumerate(value))


_TOP_KEYS = {"preset", "distribution", "sweep", "dcf", "size_unit", "swp_header", "tail_mass",
             "simulation", "output_dir", "workers"}


def from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown field(s): {', '.join(sorted(unknown))}")
    kw = {}
    if "distribution" in raw:
        parse_distribution(raw["distribution"], "distribution")
        kw["distribution"] = raw["distribution"]
        kw["preset"] = raw.get("preset")
    elif "preset" in raw:
        kw["preset"] = raw["preset"]
    sweep = raw.get("sweep", {})
    if not isinstance(sweep, dict):
        raise ConfigError("sweep: expected an object")
    if "p_e" in sweep:
        kw["p_e"] = _p_e_grid(sweep["p_e"], "sweep.p_e")
    if "retry_limit" in sweep:
        kw["retry_limits"] = _retry_grid(sweep["retry_limit"], "sweep.retry_limit")
    if "payload" in sweep:
        kw["payloads"] = _int_grid(sweep["payload"], "sweep.payload")
    if "dcf" in raw:
        try:
            kw["dcf"] = DcfParams(**raw["dcf"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"dcf: {exc}") from exc
    if "size_unit" in raw:
        if raw["size_unit"] not in ("bits", "bytes"):
            raise ConfigError("size_unit: expected 'bits' or 'bytes'")
        kw["size_unit"] = raw["size_unit"]
    if "swp_header" in raw:
        kw["swp_header"] = _num(raw["swp_header"], "swp_header", int)
    if "tail_mass" in raw:
        kw["tail_mass"] = _num(raw["tail_mass"], "tail_mass", positive=True)
    if "simulation" in raw:
        try:
            kw["simulation"] = SimulationBlock(**raw["simulation"])
        except TypeError as exc:
            raise ConfigError(f"simulation: {exc}") from exc
    if "output_dir" in raw:
        kw["output_dir"] = str(raw["output_dir"])
    if "workers" in raw:
        kw["workers"] = _num(raw["workers"], "workers", int, positive=True)
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    # a run manifest carries its resolved config under "config"
    if isinstance(raw, dict) and "manifest_version" in raw:
        raw = raw.get("config")
    try:
        return from_dict(raw)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def with_overrides(cfg: ExperimentConfig, **flags) -> ExperimentConfig:
    """Apply non-``None`` flag values on top of ``cfg``."""
    changes = {}
    if flags.get("preset") is not None:
        changes["preset"] = flags["preset"]
        changes["distribution"] = None
    if flags.get("pe") is not None:
        changes["p_e"] = _p_e_grid(list(flags["pe"]), "--pe")
    if flags.get("retry_limit") is not None:
        changes["retry_limits"] = _retry_grid(list(flags["retry_limit"]), "--retry-limit")
    if flags.get("payload") is not None:
        changes["payloads"] = _int_grid(list(flags["payload"]), "--payload")
    if flags.get("size_unit") is not None:
        changes["size_unit"] = flags["size_unit"]
    if flags.get("out") is not None:
        changes["output_dir"] = str(flags["out"])
    if flags.get("workers") is not None:
        changes["workers"] = flags["workers"]
    if flags.get("tail_mass") is not None:
        changes["tail_mass"] = flags["tail_mass"]
    sim = {k: flags[f"sim_{k}"] for k in ("seed", "packets", "replications", "method", "mode")
           if flags.get(f"sim_{k}") is not None}
    if sim:
        changes["simulation"] = replace(cfg.simulation, **sim)
    return replace(cfg, **changes)
