"""Parameter sweeps behind the CLI subcommands, with CSV and manifest output."""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, presets
from .config import ExperimentConfig
from .goodput import evaluate
from .retransmission import INFINITE, LossModel, RetryPolicy, frame_distribution, transferred_distribution
from .segmentation import GeneratedPacketDistribution, SegmentationConfig, segment
from .simulator import SimConfig, analytic_bundle, compare_to_analytic, run_simulation

MANIFEST_VERSION = 1
COMMANDS = ("dist", "mean-size", "goodput", "simulate", "table2")
# failures that invalidate one grid cell without stopping the sweep
CELL_ERRORS = (ArithmeticError, ValueError)


@dataclass(frozen=True)
class Cell:
    p_e: float
    policy: RetryPolicy
    payload: int

    def key(self) -> list:
        return [repr(self.p_e), str(self.policy), self.payload]

    def tag(self) -> str:
        return f"pe{self.p_e:.6g}_n{self.policy}_ld{self.payload}"


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path: Path, header: list[str], rows) -> Path:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _status(exc: Exception) -> str:
    return f"invalid: {type(exc).__name__}: {exc}".replace("\n", " ")


class Runner:
    """Evaluates one subcommand over the configured grid."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out = cfg.resolved_output_dir()
        self._segmentations: dict = {}

    # segmentation is the expensive step; it depends only on the payload here
    def generated(self, payload: int) -> GeneratedPacketDistribution:
        if payload not in self._segmentations:
            seg = SegmentationConfig(payload, self.cfg.swp_header)
            self._segmentations[payload] = segment(self.cfg.message_law(), seg, self.cfg.tail_mass)
        return self._segmentations[payload]

    def loss(self, p_e: float) -> LossModel:
        return LossModel(p_e, self.cfg.dcf.lower_header, self.cfg.size_unit)

    def cells(self) -> list[Cell]:
        return [Cell(p, pol, ld) for ld, pol, p in
                itertools.product(self.cfg.payloads, self.cfg.policies(), self.cfg.p_e)]

    def _map(self, fn, cells):
        for ld in self.cfg.payloads:
            self.generated(ld)
        with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
            return list(pool.map(fn, cells))

    # -- cells ---------------------------------------------------------------

    def _mean_size(self, cell: Cell) -> list:
        gen = self.generated(cell.payload)
        try:
            tq = transferred_distribution(gen, self.loss(cell.p_e), cell.policy)
            vals = [gen.mean, tq.mean, gen.max_size, tq.mean_attempts]
            if not all(math.isfinite(v) for v in vals):
                raise ArithmeticError("non-finite result")
            return cell.key() + vals + ["ok"]
        except CELL_ERRORS as exc:
            return cell.key() + [None] * 4 + [_status(exc)]

    def _goodput(self, cell: Cell) -> list:
        gen = self.generated(cell.payload)
        try:
            res = evaluate(gen, self.loss(cell.p_e), cell.policy, self.cfg.dcf)
            rel = res.relative_difference
            return cell.key() + [res.G, res.G_hat, rel, res.G / 1e6, res.G_hat / 1e6, "ok"]
        except (*CELL_ERRORS, ZeroDivisionError) as exc:
            return cell.key() + [None] * 5 + [_status(exc)]

    def _dist(self, cell: Cell) -> list:
        gen = self.generated(cell.payload)
        try:
            loss = self.loss(cell.p_e)
            tq = transferred_distribution(gen, loss, cell.policy)
            laws = (("generated", gen), ("transferred", tq), ("frame", frame_distribution(tq, loss)))
        except CELL_ERRORS as exc:
            return [cell.key() + [None, None, None, _status(exc)]]
        rows = []
        for name, law in laws:
            cdf = law.cdf(law.sizes)
            rows.extend(cell.key() + [name, s, c, "ok"] for s, c in zip(law.sizes.tolist(), cdf.tolist()))
        return rows

    def _simulate(self, cell: Cell) -> tuple[list, dict | None]:
        sim = self.cfg.simulation
        seg = SegmentationConfig(cell.payload, self.cfg.swp_header)
        try:
            if sim.mode == "message":
                source = dict(messages=self.cfg.message_law(), segmentation=seg)
            else:
                source = dict(packets=self.generated(cell.payload))
            sc = SimConfig(seed=sim.seed, num_generated_packets=sim.packets, loss=self.loss(cell.p_e),
                           policy=cell.policy, dcf=self.cfg.dcf, replications=sim.replications,
                           method=sim.method, **source)
            report = run_simulation(sc)
            bundle = analytic_bundle(sc, self.cfg.tail_mass, generated=self.generated(cell.payload))
            cmp = compare_to_analytic(report, bundle)
        except CELL_ERRORS as exc:
            return cell.key() + [None] * 10 + [_status(exc)], None
        row = cell.key() + [
            report.mean_transferred_size, bundle.transferred.mean,
            report.mean_attempts, bundle.transferred.mean_attempts,
            report.goodput, bundle.goodput,
            cmp.deltas["ks_transferred"], cmp.deltas["mean_transferred_size"],
            cmp.deltas["mean_attempts"], cmp.deltas["goodput"],
            "ok" if cmp.passed else "flagged: " + " ".join(cmp.flags),
        ]
        detail = report.to_dict()
        detail["comparison"] = {"deltas": cmp.deltas, "thresholds": cmp.thresholds,
                                "passed": cmp.passed, "flags": cmp.flags,
                                "cycle_time_per_size_error": cmp.cycle_time_per_size_error}
        detail["analytic"] = {"mean_transferred_size": bundle.transferred.mean,
                              "mean_attempts": bundle.transferred.mean_attempts,
                              "mean_cycle_time_s": bundle.mean_cycle_time, "goodput_bps": bundle.goodput}
        return row, (detail, report)

    # -- commands ------------------------------------------------------------

    def run(self, command: str) -> list[Path]:
        if command not in COMMANDS:
            raise ValueError(f"unknown command {command!r}")
        self.out.mkdir(parents=True, exist_ok=True)
        stem = command.replace("-", "_")
        head = ["p_e", "n_RL", "payload_bytes"]
        files = []
        if command == "mean-size":
            rows = self._map(self._mean_size, self.cells())
            files.append(write_csv(self.out / f"{stem}.csv", head + [
                "mean_generated_bytes", "mean_transferred_bytes", "max_generated_bytes",
                "mean_attempts", "status"], rows))
        elif command == "goodput":
            rows = self._map(self._goodput, self.cells())
            files.append(write_csv(self.out / f"{stem}.csv", head + [
                "G_bps", "Ghat_bps", "rel_diff", "G_Mbps", "Ghat_Mbps", "status"], rows))
        elif command == "dist":
            rows = itertools.chain.from_iterable(self._map(self._dist, self.cells()))
            files.append(write_csv(self.out / f"{stem}.csv", head + ["law", "size_bytes", "cdf", "status"], rows))
        elif command == "simulate":
            cells = self.cells()
            results = self._map(self._simulate, cells)
            files.append(write_csv(self.out / f"{stem}.csv", head + [
                "sim_mean_transferred_bytes", "mean_transferred_bytes", "sim_mean_attempts", "mean_attempts",
                "sim_goodput_bps", "goodput_bps", "ks_transferred", "rel_err_mean_transferred",
                "rel_err_mean_attempts", "rel_err_goodput", "status"], [r for r, _ in results]))
            for cell, (_, extra) in zip(cells, results):
                if extra is None:
                    continue
                detail, report = extra
                path = self.out / f"{stem}_{cell.tag()}.json"
                path.write_text(json.dumps(detail, indent=2, sort_keys=True) + "\n")
                files.append(path)
                files.append(report.write_csv(self.out / f"{stem}_{cell.tag()}_cdf.csv"))
        else:
            files.append(self._table2(stem))
        files.append(self.write_manifest(command, files))
        return files

    def _table2(self, stem: str) -> Path:
        if self.cfg.preset is None or self.cfg.distribution is not None:
            raise ValueError("table2 needs a named preset")
        gen = self.generated(presets.PAYLOAD) if presets.PAYLOAD in self.cfg.payloads else None
        if gen is None:
            gen = segment(self.cfg.message_law(), SegmentationConfig(presets.PAYLOAD, self.cfg.swp_header),
                          self.cfg.tail_mass)
        rows = []
        for p_e, ref in zip(presets.TABLE2_PE, presets.TABLE2[self.cfg.preset]):
            try:
                value = transferred_distribution(gen, self.loss(p_e), INFINITE).mean
                rows.append([self.cfg.preset, repr(p_e), presets.PAYLOAD, "inf", value, ref,
                             (value - ref) / ref, gen.max_size, "ok"])
            except CELL_ERRORS as exc:
                rows.append([self.cfg.preset, repr(p_e), presets.PAYLOAD, "inf", None, ref, None, None,
                             _status(exc)])
        return write_csv(self.out / f"{stem}.csv", [
            "preset", "p_e", "payload_bytes", "n_RL", "mean_transferred_bytes", "reference_bytes",
            "rel_error", "max_generated_bytes", "status"], rows)

    def write_manifest(self, command: str, files: list[Path]) -> Path:
        outputs = {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in files}
        manifest = {
            "manifest_version": MANIFEST_VERSION,
            "package_version": __version__,
            "command": command,
            "config": to_config_json(self.cfg),
            "outputs": outputs,
        }
        path = self.out / f"manifest_{command.replace('-', '_')}.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path


def to_config_json(cfg: ExperimentConfig) -> dict:
    """Resolved configuration in the same shape :func:`config.from_dict` reads.

    The output directory is left out so that reruns elsewhere stay byte-identical.
    """
    out = {
        "sweep": {
            "p_e": list(cfg.p_e),
            "retry_limit": [str(p) if p.infinite else int(p.retry_limit) for p in cfg.policies()],
            "payload": list(cfg.payloads),
        },
        "dcf": cfg.dcf.to_dict(),
        "size_unit": cfg.size_unit,
        "swp_header": cfg.swp_header,
        "tail_mass": cfg.tail_mass,
        "simulation": {k: getattr(cfg.simulation, k) for k in ("seed", "packets", "replications", "method", "mode")},
        "workers": cfg.workers,
    }
    if cfg.distribution is not None:
        out["distribution"] = cfg.distribution
    else:
        out["preset"] = cfg.preset
    return out


def run_experiment(cfg: ExperimentConfig, command: str) -> list[Path]:
    return Runner(cfg).run(command)
