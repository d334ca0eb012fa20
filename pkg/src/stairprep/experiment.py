"""Declarative experiments: config schema, target building, training runs,
evaluation reports and aggregated tables.

A run directory ``<output_dir>/<run_id>/`` holds::

    config.yaml            copy of the experiment config
    target.json            target MPS
    target_meta.json       energy / DMRG status / bond entropies of the target
    metrics.csv            epoch,n_layers,loss_F,avg_entropy,trunc_err,eta
    timing.csv             epoch,wall_ms
    entropy_profiles.csv   epoch,n_layers,S_1..S_{N-1} (every k epochs)
    stages.csv             per-stage final and best loss
    checkpoints/stage_<n>.json, checkpoint.json
"""

from __future__ import annotations

import dataclasses
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import serialization as ser
from .circuit import StairCircuit, apply_circuit_mps, circuit_param_count, compression_ratio
from .errors import ArgumentError
from .hamiltonians import SpinChainModel, build_mpo, dmrg_ground_state
from .mps import (
    RANDOM_ENSEMBLES,
    MatrixProductState,
    bond_entropies,
    ghz_mps,
    mps_param_count,
    normalize,
    overlap,
    product_state,
    random_mps,
)
from .optimizer import MetricsRecord, StageSummary, TrainConfig, grow_and_train, loss_from_overlap

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
OUTPUT_ROOT_ENV = "STAIRPREP_OUTPUT_ROOT"
TARGET_KINDS = ("heisenberg-gs", "xy-gs", "random-mps", "mps-file", "ghz")


class ConfigError(ArgumentError):
    """Invalid or unknown configuration entries."""


@dataclass
class TargetSpec:
    kind: str = "heisenberg-gs"
    n_sites: int = 8
    chi: int = 8
    seed: int = 0
    path: str | None = None
    dmrg_sweeps: int = 10
    dmrg_tol: float = 1e-10
    ensemble: str = "gaussian"

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise ConfigError(f"target.kind must be one of {TARGET_KINDS}, got {self.kind!r}")
        if self.n_sites < 2 or self.chi < 1:
            raise ConfigError("target needs n_sites >= 2 and chi >= 1")
        if self.kind == "mps-file" and not self.path:
            raise ConfigError("target.path is required for kind 'mps-file'")
        if self.ensemble not in RANDOM_ENSEMBLES:
            raise ConfigError(f"target.ensemble must be one of {RANDOM_ENSEMBLES}, got {self.ensemble!r}")


@dataclass
class ExperimentConfig:
    run_id: str = "run"
    output_dir: str | None = None
    n_layers: int = 1
    target: TargetSpec = field(default_factory=TargetSpec)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.n_layers < 1:
            raise ConfigError("n_layers must be >= 1")
        if not self.run_id or "/" in self.run_id:
            raise ConfigError(f"invalid run_id {self.run_id!r}")

    def run_dir(self) -> Path:
        root = self.output_dir or os.environ.get(OUTPUT_ROOT_ENV, "runs")
        return Path(root) / self.run_id

    def to_dict(self) -> dict:
        return {
            "version": CONFIG_VERSION,
            "run_id": self.run_id,
            "output_dir": self.output_dir,
            "n_layers": self.n_layers,
            "target": dataclasses.asdict(self.target),
            "train": self.train.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a mapping")
        doc = dict(doc)
        version = doc.pop("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"config version {version} not supported (expected {CONFIG_VERSION})")
        top = {"run_id", "output_dir", "n_layers", "target", "train"}
        _reject_unknown(doc, top, "config")
        target = doc.pop("target", {}) or {}
        train = doc.pop("train", {}) or {}
        _reject_unknown(target, {f.name for f in dataclasses.fields(TargetSpec)}, "target")
        _reject_unknown(train, {f.name for f in dataclasses.fields(TrainConfig)}, "train")
        try:
            return cls(target=TargetSpec(**target), train=TrainConfig(**train), **doc)
        except ArgumentError as exc:
            raise ConfigError(str(exc)) from exc
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _reject_unknown(doc, known, where):
    unknown = set(doc) - set(known)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)


def parse_config(text: str) -> ExperimentConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return ExperimentConfig.from_dict(doc or {})


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Targets


def make_target(spec: TargetSpec) -> tuple[MatrixProductState, dict]:
    """Build the target MPS described by ``spec`` plus its metadata."""
    meta: dict = {"kind": spec.kind, "n_sites": spec.n_sites, "chi": spec.chi, "seed": spec.seed}
    if spec.kind in ("heisenberg-gs", "xy-gs"):
        model = SpinChainModel(spec.kind.split("-")[0], spec.n_sites)
        res = dmrg_ground_state(build_mpo(model), spec.chi, spec.dmrg_sweeps, spec.dmrg_tol, seed=spec.seed)
        psi = res.psi
        meta.update(energy=res.energy, sweeps_used=res.sweeps_used, converged=res.converged)
    elif spec.kind == "random-mps":
        psi = random_mps(spec.n_sites, spec.chi, spec.seed, spec.ensemble)
    elif spec.kind == "ghz":
        psi = ghz_mps(spec.n_sites)
    else:
        psi = normalize(ser.load_mps(spec.path))
        if psi.n_sites != spec.n_sites:
            raise ArgumentError(f"MPS file has {psi.n_sites} sites, config says {spec.n_sites}")
    entropies = bond_entropies(psi)
    meta["bond_dims"] = psi.bond_dims
    meta["entropies"] = entropies.tolist()
    meta["mid_entropy"] = float(entropies[spec.n_sites // 2 - 1])
    return psi, meta


def cmd_build_target(config: ExperimentConfig) -> Path:
    run_dir = config.run_dir()
    run_dir.mkdir(parents=True, exist_ok=True)
    psi, meta = make_target(config.target)
    ser.save_mps(run_dir / "target.json", psi)
    ser.write_json(run_dir / "target_meta.json", meta)
    (run_dir / "config.yaml").write_text(dump_config(config), encoding="utf-8")
    return run_dir / "target.json"


# ---------------------------------------------------------------------------
# Training


METRICS_HEADER = ["epoch", "n_layers", "loss_F", "avg_entropy", "trunc_err", "eta"]


def cmd_train(config: ExperimentConfig, target_path=None) -> Path:
    """Run the layer-growth protocol and write all run outputs.

    Metrics are flushed every epoch, so a run aborted by a numerical error
    leaves its partial log behind.
    """
    run_dir = config.run_dir()
    run_dir.mkdir(parents=True, exist_ok=True)
    target_path = Path(target_path) if target_path else run_dir / "target.json"
    if not target_path.exists():
        target_path = cmd_build_target(config)
    else:
        (run_dir / "config.yaml").write_text(dump_config(config), encoding="utf-8")
    target = normalize(ser.load_mps(target_path))
    if target.n_sites != config.target.n_sites:
        raise ArgumentError(f"target has {target.n_sites} sites, config says {config.target.n_sites}")

    (run_dir / "checkpoints").mkdir(exist_ok=True)
    n = target.n_sites
    every = config.train.entropy_every
    stages: list[StageSummary] = []
    profile_header = ["epoch", "n_layers"] + [f"S_{k}" for k in range(1, n)]

    with ser.CsvAppender(run_dir / "metrics.csv", METRICS_HEADER) as metrics, ser.CsvAppender(
        run_dir / "timing.csv", ["epoch", "wall_ms"]
    ) as timing, ser.CsvAppender(run_dir / "entropy_profiles.csv", profile_header) as profiles:

        last: list[MetricsRecord] = []

        def on_epoch(rec: MetricsRecord) -> None:
            metrics.write([rec.epoch, rec.n_layers, rec.loss, rec.avg_entropy, rec.truncation_error, rec.eta])
            timing.write([rec.epoch, round(rec.wall_ms, 3)])
            if rec.epoch % every == 0:
                profiles.write([rec.epoch, rec.n_layers] + [float(s) for s in rec.entropies])
            last[:] = [rec]

        def on_stage(c: StairCircuit, summary: StageSummary) -> None:
            rec = last[0]
            if rec.epoch % every != 0:
                profiles.write([rec.epoch, rec.n_layers] + [float(s) for s in rec.entropies])
            stages.append(summary)
            ser.save_checkpoint(run_dir / "checkpoints" / f"stage_{c.n_layers}.json", c)
            ser.write_csv(
                run_dir / "stages.csv",
                ["n_layers", "epochs", "final_F", "best_F", "converged"],
                [[s.n_layers, s.epochs, s.final_loss, s.best_loss, int(s.converged)] for s in stages],
            )

        result = grow_and_train(target, config.n_layers, config.train, on_epoch=on_epoch, on_stage=on_stage)

    ser.save_checkpoint(run_dir / "checkpoint.json", result.circuit)
    return run_dir


def run_experiment(config: ExperimentConfig) -> Path:
    """Build the target (if missing) and train."""
    return cmd_train(config)


# ---------------------------------------------------------------------------
# Evaluation and reports


def evaluate(c: StairCircuit, target: MatrixProductState, chi_evolve: int | None = None) -> dict:
    """Loss, overlap, entanglement profile and parameter accounting for a circuit."""
    if c.n_sites != target.n_sites:
        raise ArgumentError(f"checkpoint has {c.n_sites} sites, target {target.n_sites}")
    chi_target = max(target.bond_dims)
    if chi_evolve is None:
        chi_evolve = TrainConfig().evolve_cap(max(c.n_layers, 1), target)
    psi0 = product_state([0] * c.n_sites)
    evolved, trunc = apply_circuit_mps(c, psi0, chi_evolve)
    z = overlap(target, evolved)
    loss = loss_from_overlap(z, c.n_sites)
    entropies = bond_entropies(evolved, check_norm=False)
    bound = c.n_layers * math.log(4)
    r, r0 = compression_ratio(c.n_sites, chi_target, c.n_layers)
    return {
        "n_sites": c.n_sites,
        "n_layers": c.n_layers,
        "chi_target": chi_target,
        "chi_evolve": chi_evolve,
        "loss_F": loss,
        "overlap_modulus": abs(z),
        "truncation_error": trunc,
        "entropies": entropies.tolist(),
        "avg_entropy": float(np.mean(entropies)),
        "max_entropy": float(np.max(entropies)),
        "entropy_bound": bound,
        "entropy_bound_ok": bool(np.max(entropies) <= bound + 1e-9),
        "circuit_param_count": circuit_param_count(c.n_sites, c.n_layers),
        "mps_param_count": mps_param_count(c.n_sites, chi_target),
        "compression_ratio": r,
        "compression_ratio_single_layer": r0,
    }


def cmd_eval(checkpoint_path, target_path, chi_evolve=None, out_path=None) -> dict:
    c = ser.load_checkpoint(checkpoint_path)
    target = normalize(ser.load_mps(target_path))
    report = evaluate(c, target, chi_evolve)
    if out_path is not None:
        ser.write_json(out_path, report)
    return report


def find_runs(root) -> list[Path]:
    root = Path(root)
    if (root / "metrics.csv").exists():
        return [root]
    return sorted(p.parent for p in root.glob("*/metrics.csv"))


def cmd_report(root, out_dir=None) -> dict:
    """Aggregate runs under ``root`` into plot-ready CSV tables.

    Writes ``f_vs_layers.csv``, ``f_vs_entropy.csv`` and one
    ``entropy_matrix_<run>.csv`` (epochs x bonds) per run.
    """
    runs = find_runs(root)
    if not runs:
        raise ArgumentError(f"no runs found under {root}")
    out_dir = Path(out_dir) if out_dir else Path(root)
    out_dir.mkdir(parents=True, exist_ok=True)
    layer_rows, entropy_rows, matrices = [], [], {}
    for run in runs:
        meta = ser.read_json(run / "target_meta.json") if (run / "target_meta.json").exists() else {}
        stages = ser.read_csv(run / "stages.csv") if (run / "stages.csv").exists() else []
        if not stages:
            stages = _stages_from_metrics(run)
        for s in stages:
            layer_rows.append([run.name, meta.get("kind", ""), meta.get("chi", ""), int(s["n_layers"]),
                               float(s["final_F"]), float(s["best_F"])])
            if "mid_entropy" in meta:
                entropy_rows.append([run.name, meta.get("kind", ""), meta.get("chi", ""),
                                     float(meta["mid_entropy"]), int(s["n_layers"]), float(s["final_F"])])
        profile = run / "entropy_profiles.csv"
        if profile.exists():
            rows = ser.read_csv(profile)
            if rows:
                bonds = [k for k in rows[0] if k.startswith("S_")]
                matrix = [[int(r["epoch"])] + [float(r[b]) for b in bonds] for r in rows]
                path = out_dir / f"entropy_matrix_{run.name}.csv"
                ser.write_csv(path, ["epoch"] + bonds, matrix)
                matrices[run.name] = path
    ser.write_csv(out_dir / "f_vs_layers.csv", ["run", "kind", "chi", "n_layers", "final_F", "best_F"], layer_rows)
    ser.write_csv(out_dir / "f_vs_entropy.csv", ["run", "kind", "chi", "mid_entropy", "n_layers", "final_F"], entropy_rows)
    return {
        "f_vs_layers": out_dir / "f_vs_layers.csv",
        "f_vs_entropy": out_dir / "f_vs_entropy.csv",
        "entropy_matrices": matrices,
        "n_runs": len(runs),
    }


def _stages_from_metrics(run: Path) -> list[dict]:
    # Partial runs: take the last logged epoch of every stage.
    rows = ser.read_csv(run / "metrics.csv")
    by_stage: dict = {}
    for r in rows:
        n = int(r["n_layers"])
        f = float(r["loss_F"])
        best = min(f, float(by_stage[n]["best_F"])) if n in by_stage else f
        by_stage[n] = {"n_layers": n, "final_F": f, "best_F": best}
    return [by_stage[k] for k in sorted(by_stage)]
