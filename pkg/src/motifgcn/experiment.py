"""Experiment configuration and the runners behind the CLI commands.

An experiment config is a JSON object::

    {
      "seed": 0,
      "out": "runs/demo",
      "dataset": {"path": "data/cora"}            # or {"synthetic": {...SyntheticSpec}}
                                                  # or {"planted": {...generate_planted_motif kwargs}},
      "preprocess": {"pca_dims": null, "largest_wcc": false, "subsample_n": null},
      "splits": {"fractions": [0.1, 0.1, 0.1], "stratify": true, "use_file": true},
      "model": {"family": "motifnet_m", "order": 2, "motifs": ["U", "Min", "Mout"],
                "hidden": [128, 128], "attention": "per_channel", "keep_prob": 0.5,
                "basis": "chebyshev"},
      "operators": {"lambda_policy": "bound"},
      "train": {"lr": 0.001, "weight_decay": 0.001, "max_epochs": 1000, "patience": 50},
      "sweep": {"families": ["chebnet", "motifnet_m", "motifnet_d"], "orders": [1, 2, 3],
                "seeds": [0]},
      "selection": {"motifs": null, "threshold": null, "density_cap": 0.25}
    }

Every random draw derives from ``seed`` unless a section sets its own.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from motifgcn.data import (
    NodeDataset,
    SyntheticSpec,
    generate_planted_motif,
    generate_synthetic,
    load_cora_format,
    make_splits,
    pca_reduce,
    subsample,
)
from motifgcn.models import ModelSpec, build_model, count_parameters, prepare_operators
from motifgcn.motifs import ALL_MOTIFS
from motifgcn.training import (
    TrainConfig,
    TrainingDivergedError,
    evaluate,
    load_checkpoint,
    motif_selection,
    save_checkpoint,
    train,
)

log = logging.getLogger(__name__)

DEFAULT_FAMILY_MOTIFS = {"chebnet": ["U"], "motifnet_d": ["Min", "Mout"]}


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str = "runs/experiment"
    dataset: dict = field(default_factory=lambda: {"synthetic": {}})
    preprocess: dict = field(default_factory=dict)
    splits: dict = field(default_factory=lambda: {"fractions": [0.1, 0.1, 0.1], "stratify": True, "use_file": True})
    model: dict = field(default_factory=lambda: {"family": "motifnet_m", "order": 1, "motifs": ["U", "Min", "Mout"]})
    operators: dict = field(default_factory=lambda: {"lambda_policy": "bound"})
    train: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    selection: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.dataset, dict) or not (
            "path" in self.dataset or "synthetic" in self.dataset or "planted" in self.dataset
        ):
            raise ValueError("dataset needs one of 'path', 'synthetic' or 'planted'")

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**copy.deepcopy(d))

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {k: copy.deepcopy(getattr(self, k)) for k in self.__dataclass_fields__}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def train_config(self, seed: int | None = None) -> TrainConfig:
        d = dict(self.train)
        d.setdefault("seed", self.seed if seed is None else seed)
        if seed is not None:
            d["seed"] = seed
        d.setdefault("fractions", self.splits.get("fractions", [0.1, 0.1, 0.1]))
        return TrainConfig.from_dict(d)

    def model_spec(self, ds: NodeDataset, family: str | None = None, order: int | None = None, seed: int | None = None) -> ModelSpec:
        """Model for ``ds``; ``family``/``order``/``seed`` override the config (sweeps).

        The configured motif set applies to the configured family; other
        families use ``sweep.family_motifs`` or their defaults.
        """
        m = dict(self.model)
        base_family = m.pop("family", "motifnet_m")
        family = family or base_family
        hidden = m.pop("hidden", [128, 128])
        motifs = m.pop("motifs", None)
        cfg_order = m.pop("order", 1)
        overrides = self.sweep.get("family_motifs", {})
        if family in overrides:
            motifs = overrides[family]
        elif family != base_family or motifs is None:
            motifs = DEFAULT_FAMILY_MOTIFS.get(family, ["U", "Min", "Mout"])
        return ModelSpec(
            family=family,
            order=cfg_order if order is None else order,
            motifs=list(motifs),
            widths=(ds.num_features, hidden[0], hidden[1], ds.num_classes),
            seed=self.seed if seed is None else seed,
            **m,
        )


def load_dataset(cfg: ExperimentConfig, seed: int | None = None) -> NodeDataset:
    """Materialize the configured dataset with preprocessing and splits applied."""
    seed = cfg.seed if seed is None else seed
    dcfg = cfg.dataset
    if "path" in dcfg:
        ds = load_cora_format(dcfg["path"])
    elif "planted" in dcfg:
        kw = dict(dcfg["planted"])
        kw.setdefault("seed", seed)
        return generate_planted_motif(**kw)
    else:
        kw = dict(dcfg["synthetic"])
        kw.setdefault("seed", seed)
        kw.setdefault("fractions", cfg.splits.get("fractions", (0.1, 0.1, 0.1)))
        kw.setdefault("stratify", cfg.splits.get("stratify", True))
        return generate_synthetic(SyntheticSpec(**kw))
    pre = cfg.preprocess
    if pre.get("largest_wcc") or pre.get("subsample_n"):
        ds = subsample(ds, pre.get("subsample_n"), largest_component=bool(pre.get("largest_wcc", True)), seed=seed)
    if pre.get("pca_dims"):
        ds = ds.with_features(pca_reduce(ds.features, int(pre["pca_dims"])))
    has_split = any(m.any() for m in ds.masks)
    if not (has_split and cfg.splits.get("use_file", True)):
        masks = make_splits(
            ds.n,
            cfg.splits.get("fractions", (0.1, 0.1, 0.1)),
            seed=seed,
            labels=ds.labels,
            stratify=cfg.splits.get("stratify", True),
        )
        ds = ds.with_masks(masks)
    return ds


def _json_dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run_train(cfg: ExperimentConfig, out: Path | None = None) -> dict:
    """Train one model and write config, checkpoint, history, report and attention."""
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.json")
    ds = load_dataset(cfg)
    spec = cfg.model_spec(ds)
    ops = prepare_operators(ds.graph, spec.motif_ids, lambda_policy=cfg.operators.get("lambda_policy", "bound"))
    model = build_model(spec, ops)
    tcfg = cfg.train_config()
    t0 = time.perf_counter()
    try:
        rep = train(model, ds.features, ds.labels, ds.masks, tcfg, metrics_path=out / "history.jsonl")
    except TrainingDivergedError as e:
        report = {"status": "diverged", "error": str(e), "epoch": e.epoch}
        _json_dump(out / "report.json", report)
        return report
    report = {
        "status": "ok",
        "family": spec.family,
        "order": spec.order,
        "motifs": spec.motifs,
        "parameters": count_parameters(spec),
        **rep.to_dict(),
        "final": evaluate(model, ds.features, ds.labels, ds.masks),
    }
    _json_dump(out / "report.json", report)
    _json_dump(out / "timing.json", {"wall_clock_seconds": time.perf_counter() - t0})
    save_checkpoint(out / "checkpoint.json", model, rep)
    if spec.family == "motifnet_m" and rep.attention:
        _json_dump(
            out / "attention.json",
            {"motifs": spec.motifs, "layout": "layer -> [channel][motif][step]", "layers": rep.attention},
        )
    return report


def run_eval(cfg: ExperimentConfig, checkpoint) -> dict:
    ds = load_dataset(cfg)
    doc = json.loads(Path(checkpoint).read_text(encoding="utf-8"))
    spec = ModelSpec.from_dict(doc["spec"])
    ops = prepare_operators(ds.graph, spec.motif_ids, lambda_policy=cfg.operators.get("lambda_policy", "bound"))
    model, _ = load_checkpoint(checkpoint, ops)
    return evaluate(model, ds.features, ds.labels, ds.masks)


def _sweep_cell(args) -> dict:
    cfg_dict, family, order, seed = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    row = {"family": family, "p": order, "seed": seed, "test_accuracy": "", "params": "", "status": "ok", "error": ""}
    try:
        ds = load_dataset(cfg, seed=seed)
        spec = cfg.model_spec(ds, family=family, order=order, seed=seed)
        row["params"] = count_parameters(spec)
        ops = prepare_operators(ds.graph, spec.motif_ids, lambda_policy=cfg.operators.get("lambda_policy", "bound"))
        rep = train(build_model(spec, ops), ds.features, ds.labels, ds.masks, cfg.train_config(seed=seed))
        row["test_accuracy"] = rep.test_accuracy
    except Exception as e:  # recorded per cell, the sweep carries on
        row["status"] = "failed"
        row["error"] = f"{type(e).__name__}: {e}"
    return row


SWEEP_COLUMNS = ["family", "p", "seed", "test_accuracy", "params", "status", "error"]


def run_sweep(cfg: ExperimentConfig, out: Path | None = None, threads: int = 1) -> list[dict]:
    """Accuracy versus polynomial order for each family; writes ``sweep.csv``."""
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.json")
    sw = cfg.sweep
    families = sw.get("families", ["chebnet", "motifnet_m", "motifnet_d"])
    orders = sw.get("orders", list(range(1, 9)))
    seeds = sw.get("seeds", [cfg.seed])
    cells = [(cfg.to_dict(), f, p, s) for f in families for p in orders for s in seeds]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    cell_dir = out / "cells"
    cell_dir.mkdir(exist_ok=True)
    for r in rows:
        _json_dump(cell_dir / f"{r['family']}_p{r['p']}_s{r['seed']}.json", r)
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    return rows


def run_selection(cfg: ExperimentConfig, out: Path | None = None) -> dict:
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.json")
    ds = load_dataset(cfg)
    sel = cfg.selection
    hidden = cfg.model.get("hidden", [128, 128])
    res = motif_selection(
        ds.graph,
        ds.features,
        ds.labels,
        ds.masks,
        cfg.train_config(),
        motifs=sel.get("motifs") or ALL_MOTIFS,
        hidden=tuple(hidden),
        attention=cfg.model.get("attention", "per_channel"),
        keep_prob=cfg.model.get("keep_prob", 0.5),
        threshold=sel.get("threshold"),
        density_cap=sel.get("density_cap", 0.25),
        lambda_policy=cfg.operators.get("lambda_policy", "bound"),
        seed=cfg.seed,
    )
    doc = res.to_dict()
    _json_dump(out / "selected_motifs.json", doc)
    return doc
