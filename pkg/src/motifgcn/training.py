"""Full-batch semi-supervised training, motif selection and checkpoints."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from motifgcn.autodiff import Tape, adam_step
from motifgcn.graph import DirectedGraph
from motifgcn.models import GraphConvModel, ModelSpec, build_model, prepare_operators
from motifgcn.motifs import ALL_MOTIFS, MotifId, motif_adjacencies

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, value: float):
        super().__init__(f"non-finite loss {value} at epoch {epoch}")
        self.epoch = epoch
        self.value = value


@dataclass
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-3
    decoupled_decay: bool = False
    max_epochs: int = 1000
    patience: int = 50
    fractions: tuple[float, float, float] = (0.1, 0.1, 0.1)
    stratify: bool = True
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        self.fractions = tuple(float(f) for f in self.fractions)
        if sum(self.fractions) > 1.0 + 1e-12 or min(self.fractions) < 0:
            raise ValueError(f"split fractions must be nonnegative and sum to <= 1, got {self.fractions}")
        if self.lr <= 0 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("lr, max_epochs and patience must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fractions"] = list(self.fractions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        return cls(**d)


@dataclass
class EpochRecord:
    epoch: int
    objective: float
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    test_loss: float
    test_acc: float


@dataclass
class TrainReport:
    history: list[EpochRecord]
    best_epoch: int
    test_accuracy: float
    val_loss: float
    attention: dict[str, list] = field(default_factory=dict)
    wall_clock: float = 0.0

    def to_dict(self, include_history: bool = False) -> dict:
        d = {
            "best_epoch": self.best_epoch,
            "test_accuracy": self.test_accuracy,
            "val_loss": self.val_loss,
            "epochs_run": len(self.history),
        }
        if include_history:
            d["history"] = [asdict(h) for h in self.history]
        return d


def _metrics(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> tuple[float, float]:
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        return float("nan"), float("nan")
    z = logits[rows]
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    y = labels[rows]
    loss = float(-logp[np.arange(rows.size), y].mean())
    acc = float(np.mean(np.argmax(z, axis=1) == y))
    return loss, acc


def _check_attention(model: GraphConvModel) -> None:
    for name, a in model.attention().items():
        if np.any(a < 0) or not np.allclose(a.sum(axis=1), 1.0, atol=1e-12):
            raise AssertionError(f"attention weights of {name} are not a distribution")


def train(
    model: GraphConvModel,
    features: np.ndarray,
    labels: np.ndarray,
    masks: tuple[np.ndarray, np.ndarray, np.ndarray],
    cfg: TrainConfig,
    metrics_path: str | Path | None = None,
) -> TrainReport:
    """Train with Adam and early stopping on validation cross-entropy.

    Parameters are restored to the epoch with the lowest validation loss, and
    the reported test accuracy is the one measured at that epoch.
    """
    train_mask, val_mask, test_mask = (np.asarray(m, dtype=bool) for m in masks)
    if np.any(train_mask & val_mask) or np.any(train_mask & test_mask) or np.any(val_mask & test_mask):
        raise ValueError("train/val/test masks must be disjoint")
    labels = np.asarray(labels, dtype=np.int64)
    features = np.asarray(features, dtype=np.float64)
    rng = np.random.default_rng(cfg.seed)
    params = list(model.params.values())
    history: list[EpochRecord] = []
    best_val, best_epoch, best_state, since_best = np.inf, -1, model.state_dict(), 0
    sink = open(metrics_path, "w", encoding="utf-8") if metrics_path else None
    start = time.perf_counter()
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            tape = Tape(training=True, rng=rng)
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    loss, _ = model.loss(tape, features, labels, train_mask)
            except FloatingPointError:
                raise TrainingDivergedError(epoch, float("nan")) from None
            objective = float(loss.value[0, 0])
            if not np.isfinite(objective):
                raise TrainingDivergedError(epoch, objective)
            tape.backward(loss, params)
            if not all(np.all(np.isfinite(p.grad)) for p in params):
                raise TrainingDivergedError(epoch, objective)
            adam_step(
                params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps,
                weight_decay=cfg.weight_decay, decoupled=cfg.decoupled_decay,
            )
            _check_attention(model)
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    logits = model.predict(features)
            except FloatingPointError:
                raise TrainingDivergedError(epoch, float("nan")) from None
            tr = _metrics(logits, labels, train_mask)
            va = _metrics(logits, labels, val_mask)
            te = _metrics(logits, labels, test_mask)
            if not np.isfinite(tr[0]):
                raise TrainingDivergedError(epoch, tr[0])
            rec = EpochRecord(epoch, objective, *tr, *va, *te)
            history.append(rec)
            if sink:
                sink.write(json.dumps(asdict(rec)) + "\n")
            if va[0] < best_val:
                best_val, best_epoch, best_state, since_best = va[0], epoch, model.state_dict(), 0
            else:
                since_best += 1
                if since_best >= cfg.patience:
                    break
    finally:
        if sink:
            sink.close()
    model.load_state_dict(best_state)
    best = history[best_epoch - 1]
    attention = {k: v.tolist() for k, v in model.attention().items()}
    return TrainReport(history, best_epoch, best.test_acc, best.val_loss, attention, time.perf_counter() - start)


def evaluate(model: GraphConvModel, features, labels, masks) -> dict[str, dict[str, float]]:
    logits = model.predict(features)
    labels = np.asarray(labels, dtype=np.int64)
    out = {}
    for name, m in zip(("train", "val", "test"), masks):
        loss, acc = _metrics(logits, labels, np.asarray(m, dtype=bool))
        out[name] = {"loss": loss, "accuracy": acc}
    return out


@dataclass
class SelectionResult:
    selected: list[str]
    masses: dict[str, float]
    dense: dict[str, bool]
    densities: dict[str, float]
    threshold: float
    report: TrainReport

    def ranking(self) -> list[str]:
        return sorted(self.masses, key=lambda m: (-self.masses[m], m))

    def to_dict(self) -> dict:
        return {
            "selected": self.selected,
            "ranking": self.ranking(),
            "masses": self.masses,
            "threshold": self.threshold,
            "dense": self.dense,
            "densities": self.densities,
            "best_epoch": self.report.best_epoch,
            "test_accuracy": self.report.test_accuracy,
        }


def attention_mass(model: GraphConvModel) -> dict[str, float]:
    """Mean attention weight of each motif over channels, steps and layers."""
    att = model.attention()
    if not att:
        raise ValueError("model has no attention weights")
    stacked = [a.transpose(1, 0, 2).reshape(a.shape[1], -1) for a in att.values()]
    mass = np.concatenate(stacked, axis=1).mean(axis=1)
    return {m: float(v) for m, v in zip(model.spec.motifs, mass)}


def motif_selection(
    g: DirectedGraph,
    features: np.ndarray,
    labels: np.ndarray,
    masks,
    cfg: TrainConfig,
    motifs: Sequence[str | MotifId] = ALL_MOTIFS,
    hidden: tuple[int, int] = (128, 128),
    attention: str = "per_channel",
    keep_prob: float = 0.5,
    threshold: float | None = None,
    density_cap: float = 0.25,
    lambda_policy: str = "bound",
    seed: int = 0,
) -> SelectionResult:
    """Train an order-1 attention model over ``motifs`` and keep the motifs
    whose mean attention exceeds ``threshold`` (default 1/K).

    Motifs whose adjacency density exceeds ``density_cap`` are flagged and
    left out of the selection.
    """
    motifs = [MotifId.parse(m) for m in motifs]
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = int(labels.max()) + 1
    adjs = motif_adjacencies(g, motifs)
    densities = {str(m): adjs[m].density for m in motifs}
    dense = {m: d > density_cap for m, d in densities.items()}
    ops = prepare_operators(g, motifs, lambda_policy=lambda_policy, seed=seed)
    spec = ModelSpec(
        family="motifnet_m",
        order=1,
        motifs=[str(m) for m in motifs],
        widths=(features.shape[1], hidden[0], hidden[1], n_classes),
        attention=attention,
        keep_prob=keep_prob,
        seed=seed,
    )
    model = build_model(spec, ops)
    report = train(model, features, labels, masks, cfg)
    masses = attention_mass(model)
    tau = 1.0 / len(motifs) if threshold is None else threshold
    selected = [m for m in spec.motifs if masses[m] > tau and not dense[m]]
    return SelectionResult(selected, masses, dense, densities, tau, report)


def save_checkpoint(path, model: GraphConvModel, report: TrainReport | None = None, extra: dict | None = None) -> None:
    """JSON checkpoint: spec, named parameters, Adam state and history."""
    params = {
        name: {
            "value": p.value.tolist(),
            "m": p.m.tolist(),
            "v": p.v.tolist(),
            "step": p.step,
            "decay": p.decay,
        }
        for name, p in model.params.items()
    }
    doc = {
        "version": CHECKPOINT_VERSION,
        "spec": model.spec.to_dict(),
        "params": params,
        "history": [asdict(h) for h in report.history] if report else [],
        "best_epoch": report.best_epoch if report else None,
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path, operators) -> tuple[GraphConvModel, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    spec = ModelSpec.from_dict(doc["spec"])
    model = build_model(spec, operators)
    for name, p in model.params.items():
        rec = doc["params"][name]
        p.value = np.array(rec["value"], dtype=np.float64, ndmin=2)
        p.m = np.array(rec["m"], dtype=np.float64, ndmin=2)
        p.v = np.array(rec["v"], dtype=np.float64, ndmin=2)
        p.step = int(rec["step"])
        p.decay = bool(rec["decay"])
    return model, doc
