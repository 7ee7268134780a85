"""Masked-node-modeling pretraining.

Nodes are selected independently per graph for prediction; selected nodes
take the [MASK] label (features stay), and the loss is the mean
cross-entropy over exactly those positions.  Nodes that were already
[MASK] on input (out-of-vocabulary items) are never selection targets.

Every random decision is keyed by (seed, stream, position), so a resumed
run replays the identical batch order and masks of the uninterrupted one.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TrainingDiverged
from .graphs import GraphDoc, Vocabulary
from .model import GFoLDSModel, config_from_text, config_to_text
from .optim import AdamW
from .params import ParamStore, load_tensors, save_tensors
from .rng import MASK_STREAM, SHUFFLE_STREAM, make_rng
from .tensor import Tensor, cross_entropy

# Piecewise-linear schedule through (epoch position, learn rate) knots.
DEFAULT_LR_KNOTS = ((0.0, 1e-5), (1.0, 2e-5), (2.0, 1e-5), (3.0, 3e-6), (4.0, 1e-6))


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    epochs: int = 4
    selection_prob: float = 0.2
    mask_rate_of_selected: float = 1.0
    lr_knots: tuple[tuple[float, float], ...] = DEFAULT_LR_KNOTS
    weight_decay: float = 1e-5
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 0        # steps; 0 disables
    snapshots_per_epoch: int = 0     # evenly spaced checkpoints per epoch; 0 disables
    max_nodes: int = 128             # oversized graphs are skipped with a warning

    def validate(self):
        if self.batch_size <= 0 or self.epochs <= 0:
            raise ConfigError("batch_size and epochs must be positive")
        if not (0.0 <= self.selection_prob <= 1.0):
            raise ConfigError("selection_prob must be in [0, 1]")
        if not (0.0 <= self.mask_rate_of_selected <= 1.0):
            raise ConfigError("mask_rate_of_selected must be in [0, 1]")
        if not self.lr_knots:
            raise ConfigError("lr_knots must not be empty")
        positions = [p for p, _ in self.lr_knots]
        if positions != sorted(positions):
            raise ConfigError("lr_knots must be sorted by epoch position")
        if any(lr <= 0 for _, lr in self.lr_knots):
            raise ConfigError("all learn rates must be positive")
        if self.max_nodes <= 0:
            raise ConfigError("max_nodes must be positive")


@dataclass
class MaskedBatch:
    """Graphs with selected labels hidden, plus the recovery targets."""

    docs: list[GraphDoc]
    targets: list[tuple[int, int, int]]  # (graph index, node index, original token id)


def select_and_mask(docs: list[GraphDoc], cfg: TrainConfig,
                    rng: np.random.Generator) -> MaskedBatch | None:
    """Independently select and mask nodes; None signals "nothing to train on".

    Pre-existing [MASK] nodes are not eligible.  A None return is a
    resample signal: the caller skips the batch rather than crashing.
    """
    masked_docs: list[GraphDoc] = []
    targets: list[tuple[int, int, int]] = []
    for g, doc in enumerate(docs):
        n = doc.n_nodes
        select_draw = rng.random(n)
        mask_draw = rng.random(n)
        labels = list(doc.labels)
        for i, label in enumerate(doc.labels):
            if label in (Vocabulary.mask_id, Vocabulary.pad_id):
                continue
            if select_draw[i] < cfg.selection_prob and mask_draw[i] < cfg.mask_rate_of_selected:
                labels[i] = Vocabulary.mask_id
                targets.append((g, i, label))
        masked_docs.append(GraphDoc(
            graph_id=doc.graph_id, labels=labels, features=doc.features,
            edges=doc.edges, htop=doc.htop,
        ))
    if not targets:
        return None
    return MaskedBatch(docs=masked_docs, targets=targets)


def lr_at(step: int, steps_per_epoch: int, cfg: TrainConfig) -> float:
    """Piecewise-linear learn rate at a global step, measured in epochs.

    Passes exactly through every knot; clamps to the boundary knots
    outside the scheduled horizon.
    """
    if steps_per_epoch <= 0:
        raise ConfigError("steps_per_epoch must be positive")
    t = step / steps_per_epoch
    knots = cfg.lr_knots
    if t <= knots[0][0]:
        return knots[0][1]
    for (p0, lr0), (p1, lr1) in zip(knots, knots[1:]):
        if t == p1:
            return lr1
        if p0 < t < p1:
            return lr0 + (lr1 - lr0) * ((t - p0) / (p1 - p0))
    return knots[-1][1]


def mnm_loss(model: GFoLDSModel, masked: MaskedBatch,
             dropout_rng: np.random.Generator | None = None) -> Tensor:
    """Cross-entropy over target positions only."""
    batch = model.batch(masked.docs)
    logits = model.node_logits(batch, dropout_rng)
    b, t, v = logits.shape
    flat = logits.reshape((b * t, v))
    target_ids = np.zeros(b * t, dtype=np.int64)
    ignore = np.ones(b * t, dtype=bool)
    for g, i, original in masked.targets:
        target_ids[g * t + i] = original
        ignore[g * t + i] = False
    return cross_entropy(flat, target_ids, ignore)


@dataclass
class PretrainResult:
    trace: list[tuple[int, float, float, float]] = field(default_factory=list)
    skipped_batches: int = 0
    oversized_graphs: int = 0
    checkpoints: list[str] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.trace[-1][3] if self.trace else float("nan")

    @property
    def steps_run(self) -> int:
        return len(self.trace)


def _usable_corpus(corpus: list[GraphDoc], cfg: TrainConfig) -> tuple[list[GraphDoc], int]:
    kept = [doc for doc in corpus if doc.n_nodes <= cfg.max_nodes]
    return kept, len(corpus) - len(kept)


def pretrain(corpus: list[GraphDoc], model: GFoLDSModel, cfg: TrainConfig,
             out_dir: str | None = None, optimizer: AdamW | None = None,
             start_step: int = 0, log=None) -> PretrainResult:
    """Run the training loop; mutates the model's parameters in place.

    `start_step` resumes at a global batch slot: earlier slots are
    replayed for their random-stream position only, so a resumed run
    continues the uninterrupted trace bit for bit.
    """
    cfg.validate()
    if not corpus:
        raise ConfigError("pretraining corpus is empty")
    usable, oversized = _usable_corpus(corpus, cfg)
    if oversized and log:
        log(f"skipping {oversized} graphs over {cfg.max_nodes} nodes")
    if not usable:
        raise ConfigError(f"no graphs within the {cfg.max_nodes}-node cap")
    steps_per_epoch = (len(usable) + cfg.batch_size - 1) // cfg.batch_size
    if optimizer is None:
        optimizer = AdamW(model.params, weight_decay=cfg.weight_decay,
                          betas=cfg.adam_betas, eps=cfg.adam_eps)
    result = PretrainResult(oversized_graphs=oversized)

    snapshot_slots: set[int] = set()
    if cfg.snapshots_per_epoch > 0:
        for epoch in range(cfg.epochs):
            for k in range(1, cfg.snapshots_per_epoch + 1):
                slot = epoch * steps_per_epoch + int(round(k * steps_per_epoch / cfg.snapshots_per_epoch))
                snapshot_slots.add(min(slot, (epoch + 1) * steps_per_epoch))

    slot = 0
    for epoch in range(cfg.epochs):
        order = np.arange(len(usable))
        make_rng(cfg.seed, SHUFFLE_STREAM, epoch).shuffle(order)
        for lo in range(0, len(usable), cfg.batch_size):
            if slot < start_step:
                slot += 1
                continue
            docs = [usable[i] for i in order[lo:lo + cfg.batch_size]]
            masked = select_and_mask(docs, cfg, make_rng(cfg.seed, MASK_STREAM, slot))
            lr = lr_at(slot, steps_per_epoch, cfg)
            if masked is None:
                result.skipped_batches += 1
                slot += 1
                continue
            loss = mnm_loss(model, masked)
            loss_value = float(loss.data)
            if not np.isfinite(loss_value):
                raise TrainingDiverged(slot)
            model.params.zero_grad()
            loss.backward()
            model.params.fill_missing_grads()
            optimizer.step(lr)
            result.trace.append((slot, slot / steps_per_epoch, lr, loss_value))
            slot += 1
            if out_dir and (
                (cfg.checkpoint_every > 0 and slot % cfg.checkpoint_every == 0)
                or slot in snapshot_slots
            ):
                path = os.path.join(out_dir, f"ckpt-{slot}.gfld")
                save_checkpoint(path, model, optimizer, slot)
                result.checkpoints.append(path)
    if out_dir:
        final = os.path.join(out_dir, f"ckpt-{slot}.gfld")
        if final not in result.checkpoints:
            save_checkpoint(final, model, optimizer, slot)
            result.checkpoints.append(final)
        write_trace_csv(os.path.join(out_dir, "trace.csv"), result.trace)
    return result


def masked_recovery_accuracy(model: GFoLDSModel, corpus: list[GraphDoc],
                             cfg: TrainConfig, seed: int, batch_size: int = 16) -> float:
    """Fraction of freshly masked nodes whose argmax prediction recovers the label."""
    rng = make_rng(seed, MASK_STREAM, 999983)
    hits = 0
    total = 0
    for lo in range(0, len(corpus), batch_size):
        docs = corpus[lo:lo + batch_size]
        masked = select_and_mask(docs, cfg, rng)
        if masked is None:
            continue
        batch = model.batch(masked.docs)
        logits = model.node_logits(batch).data
        for g, i, original in masked.targets:
            total += 1
            if int(np.argmax(logits[g, i])) == original:
                hits += 1
    return hits / total if total else 0.0


# -- trace and checkpoint IO ----------------------------------------------------


def write_trace_csv(path, trace):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "epoch_fraction", "lr", "loss"])
        for step, frac, lr, loss in trace:
            writer.writerow([step, repr(frac), repr(lr), repr(loss)])


def read_trace_csv(path):
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return [(int(s), float(f), float(lr), float(loss)) for s, f, lr, loss in reader]


def save_checkpoint(path, model: GFoLDSModel, optimizer: AdamW, step: int):
    """Model parameters and optimizer state in one container, config alongside."""
    tensors = {name: t.data for name, t in model.params.items()}
    tensors.update(optimizer.state_tensors())
    save_tensors(path, tensors)
    extra = {
        "step": step,
        "adam_step": optimizer.step_count,
        "weight_decay": optimizer.weight_decay,
        "adam_beta1": optimizer.beta1,
        "adam_beta2": optimizer.beta2,
        "adam_eps": optimizer.eps,
    }
    with open(path + ".config", "w", encoding="utf-8") as fh:
        fh.write(config_to_text(model.config, extra))


def load_checkpoint(path, expect_vocab_size: int | None = None
                    ) -> tuple[GFoLDSModel, AdamW, int]:
    """Restore (model, optimizer, next step) from a checkpoint pair."""
    sidecar = path + ".config"
    if not os.path.exists(sidecar):
        raise ConfigError(f"missing checkpoint sidecar {sidecar}")
    with open(sidecar, "r", encoding="utf-8") as fh:
        config, extra = config_from_text(fh.read())
    if expect_vocab_size is not None and config.vocab_size != expect_vocab_size:
        raise ConfigError(
            f"checkpoint vocab_size {config.vocab_size} != expected {expect_vocab_size}"
        )
    tensors = load_tensors(path)
    store = ParamStore()
    for name, array in tensors.items():
        if not name.startswith("optimizer/"):
            store.add(name, array)
    model = GFoLDSModel(config, store)
    optimizer = AdamW(
        store,
        weight_decay=float(extra.get("weight_decay", 1e-5)),
        betas=(float(extra.get("adam_beta1", 0.9)), float(extra.get("adam_beta2", 0.999))),
        eps=float(extra.get("adam_eps", 1e-8)),
    )
    optimizer.load_state_tensors(tensors, int(extra.get("adam_step", 0)))
    return model, optimizer, int(extra["step"])
