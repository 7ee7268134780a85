"""Evaluation primitives: masked-node ranking, retrieval MAP, precision@k,
veridicality binarization, and classifier fine-tuning."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .graphs import GraphDoc, Vocabulary
from .model import GFoLDSModel, add_classifier_head
from .optim import AdamW
from .params import ParamStore
from .rng import DATA_STREAM, SHUFFLE_STREAM, make_rng
from .tensor import cross_entropy


@dataclass
class RankingInstance:
    """A graph with one designated masked query node and its gold label."""

    graph: GraphDoc
    query_node: int
    gold: int
    candidates: tuple[int, ...] | None = None

    def validate(self):
        if not (0 <= self.query_node < self.graph.n_nodes):
            raise DataError(f"query node {self.query_node} out of range")
        if self.graph.labels[self.query_node] != Vocabulary.mask_id:
            raise DataError("query node must carry the [MASK] label")


@dataclass
class RetrievalDataset:
    """Term list plus (property instance, applicable term) pairs."""

    terms: list[int]
    properties: list[tuple[RankingInstance, int]]

    def validate(self):
        term_set = set(self.terms)
        for _, term in self.properties:
            if term not in term_set:
                raise DataError(f"property term {term} missing from term list")


@dataclass
class AnnotationSet:
    example_id: str
    labels: tuple[str, ...]


def masked_rank(model: GFoLDSModel, inst: RankingInstance,
                renormalize: bool = True) -> list[tuple[int, float]]:
    """Tokens ranked by the masked distribution at the query node.

    Scores are softmax probabilities; with a candidate filter they are
    renormalized over the filtered set by default (set renormalize=False
    to keep raw logits as scores instead).  Ties break by ascending
    token id.
    """
    inst.validate()
    batch = model.batch([inst.graph])
    logits = model.node_logits(batch).data[0, inst.query_node].astype(np.float64)
    if inst.candidates is not None:
        ids = np.asarray(sorted(set(inst.candidates)), dtype=np.int64)
        if ids.size == 0:
            raise DataError("empty candidate filter")
    else:
        ids = np.arange(logits.shape[0], dtype=np.int64)
    chosen = logits[ids]
    if renormalize:
        z = chosen - chosen.max()
        e = np.exp(z)
        scores = e / e.sum()
    else:
        scores = chosen
    order = np.lexsort((ids, -scores))
    return [(int(ids[i]), float(scores[i])) for i in order]


def average_precision(relevance: list[bool]) -> float:
    """AP of a ranked relevance vector: mean of precision at each relevant rank."""
    hits = 0
    precisions = []
    for rank, flag in enumerate(relevance, start=1):
        if flag:
            hits += 1
            precisions.append(hits / rank)
    if not precisions:
        raise DataError("average precision undefined with zero relevant items")
    return sum(precisions) / len(precisions)


def map_score(average_precisions: list[float]) -> float:
    if not average_precisions:
        raise DataError("MAP undefined over zero queries")
    return sum(average_precisions) / len(average_precisions)


def score_retrieval(model: GFoLDSModel, dataset: RetrievalDataset,
                    renormalize: bool = True) -> dict:
    """Macro-averaged MAP over terms.

    Each property's masked distribution (restricted to the term list)
    scores every term; per term, properties are ranked by that score and
    the term's own properties are the relevant set.
    """
    dataset.validate()
    scores = np.zeros((len(dataset.properties), len(dataset.terms)))
    term_index = {t: i for i, t in enumerate(dataset.terms)}
    for p, (inst, _) in enumerate(dataset.properties):
        ranked = masked_rank(model, RankingInstance(
            graph=inst.graph, query_node=inst.query_node, gold=inst.gold,
            candidates=tuple(dataset.terms)), renormalize=renormalize)
        for token, score in ranked:
            scores[p, term_index[token]] = score
    per_term = []
    for t, term in enumerate(dataset.terms):
        order = np.lexsort((np.arange(len(dataset.properties)), -scores[:, t]))
        flags = [dataset.properties[p][1] == term for p in order]
        if not any(flags):
            raise DataError(f"term {term} has no relevant property")
        per_term.append((term, average_precision(flags)))
    return {
        "map": map_score([ap for _, ap in per_term]),
        "per_term": per_term,
        "n_terms": len(per_term),
    }


def precision_at_k(model: GFoLDSModel, inst: RankingInstance,
                   class_membership, k: int) -> float:
    """Fraction of the top-k ranked tokens that satisfy the class predicate."""
    if k < 1:
        raise ConfigError(f"k must be at least 1, got {k}")
    if k > model.config.vocab_size:
        raise ConfigError(f"k={k} exceeds the vocabulary size {model.config.vocab_size}")
    member = class_membership if callable(class_membership) else (
        lambda token, members=frozenset(class_membership): token in members
    )
    ranked = masked_rank(model, inst)
    top = ranked[:k]
    return sum(1 for token, _ in top if member(token)) / k


_VERIDICALITY_VALUES = {"yes": 1, "maybe": 0, "no": -1}


def binarize_veridicality(ann: AnnotationSet) -> int:
    """1 when the mean of the mapped annotations is greater than zero, else 0."""
    if not ann.labels:
        raise DataError(f"annotation set {ann.example_id} is empty")
    try:
        values = [_VERIDICALITY_VALUES[label] for label in ann.labels]
    except KeyError as exc:
        raise DataError(f"unknown veridicality label {exc.args[0]!r}") from None
    return 1 if sum(values) / len(values) > 0 else 0


# -- classifier fine-tuning -------------------------------------------------------


@dataclass(frozen=True)
class FinetuneConfig:
    epochs: int = 8
    lr: float = 1e-6
    weight_decay: float = 1e-5
    batch_size: int = 16
    seed: int = 0
    freeze_encoder: bool = False
    classifier_hidden: int | None = None

    def validate(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ConfigError("epochs and batch_size must be positive")
        if self.lr <= 0:
            raise ConfigError("learn rate must be positive")


@dataclass
class FinetuneResult:
    accuracy: float
    n_test: int
    train_losses: list[float] = field(default_factory=list)
    degenerate: bool = False


def _classification_loss(model: GFoLDSModel, docs, labels):
    batch = model.batch(docs)
    logits = model.classify(batch)
    return cross_entropy(logits, np.asarray(labels, dtype=np.int64))


def classify_accuracy(model: GFoLDSModel, examples: list[tuple[GraphDoc, int]],
                      batch_size: int = 16) -> float:
    hits = 0
    for lo in range(0, len(examples), batch_size):
        chunk = examples[lo:lo + batch_size]
        batch = model.batch([doc for doc, _ in chunk])
        predictions = np.argmax(model.classify(batch).data, axis=1)
        hits += int(sum(int(p) == label for p, (_, label) in zip(predictions, chunk)))
    return hits / len(examples)


def finetune_classifier(model: GFoLDSModel, train: list[tuple[GraphDoc, int]],
                        test: list[tuple[GraphDoc, int]],
                        cfg: FinetuneConfig) -> FinetuneResult:
    """End-to-end fine-tuning with a mean-pooled two-layer head.

    With `freeze_encoder` only the head parameters receive optimizer
    updates.  A single-class training set produces a warning and a result
    flagged degenerate rather than an exception.
    """
    cfg.validate()
    if not train:
        raise DataError("empty fine-tuning training set")
    labels = sorted({label for _, label in train})
    n_classes = max(labels) + 1
    degenerate = len(labels) < 2
    if degenerate:
        warnings.warn("fine-tuning on a single-class training set; "
                      "the classifier will be degenerate", stacklevel=2)
        n_classes = max(2, n_classes)
    if "cls/w1" not in model.params:
        add_classifier_head(model.params, model.config, n_classes,
                            hidden=cfg.classifier_hidden, seed=cfg.seed)
    if cfg.freeze_encoder:
        trainable = ParamStore()
        for name, tensor in model.params.items():
            if name.startswith("cls/"):
                trainable.add(name, tensor)
    else:
        trainable = model.params
    optimizer = AdamW(trainable, weight_decay=cfg.weight_decay)
    result = FinetuneResult(accuracy=0.0, n_test=len(test), degenerate=degenerate)
    for epoch in range(cfg.epochs):
        order = np.arange(len(train))
        make_rng(cfg.seed, SHUFFLE_STREAM, DATA_STREAM, epoch).shuffle(order)
        for lo in range(0, len(train), cfg.batch_size):
            chunk = [train[i] for i in order[lo:lo + cfg.batch_size]]
            loss = _classification_loss(model, [d for d, _ in chunk], [y for _, y in chunk])
            model.params.zero_grad()
            loss.backward()
            trainable.fill_missing_grads()
            optimizer.step(cfg.lr)
            result.train_losses.append(float(loss.data))
    if test:
        result.accuracy = classify_accuracy(model, test, cfg.batch_size)
    return result
