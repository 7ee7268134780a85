"""Graph data model, vocabulary construction, and input preprocessing.

Raw graphs carry string predicates and the pre-remap edge inventory;
preprocessing rewrites edge labels, deletes discourse-only predicates,
masks out-of-vocabulary nodes, and resolves everything to integer ids.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import DataError

# Edge labels accepted on ingest.  The replaced labels (ARG, L/R-INDEX,
# L/R-HNDL) rewrite to MOD / INDEX / HNDL; labels already in the
# post-remap inventory pass through unchanged, which is what makes
# preprocessing idempotent.
EDGE_REMAP = {
    "ARG1": "ARG1",
    "ARG2": "ARG2",
    "ARG3": "ARG3",
    "ARG4": "ARG4",
    "MOD": "MOD",
    "RSTR": "RSTR",
    "ARG": "MOD",
    "L-INDEX": "INDEX",
    "R-INDEX": "INDEX",
    "L-HNDL": "HNDL",
    "R-HNDL": "HNDL",
    "INDEX": "INDEX",
    "HNDL": "HNDL",
}

# Post-preprocessing inventory, in canonical order.
CANONICAL_EDGE_LABELS = ("ARG1", "ARG2", "ARG3", "ARG4", "MOD", "RSTR", "INDEX", "HNDL")

# Discourse-pragmatic predicates removed (with all incident edges) on ingest.
DELETED_PREDICATES = frozenset({"focus_d", "parg_d"})

PAD_TOKEN = "[PAD]"
MASK_TOKEN = "[MASK]"
MERGE_PREDICATE = "if_x_then"


@dataclass
class RawNode:
    label: str
    features: tuple[str, ...] = ()
    oov: bool = False  # covers both out-of-vocabulary items and constant arguments


@dataclass
class RawGraph:
    """String-labeled input graph, prior to vocabulary resolution."""

    graph_id: str
    nodes: list[RawNode]
    edges: list[tuple[int, int, str]]  # (src, dst, label)
    htop: int

    def validate(self):
        n = len(self.nodes)
        if n == 0:
            raise DataError(f"graph {self.graph_id}: empty node list")
        if not (0 <= self.htop < n):
            raise DataError(f"graph {self.graph_id}: htop {self.htop} out of range")
        for src, dst, label in self.edges:
            if not (0 <= src < n and 0 <= dst < n):
                raise DataError(f"graph {self.graph_id}: edge ({src},{dst}) out of range")
            if src == dst:
                raise DataError(f"graph {self.graph_id}: self-loop at node {src}")
            if label not in EDGE_REMAP:
                raise DataError(f"graph {self.graph_id}: unknown edge label {label!r}")
        if _has_cycle(n, [(s, d) for s, d, _ in self.edges]):
            raise DataError(f"graph {self.graph_id}: edges contain a cycle")


@dataclass
class GraphDoc:
    """Preprocessed graph: integer labels, post-remap edge inventory."""

    graph_id: str
    labels: list[int]                 # node label token ids
    features: list[tuple[int, ...]]   # per-node feature-id sets
    edges: list[tuple[int, int, int]]  # (src, dst, edge label id)
    htop: int

    @property
    def n_nodes(self) -> int:
        return len(self.labels)

    def validate(self, vocab: "Vocabulary | None" = None):
        n = self.n_nodes
        if n == 0:
            raise DataError(f"graph {self.graph_id}: empty node list")
        if not (0 <= self.htop < n):
            raise DataError(f"graph {self.graph_id}: htop {self.htop} out of range")
        for src, dst, label in self.edges:
            if not (0 <= src < n and 0 <= dst < n):
                raise DataError(f"graph {self.graph_id}: edge ({src},{dst}) out of range")
            if src == dst:
                raise DataError(f"graph {self.graph_id}: self-loop at node {src}")
            if vocab is not None and not (0 <= label < len(vocab.edge_labels)):
                raise DataError(f"graph {self.graph_id}: edge label id {label} out of range")
        if _has_cycle(n, [(s, d) for s, d, _ in self.edges]):
            raise DataError(f"graph {self.graph_id}: edges contain a cycle")

    def __eq__(self, other):
        if not isinstance(other, GraphDoc):
            return NotImplemented
        return (
            self.labels == other.labels
            and [tuple(sorted(f)) for f in self.features] == [tuple(sorted(f)) for f in other.features]
            and sorted(self.edges) == sorted(other.edges)
            and self.htop == other.htop
        )


def _has_cycle(n: int, arcs: list[tuple[int, int]]) -> bool:
    indegree = [0] * n
    out: list[list[int]] = [[] for _ in range(n)]
    for src, dst in arcs:
        out[src].append(dst)
        indegree[dst] += 1
    frontier = [i for i in range(n) if indegree[i] == 0]
    seen = 0
    while frontier:
        node = frontier.pop()
        seen += 1
        for nxt in out[node]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                frontier.append(nxt)
    return seen != n


# -- vocabulary -----------------------------------------------------------------


@dataclass(frozen=True)
class Vocabulary:
    """Bijections between strings and ids for predicates, features, edge labels.

    Predicate ids 0 and 1 are reserved for [PAD] and [MASK]; neither is
    ever produced from corpus strings.
    """

    predicates: tuple[str, ...]
    features: tuple[str, ...]
    edge_labels: tuple[str, ...]
    _pred_ids: dict = field(repr=False, hash=False, compare=False, default=None)
    _feat_ids: dict = field(repr=False, hash=False, compare=False, default=None)
    _edge_ids: dict = field(repr=False, hash=False, compare=False, default=None)

    def __post_init__(self):
        if self.predicates[:2] != (PAD_TOKEN, MASK_TOKEN):
            raise DataError("vocabulary must reserve ids 0/1 for [PAD]/[MASK]")
        object.__setattr__(self, "_pred_ids", {s: i for i, s in enumerate(self.predicates)})
        object.__setattr__(self, "_feat_ids", {s: i for i, s in enumerate(self.features)})
        object.__setattr__(self, "_edge_ids", {s: i for i, s in enumerate(self.edge_labels)})

    pad_id = 0
    mask_id = 1

    @property
    def n_predicates(self) -> int:
        return len(self.predicates)

    @property
    def n_features(self) -> int:
        return len(self.features)

    def predicate_id(self, s: str) -> int:
        try:
            return self._pred_ids[s]
        except KeyError:
            raise DataError(f"predicate not in vocabulary: {s!r}") from None

    def feature_id(self, s: str) -> int:
        try:
            return self._feat_ids[s]
        except KeyError:
            raise DataError(f"feature not in vocabulary: {s!r}") from None

    def edge_label_id(self, s: str) -> int:
        try:
            return self._edge_ids[s]
        except KeyError:
            raise DataError(f"edge label not in vocabulary: {s!r}") from None

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for kind, entries in (("predicate", self.predicates),
                                  ("feature", self.features),
                                  ("edge", self.edge_labels)):
                for idx, s in enumerate(entries):
                    fh.write(f"{kind}\t{s}\t{idx}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        buckets: dict[str, list[tuple[int, str]]] = {"predicate": [], "feature": [], "edge": []}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3 or parts[0] not in buckets:
                    raise DataError(f"malformed vocabulary entry: {line!r}", line=lineno)
                buckets[parts[0]].append((int(parts[2]), parts[1]))
        out = []
        for kind in ("predicate", "feature", "edge"):
            entries = sorted(buckets[kind])
            if [i for i, _ in entries] != list(range(len(entries))):
                raise DataError(f"vocabulary {kind} ids are not contiguous")
            out.append(tuple(s for _, s in entries))
        return cls(*out)


def build_vocabulary(corpus, extra_predicates: tuple[str, ...] = ()) -> Vocabulary:
    """Assign ids to every string the preprocessed corpus can contain.

    Ids follow first appearance in the stream.  Labels of OOV-flagged
    nodes are excluded (those nodes surface as [MASK]); so is anything
    attached only to focus_d/parg_d nodes, which preprocessing deletes.
    Edge labels are registered after the Table-style remap so the
    inventory matches what GraphDoc instances actually carry.
    """
    predicates: dict[str, None] = {}
    features: dict[str, None] = {}
    edge_labels: dict[str, None] = {}
    n_graphs = 0
    for raw in corpus:
        raw.validate()
        n_graphs += 1
        deleted = {i for i, node in enumerate(raw.nodes) if node.label in DELETED_PREDICATES}
        for i, node in enumerate(raw.nodes):
            if i in deleted:
                continue
            if not node.oov and node.label not in (PAD_TOKEN, MASK_TOKEN):
                predicates.setdefault(node.label, None)
            for feat in node.features:
                features.setdefault(feat, None)
        for src, dst, label in raw.edges:
            if src in deleted or dst in deleted:
                continue
            edge_labels.setdefault(EDGE_REMAP[label], None)
    if n_graphs == 0:
        raise DataError("cannot build a vocabulary from an empty corpus")
    if not predicates:
        raise DataError("corpus contains no in-vocabulary predicates")
    for extra in extra_predicates:
        predicates.setdefault(extra, None)
    return Vocabulary(
        predicates=(PAD_TOKEN, MASK_TOKEN) + tuple(predicates),
        features=tuple(features),
        edge_labels=tuple(edge_labels),
    )


# -- preprocessing ----------------------------------------------------------------


def preprocess(raw: RawGraph, vocab: Vocabulary) -> GraphDoc:
    """RawGraph -> GraphDoc under the standard rewrite rules.

    ARG becomes MOD; L/R-INDEX collapse to INDEX and L/R-HNDL to HNDL;
    focus_d/parg_d nodes are deleted together with all incident edges;
    OOV/CARG-flagged nodes keep their features but take the [MASK] label.
    Surviving node indices are compacted in order and htop re-indexed.
    """
    raw.validate()
    deleted = {i for i, node in enumerate(raw.nodes) if node.label in DELETED_PREDICATES}
    if raw.htop in deleted:
        raise DataError(f"graph {raw.graph_id}: htop removed by focus_d/parg_d deletion")
    remap_index: dict[int, int] = {}
    labels: list[int] = []
    features: list[tuple[int, ...]] = []
    for i, node in enumerate(raw.nodes):
        if i in deleted:
            continue
        remap_index[i] = len(labels)
        if node.oov:
            labels.append(Vocabulary.mask_id)
        else:
            labels.append(vocab.predicate_id(node.label))
        features.append(tuple(vocab.feature_id(f) for f in node.features))
    edges = [
        (remap_index[src], remap_index[dst], vocab.edge_label_id(EDGE_REMAP[label]))
        for src, dst, label in raw.edges
        if src not in deleted and dst not in deleted
    ]
    doc = GraphDoc(
        graph_id=raw.graph_id,
        labels=labels,
        features=features,
        edges=edges,
        htop=remap_index[raw.htop],
    )
    doc.validate(vocab)
    return doc


def raw_from_doc(doc: GraphDoc, vocab: Vocabulary) -> RawGraph:
    """Express a GraphDoc back in string form.

    Masked nodes come back OOV-flagged (the original string is gone), so
    re-running preprocess on the result reproduces the document exactly.
    """
    nodes = []
    for label_id, feat_ids in zip(doc.labels, doc.features):
        oov = label_id == Vocabulary.mask_id
        nodes.append(RawNode(
            label=vocab.predicates[label_id],
            features=tuple(vocab.features[i] for i in feat_ids),
            oov=oov,
        ))
    edges = [(src, dst, vocab.edge_labels[label]) for src, dst, label in doc.edges]
    return RawGraph(graph_id=doc.graph_id, nodes=nodes, edges=edges, htop=doc.htop)


def merge_premise_hypothesis(premise: GraphDoc, hypothesis: GraphDoc,
                             vocab: Vocabulary) -> GraphDoc:
    """Join a premise/hypothesis pair into one graph rooted at a merge node.

    The result is the disjoint union plus a single ``if_x_then`` node
    (empty feature set), with an ARG1 edge to the hypothesis htop and an
    ARG2 edge to the premise htop; the merge node is the new htop.  The
    vocabulary must contain the ``if_x_then`` predicate (build it with
    ``extra_predicates=("if_x_then",)``).
    """
    if premise.n_nodes == 0 or hypothesis.n_nodes == 0:
        raise DataError("merge requires non-empty premise and hypothesis")
    labels = [vocab.predicate_id(MERGE_PREDICATE)] + premise.labels + hypothesis.labels
    features: list[tuple[int, ...]] = [()] + list(premise.features) + list(hypothesis.features)
    p_off, h_off = 1, 1 + premise.n_nodes
    edges = [(src + p_off, dst + p_off, lbl) for src, dst, lbl in premise.edges]
    edges += [(src + h_off, dst + h_off, lbl) for src, dst, lbl in hypothesis.edges]
    edges.append((0, hypothesis.htop + h_off, vocab.edge_label_id("ARG1")))
    edges.append((0, premise.htop + p_off, vocab.edge_label_id("ARG2")))
    doc = GraphDoc(
        graph_id=f"{premise.graph_id}+{hypothesis.graph_id}",
        labels=labels,
        features=features,
        edges=edges,
        htop=0,
    )
    doc.validate(vocab)
    return doc


# -- JSONL serialization -----------------------------------------------------------


def write_raw_jsonl(path, graphs):
    with open(path, "w", encoding="utf-8") as fh:
        for raw in graphs:
            record = {
                "id": raw.graph_id,
                "htop": raw.htop,
                "nodes": [
                    {"label": n.label, "features": list(n.features), "oov": n.oov}
                    for n in raw.nodes
                ],
                "edges": [
                    {"src": s, "dst": d, "label": lbl} for s, d, lbl in raw.edges
                ],
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_raw_jsonl(path):
    """Yield RawGraph records; malformed lines raise with their line number."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"invalid JSON: {exc.msg}", line=lineno) from None
            yield raw_graph_from_record(record, lineno)


def raw_graph_from_record(record: dict, lineno: int | None = None) -> RawGraph:
    try:
        nodes = [
            RawNode(
                label=n["label"],
                features=tuple(n.get("features", ())),
                oov=bool(n.get("oov", False)),
            )
            for n in record["nodes"]
        ]
        raw = RawGraph(
            graph_id=str(record.get("id", "")),
            nodes=nodes,
            edges=[(e["src"], e["dst"], e["label"]) for e in record["edges"]],
            htop=record["htop"],
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"missing or malformed field: {exc}", line=lineno) from None
    return raw


def write_docs_jsonl(path, docs):
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc_to_record(doc), sort_keys=True) + "\n")


def doc_to_record(doc: GraphDoc) -> dict:
    return {
        "id": doc.graph_id,
        "htop": doc.htop,
        "nodes": [
            {"label": lbl, "features": list(feats)}
            for lbl, feats in zip(doc.labels, doc.features)
        ],
        "edges": [{"src": s, "dst": d, "label": lbl} for s, d, lbl in doc.edges],
    }


def doc_from_record(record: dict, lineno: int | None = None) -> GraphDoc:
    try:
        doc = GraphDoc(
            graph_id=str(record.get("id", "")),
            labels=[int(n["label"]) for n in record["nodes"]],
            features=[tuple(int(f) for f in n.get("features", ())) for n in record["nodes"]],
            edges=[(int(e["src"]), int(e["dst"]), int(e["label"])) for e in record["edges"]],
            htop=int(record["htop"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"missing or malformed field: {exc}", line=lineno) from None
    doc.validate()
    return doc


def read_docs_jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"invalid JSON: {exc.msg}", line=lineno) from None
            yield doc_from_record(record, lineno)
