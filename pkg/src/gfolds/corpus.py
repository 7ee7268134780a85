"""Synthetic corpus generation.

Stands in for a parsed-text corpus at desk scale.  Graphs are built from
sentence-like templates: a head verb takes quantified noun phrases as
arguments, adjectives attach via MOD, coordination introduces L/R-INDEX
pairs, and an occasional ``unknown``/ARG or focus_d/parg_d construction
exercises every preprocessing rule.  Predicates are grouped into topic
clusters so that node co-occurrence is non-uniform and masked-node
prediction has learnable signal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .graphs import RawGraph, RawNode
from .rng import CORPUS_STREAM, DATA_STREAM, make_rng

STRUCTURAL_PREDICATES = ("and_c", "unknown", "focus_d", "parg_d")


@dataclass(frozen=True)
class GeneratorConfig:
    n_graphs: int
    vocab_size: int = 60              # content predicates, split across families below
    features: tuple[str, ...] = ("sg", "pl", "past", "pres")
    node_range: tuple[int, int] = (5, 12)
    edge_density: tuple[float, float] = (0.9, 1.3)   # edges per node
    oov_rate: float = 0.0
    n_clusters: int = 4
    cluster_fidelity: float = 0.85    # probability a draw stays inside the graph's cluster

    def validate(self):
        if self.n_graphs <= 0:
            raise ConfigError("n_graphs must be positive")
        if self.vocab_size < 12:
            raise ConfigError("vocab_size must be at least 12 to populate every family")
        if not (0.0 <= self.oov_rate <= 1.0):
            raise ConfigError("oov_rate must be in [0, 1]")
        lo, hi = self.node_range
        if not (2 <= lo <= hi):
            raise ConfigError(f"invalid node range {self.node_range}")
        dlo, dhi = self.edge_density
        if not (0.0 <= dlo <= dhi):
            raise ConfigError(f"invalid edge density range {self.edge_density}")
        # the sparsest feasible graph is the smallest one: a DAG on n nodes
        # holds at most n*(n-1)/2 edges
        if dhi > (lo - 1) / 2.0:
            raise ConfigError(
                f"edge density up to {dhi} per node cannot be acyclic at {lo} nodes"
            )
        if "sg" not in self.features or "pl" not in self.features:
            raise ConfigError("feature inventory must include 'sg' and 'pl'")
        if self.n_clusters < 1:
            raise ConfigError("n_clusters must be at least 1")


@dataclass(frozen=True)
class PredicateFamilies:
    """Content-predicate inventory grouped by part of speech."""

    nouns: tuple[str, ...]
    verbs: tuple[str, ...]
    adjectives: tuple[str, ...]
    quantifiers_sg: tuple[str, ...]
    quantifiers_pl: tuple[str, ...]
    quantifiers_both: tuple[str, ...]
    n_clusters: int = 1
    _noun_clusters: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        clusters = {i: [] for i in range(self.n_clusters)}
        for idx, noun in enumerate(self.nouns):
            clusters[idx % self.n_clusters].append(noun)
        object.__setattr__(self, "_noun_clusters", clusters)

    def cluster_members(self, members: tuple[str, ...], cluster: int) -> list[str]:
        return [m for i, m in enumerate(members) if i % self.n_clusters == cluster]


def make_families(config: GeneratorConfig) -> PredicateFamilies:
    total = config.vocab_size
    n_qsg = max(2, total // 12)
    n_qpl = max(2, total // 12)
    n_qboth = max(1, total // 25)
    rest = total - n_qsg - n_qpl - n_qboth
    n_nouns = max(config.n_clusters, rest // 2)
    n_verbs = max(config.n_clusters, (rest - n_nouns) * 3 // 5)
    n_adjs = max(1, rest - n_nouns - n_verbs)
    return PredicateFamilies(
        nouns=tuple(f"_noun{i}_n" for i in range(n_nouns)),
        verbs=tuple(f"_verb{i}_v" for i in range(n_verbs)),
        adjectives=tuple(f"_adj{i}_a" for i in range(n_adjs)),
        quantifiers_sg=tuple(f"_qsg{i}_q" for i in range(n_qsg)),
        quantifiers_pl=tuple(f"_qpl{i}_q" for i in range(n_qpl)),
        quantifiers_both=tuple(f"_qany{i}_q" for i in range(n_qboth)),
        n_clusters=config.n_clusters,
    )


def predicate_pos(label: str) -> str | None:
    """Part of speech encoded in a synthetic predicate name, if any."""
    if label.startswith("_"):
        parts = label.split("_")
        if len(parts) >= 3 and parts[-1] in ("n", "v", "a", "q"):
            return parts[-1]
    if label == "and_c":
        return "c"
    return None


def quantifier_number(label: str) -> str | None:
    """'sg', 'pl', or 'both' for synthetic quantifier predicates."""
    if predicate_pos(label) != "q":
        return None
    stem = label.split("_")[1]
    if stem.startswith("qsg"):
        return "sg"
    if stem.startswith("qpl"):
        return "pl"
    if stem.startswith("qany"):
        return "both"
    return None


class _GraphBuilder:
    def __init__(self, graph_id: str):
        self.graph_id = graph_id
        self.nodes: list[RawNode] = []
        self.edges: list[tuple[int, int, str]] = []

    def add_node(self, label: str, features: tuple[str, ...] = ()) -> int:
        self.nodes.append(RawNode(label=label, features=features))
        return len(self.nodes) - 1

    def add_edge(self, src: int, dst: int, label: str):
        self.edges.append((src, dst, label))


def _pick(rng: np.random.Generator, pool: list[str] | tuple[str, ...]) -> str:
    return pool[int(rng.integers(len(pool)))]


def _cluster_pick(rng, families: PredicateFamilies, members: tuple[str, ...],
                  cluster: int, fidelity: float) -> str:
    local = families.cluster_members(members, cluster)
    if local and rng.random() < fidelity:
        return _pick(rng, local)
    return _pick(rng, members)


def _sample_graph(index: int, config: GeneratorConfig, families: PredicateFamilies,
                  seed: int) -> RawGraph:
    rng = make_rng(seed, CORPUS_STREAM, index)
    cluster = int(rng.integers(config.n_clusters))
    lo, hi = config.node_range
    target_nodes = int(rng.integers(lo, hi + 1))
    extra_feats = tuple(f for f in config.features if f not in ("sg", "pl", "past", "pres"))
    tenses = tuple(f for f in config.features if f in ("past", "pres")) or ()
    b = _GraphBuilder(f"g{index:06d}")

    def noun_features(number: str) -> tuple[str, ...]:
        feats = [number]
        for f in extra_feats:
            if rng.random() < 0.15:
                feats.append(f)
        return tuple(feats)

    def verb_features() -> tuple[str, ...]:
        return (_pick(rng, tenses),) if tenses else ()

    def add_noun_phrase() -> int:
        number = "sg" if rng.random() < 0.5 else "pl"
        noun = b.add_node(
            _cluster_pick(rng, families, families.nouns, cluster, config.cluster_fidelity),
            noun_features(number),
        )
        q_pool = families.quantifiers_both if rng.random() < 0.2 else (
            families.quantifiers_sg if number == "sg" else families.quantifiers_pl
        )
        quant = b.add_node(_pick(rng, q_pool))
        b.add_edge(quant, noun, "RSTR")
        return noun

    verb = b.add_node(
        _cluster_pick(rng, families, families.verbs, cluster, config.cluster_fidelity),
        verb_features(),
    )
    subject = add_noun_phrase()
    b.add_edge(verb, subject, "ARG1")
    nouns = [subject]
    if rng.random() < 0.8 and len(b.nodes) + 2 <= target_nodes:
        obj = add_noun_phrase()
        b.add_edge(verb, obj, "ARG2")
        nouns.append(obj)

    while len(b.nodes) < target_nodes:
        room = target_nodes - len(b.nodes)
        roll = rng.random()
        if roll < 0.45 or room == 1:
            adj = b.add_node(
                _cluster_pick(rng, families, families.adjectives, cluster,
                              config.cluster_fidelity)
            )
            b.add_edge(adj, _pick(rng, nouns), "MOD")
        elif roll < 0.65 and room >= 2:
            # coordinate an existing noun with a fresh one
            second = b.add_node(
                _cluster_pick(rng, families, families.nouns, cluster,
                              config.cluster_fidelity),
                noun_features("sg" if rng.random() < 0.5 else "pl"),
            )
            conj = b.add_node("and_c")
            b.add_edge(conj, _pick(rng, nouns), "L-INDEX")
            b.add_edge(conj, second, "R-INDEX")
            nouns.append(second)
        elif roll < 0.75 and room >= 3:
            extra = add_noun_phrase()
            b.add_edge(verb, extra, "ARG3")
            nouns.append(extra)
        elif roll < 0.85:
            unk = b.add_node("unknown")
            b.add_edge(unk, _pick(rng, nouns), "ARG")
        else:
            disc = b.add_node("focus_d" if rng.random() < 0.5 else "parg_d")
            b.add_edge(disc, verb, "MOD")

    _fill_edges(b, rng, config)

    oov = rng.random(len(b.nodes)) < config.oov_rate
    nodes = [
        RawNode(label=n.label, features=n.features, oov=bool(flag))
        for n, flag in zip(b.nodes, oov)
    ]
    return RawGraph(graph_id=b.graph_id, nodes=nodes, edges=b.edges, htop=verb)


def _fill_edges(b: _GraphBuilder, rng: np.random.Generator, config: GeneratorConfig):
    """Top up edge count to the sampled density, preserving acyclicity."""
    n = len(b.nodes)
    dlo, dhi = config.edge_density
    target = int(round(rng.uniform(dlo, dhi) * n))
    target = min(target, n * (n - 1) // 2)
    if len(b.edges) >= target:
        return
    order = _topological_order(n, b.edges)
    position = {node: i for i, node in enumerate(order)}
    existing = {(s, d) for s, d, _ in b.edges}
    candidates = [
        (u, v) for u in range(n) for v in range(n)
        if u != v and position[u] < position[v] and (u, v) not in existing
    ]
    rng.shuffle(candidates)
    for u, v in candidates[: target - len(b.edges)]:
        b.add_edge(u, v, "MOD")


def _topological_order(n: int, edges) -> list[int]:
    indegree = [0] * n
    out: list[list[int]] = [[] for _ in range(n)]
    for src, dst, _ in edges:
        out[src].append(dst)
        indegree[dst] += 1
    frontier = sorted(i for i in range(n) if indegree[i] == 0)
    order = []
    while frontier:
        node = frontier.pop(0)
        order.append(node)
        for nxt in sorted(out[node]):
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                frontier.append(nxt)
    return order


def generate_synthetic_corpus(config: GeneratorConfig, seed: int):
    """Yield `config.n_graphs` deterministic RawGraph records."""
    config.validate()
    families = make_families(config)
    for index in range(config.n_graphs):
        graph = _sample_graph(index, config, families, seed)
        graph.validate()
        yield graph


MARKER_PREDICATES = ("_marker0_x", "_marker1_x")


def make_separable_classification_data(n_train: int, n_test: int, seed: int,
                                       config: GeneratorConfig | None = None):
    """Two-class graph dataset that is linearly separable by construction.

    Each graph carries one marker node whose predicate identifies the
    class; everything else is ordinary synthetic content.  Returns
    (vocabulary, train pairs, test pairs) of (GraphDoc, label).
    """
    from .graphs import GraphDoc, build_vocabulary, preprocess  # local to avoid a cycle

    total = n_train + n_test
    config = config or GeneratorConfig(n_graphs=total, vocab_size=36, node_range=(5, 8))
    if config.n_graphs < total:
        raise ConfigError(f"generator config yields {config.n_graphs} graphs; need {total}")
    vocab = build_vocabulary(generate_synthetic_corpus(config, seed),
                             extra_predicates=MARKER_PREDICATES)
    marker_ids = tuple(vocab.predicate_id(m) for m in MARKER_PREDICATES)
    rng = make_rng(seed, DATA_STREAM)
    pairs = []
    for raw in generate_synthetic_corpus(config, seed):
        doc = preprocess(raw, vocab)
        label = int(rng.integers(2))
        marker = doc.n_nodes
        pairs.append((GraphDoc(
            graph_id=doc.graph_id,
            labels=doc.labels + [marker_ids[label]],
            features=list(doc.features) + [()],
            edges=doc.edges + [(marker, doc.htop, vocab.edge_label_id("MOD"))],
            htop=doc.htop,
        ), label))
    return vocab, pairs[:n_train], pairs[n_train:]
