"""The graph-transformer network.

Per-node input embeddings are the token embedding plus the normalized sum
of feature embeddings.  Edge structure enters only through the positional
encoding network: a stack of step-wise aggregation (SWA) layers in which
each edge label owns a forward and a backward projection matrix.  The
encoder stack on top is a pre-norm transformer with full attention: it
never sees the edges, so the whole network is permutation-equivariant
over nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, EmptyBatchError, ShapeError
from .graphs import CANONICAL_EDGE_LABELS, GraphDoc, Vocabulary
from .params import ParamStore
from .rng import INIT_STREAM, make_rng, stable_hash, truncated_normal
from .tensor import Tensor, dropout, embedding, gelu, layer_norm, matmul, reshape, softmax, transpose

ATTN_MASK_VALUE = -1e9


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    n_features: int
    edge_labels: tuple[str, ...] = CANONICAL_EDGE_LABELS
    d_model: int = 1024
    d_swa: int = 1024
    n_swa_layers: int = 2
    n_encoder_layers: int = 10
    n_heads: int = 8
    ff_inner_encoder: int = 0   # 0 -> 4 * d_model
    ff_inner_swa: int = 0       # 0 -> 4 * d_swa
    layer_norm_eps: float = 1e-12
    dropout: float = 0.0

    def __post_init__(self):
        if self.ff_inner_encoder == 0:
            object.__setattr__(self, "ff_inner_encoder", 4 * self.d_model)
        if self.ff_inner_swa == 0:
            object.__setattr__(self, "ff_inner_swa", 4 * self.d_swa)
        for name in ("vocab_size", "n_features", "d_model", "d_swa", "n_heads",
                     "ff_inner_encoder", "ff_inner_swa"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("n_swa_layers", "n_encoder_layers"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})"
            )
        if self.layer_norm_eps <= 0:
            raise ConfigError("layer_norm_eps must be positive")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError("dropout must be in [0, 1)")
        if len(set(self.edge_labels)) != len(self.edge_labels) or not self.edge_labels:
            raise ConfigError("edge_labels must be a non-empty list of distinct labels")
        object.__setattr__(self, "edge_labels", tuple(self.edge_labels))


_CONFIG_KEYS = (
    ("d_model", int), ("d_swa", int), ("n_swa_layers", int), ("n_encoder_layers", int),
    ("n_heads", int), ("ff_inner_encoder", int), ("ff_inner_swa", int),
    ("vocab_size", int), ("n_features", int), ("layer_norm_eps", float), ("dropout", float),
)


def config_to_text(config: ModelConfig, extra: dict | None = None) -> str:
    lines = [f"{key}={getattr(config, key)}" for key, _ in _CONFIG_KEYS]
    lines.append("edge_labels=" + ",".join(config.edge_labels))
    for key, value in (extra or {}).items():
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> tuple[ModelConfig, dict]:
    """Parse a key-value config record; unknown keys come back in the extras dict."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno} is not key=value: {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    kwargs = {}
    for key, caster in _CONFIG_KEYS:
        if key not in values:
            raise ConfigError(f"config record is missing key {key!r}")
        try:
            kwargs[key] = caster(values.pop(key))
        except ValueError:
            raise ConfigError(f"config key {key!r} is not a valid {caster.__name__}") from None
    if "edge_labels" not in values:
        raise ConfigError("config record is missing key 'edge_labels'")
    labels = tuple(s for s in values.pop("edge_labels").split(",") if s)
    return ModelConfig(edge_labels=labels, **kwargs), values


# -- parameter construction ---------------------------------------------------


def init_params(config: ModelConfig, seed: int) -> ParamStore:
    """Fresh parameter store: truncated-normal weights, zero biases, unit norms.

    Each parameter draws from its own random stream keyed by its name, so
    the initialization of one tensor never depends on the others.
    """
    store = ParamStore()

    def weight(name, shape):
        rng = make_rng(seed, INIT_STREAM, stable_hash(name))
        store.add(name, truncated_normal(rng, shape))

    def zeros(name, shape):
        store.add(name, np.zeros(shape, dtype=np.float32))

    def norm(prefix):
        store.add(f"{prefix}/gain", np.ones(_norm_width(prefix, config), dtype=np.float32))
        zeros(f"{prefix}/bias", (_norm_width(prefix, config),))

    d, ds = config.d_model, config.d_swa
    weight("embed/token", (config.vocab_size, d))
    weight("embed/feature", (config.n_features, d))
    norm("embed/feat_norm")

    weight("pos/in_proj/w", (d, ds))
    zeros("pos/in_proj/b", (ds,))
    for i in range(config.n_swa_layers):
        for label in config.edge_labels:
            weight(f"pos/swa{i}/fwd/{label}", (ds, ds))
            weight(f"pos/swa{i}/bwd/{label}", (ds, ds))
        norm(f"pos/swa{i}/fwd_norm")
        norm(f"pos/swa{i}/bwd_norm")
        weight(f"pos/swa{i}/ff/w1", (ds, config.ff_inner_swa))
        zeros(f"pos/swa{i}/ff/b1", (config.ff_inner_swa,))
        weight(f"pos/swa{i}/ff/w2", (config.ff_inner_swa, ds))
        zeros(f"pos/swa{i}/ff/b2", (ds,))
    weight("pos/out_proj/w", (ds, d))
    zeros("pos/out_proj/b", (d,))

    for j in range(config.n_encoder_layers):
        norm(f"enc{j}/ln1")
        for piece in ("q", "k", "v", "o"):
            weight(f"enc{j}/attn/{piece}/w", (d, d))
            zeros(f"enc{j}/attn/{piece}/b", (d,))
        norm(f"enc{j}/ln2")
        weight(f"enc{j}/ff/w1", (d, config.ff_inner_encoder))
        zeros(f"enc{j}/ff/b1", (config.ff_inner_encoder,))
        weight(f"enc{j}/ff/w2", (config.ff_inner_encoder, d))
        zeros(f"enc{j}/ff/b2", (d,))

    weight("mnm/dense/w", (d, d))
    zeros("mnm/dense/b", (d,))
    norm("mnm/norm")
    weight("mnm/out/w", (d, config.vocab_size))
    zeros("mnm/out/b", (config.vocab_size,))
    return store


def _norm_width(prefix: str, config: ModelConfig) -> int:
    return config.d_swa if prefix.startswith("pos/swa") else config.d_model


def add_classifier_head(store: ParamStore, config: ModelConfig, n_classes: int,
                        hidden: int | None = None, seed: int = 0):
    """Attach a two-layer mean-pool classifier head to an existing store."""
    hidden = hidden or config.d_model
    for name, shape in (
        ("cls/w1", (config.d_model, hidden)),
        ("cls/w2", (hidden, n_classes)),
    ):
        rng = make_rng(seed, INIT_STREAM, stable_hash(name))
        store.add(name, truncated_normal(rng, shape))
    store.add("cls/b1", np.zeros(hidden, dtype=np.float32))
    store.add("cls/b2", np.zeros(n_classes, dtype=np.float32))


def count_parameters(config: ModelConfig, n_classes: int = 0,
                     classifier_hidden: int | None = None) -> tuple[int, dict[str, int]]:
    """Exact learnable-parameter count with a per-group breakdown.

    The marginal cost of one extra edge label is
    ``2 * n_swa_layers * d_swa**2`` (a forward and a backward projection
    matrix per SWA layer; the projections carry no bias).
    """
    d, ds = config.d_model, config.d_swa
    n_labels = len(config.edge_labels)
    embeddings = config.vocab_size * d + config.n_features * d + 2 * d
    per_label = 2 * config.n_swa_layers * ds * ds
    swa_layer = (
        n_labels * 2 * ds * ds
        + 4 * ds  # forward and backward norms
        + ds * config.ff_inner_swa + config.ff_inner_swa
        + config.ff_inner_swa * ds + ds
    )
    positional = (d * ds + ds) + (ds * d + d) + config.n_swa_layers * swa_layer
    encoder_layer = (
        2 * d                       # ln1
        + 4 * (d * d + d)           # q, k, v, o projections
        + 2 * d                     # ln2
        + d * config.ff_inner_encoder + config.ff_inner_encoder
        + config.ff_inner_encoder * d + d
    )
    encoder = config.n_encoder_layers * encoder_layer
    mnm_head = d * d + d + 2 * d + d * config.vocab_size + config.vocab_size
    breakdown = {
        "embeddings": embeddings,
        "positional_encoding": positional,
        "per_edge_label": per_label,
        "encoder": encoder,
        "mnm_head": mnm_head,
    }
    total = embeddings + positional + encoder + mnm_head
    if n_classes:
        hidden = classifier_hidden or d
        classifier = d * hidden + hidden + hidden * n_classes + n_classes
        breakdown["classifier"] = classifier
        total += classifier
    breakdown["total"] = total
    return total, breakdown


# -- batching -----------------------------------------------------------------


class GraphBatch:
    """Padded arrays for a list of graphs plus per-edge-label adjacency."""

    def __init__(self, docs: list[GraphDoc], n_edge_labels: int, n_features: int,
                 pad_to: int | None = None, pad_id: int = Vocabulary.pad_id):
        if not docs:
            raise EmptyBatchError("cannot batch zero graphs")
        self.docs = docs
        self.size = len(docs)
        max_nodes = max(doc.n_nodes for doc in docs)
        self.n_nodes = pad_to or max_nodes
        if self.n_nodes < max_nodes:
            raise ShapeError(f"pad_to={pad_to} below largest graph ({max_nodes} nodes)")
        b, t = self.size, self.n_nodes
        self.labels = np.full((b, t), pad_id, dtype=np.int64)
        self.real = np.zeros((b, t), dtype=bool)
        self.feature_matrix = np.zeros((b, t, n_features), dtype=np.float32)
        self.adjacency = np.zeros((n_edge_labels, b, t, t), dtype=np.float32)
        for g, doc in enumerate(docs):
            n = doc.n_nodes
            self.labels[g, :n] = doc.labels
            self.real[g, :n] = True
            for i, feats in enumerate(doc.features):
                for f in set(feats):
                    if f >= n_features:
                        raise ConfigError(f"feature id {f} outside table of {n_features}")
                    self.feature_matrix[g, i, f] = 1.0
            for src, dst, lbl in doc.edges:
                if lbl >= n_edge_labels:
                    raise ConfigError(
                        f"edge label id {lbl} has no projection matrices "
                        f"(model has {n_edge_labels} edge labels)"
                    )
                self.adjacency[lbl, g, dst, src] = 1.0
        self.has_features = (self.feature_matrix.sum(axis=-1, keepdims=True) > 0).astype(np.float32)
        in_any = self.adjacency.sum(axis=0).sum(axis=-1, keepdims=True)   # (b, t, 1)
        out_any = self.adjacency.sum(axis=0).sum(axis=-2).reshape(b, t, 1)
        self.has_in = (in_any > 0).astype(np.float32)
        self.has_out = (out_any > 0).astype(np.float32)
        self.attn_mask = np.where(self.real, 0.0, ATTN_MASK_VALUE).astype(np.float32)
        self.attn_mask = self.attn_mask.reshape(b, 1, 1, t)


# -- forward passes -----------------------------------------------------------


def embed_nodes(params: ParamStore, config: ModelConfig, batch: GraphBatch) -> Tensor:
    """Token embedding plus normalized feature-sum embedding, per node.

    Nodes with an empty feature set contribute exactly zero from the
    feature term: normalizing a zero vector is degenerate, so the norm is
    bypassed rather than applied.
    """
    tok = embedding(params["embed/token"], batch.labels)
    fsum = matmul(Tensor(batch.feature_matrix), params["embed/feature"])
    normed = layer_norm(fsum, params["embed/feat_norm/gain"], params["embed/feat_norm/bias"],
                        config.layer_norm_eps)
    return tok + normed * Tensor(batch.has_features)


def _feed_forward(x: Tensor, params: ParamStore, prefix: str) -> Tensor:
    inner = gelu(matmul(x, params[f"{prefix}/w1"]) + params[f"{prefix}/b1"])
    return matmul(inner, params[f"{prefix}/w2"]) + params[f"{prefix}/b2"]


def swa_layer(params: ParamStore, config: ModelConfig, batch: GraphBatch,
              h: Tensor, layer: int) -> Tensor:
    """One step-wise aggregation round.

    Forward block: each node sums the label-projected states of its
    in-neighbors, then normalizes.  Backward block: same on the reversed
    edges with its own matrices.  Nodes with no in-edges (resp. no
    out-edges) contribute zero for that direction.
    """
    prefix = f"pos/swa{layer}"
    fwd_sum = None
    bwd_sum = None
    for idx, label in enumerate(config.edge_labels):
        adj = batch.adjacency[idx]
        if not adj.any():
            continue
        fwd_term = matmul(Tensor(adj), matmul(h, params[f"{prefix}/fwd/{label}"]))
        bwd_term = matmul(Tensor(np.swapaxes(adj, -1, -2).copy()),
                          matmul(h, params[f"{prefix}/bwd/{label}"]))
        fwd_sum = fwd_term if fwd_sum is None else fwd_sum + fwd_term
        bwd_sum = bwd_term if bwd_sum is None else bwd_sum + bwd_term
    if fwd_sum is None:
        zero = Tensor(np.zeros((batch.size, batch.n_nodes, config.d_swa), dtype=h.data.dtype))
        combined = zero
    else:
        fwd = layer_norm(fwd_sum, params[f"{prefix}/fwd_norm/gain"],
                         params[f"{prefix}/fwd_norm/bias"], config.layer_norm_eps)
        bwd = layer_norm(bwd_sum, params[f"{prefix}/bwd_norm/gain"],
                         params[f"{prefix}/bwd_norm/bias"], config.layer_norm_eps)
        combined = fwd * Tensor(batch.has_in) + bwd * Tensor(batch.has_out)
    return _feed_forward(combined, params, f"{prefix}/ff")


def positional_encoding(params: ParamStore, config: ModelConfig, batch: GraphBatch,
                        e: Tensor) -> Tensor:
    """Project to the SWA width, run the SWA stack, project back."""
    h = matmul(e, params["pos/in_proj/w"]) + params["pos/in_proj/b"]
    for layer in range(config.n_swa_layers):
        h = swa_layer(params, config, batch, h, layer)
    return matmul(h, params["pos/out_proj/w"]) + params["pos/out_proj/b"]


def encoder_forward(params: ParamStore, config: ModelConfig, x: Tensor,
                    attn_mask: np.ndarray, dropout_rng: np.random.Generator | None = None) -> Tensor:
    """Pre-norm encoder stack with full (structure-free) attention.

    Per layer: ``h = x + Attention(LN(x)); out = h + FF(LN(h))`` - the
    second residual is taken before normalization and the feed-forward
    output is not normalized again.
    """
    b = x.shape[0]
    t = x.shape[1]
    if attn_mask.shape != (b, 1, 1, t):
        raise ShapeError(f"attention mask must be ({b},1,1,{t}), got {attn_mask.shape}")
    d_head = config.d_model // config.n_heads
    scale = 1.0 / np.sqrt(d_head)
    rate = config.dropout if dropout_rng is not None else 0.0

    def heads(tensor: Tensor) -> Tensor:
        return transpose(reshape(tensor, (b, t, config.n_heads, d_head)), (0, 2, 1, 3))

    h = x
    for j in range(config.n_encoder_layers):
        ln_in = layer_norm(h, params[f"enc{j}/ln1/gain"], params[f"enc{j}/ln1/bias"],
                           config.layer_norm_eps)
        q = heads(matmul(ln_in, params[f"enc{j}/attn/q/w"]) + params[f"enc{j}/attn/q/b"])
        k = heads(matmul(ln_in, params[f"enc{j}/attn/k/w"]) + params[f"enc{j}/attn/k/b"])
        v = heads(matmul(ln_in, params[f"enc{j}/attn/v/w"]) + params[f"enc{j}/attn/v/b"])
        scores = matmul(q, transpose(k, (0, 1, 3, 2))) * scale
        probs = softmax(scores, axis=-1, additive_mask=attn_mask)
        ctx = reshape(transpose(matmul(probs, v), (0, 2, 1, 3)), (b, t, config.d_model))
        attn_out = matmul(ctx, params[f"enc{j}/attn/o/w"]) + params[f"enc{j}/attn/o/b"]
        if rate > 0:
            attn_out = dropout(attn_out, rate, dropout_rng)
        h = h + attn_out
        ln_mid = layer_norm(h, params[f"enc{j}/ln2/gain"], params[f"enc{j}/ln2/bias"],
                            config.layer_norm_eps)
        ff_out = _feed_forward(ln_mid, params, f"enc{j}/ff")
        if rate > 0:
            ff_out = dropout(ff_out, rate, dropout_rng)
        h = h + ff_out
    return h


def mnm_logits(params: ParamStore, config: ModelConfig, h: Tensor) -> Tensor:
    """Masked-node prediction head: dense, GeLU, norm, vocabulary projection."""
    dense = gelu(matmul(h, params["mnm/dense/w"]) + params["mnm/dense/b"])
    normed = layer_norm(dense, params["mnm/norm/gain"], params["mnm/norm/bias"],
                        config.layer_norm_eps)
    return matmul(normed, params["mnm/out/w"]) + params["mnm/out/b"]


def mean_pool_classify(params: ParamStore, config: ModelConfig, h: Tensor,
                       real: np.ndarray) -> Tensor:
    """Mean over non-pad node states, then a two-layer head."""
    counts = real.sum(axis=1)
    if (counts == 0).any():
        raise EmptyBatchError("mean pooling over an all-pad graph")
    b, t = real.shape
    weights = (real / counts[:, None]).astype(np.float32).reshape(b, 1, t)
    pooled = reshape(matmul(Tensor(weights), h), (b, config.d_model))
    hidden = gelu(matmul(pooled, params["cls/w1"]) + params["cls/b1"])
    return matmul(hidden, params["cls/w2"]) + params["cls/b2"]


# -- convenience wrapper --------------------------------------------------------


class GFoLDSModel:
    """Configuration plus parameters, with the standard forward passes."""

    def __init__(self, config: ModelConfig, params: ParamStore):
        self.config = config
        self.params = params

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int) -> "GFoLDSModel":
        return cls(config, init_params(config, seed))

    def batch(self, docs: list[GraphDoc], pad_to: int | None = None) -> GraphBatch:
        return GraphBatch(docs, len(self.config.edge_labels), self.config.n_features,
                          pad_to=pad_to)

    def node_states(self, batch: GraphBatch,
                    dropout_rng: np.random.Generator | None = None) -> Tensor:
        e = embed_nodes(self.params, self.config, batch)
        p = positional_encoding(self.params, self.config, batch, e)
        return encoder_forward(self.params, self.config, e + p, batch.attn_mask, dropout_rng)

    def node_logits(self, batch: GraphBatch,
                    dropout_rng: np.random.Generator | None = None) -> Tensor:
        return mnm_logits(self.params, self.config, self.node_states(batch, dropout_rng))

    def classify(self, batch: GraphBatch,
                 dropout_rng: np.random.Generator | None = None) -> Tensor:
        return mean_pool_classify(self.params, self.config,
                                  self.node_states(batch, dropout_rng), batch.real)

    def astype(self, dtype) -> "GFoLDSModel":
        return GFoLDSModel(self.config, self.params.astype(dtype))

    def with_dropout(self, rate: float) -> "GFoLDSModel":
        return GFoLDSModel(replace(self.config, dropout=rate), self.params)
