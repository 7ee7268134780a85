"""Command-line entry point.

Subcommands: synth, preprocess, pretrain, eval, finetune, count-params,
scaling.  Results go to stdout as JSON, logs to stderr; every command
writes a manifest (resolved config, seed, input hashes) beside its
outputs, sufficient to replay the run byte for byte.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
abort, 1 unexpected failure.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field

from . import scaling as sc
from .corpus import GeneratorConfig, generate_synthetic_corpus
from .errors import ConfigError, DataError, DomainError, GfoldsError, TrainingDiverged
from .evaluate import (AnnotationSet, FinetuneConfig, RankingInstance, RetrievalDataset,
                       binarize_veridicality, finetune_classifier, precision_at_k,
                       score_retrieval)
from .graphs import (CANONICAL_EDGE_LABELS, Vocabulary, build_vocabulary, doc_from_record,
                     preprocess, read_docs_jsonl, read_raw_jsonl, write_docs_jsonl,
                     write_raw_jsonl)
from .model import GFoLDSModel, ModelConfig, count_parameters, init_params
from .optim import AdamW
from .pretrain import DEFAULT_LR_KNOTS, TrainConfig, load_checkpoint, pretrain, save_checkpoint

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _env_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("GFOLDS_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"GFOLDS_SEED is not an integer: {env!r}") from None
    return 0


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    seed: int
    config: dict
    inputs: list[dict] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    started_at: str = ""
    finished_at: str = ""

    def write(self, path: str):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _manifest(command: str, argv: list[str], seed: int, config: dict,
              inputs: list[str]) -> RunManifest:
    return RunManifest(
        command=command,
        argv=list(argv),
        seed=seed,
        config=config,
        inputs=[{"path": p, "sha256": _sha256(p)} for p in inputs],
        started_at=datetime.datetime.now(datetime.timezone.utc).isoformat(),
    )


def _finish(manifest: RunManifest, outputs: list[str], path: str | None,
            payload: dict | None = None):
    """Write the manifest beside the outputs, or embed it when there are none."""
    manifest.outputs = outputs
    manifest.finished_at = datetime.datetime.now(datetime.timezone.utc).isoformat()
    if path is not None:
        manifest.write(path)
    elif payload is not None:
        payload["manifest"] = asdict(manifest)


def _emit(payload: dict):
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def read_kv_file(path: str) -> dict[str, str]:
    """Flat key=value config file; blank lines and # comments ignored."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def _resolve(args, file_values: dict[str, str], schema: dict[str, tuple]):
    """Fill unset flags from a config file, with typed validation.

    `schema` maps attribute name -> (file key, caster, default).  Flags
    explicitly given on the command line win over file values.
    """
    for attr, (key, caster, default) in schema.items():
        if getattr(args, attr) is not None:
            continue
        if key in file_values:
            raw = file_values.pop(key)
            try:
                setattr(args, attr, caster(raw))
            except ValueError:
                raise ConfigError(f"config key {key!r}: cannot parse {raw!r}") from None
        else:
            setattr(args, attr, default)
    if file_values:
        raise ConfigError(f"unknown config keys: {sorted(file_values)}")


def _parse_bool(raw: str) -> bool:
    if raw.lower() in ("1", "true", "yes"):
        return True
    if raw.lower() in ("0", "false", "no"):
        return False
    raise ValueError(raw)


def _parse_knots(raw: str) -> tuple[tuple[float, float], ...]:
    """Parse '0:1e-5,1:2e-5,...' into schedule knots."""
    knots = []
    for piece in raw.split(","):
        if ":" not in piece:
            raise ConfigError(f"bad lr knot {piece!r}; expected position:rate")
        pos, _, lr = piece.partition(":")
        knots.append((float(pos), float(lr)))
    return tuple(knots)


# -- synth -------------------------------------------------------------------


_SYNTH_SCHEMA = {
    "n_graphs": ("n_graphs", int, 1000),
    "vocab_size": ("vocab_size", int, 60),
    "node_min": ("node_min", int, 5),
    "node_max": ("node_max", int, 12),
    "density_min": ("density_min", float, 0.9),
    "density_max": ("density_max", float, 1.3),
    "oov_rate": ("oov_rate", float, 0.0),
    "clusters": ("clusters", int, 4),
    "cluster_fidelity": ("cluster_fidelity", float, 0.85),
    "features": ("features", str, "sg,pl,past,pres"),
}


def cmd_synth(args, argv) -> int:
    seed = _env_seed(args.seed)
    file_values = read_kv_file(args.config) if args.config else {}
    _resolve(args, file_values, _SYNTH_SCHEMA)
    gen = GeneratorConfig(
        n_graphs=args.n_graphs,
        vocab_size=args.vocab_size,
        features=tuple(f for f in args.features.split(",") if f),
        node_range=(args.node_min, args.node_max),
        edge_density=(args.density_min, args.density_max),
        oov_rate=args.oov_rate,
        n_clusters=args.clusters,
        cluster_fidelity=args.cluster_fidelity,
    )
    gen.validate()
    manifest = _manifest("synth", argv, seed, {**asdict_flat(gen)},
                         [args.config] if args.config else [])
    write_raw_jsonl(args.out, generate_synthetic_corpus(gen, seed))
    _finish(manifest, [args.out], args.out + ".manifest.json")
    _emit({"command": "synth", "graphs": gen.n_graphs, "out": args.out, "seed": seed})
    return EXIT_OK


def asdict_flat(config) -> dict:
    out = {}
    for key, value in asdict(config).items():
        out[key] = list(value) if isinstance(value, tuple) else value
    return out


# -- preprocess ----------------------------------------------------------------


def cmd_preprocess(args, argv) -> int:
    seed = _env_seed(args.seed)
    extra = tuple(p for p in args.extra_predicates.split(",") if p)
    manifest = _manifest("preprocess", argv, seed,
                         {"in": args.in_path, "extra_predicates": list(extra)},
                         [args.in_path])
    vocab = build_vocabulary(read_raw_jsonl(args.in_path), extra_predicates=extra)
    vocab.save(args.vocab_out)
    n = 0

    def converted():
        nonlocal n
        for raw in read_raw_jsonl(args.in_path):
            n += 1
            yield preprocess(raw, vocab)

    write_docs_jsonl(args.out, converted())
    _finish(manifest, [args.out, args.vocab_out], args.out + ".manifest.json")
    _emit({
        "command": "preprocess",
        "graphs": n,
        "predicates": vocab.n_predicates,
        "features": vocab.n_features,
        "edge_labels": list(vocab.edge_labels),
        "out": args.out,
        "vocab_out": args.vocab_out,
    })
    return EXIT_OK


# -- pretrain --------------------------------------------------------------------


_MODEL_SCHEMA = {
    "d_model": ("d_model", int, 64),
    "d_swa": ("d_swa", int, 64),
    "n_swa_layers": ("n_swa_layers", int, 2),
    "n_encoder_layers": ("n_encoder_layers", int, 2),
    "n_heads": ("n_heads", int, 4),
    "ff_inner_encoder": ("ff_inner_encoder", int, 0),
    "ff_inner_swa": ("ff_inner_swa", int, 0),
    "layer_norm_eps": ("layer_norm_eps", float, 1e-12),
    "dropout": ("dropout", float, 0.0),
}

_TRAIN_SCHEMA = {
    "batch_size": ("batch_size", int, 16),
    "epochs": ("epochs", int, 4),
    "selection_prob": ("selection_prob", float, 0.2),
    "mask_rate": ("mask_rate", float, 1.0),
    "weight_decay": ("weight_decay", float, 1e-5),
    "lr_knots": ("lr_knots", _parse_knots, DEFAULT_LR_KNOTS),
    "checkpoint_every": ("checkpoint_every", int, 0),
    "eval_every": ("eval_every", int, 0),
    "max_nodes": ("max_nodes", int, 128),
}


def cmd_pretrain(args, argv) -> int:
    seed = _env_seed(args.seed)
    file_values = read_kv_file(args.config) if args.config else {}
    _resolve(args, file_values, {**_MODEL_SCHEMA, **_TRAIN_SCHEMA})
    vocab = Vocabulary.load(args.vocab)
    corpus = list(read_docs_jsonl(args.corpus))
    config = ModelConfig(
        vocab_size=vocab.n_predicates,
        n_features=max(vocab.n_features, 1),
        edge_labels=vocab.edge_labels,
        d_model=args.d_model, d_swa=args.d_swa,
        n_swa_layers=args.n_swa_layers, n_encoder_layers=args.n_encoder_layers,
        n_heads=args.n_heads, ff_inner_encoder=args.ff_inner_encoder,
        ff_inner_swa=args.ff_inner_swa, layer_norm_eps=args.layer_norm_eps,
        dropout=args.dropout,
    )
    train_cfg = TrainConfig(
        batch_size=args.batch_size, epochs=args.epochs,
        selection_prob=args.selection_prob, mask_rate_of_selected=args.mask_rate,
        lr_knots=args.lr_knots if isinstance(args.lr_knots, tuple) else _parse_knots(args.lr_knots),
        weight_decay=args.weight_decay, seed=seed,
        checkpoint_every=args.checkpoint_every,
        snapshots_per_epoch=args.eval_every, max_nodes=args.max_nodes,
    )
    train_cfg.validate()
    os.makedirs(args.out_dir, exist_ok=True)
    resolved = {**asdict_flat(config), **asdict_flat(train_cfg)}
    resolved["edge_labels"] = list(config.edge_labels)
    manifest = _manifest("pretrain", argv, seed, resolved, [args.corpus, args.vocab])
    model = GFoLDSModel(config, init_params(config, seed))
    result = pretrain(corpus, model, train_cfg, out_dir=args.out_dir,
                      log=lambda msg: print(msg, file=sys.stderr))
    outputs = [os.path.join(args.out_dir, "trace.csv")] + result.checkpoints
    _finish(manifest, outputs, os.path.join(args.out_dir, "manifest.json"))
    _emit({
        "command": "pretrain",
        "steps": result.steps_run,
        "skipped_batches": result.skipped_batches,
        "final_loss": result.final_loss,
        "checkpoints": result.checkpoints,
        "out_dir": args.out_dir,
    })
    return EXIT_OK


# -- eval ------------------------------------------------------------------------


def _load_eval_model(path: str) -> GFoLDSModel:
    model, _, _ = load_checkpoint(path)
    return model


def _read_jsonl_records(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"invalid JSON: {exc.msg}", line=lineno) from None


def cmd_eval(args, argv) -> int:
    seed = _env_seed(args.seed)
    inputs = [args.data] + ([args.model] if args.mode != "veridicality" else [])
    manifest = _manifest(f"eval:{args.mode}", argv, seed,
                         {"mode": args.mode, "renormalize": not args.no_renormalize}, inputs)
    if args.mode == "veridicality":
        per_item = []
        for lineno, record in _read_jsonl_records(args.data):
            ann = AnnotationSet(example_id=str(record.get("id", lineno)),
                                labels=tuple(record.get("labels", ())))
            per_item.append({"id": ann.example_id, "value": binarize_veridicality(ann)})
        payload = {
            "metric": "veridicality_positive_rate",
            "value": sum(item["value"] for item in per_item) / len(per_item) if per_item else 0.0,
            "n": len(per_item),
            "per_item": per_item,
        }
    elif args.mode == "map":
        model = _load_eval_model(args.model)
        vocab = Vocabulary.load(args.vocab)
        terms: list[int] = []
        properties = []
        for lineno, record in _read_jsonl_records(args.data):
            term_id = vocab.predicate_id(record["term"])
            if term_id not in terms:
                terms.append(term_id)
            doc = doc_from_record(record["property_graph"], lineno)
            inst = RankingInstance(graph=doc, query_node=int(record["query_node"]),
                                   gold=term_id)
            properties.append((inst, term_id))
        result = score_retrieval(model, RetrievalDataset(terms=terms, properties=properties),
                                 renormalize=not args.no_renormalize)
        payload = {
            "metric": "map",
            "value": result["map"],
            "n": result["n_terms"],
            "per_item": [{"term": vocab.predicates[t], "ap": ap} for t, ap in result["per_term"]],
        }
    elif args.mode == "precision":
        model = _load_eval_model(args.model)
        vocab = Vocabulary.load(args.vocab)
        per_item = []
        for lineno, record in _read_jsonl_records(args.data):
            doc = doc_from_record(record["graph"], lineno)
            members = frozenset(vocab.predicate_id(s) for s in record["class_members"])
            if not members:
                raise DataError("empty class_members list", line=lineno)
            inst = RankingInstance(graph=doc, query_node=int(record["query_node"]),
                                   gold=next(iter(members)))
            k = int(record.get("k", args.k))
            per_item.append({"id": str(record.get("id", lineno)),
                             "value": precision_at_k(model, inst, members, k)})
        if not per_item:
            raise DataError("no instances in precision data file")
        payload = {
            "metric": "precision_at_k",
            "value": sum(item["value"] for item in per_item) / len(per_item),
            "n": len(per_item),
            "per_item": per_item,
        }
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown eval mode {args.mode}")
    outputs = []
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        outputs.append(args.out)
        _finish(manifest, outputs, args.out + ".manifest.json")
    else:
        _finish(manifest, outputs, None, payload)
    _emit(payload)
    return EXIT_OK


# -- finetune ----------------------------------------------------------------------


def _read_labeled_docs(path: str):
    out = []
    for lineno, record in _read_jsonl_records(path):
        doc = doc_from_record(record["graph"], lineno)
        out.append((doc, int(record["label"])))
    return out


def cmd_finetune(args, argv) -> int:
    seed = _env_seed(args.seed)
    manifest = _manifest("finetune", argv, seed, {
        "epochs": args.epochs, "lr": args.lr, "weight_decay": args.weight_decay,
        "batch_size": args.batch_size, "freeze_encoder": args.freeze_encoder,
    }, [args.model, args.train, args.test])
    model, _, step = load_checkpoint(args.model)
    train = _read_labeled_docs(args.train)
    test = _read_labeled_docs(args.test)
    cfg = FinetuneConfig(
        epochs=args.epochs, lr=args.lr, weight_decay=args.weight_decay,
        batch_size=args.batch_size, seed=seed, freeze_encoder=args.freeze_encoder,
        classifier_hidden=args.hidden,
    )
    result = finetune_classifier(model, train, test, cfg)
    payload = {
        "metric": "accuracy",
        "value": result.accuracy,
        "n": result.n_test,
        "degenerate": result.degenerate,
        "final_train_loss": result.train_losses[-1] if result.train_losses else None,
    }
    if args.out:
        # a fresh optimizer covers the classifier head added during fine-tuning
        save_checkpoint(args.out, model, AdamW(model.params, weight_decay=cfg.weight_decay), step)
        _finish(manifest, [args.out, args.out + ".config"], args.out + ".manifest.json")
    else:
        _finish(manifest, [], None, payload)
    _emit(payload)
    return EXIT_OK


# -- count-params ---------------------------------------------------------------------


def cmd_count_params(args, argv) -> int:
    file_values = read_kv_file(args.config) if args.config else {}
    _resolve(args, file_values, {
        **_MODEL_SCHEMA,
        "vocab_size": ("vocab_size", int, None),
        "n_features": ("n_features", int, None),
    })
    if args.vocab:
        vocab = Vocabulary.load(args.vocab)
        vocab_size = vocab.n_predicates
        n_features = max(vocab.n_features, 1)
        edge_labels = vocab.edge_labels
    else:
        if args.vocab_size is None or args.n_features is None:
            raise ConfigError("count-params needs --vocab or both --vocab-size and --n-features")
        vocab_size = args.vocab_size
        n_features = args.n_features
        edge_labels = tuple(s for s in args.edge_labels.split(",") if s)
    config = ModelConfig(
        vocab_size=vocab_size, n_features=n_features, edge_labels=edge_labels,
        d_model=args.d_model, d_swa=args.d_swa, n_swa_layers=args.n_swa_layers,
        n_encoder_layers=args.n_encoder_layers, n_heads=args.n_heads,
        ff_inner_encoder=args.ff_inner_encoder, ff_inner_swa=args.ff_inner_swa,
        layer_norm_eps=args.layer_norm_eps, dropout=args.dropout,
    )
    total, breakdown = count_parameters(config, n_classes=args.n_classes or 0,
                                        classifier_hidden=args.classifier_hidden)
    payload = {
        "command": "count-params",
        "total": total,
        "breakdown": breakdown,
        "edge_labels": list(config.edge_labels),
    }
    manifest = _manifest("count-params", argv, 0, {**asdict_flat(config)},
                         [p for p in (args.config, args.vocab) if p])
    _finish(manifest, [], None, payload)
    _emit(payload)
    return EXIT_OK


# -- scaling -----------------------------------------------------------------------


def _law_params(args) -> tuple[sc.UniqueLawParams, sc.RepeatedLawParams]:
    unique = sc.UNIQUE_LAW
    repeated = sc.REPEATED_LAW
    if args.constants:
        values = read_kv_file(args.constants)
        try:
            base = {k: float(values[k]) for k in ("E", "A", "B", "alpha", "beta")}
            unique = sc.UniqueLawParams(**base)
            if "r_star_d" in values or "r_star_n" in values:
                repeated = sc.RepeatedLawParams(
                    **base,
                    r_star_d=float(values["r_star_d"]),
                    r_star_n=float(values["r_star_n"]),
                )
        except KeyError as exc:
            raise ConfigError(f"constants file is missing key {exc.args[0]!r}") from None
    return unique, repeated


def cmd_scaling(args, argv) -> int:
    unique, repeated = _law_params(args)
    n, d = args.n, args.d
    if args.compute_optimal is not None:
        n, d = sc.compute_optimal(args.compute_optimal, unique)
    if args.d_opt_for_params is not None:
        n = args.d_opt_for_params
        d = sc.d_opt_for_params(n, unique)
    if args.n_opt_for_data is not None:
        d = args.n_opt_for_data
        n = sc.n_opt_for_data(d, unique)

    def record(n_value: float, d_value: float) -> dict:
        terms = sc.repeated_law_terms(n_value, d_value, args.r, repeated)
        return {
            "N": n_value,
            "D": d_value,
            "C": 6.0 * n_value * d_value,
            "r": args.r,
            "loss_unique": sc.loss_unique(n_value, d_value, unique),
            "loss_repeated": terms["loss"],
            "branch": terms["branch"],
            "d_hat": terms["d_hat"],
            "n_hat": terms["n_hat"],
        }

    if args.corpus:
        nodes = edges = graphs = 0
        for doc in read_docs_jsonl(args.corpus):
            graphs += 1
            nodes += doc.n_nodes
            edges += len(doc.edges)
        if n is None:
            raise ConfigError("--corpus mode needs --n for the parameter count")
        payload = {
            "command": "scaling",
            "corpus": {"graphs": graphs, "nodes": nodes, "edges": edges},
            "u_d_nodes": record(n, float(nodes)),
            "u_d_nodes_plus_edges": record(n, float(nodes + edges)),
            "u_d_graphs": record(n, float(graphs)),
        }
    else:
        if n is None or d is None:
            raise ConfigError("scaling needs --n and --d (or a frontier flag)")
        payload = record(n, d)
        if args.audit:
            payload["audit"] = sc.appendix_f_audit(n, d, repeated, repetitions=args.r)
    manifest = _manifest("scaling", argv, 0, {"r": args.r},
                         [p for p in (args.constants, args.corpus) if p])
    _finish(manifest, [], None, payload)
    _emit(payload)
    return EXIT_OK


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gfolds",
        description="Graph-transformer language model toolkit: corpus synthesis, "
                    "preprocessing, masked-node pretraining, evaluation, and "
                    "scaling-law queries.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_seed(p):
        p.add_argument("--seed", type=int, default=None,
                       help="random seed (falls back to GFOLDS_SEED, then 0)")

    p = sub.add_parser("synth", help="generate a synthetic raw-graph corpus")
    p.add_argument("--out", required=True, help="output JSONL path for raw graphs")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--n-graphs", type=int, default=None, help="number of graphs to emit")
    p.add_argument("--vocab-size", type=int, default=None, help="content-predicate inventory size")
    p.add_argument("--node-min", type=int, default=None, help="minimum nodes per graph")
    p.add_argument("--node-max", type=int, default=None, help="maximum nodes per graph")
    p.add_argument("--density-min", type=float, default=None, help="minimum edges per node")
    p.add_argument("--density-max", type=float, default=None, help="maximum edges per node")
    p.add_argument("--oov-rate", type=float, default=None, help="per-node out-of-vocabulary rate")
    p.add_argument("--clusters", type=int, default=None, help="number of predicate topic clusters")
    p.add_argument("--cluster-fidelity", type=float, default=None,
                   help="probability a predicate draw stays in the graph's cluster")
    p.add_argument("--features", default=None, help="comma-separated feature inventory")
    add_seed(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="build a vocabulary and preprocess raw graphs")
    p.add_argument("--in", dest="in_path", required=True, help="raw-graph JSONL input")
    p.add_argument("--vocab-out", required=True, help="vocabulary TSV output path")
    p.add_argument("--out", required=True, help="preprocessed-graph JSONL output")
    p.add_argument("--extra-predicates", default="",
                   help="comma-separated predicates to add to the vocabulary "
                        "(e.g. if_x_then for premise/hypothesis merging)")
    add_seed(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("pretrain", help="masked-node pretraining")
    p.add_argument("--corpus", required=True, help="preprocessed-graph JSONL")
    p.add_argument("--vocab", required=True, help="vocabulary TSV")
    p.add_argument("--out-dir", required=True, help="directory for trace and checkpoints")
    p.add_argument("--config", default=None, help="key=value config file")
    for flag, help_text in (
        ("--d-model", "model width"),
        ("--d-swa", "aggregation-layer width"),
        ("--n-swa-layers", "number of aggregation layers"),
        ("--n-encoder-layers", "number of encoder layers"),
        ("--n-heads", "attention heads per encoder layer"),
        ("--ff-inner-encoder", "encoder feed-forward inner width (0 = 4x)"),
        ("--ff-inner-swa", "aggregation feed-forward inner width (0 = 4x)"),
        ("--batch-size", "graphs per training batch"),
        ("--epochs", "passes over the corpus"),
        ("--checkpoint-every", "checkpoint every N steps (0 = off)"),
        ("--eval-every", "evenly spaced checkpoints per epoch (0 = off)"),
        ("--max-nodes", "skip graphs larger than this"),
    ):
        p.add_argument(flag, type=int, default=None, help=help_text)
    for flag, help_text in (
        ("--layer-norm-eps", "layer norm epsilon"),
        ("--dropout", "dropout rate"),
        ("--selection-prob", "per-node prediction selection probability"),
        ("--mask-rate", "fraction of selected nodes that are masked"),
        ("--weight-decay", "decoupled weight decay"),
    ):
        p.add_argument(flag, type=float, default=None, help=help_text)
    p.add_argument("--lr-knots", type=str, default=None,
                   help="schedule knots as position:rate pairs, e.g. 0:1e-5,1:2e-5")
    add_seed(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("eval", help="evaluation metrics over a data file")
    p.add_argument("mode", choices=("map", "precision", "veridicality"),
                   help="which metric to compute")
    p.add_argument("--model", default=None, help="model checkpoint (map/precision modes)")
    p.add_argument("--vocab", default=None, help="vocabulary TSV (map/precision modes)")
    p.add_argument("--data", required=True, help="metric-specific JSONL data file")
    p.add_argument("--k", type=int, default=10, help="default k for precision mode")
    p.add_argument("--no-renormalize", action="store_true",
                   help="score with raw logits instead of renormalized probabilities")
    p.add_argument("--out", default=None, help="also write the metrics JSON here")
    add_seed(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("finetune", help="fine-tune a classifier head end to end")
    p.add_argument("--model", required=True, help="pretrained checkpoint")
    p.add_argument("--train", required=True, help="labeled-graph JSONL (training split)")
    p.add_argument("--test", required=True, help="labeled-graph JSONL (held-out split)")
    p.add_argument("--epochs", type=int, default=8, help="fine-tuning epochs")
    p.add_argument("--lr", type=float, default=1e-6, help="constant learn rate")
    p.add_argument("--weight-decay", type=float, default=1e-5, help="decoupled weight decay")
    p.add_argument("--batch-size", type=int, default=16, help="examples per batch")
    p.add_argument("--freeze-encoder", action="store_true",
                   help="update only the classifier head")
    p.add_argument("--hidden", type=int, default=None, help="classifier hidden width")
    p.add_argument("--out", default=None, help="write the fine-tuned checkpoint here")
    add_seed(p)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("count-params", help="exact parameter count for a configuration")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--vocab", default=None, help="derive sizes from a vocabulary TSV")
    p.add_argument("--vocab-size", type=int, default=None, help="vocabulary size")
    p.add_argument("--n-features", type=int, default=None, help="feature inventory size")
    p.add_argument("--edge-labels", default=",".join(CANONICAL_EDGE_LABELS),
                   help="comma-separated edge label inventory")
    for flag, help_text in (
        ("--d-model", "model width"),
        ("--d-swa", "aggregation-layer width"),
        ("--n-swa-layers", "number of aggregation layers"),
        ("--n-encoder-layers", "number of encoder layers"),
        ("--n-heads", "attention heads per encoder layer"),
        ("--ff-inner-encoder", "encoder feed-forward inner width (0 = 4x)"),
        ("--ff-inner-swa", "aggregation feed-forward inner width (0 = 4x)"),
        ("--n-classes", "include a classifier head for this many classes"),
        ("--classifier-hidden", "classifier hidden width"),
    ):
        p.add_argument(flag, type=int, default=None, help=help_text)
    p.add_argument("--layer-norm-eps", type=float, default=None, help="layer norm epsilon")
    p.add_argument("--dropout", type=float, default=None, help="dropout rate")
    p.set_defaults(func=cmd_count_params)

    p = sub.add_parser("scaling", help="scaling-law queries")
    p.add_argument("--n", type=float, default=None, help="parameter count N")
    p.add_argument("--d", type=float, default=None, help="unique token count U_D")
    p.add_argument("--r", type=float, default=1.0, help="repetitions (epochs) over U_D")
    p.add_argument("--compute-optimal", type=float, default=None,
                   help="derive (N, D) from a FLOPs budget")
    p.add_argument("--d-opt-for-params", type=float, default=None,
                   help="given N, fill in the compute-optimal D")
    p.add_argument("--n-opt-for-data", type=float, default=None,
                   help="given D, fill in the compute-optimal N")
    p.add_argument("--audit", action="store_true",
                   help="include the half-data consistency audit")
    p.add_argument("--corpus", default=None,
                   help="preprocessed JSONL; report U_D as nodes, nodes+edges, and graphs")
    p.add_argument("--constants", default=None,
                   help="key=value file overriding E,A,B,alpha,beta[,r_star_d,r_star_n]")
    add_seed(p)
    p.set_defaults(func=cmd_scaling)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args, argv)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DomainError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDiverged as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except GfoldsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
