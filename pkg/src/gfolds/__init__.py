"""Graph-transformer language modeling over labeled directed graphs.

Subpackages by topic:

- ``tensor`` / ``optim`` / ``params``: dense tensors with reverse-mode
  autodiff, AdamW, and the binary parameter container.
- ``graphs`` / ``corpus``: graph data model, vocabulary, preprocessing,
  and the synthetic corpus generator.
- ``model``: the network (feature-summed embeddings, SWA positional
  encoding, pre-norm encoder, prediction heads) and parameter accounting.
- ``pretrain``: masked-node pretraining loop, schedule, checkpoints.
- ``evaluate``: masked ranking, retrieval MAP, precision@k, veridicality
  binarization, classifier fine-tuning.
- ``scaling``: unique- and repeated-data loss laws and the
  compute-optimal frontier.
- ``cli``: the ``gfolds`` command.
"""

from .graphs import (CANONICAL_EDGE_LABELS, GraphDoc, RawGraph, RawNode, Vocabulary,
                     build_vocabulary, merge_premise_hypothesis, preprocess)
from .model import GFoLDSModel, ModelConfig, count_parameters, init_params
from .params import ParamStore
from .pretrain import TrainConfig, lr_at, pretrain, select_and_mask
from .tensor import Tensor

__all__ = [
    "CANONICAL_EDGE_LABELS",
    "GFoLDSModel",
    "GraphDoc",
    "ModelConfig",
    "ParamStore",
    "RawGraph",
    "RawNode",
    "Tensor",
    "TrainConfig",
    "Vocabulary",
    "build_vocabulary",
    "count_parameters",
    "init_params",
    "lr_at",
    "merge_premise_hypothesis",
    "preprocess",
    "pretrain",
    "select_and_mask",
]

__version__ = "0.1.0"
