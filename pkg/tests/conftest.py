import numpy as np
import pytest

from gfolds.corpus import GeneratorConfig, generate_synthetic_corpus
from gfolds.graphs import build_vocabulary, preprocess
from gfolds.model import GFoLDSModel, ModelConfig


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def numeric_grad(f, x: np.ndarray, eps: float = 1e-3) -> np.ndarray:
    """Central finite differences of a scalar-valued f at x (64-bit)."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = f(x)
        flat[i] = orig - eps
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * eps)
    return grad


@pytest.fixture(scope="session")
def tiny_setup():
    """Small deterministic corpus, vocabulary, and preprocessed docs."""
    config = GeneratorConfig(n_graphs=24, vocab_size=36, node_range=(5, 9), oov_rate=0.1)
    vocab = build_vocabulary(generate_synthetic_corpus(config, seed=3),
                             extra_predicates=("if_x_then",))
    docs = [preprocess(g, vocab) for g in generate_synthetic_corpus(config, seed=3)]
    return config, vocab, docs


@pytest.fixture(scope="session")
def tiny_model(tiny_setup):
    _, vocab, _ = tiny_setup
    config = ModelConfig(
        vocab_size=vocab.n_predicates, n_features=max(vocab.n_features, 1),
        edge_labels=vocab.edge_labels, d_model=32, d_swa=32,
        n_swa_layers=2, n_encoder_layers=2, n_heads=4,
    )
    return GFoLDSModel.initialize(config, seed=9)
