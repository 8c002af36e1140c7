from pathlib import Path

import numpy as np
import pytest

from airgcn.graph import adjacency_from_edges

FIXTURES = Path(__file__).parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_graph(n: int, p: float, rng) -> "CsrMatrix":
    """Erdos-Renyi adjacency (possibly with isolated nodes)."""
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return adjacency_from_edges(n, np.array(pairs).reshape(-1, 2))


def dense_normalized(adj_dense: np.ndarray) -> np.ndarray:
    """Dense reference for the symmetric propagation operator."""
    a_tilde = adj_dense + np.eye(len(adj_dense))
    d = a_tilde.sum(axis=1)
    inv_sqrt = np.diag(1.0 / np.sqrt(d))
    return inv_sqrt @ a_tilde @ inv_sqrt


def dense_mean(adj_dense: np.ndarray) -> np.ndarray:
    """Dense reference for the row-stochastic propagation operator."""
    a_tilde = adj_dense + np.eye(len(adj_dense))
    return a_tilde / a_tilde.sum(axis=1, keepdims=True)
