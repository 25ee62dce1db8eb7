"""Shared builders and numeric oracles for the suite."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import pytest

from specadapt.autodiff import Tensor
from specadapt.graph import DomainPair, Graph

FD_STEP = 1e-5
# Relative error floors at this scale so near-zero gradients compare sanely.
FD_FLOOR = 1e-6


def k2_graph(features: np.ndarray | None = None, labels=None, num_classes: int = 1) -> Graph:
    adjacency = np.array([[0.0, 1.0], [1.0, 0.0]])
    if features is None:
        features = np.eye(2)
    return Graph(adjacency=adjacency, features=features, labels=labels, num_classes=num_classes)


def path3_graph() -> Graph:
    adjacency = np.array(
        [
            [0.0, 1.0, 0.0],
            [1.0, 0.0, 1.0],
            [0.0, 1.0, 0.0],
        ]
    )
    return Graph(adjacency=adjacency, features=np.eye(3), labels=None, num_classes=1)


def random_graph(
    n: int,
    feat_dim: int,
    seed: int,
    *,
    edge_prob: float = 0.3,
    num_classes: int = 1,
    labeled: bool = False,
    weighted: bool = False,
) -> Graph:
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < edge_prob, k=1).astype(np.float64)
    if weighted:
        upper *= np.triu(rng.uniform(0.5, 1.5, (n, n)), k=1)
    adjacency = upper + upper.T
    features = rng.standard_normal((n, feat_dim))
    labels = rng.integers(0, num_classes, size=n) if labeled else None
    return Graph(adjacency=adjacency, features=features, labels=labels, num_classes=num_classes)


def tiny_pair(n_s: int = 8, n_t: int = 8, feat_dim: int = 4, seed: int = 0, num_classes: int = 3) -> DomainPair:
    source = random_graph(n_s, feat_dim, seed, num_classes=num_classes, labeled=True)
    target = random_graph(n_t, feat_dim, seed + 1, num_classes=num_classes, labeled=True)
    # Guarantee every class appears in the source so cross-entropy is well posed.
    labels = source.labels.copy()
    labels[:num_classes] = np.arange(num_classes)
    source = Graph(
        adjacency=source.adjacency,
        features=source.features,
        labels=labels,
        num_classes=num_classes,
    )
    return DomainPair(source=source, target=target)


def fd_gradient(loss_fn: Callable[[], float], param: Tensor, h: float = FD_STEP) -> np.ndarray:
    """Central finite differences of a re-entrant scalar loss wrt one tensor."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = loss_fn()
        flat[i] = keep - h
        down = loss_fn()
        flat[i] = keep
        out[i] = (up - down) / (2.0 * h)
    return grad


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray, floor: float = FD_FLOOR) -> float:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def assert_grad_close(
    loss_fn: Callable[[], float],
    params: Sequence[Tensor],
    tol: float = 1e-4,
) -> None:
    for p in params:
        assert p.grad is not None, "parameter missing its gradient"
        err = max_rel_err(p.grad, fd_gradient(loss_fn, p))
        assert err < tol, f"gradient mismatch {err:.3e} on shape {p.shape}"


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(11)
