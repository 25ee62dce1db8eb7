"""Undirected weighted graphs with dense adjacency, plus Laplacian builders.

Graphs are immutable by convention: every constructor validates once and
downstream code treats the arrays as read-only.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor

__all__ = [
    "Graph",
    "DomainPair",
    "permute_graph",
    "degree_matrix",
    "normalized_laplacian",
    "renormalized_propagation",
]


@dataclass(eq=False)
class Graph:
    """A graph over n nodes: symmetric nonnegative adjacency, node features,
    optional node labels, and the size of the shared label space.

    Parameters
    ----------
    adjacency : (n, n) float64
        Symmetric, zero diagonal, entries >= 0. Weights are allowed; the
        on-disk format only round-trips 0/1 graphs.
    features : (n, d) float64
    labels : (n,) int64 or None
        Class ids in [0, num_classes). All-or-nothing: either every node is
        labeled or none is.
    num_classes : int
        Size of the label space; required even when labels are withheld so
        paired domains can agree on it.
    """

    adjacency: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None = None
    num_classes: int = field(default=1)

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=np.float64)
        x = np.asarray(self.features, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"adjacency must be square, got {a.shape}")
        n = a.shape[0]
        if not np.all(np.isfinite(a)):
            raise ValueError("adjacency has non-finite entries")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be exactly symmetric")
        if np.any(np.diag(a) != 0.0):
            raise ValueError("self-loops are not allowed (nonzero diagonal)")
        if np.any(a < 0.0):
            raise ValueError("adjacency entries must be nonnegative")
        if x.ndim != 2 or x.shape[0] != n:
            raise ValueError(f"features must be (n, d) with n={n}, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("features have non-finite entries")
        if int(self.num_classes) < 1:
            raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")
        self.adjacency = a
        self.features = x
        self.num_classes = int(self.num_classes)
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=np.int64)
            if y.shape != (n,):
                raise ValueError(f"labels must be shape ({n},), got {y.shape}")
            if y.size and (y.min() < 0 or y.max() >= self.num_classes):
                raise ValueError("labels must lie in [0, num_classes)")
            self.labels = y

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def feat_dim(self) -> int:
        return self.features.shape[1]

    def content_hash(self) -> str:
        """SHA-256 over the raw arrays; keys on-disk caches and run summaries."""
        h = hashlib.sha256()
        h.update(np.int64(self.n).tobytes())
        h.update(np.int64(self.feat_dim).tobytes())
        h.update(np.int64(self.num_classes).tobytes())
        h.update(self.adjacency.tobytes())
        h.update(self.features.tobytes())
        if self.labels is not None:
            h.update(self.labels.tobytes())
        return h.hexdigest()


@dataclass(eq=False)
class DomainPair:
    """A labeled source graph and a target graph over the same feature and
    label spaces. Target labels, when present, are for evaluation only."""

    source: Graph
    target: Graph

    def __post_init__(self):
        if self.source.labels is None:
            raise ValueError("source graph must be labeled")
        if self.source.feat_dim != self.target.feat_dim:
            raise ValueError(
                f"feature dimensions differ: source {self.source.feat_dim}, "
                f"target {self.target.feat_dim}"
            )
        if self.source.num_classes != self.target.num_classes:
            raise ValueError(
                f"label spaces differ: source {self.source.num_classes}, "
                f"target {self.target.num_classes}"
            )

    @property
    def num_classes(self) -> int:
        return self.source.num_classes

    @property
    def feat_dim(self) -> int:
        return self.source.feat_dim

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.source.content_hash().encode())
        h.update(self.target.content_hash().encode())
        return h.hexdigest()


def permute_graph(g: Graph, perm: np.ndarray) -> Graph:
    """Relabel nodes so new node i is old node perm[i]."""
    perm = np.asarray(perm, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(g.n)):
        raise ValueError("perm must be a permutation of range(n)")
    return Graph(
        adjacency=g.adjacency[np.ix_(perm, perm)],
        features=g.features[perm],
        labels=None if g.labels is None else g.labels[perm],
        num_classes=g.num_classes,
    )


def degree_matrix(g: Graph) -> Tensor:
    """Diagonal weighted-degree matrix D."""
    return Tensor(np.diag(g.adjacency.sum(axis=1)))


def normalized_laplacian(g: Graph) -> Tensor:
    """L = I - D^{-1/2} A D^{-1/2}, with isolated nodes contributing an
    untouched identity row (their L_ii is 1)."""
    deg = g.adjacency.sum(axis=1)
    inv_sqrt = np.where(deg > 0.0, 1.0 / np.sqrt(np.where(deg > 0.0, deg, 1.0)), 0.0)
    lap = np.eye(g.n) - inv_sqrt[:, None] * g.adjacency * inv_sqrt[None, :]
    lap = (lap + lap.T) / 2.0  # kill rounding asymmetry before factorization
    return Tensor(lap)


def renormalized_propagation(g: Graph) -> Tensor:
    """Dtilde^{-1/2} (A + I) Dtilde^{-1/2}; the self-loop keeps every degree
    positive, so no zero-degree guard is needed."""
    a_tilde = g.adjacency + np.eye(g.n)
    inv_sqrt = 1.0 / np.sqrt(a_tilde.sum(axis=1))
    prop = inv_sqrt[:, None] * a_tilde * inv_sqrt[None, :]
    prop = (prop + prop.T) / 2.0
    return Tensor(prop)
