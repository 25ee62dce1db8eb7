"""Dual local/global graph encoder with shared weights.

The target domain is embedded twice, once through renormalized-adjacency
convolutions (local consistency) and once through PPMI-based propagation
(global consistency), then fused per node by a two-way attention. The source
domain is embedded by the cross-domain spectral mixing layers. All three
routes share the same weight matrices, which is what lets the label head
transfer across domains.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    Tensor,
    add,
    concat_cols,
    derive_seed,
    dropout,
    glorot,
    leaky_relu,
    matmul,
    mul,
    rowwise_softmax,
    sub,
)
from .graph import DomainPair, Graph, renormalized_propagation
from .spectral import (
    FilterBank,
    SpectralBasis,
    SpectralMixConfig,
    SpectralMixOperators,
    mix_layer,
    target_stream_layer,
)

__all__ = [
    "EncoderParams",
    "PpmiCache",
    "transition_matrix",
    "ppmi_matrix",
    "gcn_layer",
    "global_layer",
    "attention_fuse",
    "encode_target",
    "encode_source",
]


@dataclass(eq=False)
class EncoderParams:
    """Learnable encoder state: the two shared layer weights plus the
    attention fusion parameters."""

    w1: Tensor
    w2: Tensor
    w_attn: Tensor
    w_score_local: Tensor
    w_score_global: Tensor
    hidden: tuple[int, int] = field(default=(128, 16))

    @classmethod
    def init(
        cls,
        feat_dim: int,
        hidden: tuple[int, int],
        rng: np.random.Generator,
    ) -> "EncoderParams":
        h1, h2 = hidden
        if feat_dim < 1 or h1 < 1 or h2 < 1:
            raise ValueError(f"invalid dimensions: feat_dim={feat_dim}, hidden={hidden}")
        return cls(
            w1=glorot(rng, feat_dim, h1),
            w2=glorot(rng, h1, h2),
            w_attn=glorot(rng, h2, h2),
            w_score_local=glorot(rng, 2 * h2, 1),
            w_score_global=glorot(rng, 2 * h2, 1),
            hidden=(h1, h2),
        )

    def all(self) -> list[Tensor]:
        return [self.w1, self.w2, self.w_attn, self.w_score_local, self.w_score_global]


def _transition(adjacency: np.ndarray) -> np.ndarray:
    rowsum = adjacency.sum(axis=1, keepdims=True)
    safe = np.where(rowsum > 0.0, rowsum, 1.0)
    return np.where(rowsum > 0.0, adjacency / safe, 0.0)


def _ppmi(transition: np.ndarray) -> np.ndarray:
    total = transition.sum()
    if total <= 0.0:
        raise ValueError("PPMI is undefined for an all-zero transition matrix")
    joint = transition / total
    row = joint.sum(axis=1, keepdims=True)
    col = joint.sum(axis=0, keepdims=True)
    out = np.zeros_like(joint)
    pos = joint > 0.0
    # Wherever the joint mass is positive both marginals are too.
    out[pos] = np.log(joint[pos] / (row @ col)[pos])
    np.maximum(out, 0.0, out=out)
    return out


def _symmetric_normalize(m: np.ndarray) -> np.ndarray:
    deg = m.sum(axis=1)
    inv_sqrt = np.where(deg > 0.0, 1.0 / np.sqrt(np.where(deg > 0.0, deg, 1.0)), 0.0)
    return inv_sqrt[:, None] * m * inv_sqrt[None, :]


def transition_matrix(g: Graph) -> Tensor:
    """Row-normalized adjacency; all-zero rows (isolated nodes) stay zero."""
    return Tensor(_transition(g.adjacency))


def ppmi_matrix(transition: Tensor | np.ndarray) -> Tensor:
    """Positive pointwise mutual information of the transition mass:
    M_ij = max(log(m_ij / (m_i. m_.j)), 0) with m = P / sum(P)."""
    p = transition.data if isinstance(transition, Tensor) else np.asarray(transition, float)
    return Tensor(_ppmi(p))


@dataclass(eq=False)
class PpmiCache:
    """Per-graph constants for the global branch: the transition matrix, its
    PPMI, and the symmetrically normalized propagation D^{-1/2} M D^{-1/2}."""

    transition: np.ndarray
    ppmi: np.ndarray
    propagation: np.ndarray

    @classmethod
    def build(cls, g: Graph) -> "PpmiCache":
        p = _transition(g.adjacency)
        m = _ppmi(p)
        return cls(transition=p, ppmi=m, propagation=_symmetric_normalize(m))


def gcn_layer(
    prop: Tensor,
    z_prev: Tensor,
    w: Tensor,
    *,
    training: bool = False,
    dropout_rate: float = 0.3,
    seed: int = 0,
) -> Tensor:
    """sigma(prop @ Z @ W) with inverted dropout on the output while training."""
    out = leaky_relu(matmul(prop, matmul(z_prev, w)))
    return dropout(out, dropout_rate, seed, training=training)


def global_layer(
    ppmi_prop: Tensor,
    z_prev: Tensor,
    w: Tensor,
    *,
    training: bool = False,
    dropout_rate: float = 0.3,
    seed: int = 0,
) -> Tensor:
    """Same contract as gcn_layer with the PPMI propagation in place of the
    renormalized adjacency."""
    return gcn_layer(
        ppmi_prop, z_prev, w, training=training, dropout_rate=dropout_rate, seed=seed
    )


def attention_fuse(
    z_local: Tensor,
    z_global: Tensor,
    params: EncoderParams,
    force_zeta: float | None = None,
) -> Tensor:
    """Per-node convex combination of the two branch embeddings.

    Both branches are projected by the shared attention weight, scored
    against the concatenation of the two projections (own projection first),
    and softmaxed into (zeta, 1 - zeta). force_zeta pins the weight for
    tests; it stands in for sending one score to -inf.
    """
    if z_local.shape != z_global.shape:
        raise ValueError(f"branch shapes differ: {z_local.shape} vs {z_global.shape}")
    n = z_local.shape[0]
    if force_zeta is None:
        h_local = matmul(z_local, params.w_attn)
        h_global = matmul(z_global, params.w_attn)
        e_local = leaky_relu(matmul(concat_cols(h_local, h_global), params.w_score_local))
        e_global = leaky_relu(matmul(concat_cols(h_global, h_local), params.w_score_global))
        weights = rowwise_softmax(concat_cols(e_local, e_global))
        zeta = matmul(weights, Tensor([[1.0], [0.0]]))
    else:
        if not 0.0 <= force_zeta <= 1.0:
            raise ValueError(f"force_zeta must be in [0, 1], got {force_zeta}")
        zeta = Tensor(np.full((n, 1), float(force_zeta)))
    complement = sub(Tensor(np.ones((n, 1))), zeta)
    return add(mul(zeta, z_local), mul(complement, z_global))


def encode_target(
    g: Graph,
    cache: PpmiCache,
    params: EncoderParams,
    *,
    training: bool = False,
    dropout_rate: float = 0.3,
    run_seed: int = 0,
    epoch: int = 0,
    include_global: bool = True,
    force_zeta: float | None = None,
    local_prop: Tensor | None = None,
) -> Tensor:
    """Two-layer dual encoding of a graph: local and global branches through
    the shared weights, fused once at the output.

    Dropout seeds derive from (run_seed, epoch, layer index) so a repeated
    forward pass inside one epoch sees identical masks. include_global=False
    reduces to the local stack (the global-branch ablation).
    """
    x = Tensor(g.features)
    prop = local_prop if local_prop is not None else renormalized_propagation(g)

    def seed(layer: int) -> int:
        return derive_seed(run_seed, epoch, layer)

    z = gcn_layer(prop, x, params.w1, training=training, dropout_rate=dropout_rate, seed=seed(0))
    z_local = gcn_layer(prop, z, params.w2, training=training, dropout_rate=dropout_rate, seed=seed(1))
    if not include_global:
        return z_local
    ppmi_prop = Tensor(cache.propagation)
    h = global_layer(
        ppmi_prop, x, params.w1, training=training, dropout_rate=dropout_rate, seed=seed(2)
    )
    z_global = global_layer(
        ppmi_prop, h, params.w2, training=training, dropout_rate=dropout_rate, seed=seed(3)
    )
    return attention_fuse(z_local, z_global, params, force_zeta=force_zeta)


def encode_source(
    pair: DomainPair,
    bases: tuple[SpectralBasis, SpectralBasis],
    params: EncoderParams,
    cfg: SpectralMixConfig,
    filters: FilterBank | None = None,
    operators: SpectralMixOperators | None = None,
) -> Tensor:
    """Two stacked cross-domain mixing layers over the shared weights.

    Layer 2 mixes the layer-1 outputs of each domain under the same rule;
    the target-side stream advances with its own full-band filter. Returns
    the source representation (n_s, hidden[1]).
    """
    filters = filters if filters is not None else FilterBank()
    if operators is None:
        operators = SpectralMixOperators.build(bases[0], bases[1], cfg, filters)
    h_source = Tensor(pair.source.features)
    h_target = Tensor(pair.target.features)
    for w in (params.w1, params.w2):
        mixed = mix_layer(operators, h_source, h_target, w)
        h_target = target_stream_layer(operators, h_target, w)
        h_source = mixed
    return h_source
