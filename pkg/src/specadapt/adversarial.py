"""Classification and domain-discrimination heads plus the training losses.

The gradient reversal layer sits between the shared encoder and the domain
head only: the discriminator itself trains by plain descent on a standard
binary cross-entropy, while the reversed gradient pushes the encoder toward
domain-indistinguishable embeddings. Label-loss paths never pass through the
reversal.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    add,
    clip_min,
    concat_rows,
    log,
    matmul,
    mean_all,
    mul,
    reverse_gradient,
    row_sum,
    rowwise_log_softmax,
    rowwise_softmax,
    scale,
    sigmoid,
    sub,
    sum_all,
)

__all__ = [
    "Heads",
    "grl",
    "label_logits",
    "domain_scores",
    "source_loss",
    "target_entropy_loss",
    "domain_loss",
    "LossBreakdown",
    "total_objective",
]

_LOG_FLOOR = 1e-12

# Domain ids fed to the discriminator: source rows 0, target rows 1.
SOURCE_DOMAIN = 0.0
TARGET_DOMAIN = 1.0


def grl(x: Tensor) -> Tensor:
    """Gradient reversal: identity forward, exact negation backward."""
    return reverse_gradient(x)


@dataclass(eq=False)
class Heads:
    """Label head (embedding -> class logits) and domain head
    (embedding -> one sigmoid score)."""

    theta_label: Tensor
    bias_label: Tensor
    theta_domain: Tensor
    bias_domain: Tensor

    @classmethod
    def init(cls, embed_dim: int, num_classes: int, rng: np.random.Generator) -> "Heads":
        from .autodiff import glorot

        if embed_dim < 1 or num_classes < 1:
            raise ValueError(f"bad head dims: embed {embed_dim}, classes {num_classes}")
        return cls(
            theta_label=glorot(rng, embed_dim, num_classes),
            bias_label=Tensor(np.zeros((1, num_classes)), requires_grad=True),
            theta_domain=glorot(rng, embed_dim, 1),
            bias_domain=Tensor(np.zeros((1, 1)), requires_grad=True),
        )

    def all(self) -> list[Tensor]:
        return [self.theta_label, self.bias_label, self.theta_domain, self.bias_domain]

    @property
    def num_classes(self) -> int:
        return self.theta_label.shape[1]


def label_logits(z: Tensor, heads: Heads) -> Tensor:
    return add(matmul(z, heads.theta_label), heads.bias_label)


def domain_scores(z: Tensor, heads: Heads, use_grl: bool = True) -> Tensor:
    """Sigmoid domain scores; the reversal happens here, on the head's input."""
    h = grl(z) if use_grl else z
    return sigmoid(add(matmul(h, heads.theta_domain), heads.bias_domain))


def source_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy against hard labels, via max-shifted log-softmax."""
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"labels must be shape ({n},), got {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"labels must lie in [0, {c})")
    onehot = np.zeros((n, c))
    onehot[np.arange(n), labels] = 1.0
    picked = mul(rowwise_log_softmax(logits), Tensor(onehot))
    return scale(sum_all(picked), -1.0 / n)


def target_entropy_loss(logits: Tensor) -> Tensor:
    """Mean Shannon entropy of the predicted class distributions, with the
    0*log(0) := 0 convention. Bounded by [0, ln C]."""
    probs = rowwise_softmax(logits)
    log_probs = log(clip_min(probs, _LOG_FLOOR))
    per_node = row_sum(mul(probs, log_probs))
    n = logits.shape[0]
    return scale(sum_all(per_node), -1.0 / n)


def domain_loss(scores: Tensor, domain_ids: np.ndarray) -> Tensor:
    """Standard binary cross-entropy with log arguments clamped at 1e-12."""
    ids = np.asarray(domain_ids, dtype=np.float64).reshape(-1, 1)
    n = scores.shape[0]
    if scores.shape[1] != 1 or ids.shape != (n, 1):
        raise ValueError(f"scores {scores.shape} and ids {ids.shape} must be ({n}, 1)")
    if np.any((ids != 0.0) & (ids != 1.0)):
        raise ValueError("domain ids must be 0 or 1")
    d = Tensor(ids)
    ones = Tensor(np.ones((n, 1)))
    positive = mul(d, log(clip_min(scores, _LOG_FLOOR)))
    negative = mul(sub(ones, d), log(clip_min(sub(ones, scores), _LOG_FLOOR)))
    return scale(sum_all(add(positive, negative)), -1.0 / n)


@dataclass(eq=False)
class LossBreakdown:
    """The three loss terms and their weighted total, all live tensors."""

    source: Tensor
    target_entropy: Tensor
    domain: Tensor
    total: Tensor
    gamma1: float
    gamma2: float

    def values(self) -> dict[str, float]:
        return {
            "L_s": self.source.item(),
            "L_t": self.target_entropy.item(),
            "L_D": self.domain.item(),
            "total": self.total.item(),
        }


def total_objective(
    z_source: Tensor,
    z_target: Tensor,
    source_labels: np.ndarray,
    heads: Heads,
    gamma1: float,
    gamma2: float,
    use_grl: bool = True,
) -> LossBreakdown:
    """Assemble L_s + gamma1 * L_t + gamma2 * L_D.

    One minimization covers the whole game: the reversal layer inside the
    domain path makes descent on the total push the encoder to maximize the
    discriminator's loss while the discriminator still descends on it.
    """
    if gamma1 < 0.0 or gamma2 < 0.0:
        raise ValueError(f"loss weights must be >= 0, got {gamma1}, {gamma2}")
    l_s = source_loss(label_logits(z_source, heads), source_labels)
    l_t = target_entropy_loss(label_logits(z_target, heads))
    z_all = concat_rows(z_source, z_target)
    scores = domain_scores(z_all, heads, use_grl=use_grl)
    ids = np.concatenate(
        [
            np.full(z_source.shape[0], SOURCE_DOMAIN),
            np.full(z_target.shape[0], TARGET_DOMAIN),
        ]
    )
    l_d = domain_loss(scores, ids)
    total = add(add(l_s, scale(l_t, gamma1)), scale(l_d, gamma2))
    return LossBreakdown(
        source=l_s,
        target_entropy=l_t,
        domain=l_d,
        total=total,
        gamma1=float(gamma1),
        gamma2=float(gamma2),
    )
