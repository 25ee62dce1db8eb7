"""Training loop, evaluation, the source-only baseline, and model storage.

One Adam optimizer minimizes the weighted sum of the source cross-entropy,
the target prediction entropy, and the (gradient-reversed) domain loss over
every encoder and head parameter. Per-graph spectral bases and PPMI tables
are computed once up front and can be cached on disk keyed by the graph's
content hash.
"""
from __future__ import annotations

import json
import os
import tempfile
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .adversarial import Heads, label_logits, total_objective
from .autodiff import AdamState, Tape, Tensor, adam_step, backward, zero_grads
from .encoder import EncoderParams, PpmiCache, encode_source, encode_target, gcn_layer
from .graph import DomainPair, Graph, normalized_laplacian, renormalized_propagation
from .spectral import (
    FilterBank,
    SpectralBasis,
    SpectralMixConfig,
    SpectralMixOperators,
    eig_sym,
)

__all__ = [
    "VARIANTS",
    "TrainConfig",
    "EpochRecord",
    "TrainedModel",
    "TrainResult",
    "train",
    "evaluate",
    "train_source_only_baseline",
    "run_ablation",
    "cached_basis",
    "cached_ppmi",
    "save_model",
    "load_model",
]

# full: the whole objective. no_low / no_high: zero the matching frequency
# band in the mixing filters. no_global: drop the PPMI branch. no_domain /
# no_target: zero the corresponding loss weight.
VARIANTS = ("full", "no_low", "no_high", "no_global", "no_domain", "no_target")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run. Defaults follow the reference
    settings; epochs and eval cadence are desk-scale choices."""

    alpha: float = 0.8
    beta: float = 0.8
    gamma1: float = 0.3
    gamma2: float = 0.1
    lr: float = 1e-4
    epochs: int = 1600  # convergence budget: no target labels exist to early-stop on
    hidden: tuple[int, int] = (128, 16)
    dropout: float = 0.3
    seed: int = 0
    k: int | None = None
    eval_every: int = 10
    variant: str = "full"
    cache_dir: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0 or not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"alpha/beta must be in [0, 1], got {self.alpha}, {self.beta}")
        if self.gamma1 < 0.0 or self.gamma2 < 0.0:
            raise ValueError(f"gamma weights must be >= 0, got {self.gamma1}, {self.gamma2}")
        if self.lr <= 0.0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if len(self.hidden) != 2 or any(h < 1 for h in self.hidden):
            raise ValueError(f"hidden must be two positive dims, got {self.hidden}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.k is not None and self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.eval_every < 1:
            raise ValueError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


@dataclass(frozen=True)
class EpochRecord:
    """One line of the metrics stream."""

    epoch: int
    l_source: float
    l_target: float
    l_domain: float
    total: float
    accuracy: float
    ms: int

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "epoch": self.epoch,
                "L_s": self.l_source,
                "L_t": self.l_target,
                "L_D": self.l_domain,
                "total": self.total,
                "acc": self.accuracy,
                "ms": self.ms,
            }
        )


def _atomic_save_npz(path: Path, **arrays: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, **arrays)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cached_basis(g: Graph, cache_dir: str | Path | None) -> SpectralBasis:
    """Spectral basis of the normalized Laplacian, disk-cached by content hash."""
    if cache_dir is None:
        return eig_sym(normalized_laplacian(g))
    path = Path(cache_dir) / f"basis_{g.content_hash()}.npz"
    if path.exists():
        with np.load(path) as payload:
            return SpectralBasis(vectors=payload["vectors"], values=payload["values"])
    basis = eig_sym(normalized_laplacian(g))
    _atomic_save_npz(path, vectors=basis.vectors, values=basis.values)
    return basis


def cached_ppmi(g: Graph, cache_dir: str | Path | None) -> PpmiCache:
    """PPMI tables for the global branch, disk-cached by content hash."""
    if cache_dir is None:
        return PpmiCache.build(g)
    path = Path(cache_dir) / f"ppmi_{g.content_hash()}.npz"
    if path.exists():
        with np.load(path) as payload:
            return PpmiCache(
                transition=payload["transition"],
                ppmi=payload["ppmi"],
                propagation=payload["propagation"],
            )
    cache = PpmiCache.build(g)
    _atomic_save_npz(
        path, transition=cache.transition, ppmi=cache.ppmi, propagation=cache.propagation
    )
    return cache


def _variant_filters(variant: str) -> FilterBank:
    filters = FilterBank()
    if variant == "no_low":
        return filters.drop_low()
    if variant == "no_high":
        return filters.drop_high()
    return filters


def _variant_gammas(cfg: TrainConfig) -> tuple[float, float]:
    gamma1 = 0.0 if cfg.variant == "no_target" else cfg.gamma1
    gamma2 = 0.0 if cfg.variant == "no_domain" else cfg.gamma2
    return gamma1, gamma2


@dataclass(eq=False)
class TrainedModel:
    """Encoder parameters, heads, and the config that produced them."""

    params: EncoderParams
    heads: Heads
    config: TrainConfig

    def embed(self, g: Graph, cache: PpmiCache | None = None) -> Tensor:
        """Deployment-path embedding of a graph: the dual local/global
        encoder in eval mode (local-only under the no_global variant)."""
        if cache is None:
            cache = PpmiCache.build(g)
        return encode_target(
            g,
            cache,
            self.params,
            training=False,
            include_global=self.config.variant != "no_global",
        )


@dataclass(eq=False)
class TrainResult:
    model: TrainedModel
    records: list[EpochRecord]
    z_source: np.ndarray
    z_target: np.ndarray
    diverged: bool = False

    @property
    def final_accuracy(self) -> float:
        return self.records[-1].accuracy if self.records else float("nan")


def evaluate(g: Graph, model: TrainedModel, cache: PpmiCache | None = None) -> float:
    """Accuracy of argmax predictions on a labeled graph. Ties go to the
    lowest class id."""
    if g.labels is None:
        raise ValueError("evaluate needs a labeled graph")
    z = model.embed(g, cache=cache)
    logits = label_logits(z, model.heads).data
    predictions = np.argmax(logits, axis=1)  # first max wins ties
    return float(np.mean(predictions == g.labels))


def _finite(values: dict[str, float]) -> bool:
    return all(np.isfinite(v) for v in values.values())


def train(pair: DomainPair, cfg: TrainConfig) -> TrainResult:
    """Full adversarial training run over a domain pair.

    Precomputes both spectral bases and the target PPMI once, then runs
    cfg.epochs full-batch steps. Fixed seed implies a bit-identical record
    stream (timing aside). Non-finite losses abort the loop, keeping every
    record up to the last finite epoch.
    """
    rng = np.random.default_rng(cfg.seed)
    params = EncoderParams.init(pair.feat_dim, cfg.hidden, rng)
    heads = Heads.init(cfg.hidden[1], pair.num_classes, rng)
    model = TrainedModel(params=params, heads=heads, config=cfg)

    basis_s = cached_basis(pair.source, cfg.cache_dir)
    basis_t = cached_basis(pair.target, cfg.cache_dir)
    target_cache = cached_ppmi(pair.target, cfg.cache_dir)
    filters = _variant_filters(cfg.variant)
    mix_cfg = SpectralMixConfig(alpha=cfg.alpha, beta=cfg.beta, k=cfg.k)
    operators = SpectralMixOperators.build(basis_s, basis_t, mix_cfg, filters)
    local_prop = renormalized_propagation(pair.target)
    gamma1, gamma2 = _variant_gammas(cfg)
    include_global = cfg.variant != "no_global"

    opt_params = params.all() + heads.all()
    state = AdamState(opt_params)
    records: list[EpochRecord] = []
    accuracy = float("nan")
    diverged = False

    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        tape = Tape()
        with tape:
            z_s = encode_source(pair, (basis_s, basis_t), params, mix_cfg, filters, operators)
            z_t = encode_target(
                pair.target,
                target_cache,
                params,
                training=True,
                dropout_rate=cfg.dropout,
                run_seed=cfg.seed,
                epoch=epoch,
                include_global=include_global,
                local_prop=local_prop,
            )
            losses = total_objective(z_s, z_t, pair.source.labels, heads, gamma1, gamma2)
        values = losses.values()
        if not _finite(values):
            diverged = True
            break
        zero_grads(opt_params)
        backward(tape, losses.total)
        adam_step(opt_params, state, cfg.lr)
        if pair.target.labels is not None and (
            epoch % cfg.eval_every == 0 or epoch == cfg.epochs - 1
        ):
            accuracy = evaluate(pair.target, model, cache=target_cache)
        elapsed_ms = int(round((time.perf_counter() - started) * 1000.0))
        records.append(
            EpochRecord(
                epoch=epoch,
                l_source=values["L_s"],
                l_target=values["L_t"],
                l_domain=values["L_D"],
                total=values["total"],
                accuracy=accuracy,
                ms=elapsed_ms,
            )
        )

    z_source = encode_source(pair, (basis_s, basis_t), params, mix_cfg, filters, operators)
    z_target = encode_target(
        pair.target,
        target_cache,
        params,
        training=False,
        include_global=include_global,
        local_prop=local_prop,
    )
    return TrainResult(
        model=model,
        records=records,
        z_source=z_source.data.copy(),
        z_target=z_target.data.copy(),
        diverged=diverged,
    )


@dataclass(eq=False)
class _LocalGcnModel:
    """Plain two-layer GCN used by the source-only baseline."""

    params: EncoderParams
    heads: Heads

    def logits(self, g: Graph) -> np.ndarray:
        prop = renormalized_propagation(g)
        z = gcn_layer(prop, Tensor(g.features), self.params.w1, training=False)
        z = gcn_layer(prop, z, self.params.w2, training=False)
        return label_logits(z, self.heads).data

    def accuracy(self, g: Graph) -> float:
        if g.labels is None:
            raise ValueError("accuracy needs a labeled graph")
        predictions = np.argmax(self.logits(g), axis=1)
        return float(np.mean(predictions == g.labels))


def _train_local_gcn(pair: DomainPair, cfg: TrainConfig) -> _LocalGcnModel:
    from .adversarial import source_loss
    from .autodiff import derive_seed, dropout

    rng = np.random.default_rng(cfg.seed)
    params = EncoderParams.init(pair.feat_dim, cfg.hidden, rng)
    heads = Heads.init(cfg.hidden[1], pair.num_classes, rng)
    opt_params = [params.w1, params.w2, heads.theta_label, heads.bias_label]
    state = AdamState(opt_params)
    prop = renormalized_propagation(pair.source)
    x = Tensor(pair.source.features)
    for epoch in range(cfg.epochs):
        tape = Tape()
        with tape:
            z = gcn_layer(
                prop,
                x,
                params.w1,
                training=True,
                dropout_rate=cfg.dropout,
                seed=derive_seed(cfg.seed, epoch, 0),
            )
            z = gcn_layer(
                prop,
                z,
                params.w2,
                training=True,
                dropout_rate=cfg.dropout,
                seed=derive_seed(cfg.seed, epoch, 1),
            )
            loss = source_loss(label_logits(z, heads), pair.source.labels)
        if not np.isfinite(loss.item()):
            break
        zero_grads(opt_params)
        backward(tape, loss)
        adam_step(opt_params, state, cfg.lr)
    return _LocalGcnModel(params=params, heads=heads)


def train_source_only_baseline(pair: DomainPair, cfg: TrainConfig) -> float:
    """Train a plain GCN on source labels alone (same budget and seed),
    then report its accuracy on the target graph."""
    if pair.target.labels is None:
        raise ValueError("baseline evaluation needs target labels")
    model = _train_local_gcn(pair, cfg)
    return model.accuracy(pair.target)


def save_model(path: str | Path, model: TrainedModel) -> Path:
    """Serialize weights plus a config echo to one .npz file."""
    path = Path(path)
    cfg = model.config
    meta = {
        "alpha": cfg.alpha,
        "beta": cfg.beta,
        "gamma1": cfg.gamma1,
        "gamma2": cfg.gamma2,
        "lr": cfg.lr,
        "epochs": cfg.epochs,
        "hidden": list(cfg.hidden),
        "dropout": cfg.dropout,
        "seed": cfg.seed,
        "k": cfg.k,
        "eval_every": cfg.eval_every,
        "variant": cfg.variant,
    }
    _atomic_save_npz(
        path,
        w1=model.params.w1.data,
        w2=model.params.w2.data,
        w_attn=model.params.w_attn.data,
        w_score_local=model.params.w_score_local.data,
        w_score_global=model.params.w_score_global.data,
        theta_label=model.heads.theta_label.data,
        bias_label=model.heads.bias_label.data,
        theta_domain=model.heads.theta_domain.data,
        bias_domain=model.heads.bias_domain.data,
        config=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
    )
    return path


def load_model(path: str | Path) -> TrainedModel:
    with np.load(path) as payload:
        meta = json.loads(bytes(payload["config"].tobytes()).decode())
        params = EncoderParams(
            w1=Tensor(payload["w1"], requires_grad=True),
            w2=Tensor(payload["w2"], requires_grad=True),
            w_attn=Tensor(payload["w_attn"], requires_grad=True),
            w_score_local=Tensor(payload["w_score_local"], requires_grad=True),
            w_score_global=Tensor(payload["w_score_global"], requires_grad=True),
            hidden=tuple(meta["hidden"]),
        )
        heads = Heads(
            theta_label=Tensor(payload["theta_label"], requires_grad=True),
            bias_label=Tensor(payload["bias_label"], requires_grad=True),
            theta_domain=Tensor(payload["theta_domain"], requires_grad=True),
            bias_domain=Tensor(payload["bias_domain"], requires_grad=True),
        )
    cfg = TrainConfig(
        alpha=meta["alpha"],
        beta=meta["beta"],
        gamma1=meta["gamma1"],
        gamma2=meta["gamma2"],
        lr=meta["lr"],
        epochs=meta["epochs"],
        hidden=tuple(meta["hidden"]),
        dropout=meta["dropout"],
        seed=meta["seed"],
        k=meta["k"],
        eval_every=meta["eval_every"],
        variant=meta["variant"],
    )
    return TrainedModel(params=params, heads=heads, config=cfg)


def run_ablation(pair: DomainPair, cfg: TrainConfig) -> dict[str, TrainResult]:
    """Train every variant (full plus the five switches) under one config."""
    results: dict[str, TrainResult] = {}
    for variant in VARIANTS:
        results[variant] = train(pair, replace(cfg, variant=variant))
    return results
