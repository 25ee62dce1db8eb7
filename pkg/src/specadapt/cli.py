"""Command-line entry point.

Six subcommands: train, eval, spectra, verify-lemma, gen-synth, ablate.
Configuration is resolved in three layers (command-line --set overrides beat
config-file values, which beat defaults); unknown keys are rejected by name.
Every invocation writes resolved-config.json into the output directory
before doing anything else, so a run can be reproduced from that snapshot.

Exit codes: 0 success, 1 validation problem (bad flags, keys, files,
contracts), 2 numeric failure (divergence, eigensolver breakdown).
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .autodiff import NumericError
from .dataio import (
    GraphFormatError,
    SbmDomainSpec,
    SbmSpec,
    load_pair,
    save_pair,
    generate_sbm_pair,
)
from .figures import (
    save_ablation_bars,
    save_bound_scatter,
    save_signature_heatmap,
    save_signature_profiles,
    save_training_curves,
)
from .graph import normalized_laplacian
from .spectral import (
    category_signature,
    cross_domain_signature_correlation,
    eig_sym,
    resample_signature,
)
from .stability import curved_filter_bank, run_perturbation_sweep
from .trainer import (
    VARIANTS,
    TrainConfig,
    evaluate,
    load_model,
    save_model,
    train,
)

__all__ = ["main"]


class UsageError(ValueError):
    """Bad flags, unknown config keys, unparseable values."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage by default; route through exit code 1
    def error(self, message):
        raise UsageError(message)


def _bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _int_pair(raw: str) -> tuple[int, int]:
    parts = [p for p in raw.replace(",", " ").split() if p]
    if len(parts) != 2:
        raise ValueError(f"expected two comma-separated ints, got {raw!r}")
    return int(parts[0]), int(parts[1])


def _floats(raw: str) -> tuple[float, ...]:
    parts = [p for p in raw.replace(",", " ").split() if p]
    if not parts:
        raise ValueError("expected at least one number")
    return tuple(float(p) for p in parts)


def _maybe_int(raw: str) -> int | None:
    return None if raw.strip().lower() in ("auto", "none") else int(raw)


def _choice(options: tuple[str, ...]):
    def convert(raw: str) -> str:
        if raw not in options:
            raise ValueError(f"expected one of {options}, got {raw!r}")
        return raw

    return convert


# key -> (default, converter, help text); drives both resolution and --help
_TRAIN_KEYS = {
    "alpha": (0.8, float, "high-band source mixing weight in [0,1]"),
    "beta": (0.8, float, "low-band source mixing weight in [0,1]"),
    "gamma1": (0.3, float, "target entropy loss weight"),
    "gamma2": (0.1, float, "domain loss weight"),
    "lr": (1e-4, float, "Adam learning rate"),
    "epochs": (1600, int, "training epochs"),
    "hidden": ((128, 16), _int_pair, "two hidden widths, comma separated"),
    "dropout": (0.3, float, "dropout rate on dual-branch layers"),
    "seed": (0, int, "run seed"),
    "k": (None, _maybe_int, "spectral components to mix ('auto' = smaller node count)"),
    "eval_every": (10, int, "epochs between target evaluations"),
    "variant": ("full", _choice(VARIANTS), f"one of {', '.join(VARIANTS)}"),
}

_ABLATE_KEYS = {k: v for k, v in _TRAIN_KEYS.items() if k != "variant"}

_VERIFY_KEYS = {
    "trials": (100, int, "number of random perturbation trials"),
    "nodes": (6, int, "nodes per trial graph"),
    "feat_dim": (5, int, "feature dimension per trial graph"),
    "eps": (1e-3, float, "perturbation magnitude"),
    "alpha": (0.8, float, "mixing weight (applied to both bands)"),
    "seed": (0, int, "sweep seed"),
    "bank": ("default", _choice(("default", "curved")), "filter bank: 'default' or 'curved'"),
    "heuristic": (False, _bool, "allow the greedy aligner beyond the exhaustive cap"),
}

_GEN_KEYS = {
    "source_nodes": (200, int, "source node count"),
    "target_nodes": (200, int, "target node count"),
    "source_p_in": (0.10, float, "source within-class edge probability"),
    "source_p_out": (0.01, float, "source between-class edge probability"),
    "target_p_in": (0.06, float, "target within-class edge probability"),
    "target_p_out": (0.02, float, "target between-class edge probability"),
    "proportions": ((0.45, 0.35, 0.20), _floats, "class proportions (defines class count)"),
    "feat_dim": (16, int, "feature dimension"),
    "class_mean_scale": (0.15, float, "scale of the shared class means"),
    "shift": (1.0, float, "target class-mean shift magnitude"),
    "noise": (0.5, float, "feature noise level, both domains"),
    "seed": (0, int, "generator seed"),
}

_EMPTY_KEYS: dict = {}


def _schema_epilog(schema: dict) -> str:
    if not schema:
        return "config keys: none"
    lines = ["config keys (KEY=VALUE in --config file or --set):"]
    for key, (default, _, text) in schema.items():
        lines.append(f"  {key:<18} default {_jsonable(default)!r}  {text}")
    return "\n".join(lines)


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    return value


def _stringify(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return str(value)


def _parse_kv_text(text: str, where: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"{where}:{lineno}: expected KEY=VALUE, got {stripped!r}")
        key, _, value = stripped.partition("=")
        entries[key.strip()] = value.strip()
    return entries


def _load_config_file(path: str) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    if text.lstrip().startswith("{"):
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc})") from None
        if isinstance(payload.get("config"), dict):
            payload = payload["config"]
        if not isinstance(payload, dict):
            raise UsageError(f"{path}: JSON config must be an object")
        return {str(k): _stringify(v) for k, v in payload.items()}
    return _parse_kv_text(text, path)


def _resolve_config(schema: dict, args) -> dict:
    values = {key: default for key, (default, _, _) in schema.items()}
    layered: list[tuple[str, dict[str, str]]] = []
    if getattr(args, "config", None):
        layered.append((args.config, _load_config_file(args.config)))
    overrides: dict[str, str] = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = str(args.seed)
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    layered.append(("--set", overrides))
    for where, entries in layered:
        for key, raw in entries.items():
            if key not in schema:
                known = ", ".join(schema) if schema else "none"
                raise UsageError(
                    f"unknown config key {key!r} (from {where}); known keys: {known}"
                )
            converter = schema[key][1]
            try:
                values[key] = converter(raw)
            except ValueError as exc:
                raise UsageError(f"bad value for {key!r} (from {where}): {exc}") from None
    return values


def _write_resolved(out: Path, subcommand: str, args, config: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    snapshot = {
        "subcommand": subcommand,
        "pair": getattr(args, "pair", None),
        "model": getattr(args, "model", None),
        "out": str(out),
        "config": {k: _jsonable(v) for k, v in config.items()},
    }
    (out / "resolved-config.json").write_text(json.dumps(snapshot, indent=2) + "\n")


def _train_config(values: dict, cache_dir: str | None, variant: str | None = None) -> TrainConfig:
    return TrainConfig(
        alpha=values["alpha"],
        beta=values["beta"],
        gamma1=values["gamma1"],
        gamma2=values["gamma2"],
        lr=values["lr"],
        epochs=values["epochs"],
        hidden=values["hidden"],
        dropout=values["dropout"],
        seed=values["seed"],
        k=values["k"],
        eval_every=values["eval_every"],
        variant=variant if variant is not None else values.get("variant", "full"),
        cache_dir=cache_dir,
    )


def _write_metrics(path: Path, records) -> None:
    path.write_text("".join(r.to_json_line() + "\n" for r in records))


def _write_embeddings(path: Path, z: np.ndarray) -> None:
    lines = [
        ",".join([str(i)] + [f"{v:.17g}" for v in row]) for i, row in enumerate(z)
    ]
    path.write_text("\n".join(lines) + "\n")


def _cmd_train(args) -> int:
    values = _resolve_config(_TRAIN_KEYS, args)
    out = Path(args.out)
    _write_resolved(out, "train", args, values)
    pair = load_pair(args.pair)
    cache_dir = args.cache if args.cache else str(out / "cache")
    cfg = _train_config(values, cache_dir)
    result = train(pair, cfg)
    _write_metrics(out / "metrics.jsonl", result.records)
    save_model(out / "model.npz", result.model)
    summary = {
        "config": asdict(cfg),
        "pair_hash": pair.content_hash(),
        "final_accuracy": result.final_accuracy,
        "epochs_run": len(result.records),
        "diverged": result.diverged,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    if result.records:
        save_training_curves(result.records, out / "training-curves.png")
    if args.dump_embeddings:
        _write_embeddings(out / "embeddings_source.csv", result.z_source)
        _write_embeddings(out / "embeddings_target.csv", result.z_target)
    if result.diverged:
        print(
            f"training diverged after {len(result.records)} finite epochs; "
            f"partial outputs in {out}",
            file=sys.stderr,
        )
        return 2
    print(
        f"trained {len(result.records)} epochs, final target accuracy "
        f"{result.final_accuracy:.4f}; outputs in {out}"
    )
    return 0


def _cmd_eval(args) -> int:
    _resolve_config(_EMPTY_KEYS, args)
    out = Path(args.out)
    _write_resolved(out, "eval", args, {})
    pair = load_pair(args.pair)
    model = load_model(args.model)
    accuracy = evaluate(pair.target, model)
    summary = {
        "accuracy": accuracy,
        "variant": model.config.variant,
        "pair_hash": pair.content_hash(),
        "model": str(args.model),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"target accuracy {accuracy:.4f}")
    return 0


def _cmd_spectra(args) -> int:
    _resolve_config(_EMPTY_KEYS, args)
    out = Path(args.out)
    _write_resolved(out, "spectra", args, {})
    pair = load_pair(args.pair)
    if pair.target.labels is None:
        raise ValueError("spectra needs labels on both graphs to group nodes by class")
    basis_s = eig_sym(normalized_laplacian(pair.source))
    basis_t = eig_sym(normalized_laplacian(pair.target))
    bins = min(pair.source.n, pair.target.n)
    source_sigs = {
        c: resample_signature(category_signature(pair.source, basis_s, c), bins)
        for c in range(pair.num_classes)
    }
    target_sigs = {
        c: resample_signature(category_signature(pair.target, basis_t, c), bins)
        for c in range(pair.num_classes)
    }
    corr = cross_domain_signature_correlation(pair, (basis_s, basis_t))

    header = ",".join(["rank"] + [f"class_{c}" for c in range(pair.num_classes)])
    for name, sigs in (("signatures_source.csv", source_sigs), ("signatures_target.csv", target_sigs)):
        rows = [header]
        for r in range(bins):
            rows.append(",".join([str(r)] + [f"{sigs[c][r]:.17g}" for c in sorted(sigs)]))
        (out / name).write_text("\n".join(rows) + "\n")
    corr_rows = [",".join(["source_class"] + [f"target_{c}" for c in range(pair.num_classes)])]
    for i, row in enumerate(corr):
        corr_rows.append(",".join([str(i)] + [f"{v:.17g}" for v in row]))
    (out / "correlation.csv").write_text("\n".join(corr_rows) + "\n")

    save_signature_heatmap(corr, out / "correlation.png")
    save_signature_profiles(source_sigs, target_sigs, out / "signatures.png")
    diag = float(np.mean(np.diag(corr)))
    off = float(np.mean(corr[~np.eye(corr.shape[0], dtype=bool)])) if corr.shape[0] > 1 else float("nan")
    print(f"signature correlation: diagonal mean {diag:.3f}, off-diagonal mean {off:.3f}")
    return 0


def _cmd_verify_lemma(args) -> int:
    values = _resolve_config(_VERIFY_KEYS, args)
    out = Path(args.out)
    _write_resolved(out, "verify-lemma", args, values)
    filters = curved_filter_bank() if values["bank"] == "curved" else None
    summary = run_perturbation_sweep(
        trials=values["trials"],
        nodes=values["nodes"],
        feat_dim=values["feat_dim"],
        eps=values["eps"],
        alpha=values["alpha"],
        seed=values["seed"],
        filters=filters,
        allow_heuristic=values["heuristic"],
    )
    lines = [json.dumps(r.to_dict()) for r in summary.reports]
    (out / "bound-reports.jsonl").write_text("\n".join(lines) + "\n")
    held = sum(r.holds for r in summary.reports)
    payload = {
        "trials": len(summary.reports),
        "held": int(held),
        "holds_fraction": summary.holds_fraction,
        "eps": summary.eps,
        "bank": values["bank"],
    }
    (out / "summary.json").write_text(json.dumps(payload, indent=2) + "\n")
    save_bound_scatter(summary.reports, out / "bound-scatter.png")
    print(
        f"bound held in {held}/{len(summary.reports)} trials at eps={summary.eps}"
    )
    return 0


def _cmd_gen_synth(args) -> int:
    values = _resolve_config(_GEN_KEYS, args)
    out = Path(args.out)
    _write_resolved(out, "gen-synth", args, values)
    spec = SbmSpec(
        source=SbmDomainSpec(
            nodes=values["source_nodes"],
            proportions=values["proportions"],
            p_in=values["source_p_in"],
            p_out=values["source_p_out"],
        ),
        target=SbmDomainSpec(
            nodes=values["target_nodes"],
            proportions=values["proportions"],
            p_in=values["target_p_in"],
            p_out=values["target_p_out"],
        ),
        feat_dim=values["feat_dim"],
        class_mean_scale=values["class_mean_scale"],
        shift=values["shift"],
        noise=values["noise"],
    )
    pair = generate_sbm_pair(spec, values["seed"])
    manifest = save_pair(out, pair)
    stats = {
        "manifest": str(manifest),
        "source_nodes": pair.source.n,
        "source_edges": int(pair.source.adjacency.sum() // 2),
        "target_nodes": pair.target.n,
        "target_edges": int(pair.target.adjacency.sum() // 2),
        "num_classes": pair.num_classes,
        "pair_hash": pair.content_hash(),
    }
    (out / "summary.json").write_text(json.dumps(stats, indent=2) + "\n")
    print(f"wrote pair manifest {manifest}")
    return 0


def _cmd_ablate(args) -> int:
    values = _resolve_config(_ABLATE_KEYS, args)
    out = Path(args.out)
    _write_resolved(out, "ablate", args, values)
    pair = load_pair(args.pair)
    cache_dir = args.cache if args.cache else str(out / "cache")
    accuracies: dict[str, float] = {}
    rows = ["variant\taccuracy\tfinal_total\tepochs_run"]
    for variant in VARIANTS:
        cfg = _train_config(values, cache_dir, variant=variant)
        result = train(pair, cfg)
        _write_metrics(out / f"metrics_{variant}.jsonl", result.records)
        accuracies[variant] = result.final_accuracy
        final_total = result.records[-1].total if result.records else float("nan")
        rows.append(
            f"{variant}\t{result.final_accuracy:.6f}\t{final_total:.6f}\t{len(result.records)}"
        )
        print(f"{variant:<10} accuracy {result.final_accuracy:.4f}")
    (out / "ablation.tsv").write_text("\n".join(rows) + "\n")
    (out / "summary.json").write_text(json.dumps(accuracies, indent=2) + "\n")
    save_ablation_bars(accuracies, out / "ablation.png")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="specadapt",
        description="Spectral-mixing domain adaptation for node classification.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def common(p: _Parser, schema: dict, *, pair: bool, seed_flag: bool) -> None:
        if pair:
            p.add_argument("--pair", required=True, help="pair manifest (pair.json)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="KEY=VALUE config file (or a resolved-config.json)")
        p.add_argument(
            "--set",
            action="append",
            metavar="KEY=VALUE",
            help="override one config key (repeatable; wins over --config)",
        )
        if seed_flag and "seed" in schema:
            p.add_argument("--seed", type=int, help="shorthand for --set seed=N")
        p.formatter_class = argparse.RawDescriptionHelpFormatter
        p.epilog = _schema_epilog(schema)

    p_train = sub.add_parser("train", help="adversarial training on a domain pair")
    common(p_train, _TRAIN_KEYS, pair=True, seed_flag=True)
    p_train.add_argument("--cache", help="spectra/PPMI cache dir (default <out>/cache)")
    p_train.add_argument(
        "--dump-embeddings",
        action="store_true",
        help="write final source/target embeddings as CSV",
    )
    p_train.set_defaults(handler=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a saved model on a pair's target")
    common(p_eval, _EMPTY_KEYS, pair=True, seed_flag=False)
    p_eval.add_argument("--model", required=True, help="model.npz from train")
    p_eval.set_defaults(handler=_cmd_eval)

    p_spectra = sub.add_parser("spectra", help="per-class spectral signatures and correlation")
    common(p_spectra, _EMPTY_KEYS, pair=True, seed_flag=False)
    p_spectra.set_defaults(handler=_cmd_spectra)

    p_verify = sub.add_parser("verify-lemma", help="perturbation sweep of the stability bound")
    common(p_verify, _VERIFY_KEYS, pair=False, seed_flag=True)
    p_verify.set_defaults(handler=_cmd_verify_lemma)

    p_gen = sub.add_parser("gen-synth", help="generate a synthetic cross-domain pair")
    common(p_gen, _GEN_KEYS, pair=False, seed_flag=True)
    p_gen.set_defaults(handler=_cmd_gen_synth)

    p_ablate = sub.add_parser("ablate", help="train every variant and tabulate accuracy")
    common(p_ablate, _ABLATE_KEYS, pair=True, seed_flag=True)
    p_ablate.add_argument("--cache", help="spectra/PPMI cache dir (default <out>/cache)")
    p_ablate.set_defaults(handler=_cmd_ablate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except (GraphFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
