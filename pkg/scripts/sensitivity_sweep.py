#!/usr/bin/env python3
"""Hyperparameter sensitivity sweep on a synthetic domain pair.

Grids the loss weights gamma1, gamma2 over {0.1, 0.3, 0.5, 0.7, 0.9} and the
mixing weight alpha (= beta) over {0.0, 0.2, ..., 1.0}, training the full
model once per cell and recording final target accuracy. Emits two TSV tables
and a two-panel figure into --out.
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from specadapt.dataio import default_sbm_spec, generate_sbm_pair, load_pair
from specadapt.trainer import TrainConfig, train

GAMMA_GRID = (0.1, 0.3, 0.5, 0.7, 0.9)
ALPHA_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


def mean_accuracy(pair, seeds: int, **overrides) -> float:
    accs = []
    for seed in range(seeds):
        cfg = TrainConfig(seed=seed, **overrides)
        accs.append(train(pair, cfg).final_accuracy)
    return float(np.mean(accs))


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pair", help="pair manifest directory; default: generate the benchmark pair")
    ap.add_argument("--out", default="sweep-out", help="output directory")
    ap.add_argument("--epochs", type=int, default=1600)
    ap.add_argument("--seeds", type=int, default=1, help="training seeds averaged per cell")
    ap.add_argument("--gen-seed", type=int, default=0, help="generator seed when no --pair given")
    ap.add_argument("--cache", help="eigendecomposition cache directory (default: <out>/cache)")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cache = args.cache or str(out / "cache")
    pair = load_pair(args.pair) if args.pair else generate_sbm_pair(default_sbm_spec(), seed=args.gen_seed)

    t0 = time.perf_counter()
    gamma_acc = np.zeros((len(GAMMA_GRID), len(GAMMA_GRID)))
    gamma_rows = ["gamma1\tgamma2\taccuracy"]
    for i, g1 in enumerate(GAMMA_GRID):
        for j, g2 in enumerate(GAMMA_GRID):
            acc = mean_accuracy(pair, args.seeds, epochs=args.epochs, cache_dir=cache,
                                gamma1=g1, gamma2=g2)
            gamma_acc[i, j] = acc
            gamma_rows.append(f"{g1}\t{g2}\t{acc:.4f}")
            print(f"gamma1={g1} gamma2={g2} acc={acc:.4f}", flush=True)
    (out / "sweep_gamma.tsv").write_text("\n".join(gamma_rows) + "\n")

    alpha_rows = ["alpha\taccuracy"]
    alpha_acc = []
    for a in ALPHA_GRID:
        acc = mean_accuracy(pair, args.seeds, epochs=args.epochs, cache_dir=cache,
                            alpha=a, beta=a)
        alpha_acc.append(acc)
        alpha_rows.append(f"{a}\t{acc:.4f}")
        print(f"alpha={a} acc={acc:.4f}", flush=True)
    (out / "sweep_alpha.tsv").write_text("\n".join(alpha_rows) + "\n")

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.5))
    im = ax1.imshow(gamma_acc, cmap="viridis", origin="lower")
    ax1.set_xticks(range(len(GAMMA_GRID)), [str(g) for g in GAMMA_GRID])
    ax1.set_yticks(range(len(GAMMA_GRID)), [str(g) for g in GAMMA_GRID])
    ax1.set_xlabel("gamma2 (domain weight)")
    ax1.set_ylabel("gamma1 (entropy weight)")
    ax1.set_title("target accuracy over loss weights")
    for i in range(len(GAMMA_GRID)):
        for j in range(len(GAMMA_GRID)):
            ax1.text(j, i, f"{gamma_acc[i, j]:.2f}", ha="center", va="center",
                     color="white", fontsize=8)
    fig.colorbar(im, ax=ax1, fraction=0.046)
    ax2.plot(ALPHA_GRID, alpha_acc, marker="o")
    ax2.set_xlabel("alpha (= beta)")
    ax2.set_ylabel("target accuracy")
    ax2.set_title("mixing-weight sensitivity")
    ax2.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out / "sensitivity.png", dpi=120)
    plt.close(fig)

    print(f"done in {time.perf_counter() - t0:.0f}s -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
