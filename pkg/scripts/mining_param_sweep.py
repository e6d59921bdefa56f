#!/usr/bin/env python3
"""Sweep the mining parameters: labels-per-side m, percentile eta, and the
side selection, holding everything else fixed.

Only the ID-versus-negative mass term consumes mined labels, so the sweep
should show a quick saturation in m and mild sensitivity to eta.
"""

import argparse
from dataclasses import replace

import numpy as np

from clipscope import (
    MiningConfig,
    OrderKind,
    ScorerConfig,
    Selection,
    StreamOrdering,
    SweepPoint,
    ablation_sweep,
    generate,
    presets,
)


def run_grid(args, grid, label):
    base = presets()[args.preset]
    results = {i: [] for i in range(len(grid))}
    for s in range(args.seeds):
        data = generate(replace(base, seed=base.seed + s))
        reports = ablation_sweep(
            grid,
            candidates=data.candidates,
            id_table=data.id_table,
            id_embeddings=data.id_stream,
            ood_embeddings=data.ood_stream,
            mining_config=MiningConfig(),
            scorer_config=ScorerConfig(),
            ordering=StreamOrdering(OrderKind.RANDOM, seed=53 * s, trials=args.trials),
        )
        for i, rep in enumerate(reports):
            results[i].append((rep.auroc, rep.fpr95))
    print(f"\n{label}  (preset={args.preset}, seeds={args.seeds})")
    print(f"{'point':<28} {'auroc':>8} {'fpr95':>8}")
    for i, point in enumerate(grid):
        desc = ", ".join(
            f"{k}={getattr(getattr(point, k), 'value', getattr(point, k))}"
            for k in ("m", "eta", "selection")
            if getattr(point, k) is not None
        )
        aurocs = [a for a, _ in results[i]]
        fprs = [f for _, f in results[i]]
        print(f"{desc:<28} {np.mean(aurocs):>8.4f} {np.mean(fprs):>8.4f}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", default="hard", choices=sorted(presets()))
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--trials", type=int, default=3)
    args = ap.parse_args()

    run_grid(args, [SweepPoint(m=m) for m in (0, 10, 50, 100, 200, 5000)],
             "labels per side")
    # keep m below the lexicon size here, otherwise both sides take the whole
    # pool and neither eta nor the side selection can change anything
    run_grid(
        args,
        [SweepPoint(m=100, eta=e) for e in (0.001, 0.05, 0.25, 0.5, 0.75, 0.999)],
        "percentile parameter (m=100)",
    )
    run_grid(
        args,
        [SweepPoint(m=100, selection=sel) for sel in Selection],
        "side selection (m=100)",
    )


if __name__ == "__main__":
    main()
