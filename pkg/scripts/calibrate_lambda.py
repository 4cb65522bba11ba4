#!/usr/bin/env python3
"""Scan the segmentation penalty on the synthetic benchmark.

Reports the median segment length and zero-noise reconstruction error per
lambda so the default can be re-pinned if the benchmark changes.
"""

import argparse

import numpy as np

from pmc.primitives import (
    SegmentationConfig,
    execute_primitives,
    keypoint_difference,
    segment_primitives,
)
from pmc.synth_bench import DatasetConfig, generate_dataset


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lambdas", type=float, nargs="+",
                    default=[25, 50, 100, 200, 400, 800])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    noisy = generate_dataset(DatasetConfig(sequences_per_concept=3), seed=args.seed)
    clean = generate_dataset(
        DatasetConfig(sequences_per_concept=3, noise_std=0.0), seed=args.seed
    )
    print(f"{'lambda':>8s} {'median len':>10s} {'KD clean %':>10s}")
    for lam in args.lambdas:
        cfg = SegmentationConfig(lam=lam)
        lens = []
        for item in noisy.items:
            lens += [p.n_frames for p in segment_primitives(item.sequence, cfg).primitives]
        kds = []
        for item in clean.items:
            prims = segment_primitives(item.sequence, cfg)
            kds.append(
                keypoint_difference(execute_primitives(prims, like=item.sequence), item.sequence)
            )
        print(f"{lam:8.0f} {np.median(lens):10.0f} {np.mean(kds):10.4f}")


if __name__ == "__main__":
    main()
