#!/usr/bin/env python3
"""Sweep the proposal budget K on a cluttered synthetic dataset.

Each sample carries 24 proposals but only one matches the command. Keeping
the top K by detector confidence trades oracle recall against distraction:
when K is small the confidence ordering can drop the true proposal entirely,
so accuracy is not guaranteed to grow or shrink monotonically with K.
"""

import argparse
import tempfile
from pathlib import Path

from cosground import OptimizerConfig, RunConfig, ablate_top_k, generate_synthetic


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=None,
                        help="working directory (default: temp dir)")
    parser.add_argument("--ks", type=int, nargs="+", default=[2, 4, 8, 16, 24])
    args = parser.parse_args()
    root = args.out or Path(tempfile.mkdtemp(prefix="cosground_demo_"))

    generate_synthetic(root / "data", n_train=400, n_test=150, p=24,
                       d_img=32, d_txt=16, noise_sigma=0.05, seed=21)

    cfg = RunConfig(
        optimizer=OptimizerConfig(epochs=4),
        train_dir=root / "data/train",
        val_dir=root / "data/test",
    )
    table = ablate_top_k(cfg, ks=args.ks)
    print(table.to_text())
    print("csv form:")
    print(table.to_csv())


if __name__ == "__main__":
    main()
