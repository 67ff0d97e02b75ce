"""Learning-rate sweep (1e-1 .. 1e-5) on the synthetic fixture; writes one learning curve per rate.

    python3 scripts/lr_sweep_fixture.py --arch shufflenet --max-epochs 30 --out runs/sweep_shufflenet
"""

import argparse
from pathlib import Path

from greenleaf.data import AugmentationConfig
from greenleaf.fixtures import synthetic_arrays
from greenleaf.models import ARCHITECTURES
from greenleaf.train import LR_GRID, TrainConfig, lr_sweep, read_csv_rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--arch", choices=ARCHITECTURES, default="shufflenet")
    ap.add_argument("--per-class", type=int, default=24)
    ap.add_argument("--width-scale", type=float, default=0.25)
    ap.add_argument("--resolution", type=int, default=64)
    ap.add_argument("--max-epochs", type=int, default=30)
    ap.add_argument("--augment", action="store_true")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("runs/sweep"))
    args = ap.parse_args()

    train = synthetic_arrays(args.per_class, args.resolution, seed=args.seed)
    val = synthetic_arrays(max(2, args.per_class // 4), args.resolution, seed=args.seed + 1)
    cfg = TrainConfig(max_epochs=args.max_epochs, seed=args.seed,
                      augmentation=AugmentationConfig() if args.augment else None)
    lr_sweep(args.arch, LR_GRID, cfg, train, val, args.out,
             dict(width_scale=args.width_scale, resolution=args.resolution))
    for row in read_csv_rows(args.out / "summary.csv"):
        print(", ".join(f"{k}={v}" for k, v in row.items()))


if __name__ == "__main__":
    main()
