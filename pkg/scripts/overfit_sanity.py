"""Memorize a 32-image synthetic set with each architecture and report the epoch it happens.

    python3 scripts/overfit_sanity.py --width-scale 0.25 --resolution 64
"""

import argparse
import time

from greenleaf.fixtures import synthetic_arrays
from greenleaf.models import ARCHITECTURES, build_model, count_parameters
from greenleaf.train import TrainConfig, fit


class Memorized(Exception):
    pass


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--arch", nargs="*", default=list(ARCHITECTURES))
    ap.add_argument("--width-scale", type=float, default=0.25)
    ap.add_argument("--resolution", type=int, default=64)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--max-epochs", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    data = synthetic_arrays(per_class=8, resolution=args.resolution, seed=args.seed)
    cfg = TrainConfig(learning_rate=args.lr, max_epochs=args.max_epochs, batch_size=32, early_stop=False,
                      seed=args.seed)

    def check(epoch, hist):
        print(f"  epoch {epoch:3d}  loss {hist.train_loss[-1]:.4f}  acc {hist.train_acc[-1]:.3f}")
        if hist.train_acc[-1] == 1.0:
            raise Memorized(epoch)

    for arch in args.arch:
        model = build_model(arch, width_scale=args.width_scale, resolution=args.resolution, seed=args.seed)
        print(f"{arch}: {count_parameters(model):,} parameters")
        start = time.perf_counter()
        try:
            fit(model, data, None, cfg, eval_hook=lambda m, e: (0.0, 0.0), progress=check)
            print(f"{arch}: not memorized within {args.max_epochs} epochs")
        except Memorized as done:
            print(f"{arch}: 100% train accuracy at epoch {done.args[0]} "
                  f"({time.perf_counter() - start:.1f}s)")


if __name__ == "__main__":
    main()
