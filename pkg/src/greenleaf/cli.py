"""Command-line entry point: train, sweep, eval, profile, augment, fixture.

Settings resolve as flags > ``--config`` JSON > defaults. Every run writes
``resolved_config.json`` to its output directory; passing it back through
``--config`` replays the run.

Exit status: 0 success, 1 user error (bad flags, config, dataset), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from . import data as dt
from . import models as mdl
from .blocks import ConfigurationError
from .evaluation import evaluate
from .fixtures import write_fixture
from .profiler import profile_report, to_csv, to_text
from .train import LR_GRID, DivergedTrainingError, TrainConfig, fit, lr_sweep

log = logging.getLogger("greenleaf")

SUBCOMMANDS = ("train", "sweep", "eval", "profile", "augment", "fixture")


class UsageError(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get("GREENLEAF_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"GREENLEAF_SEED must be an integer, got {raw!r}")


@dataclass
class RunConfig:
    arch: str = "efficientnet_b0"
    dataset: str | None = None
    output: str = "runs/latest"
    weights: str | None = None
    resolution: int = 224
    width_scale: float = 1.0
    reference_top: int = mdl.REFERENCE_TOP_UNITS
    precision: int = 32
    # training
    learning_rate: float = 1e-4
    max_epochs: int = 300
    batch_size: int = 32
    patience: int = 15
    l2_lambda: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    dropout_rate: float = 0.3
    seed: int = 0
    grid: list[float] = field(default_factory=lambda: list(LR_GRID))
    # data
    val_fraction: float = 0.2
    balance: bool = True
    augment: bool = True
    rotation_deg: float = 30.0
    zoom: float = 0.15
    width_shift: float = 0.2
    height_shift: float = 0.2
    shear: float = 0.15
    horizontal_flip: bool = True
    # flags
    early_stop: bool = True
    trainable_base: bool = True
    include_reference_rows: bool = False
    # augment / fixture
    count: int = 8
    image: str | None = None
    per_class: int = 8

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(raw) - set(known))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        defaults = cls()
        clean = {}
        for k, v in raw.items():
            clean[k] = _coerce(k, v, getattr(defaults, k), known[k].type)
        return dataclasses.replace(defaults, **clean)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def train_config(self) -> TrainConfig:
        aug = dt.AugmentationConfig(self.rotation_deg, self.zoom, self.width_shift, self.height_shift,
                                    self.shear, self.horizontal_flip) if self.augment else None
        return TrainConfig(self.learning_rate, self.max_epochs, self.batch_size, self.patience,
                           self.early_stop, self.l2_lambda, self.beta1, self.beta2, self.eps,
                           self.seed, aug)

    def dtype(self):
        if self.precision not in (32, 64):
            raise UsageError("precision must be 32 or 64")
        return np.float32 if self.precision == 32 else np.float64


def _coerce(key: str, value, default, annotation: str):
    if value is None:
        if "None" in str(annotation):
            return None
        raise UsageError(f"config key {key!r} may not be null")
    if isinstance(default, bool) or annotation == "bool":
        if not isinstance(value, bool):
            raise UsageError(f"config key {key!r} must be a boolean")
        return value
    if annotation == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise UsageError(f"config key {key!r} must be an integer")
        return value
    if annotation == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise UsageError(f"config key {key!r} must be a number")
        return float(value)
    if annotation.startswith("list"):
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) for v in value):
            raise UsageError(f"config key {key!r} must be a list of numbers")
        return [float(v) for v in value]
    if not isinstance(value, str):
        raise UsageError(f"config key {key!r} must be a string")
    return value


# ----------------------------------------------------------------- argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


_ALIASES = {"learning_rate": ["--lr"], "output": ["-o"]}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file")
    for f in fields(RunConfig):
        flags = ["--" + f.name.replace("_", "-")] + _ALIASES.get(f.name, [])
        kw = {"dest": f.name, "default": argparse.SUPPRESS}
        if f.type == "bool":
            p.add_argument(*flags, action=argparse.BooleanOptionalAction, **kw)
        elif f.type == "int":
            p.add_argument(*flags, type=int, **kw)
        elif f.type == "float":
            p.add_argument(*flags, type=float, **kw)
        elif f.type.startswith("list"):
            p.add_argument(*flags, type=_float_list, **kw)
        else:
            p.add_argument(*flags, type=str, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="greenleaf", description="Lightweight CNN training and profiling")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name in SUBCOMMANDS:
        _add_config_flags(sub.add_parser(name))
    return parser


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    given = {k: v for k, v in vars(ns).items() if k not in ("command", "verbose", "config")}
    merged: dict = {"seed": _default_seed()}
    if getattr(ns, "config", None):
        path = Path(ns.config)
        try:
            file_cfg = json.loads(path.read_text())
        except FileNotFoundError:
            raise UsageError(f"config file {path} not found")
        except json.JSONDecodeError as e:
            raise UsageError(f"config file {path} is not valid JSON: {e}")
        if not isinstance(file_cfg, dict):
            raise UsageError(f"config file {path} must hold a JSON object")
        merged.update(file_cfg)
    merged.update(given)
    return RunConfig.from_dict(merged)


# ----------------------------------------------------------------- commands


def _prepare_output(cfg: RunConfig) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
    return out


def _load_splits(cfg: RunConfig):
    if not cfg.dataset:
        raise UsageError("--dataset is required")
    index = dt.scan_dataset(cfg.dataset)
    if cfg.balance:
        index = dt.balance_downsample(index, cfg.seed)
    train_idx, val_idx = dt.stratified_split(index, cfg.val_fraction, cfg.seed)
    dtype = cfg.dtype()
    train_set = dt.load_index(train_idx, cfg.resolution, dtype, skip_failures=True)
    val_set = dt.load_index(val_idx, cfg.resolution, dtype, skip_failures=True)
    return index, train_set, val_set


def _model(cfg: RunConfig, num_classes: int, arch: str | None = None) -> mdl.ModelGraph:
    model = mdl.build_model(arch or cfg.arch, num_classes,
                            mdl.HeadConfig(dropout_rate=cfg.dropout_rate, l2_lambda=cfg.l2_lambda),
                            cfg.width_scale, cfg.seed, cfg.resolution, cfg.reference_top or None,
                            cfg.trainable_base, cfg.dtype())
    if cfg.weights:
        mdl.load_weights(model, cfg.weights)
        model.set_trainable_base(cfg.trainable_base)
    return model


def cmd_train(cfg: RunConfig) -> int:
    index, train_set, val_set = _load_splits(cfg)
    out = _prepare_output(cfg)
    model = _model(cfg, len(index.class_names))
    hist = fit(model, train_set, val_set, cfg.train_config(),
               progress=lambda e, h: log.info("epoch %d val_loss %.4f val_acc %.3f",
                                              e, h.val_loss[-1], h.val_acc[-1]))
    hist.write_csv(out / "history.csv")
    mdl.save_weights(model, out / "weights.glw")
    report = evaluate(model, val_set, json_path=out / "report.json")
    print(f"{cfg.arch}: stopped at epoch {hist.stopped_epoch} ({hist.stop_reason}), "
          f"val accuracy {report.accuracy:.4f}, macro F {report.macro_f_measure:.4f}")
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    index, train_set, val_set = _load_splits(cfg)
    out = _prepare_output(cfg)
    kw = dict(num_classes=len(index.class_names),
              head=mdl.HeadConfig(dropout_rate=cfg.dropout_rate, l2_lambda=cfg.l2_lambda),
              width_scale=cfg.width_scale, resolution=cfg.resolution,
              reference_top=cfg.reference_top or None, trainable_base=cfg.trainable_base,
              dtype=cfg.dtype())
    results = lr_sweep(cfg.arch, cfg.grid, cfg.train_config(), train_set, val_set, out, kw)
    for lr, hist in results.items():
        state = "diverged" if hist is None else f"{hist.stop_reason} @ {hist.stopped_epoch}"
        print(f"lr={lr:g}: {state}")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    if not cfg.dataset:
        raise UsageError("--dataset is required")
    index = dt.scan_dataset(cfg.dataset)
    out = _prepare_output(cfg)
    model = _model(cfg, len(index.class_names))
    report = evaluate(model, index, cfg.resolution, json_path=out / "report.json")
    print(f"accuracy {report.accuracy:.4f}  macro P {report.macro_precision:.4f}  "
          f"macro R {report.macro_recall:.4f}  macro F {report.macro_f_measure:.4f}  "
          f"({report.confusion.total} samples, {report.failures} unreadable)")
    return 0


def cmd_profile(cfg: RunConfig) -> int:
    out = _prepare_output(cfg)
    archs = mdl.ARCHITECTURES if cfg.arch == "all" else (cfg.arch,)
    models = [_model(cfg, 4, a) for a in archs]
    rows = profile_report(models, include_reference_rows=cfg.include_reference_rows)
    (out / "profile.csv").write_text(to_csv(rows))
    text = to_text(rows)
    (out / "profile.txt").write_text(text + "\n")
    print(text)
    return 0


def cmd_augment(cfg: RunConfig) -> int:
    if cfg.image:
        src = cfg.image
    elif cfg.dataset:
        src = dt.scan_dataset(cfg.dataset).records[0][0]
    else:
        raise UsageError("--image or --dataset is required")
    out = _prepare_output(cfg)
    img = dt.load_and_resize(src, cfg.resolution)[0]
    aug_cfg = dt.AugmentationConfig(cfg.rotation_deg, cfg.zoom, cfg.width_shift, cfg.height_shift,
                                    cfg.shear, cfg.horizontal_flip)
    rng = np.random.default_rng(cfg.seed)
    params_log = []
    for i in range(cfg.count):
        aug, params = dt.augment(img, aug_cfg, rng, return_params=True)
        Image.fromarray((aug.transpose(1, 2, 0) * 255).round().astype(np.uint8)).save(
            out / f"augment_{i:03d}.png")
        params_log.append(dataclasses.asdict(params))
    (out / "augment_params.json").write_text(json.dumps(params_log, indent=1))
    print(f"wrote {cfg.count} augmented samples of {src} to {out}")
    return 0


def cmd_fixture(cfg: RunConfig) -> int:
    root = write_fixture(cfg.output, cfg.per_class, size=min(cfg.resolution, 128), seed=cfg.seed)
    print(f"wrote synthetic dataset to {root}")
    return 0


COMMANDS = {"train": cmd_train, "sweep": cmd_sweep, "eval": cmd_eval, "profile": cmd_profile,
            "augment": cmd_augment, "fixture": cmd_fixture}


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if not ns.command:
            raise UsageError(parser.format_help())
        logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve_config(ns)
        if cfg.arch not in mdl.ARCHITECTURES and not (ns.command == "profile" and cfg.arch == "all"):
            raise UsageError(f"unknown --arch {cfg.arch!r}; choose from {', '.join(mdl.ARCHITECTURES)}")
        return COMMANDS[ns.command](cfg)
    except (UsageError, dt.DatasetError, ConfigurationError, mdl.WeightFileError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except DivergedTrainingError as e:
        print(f"runtime failure: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        log.exception("unexpected failure")
        print(f"runtime failure: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
