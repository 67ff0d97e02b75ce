"""Parameter, FLOP and relative-energy accounting."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Mapping

import numpy as np

from . import autodiff as ad
from .models import ModelGraph, count_parameters, forward, per_layer_parameters

PROFILE_HEADER = ["model", "parameters", "flops", "relative_energy"]

# learning-parameter counts of common comparison models, rounded as usually quoted
REFERENCE_ROWS: dict[str, int] = {
    "VGG16": 138_000_000,
    "Xception": 27_300_000,
    "ResNet50": 25_000_000,
    "GhostNet": 5_200_000,
    "ModLeafNet": 1_300_000,
}
# the same rounded figures for the three lightweight models, next to the comparison rows
PUBLISHED_ROWS: dict[str, int] = {
    **REFERENCE_ROWS,
    "EfficientNet-B0": 5_400_000,
    "MobileNetV2": 3_500_000,
    "ShuffleNet": 1_400_000,
}


@dataclass(frozen=True)
class ProfileRow:
    model: str
    parameters: int
    flops: int | None
    relative_energy: float


def relative_energy(param_counts: Mapping[str, float]) -> dict[str, float]:
    """Parameter count over the largest count, rounded half-up to two decimals."""
    if not param_counts:
        raise ValueError("no models to normalize")
    if any(v <= 0 for v in param_counts.values()):
        raise ValueError("parameter counts must be positive")
    top = max(param_counts.values())
    out = {}
    for name, n in param_counts.items():
        ratio = Decimal(repr(float(n))) / Decimal(repr(float(top)))
        out[name] = float(ratio.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))
    return out


def flops_estimate(model: ModelGraph, resolution: int | None = None,
                   by_layer: bool = False) -> int | dict[str, int]:
    """2 x multiply-adds of every conv and dense op for one image; BN/activations not counted."""
    r = resolution or model.input_resolution
    x = np.zeros((1, 3, r, r), dtype=model.dtype)
    saved = model.input_resolution
    model.input_resolution = r
    try:
        with ad.no_grad(), ad.FlopCounter() as counter:
            forward(model, x, training=False)
    finally:
        model.input_resolution = saved
    if by_layer:
        return {layer.name: counter.by_scope.get(layer.name, 0) for layer in model.layers}
    return counter.total


def conv_flops(kh: int, kw: int, cin: int, cout: int, groups: int, hout: int, wout: int) -> int:
    return 2 * kh * kw * (cin // groups) * cout * hout * wout


def layer_table(model: ModelGraph) -> list[tuple[str, str, int, int]]:
    """(layer, kind, parameters, flops) per layer."""
    params = per_layer_parameters(model)
    flops = flops_estimate(model, by_layer=True)
    return [(l.name, l.kind, params[l.name], flops[l.name]) for l in model.layers]


def profile_report(models: Iterable[ModelGraph] = (), include_reference_rows: bool = False,
                   extra_rows: Mapping[str, int] | None = None, with_flops: bool = True
                   ) -> list[ProfileRow]:
    counts: dict[str, int] = {}
    flops: dict[str, int | None] = {}
    for m in models:
        counts[m.name] = count_parameters(m)
        flops[m.name] = flops_estimate(m) if with_flops else None
    for name, n in {**(REFERENCE_ROWS if include_reference_rows else {}), **(extra_rows or {})}.items():
        counts[name] = int(n)
        flops.setdefault(name, None)
    if not counts:
        raise ValueError("profile needs at least one row")
    energy = relative_energy(counts)
    rows = [ProfileRow(k, counts[k], flops[k], energy[k]) for k in counts]
    return sorted(rows, key=lambda r: -r.parameters)


def to_csv(rows: Iterable[ProfileRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PROFILE_HEADER)
    for r in rows:
        w.writerow([r.model, r.parameters, "" if r.flops is None else r.flops, f"{r.relative_energy:.2f}"])
    return buf.getvalue()


def from_csv(text: str) -> list[ProfileRow]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != PROFILE_HEADER:
        raise ValueError(f"unexpected header {reader.fieldnames}")
    return [ProfileRow(r["model"], int(r["parameters"]), int(r["flops"]) if r["flops"] else None,
                       float(r["relative_energy"])) for r in reader]


def to_text(rows: list[ProfileRow]) -> str:
    cells = [["Model", "Parameters", "FLOPs", "Energy"]]
    for r in rows:
        cells.append([r.model, f"{r.parameters:,}", "-" if r.flops is None else f"{r.flops:,}",
                      f"{r.relative_energy:.2f}"])
    widths = [max(len(row[i]) for row in cells) for i in range(4)]
    lines = []
    for row in cells:
        lines.append("  ".join([row[0].ljust(widths[0])] +
                               [row[i].rjust(widths[i]) for i in range(1, 4)]))
    return "\n".join(lines)
