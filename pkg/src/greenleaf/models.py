"""Full architectures (EfficientNet-B0, MobileNetV2, ShuffleNet v1) with the dense classifier head.

A :class:`ModelGraph` is an ordered list of :class:`Layer` descriptors plus a
flat name -> tensor map. Layer ``foo`` owns every entry prefixed ``foo.``.

Wiring: feature extractor -> global average pool -> reference classifier
(F -> 1000, the ImageNet top kept from the base models) -> head
(FC 128 -> ReLU -> dropout 0.3 -> FC 128 -> ReLU -> FC K). Pass
``reference_top=None`` to attach the head directly to the pooled features.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import autodiff as ad
from . import blocks as bk
from .autodiff import Tensor
from .blocks import BlockConfig, ConfigurationError

ARCHITECTURES = ("efficientnet_b0", "mobilenet_v2", "shufflenet")

# (expansion, kernel, stride, out_channels, repeats)
EFFICIENTNET_B0_STAGES = [
    (1, 3, 1, 16, 1),
    (6, 3, 2, 24, 2),
    (6, 5, 2, 40, 2),
    (6, 3, 2, 80, 3),
    (6, 5, 1, 112, 3),
    (6, 5, 2, 192, 4),
    (6, 3, 1, 320, 1),
]
EFFICIENTNET_STEM = 32
EFFICIENTNET_HEAD = 1280

# (expansion, out_channels, repeats, stride)
MOBILENET_V2_STAGES = [
    (1, 16, 1, 1),
    (6, 24, 2, 2),
    (6, 32, 3, 2),
    (6, 64, 4, 2),
    (6, 96, 3, 1),
    (6, 160, 3, 2),
    (6, 320, 1, 1),
]
MOBILENET_STEM = 32
MOBILENET_LAST = 1280

SHUFFLENET_GROUPS = 3
SHUFFLENET_STEM = 24
# (out_channels, repeats) for g=3 at 1.0x
SHUFFLENET_STAGES = [(240, 4), (480, 8), (960, 4)]
# fixed multiplier on the 1.0x g=3 table; lands the default build near 1.4M parameters
SHUFFLENET_BASE_WIDTH = 0.75

REFERENCE_TOP_UNITS = 1000
REFERENCE_TOP_STD = 0.01
DEFAULT_RESOLUTION = 224


@dataclass(frozen=True)
class HeadConfig:
    fc1_units: int = 128
    dropout_rate: float = 0.3
    fc2_units: int = 128
    l2_lambda: float = 1e-4

    def __post_init__(self):
        if self.fc1_units < 1 or self.fc2_units < 1:
            raise ConfigurationError("head units must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.l2_lambda < 0:
            raise ConfigurationError(f"l2_lambda must be >= 0, got {self.l2_lambda}")


@dataclass
class Layer:
    name: str
    kind: str
    in_channels: int
    out_channels: int
    options: dict = field(default_factory=dict)
    base: bool = True


@dataclass
class ModelGraph:
    name: str
    layers: list[Layer]
    params: dict[str, Tensor | np.ndarray]
    input_resolution: int
    num_classes: int
    width_scale: float = 1.0
    seed: int = 0
    dtype: type = np.float32
    dropout_rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    # -- parameter access
    def tensors(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if isinstance(v, Tensor)}

    def buffers(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.params.items() if not isinstance(v, Tensor)}

    def trainable(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.tensors().items() if v.requires_grad}

    def layer_params(self, layer: Layer) -> dict:
        prefix = layer.name + "."
        n = len(prefix)
        return {k[n:]: v for k, v in self.params.items() if k.startswith(prefix)}

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: (v.data if isinstance(v, Tensor) else v).copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for k, arr in state.items():
            target = self.params[k]
            dest = target.data if isinstance(target, Tensor) else target
            if dest.shape != arr.shape:
                raise ad.DimensionError(f"{k}: shape {arr.shape} != {dest.shape}")
            dest[...] = arr

    def zero_grad(self) -> None:
        for t in self.tensors().values():
            t.grad = None

    def set_trainable_base(self, trainable: bool) -> None:
        for layer in self.layers:
            if layer.base:
                for t in self.layer_params(layer).values():
                    if isinstance(t, Tensor):
                        t.requires_grad = trainable

    def audit(self) -> list[str]:
        """Wiring problems, empty when every layer consumes its predecessor's channels."""
        problems = []
        names = set()
        for prev, cur in zip(self.layers, self.layers[1:]):
            if prev.out_channels != cur.in_channels:
                problems.append(f"{prev.name} emits {prev.out_channels} channels but "
                                f"{cur.name} expects {cur.in_channels}")
        for layer in self.layers:
            if layer.name in names:
                problems.append(f"duplicate layer name {layer.name}")
            names.add(layer.name)
        return problems

    def __call__(self, x, training: bool = False) -> Tensor:
        return forward(self, x, training)


# ----------------------------------------------------------------- builders


class _Builder:
    def __init__(self, seed: int, dtype):
        self.rng = np.random.default_rng(seed)
        self.dtype = dtype
        self.layers: list[Layer] = []
        self.params: dict = {}

    def add(self, layer: Layer, local: dict) -> None:
        for k, v in local.items():
            self.params[f"{layer.name}.{k}"] = v
        self.layers.append(layer)

    def conv_bn(self, name, cin, cout, k, stride, act):
        p: dict = {}
        bk.init_conv(p, "conv", self.rng, cout, cin, k, dtype=self.dtype)
        bk.init_bn(p, "bn", cout, self.dtype)
        self.add(Layer(name, "conv_bn", cin, cout, {"stride": stride, "act": act}), p)

    def block(self, name, kind, cfg: BlockConfig):
        init = bk.init_inverted_residual if kind == "inverted_residual" else bk.init_shuffle_unit
        self.add(Layer(name, kind, cfg.in_channels, cfg.out_channels, {"cfg": cfg}),
                 init(cfg, self.rng, self.dtype))

    def dense(self, name, fin, fout, act=None, base=False, std=None):
        p: dict = {}
        bk.init_dense(p, "fc", self.rng, fin, fout, self.dtype)
        if std is not None:
            p["fc.weight"].data[...] = self.rng.normal(0.0, std, (fin, fout))
        self.add(Layer(name, "dense", fin, fout, {"act": act}, base=base), p)


def _efficientnet_b0(b: _Builder, width: float) -> int:
    c = bk.round_channels(EFFICIENTNET_STEM * width)
    b.conv_bn("stem", 3, c, 3, 2, "swish")
    for si, (t, k, s, out, reps) in enumerate(EFFICIENTNET_B0_STAGES):
        out_c = bk.round_channels(out * width)
        for r in range(reps):
            cfg = BlockConfig(c, out_c, stride=s if r == 0 else 1, expansion=t, kernel_size=k,
                              se_ratio=0.25, activation="swish")
            b.block(f"stage{si + 1}.{r}", "inverted_residual", cfg)
            c = out_c
    last = bk.round_channels(EFFICIENTNET_HEAD * width)
    b.conv_bn("head_conv", c, last, 1, 1, "swish")
    return last


def _mobilenet_v2(b: _Builder, width: float) -> int:
    c = bk.round_channels(MOBILENET_STEM * width)
    b.conv_bn("stem", 3, c, 3, 2, "relu6")
    for si, (t, out, reps, s) in enumerate(MOBILENET_V2_STAGES):
        out_c = bk.round_channels(out * width)
        for r in range(reps):
            cfg = BlockConfig(c, out_c, stride=s if r == 0 else 1, expansion=t, kernel_size=3,
                              activation="relu6")
            b.block(f"stage{si + 1}.{r}", "inverted_residual", cfg)
            c = out_c
    last = bk.round_channels(MOBILENET_LAST * max(1.0, width))
    b.conv_bn("last_conv", c, last, 1, 1, "relu6")
    return last


def _round_to(value: float, multiple: int) -> int:
    return max(multiple, int(round(value / multiple)) * multiple)


def _shufflenet(b: _Builder, width: float) -> int:
    g = SHUFFLENET_GROUPS
    scale = width * SHUFFLENET_BASE_WIDTH
    c = _round_to(SHUFFLENET_STEM * min(1.0, width), g)
    b.conv_bn("stem", 3, c, 3, 2, "relu")
    b.add(Layer("stem_pool", "maxpool", c, c), {})
    for si, (out, reps) in enumerate(SHUFFLENET_STAGES):
        # multiples of 4g keep bottleneck and branch widths divisible by g
        out_c = _round_to(out * scale, 4 * g)
        if out_c <= c:
            out_c = _round_to(c + 4 * g, 4 * g)
        for r in range(reps):
            cfg = BlockConfig(c, out_c, stride=2 if r == 0 else 1, groups=g, activation="relu")
            b.block(f"stage{si + 2}.{r}", "shuffle_unit", cfg)
            c = out_c
    return c


_BASES = {"efficientnet_b0": _efficientnet_b0, "mobilenet_v2": _mobilenet_v2, "shufflenet": _shufflenet}


def attach_head(b: _Builder, feature_dim: int, head: HeadConfig, num_classes: int) -> None:
    if feature_dim < 1:
        raise ConfigurationError("feature_dim must be >= 1")
    b.dense("head.fc1", feature_dim, head.fc1_units, act="relu")
    b.add(Layer("head.dropout", "dropout", head.fc1_units, head.fc1_units,
                {"rate": head.dropout_rate}, base=False), {})
    b.dense("head.fc2", head.fc1_units, head.fc2_units, act="relu")
    b.dense("head.out", head.fc2_units, num_classes)


def head_only_model(feature_dim: int, head: HeadConfig = HeadConfig(), num_classes: int = 4,
                    seed: int = 0, dtype=np.float64) -> ModelGraph:
    """Just the classifier head over (N, feature_dim) inputs."""
    b = _Builder(seed, dtype)
    attach_head(b, feature_dim, head, num_classes)
    return ModelGraph("head", b.layers, b.params, 0, num_classes, 1.0, seed, dtype,
                      np.random.default_rng(seed + 1))


def build_model(arch: str, num_classes: int = 4, head: HeadConfig = HeadConfig(),
                width_scale: float = 1.0, seed: int = 0, resolution: int = DEFAULT_RESOLUTION,
                reference_top: int | None = REFERENCE_TOP_UNITS, trainable_base: bool = True,
                dtype=np.float32) -> ModelGraph:
    if arch not in _BASES:
        raise ConfigurationError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")
    if num_classes < 2:
        raise ConfigurationError(f"num_classes must be >= 2, got {num_classes}")
    if width_scale <= 0:
        raise ConfigurationError(f"width_scale must be > 0, got {width_scale}")
    b = _Builder(seed, dtype)
    feat = _BASES[arch](b, width_scale)
    b.add(Layer("pool", "global_pool", feat, feat), {})
    if reference_top:
        # small-normal init as in the reference classifiers; Xavier here lets ShuffleNet's
        # un-normalised residual features push fresh logits far from chance
        b.dense("top", feat, reference_top, base=True, std=REFERENCE_TOP_STD)
        feat = reference_top
    attach_head(b, feat, head, num_classes)
    model = ModelGraph(arch, b.layers, b.params, resolution, num_classes, width_scale, seed, dtype,
                       np.random.default_rng([seed, 1]))
    if not trainable_base:
        model.set_trainable_base(False)
    return model


# ----------------------------------------------------------------- forward


def _run_layer(model: ModelGraph, layer: Layer, x: Tensor, training: bool) -> Tensor:
    p = model.layer_params(layer)
    o = layer.options
    kind = layer.kind
    if kind == "conv_bn":
        y = bk.bn(bk.conv(x, p, "conv", stride=o["stride"]), p, "bn", training)
        return ad.activation(y, o["act"])
    if kind == "inverted_residual":
        return bk.inverted_residual(x, o["cfg"], p, training)
    if kind == "shuffle_unit":
        return bk.shuffle_unit(x, o["cfg"], p, training)
    if kind == "maxpool":
        return ad.max_pool2d(x, 3, 2, 1)
    if kind == "global_pool":
        return ad.flatten(ad.global_avg_pool(x))
    if kind == "dense":
        y = ad.dense(x, p["fc.weight"], p["fc.bias"])
        return ad.activation(y, o["act"]) if o.get("act") else y
    if kind == "dropout":
        return ad.dropout(x, o["rate"], training, model.dropout_rng)
    raise ConfigurationError(f"unknown layer kind {kind!r}")


def forward(model: ModelGraph, batch, training: bool = False) -> Tensor:
    x = batch if isinstance(batch, Tensor) else Tensor(np.asarray(batch, dtype=model.dtype))
    if model.input_resolution:
        if x.data.ndim != 4 or x.shape[1] != 3:
            raise ad.DimensionError(f"expected (N,3,R,R) input, got {x.shape}")
        r = model.input_resolution
        if x.shape[2:] != (r, r):
            raise ad.DimensionError(f"input is {x.shape[2]}x{x.shape[3]} but model expects {r}x{r}")
    if x.dtype != model.dtype:
        x = Tensor(x.data.astype(model.dtype))
    for layer in model.layers:
        ad.set_flop_scope(layer.name)
        x = _run_layer(model, layer, x, training)
    return x


def predict(model: ModelGraph, images: np.ndarray, batch_size: int = 32) -> np.ndarray:
    """Eval-mode logits for a stack of images, computed batch by batch without a graph."""
    out = []
    with ad.no_grad():
        for i in range(0, len(images), batch_size):
            out.append(forward(model, images[i:i + batch_size], training=False).data)
    return np.concatenate(out) if out else np.zeros((0, model.num_classes))


def count_parameters(model: ModelGraph, trainable_only: bool = False) -> int:
    """Elements of all learnable tensors; batch-norm running statistics are not counted."""
    tensors = model.trainable() if trainable_only else model.tensors()
    return int(sum(t.size for t in tensors.values()))


def per_layer_parameters(model: ModelGraph) -> dict[str, int]:
    counts = {layer.name: 0 for layer in model.layers}
    for k, t in model.tensors().items():
        for layer in model.layers:
            if k.startswith(layer.name + "."):
                counts[layer.name] += t.size
                break
    return counts


# ----------------------------------------------------------------- weight files

MAGIC = b"GLW1"


class WeightFileError(ValueError):
    pass


def _write_record(fh, name: str, arr: np.ndarray) -> None:
    raw = name.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def write_weights(path: str | Path, arrays: Iterable[tuple[str, np.ndarray]]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        for name, arr in arrays:
            _write_record(fh, name, np.asarray(arr))


def read_weights(path: str | Path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise WeightFileError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    buf = io.BytesIO(data[4:])
    out: dict[str, np.ndarray] = {}

    def take(n: int) -> bytes:
        chunk = buf.read(n)
        if len(chunk) != n:
            raise WeightFileError(f"{path}: truncated record")
        return chunk

    while True:
        head = buf.read(4)
        if not head:
            break
        if len(head) != 4:
            raise WeightFileError(f"{path}: truncated record header")
        (nlen,) = struct.unpack("<I", head)
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        count = int(np.prod(dims)) if rank else 1
        values = np.frombuffer(take(4 * count), dtype="<f4").reshape(dims)
        if name in out:
            raise WeightFileError(f"{path}: duplicate record {name!r}")
        out[name] = values
    return out


def save_weights(model: ModelGraph, path: str | Path) -> None:
    write_weights(path, model.state_dict().items())


def load_weights(model: ModelGraph, path: str | Path) -> None:
    records = read_weights(path)
    expected = model.params
    missing = sorted(set(expected) - set(records))
    unknown = sorted(set(records) - set(expected))
    if missing or unknown:
        raise WeightFileError(f"{path}: missing {missing[:5]}{'...' if len(missing) > 5 else ''}, "
                              f"unknown {unknown[:5]}{'...' if len(unknown) > 5 else ''}")
    for name, arr in records.items():
        target = expected[name]
        shape = target.shape
        if tuple(arr.shape) != tuple(shape):
            raise WeightFileError(f"{path}: {name} has shape {arr.shape}, model expects {shape}")
    model.load_state_dict({k: v.astype(model.dtype) for k, v in records.items()})
