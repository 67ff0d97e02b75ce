"""Reusable mobile-CNN building blocks.

Blocks are pure functions ``block(x, cfg, params, training)`` over a flat
``params`` dict. Learnable entries are :class:`Tensor`; batch-norm running
statistics are plain arrays mutated in place during training. Batch-norm sets
live under a prefix ``p`` as ``p.gamma``, ``p.beta``, ``p.running_mean`` and
``p.running_var``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class ConfigurationError(ValueError):
    pass


BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass(frozen=True)
class BlockConfig:
    in_channels: int
    out_channels: int
    stride: int = 1
    expansion: float = 1.0
    groups: int = 1
    kernel_size: int = 3
    se_ratio: float = 0.0
    activation: str = "relu6"

    def __post_init__(self):
        if self.stride not in (1, 2):
            raise ConfigurationError(f"stride must be 1 or 2, got {self.stride}")
        if self.expansion < 1:
            raise ConfigurationError(f"expansion must be >= 1, got {self.expansion}")
        if not 0.0 <= self.se_ratio <= 1.0:
            raise ConfigurationError(f"se_ratio must be in [0, 1], got {self.se_ratio}")
        if self.in_channels < 1 or self.out_channels < 1 or self.groups < 1:
            raise ConfigurationError("channel and group counts must be positive")

    @property
    def has_residual(self) -> bool:
        return self.stride == 1 and self.in_channels == self.out_channels

    @property
    def hidden_channels(self) -> int:
        return int(round(self.expansion * self.in_channels))

    @property
    def se_channels(self) -> int:
        # squeeze width follows the block input, as in the reference MBConv
        return max(1, int(round(self.in_channels * self.se_ratio)))


# ----------------------------------------------------------------- init helpers


def he_uniform(rng: np.random.Generator, shape: Sequence[int], fan_in: int, dtype) -> Tensor:
    limit = math.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-limit, limit, size=shape).astype(dtype), requires_grad=True)


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> Tensor:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype),
                  requires_grad=True)


def init_conv(params: dict, name: str, rng, cout: int, cin: int, k: int, groups: int = 1,
              bias: bool = False, dtype=np.float64) -> None:
    cpg = cin // groups
    params[f"{name}.weight"] = he_uniform(rng, (cout, cpg, k, k), cpg * k * k, dtype)
    if bias:
        params[f"{name}.bias"] = ad.param((cout,), 0.0, dtype)


def init_dense(params: dict, name: str, rng, fin: int, fout: int, dtype=np.float64) -> None:
    params[f"{name}.weight"] = xavier_uniform(rng, fin, fout, dtype)
    params[f"{name}.bias"] = ad.param((fout,), 0.0, dtype)


def init_bn(params: dict, name: str, channels: int, dtype=np.float64) -> None:
    params[f"{name}.gamma"] = ad.param((channels,), 1.0, dtype)
    params[f"{name}.beta"] = ad.param((channels,), 0.0, dtype)
    params[f"{name}.running_mean"] = np.zeros(channels, dtype=dtype)
    params[f"{name}.running_var"] = np.ones(channels, dtype=dtype)


def bn(x: Tensor, params: Mapping, name: str, training: bool) -> Tensor:
    return ad.batch_norm2d(x, params[f"{name}.gamma"], params[f"{name}.beta"],
                           params[f"{name}.running_mean"], params[f"{name}.running_var"],
                           eps=BN_EPS, momentum=BN_MOMENTUM, training=training)


def conv(x: Tensor, params: Mapping, name: str, stride: int = 1, groups: int = 1) -> Tensor:
    w = params[f"{name}.weight"]
    k = w.shape[2]
    return ad.conv2d(x, w, params.get(f"{name}.bias"), stride=stride, pad=k // 2, groups=groups)


# ----------------------------------------------------------------- channel shuffle


def shuffle_permutation(channels: int, groups: int) -> np.ndarray:
    if groups < 1 or channels % groups:
        raise ConfigurationError(f"{channels} channels cannot be split into {groups} groups")
    return np.arange(channels).reshape(groups, channels // groups).T.reshape(-1)


def channel_shuffle(x: Tensor, groups: int) -> Tensor:
    """Reshape channels to (groups, C/groups), transpose, flatten."""
    return ad.permute_channels(x, shuffle_permutation(x.shape[1], groups))


# ----------------------------------------------------------------- depthwise separable


def init_depthwise_separable(cin: int, cout: int, k: int, rng, dtype=np.float64) -> dict:
    p: dict = {}
    init_conv(p, "dw", rng, cin, cin, k, groups=cin, dtype=dtype)
    init_bn(p, "dw_bn", cin, dtype)
    init_conv(p, "pw", rng, cout, cin, 1, dtype=dtype)
    init_bn(p, "pw_bn", cout, dtype)
    return p


def depthwise_separable(x: Tensor, params: Mapping, stride: int = 1, training: bool = False,
                        act: str = "relu") -> Tensor:
    cin = x.shape[1]
    y = conv(x, params, "dw", stride=stride, groups=cin)
    y = ad.activation(bn(y, params, "dw_bn", training), act)
    y = conv(y, params, "pw")
    return ad.activation(bn(y, params, "pw_bn", training), act)


def depthwise_separable_param_count(cin: int, cout: int, k: int) -> int:
    """Conv weights only (no batch norm), for comparison with a dense KxK conv."""
    return cin * k * k + cin * cout


def standard_conv_param_count(cin: int, cout: int, k: int) -> int:
    return cin * cout * k * k


# ----------------------------------------------------------------- squeeze-excite


def init_squeeze_excite(params: dict, prefix: str, channels: int, reduced: int, rng,
                        dtype=np.float64) -> None:
    init_dense(params, f"{prefix}.reduce", rng, channels, reduced, dtype)
    init_dense(params, f"{prefix}.expand", rng, reduced, channels, dtype)


def squeeze_excite(x: Tensor, params: Mapping, prefix: str = "se") -> Tensor:
    n, c = x.shape[:2]
    s = ad.global_avg_pool(x)
    s = ad.swish(ad.dense(s, params[f"{prefix}.reduce.weight"], params[f"{prefix}.reduce.bias"]))
    s = ad.sigmoid(ad.dense(s, params[f"{prefix}.expand.weight"], params[f"{prefix}.expand.bias"]))
    return ad.mul(x, ad.reshape(s, (n, c, 1, 1)))


# ----------------------------------------------------------------- inverted residual / MBConv


def init_inverted_residual(cfg: BlockConfig, rng, dtype=np.float64) -> dict:
    p: dict = {}
    hidden = cfg.hidden_channels
    if hidden != cfg.in_channels:
        init_conv(p, "expand", rng, hidden, cfg.in_channels, 1, dtype=dtype)
        init_bn(p, "expand_bn", hidden, dtype)
    init_conv(p, "dw", rng, hidden, hidden, cfg.kernel_size, groups=hidden, dtype=dtype)
    init_bn(p, "dw_bn", hidden, dtype)
    if cfg.se_ratio > 0:
        init_squeeze_excite(p, "se", hidden, cfg.se_channels, rng, dtype)
    init_conv(p, "project", rng, cfg.out_channels, hidden, 1, dtype=dtype)
    init_bn(p, "project_bn", cfg.out_channels, dtype)
    return p


def inverted_residual(x: Tensor, cfg: BlockConfig, params: Mapping, training: bool = False) -> Tensor:
    """Expand 1x1 -> depthwise KxK -> [squeeze-excite] -> linear 1x1 projection.

    With ``se_ratio > 0`` and swish activation this is the EfficientNet MBConv.
    The projection has no activation; the input is added back when the
    stride is 1 and the channel count is unchanged.
    """
    if x.shape[1] != cfg.in_channels:
        raise ad.DimensionError(f"block expects {cfg.in_channels} input channels, got {x.shape[1]}")
    y = x
    if "expand.weight" in params:
        y = ad.activation(bn(conv(y, params, "expand"), params, "expand_bn", training), cfg.activation)
    hidden = y.shape[1]
    y = conv(y, params, "dw", stride=cfg.stride, groups=hidden)
    y = ad.activation(bn(y, params, "dw_bn", training), cfg.activation)
    if cfg.se_ratio > 0:
        y = squeeze_excite(y, params, "se")
    y = bn(conv(y, params, "project"), params, "project_bn", training)
    if cfg.has_residual:
        y = ad.add(y, x)
    return y


# ----------------------------------------------------------------- shuffle unit


def _check_shuffle_cfg(cfg: BlockConfig) -> tuple[int, int]:
    g = cfg.groups
    if cfg.out_channels % 4:
        raise ConfigurationError(f"out_channels {cfg.out_channels} not divisible by 4")
    mid = cfg.out_channels // 4
    branch_out = cfg.out_channels - cfg.in_channels if cfg.stride == 2 else cfg.out_channels
    if cfg.stride == 1 and cfg.in_channels != cfg.out_channels:
        raise ConfigurationError("stride-1 shuffle unit needs in_channels == out_channels")
    if branch_out < 1:
        raise ConfigurationError("stride-2 shuffle unit needs out_channels > in_channels")
    for what, c in (("in_channels", cfg.in_channels), ("bottleneck", mid), ("branch output", branch_out)):
        if c % g:
            raise ConfigurationError(f"{what} {c} not divisible by groups={g}")
    return mid, branch_out


def init_shuffle_unit(cfg: BlockConfig, rng, dtype=np.float64) -> dict:
    mid, branch_out = _check_shuffle_cfg(cfg)
    g = cfg.groups
    p: dict = {}
    init_conv(p, "gconv1", rng, mid, cfg.in_channels, 1, groups=g, dtype=dtype)
    init_bn(p, "gconv1_bn", mid, dtype)
    init_conv(p, "dw", rng, mid, mid, 3, groups=mid, dtype=dtype)
    init_bn(p, "dw_bn", mid, dtype)
    init_conv(p, "gconv2", rng, branch_out, mid, 1, groups=g, dtype=dtype)
    init_bn(p, "gconv2_bn", branch_out, dtype)
    return p


def shuffle_unit(x: Tensor, cfg: BlockConfig, params: Mapping, training: bool = False) -> Tensor:
    _check_shuffle_cfg(cfg)
    g = cfg.groups
    y = ad.relu(bn(conv(x, params, "gconv1", groups=g), params, "gconv1_bn", training))
    y = channel_shuffle(y, g)
    y = bn(conv(y, params, "dw", stride=cfg.stride, groups=y.shape[1]), params, "dw_bn", training)
    y = bn(conv(y, params, "gconv2", groups=g), params, "gconv2_bn", training)
    if cfg.stride == 1:
        return ad.relu(ad.add(y, x))
    shortcut = ad.avg_pool2d(x, 3, 2, 1)
    return ad.relu(ad.concat([shortcut, y], axis=1))


# ----------------------------------------------------------------- compound scaling


@dataclass(frozen=True)
class ScalingCoefficients:
    alpha: float = 1.2  # depth
    beta: float = 1.1  # width
    gamma: float = 1.15  # resolution
    phi: float = 0.0

    def flops_factor(self) -> float:
        return self.alpha * self.beta ** 2 * self.gamma ** 2

    def satisfies_constraint(self, target: float = 2.0, tol: float = 0.05) -> bool:
        return abs(self.flops_factor() - target) <= tol * target


def round_channels(channels: float, divisor: int = 8) -> int:
    """Nearest multiple of ``divisor``, at least ``divisor``, never below 90% of the input."""
    new = max(divisor, int(channels + divisor / 2) // divisor * divisor)
    if new < 0.9 * channels:
        new += divisor
    return int(new)


def compound_scale(coeffs: ScalingCoefficients, base_depths: Sequence[int],
                   base_widths: Sequence[int], base_resolution: int):
    d_mult = coeffs.alpha ** coeffs.phi
    w_mult = coeffs.beta ** coeffs.phi
    r_mult = coeffs.gamma ** coeffs.phi
    if coeffs.phi == 0:
        return list(base_depths), list(base_widths), int(base_resolution)
    depths = [int(math.ceil(d * d_mult)) for d in base_depths]
    widths = [round_channels(w * w_mult) for w in base_widths]
    return depths, widths, int(round(base_resolution * r_mult))
