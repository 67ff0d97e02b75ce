"""Minimal tensor core with reverse-mode gradients.

Every differentiable op records a node holding its parents and a backward
closure. ``backward`` linearizes the graph into a :class:`Tape` (topological
order) and walks it once in reverse. Arrays are plain numpy; 64-bit by default.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

DEFAULT_DTYPE = np.float64


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ParameterError(ValueError):
    """An op hyperparameter is outside its valid range."""


class ContractError(RuntimeError):
    """An op was called in a state that violates its contract."""


_grad_enabled = True
_flop_counters: list["FlopCounter"] = []


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class FlopCounter:
    """Accumulates multiply-add FLOPs (x2) of conv2d/dense calls made while active."""

    def __init__(self) -> None:
        self.total = 0
        self.by_scope: dict[str, int] = {}
        self.scope = ""

    def add(self, flops: int) -> None:
        self.total += flops
        self.by_scope[self.scope] = self.by_scope.get(self.scope, 0) + flops

    def __enter__(self) -> "FlopCounter":
        _flop_counters.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _flop_counters.remove(self)


def _count_flops(n: int) -> None:
    for c in _flop_counters:
        c.add(n)


def set_flop_scope(name: str) -> None:
    for c in _flop_counters:
        c.scope = name


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = "", dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data: np.ndarray = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self._not_scalar()

    def _not_scalar(self):
        raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar, mostly for tests and loss assembly
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other, self.dtype), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other, self.dtype), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise NotImplementedError("tensor / tensor is not needed by any model")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        if p != 2:
            raise NotImplementedError("only squaring is supported")
        return mul(self, self)

    def sum(self):
        return tsum(self)

    def backward(self) -> None:
        backward(self)


def _as_tensor(x, dtype=DEFAULT_DTYPE) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=dtype))


def _make(out: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    t = Tensor(out)
    if _grad_enabled and any(p.requires_grad for p in parents):
        t.requires_grad = True
        t._parents = tuple(parents)
        t._backward = backward_fn
    return t


@dataclass
class Tape:
    """Recorded ops in topological order (inputs before the ops that consume them)."""

    nodes: list[Tensor] = field(default_factory=list)

    @classmethod
    def from_output(cls, out: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(out, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        return cls([n for n in order if n._backward is not None])


def backward(loss: Tensor) -> None:
    if loss.data.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor requiring grad")
    tape = Tape.from_output(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent._backward is None:
                # leaf
                parent.grad = pg.copy() if parent.grad is None else parent.grad + pg
            else:
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg
    if loss._backward is None:
        loss.grad = np.ones_like(loss.data)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ----------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    sa, sb = a.shape, b.shape
    try:
        out = a.data + b.data
    except ValueError as e:
        raise DimensionError(f"cannot add shapes {sa} and {sb}") from e
    return _make(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    sa, sb = a.shape, b.shape
    try:
        out = a.data * b.data
    except ValueError as e:
        raise DimensionError(f"cannot multiply shapes {sa} and {sb}") from e
    ad, bd = a.data, b.data
    return _make(out, (a, b), lambda g: (_unbroadcast(g * bd, sa), _unbroadcast(g * ad, sb)))


def tsum(x: Tensor) -> Tensor:
    shape = x.shape
    return _make(np.asarray(x.data.sum(), dtype=x.dtype), (x,),
                 lambda g: (np.broadcast_to(g, shape).copy(),))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"cannot reshape {old} to {shape}") from e
    return _make(out, (x,), lambda g: (g.reshape(old),))


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (x.shape[0], -1))


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        return tuple(np.take(g, range(bounds[i], bounds[i + 1]), axis=axis)
                     for i in range(len(tensors)))

    return _make(out, tuple(tensors), bw)


def permute_channels(x: Tensor, perm: np.ndarray) -> Tensor:
    """out[:, i] = x[:, perm[i]]."""
    perm = np.asarray(perm)
    inv = np.argsort(perm)
    return _make(x.data[:, perm], (x,), lambda g: (g[:, inv],))


# ----------------------------------------------------------------- activations


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(x.data * mask, (x,), lambda g: (g * mask,))


def relu6(x: Tensor) -> Tensor:
    mask = (x.data > 0) & (x.data < 6)
    return _make(np.clip(x.data, 0, 6), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    return _make(s, (x,), lambda g: (g * s * (1 - s),))


def swish(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    xd = x.data
    return _make(xd * s, (x,), lambda g: (g * (s + xd * s * (1 - s)),))


ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "relu": relu,
    "relu6": relu6,
    "swish": swish,
    "sigmoid": sigmoid,
}


def activation(x: Tensor, kind: str) -> Tensor:
    try:
        fn = ACTIVATIONS[kind]
    except KeyError:
        raise ParameterError(f"unknown activation {kind!r}; expected one of {sorted(ACTIVATIONS)}")
    return fn(x)


# ----------------------------------------------------------------- convolution


def _conv_out(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, pad: int = 0,
           groups: int = 1) -> Tensor:
    """Grouped 2-D cross-correlation with symmetric zero padding.

    ``w`` has shape (Cout, Cin/groups, Kh, Kw). Depthwise convolutions
    (one input channel per group) take a cheaper shift-and-accumulate path.
    """
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D x and w, got x{x.shape} w{w.shape}")
    n, cin, h, wd = x.shape
    cout, cpg, kh, kw = w.shape
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    if groups < 1 or cin % groups or cout % groups:
        raise DimensionError(
            f"groups={groups} must divide Cin (axis 1 of x: {cin}) and Cout (axis 0 of w: {cout})")
    if cpg != cin // groups:
        raise DimensionError(
            f"w axis 1 is {cpg} but x axis 1 ({cin}) / groups ({groups}) = {cin // groups}")
    if b is not None and b.shape != (cout,):
        raise DimensionError(f"bias shape {b.shape} does not match Cout={cout}")
    ho, wo = _conv_out(h, kh, stride, pad), _conv_out(wd, kw, stride, pad)
    if ho < 1 or wo < 1:
        raise DimensionError(f"kernel {kh}x{kw} larger than padded input {h}x{wd} (axes 2,3)")
    _count_flops(2 * kh * kw * cpg * cout * ho * wo * n)

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    m = cout // groups  # outputs per group
    hs, ws = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    wdat = w.data

    def window(arr, i, j):
        return arr[:, :, i:i + hs:stride, j:j + ws:stride]

    if cpg == 1:
        xr = np.repeat(xp, m, axis=1) if m > 1 else xp
        out = np.zeros((n, cout, ho, wo), dtype=np.result_type(x.data, wdat))
        for i in range(kh):
            for j in range(kw):
                out += window(xr, i, j) * wdat[:, 0, i, j][None, :, None, None]

        def bw(g):
            gx = gw = None
            if w.requires_grad:
                gw = np.empty_like(wdat)
                for i in range(kh):
                    for j in range(kw):
                        gw[:, 0, i, j] = np.einsum("nchw,nchw->c", g, window(xr, i, j))
            if x.requires_grad:
                gxr = np.zeros_like(xr)
                for i in range(kh):
                    for j in range(kw):
                        window(gxr, i, j)[...] += g * wdat[:, 0, i, j][None, :, None, None]
                if m > 1:
                    gxr = gxr.reshape(n, cin, m, *gxr.shape[2:]).sum(axis=2)
                gx = gxr[:, :, pad:pad + h, pad:pad + wd] if pad else gxr
            return gx, gw, (g.sum(axis=(0, 2, 3)) if b is not None else None)
    else:
        wg = wdat.reshape(groups, m, cpg, kh, kw)
        out = np.zeros((n, groups, m, ho * wo), dtype=np.result_type(x.data, wdat))
        cols = {}
        for i in range(kh):
            for j in range(kw):
                xs = np.ascontiguousarray(window(xp, i, j)).reshape(n, groups, cpg, ho * wo)
                cols[i, j] = xs
                out += np.matmul(wg[:, :, :, i, j], xs)
        out = out.reshape(n, cout, ho, wo)

        def bw(g):
            gx = gw = None
            gg = g.reshape(n, groups, m, ho * wo)
            if w.requires_grad:
                gw = np.empty_like(wg)
                for (i, j), xs in cols.items():
                    gw[:, :, :, i, j] = np.matmul(gg, xs.transpose(0, 1, 3, 2)).sum(axis=0)
                gw = gw.reshape(wdat.shape)
            if x.requires_grad:
                gxp = np.zeros_like(xp)
                wt = wg.transpose(0, 2, 1, 3, 4)  # (groups, cpg, m, kh, kw)
                for i in range(kh):
                    for j in range(kw):
                        gxs = np.matmul(wt[:, :, :, i, j], gg).reshape(n, cin, ho, wo)
                        window(gxp, i, j)[...] += gxs
                gx = gxp[:, :, pad:pad + h, pad:pad + wd] if pad else gxp
            return gx, gw, (g.sum(axis=(0, 2, 3)) if b is not None else None)

    if b is not None:
        out = out + b.data[None, :, None, None]
    parents = (x, w) if b is None else (x, w, b)
    return _make(out, parents, bw)


def avg_pool2d(x: Tensor, kernel: int, stride: int, pad: int = 0) -> Tensor:
    """Average pool; padded cells count toward the divisor (count_include_pad)."""
    n, c, h, wd = x.shape
    ho, wo = _conv_out(h, kernel, stride, pad), _conv_out(wd, kernel, stride, pad)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    hs, ws = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    out = np.zeros((n, c, ho, wo), dtype=x.dtype)
    for i in range(kernel):
        for j in range(kernel):
            out += xp[:, :, i:i + hs:stride, j:j + ws:stride]
    scale = 1.0 / (kernel * kernel)
    out *= scale

    def bw(g):
        gxp = np.zeros_like(xp)
        for i in range(kernel):
            for j in range(kernel):
                gxp[:, :, i:i + hs:stride, j:j + ws:stride] += g * scale
        return (gxp[:, :, pad:pad + h, pad:pad + wd] if pad else gxp,)

    return _make(out, (x,), bw)


def max_pool2d(x: Tensor, kernel: int, stride: int, pad: int = 0) -> Tensor:
    n, c, h, wd = x.shape
    ho, wo = _conv_out(h, kernel, stride, pad), _conv_out(wd, kernel, stride, pad)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=-np.inf) \
        if pad else x.data
    hs, ws = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    out = np.full((n, c, ho, wo), -np.inf, dtype=x.dtype)
    arg = np.zeros((n, c, ho, wo), dtype=np.int64)
    for i in range(kernel):
        for j in range(kernel):
            win = xp[:, :, i:i + hs:stride, j:j + ws:stride]
            better = win > out
            out = np.where(better, win, out)
            arg[better] = i * kernel + j

    def bw(g):
        gxp = np.zeros(xp.shape, dtype=g.dtype)
        for i in range(kernel):
            for j in range(kernel):
                gxp[:, :, i:i + hs:stride, j:j + ws:stride] += g * (arg == i * kernel + j)
        return (gxp[:, :, pad:pad + h, pad:pad + wd] if pad else gxp,)

    return _make(out, (x,), bw)


def global_avg_pool(x: Tensor) -> Tensor:
    n, c, h, wd = x.shape
    if h * wd == 0:
        raise DimensionError("global_avg_pool over an empty spatial extent (H*W == 0)")
    out = x.data.mean(axis=(2, 3), keepdims=True)
    scale = 1.0 / (h * wd)
    return _make(out, (x,), lambda g: (np.broadcast_to(g * scale, x.shape).copy(),))


# ----------------------------------------------------------------- normalization


def batch_norm2d(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
                 running_var: np.ndarray, eps: float = 1e-5, momentum: float = 0.1,
                 training: bool = True) -> Tensor:
    """Per-channel batch norm. Running stats are updated in place in training mode."""
    if eps <= 0:
        raise ParameterError(f"eps must be > 0, got {eps}")
    c = x.shape[1]
    for name, arr in (("gamma", gamma.data), ("beta", beta.data), ("running_mean", running_mean),
                      ("running_var", running_var)):
        if arr.shape != (c,):
            raise DimensionError(f"{name} has shape {arr.shape}, expected ({c},) for axis 1")
    bc = (None, slice(None), None, None)
    if training:
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        count = x.data.size // c
        unbiased = var * count / max(count - 1, 1)
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * unbiased
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean[bc]) * inv_std[bc]
    out = xhat * gamma.data[bc] + beta.data[bc]

    def bw(g):
        ggamma = np.einsum("nchw,nchw->c", g, xhat)
        gbeta = g.sum(axis=(0, 2, 3))
        gxhat = g * gamma.data[bc]
        if training:
            m = x.data.size // c
            gx = (inv_std[bc] / m) * (m * gxhat - gxhat.sum(axis=(0, 2, 3))[bc]
                                      - xhat * np.einsum("nchw,nchw->c", gxhat, xhat)[bc])
        else:
            gx = gxhat * inv_std[bc]
        return gx, ggamma, gbeta

    return _make(out.astype(x.dtype, copy=False), (x, gamma, beta), bw)


# ----------------------------------------------------------------- dense / head


def dense(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """y = x W + b. Accepts (N, F) or (N, F, 1, 1) input."""
    if x.data.ndim == 4:
        if x.shape[2:] != (1, 1):
            raise DimensionError(f"dense expects (N,F,1,1) feature maps, got {x.shape}")
        x = reshape(x, x.shape[:2])
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise DimensionError(f"dense inner dimensions disagree: x{x.shape} @ w{w.shape}")
    if b is not None and b.shape != (w.shape[1],):
        raise DimensionError(f"bias shape {b.shape} does not match w axis 1 ({w.shape[1]})")
    _count_flops(2 * x.shape[0] * w.shape[0] * w.shape[1])
    xd, wd = x.data, w.data
    out = xd @ wd
    if b is not None:
        out = out + b.data

    def bw(g):
        return (g @ wd.T if x.requires_grad else None,
                xd.T @ g if w.requires_grad else None,
                g.sum(axis=0) if b is not None else None)

    return _make(out, (x, w) if b is None else (x, w, b), bw)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-rate) so eval is the identity."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ParameterError("train-mode dropout needs a seeded generator")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return _make(x.data * keep, (x,), lambda g: (g * keep,))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax_cross_entropy(logits: Tensor, targets) -> tuple[Tensor, np.ndarray]:
    """Mean categorical cross entropy over the batch, plus the softmax probabilities."""
    if logits.data.ndim != 2:
        raise DimensionError(f"logits must be (N, K), got {logits.shape}")
    n, k = logits.shape
    t = np.asarray(targets, dtype=np.int64).reshape(-1)
    if t.shape != (n,):
        raise DimensionError(f"{t.size} targets for {n} logit rows")
    if np.any(t < 0) or np.any(t >= k):
        bad = t[(t < 0) | (t >= k)][0]
        raise ParameterError(f"target {bad} out of range [0, {k})")
    logp = log_softmax(logits.data)
    probs = np.exp(logp)
    loss = -logp[np.arange(n), t].mean()
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), t] = 1.0

    def bw(g):
        return ((probs - onehot) * (g / n),)

    return _make(np.asarray(loss, dtype=logits.dtype), (logits,), bw), probs


# ----------------------------------------------------------------- grad check


def finite_difference_grad(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array."""
    if h <= 0:
        raise ParameterError(f"step h must be > 0, got {h}")
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def grad_check(build_loss: Callable[[list[Tensor]], Tensor], arrays: Sequence[np.ndarray],
               h: float = 1e-5) -> float:
    """Worst relative error between backward() and central differences over all inputs.

    ``build_loss`` must be a pure function of its tensor inputs (reseed any RNG inside).
    """
    tensors = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    loss = build_loss(tensors)
    loss.backward()
    diffs, scale = [], 1e-8
    for idx, t in enumerate(tensors):
        def f(v, idx=idx):
            args = [Tensor(v) if k == idx else Tensor(tensors[k].data) for k in range(len(tensors))]
            with no_grad():
                return float(build_loss(args).data)
        numeric = finite_difference_grad(f, t.data, h)
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        diffs.append(float(np.abs(numeric - analytic).max()))
        scale = max(scale, np.abs(numeric).max(), np.abs(analytic).max())
    # normalised by the largest gradient entry across all inputs: inputs whose exact
    # gradient is zero (a shift cancelled by a following norm layer) only carry rounding noise
    return max(diffs) / scale


def is_finite(t: Tensor) -> bool:
    return bool(np.isfinite(t.data).all())


def param(shape: Sequence[int], value: float | np.ndarray = 0.0, dtype=DEFAULT_DTYPE,
          name: str = "") -> Tensor:
    arr = np.broadcast_to(np.asarray(value, dtype=dtype), tuple(shape)).copy()
    return Tensor(arr, requires_grad=True, name=name)


__all__ = [
    "Tensor", "Tape", "DimensionError", "ParameterError", "ContractError", "no_grad",
    "FlopCounter", "set_flop_scope", "add", "mul", "tsum", "reshape", "flatten", "concat",
    "permute_channels", "relu", "relu6", "sigmoid", "swish", "activation", "conv2d",
    "avg_pool2d", "max_pool2d", "global_avg_pool", "batch_norm2d", "dense", "dropout",
    "softmax_cross_entropy", "log_softmax", "backward", "finite_difference_grad",
    "max_relative_error", "grad_check", "is_finite", "param",
]
