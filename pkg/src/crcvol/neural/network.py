"""Feedforward networks built from scratch on numpy: dense layers, ELU,
batch normalization, residual cells, and a stretched-sigmoid output that
pins outputs inside a declared box.

A network is a chain of ops (input scaling, main body, head). Residual
cells follow out = elu(bn(W2 @ elu(bn(W1 @ x + b1)) + b2)) + proj(x) with a
learned linear projection whenever the dimensions differ, so one cell spends
two main layers. With batch norm on, the second norm's gain starts at zero,
so a fresh cell is the identity (plus projection) and the residual branch
opens up through its own gradient; this starts training from a much better
basin than a unit gain. Batch norm sits before each activation, keeps
running statistics with momentum 0.99 in train mode, and freezes onto them
in eval mode. All arithmetic is float64; forward and backward passes are
deterministic functions of the weights, the batch, and the mode.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import FormatError

_BN_EPS = 1e-6
_BN_MOMENTUM = 0.99
_SIGMOID_CLIP = 30.0


def _elu(x):
    return np.where(x > 0.0, x, np.expm1(x))


def _elu_grad(x):
    return np.where(x > 0.0, 1.0, np.exp(np.minimum(x, 0.0)))


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description.

    ``n_main_layers`` counts hidden layers of ``width`` nodes; with
    ``residual`` on they are consumed two at a time by residual cells, so the
    count must be even. ``out_lo``/``out_hi`` as per-output bounds select the
    stretched-sigmoid head; both None selects the linear head.
    """

    input_dim: int
    output_dim: int
    n_main_layers: int = 2
    width: int = 256
    residual: bool = True
    batch_norm: bool = True
    out_lo: tuple = None
    out_hi: tuple = None

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1 or self.width < 1:
            raise ValueError("input_dim, output_dim, width must be positive")
        if self.n_main_layers < 0:
            raise ValueError("n_main_layers must be non-negative")
        if self.residual and self.n_main_layers % 2:
            raise ValueError(
                "residual cells consume main layers in pairs; "
                f"got n_main_layers={self.n_main_layers}"
            )
        if (self.out_lo is None) != (self.out_hi is None):
            raise ValueError("out_lo and out_hi must be given together")
        if self.out_lo is not None:
            lo = tuple(float(v) for v in self.out_lo)
            hi = tuple(float(v) for v in self.out_hi)
            if len(lo) != self.output_dim or len(hi) != self.output_dim:
                raise ValueError("output bounds must match output_dim")
            if any(not (l < h) for l, h in zip(lo, hi)):
                raise ValueError("output bounds need lo < hi per output")
            object.__setattr__(self, "out_lo", lo)
            object.__setattr__(self, "out_hi", hi)

    @property
    def output_activation(self) -> str:
        return "linear" if self.out_lo is None else "stretched-sigmoid"

    def to_json(self) -> str:
        return json.dumps({
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "n_main_layers": self.n_main_layers,
            "width": self.width,
            "residual": self.residual,
            "batch_norm": self.batch_norm,
            "out_lo": None if self.out_lo is None else list(self.out_lo),
            "out_hi": None if self.out_hi is None else list(self.out_hi),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NetworkSpec":
        d = json.loads(text)
        lo = d.pop("out_lo", None)
        hi = d.pop("out_hi", None)
        return cls(out_lo=None if lo is None else tuple(lo),
                   out_hi=None if hi is None else tuple(hi), **d)


class _BatchNormPart:
    """Batch norm over features, shared helper for cells and plain layers."""

    def __init__(self, tag, dim, gamma0=1.0):
        self.gamma = tag + ".gamma"
        self.beta = tag + ".beta"
        self.mean = tag + ".mean"
        self.var = tag + ".var"
        self.dim = dim
        self.gamma0 = gamma0

    def init(self, rng, params, state):
        params[self.gamma] = np.full(self.dim, self.gamma0)
        params[self.beta] = np.zeros(self.dim)
        state[self.mean] = np.zeros(self.dim)
        state[self.var] = np.ones(self.dim)

    def forward(self, a, params, state, train):
        gamma = params[self.gamma]
        beta = params[self.beta]
        if train:
            mu = a.mean(axis=0)
            var = a.var(axis=0)
            state[self.mean] = _BN_MOMENTUM * state[self.mean] + (1.0 - _BN_MOMENTUM) * mu
            state[self.var] = _BN_MOMENTUM * state[self.var] + (1.0 - _BN_MOMENTUM) * var
        else:
            mu = state[self.mean]
            var = state[self.var]
        inv = 1.0 / np.sqrt(var + _BN_EPS)
        xhat = (a - mu) * inv
        return gamma * xhat + beta, (xhat, inv, train)

    def backward(self, dy, cache, params, grads):
        xhat, inv, train = cache
        gamma = params[self.gamma]
        grads[self.gamma] = (dy * xhat).sum(axis=0)
        grads[self.beta] = dy.sum(axis=0)
        dxhat = dy * gamma
        if not train:
            return dxhat * inv
        n = dy.shape[0]
        return (inv / n) * (
            n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
        )


class _InputScale:
    """Fixed affine feature map y = (x - shift) * scale; not trainable."""

    def __init__(self, shift, scale):
        self.shift = shift
        self.scale = scale

    def param_names(self):
        return []

    def state_names(self):
        return []

    def init(self, rng, params, state):
        pass

    def forward(self, x, params, state, train):
        return (x - self.shift) * self.scale, None

    def backward(self, dy, cache, params, grads):
        return dy * self.scale


class _PlainLayer:
    """Dense -> (batch norm) -> ELU."""

    def __init__(self, tag, d_in, d_out, batch_norm):
        self.tag = tag
        self.d_in = d_in
        self.d_out = d_out
        self.bn = _BatchNormPart(tag + ".bn", d_out) if batch_norm else None

    def param_names(self):
        names = [self.tag + ".W", self.tag + ".b"]
        if self.bn:
            names += [self.bn.gamma, self.bn.beta]
        return names

    def state_names(self):
        return [self.bn.mean, self.bn.var] if self.bn else []

    def init(self, rng, params, state):
        params[self.tag + ".W"] = rng.normal(
            0.0, math.sqrt(2.0 / self.d_in), size=(self.d_in, self.d_out))
        params[self.tag + ".b"] = np.zeros(self.d_out)
        if self.bn:
            self.bn.init(rng, params, state)

    def forward(self, x, params, state, train):
        a = x @ params[self.tag + ".W"] + params[self.tag + ".b"]
        if self.bn:
            h, bn_cache = self.bn.forward(a, params, state, train)
        else:
            h, bn_cache = a, None
        return _elu(h), (x, h, bn_cache)

    def backward(self, dy, cache, params, grads):
        x, h, bn_cache = cache
        dh = dy * _elu_grad(h)
        da = self.bn.backward(dh, bn_cache, params, grads) if self.bn else dh
        grads[self.tag + ".W"] = x.T @ da
        grads[self.tag + ".b"] = da.sum(axis=0)
        return da @ params[self.tag + ".W"].T


class _ResidualCell:
    """Two main layers plus a skip connection (identity, or a learned
    linear projection when the input and output widths differ)."""

    def __init__(self, tag, d_in, width, batch_norm):
        self.tag = tag
        self.d_in = d_in
        self.width = width
        self.bn1 = _BatchNormPart(tag + ".bn1", width) if batch_norm else None
        # zero gain: the cell is born as the identity/projection map
        self.bn2 = _BatchNormPart(tag + ".bn2", width, gamma0=0.0) if batch_norm else None
        self.has_proj = d_in != width

    def param_names(self):
        names = [self.tag + ".W1", self.tag + ".b1"]
        if self.bn1:
            names += [self.bn1.gamma, self.bn1.beta]
        names += [self.tag + ".W2", self.tag + ".b2"]
        if self.bn2:
            names += [self.bn2.gamma, self.bn2.beta]
        if self.has_proj:
            names.append(self.tag + ".Wp")
        return names

    def state_names(self):
        names = []
        if self.bn1:
            names += [self.bn1.mean, self.bn1.var]
        if self.bn2:
            names += [self.bn2.mean, self.bn2.var]
        return names

    def init(self, rng, params, state):
        params[self.tag + ".W1"] = rng.normal(
            0.0, math.sqrt(2.0 / self.d_in), size=(self.d_in, self.width))
        params[self.tag + ".b1"] = np.zeros(self.width)
        if self.bn1:
            self.bn1.init(rng, params, state)
        params[self.tag + ".W2"] = rng.normal(
            0.0, math.sqrt(2.0 / self.width), size=(self.width, self.width))
        params[self.tag + ".b2"] = np.zeros(self.width)
        if self.bn2:
            self.bn2.init(rng, params, state)
        if self.has_proj:
            params[self.tag + ".Wp"] = rng.normal(
                0.0, math.sqrt(1.0 / self.d_in), size=(self.d_in, self.width))

    def forward(self, x, params, state, train):
        a1 = x @ params[self.tag + ".W1"] + params[self.tag + ".b1"]
        if self.bn1:
            h1, c1 = self.bn1.forward(a1, params, state, train)
        else:
            h1, c1 = a1, None
        e1 = _elu(h1)
        a2 = e1 @ params[self.tag + ".W2"] + params[self.tag + ".b2"]
        if self.bn2:
            h2, c2 = self.bn2.forward(a2, params, state, train)
        else:
            h2, c2 = a2, None
        skip = x @ params[self.tag + ".Wp"] if self.has_proj else x
        return _elu(h2) + skip, (x, h1, c1, e1, h2, c2)

    def backward(self, dy, cache, params, grads):
        x, h1, c1, e1, h2, c2 = cache
        if self.has_proj:
            grads[self.tag + ".Wp"] = x.T @ dy
            dx_skip = dy @ params[self.tag + ".Wp"].T
        else:
            dx_skip = dy
        dh2 = dy * _elu_grad(h2)
        da2 = self.bn2.backward(dh2, c2, params, grads) if self.bn2 else dh2
        grads[self.tag + ".W2"] = e1.T @ da2
        grads[self.tag + ".b2"] = da2.sum(axis=0)
        de1 = da2 @ params[self.tag + ".W2"].T
        dh1 = de1 * _elu_grad(h1)
        da1 = self.bn1.backward(dh1, c1, params, grads) if self.bn1 else dh1
        grads[self.tag + ".W1"] = x.T @ da1
        grads[self.tag + ".b1"] = da1.sum(axis=0)
        return da1 @ params[self.tag + ".W1"].T + dx_skip


class _Head:
    """Output dense layer, optionally followed by a stretched sigmoid that
    maps each output into (lo_i, hi_i)."""

    def __init__(self, tag, d_in, d_out, out_lo, out_hi):
        self.tag = tag
        self.d_in = d_in
        self.d_out = d_out
        if out_lo is None:
            self.lo = self.span = None
        else:
            self.lo = np.array(out_lo, dtype=np.float64)
            self.span = np.array(out_hi, dtype=np.float64) - self.lo

    def param_names(self):
        return [self.tag + ".W", self.tag + ".b"]

    def state_names(self):
        return []

    def init(self, rng, params, state):
        params[self.tag + ".W"] = rng.normal(
            0.0, math.sqrt(1.0 / self.d_in), size=(self.d_in, self.d_out))
        params[self.tag + ".b"] = np.zeros(self.d_out)

    def forward(self, x, params, state, train):
        z = x @ params[self.tag + ".W"] + params[self.tag + ".b"]
        if self.lo is None:
            return z, (x, None)
        s = 1.0 / (1.0 + np.exp(-np.clip(z, -_SIGMOID_CLIP, _SIGMOID_CLIP)))
        return self.lo + self.span * s, (x, s)

    def backward(self, dy, cache, params, grads):
        x, s = cache
        dz = dy if s is None else dy * self.span * s * (1.0 - s)
        grads[self.tag + ".W"] = x.T @ dz
        grads[self.tag + ".b"] = dz.sum(axis=0)
        return dz @ params[self.tag + ".W"].T


def _build_ops(spec, in_shift, in_scale):
    ops = [_InputScale(in_shift, in_scale)]
    d = spec.input_dim
    if spec.residual:
        for ci in range(spec.n_main_layers // 2):
            ops.append(_ResidualCell(f"cell{ci}", d, spec.width, spec.batch_norm))
            d = spec.width
    else:
        for li in range(spec.n_main_layers):
            ops.append(_PlainLayer(f"layer{li}", d, spec.width, spec.batch_norm))
            d = spec.width
    ops.append(_Head("head", d, spec.output_dim, spec.out_lo, spec.out_hi))
    return ops


class Network:
    """A trainable feedforward network.

    ``params`` holds the trainable tensors, ``state`` the batch-norm running
    statistics; both are ordinary dicts of float64 arrays in a fixed order.
    ``in_shift``/``in_scale`` bake the dataset's feature scaling into the
    model so callers always pass raw features.
    """

    def __init__(self, spec: NetworkSpec, seed=0, in_shift=None, in_scale=None):
        self.spec = spec
        self.in_shift = (np.zeros(spec.input_dim) if in_shift is None
                         else np.array(in_shift, dtype=np.float64))
        self.in_scale = (np.ones(spec.input_dim) if in_scale is None
                         else np.array(in_scale, dtype=np.float64))
        if self.in_shift.shape != (spec.input_dim,) or self.in_scale.shape != (spec.input_dim,):
            raise ValueError("in_shift/in_scale must have length input_dim")
        self._ops = _build_ops(spec, self.in_shift, self.in_scale)
        self.params = {}
        self.state = {}
        rng = np.random.default_rng(seed)
        for op in self._ops:
            op.init(rng, self.params, self.state)

    def param_names(self):
        return [name for op in self._ops for name in op.param_names()]

    def trainable_params(self) -> dict:
        return self.params

    def forward_cached(self, x, train: bool):
        x = self._check_batch(x)
        caches = []
        for op in self._ops:
            x, c = op.forward(x, self.params, self.state, train)
            caches.append(c)
        return x, caches

    def forward(self, x, train: bool = False) -> np.ndarray:
        return self.forward_cached(x, train)[0]

    def backward(self, caches, dy):
        """Backpropagate an output gradient. Returns (grads, dx) with grads
        keyed like ``params``."""
        grads = {}
        for op, c in zip(reversed(self._ops), reversed(caches)):
            dy = op.backward(dy, c, self.params, grads)
        return grads, dy

    def _check_batch(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.spec.input_dim:
            raise ValueError(
                f"expected batch of shape (n, {self.spec.input_dim}), got {x.shape}"
            )
        return x


def mse_loss(y, target):
    """Mean squared error over every output entry and its gradient in y."""
    y = np.asarray(y, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if y.shape != target.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {target.shape}")
    diff = y - target
    return float(np.mean(diff * diff)), (2.0 / diff.size) * diff


_MAGIC = "crcvol-net 1"


def save(net: Network, path) -> None:
    """Write a network to a versioned text file: magic line, spec JSON, the
    input scaling, every parameter and running-statistic tensor in declared
    order at full precision, then a sha256 checksum of all preceding bytes."""
    lines = [_MAGIC, net.spec.to_json()]

    def emit(kind, name, arr):
        arr = np.atleast_2d(np.asarray(arr, dtype=np.float64))
        lines.append(f"# {kind} {name} {arr.shape[0]} {arr.shape[1]}")
        for row in arr:
            lines.append(" ".join(f"{v:.17g}" for v in row))

    emit("input", "in_shift", net.in_shift)
    emit("input", "in_scale", net.in_scale)
    for name in net.param_names():
        emit("param", name, net.params[name])
    for op in net._ops:
        for name in op.state_names():
            emit("state", name, net.state[name])
    body = "\n".join(lines) + "\n"
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(body)
        fh.write(f"checksum sha256 {digest}\n")


def load(path) -> Network:
    """Read a network written by ``save``. Raises FormatError on a bad magic
    line, version, checksum, or any structural mismatch."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or not lines[-1].startswith("checksum sha256 "):
        raise FormatError(f"{path}: missing checksum line (truncated file?)")
    claimed = lines.pop().split()[-1]
    body = "\n".join(lines) + "\n"
    if hashlib.sha256(body.encode("utf-8")).hexdigest() != claimed:
        raise FormatError(f"{path}: checksum mismatch (corrupted file)")
    if lines[0] != _MAGIC:
        raise FormatError(
            f"{path}: bad magic/version line {lines[0]!r}, expected {_MAGIC!r}"
        )
    try:
        spec = NetworkSpec.from_json(lines[1])
    except (json.JSONDecodeError, TypeError, ValueError) as err:
        raise FormatError(f"{path}: bad spec line: {err}") from err

    tensors = {}
    i = 2
    while i < len(lines):
        parts = lines[i].split()
        if len(parts) != 5 or parts[0] != "#":
            raise FormatError(f"{path}: bad tensor header at line {i + 1}")
        _, kind, name, rows, cols = parts
        rows, cols = int(rows), int(cols)
        block = lines[i + 1:i + 1 + rows]
        if len(block) != rows:
            raise FormatError(f"{path}: tensor {name} truncated")
        arr = np.array([[float(v) for v in row.split()] for row in block])
        if arr.shape != (rows, cols):
            raise FormatError(f"{path}: tensor {name} has ragged rows")
        tensors[(kind, name)] = arr
        i += 1 + rows

    def take(kind, name, shape):
        try:
            arr = tensors.pop((kind, name))
        except KeyError:
            raise FormatError(f"{path}: missing tensor {name}") from None
        arr = arr[0] if len(shape) == 1 else arr
        if arr.shape != shape:
            raise FormatError(
                f"{path}: tensor {name} has shape {arr.shape}, expected {shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise FormatError(f"{path}: tensor {name} contains non-finite values")
        return arr

    shift = take("input", "in_shift", (spec.input_dim,))
    scale_ = take("input", "in_scale", (spec.input_dim,))
    net = Network(spec, seed=0, in_shift=shift, in_scale=scale_)
    for name in net.param_names():
        net.params[name] = take("param", name, net.params[name].shape)
    for op in net._ops:
        for name in op.state_names():
            net.state[name] = take("state", name, net.state[name].shape)
    if tensors:
        extra = ", ".join(name for _, name in tensors)
        raise FormatError(f"{path}: unexpected tensors: {extra}")
    return net
