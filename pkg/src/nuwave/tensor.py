"""Reverse-mode autodiff over a small, fixed set of array operations.

Every operation records its parents and a backward closure on the output
tensor; :func:`grad` walks that tape in reverse topological order. Only the
operations defined in this module are differentiable, and shapes must match
exactly (no implicit broadcasting) except where an op says otherwise.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf."""


class UnsupportedOperationError(RuntimeError):
    pass


_GRAD_ENABLED = True

# op name -> number of parents; anything else on the tape is rejected by grad()
SUPPORTED_OPS = {
    "add": 2, "sub": 2, "mul": 2, "scale": 1, "neg": 1,
    "tanh": 1, "sigmoid": 1, "abs": 1, "log": 1,
    "sum": 1, "mean": 1, "reshape": 1, "slice": 1,
    "conv1d": 3, "linear": 3, "channel_bias": 2, "interp": 1,
}


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, *, op="leaf", _parents=(), _backward=None):
        arr = np.array(data, dtype=np.float64, copy=True) if not isinstance(data, np.ndarray) \
            else np.ascontiguousarray(data, dtype=np.float64)
        if arr.size == 0:
            raise ValueError("tensors must have positive extents")
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"non-finite values produced by {op!r}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.op = op
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    def __len__(self):
        return self.data.shape[0]

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar()

    def backward(self):
        """Populate ``.grad`` on every leaf that requires gradients."""
        leaves = [n for n in _topo(self) if n.op == "leaf" and n.requires_grad]
        for leaf, g in zip(leaves, grad(self, leaves)):
            leaf.grad = g

    def __add__(self, other):
        return add(self, _as_tensor(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, (int, float)):
            raise TypeError("only division by a python scalar is supported")
        return scale(self, 1.0 / other)

    def __neg__(self):
        return neg(self)


def _not_scalar():
    raise ValueError("item() requires a single-element tensor")


def _as_tensor(x, like):
    if isinstance(x, Tensor):
        return x
    arr = np.broadcast_to(np.asarray(x, dtype=np.float64), like.shape)
    return Tensor(arr)


def tensor(data, requires_grad=False):
    return data if isinstance(data, Tensor) else Tensor(data, requires_grad)


def _make(data, op, parents, backward):
    needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    if needs:
        return Tensor(data, True, op=op, _parents=parents, _backward=backward)
    return Tensor(data, False, op=op)


def _check_same(a, b, op):
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------- elementwise

def add(a, b):
    _check_same(a, b, "add")
    return _make(a.data + b.data, "add", (a, b), lambda g: (g, g))


def sub(a, b):
    _check_same(a, b, "sub")
    return _make(a.data - b.data, "sub", (a, b), lambda g: (g, -g))


def mul(a, b):
    _check_same(a, b, "mul")
    ad, bd = a.data, b.data
    return _make(ad * bd, "mul", (a, b), lambda g: (g * bd, g * ad))


def scale(a, c):
    c = float(c)
    return _make(a.data * c, "scale", (a,), lambda g: (g * c,))


def neg(a):
    return _make(-a.data, "neg", (a,), lambda g: (-g,))


def tanh(a):
    out = np.tanh(a.data)
    return _make(out, "tanh", (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    out = expit(a.data)
    return _make(out, "sigmoid", (a,), lambda g: (g * out * (1.0 - out),))


def swish(a):
    return mul(a, sigmoid(a))


def abs(a):  # noqa: A001 - mirrors numpy naming
    s = np.sign(a.data)
    return _make(np.abs(a.data), "abs", (a,), lambda g: (g * s,))


def log(a, floor=None):
    """Natural log; with ``floor`` the input is clamped to ``max(x, floor)``
    and the gradient is zero wherever the clamp is active."""
    x = a.data
    if floor is None:
        if (x <= 0).any():
            raise ValueError("log of non-positive value")
        return _make(np.log(x), "log", (a,), lambda g: (g / x,))
    active = x > floor
    clamped = np.where(active, x, floor)
    return _make(np.log(clamped), "log", (a,), lambda g: (np.where(active, g / clamped, 0.0),))


# ---------------------------------------------------------------- reductions

def sum(a):  # noqa: A001
    shape = a.shape
    return _make(np.array(a.data.sum()), "sum", (a,), lambda g: (np.full(shape, g.reshape(-1)[0]),))


def mean(a):
    shape, n = a.shape, a.data.size
    return _make(np.array(a.data.mean()), "mean", (a,), lambda g: (np.full(shape, g.reshape(-1)[0] / n),))


# ---------------------------------------------------------------- shape ops

def reshape(a, shape):
    old = a.shape
    return _make(a.data.reshape(shape), "reshape", (a,), lambda g: (g.reshape(old),))


def split_channels(a, parts=2):
    """Split a [C, L] tensor into ``parts`` equal channel blocks."""
    c = a.shape[0]
    if c % parts:
        raise ValueError(f"cannot split {c} channels into {parts}")
    step = c // parts
    return [channel_slice(a, i * step, (i + 1) * step) for i in range(parts)]


def channel_slice(a, lo, hi):
    shape = a.shape

    def backward(g):
        full = np.zeros(shape)
        full[lo:hi] = g
        return (full,)

    return _make(a.data[lo:hi], "slice", (a,), backward)


def channel_bias(x, b):
    """x[C, L] + b[C] broadcast along time."""
    if x.data.ndim != 2 or b.shape != (x.shape[0],):
        raise ValueError(f"channel_bias: incompatible shapes {x.shape} and {b.shape}")
    return _make(x.data + b.data[:, None], "channel_bias", (x, b),
                 lambda g: (g, g.sum(axis=1)))


# ---------------------------------------------------------------- layers

def linear(x, weight, bias):
    """Fully-connected layer: weight[out, in] @ x[in] + bias[out]."""
    if x.data.ndim != 1 or weight.data.ndim != 2 or weight.shape[1] != x.shape[0] \
            or bias.shape != (weight.shape[0],):
        raise ValueError(f"linear: incompatible shapes x{x.shape} W{weight.shape} b{bias.shape}")
    xd, wd = x.data, weight.data
    return _make(wd @ xd + bias.data, "linear", (x, weight, bias),
                 lambda g: (wd.T @ g, np.outer(g, xd), g))


def conv1d(x, weight, bias, dilation=1):
    """Non-causal dilated convolution with symmetric zero padding.

    ``x`` is [C_in, L], ``weight`` [C_out, C_in, K] with K odd, ``bias`` [C_out].
    Output keeps length L; tap k reads ``x[:, l + (k - (K-1)/2) * dilation]``.
    """
    if x.data.ndim != 2 or weight.data.ndim != 3:
        raise ValueError("conv1d expects x[C_in, L] and weight[C_out, C_in, K]")
    c_out, c_in, k = weight.shape
    if x.shape[0] != c_in:
        raise ValueError(f"conv1d: input has {x.shape[0]} channels, weight expects {c_in}")
    if bias.shape != (c_out,):
        raise ValueError(f"conv1d: bias shape {bias.shape} != ({c_out},)")
    if k % 2 == 0:
        raise ValueError("conv1d: kernel size must be odd")
    if dilation < 1:
        raise ValueError("conv1d: dilation must be >= 1")
    length = x.shape[1]
    pad = (k - 1) * dilation // 2
    w2 = weight.data.reshape(c_out, c_in * k)
    if k == 1:
        cols = x.data
    else:
        xp = np.zeros((c_in, length + 2 * pad))
        xp[:, pad:pad + length] = x.data
        cols = np.empty((c_in, k, length))
        for j in range(k):
            cols[:, j] = xp[:, j * dilation:j * dilation + length]
        cols = cols.reshape(c_in * k, length)
    out = w2 @ cols
    out += bias.data[:, None]

    def backward(g):
        gw = (g @ cols.T).reshape(c_out, c_in, k)
        gx = None
        if x.requires_grad:
            gcols = w2.T @ g
            if k == 1:
                gx = gcols
            else:
                gcols = gcols.reshape(c_in, k, length)
                gxp = np.zeros((c_in, length + 2 * pad))
                for j in range(k):
                    gxp[:, j * dilation:j * dilation + length] += gcols[:, j]
                gx = gxp[:, pad:pad + length]
        return gx, gw, g.sum(axis=1)

    return _make(out, "conv1d", (x, weight, bias), backward)


def interp_indices(n_src, r):
    """Source indices and blend weights mapping position j to j / r.

    Positions past the last source sample replicate it.
    """
    j = np.arange(n_src * r)
    lo = j // r
    frac = (j % r) / r
    hi = np.minimum(lo + 1, n_src - 1)
    return lo, hi, frac


def interp(x, r):
    """Linear interpolation of a 1-D tensor to ``r`` times its length."""
    if x.data.ndim != 1:
        raise ValueError("interp expects a 1-D tensor")
    n = x.shape[0]
    lo, hi, frac = interp_indices(n, r)
    xd = x.data
    out = xd[lo] * (1.0 - frac) + xd[hi] * frac

    def backward(g):
        gx = np.zeros(n)
        np.add.at(gx, lo, g * (1.0 - frac))
        np.add.at(gx, hi, g * frac)
        return (gx,)

    return _make(out, "interp", (x,), backward)


# ---------------------------------------------------------------- backprop

def _topo(root):
    order, seen = [], set()
    stack = [(root, False)]
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
            if id(p) not in seen:
                stack.append((p, False))
    return order


def grad(loss, params):
    """Gradients of scalar ``loss`` with respect to each tensor in ``params``.

    Parameters with no path to ``loss`` get an all-zero array.
    """
    if loss.data.size != 1:
        raise ValueError(f"grad needs a scalar loss, got shape {loss.shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    if loss.requires_grad:
        for node in reversed(_topo(loss)):
            if node.op == "leaf" or not node.requires_grad:
                continue
            if node.op not in SUPPORTED_OPS or node._backward is None \
                    or len(node._parents) != SUPPORTED_OPS[node.op]:
                raise UnsupportedOperationError(f"cannot differentiate through {node.op!r}")
            g = grads.pop(id(node), None)
            if g is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
    return [np.array(grads.get(id(p), np.zeros_like(p.data)), dtype=np.float64).reshape(p.shape)
            for p in params]


# ---------------------------------------------------------------- randomness

class Rng:
    """Seeded Philox (counter-based) generator; streams are portable across platforms."""

    def __init__(self, seed):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(self.seed))

    def normal(self, shape):
        return self._gen.standard_normal(shape)

    def uniform(self, lo, hi):
        if not lo < hi:
            raise ValueError(f"uniform needs lo < hi, got [{lo}, {hi}]")
        return float(self._gen.uniform(lo, hi))

    def uniform_array(self, lo, hi, shape):
        return self._gen.uniform(lo, hi, shape)

    def integers(self, lo, hi):
        """Integer in [lo, hi)."""
        return int(self._gen.integers(lo, hi))

    def get_state(self):
        st = self._gen.bit_generator.state
        return {
            "seed": self.seed,
            "counter": [int(v) for v in st["state"]["counter"]],
            "key": [int(v) for v in st["state"]["key"]],
            "buffer": [int(v) for v in st["buffer"]],
            "buffer_pos": int(st["buffer_pos"]),
            "has_uint32": int(st["has_uint32"]),
            "uinteger": int(st["uinteger"]),
        }

    @classmethod
    def from_state(cls, state):
        rng = cls(state["seed"])
        bg = rng._gen.bit_generator
        bg.state = {
            "bit_generator": "Philox",
            "state": {"counter": np.array(state["counter"], dtype=np.uint64),
                      "key": np.array(state["key"], dtype=np.uint64)},
            "buffer": np.array(state["buffer"], dtype=np.uint64),
            "buffer_pos": state["buffer_pos"],
            "has_uint32": state["has_uint32"],
            "uinteger": state["uinteger"],
        }
        return rng


def randn(rng, shape):
    return Tensor(rng.normal(shape))


def rand_uniform(rng, lo, hi):
    return rng.uniform(lo, hi)


# ---------------------------------------------------------------- optimizer

@dataclass
class AdamState:
    lr: float = 3e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **hyper):
        st = cls(**hyper)
        st.first_moment = [np.zeros_like(p.data) for p in params]
        st.second_moment = [np.zeros_like(p.data) for p in params]
        return st


def adam_step(params, grads, state):
    """One bias-corrected Adam update, applied in place to ``params`` and ``state``."""
    if not (len(params) == len(grads) == len(state.first_moment) == len(state.second_moment)):
        raise ValueError("adam_step: params, grads and moments differ in length")
    for p, g, m in zip(params, grads, state.first_moment):
        if p.shape != np.shape(g) or p.shape != m.shape:
            raise ValueError(f"adam_step: layout mismatch at shape {p.shape}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    step_scale = state.lr / c1
    inv_c2 = 1.0 / np.sqrt(c2)
    for i, (p, g) in enumerate(zip(params, grads)):
        m = state.first_moment[i]
        v = state.second_moment[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        denom = np.sqrt(v)
        denom *= inv_c2
        denom += state.eps
        update = np.divide(m, denom, out=denom)
        update *= step_scale
        new = p.data - update
        if not np.isfinite(new).all():
            raise NonFiniteError("adam_step produced non-finite parameters")
        p.data = new
