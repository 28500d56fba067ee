"""The noise-estimation network: embedding, residual stack, conditioner stream."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T


@dataclass
class ModelConfig:
    n_layers: int = 30
    channels: int = 64
    kernel_size: int = 3
    dilation_cycle: list = field(default_factory=lambda: [2 ** i for i in range(10)])
    embedding_dim: int = 128
    embedding_hidden: int = 512
    embedding_C: float = 50000.0
    embedding_gamma: float = 1.0 / 16.0
    upscale_ratio: int = 2

    def __post_init__(self):
        self.dilation_cycle = [int(d) for d in self.dilation_cycle]
        if not self.dilation_cycle or any(d < 1 for d in self.dilation_cycle):
            raise ValueError("dilation cycle must be a non-empty list of positive ints")
        if self.n_layers < 1 or self.n_layers % len(self.dilation_cycle):
            raise ValueError(f"n_layers={self.n_layers} must be a positive multiple of the "
                             f"dilation cycle length {len(self.dilation_cycle)}")
        if self.embedding_dim % 2:
            raise ValueError("embedding_dim must be even")
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd")
        if self.upscale_ratio < 2:
            raise ValueError("upscale_ratio must be >= 2")
        if self.channels < 1 or self.embedding_hidden < 1:
            raise ValueError("channel widths must be positive")

    @property
    def dilations(self):
        cycle = self.dilation_cycle
        return [cycle[i % len(cycle)] for i in range(self.n_layers)]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def paper_config(r=2):
    return ModelConfig(upscale_ratio=r)


def desk_config(r=2):
    return ModelConfig(n_layers=4, channels=16, dilation_cycle=[1, 2, 4, 8], upscale_ratio=r)


MODEL_PRESETS = {"paper": paper_config, "desk": desk_config}


def noise_level_embedding(level, config):
    """[sin(10^(-iγ)·C·s), cos(10^(-iγ)·C·s)] for i = 0..dim/2-1."""
    s = level.sqrt_alpha_bar if hasattr(level, "sqrt_alpha_bar") else float(level)
    half = config.embedding_dim // 2
    arg = 10.0 ** (-np.arange(half) * config.embedding_gamma) * config.embedding_C * s
    return np.concatenate([np.sin(arg), np.cos(arg)])


def main_receptive_radius(config):
    """Samples on each side of an output position that y_noisy can influence."""
    half = (config.kernel_size - 1) // 2
    return sum(half * d for d in config.dilations)


def conditioner_receptive_radius(config):
    """Same quantity for the interpolated conditioner (before interpolation support).

    The conditioner chain runs from the last layer's conv down to the first, so
    layer l's contribution has passed convs N..l and then main convs l+1..N.
    """
    half = (config.kernel_size - 1) // 2
    dil = config.dilations
    return max(half * (sum(dil[i:]) + sum(dil[i + 1:])) for i in range(len(dil)))


class NuWaveNetwork:
    """ε_θ(y_noisy, y_d, sqrt(ᾱ)) -> estimated noise, same length as y_noisy.

    Residual layer l:
        h   = x + W_l·e                                  (embedding as bias)
        g   = main_conv_l(h) + cond_l                    (2C channels)
        u   = tanh(g[:C]) * sigmoid(g[C:])
        res, skip = split(proj_l(u))
        x   = (x + res) / sqrt(2)

    ``cond_l`` comes from a conditioner chain computed before the main stack,
    starting at the deepest layer: c_{N+1} = proj(interp(y_d)),
    cond_l = cond_conv_l(c_{l+1}), c_l = (c_{l+1} + gate(cond_l)) / sqrt(2).
    """

    def __init__(self, config, rng=None, *, init=True):
        self.config = config
        self.params = {}
        self.n_forward = 0
        if init:
            self._init_params(rng if rng is not None else T.Rng(0))

    # ------------------------------------------------------------ parameters

    def param_shapes(self):
        cfg = self.config
        C, K, E, H = cfg.channels, cfg.kernel_size, cfg.embedding_dim, cfg.embedding_hidden
        shapes = {
            "input_proj.w": (C, 1, 1), "input_proj.b": (C,),
            "cond_proj.w": (C, 1, 1), "cond_proj.b": (C,),
            "emb_fc1.w": (H, E), "emb_fc1.b": (H,),
            "emb_fc2.w": (H, H), "emb_fc2.b": (H,),
        }
        for i in range(cfg.n_layers):
            p = f"layers.{i}."
            shapes[p + "emb.w"] = (C, H)
            shapes[p + "emb.b"] = (C,)
            shapes[p + "main_conv.w"] = (2 * C, C, K)
            shapes[p + "main_conv.b"] = (2 * C,)
            shapes[p + "cond_conv.w"] = (2 * C, C, K)
            shapes[p + "cond_conv.b"] = (2 * C,)
            shapes[p + "out_proj.w"] = (2 * C, C, 1)
            shapes[p + "out_proj.b"] = (2 * C,)
        shapes["skip_proj.w"] = (C, C, 1)
        shapes["skip_proj.b"] = (C,)
        shapes["output.w"] = (1, C, 1)
        shapes["output.b"] = (1,)
        return shapes

    def _init_params(self, rng):
        for name, shape in self.param_shapes().items():
            if name.startswith("output."):
                data = np.zeros(shape)
            else:
                wshape = self.param_shapes()[name[:-1] + "w"]
                fan_in = int(np.prod(wshape[1:]))
                bound = 1.0 / math.sqrt(fan_in)
                data = rng.uniform_array(-bound, bound, shape)
            self.params[name] = T.Tensor(data, requires_grad=True)

    def parameters(self):
        return list(self.params.values())

    def named_parameters(self):
        return list(self.params.items())

    def n_parameters(self):
        return int(sum(p.data.size for p in self.params.values()))

    def load_arrays(self, arrays):
        shapes = self.param_shapes()
        if set(arrays) != set(shapes):
            missing = sorted(set(shapes) - set(arrays))
            extra = sorted(set(arrays) - set(shapes))
            raise ValueError(f"parameter names differ: missing {missing[:3]}, unexpected {extra[:3]}")
        for name, shape in shapes.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name}: stored shape {arr.shape} != expected {shape}")
            self.params[name] = T.Tensor(arr, requires_grad=True)

    # ------------------------------------------------------------ forward

    def forward(self, y_noisy, y_d, level):
        cfg = self.config
        P = self.params
        r = cfg.upscale_ratio
        y = y_noisy if isinstance(y_noisy, T.Tensor) else T.Tensor(np.asarray(y_noisy, dtype=np.float64))
        cond_src = y_d.samples if hasattr(y_d, "samples") else np.asarray(y_d, dtype=np.float64)
        if y.data.ndim != 1 or y.shape[0] != r * cond_src.size:
            raise ValueError(f"noisy input of length {y.shape[0]} does not match "
                             f"r={r} x conditioner length {cond_src.size}")
        self.n_forward += 1
        length = y.shape[0]
        C = cfg.channels
        half_scale = 1.0 / math.sqrt(2.0)

        # noise-level embedding -> shared FC stack
        e = T.Tensor(noise_level_embedding(level, cfg))
        e = T.swish(T.linear(e, P["emb_fc1.w"], P["emb_fc1.b"]))
        e = T.swish(T.linear(e, P["emb_fc2.w"], P["emb_fc2.b"]))

        # conditioner chain, deepest layer first
        c = T.reshape(T.interp(T.Tensor(cond_src), r), (1, length))
        c = T.swish(T.conv1d(c, P["cond_proj.w"], P["cond_proj.b"]))
        cond = [None] * cfg.n_layers
        for i in reversed(range(cfg.n_layers)):
            d = cfg.dilations[i]
            pre = T.conv1d(c, P[f"layers.{i}.cond_conv.w"], P[f"layers.{i}.cond_conv.b"], d)
            cond[i] = pre
            a, b = T.split_channels(pre)
            c = (c + T.tanh(a) * T.sigmoid(b)) * half_scale

        x = T.reshape(y, (1, length))
        x = T.swish(T.conv1d(x, P["input_proj.w"], P["input_proj.b"]))
        skip = None
        for i, d in enumerate(cfg.dilations):
            p = f"layers.{i}."
            bias = T.linear(e, P[p + "emb.w"], P[p + "emb.b"])
            h = T.channel_bias(x, bias)
            g = T.conv1d(h, P[p + "main_conv.w"], P[p + "main_conv.b"], d) + cond[i]
            a, b = T.split_channels(g)
            u = T.tanh(a) * T.sigmoid(b)
            o = T.conv1d(u, P[p + "out_proj.w"], P[p + "out_proj.b"])
            res, sk = T.channel_slice(o, 0, C), T.channel_slice(o, C, 2 * C)
            x = (x + res) * half_scale
            skip = sk if skip is None else skip + sk

        s = skip * (1.0 / math.sqrt(cfg.n_layers))
        s = T.swish(T.conv1d(s, P["skip_proj.w"], P["skip_proj.b"]))
        out = T.conv1d(s, P["output.w"], P["output.b"])
        return T.reshape(out, (length,))

    __call__ = forward
