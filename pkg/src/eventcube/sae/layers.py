"""Numpy layer primitives with explicit forward/backward passes.

All layers follow one contract: ``forward(x, train)`` returns ``(out, cache)``
and ``backward(dout, cache)`` returns ``(dx, param_grads)`` where
``param_grads`` maps parameter names to arrays shaped like the parameters.
Convolutions use channels-last layout ``(batch, height, width, channels)``.
"""

from __future__ import annotations

import numpy as np

BN_EPS = 1e-5


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    """Gather sliding windows of a padded input: (B,Hp,Wp,C) -> (B,OH,OW,kh,kw,C)."""
    b, _, _, c = xp.shape
    cols = np.empty((b, oh, ow, kh, kw, c), dtype=xp.dtype)
    for a in range(kh):
        for d in range(kw):
            cols[:, :, :, a, d, :] = xp[:, a : a + stride * oh : stride, d : d + stride * ow : stride, :]
    return cols


def _col2im(cols: np.ndarray, hp: int, wp: int, kh: int, kw: int, stride: int) -> np.ndarray:
    """Adjoint of :func:`_im2col`: scatter-add windows back onto the padded canvas."""
    b, oh, ow, _, _, c = cols.shape
    out = np.zeros((b, hp, wp, c), dtype=cols.dtype)
    for a in range(kh):
        for d in range(kw):
            out[:, a : a + stride * oh : stride, d : d + stride * ow : stride, :] += cols[:, :, :, a, d, :]
    return out


def _same_padding(k: int) -> tuple[int, int]:
    lo = (k - 1) // 2
    return lo, k - 1 - lo


class DenseLayer:
    """Affine map on flat features: y = x @ W + b."""

    def __init__(self, in_units: int, out_units: int):
        self.in_units = in_units
        self.out_units = out_units
        self.params: dict[str, np.ndarray] = {}

    def init_params(self, rng: np.random.Generator, dtype) -> None:
        limit = 1.0 / np.sqrt(self.in_units)
        self.params["W"] = rng.uniform(-limit, limit, (self.in_units, self.out_units)).astype(dtype)
        self.params["b"] = np.zeros(self.out_units, dtype=dtype)

    def forward(self, x: np.ndarray, train: bool):
        return x @ self.params["W"] + self.params["b"], x

    def backward(self, dout: np.ndarray, cache):
        x = cache
        grads = {"W": x.T @ dout, "b": dout.sum(axis=0)}
        return dout @ self.params["W"].T, grads


class Conv2DLayer:
    """2-D convolution, stride-1 layers keep spatial dims ('same' padding),
    strided layers use no padding."""

    def __init__(self, in_channels: int, filters: int, kernel: tuple[int, int], stride: int):
        self.in_channels = in_channels
        self.filters = filters
        self.kh, self.kw = kernel
        self.stride = stride
        self.pad_h = _same_padding(self.kh) if stride == 1 else (0, 0)
        self.pad_w = _same_padding(self.kw) if stride == 1 else (0, 0)
        self.params: dict[str, np.ndarray] = {}

    def init_params(self, rng: np.random.Generator, dtype) -> None:
        fan_in = self.kh * self.kw * self.in_channels
        limit = 1.0 / np.sqrt(fan_in)
        self.params["W"] = rng.uniform(
            -limit, limit, (self.kh, self.kw, self.in_channels, self.filters)
        ).astype(dtype)
        self.params["b"] = np.zeros(self.filters, dtype=dtype)

    def out_shape(self, h: int, w: int) -> tuple[int, int]:
        hp = h + sum(self.pad_h)
        wp = w + sum(self.pad_w)
        return (hp - self.kh) // self.stride + 1, (wp - self.kw) // self.stride + 1

    def forward(self, x: np.ndarray, train: bool):
        b, h, w, _ = x.shape
        oh, ow = self.out_shape(h, w)
        xp = np.pad(x, ((0, 0), self.pad_h, self.pad_w, (0, 0)))
        cols = _im2col(xp, self.kh, self.kw, self.stride, oh, ow)
        flat = cols.reshape(b, oh, ow, -1)
        wmat = self.params["W"].reshape(-1, self.filters)
        out = flat @ wmat + self.params["b"]
        return out, (flat, x.shape, xp.shape)

    def backward(self, dout: np.ndarray, cache):
        flat, x_shape, xp_shape = cache
        b, oh, ow, _ = dout.shape
        wmat = self.params["W"].reshape(-1, self.filters)
        dw = flat.reshape(-1, wmat.shape[0]).T @ dout.reshape(-1, self.filters)
        grads = {"W": dw.reshape(self.params["W"].shape), "b": dout.sum(axis=(0, 1, 2))}
        dflat = dout @ wmat.T
        dcols = dflat.reshape(b, oh, ow, self.kh, self.kw, self.in_channels)
        dxp = _col2im(dcols, xp_shape[1], xp_shape[2], self.kh, self.kw, self.stride)
        h, w = x_shape[1], x_shape[2]
        dx = dxp[:, self.pad_h[0] : self.pad_h[0] + h, self.pad_w[0] : self.pad_w[0] + w, :]
        return dx, grads


class ConvTranspose2DLayer:
    """Adjoint of :class:`Conv2DLayer` with matching kernel/stride/padding.

    ``output_hw`` pins the spatial output exactly (resolves the usual
    stride ambiguity), taken from the mirrored encoder layer's input.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: tuple[int, int],
        stride: int,
        output_hw: tuple[int, int],
    ):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kh, self.kw = kernel
        self.stride = stride
        self.output_hw = output_hw
        self.pad_h = _same_padding(self.kh) if stride == 1 else (0, 0)
        self.pad_w = _same_padding(self.kw) if stride == 1 else (0, 0)
        self.params: dict[str, np.ndarray] = {}

    def init_params(self, rng: np.random.Generator, dtype) -> None:
        fan_in = self.kh * self.kw * self.in_channels
        limit = 1.0 / np.sqrt(fan_in)
        # kernel laid out like the reference convolution output_hw -> input_hw
        self.params["W"] = rng.uniform(
            -limit, limit, (self.kh, self.kw, self.out_channels, self.in_channels)
        ).astype(dtype)
        self.params["b"] = np.zeros(self.out_channels, dtype=dtype)

    def forward(self, x: np.ndarray, train: bool):
        b, ih, iw, _ = x.shape
        oh, ow = self.output_hw
        hp = oh + sum(self.pad_h)
        wp = ow + sum(self.pad_w)
        wmat = self.params["W"].reshape(-1, self.in_channels)
        cols = (x @ wmat.T).reshape(b, ih, iw, self.kh, self.kw, self.out_channels)
        outp = _col2im(cols, hp, wp, self.kh, self.kw, self.stride)
        out = outp[:, self.pad_h[0] : self.pad_h[0] + oh, self.pad_w[0] : self.pad_w[0] + ow, :]
        return out + self.params["b"], x

    def backward(self, dout: np.ndarray, cache):
        x = cache
        b, ih, iw, _ = x.shape
        doutp = np.pad(dout, ((0, 0), self.pad_h, self.pad_w, (0, 0)))
        cols = _im2col(doutp, self.kh, self.kw, self.stride, ih, iw)
        flat = cols.reshape(b * ih * iw, -1)
        wmat = self.params["W"].reshape(-1, self.in_channels)
        dw = flat.T @ x.reshape(b * ih * iw, self.in_channels)
        grads = {"W": dw.reshape(self.params["W"].shape), "b": dout.sum(axis=(0, 1, 2))}
        dx = (flat @ wmat).reshape(b, ih, iw, self.in_channels)
        return dx, grads


class BatchNormLayer:
    """Batch normalization over every axis but the channel/feature axis.

    Train mode normalizes with batch statistics (biased variance) and blends
    them into the running statistics with the configured momentum; infer mode
    uses the running statistics only.
    """

    def __init__(self, features: int, momentum: float):
        self.features = features
        self.momentum = momentum
        self.params: dict[str, np.ndarray] = {}
        self.running_mean: np.ndarray | None = None
        self.running_var: np.ndarray | None = None

    def init_params(self, rng: np.random.Generator, dtype) -> None:
        self.params["gamma"] = np.ones(self.features, dtype=dtype)
        self.params["beta"] = np.zeros(self.features, dtype=dtype)
        self.running_mean = np.zeros(self.features, dtype=dtype)
        self.running_var = np.ones(self.features, dtype=dtype)

    def forward(self, x: np.ndarray, train: bool):
        axes = tuple(range(x.ndim - 1))
        if train:
            mu = x.mean(axis=axes)
            xc = x - mu
            var = (xc * xc).mean(axis=axes)
            inv = 1.0 / np.sqrt(var + BN_EPS)
            xhat = xc * inv
            m = self.momentum
            self.running_mean = (m * self.running_mean + (1.0 - m) * mu).astype(x.dtype)
            self.running_var = (m * self.running_var + (1.0 - m) * var).astype(x.dtype)
            cache = (xc, inv, xhat, axes)
        else:
            inv = 1.0 / np.sqrt(self.running_var + BN_EPS)
            xhat = (x - self.running_mean) * inv
            cache = None
        return self.params["gamma"] * xhat + self.params["beta"], cache

    def backward(self, dout: np.ndarray, cache):
        if cache is None:
            raise RuntimeError("batchnorm backward requires a train-mode forward")
        xc, inv, xhat, axes = cache
        m = float(np.prod([dout.shape[a] for a in axes]))
        grads = {
            "gamma": (dout * xhat).sum(axis=axes),
            "beta": dout.sum(axis=axes),
        }
        dxhat = dout * self.params["gamma"]
        dvar = (dxhat * xc).sum(axis=axes) * (-0.5) * inv**3
        dmu = -(dxhat.sum(axis=axes)) * inv + dvar * (-2.0 / m) * xc.sum(axis=axes)
        dx = dxhat * inv + dvar * (2.0 / m) * xc + dmu / m
        return dx, grads


class LeakyReLULayer:
    def __init__(self, slope: float):
        self.slope = slope
        self.params: dict[str, np.ndarray] = {}

    def init_params(self, rng, dtype) -> None:
        pass

    def forward(self, x: np.ndarray, train: bool):
        pos = x > 0
        return np.where(pos, x, self.slope * x), pos

    def backward(self, dout: np.ndarray, cache):
        pos = cache
        return np.where(pos, dout, self.slope * dout), {}


class FlattenLayer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}

    def init_params(self, rng, dtype) -> None:
        pass

    def forward(self, x: np.ndarray, train: bool):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dout: np.ndarray, cache):
        return dout.reshape(cache), {}


class ReshapeLayer:
    """Fixed reshape of the per-sample payload (batch axis untouched)."""

    def __init__(self, target: tuple[int, ...]):
        self.target = target
        self.params: dict[str, np.ndarray] = {}

    def init_params(self, rng, dtype) -> None:
        pass

    def forward(self, x: np.ndarray, train: bool):
        return x.reshape((x.shape[0],) + self.target), x.shape

    def backward(self, dout: np.ndarray, cache):
        return dout.reshape(cache), {}
