"""Sparse autoencoder model: construction, forward/backward, loss, encode.

The model is a plain object tree of numpy layers. Parameters are addressed
by stable string keys like ``enc.3.W`` (declaration order), which the
optimizer and the checkpoint format both rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ArchMismatch, DimMismatch
from ..tensorize import CubeTensor, MapTensor
from .arch import ArchSpec, Conv2D, Dense, Flatten, infer_shapes
from .layers import (
    BatchNormLayer,
    Conv2DLayer,
    ConvTranspose2DLayer,
    DenseLayer,
    FlattenLayer,
    LeakyReLULayer,
    ReshapeLayer,
)


@dataclass
class LatentVector:
    z: np.ndarray
    series_id: str


@dataclass
class ForwardResult:
    z: np.ndarray
    x_hat: np.ndarray
    cache: tuple | None


@dataclass
class LossValues:
    total: float
    recon_mse: float
    l1_term: float


def _build_runtime(arch: ArchSpec):
    """Materialize encoder and decoder layer stacks from the encoder spec."""
    shapes = infer_shapes(arch)
    has_conv = any(isinstance(l, Conv2D) for l in arch.layers)
    in_shape = arch.input_dims + (1,) if (has_conv and len(arch.input_dims) == 2) else arch.input_dims

    encoder: list = []
    if in_shape != arch.input_dims:
        encoder.append(ReshapeLayer(in_shape))
    records: list[tuple] = []
    prev = in_shape
    n_layers = len(arch.layers)
    for idx, (spec, out_shape) in enumerate(zip(arch.layers, shapes)):
        if isinstance(spec, Dense):
            encoder.append(DenseLayer(prev[0], spec.units))
            affine_features = spec.units
        elif isinstance(spec, Conv2D):
            encoder.append(Conv2DLayer(prev[2], spec.filters, spec.kernel, spec.stride))
            affine_features = spec.filters
        else:
            encoder.append(FlattenLayer())
            affine_features = None
        if affine_features is not None:
            encoder.append(LeakyReLULayer(arch.leaky_slope))
            if idx < n_layers - 1:  # bottleneck stays unnormalized
                encoder.append(BatchNormLayer(affine_features, arch.batchnorm_momentum))
        records.append((spec, prev, out_shape))
        prev = out_shape

    decoder: list = []
    affine_records = [r for r in records if isinstance(r[0], (Dense, Conv2D))]
    n_affine = len(affine_records)
    seen_affine = 0
    for spec, spec_in, spec_out in reversed(records):
        if isinstance(spec, Dense):
            decoder.append(DenseLayer(spec_out[0], spec_in[0]))
            seen_affine += 1
            features = spec_in[0]
        elif isinstance(spec, Conv2D):
            decoder.append(
                ConvTranspose2DLayer(
                    in_channels=spec_out[2],
                    out_channels=spec_in[2],
                    kernel=spec.kernel,
                    stride=spec.stride,
                    output_hw=(spec_in[0], spec_in[1]),
                )
            )
            seen_affine += 1
            features = spec_in[2]
        else:
            decoder.append(ReshapeLayer(spec_in))
            continue
        if seen_affine < n_affine:
            decoder.append(LeakyReLULayer(arch.leaky_slope))
            decoder.append(BatchNormLayer(features, arch.batchnorm_momentum))
    if in_shape != arch.input_dims:
        decoder.append(ReshapeLayer(arch.input_dims))
    return encoder, decoder


class SaeModel:
    def __init__(self, arch: ArchSpec, rng_seed: int, dtype=np.float32):
        self.arch = arch
        self.rng_seed = rng_seed
        self.dtype = np.dtype(dtype)
        self.encoder, self.decoder = _build_runtime(arch)

    @property
    def input_dims(self) -> tuple[int, ...]:
        return self.arch.input_dims

    @property
    def bottleneck_dim(self) -> int:
        return self.arch.bottleneck_dim

    def _stacks(self):
        yield "enc", self.encoder
        yield "dec", self.decoder

    def named_params(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for prefix, stack in self._stacks():
            for i, layer in enumerate(stack):
                for name in sorted(layer.params):
                    out.append((f"{prefix}.{i}.{name}", layer.params[name]))
        return out

    def named_bn_state(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for prefix, stack in self._stacks():
            for i, layer in enumerate(stack):
                if isinstance(layer, BatchNormLayer):
                    out.append((f"{prefix}.{i}.running_mean", layer.running_mean))
                    out.append((f"{prefix}.{i}.running_var", layer.running_var))
        return out

    def set_param(self, key: str, value: np.ndarray) -> None:
        prefix, idx, name = key.split(".")
        stack = self.encoder if prefix == "enc" else self.decoder
        layer = stack[int(idx)]
        if name in ("running_mean", "running_var"):
            setattr(layer, name, value.astype(self.dtype))
        else:
            if layer.params[name].shape != value.shape:
                raise DimMismatch(f"{key}: expected {layer.params[name].shape}, got {value.shape}")
            layer.params[name] = value.astype(self.dtype)

    def state_snapshot(self) -> dict[str, np.ndarray]:
        snap = {k: v.copy() for k, v in self.named_params()}
        snap.update({k: v.copy() for k, v in self.named_bn_state()})
        return snap

    def load_snapshot(self, snap: dict[str, np.ndarray]) -> None:
        for key, value in snap.items():
            self.set_param(key, value)

    def param_count(self) -> int:
        return sum(int(v.size) for _, v in self.named_params())


def init_model(arch: ArchSpec, seed: int, dtype=np.float32) -> SaeModel:
    """Fresh model: fan-in-scaled uniform weights, zero biases, unit BN."""
    model = SaeModel(arch, rng_seed=seed, dtype=dtype)
    rng = np.random.default_rng(seed)
    for _, stack in model._stacks():
        for layer in stack:
            layer.init_params(rng, model.dtype)
    return model


def _run_stack(stack, x: np.ndarray, train: bool):
    caches = []
    for layer in stack:
        x, cache = layer.forward(x, train)
        caches.append(cache)
    return x, caches


def _check_batch(model: SaeModel, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=model.dtype)
    if batch.ndim != len(model.input_dims) + 1 or batch.shape[1:] != model.input_dims:
        raise DimMismatch(
            f"batch of shape {batch.shape} does not match input dims {model.input_dims}"
        )
    if batch.shape[0] == 0:
        raise DimMismatch("empty batch")
    return batch


def forward(model: SaeModel, batch: np.ndarray, mode: str = "train") -> ForwardResult:
    """Full pass: latent codes, reconstruction and (in train mode) caches."""
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    train = mode == "train"
    batch = _check_batch(model, batch)
    z, enc_caches = _run_stack(model.encoder, batch, train)
    x_hat, dec_caches = _run_stack(model.decoder, z, train)
    return ForwardResult(z=z, x_hat=x_hat, cache=(enc_caches, dec_caches) if train else None)


def sae_loss(x: np.ndarray, x_hat: np.ndarray, z: np.ndarray, lam: float) -> LossValues:
    """Batch-mean of per-item squared reconstruction error plus L1 code penalty."""
    if x.shape != x_hat.shape or x.shape[0] != z.shape[0]:
        raise DimMismatch("loss inputs disagree on shapes")
    b = x.shape[0]
    diff = (x_hat - x).reshape(b, -1)
    recon_mse = float(np.einsum("ij,ij->", diff, diff) / b)
    l1_term = float(np.abs(z).sum() / b)
    return LossValues(total=recon_mse + lam * l1_term, recon_mse=recon_mse, l1_term=l1_term)


def loss_gradients(x: np.ndarray, x_hat: np.ndarray, z: np.ndarray, lam: float):
    """d(total)/d(x_hat) and the direct d(total)/d(z) term (L1 subgradient,
    sign(0) = 0)."""
    b = x.shape[0]
    d_xhat = (2.0 / b) * (x_hat - x)
    d_z = (lam / b) * np.sign(z)
    return d_xhat, d_z


def backward(model: SaeModel, cache, d_xhat: np.ndarray, d_z: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Exact gradients of the objective for every parameter.

    ``cache`` must come from a train-mode forward; ``d_z`` carries the part of
    the loss that touches the code directly (the L1 term).
    """
    if cache is None:
        raise ValueError("backward needs the cache from a train-mode forward")
    enc_caches, dec_caches = cache
    grads: dict[str, np.ndarray] = {}
    g = np.asarray(d_xhat, dtype=model.dtype)
    for i in range(len(model.decoder) - 1, -1, -1):
        g, pg = model.decoder[i].backward(g, dec_caches[i])
        for name, value in pg.items():
            grads[f"dec.{i}.{name}"] = value
    if d_z is not None:
        g = g + np.asarray(d_z, dtype=model.dtype)
    for i in range(len(model.encoder) - 1, -1, -1):
        g, pg = model.encoder[i].backward(g, enc_caches[i])
        for name, value in pg.items():
            grads[f"enc.{i}.{name}"] = value
    return grads


def encode_batch(model: SaeModel, batch: np.ndarray) -> np.ndarray:
    """Infer-mode encoder output for a batch, decoder untouched."""
    batch = _check_batch(model, batch)
    z, _ = _run_stack(model.encoder, batch, train=False)
    return z


def encode(model: SaeModel, tensor) -> LatentVector:
    """Encode one tensor (or bare array) into its latent vector."""
    if isinstance(tensor, (CubeTensor, MapTensor)):
        values = tensor.values
        series_id = tensor.series_id
        if tuple(tensor.dims) != model.input_dims:
            raise ArchMismatch(
                f"tensor dims {tuple(tensor.dims)} do not match model input {model.input_dims}"
            )
    else:
        values = np.asarray(tensor)
        series_id = ""
        if values.shape != model.input_dims:
            raise ArchMismatch(
                f"array shape {values.shape} does not match model input {model.input_dims}"
            )
    z = encode_batch(model, values[None, ...])[0]
    return LatentVector(z=z, series_id=series_id)
