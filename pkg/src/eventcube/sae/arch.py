"""Architecture descriptors, shape inference and decoder mirroring.

An :class:`ArchSpec` lists only the encoder; the decoder is derived by
walking the encoder backwards, transposing each affine layer and pinning
convolution-transpose output shapes to the recorded encoder shapes. Hidden
layers get leaky-ReLU then batch normalization; the bottleneck keeps its
leaky-ReLU but is never normalized (normalizing it would fight the L1
penalty on the code); the decoder output layer is linear.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from ..errors import ShapeInferenceFailure


@dataclass(frozen=True)
class Dense:
    units: int


@dataclass(frozen=True)
class Conv2D:
    filters: int
    kernel: tuple[int, int]
    stride: int = 1


@dataclass(frozen=True)
class Flatten:
    pass


LayerSpec = Union[Dense, Conv2D, Flatten]


@dataclass(frozen=True)
class ArchSpec:
    input_dims: tuple[int, ...]
    layers: tuple[LayerSpec, ...]
    bottleneck_dim: int
    leaky_slope: float = 0.01
    batchnorm_momentum: float = 0.9

    def __post_init__(self) -> None:
        if len(self.input_dims) not in (2, 3):
            raise ShapeInferenceFailure("input_dims must be 2-D (map) or 3-D (cube)")
        if not self.layers or not isinstance(self.layers[-1], Dense):
            raise ShapeInferenceFailure("last encoder layer must be the dense bottleneck")
        if self.layers[-1].units != self.bottleneck_dim:
            raise ShapeInferenceFailure(
                f"bottleneck_dim={self.bottleneck_dim} but last dense layer has "
                f"{self.layers[-1].units} units"
            )
        if any(isinstance(l, Conv2D) for l in self.layers) and len(self.input_dims) != 2:
            raise ShapeInferenceFailure("conv layers are only valid for 2-D map inputs")
        infer_shapes(self)  # fail fast on inconsistent stacks


def _conv_out_hw(h: int, w: int, spec: Conv2D) -> tuple[int, int]:
    kh, kw = spec.kernel
    if spec.stride == 1:
        return h, w  # 'same' padding
    if kh > h or kw > w:
        raise ShapeInferenceFailure(f"kernel {spec.kernel} larger than input ({h},{w})")
    return (h - kh) // spec.stride + 1, (w - kw) // spec.stride + 1


def infer_shapes(arch: ArchSpec) -> list[tuple[int, ...]]:
    """Per-layer output shapes (sample shapes, no batch axis).

    Entry ``i`` is the output of ``arch.layers[i]``; spatial shapes are
    ``(h, w, channels)``, flat shapes ``(units,)``.
    """
    has_conv = any(isinstance(l, Conv2D) for l in arch.layers)
    shape: tuple[int, ...] = arch.input_dims
    if has_conv and len(shape) == 2:
        shape = shape + (1,)
    shapes: list[tuple[int, ...]] = []
    for spec in arch.layers:
        if isinstance(spec, Dense):
            if len(shape) != 1:
                raise ShapeInferenceFailure(
                    f"dense layer needs flat input, got shape {shape}; add a flatten layer"
                )
            shape = (spec.units,)
        elif isinstance(spec, Flatten):
            n = 1
            for d in shape:
                n *= d
            shape = (n,)
        elif isinstance(spec, Conv2D):
            if len(shape) != 3:
                raise ShapeInferenceFailure(f"conv layer needs spatial input, got shape {shape}")
            h, w = _conv_out_hw(shape[0], shape[1], spec)
            if h < 1 or w < 1:
                raise ShapeInferenceFailure(f"conv layer shrinks {shape} below 1x1")
            shape = (h, w, spec.filters)
        else:
            raise ShapeInferenceFailure(f"unknown layer spec {spec!r}")
        shapes.append(shape)
    return shapes


def cube_architecture(
    input_dims: tuple[int, int, int] = (24, 16, 16),
    hidden: tuple[int, ...] = (1536, 384, 92),
    bottleneck_dim: int = 24,
) -> ArchSpec:
    """Fully-connected stack for 3-D cube inputs (flatten, then dense)."""
    layers: tuple[LayerSpec, ...] = (Flatten(),) + tuple(Dense(u) for u in hidden) + (Dense(bottleneck_dim),)
    return ArchSpec(input_dims=input_dims, layers=layers, bottleneck_dim=bottleneck_dim)


def map_architecture(
    input_dims: tuple[int, int] = (24, 16),
    bottleneck_dim: int = 12,
) -> ArchSpec:
    """Convolutional stack for 2-D map inputs."""
    layers: tuple[LayerSpec, ...] = (
        Conv2D(filters=32, kernel=(3, 3), stride=1),
        Conv2D(filters=32, kernel=(2, 2), stride=2),
        Conv2D(filters=16, kernel=(3, 3), stride=1),
        Conv2D(filters=16, kernel=(2, 2), stride=2),
        Flatten(),
        Dense(192),
        Dense(48),
        Dense(bottleneck_dim),
    )
    return ArchSpec(input_dims=input_dims, layers=layers, bottleneck_dim=bottleneck_dim)


def arch_to_json(arch: ArchSpec) -> dict:
    out_layers = []
    for l in arch.layers:
        if isinstance(l, Dense):
            out_layers.append({"kind": "dense", "units": l.units})
        elif isinstance(l, Conv2D):
            out_layers.append(
                {"kind": "conv2d", "filters": l.filters, "kernel": list(l.kernel), "stride": l.stride}
            )
        else:
            out_layers.append({"kind": "flatten"})
    return {
        "input_dims": list(arch.input_dims),
        "layers": out_layers,
        "bottleneck_dim": arch.bottleneck_dim,
        "leaky_slope": arch.leaky_slope,
        "batchnorm_momentum": arch.batchnorm_momentum,
    }


def arch_from_json(obj: dict) -> ArchSpec:
    layers: list[LayerSpec] = []
    for l in obj["layers"]:
        if l["kind"] == "dense":
            layers.append(Dense(units=int(l["units"])))
        elif l["kind"] == "conv2d":
            layers.append(
                Conv2D(filters=int(l["filters"]), kernel=tuple(int(k) for k in l["kernel"]), stride=int(l["stride"]))
            )
        elif l["kind"] == "flatten":
            layers.append(Flatten())
        else:
            raise ShapeInferenceFailure(f"unknown layer kind {l['kind']!r}")
    return ArchSpec(
        input_dims=tuple(int(d) for d in obj["input_dims"]),
        layers=tuple(layers),
        bottleneck_dim=int(obj["bottleneck_dim"]),
        leaky_slope=float(obj.get("leaky_slope", 0.01)),
        batchnorm_momentum=float(obj.get("batchnorm_momentum", 0.9)),
    )
