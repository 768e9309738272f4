"""Turn irregular event series into fixed-size histogram tensors.

A series is normalized to three unit-range coordinates per event: elapsed
time fraction, transformed modality, and normalized inter-event gap. Binning
those produces a 2-D map (time x modality) or a 3-D cube (time x modality x
gap). The gap axis acts as a local event-rate proxy.

Conventions that make the tensors reproducible:

* bin index = min(floor(coord * n), n - 1), so coordinate 1.0 lands in the
  last bin;
* every event carries the gap that precedes it, and the first event borrows
  the first gap, so no event is dropped and raw-count tensors sum to N;
* degenerate denominators (zero duration, a single distinct modality value
  under per-series bounds, all gaps equal) map the affected coordinate to 0
  instead of erroring.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import (
    BadMagic,
    DimMismatch,
    NonPositiveModality,
    TooFewEvents,
    TruncatedFile,
    VersionMismatch,
)
from .ingest import EventSeries

MAGIC_CUBE = b"ETDT"
MAGIC_MAP = b"ETMP"
FORMAT_VERSION = 1

SCALING_CODES = {"raw": 0, "unit_sum": 1, "log1p": 2}
SCALING_NAMES = {v: k for k, v in SCALING_CODES.items()}


@dataclass(frozen=True)
class PerSeriesBounds:
    """Modality bounds taken from each series on its own."""


@dataclass(frozen=True)
class GlobalBounds:
    """Fixed modality bounds shared across the dataset (transformed units)."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError("global bounds need lo < hi")


ModalityBounds = Union[PerSeriesBounds, GlobalBounds]


@dataclass(frozen=True)
class BinningConfig:
    n_tau: int = 24
    n_eps: int = 16
    #: 0 selects map mode (2-D output)
    n_dtau: int = 16
    modality_transform: str = "log10"
    modality_bounds: ModalityBounds = PerSeriesBounds()
    count_scaling: str = "unit_sum"

    def __post_init__(self) -> None:
        if self.n_tau < 1 or self.n_eps < 1 or self.n_dtau < 0:
            raise ValueError("n_tau, n_eps must be >= 1 and n_dtau >= 0")
        if self.modality_transform not in ("log10", "identity"):
            raise ValueError(f"unknown modality_transform {self.modality_transform!r}")
        if self.count_scaling not in SCALING_CODES:
            raise ValueError(f"unknown count_scaling {self.count_scaling!r}")

    @property
    def map_mode(self) -> bool:
        return self.n_dtau == 0


@dataclass
class NormalizedSeries:
    """Per-event unit-range coordinates plus the modality bounds in use."""

    tau: np.ndarray
    eps: np.ndarray
    dtau: np.ndarray
    eps_min: float
    eps_max: float

    @property
    def n_events(self) -> int:
        return len(self.tau)


@dataclass
class CubeTensor:
    dims: tuple[int, int, int]
    values: np.ndarray  # (n_tau, n_eps, n_dtau), row-major, gap axis fastest
    series_id: str
    count_scaling: str = "raw"


@dataclass
class MapTensor:
    dims: tuple[int, int]
    values: np.ndarray  # (n_tau, n_eps)
    series_id: str
    count_scaling: str = "raw"


Tensor = Union[CubeTensor, MapTensor]


def transform_modality(energy: np.ndarray, cfg: BinningConfig) -> np.ndarray:
    if cfg.modality_transform == "log10":
        if np.any(energy <= 0):
            raise NonPositiveModality("log10 transform needs strictly positive modality values")
        return np.log10(energy)
    return np.asarray(energy, dtype=np.float64)


def normalize_series(s: EventSeries, cfg: BinningConfig, strict: bool = True) -> NormalizedSeries:
    """Map a validated series onto normalized (tau, eps, dtau) coordinates."""
    n = s.n_events
    if n < 2 and strict:
        raise TooFewEvents(f"{s.series_id}: need >= 2 events to normalize, got {n}")
    t = np.asarray(s.t, dtype=np.float64)
    duration = t[-1] - t[0]
    tau = (t - t[0]) / duration if duration > 0 else np.zeros(n)

    eps = transform_modality(np.asarray(s.energy, dtype=np.float64), cfg)
    if isinstance(cfg.modality_bounds, GlobalBounds):
        lo, hi = cfg.modality_bounds.lo, cfg.modality_bounds.hi
    else:
        lo, hi = float(eps.min()), float(eps.max())

    if n >= 2:
        gaps = np.diff(t)
        gap_lo, gap_hi = gaps.min(), gaps.max()
        if gap_hi > gap_lo:
            gap_coords = (gaps - gap_lo) / (gap_hi - gap_lo)
        else:
            gap_coords = np.zeros(n - 1)
        # event k inherits the gap before it; the first event borrows gap 0
        dtau = np.concatenate(([gap_coords[0]], gap_coords))
    else:
        dtau = np.zeros(n)
    return NormalizedSeries(tau=tau, eps=eps, dtau=dtau, eps_min=lo, eps_max=hi)


def _unit_bin(coords: np.ndarray, n: int) -> np.ndarray:
    """Bin indices for coordinates already in [0, 1]."""
    return np.minimum(np.floor(coords * n), n - 1).astype(np.int64)


def _modality_bin(eps: np.ndarray, lo: float, hi: float, n: int) -> np.ndarray:
    """Bin indices on [lo, hi]; out-of-bounds values clamp to the edge bins."""
    if hi > lo:
        u = (eps - lo) / (hi - lo)
    else:
        u = np.zeros_like(eps)
    idx = np.floor(u * n)
    return np.clip(idx, 0, n - 1).astype(np.int64)


def _scale_counts(counts: np.ndarray, scaling: str) -> np.ndarray:
    if scaling == "raw":
        return counts
    if scaling == "unit_sum":
        total = counts.sum()
        return counts / total if total > 0 else counts
    return np.log1p(counts)


def bin_cube(ns: NormalizedSeries, cfg: BinningConfig, series_id: str = "") -> CubeTensor:
    if cfg.n_dtau < 1:
        raise ValueError("bin_cube needs n_dtau >= 1; use bin_map for 2-D output")
    i = _unit_bin(ns.tau, cfg.n_tau)
    j = _modality_bin(ns.eps, ns.eps_min, ns.eps_max, cfg.n_eps)
    k = _unit_bin(ns.dtau, cfg.n_dtau)
    flat = (i * cfg.n_eps + j) * cfg.n_dtau + k
    counts = np.bincount(flat, minlength=cfg.n_tau * cfg.n_eps * cfg.n_dtau).astype(np.float64)
    values = _scale_counts(counts, cfg.count_scaling).reshape(cfg.n_tau, cfg.n_eps, cfg.n_dtau)
    return CubeTensor(
        dims=(cfg.n_tau, cfg.n_eps, cfg.n_dtau),
        values=values,
        series_id=series_id,
        count_scaling=cfg.count_scaling,
    )


def bin_map(ns: NormalizedSeries, cfg: BinningConfig, series_id: str = "") -> MapTensor:
    i = _unit_bin(ns.tau, cfg.n_tau)
    j = _modality_bin(ns.eps, ns.eps_min, ns.eps_max, cfg.n_eps)
    flat = i * cfg.n_eps + j
    counts = np.bincount(flat, minlength=cfg.n_tau * cfg.n_eps).astype(np.float64)
    values = _scale_counts(counts, cfg.count_scaling).reshape(cfg.n_tau, cfg.n_eps)
    return MapTensor(
        dims=(cfg.n_tau, cfg.n_eps),
        values=values,
        series_id=series_id,
        count_scaling=cfg.count_scaling,
    )


def tensorize_series(s: EventSeries, cfg: BinningConfig) -> Tensor:
    """normalize + bin in one call, map or cube depending on the config."""
    ns = normalize_series(s, cfg)
    if cfg.map_mode:
        return bin_map(ns, cfg, series_id=s.series_id)
    return bin_cube(ns, cfg, series_id=s.series_id)


# --- binary tensor file format ----------------------------------------------
#
# little-endian: magic (ETDT cube / ETMP map), u16 version, u8 scaling code,
# u32 per dim (3 or 2), u32 reserved, float32 payload (tau slowest), u16
# series_id byte length, series_id UTF-8.


def write_tensor(tensor: Tensor, path: str | Path) -> None:
    is_cube = isinstance(tensor, CubeTensor)
    magic = MAGIC_CUBE if is_cube else MAGIC_MAP
    dims = tensor.dims
    sid = tensor.series_id.encode("utf-8")
    parts = [
        magic,
        struct.pack("<H", FORMAT_VERSION),
        struct.pack("<B", SCALING_CODES[tensor.count_scaling]),
        struct.pack(f"<{len(dims)}I", *dims),
        struct.pack("<I", 0),
        np.ascontiguousarray(tensor.values, dtype="<f4").tobytes(),
        struct.pack("<H", len(sid)),
        sid,
    ]
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFile(f"{self.path}: expected {n} more bytes at offset {self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out


def read_tensor(path: str | Path) -> Tensor:
    path = Path(path)
    r = _Reader(path.read_bytes(), path)
    magic = r.take(4)
    if magic not in (MAGIC_CUBE, MAGIC_MAP):
        raise BadMagic(f"{path}: magic {magic!r}")
    (version,) = struct.unpack("<H", r.take(2))
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: version {version}, expected {FORMAT_VERSION}")
    (scaling_code,) = struct.unpack("<B", r.take(1))
    if scaling_code not in SCALING_NAMES:
        raise VersionMismatch(f"{path}: unknown count_scaling code {scaling_code}")
    ndim = 3 if magic == MAGIC_CUBE else 2
    dims = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
    if any(d < 1 for d in dims):
        raise DimMismatch(f"{path}: non-positive dims {dims}")
    r.take(4)  # reserved
    n_cells = int(np.prod(dims))
    payload = r.take(4 * n_cells)
    values = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float64)
    (sid_len,) = struct.unpack("<H", r.take(2))
    sid = r.take(sid_len).decode("utf-8")
    if r.pos != len(r.data):
        raise TruncatedFile(f"{path}: {len(r.data) - r.pos} unexpected trailing bytes")
    scaling = SCALING_NAMES[scaling_code]
    if magic == MAGIC_CUBE:
        return CubeTensor(dims=dims, values=values, series_id=sid, count_scaling=scaling)
    return MapTensor(dims=dims, values=values, series_id=sid, count_scaling=scaling)


def tensor_suffix(cfg: BinningConfig) -> str:
    return ".etmp" if cfg.map_mode else ".etdt"


def dataset_modality_bounds(series_list, cfg: BinningConfig) -> GlobalBounds:
    """Transformed-modality range over a whole dataset (the pipeline default)."""
    lo = np.inf
    hi = -np.inf
    for s in series_list:
        eps = transform_modality(np.asarray(s.energy, dtype=np.float64), cfg)
        lo = min(lo, float(eps.min()))
        hi = max(hi, float(eps.max()))
    if not lo < hi:
        # monochromatic dataset: widen so GlobalBounds stays constructible
        hi = lo + 1.0
    return GlobalBounds(lo=lo, hi=hi)
