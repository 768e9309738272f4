"""Synthetic event-series generator: steady, flare, dip and pulsating sources.

Events are drawn from an inhomogeneous Poisson process by thinning against
the peak rate; each accepted event gets a log-normally distributed modality
value. Everything is deterministic given the model seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DegenerateModel, IoFailure, OutOfRange
from .ingest import Catalog, CatalogEntry, EventSeries, save_catalog, write_event_csv

KINDS = ("steady", "flare", "dip", "pulsating")


@dataclass(frozen=True)
class Spectrum:
    """Log-normal modality distribution: value = 10**Normal(mean, sigma)."""

    log10_mean: float = 3.2
    log10_sigma: float = 0.25


@dataclass(frozen=True)
class SourceModel:
    kind: str
    base_rate: float  # events / second
    duration: float  # seconds
    shape_params: dict = field(default_factory=dict)
    spectrum: Spectrum = Spectrum()
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.base_rate < 0 or self.duration <= 0:
            raise ValueError("base_rate must be >= 0 and duration > 0")
        if self.kind == "dip" and not 0 < self.shape_params.get("depth", 0.5) <= 1:
            raise ValueError("dip depth must lie in (0, 1]")
        if self.kind == "pulsating" and not 0 < self.shape_params.get("modulation_fraction", 0.5) < 1:
            raise ValueError("modulation_fraction must lie in (0, 1)")


def rate_at(model: SourceModel, t: float) -> float:
    """Instantaneous event rate lambda(t), t in [0, duration]."""
    if t < 0 or t > model.duration:
        raise OutOfRange(f"t={t} outside [0, {model.duration}]")
    p = model.shape_params
    if model.kind == "steady":
        return model.base_rate
    if model.kind == "flare":
        amp = p["peak_amplitude"]
        rise = p["rise_time"]
        decay = p["decay_time"]
        onset = p.get("onset_fraction", 0.3) * model.duration
        peak = onset + rise
        if t < onset:
            return model.base_rate
        if t <= peak:
            return model.base_rate + amp * (t - onset) / rise
        return model.base_rate + amp * math.exp(-(t - peak) / decay)
    if model.kind == "dip":
        start = p.get("start_fraction", 0.4) * model.duration
        width = p.get("width_fraction", 0.2) * model.duration
        if start <= t <= start + width:
            return model.base_rate * (1.0 - p["depth"])
        return model.base_rate
    # pulsating
    mf = p["modulation_fraction"]
    period = p["period"]
    return model.base_rate * (1.0 + mf * math.sin(2.0 * math.pi * t / period))


def peak_rate(model: SourceModel) -> float:
    """Supremum of lambda over [0, duration]; the thinning envelope."""
    if model.kind == "flare":
        return model.base_rate + model.shape_params["peak_amplitude"]
    if model.kind == "pulsating":
        return model.base_rate * (1.0 + model.shape_params["modulation_fraction"])
    return model.base_rate


def sample_series(model: SourceModel, series_id: str | None = None) -> EventSeries:
    """Sample one series by Poisson thinning.

    Candidate arrivals come from a homogeneous process at the peak rate; each
    is kept with probability lambda(t)/lambda_max. Modality values follow the
    model spectrum. The class tag is recorded as a label.
    """
    lam_max = peak_rate(model)
    if lam_max <= 0:
        raise DegenerateModel(f"{model.kind}: peak rate is zero")
    rng = np.random.default_rng(model.seed)
    times: list[float] = []
    t = 0.0
    while True:
        t += rng.exponential(1.0 / lam_max)
        if t > model.duration:
            break
        if rng.uniform() * lam_max <= rate_at(model, t):
            times.append(t)
    if not times:
        raise DegenerateModel(
            f"{model.kind}: no events sampled over duration {model.duration}"
        )
    energies = 10.0 ** rng.normal(model.spectrum.log10_mean, model.spectrum.log10_sigma, len(times))
    sid = series_id if series_id is not None else f"{model.kind}_{model.seed}"
    return EventSeries(
        series_id=sid,
        t=np.asarray(times),
        energy=energies,
        labels={"class_tag": model.kind},
    )


def synthetic_labels(model: SourceModel, rng: np.random.Generator) -> dict:
    """Plant label columns a downstream prediction head can recover.

    Steady sources get a low variability index, transients a high one; the
    hardness ratio tracks the spectral mean so it is readable from the
    energy histogram.
    """
    if model.kind == "steady":
        vi = float(np.clip(rng.normal(1.5, 0.8), 0.0, 10.0))
    else:
        vi = float(np.clip(rng.normal(8.0, 0.8), 0.0, 10.0))
    hr = float(np.clip(math.tanh(1.5 * (model.spectrum.log10_mean - 3.2)) + rng.normal(0.0, 0.05), -1.0, 1.0))
    return {"class_tag": model.kind, "variability_index": vi, "hardness_ratio": hr}


def default_class_models(duration: float = 2000.0, master_seed: int = 0) -> dict[str, SourceModel]:
    """The four stock classes used by tests and the `gen` CLI command."""
    return {
        "steady": SourceModel(
            kind="steady", base_rate=0.5, duration=duration,
            spectrum=Spectrum(log10_mean=3.2), seed=master_seed,
        ),
        "flare": SourceModel(
            kind="flare", base_rate=0.3, duration=duration,
            shape_params={"peak_amplitude": 3.0, "rise_time": 0.03 * duration,
                          "decay_time": 0.1 * duration, "onset_fraction": 0.3},
            spectrum=Spectrum(log10_mean=3.5), seed=master_seed,
        ),
        "dip": SourceModel(
            kind="dip", base_rate=0.8, duration=duration,
            shape_params={"depth": 0.9, "start_fraction": 0.4, "width_fraction": 0.25},
            spectrum=Spectrum(log10_mean=3.0), seed=master_seed,
        ),
        "pulsating": SourceModel(
            kind="pulsating", base_rate=0.5, duration=duration,
            shape_params={"modulation_fraction": 0.9, "period": duration / 8.0},
            spectrum=Spectrum(log10_mean=3.35), seed=master_seed,
        ),
    }


def generate_dataset(spec: list[tuple[SourceModel, int]], root: str | Path) -> Catalog:
    """Write event CSVs plus a catalog JSONL under ``root``.

    Per-series seeds derive deterministically from each model's seed and the
    series index, so reruns produce byte-identical files.
    """
    root = Path(root)
    events_dir = root / "events"
    try:
        events_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    entries: list[CatalogEntry] = []
    for model, count in spec:
        if count < 1:
            raise ValueError("per-model count must be >= 1")
        for i in range(count):
            seed_seq = np.random.SeedSequence((model.seed, i))
            child_seed = int(seed_seq.generate_state(1)[0])
            sid = f"{model.kind}_{i:04d}"
            m = replace(model, seed=child_seed)
            series = sample_series(m, series_id=sid)
            label_rng = np.random.default_rng(np.random.SeedSequence((model.seed, i, 1)))
            series.labels = synthetic_labels(m, label_rng)
            file_path = events_dir / f"{sid}.csv"
            try:
                write_event_csv(series, file_path)
            except OSError as exc:
                raise IoFailure(str(exc)) from exc
            entries.append(CatalogEntry(series_id=sid, file_path=file_path.resolve(), labels=series.labels))
    catalog = Catalog(entries=entries, dataset_root=root.resolve())
    try:
        save_catalog(catalog, root / "catalog.jsonl")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return catalog
