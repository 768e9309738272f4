"""Event-series parsing, validation and dataset cataloguing.

On-disk layout shared by every other module:

* event CSV: UTF-8, header ``time,energy``, LF endings, one decimal pair per row
* catalog JSONL: one JSON object per line with keys ``series_id``, ``file``
  and optional ``labels``
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateSeriesId,
    EmptyFile,
    MalformedEntry,
    MalformedRow,
    MissingHeader,
    NonFiniteValue,
    NonPositiveModality,
    TooFewEvents,
    TooSmall,
    UnresolvablePath,
)

EVENT_CSV_HEADER = "time,energy"


@dataclass
class EventSeries:
    """One irregular event sequence: timestamps plus a modality value each.

    ``labels`` may carry ``variability_index`` (0..10), ``hardness_ratio``
    (-1..1) and ``class_tag`` when known.
    """

    series_id: str
    t: np.ndarray
    energy: np.ndarray
    labels: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, dtype=np.float64)
        self.energy = np.asarray(self.energy, dtype=np.float64)
        if self.t.ndim != 1 or self.energy.ndim != 1:
            raise ValueError("timestamps and energies must be 1-D")
        if len(self.t) != len(self.energy):
            raise ValueError("timestamps and energies must have equal length")
        if len(self.t) == 0:
            raise ValueError("an EventSeries holds at least one event")

    @property
    def n_events(self) -> int:
        return len(self.t)

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])


@dataclass(frozen=True)
class ValidationPolicy:
    min_events: int = 2
    #: reject non-positive modality values (required when a log transform is
    #: configured downstream)
    require_positive_modality: bool = True


@dataclass(frozen=True)
class CatalogEntry:
    series_id: str
    file_path: Path
    labels: dict = field(default_factory=dict)


@dataclass
class Catalog:
    entries: list[CatalogEntry]
    dataset_root: Path

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def ids(self) -> list[str]:
        return [e.series_id for e in self.entries]


@dataclass
class CatalogSplits:
    train: Catalog
    val: Catalog
    test: Catalog


def parse_event_csv(path: str | Path) -> EventSeries:
    """Read one event CSV verbatim; rows keep file order, nothing is sorted."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":  # trailing newline
        lines.pop()
    if not lines or lines[0].strip() != EVENT_CSV_HEADER:
        raise MissingHeader(f"{path}: first line must be '{EVENT_CSV_HEADER}'")
    if len(lines) == 1:
        raise EmptyFile(f"{path}: no data rows")
    times: list[float] = []
    energies: list[float] = []
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 2:
            raise MalformedRow(i, f"expected 2 fields, got {len(parts)}")
        try:
            t = float(parts[0])
            e = float(parts[1])
        except ValueError:
            raise MalformedRow(i, line) from None
        if not (math.isfinite(t) and math.isfinite(e)):
            raise NonFiniteValue(i)
        times.append(t)
        energies.append(e)
    return EventSeries(series_id=path.stem, t=np.array(times), energy=np.array(energies))


def write_event_csv(series: EventSeries, path: str | Path) -> None:
    """Inverse of :func:`parse_event_csv`; floats are written with
    shortest round-tripping repr so parse(write(s)) is bit-exact."""
    path = Path(path)
    rows = [EVENT_CSV_HEADER]
    rows.extend(f"{repr(float(t))},{repr(float(e))}" for t, e in zip(series.t, series.energy))
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


def validate_series(raw: EventSeries, policy: ValidationPolicy = ValidationPolicy()) -> EventSeries:
    """Sort events by timestamp (stable, modality carried along) and check policy.

    Exact-duplicate timestamps are kept: detectors can record simultaneous
    events, and dropping them would change both the event count and the
    inter-event gaps.
    """
    if raw.n_events < policy.min_events:
        raise TooFewEvents(
            f"{raw.series_id}: {raw.n_events} events < min_events={policy.min_events}"
        )
    if policy.require_positive_modality and np.any(raw.energy <= 0):
        raise NonPositiveModality(f"{raw.series_id}: modality values must be > 0")
    order = np.argsort(raw.t, kind="stable")
    return EventSeries(
        series_id=raw.series_id,
        t=raw.t[order],
        energy=raw.energy[order],
        labels=dict(raw.labels),
    )


def load_catalog(path: str | Path) -> Catalog:
    """Read a JSONL catalog; relative file paths resolve against the JSONL dir."""
    path = Path(path)
    root = path.resolve().parent
    entries: list[CatalogEntry] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedEntry(i, str(exc)) from None
            if not isinstance(obj, dict) or "series_id" not in obj or "file" not in obj:
                raise MalformedEntry(i, "entry needs 'series_id' and 'file'")
            sid = obj["series_id"]
            if not isinstance(sid, str):
                raise MalformedEntry(i, "'series_id' must be a string")
            if sid in seen:
                raise DuplicateSeriesId(f"{sid!r} appears more than once")
            seen.add(sid)
            fp = Path(obj["file"])
            if not fp.is_absolute():
                fp = root / fp
            if not fp.exists():
                raise UnresolvablePath(f"line {i}: {fp} does not exist")
            labels = obj.get("labels", {})
            if not isinstance(labels, dict):
                raise MalformedEntry(i, "'labels' must be an object")
            entries.append(CatalogEntry(series_id=sid, file_path=fp.resolve(), labels=labels))
    return Catalog(entries=entries, dataset_root=root)


def save_catalog(catalog: Catalog, path: str | Path) -> None:
    path = Path(path)
    root = path.resolve().parent
    with path.open("w", encoding="utf-8") as fh:
        for e in catalog.entries:
            try:
                file_ref = str(e.file_path.relative_to(root))
            except ValueError:
                file_ref = str(e.file_path)
            obj: dict = {"series_id": e.series_id, "file": file_ref}
            if e.labels:
                obj["labels"] = e.labels
            fh.write(json.dumps(obj) + "\n")


def split_catalog(catalog: Catalog, seed: int) -> CatalogSplits:
    """Deterministic train/val/test partition.

    The shuffled catalog is first cut 90/10 into (train+val)/test, then the
    first part 80/20 into train/val. Sizes use integer floor on the
    first-listed side, so 95,473 entries yield 68,740 / 17,185 / 9,548.
    """
    n = len(catalog)
    if n < 10:
        raise TooSmall(f"need at least 10 entries to split, got {n}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    shuffled = [catalog.entries[i] for i in order]
    n_trainval = (9 * n) // 10
    n_train = (8 * n_trainval) // 10
    train = shuffled[:n_train]
    val = shuffled[n_train:n_trainval]
    test = shuffled[n_trainval:]
    root = catalog.dataset_root
    return CatalogSplits(
        train=Catalog(entries=train, dataset_root=root),
        val=Catalog(entries=val, dataset_root=root),
        test=Catalog(entries=test, dataset_root=root),
    )
