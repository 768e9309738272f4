"""Exception taxonomy shared by the whole package.

Every error raised by eventcube derives from :class:`EventCubeError` so the
CLI can map any data problem to a single exit code. Parse-style errors carry
the offending line number where one exists.
"""

from __future__ import annotations


class EventCubeError(Exception):
    """Base class for all eventcube errors."""


# --- ingest ---------------------------------------------------------------


class MissingHeader(EventCubeError):
    pass


class MalformedRow(EventCubeError):
    def __init__(self, line_no: int, detail: str = ""):
        self.line_no = line_no
        super().__init__(f"malformed row at line {line_no}" + (f": {detail}" if detail else ""))


class EmptyFile(EventCubeError):
    pass


class NonFiniteValue(EventCubeError):
    def __init__(self, line_no: int):
        self.line_no = line_no
        super().__init__(f"non-finite value at line {line_no}")


class NonPositiveModality(EventCubeError):
    pass


class TooFewEvents(EventCubeError):
    pass


class DuplicateSeriesId(EventCubeError):
    pass


class UnresolvablePath(EventCubeError):
    pass


class MalformedEntry(EventCubeError):
    def __init__(self, line_no: int, detail: str = ""):
        self.line_no = line_no
        super().__init__(f"malformed catalog entry at line {line_no}" + (f": {detail}" if detail else ""))


class TooSmall(EventCubeError):
    pass


# --- datagen --------------------------------------------------------------


class OutOfRange(EventCubeError):
    pass


class DegenerateModel(EventCubeError):
    pass


class IoFailure(EventCubeError):
    pass


# --- tensor / checkpoint files ---------------------------------------------


class BadMagic(EventCubeError):
    pass


class VersionMismatch(EventCubeError):
    pass


class TruncatedFile(EventCubeError):
    pass


class DimMismatch(EventCubeError):
    pass


class ArchMismatch(DimMismatch):
    """A model and a tensor (or checkpoint) disagree on input dimensions.

    Subclass of :class:`DimMismatch` so call sites documented to raise either
    name stay consistent.
    """


# --- sae -------------------------------------------------------------------


class ShapeInferenceFailure(EventCubeError):
    pass


class EmptySplit(EventCubeError):
    pass


class DivergedLoss(EventCubeError):
    pass


class MissingTensor(EventCubeError):
    def __init__(self, series_id: str):
        self.series_id = series_id
        super().__init__(f"no tensor for series {series_id!r}")


# --- embed / analyze --------------------------------------------------------


class TooFewPoints(EventCubeError):
    pass


class UnknownId(EventCubeError):
    pass


class KTooLarge(EventCubeError):
    pass


class DegenerateLabels(EventCubeError):
    pass


class ConstantTruth(EventCubeError):
    pass


class EmptyInput(EventCubeError):
    pass


class EmptyEmbedding(EventCubeError):
    pass
