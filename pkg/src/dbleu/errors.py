"""Exception types shared across the package."""

from __future__ import annotations


class DbleuError(Exception):
    """Base class for all errors raised by this package."""


class CorpusFormatError(DbleuError):
    """A corpus file could not be parsed or failed a record-level check."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = path if line is None else f"{path}:{line}"
            prefix += ": "
        super().__init__(prefix + message)


class StudyDataError(DbleuError):
    """Study inputs are inconsistent (unknown ids, missing coverage, bad ranges)."""


class IneligibleSegmentError(StudyDataError):
    """A segment has no strictly-positive-weight reference, so dBLEU refuses it."""

    def __init__(self, segment_ids):
        self.segment_ids = tuple(segment_ids)
        listed = ", ".join(self.segment_ids[:10])
        more = "" if len(self.segment_ids) <= 10 else f" (+{len(self.segment_ids) - 10} more)"
        super().__init__(
            f"dBLEU requires at least one reference with weight > 0 per segment; "
            f"violated by: {listed}{more}"
        )


class DegenerateStatisticsError(DbleuError):
    """A correlation is undefined (constant vector) on every sampled assignment."""
