"""rvector exception hierarchy."""
from typing import Iterable, Tuple

__author__ = "rvector Contributors"
__copyright__ = "Copyright 2026 rvector Contributors"
__license__ = "Apache License, Version 2.0"


class RVectorError(ValueError):
    pass


class AudioError(RVectorError):
    pass


class FeatureError(RVectorError):
    pass


class NetworkError(RVectorError):
    pass


class TrainingError(RVectorError):
    pass


class ScoringError(RVectorError):
    pass


class DegenerateCohortError(ScoringError):
    """Cohort scores for one side of a trial have zero spread."""

    def __init__(self, side: str) -> None:
        super().__init__(
            "{!r}-side cohort scores have zero standard deviation".format(side)
        )
        self.side = side


class MetricError(RVectorError):
    pass


class FormatError(RVectorError):
    pass


class BadMagicError(FormatError):
    def __init__(self, expected: bytes, found: bytes) -> None:
        super().__init__("Expecting magic {!r}, found {!r}".format(expected, found))
        self.expected = expected
        self.found = found


class TruncatedPayloadError(FormatError):
    pass


class DimensionMismatchError(FormatError):
    pass


class TrialFileError(RVectorError):
    def __init__(self, path: str, line_number: int, reason: str) -> None:
        super().__init__("{}:{}: {}".format(path, line_number, reason))
        self.path = path
        self.line_number = line_number


class MissingIdsError(RVectorError):
    def __init__(self, missing: Iterable[str]) -> None:
        self.missing: Tuple[str, ...] = tuple(sorted(set(missing)))
        super().__init__(
            "{} unresolvable id(s): {}".format(
                len(self.missing), ", ".join(self.missing)
            )
        )
