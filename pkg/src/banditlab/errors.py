"""Error hierarchy shared across the platform.

Every error carries a stable ``code`` string so the HTTP layer and the CLI
can map failures without parsing messages.
"""

from __future__ import annotations


class BanditLabError(Exception):
    code = "ERROR"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)


class ConfigError(BanditLabError):
    code = "INVALID_CONFIG"


class CatalogError(BanditLabError):
    code = "INVALID_CATALOG"


class WrongPhaseError(BanditLabError):
    code = "WRONG_PHASE"


class DwellTooShortError(BanditLabError):
    code = "DWELL_TOO_SHORT"


class RatingOutOfRangeError(BanditLabError):
    code = "RATING_OUT_OF_RANGE"


class MissingGenreChoiceError(BanditLabError):
    code = "MISSING_GENRE_CHOICE"


class UnexpectedGenreChoiceError(BanditLabError):
    code = "UNEXPECTED_GENRE_CHOICE"


class InvalidStepError(BanditLabError):
    code = "INVALID_STEP"


class CatalogExhaustedError(BanditLabError):
    code = "CATALOG_EXHAUSTED"


class DuplicateCodeError(BanditLabError):
    code = "DUPLICATE_CODE"


class GateFailedError(BanditLabError):
    code = "GATE_FAILED"


class UnknownSessionError(BanditLabError):
    code = "UNKNOWN_SESSION"


class BadTokenError(BanditLabError):
    code = "BAD_TOKEN"


class UnbalancedPullsError(BanditLabError):
    code = "UNBALANCED_PULLS"


class DegenerateGroupsError(BanditLabError):
    code = "DEGENERATE_GROUPS"


class EmptyCellError(BanditLabError):
    code = "EMPTY_CELL"
