"""
Exception hierarchy for the KG embedding toolkit
"""
from typing import Any, Dict, Optional


class KGRepError(Exception):
    """Base class for every error raised by the toolkit"""


class TripletParseError(KGRepError):
    """A triplet file line could not be parsed"""

    def __init__(self, path: str, line_number: int, message: str):
        self.path = path
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {message}")


class VocabularyError(KGRepError):
    """A label is missing from a frozen vocabulary, or vocabularies disagree"""


class DimensionMismatchError(KGRepError):
    """Vector or matrix shapes do not match the model spec"""


class DegenerateMatrixError(KGRepError):
    """Gram-Schmidt met a rank-deficient matrix twice"""


class NonFiniteGradientError(KGRepError):
    """A training step produced NaN or infinite gradients"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(f"{message} {self.diagnostics}" if self.diagnostics else message)


class RankingQueryError(KGRepError):
    """A ranking query is malformed (e.g. truth entity not scored)"""


class CandidateDataError(KGRepError):
    """Candidate list data is missing or malformed"""

    def __init__(self, message: str, triplet_index: Optional[int] = None):
        self.triplet_index = triplet_index
        if triplet_index is not None:
            message = f"{message} (test triplet {triplet_index})"
        super().__init__(message)


class CheckpointError(KGRepError):
    """Checkpoint file is unreadable, truncated or inconsistent"""


class ConfigError(KGRepError):
    """Configuration is invalid or refers to missing files"""
