"""Error hierarchy shared by services and CLI handlers.

Every error carries a failure category and the process exit code the CLI
returns for it.
"""

from typing import Optional


class CBSFError(Exception):
    """Base class for all pipeline errors."""

    category: str = "internal"
    exit_code: int = 1

    def __init__(self, message: str) -> None:
        super().__init__(message)
        self.message = message


class ConfigError(CBSFError):
    """Invalid or inconsistent experiment configuration."""

    category = "config"
    exit_code = 2


class GroupError(CBSFError):
    """Invalid group request (unknown members, impossible sizes)."""

    category = "validation"
    exit_code = 2


class DatasetError(CBSFError):
    """Missing, empty or unreadable dataset file."""

    category = "io"
    exit_code = 3


class DatasetParseError(DatasetError):
    """A line of a rating or trust file does not match its declared format."""

    def __init__(self, path: str, line_number: int, detail: str) -> None:
        super().__init__(f"{path}:{line_number}: {detail}")
        self.path = path
        self.line_number = line_number


class SimilarityError(CBSFError):
    """A pair score cannot be computed (e.g. zero rating under UASim)."""

    category = "compute"
    exit_code = 4

    def __init__(self, message: str, pair: Optional[tuple[int, int]] = None) -> None:
        if pair is not None:
            message = f"pair ({pair[0]}, {pair[1]}): {message}"
        super().__init__(message)
        self.pair = pair
