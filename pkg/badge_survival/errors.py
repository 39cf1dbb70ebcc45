"""
Exception hierarchy shared by every badge_survival module
"""

from typing import Optional


class BadgeSurvivalError(Exception):
    """Base class for all library errors"""


class ConfigError(BadgeSurvivalError):
    """Invalid study configuration or configuration file"""


class DataError(BadgeSurvivalError):
    """Invalid, empty or malformed data"""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[str] = None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column '{column}'")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class FitError(BadgeSurvivalError):
    """The data carries no information for the requested fit"""
