"""
Error reporting for the command line
Turns any exception into one machine-parsable stderr line plus an exit code.
"""

import logging
import traceback
from dataclasses import dataclass

import click
from pydantic import ValidationError

from scenecam.errors import SceneCamError

logger = logging.getLogger(__name__)

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DATA = 4


@dataclass(frozen=True)
class ErrorReport:
    code: str
    exit_code: int
    message: str

    def line(self) -> str:
        message = self.message.replace("\\", "\\\\").replace('"', '\\"').replace("\n", " ")
        return f'error code={self.code} exit={self.exit_code} message="{message}"'


class ErrorReporter:
    """Centralized error classification for the CLI"""

    def classify(self, error: BaseException) -> ErrorReport:
        if isinstance(error, SceneCamError):
            return ErrorReport(error.code, error.exit_code, str(error))
        if isinstance(error, ValidationError):
            return ErrorReport("parameter", EXIT_DATA, str(error))
        if isinstance(error, click.UsageError):
            return ErrorReport("usage", EXIT_USAGE, error.format_message())
        if isinstance(error, OSError):
            return ErrorReport("io", EXIT_IO, str(error))
        if isinstance(error, ValueError):
            return ErrorReport("data", EXIT_DATA, str(error))
        return ErrorReport("internal", EXIT_DATA, f"{error.__class__.__name__}: {error}")

    def report(self, error: BaseException) -> ErrorReport:
        """Log the traceback at debug level and emit the single error line."""
        report = self.classify(error)
        logger.debug("".join(traceback.format_exception(error)))
        click.echo(report.line(), err=True)
        return report


# Global instance
error_reporter = ErrorReporter()
