"""Exception taxonomy shared by the library and the command line.

Every error carries the exit code the CLI maps it to: 3 for I/O problems and
4 for data, shape and parameter problems. Usage errors (exit 2) are raised by
click itself.
"""


class SceneCamError(Exception):
    code = "error"
    exit_code = 4


class FormatError(SceneCamError, ValueError):
    code = "format"


class UnsupportedError(SceneCamError, ValueError):
    code = "unsupported"


class TooShortError(SceneCamError, ValueError):
    code = "too_short"


class ShapeError(SceneCamError, ValueError):
    code = "shape"


class ParameterError(SceneCamError, ValueError):
    code = "parameter"


class EmptyInputError(SceneCamError, ValueError):
    code = "empty_input"


class StateError(SceneCamError, RuntimeError):
    code = "state"


class ConfigError(SceneCamError, ValueError):
    code = "config"


class NotFoundError(SceneCamError, FileNotFoundError):
    code = "not_found"
    exit_code = 3


class ParseError(SceneCamError, ValueError):
    code = "parse"

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class DuplicatePathError(ParseError):
    code = "duplicate_path"

    def __init__(self, path: str, line_number: int | None = None):
        self.path = path
        super().__init__(f"duplicate audio path {path!r}", line_number)
