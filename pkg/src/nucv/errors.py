"""Exception types shared across the package.

Each class carries a distinct CLI exit code so that ``nucv`` can report
parse, structural and numeric failures differently.
"""


class NucvError(Exception):
    exit_code = 1


class ConfigError(NucvError, ValueError):
    exit_code = 2


class ParseError(NucvError, ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    exit_code = 3

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class StructuralError(NucvError, ValueError):
    exit_code = 4


class InvalidCameraError(NucvError, ValueError):
    exit_code = 4


class InputShapeError(NucvError, ValueError):
    exit_code = 4


class NumericError(NucvError, ArithmeticError):
    """Non-finite values produced by a pipeline stage."""

    exit_code = 5

    def __init__(self, message, stage=None, affected=0):
        super().__init__(message)
        self.stage = stage
        self.affected = affected
