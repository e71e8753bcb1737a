"""Exception hierarchy.

Every error carries a short machine-readable ``category`` which the CLI
prints and maps to a process exit code.
"""


class NkgError(Exception):
    category = "error"
    exit_code = 1


class ShapeError(NkgError, ValueError):
    category = "shape"
    exit_code = 3


class InvalidTripleError(NkgError, IndexError):
    category = "index"
    exit_code = 3


class ConfigError(NkgError, ValueError):
    category = "config"
    exit_code = 2


class DataFormatError(NkgError, ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    category = "format"
    exit_code = 3

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.path = path
        self.line = line


class TrainingDivergedError(NkgError, FloatingPointError):
    category = "diverged"
    exit_code = 4

    def __init__(self, epoch, loss):
        super().__init__(f"loss became non-finite ({loss}) at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


class UncorruptableError(NkgError, ValueError):
    category = "uncorruptable"
    exit_code = 3


class BudgetExceededError(NkgError, RuntimeError):
    category = "budget"
    exit_code = 5
