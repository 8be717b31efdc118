"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4. Everything else is a plain bug.
"""


class FreqgateError(Exception):
    pass


class ConfigError(FreqgateError):
    """Invalid configuration, model spec, or CLI arguments."""


class DataError(FreqgateError):
    """Corrupt, missing, or inconsistent data files."""


class ShapeError(FreqgateError):
    """Operands with incompatible shapes or ranks."""


class NumericalError(FreqgateError):
    """Non-finite values or degenerate statistics surfaced by an op."""

    def __init__(self, message, op=None, scope=None):
        self.op = op
        self.scope = scope
        where = "/".join(p for p in (scope, op) if p)
        super().__init__(f"{message} [{where}]" if where else message)
