"""Exception hierarchy shared across the package."""


class RuleMineError(Exception):
    """Base class for all rulemine errors."""


class ConfigError(RuleMineError):
    """Invalid or inconsistent configuration values."""


class RewriteSpecError(ConfigError):
    """A categorical rewrite spec names a missing or non-binary predicate."""


class ParseError(RuleMineError):
    """Malformed input line; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ArityConflictError(RuleMineError):
    """A predicate was used with two different arities."""


class DataError(RuleMineError):
    """Input data is unusable (e.g. no facts, empty test set)."""


class PatternTooLargeError(RuleMineError):
    """Pattern exceeds the canonicalization node cap."""


class UndefinedPrecisionError(RuleMineError):
    """Rule precision is undefined because the body has no groundings."""


class SizeGuardError(RuleMineError):
    """Exhaustive enumeration was requested on an oversized input."""
