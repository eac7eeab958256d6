"""Exception hierarchy shared across the package."""


class CNLSError(Exception):
    """Base class for all package errors."""


class ValidationError(CNLSError, ValueError):
    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class GridMismatch(CNLSError, ValueError):
    pass


class NonFinite(CNLSError, FloatingPointError):
    def __init__(self, component, where=""):
        self.component = component
        msg = f"non-finite value in component {component}"
        if where:
            msg += f" ({where})"
        super().__init__(msg)


class DegenerateDenominator(CNLSError, ZeroDivisionError):
    pass


class ZeroState(CNLSError, ValueError):
    pass


class ZeroInteraction(CNLSError, ValueError):
    pass


class ContainmentLost(CNLSError):
    def __init__(self, ratio):
        self.ratio = ratio
        super().__init__(f"boundary/max amplitude ratio {ratio:.3e} exceeds 1e-10")


class NoBracket(CNLSError):
    pass


class NotConverged(CNLSError):
    def __init__(self, max_iter, best):
        self.max_iter = max_iter
        self.best = best
        super().__init__(
            f"no convergence in {max_iter} iterations "
            f"(best residual {best.el_residual:.3e})"
        )


class CollapseToZero(CNLSError):
    pass


class InsufficientSnapshots(CNLSError):
    pass


class ContradictionReport(CNLSError):
    """Observed dynamics contradict the predicted outcome."""

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


# serialization


class ParseError(CNLSError):
    def __init__(self, line, key, message=""):
        self.line = line
        self.key = key
        text = f"line {line}: key {key!r}"
        if message:
            text += f": {message}"
        super().__init__(text)


class SchemaMismatch(CNLSError):
    def __init__(self, line, message=""):
        self.line = line
        super().__init__(f"line {line}: {message or 'schema mismatch'}")


class BadMagic(CNLSError):
    pass


class VersionUnsupported(CNLSError):
    pass


class TruncatedPayload(CNLSError):
    def __init__(self, expected, actual):
        self.expected = expected
        self.actual = actual
        super().__init__(f"expected {expected} bytes, got {actual}")
