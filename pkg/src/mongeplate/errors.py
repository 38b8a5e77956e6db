"""Exception hierarchy shared by all modules."""


class MongePlateError(Exception):
    """Base class for every error raised by the package."""


class GridError(MongePlateError, ValueError):
    pass


class FeasibilityViolated(MongePlateError):
    """A routine that assumes ``det hess v = k`` received an infeasible field."""

    def __init__(self, violation: float, tol: float):
        self.violation = violation
        self.tol = tol
        super().__init__(f"constraint violation {violation:.3e} exceeds tolerance {tol:.3e}")


class NonConstantK(MongePlateError, ValueError):
    pass


class SignMismatch(MongePlateError, ValueError):
    pass


class NotElliptic(MongePlateError):
    """A coefficient field (or curvature datum) fails strict ellipticity."""

    def __init__(self, message: str, node: tuple[int, int] | None = None):
        self.node = node
        super().__init__(message if node is None else f"{message} at node {node}")


class SingularSystem(MongePlateError):
    pass


class Diverged(MongePlateError):
    pass


class LostConvexity(MongePlateError):
    pass


class MaxNewtonIterations(MongePlateError):
    pass


class SingularNormalEquations(MongePlateError):
    pass


class MaxOuterIterations(MongePlateError):
    pass


class LineSearchStalled(MongePlateError):
    pass


class ConfigError(MongePlateError):
    """Base for configuration problems; the CLI maps these to exit code 2."""


class ParseError(ConfigError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class ValidationError(ConfigError):
    def __init__(self, field: str, reason: str):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")
