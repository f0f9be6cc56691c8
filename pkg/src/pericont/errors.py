"""Exception hierarchy shared across the toolkit."""


class PericontError(Exception):
    """Base class for all toolkit errors."""


# --- expression language -------------------------------------------------

class ExpressionError(PericontError):
    pass


class ParseError(ExpressionError):
    """Syntax error; ``offset`` is the byte offset into the UTF-8 source."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class UnknownIdentifierError(ParseError):
    def __init__(self, name, offset):
        super().__init__(f"unknown identifier '{name}'", offset)
        self.name = name


class ArityError(ParseError):
    def __init__(self, func, expected, got, offset):
        super().__init__(f"function '{func}' takes {expected} argument(s), got {got}", offset)
        self.func = func


class MissingBindingError(ExpressionError):
    def __init__(self, name):
        super().__init__(f"no binding for variable '{name}'")
        self.name = name


class EvalDomainError(ExpressionError):
    """Math-domain violation during evaluation; carries the offending node."""

    def __init__(self, message, node):
        super().__init__(f"{message} in '{node}'")
        self.node = node


# --- regions and degree ---------------------------------------------------

class InvalidRegion(PericontError):
    pass


class ZeroOnBoundary(PericontError):
    def __init__(self, point, norm, zero_tol):
        super().__init__(
            f"|f| = {norm:.3e} <= zero_tol = {zero_tol:.3e} at boundary point {point}"
        )
        self.point = point
        self.norm = norm


class RefinementExhausted(PericontError):
    def __init__(self, rounds, worst_increment):
        super().__init__(
            f"boundary refinement exhausted after {rounds} rounds "
            f"(worst angle increment {worst_increment:.3f} rad)"
        )
        self.rounds = rounds
        self.worst_increment = worst_increment


class SingularJacobian(PericontError):
    def __init__(self, point, det):
        super().__init__(f"singular Jacobian (det = {det:.3e}) at zero {point}")
        self.point = point
        self.det = det


# --- averaging / mesh -----------------------------------------------------

class NonZeroMeanInput(PericontError):
    def __init__(self, mean_norm, tol):
        super().__init__(f"input mean sup-norm {mean_norm:.3e} exceeds tolerance {tol:.3e}")
        self.mean_norm = mean_norm


class DomainViolation(PericontError):
    """A state left the declared domain box/ball."""

    def __init__(self, message):
        super().__init__(message)


class RangeViolation(PericontError):
    pass


# --- operators ------------------------------------------------------------

class NewtonDivergence(PericontError):
    def __init__(self, best_residual, message="Newton inversion did not converge"):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


class MissingFactorization(PericontError):
    pass


# --- systems --------------------------------------------------------------

class DimensionMismatch(PericontError):
    pass


class DomainMissingOrigin(PericontError):
    pass


class EndpointMismatch(PericontError):
    pass


# --- BVP solver -----------------------------------------------------------

class ConvergenceFailure(PericontError):
    """Newton corrector failed; carries the best iterate seen."""

    def __init__(self, best_values, best_norm, iterations):
        super().__init__(
            f"corrector failed after {iterations} iteration(s), best residual {best_norm:.3e}"
        )
        self.best_values = best_values
        self.best_norm = best_norm
        self.iterations = iterations


class SingularLinearSolve(PericontError):
    pass


class NoStartingZero(PericontError):
    pass


# --- verification ---------------------------------------------------------

class MismatchDetected(PericontError):
    def __init__(self, direct, negated_product, plain_product):
        super().__init__(
            "degree product formula mismatch: "
            f"direct={direct}, negated_product={negated_product}, plain_product={plain_product}"
        )
        self.direct = direct
        self.negated_product = negated_product
        self.plain_product = plain_product


class PhiChecksFailed(PericontError):
    def __init__(self, failed):
        super().__init__(f"operator checks failed: {', '.join(failed)}")
        self.failed = failed


# --- configuration --------------------------------------------------------

class ConfigError(PericontError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
