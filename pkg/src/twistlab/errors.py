"""Exception hierarchy shared by all twistlab modules."""


class TwistLabError(Exception):
    """Base class for every error raised by twistlab."""


class NotTransverse(TwistLabError):
    pass


class VerticalNotTransverse(NotTransverse):
    pass


class NotOrdered(TwistLabError):
    pass


class NotCoisotropic(TwistLabError):
    pass


class HypothesisViolated(TwistLabError):
    """Raised by :func:`twistlab.symplectic.pbilin_construct`.

    ``witness`` holds the vector K at which one of the two quadratic
    inequalities fails.
    """

    def __init__(self, message, witness=None, which=None):
        super().__init__(message)
        self.witness = witness
        self.which = which


class SolveDiverged(TwistLabError):
    pass


class TwistViolated(TwistLabError):
    pass


class ConvergenceError(TwistLabError):
    """Numerical non-convergence; the CLI maps this family to exit code 2."""


class NotConverged(ConvergenceError):
    def __init__(self, message, last_increment=None, history=None):
        super().__init__(message)
        self.last_increment = last_increment
        self.history = history


class NoConvergence(NotConverged):
    pass


class SaddleDetected(ConvergenceError):
    def __init__(self, message, config=None, min_eigenvalue=None):
        super().__init__(message)
        self.config = config
        self.min_eigenvalue = min_eigenvalue


class NotCritical(TwistLabError):
    pass


class OrbitMismatch(TwistLabError):
    pass


class ConjugatePoint(TwistLabError):
    pass


class MonotonicityViolation(TwistLabError):
    pass


class ReductionIllConditioned(TwistLabError):
    pass


class InsufficientSamples(TwistLabError):
    pass


class SkippedAllZero(TwistLabError):
    pass


class InvalidConfig(TwistLabError):
    pass
