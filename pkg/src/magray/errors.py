"""Exception types shared across the toolkit."""


class MagrayError(Exception):
    """Base class for all toolkit errors."""


class ExprSyntaxError(MagrayError, ValueError):
    """Malformed expression text.

    Attributes
    ----------
    offset : int
        Byte offset into the source string where parsing failed.
    expected : tuple of str
        Token categories that would have been legal at that position.
    """

    def __init__(self, message, offset, expected=()):
        super().__init__(f"{message} at offset {offset}"
                         + (f" (expected one of: {', '.join(expected)})" if expected else ""))
        self.offset = offset
        self.expected = tuple(expected)


class UnknownIdentifier(MagrayError, ValueError):
    """Identifier outside the documented set {x, y, i, sin, cos, exp, log, sqrt, tanh}."""

    def __init__(self, name, offset):
        super().__init__(f"unknown identifier {name!r} at offset {offset}")
        self.name = name
        self.offset = offset


class SceneValidationError(MagrayError, ValueError):
    """Scene file rejected during load-time validation."""


class SkewHermitianViolation(SceneValidationError):
    """A connection or Higgs matrix failed the skew-Hermitian probe."""

    def __init__(self, field, point, norm):
        super().__init__(
            f"{field} is not skew-Hermitian: ||M + M*||_inf = {norm:.3e} at {point}")
        self.field = field
        self.point = point
        self.norm = norm


class RankMismatch(SceneValidationError):
    """Matrix-valued scene entry whose shape disagrees with the declared rank n."""

    def __init__(self, field, expected, got):
        super().__init__(f"{field}: expected shape {expected}, got {got}")
        self.field = field
        self.expected = expected
        self.got = got


class TrappedRay(MagrayError, RuntimeError):
    """Ray exceeded the trapping cutoff T_max without reaching the boundary."""

    def __init__(self, start, t_max):
        super().__init__(f"ray from {start} still inside the disk at t = {t_max}")
        self.start = start
        self.t_max = t_max


class BandLimitExceeded(MagrayError, ValueError):
    """Fiber band limit too close to the grid Nyquist frequency."""


class SolverStalled(MagrayError, RuntimeError):
    """Iterative solver failed to reach its residual target."""

    def __init__(self, message, residual, iterations):
        super().__init__(f"{message}: relative residual {residual:.3e} "
                         f"after {iterations} iterations")
        self.residual = residual
        self.iterations = iterations


class ResolutionTooCoarse(MagrayError, RuntimeError):
    """Numerical rank decision ambiguous at the current grid resolution."""


class FrequencyUnresolvable(MagrayError, ValueError):
    """Probe wave vector too large for the spatial grid."""

    def __init__(self, kappa, kmax):
        mag = (kappa[0] ** 2 + kappa[1] ** 2) ** 0.5
        super().__init__(f"|κ| = {mag:.3g} exceeds the resolvable "
                         f"limit {kmax:.3g} for this grid")
        self.kappa = tuple(kappa)
        self.kmax = kmax
