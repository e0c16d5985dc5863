"""Exception types raised across the package."""


class RollsimError(Exception):
    pass


# geometry
class PointBehindCamera(RollsimError, ValueError):
    """Camera-space depth of a point is not strictly positive."""


class NonPositiveDepth(RollsimError, ValueError):
    pass


# distortion
class OutsideWorkingRadius(RollsimError, ValueError):
    pass


class NoConvergence(RollsimError, ArithmeticError):
    pass


class DegenerateFit(RollsimError, ArithmeticError):
    pass


class InvalidDistortion(RollsimError, ValueError):
    """Coefficients make the distortion non-invertible inside the working radius."""


# shutter
class RowOutOfRange(RollsimError, IndexError):
    pass


class InfeasibleTiming(RollsimError, ValueError):
    pass


class Overconstrained(RollsimError, ValueError):
    pass


class Underconstrained(RollsimError, ValueError):
    pass


# motion
class OutsideValidityWindow(RollsimError, ValueError):
    pass


# simulator
class NotImagedThisFrame(RollsimError):
    pass


class MultipleSolutions(RollsimError):
    """Fast motion images the point on more than one row.

    The individual solutions are available on ``solutions`` as
    ``(pixel, time)`` pairs.
    """

    def __init__(self, solutions):
        self.solutions = solutions
        super().__init__(f"point imaged on {len(solutions)} rows in one frame")


class AnchorOutOfRange(RollsimError, IndexError):
    pass


# numerics
class RankDeficient(RollsimError, ArithmeticError):
    pass


class Diverged(RollsimError, ArithmeticError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class NoDominantBand(RollsimError):
    pass


class AmbiguousPhase(RollsimError):
    pass


# config / cli
class ConfigError(RollsimError, ValueError):
    """Config validation failure; ``path`` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")
