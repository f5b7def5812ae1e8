"""Exception hierarchy.

Every error raised by the library derives from :class:`WeylScaleError`.
Numerical breakdowns additionally derive from :class:`NumericError`, which
the batch runner maps to exit code 3.
"""


class WeylScaleError(Exception):
    pass


class NumericError(WeylScaleError):
    pass


# time scales
class NonMonotone(WeylScaleError, ValueError):
    pass


class MissingPrepoint(WeylScaleError, ValueError):
    pass


class EmptyInterval(WeylScaleError, ValueError):
    pass


class IndexOutOfRange(WeylScaleError, IndexError):
    pass


# dense matrices
class NonSquare(WeylScaleError, ValueError):
    pass


class NotHermitian(WeylScaleError, ValueError):
    pass


class IndefiniteInput(NumericError, ValueError):
    pass


class DimensionMismatch(WeylScaleError, ValueError):
    pass


class IllConditioned(NumericError):
    pass


# propagation
class SingularAt(NumericError):
    def __init__(self, t, factor, cond=None):
        self.t = t
        self.factor = factor
        self.cond = cond
        msg = f"{factor} is singular at t={t!r}"
        if cond is not None:
            msg += f" (condition {cond:.3e})"
        super().__init__(msg)


class SingularE2(SingularAt):
    def __init__(self, t, cond=None):
        super().__init__(t, "I + mu*B2", cond)


class IntegratorFailure(NumericError):
    pass


class AdjointMismatch(NumericError):
    pass


class MissingSigmaSample(WeylScaleError, IndexError):
    pass


# Weyl-Sims sets
class SingularU(WeylScaleError, ValueError):
    pass


class DiskUndefined(NumericError):
    pass


class NegativeRadius(NumericError):
    pass


class NotContraction(WeylScaleError, ValueError):
    pass


class ConeViolation(NumericError):
    def __init__(self, lam, margin):
        self.lam = lam
        self.margin = margin
        super().__init__(f"lambda={lam!r} is outside the cone (margin {margin:.6g} <= 0)")


class EpsilonOutOfRange(WeylScaleError, ValueError):
    pass


# problem builders
class ZeroCoefficient(WeylScaleError, ValueError):
    """A leading coefficient (p, p2, p_n) vanishes on the grid."""


ZeroP = ZeroP2 = ZeroPn = ZeroCoefficient


class NonPositiveW(WeylScaleError, ValueError):
    pass


class LengthMismatch(WeylScaleError, ValueError):
    pass


class NonPositiveParams(WeylScaleError, ValueError):
    pass


class VariantMismatch(WeylScaleError, ValueError):
    pass


class ConfigError(WeylScaleError, ValueError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")
