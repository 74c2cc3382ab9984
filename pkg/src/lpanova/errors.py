"""Exception hierarchy.

Numerical failures (bad window, singular design, degenerate test) derive from
``NumericalError`` so the CLI can map them to exit status 2; malformed input
derives from ``InputError`` (exit status 1).
"""


class LpAnovaError(Exception):
    """Base class for all package errors."""


class InputError(LpAnovaError, ValueError):
    """Invalid user input: malformed file, bad flag, inconsistent shapes."""


class NumericalError(LpAnovaError, ArithmeticError):
    """A computation could not be carried out for the given data/config."""


class EmptyWindow(NumericalError):
    """No observation carries positive kernel weight at a grid point."""

    def __init__(self, x0, index=None):
        self.x0 = x0
        self.index = index
        where = f" (grid index {index})" if index is not None else ""
        super().__init__(f"empty kernel window at x0={x0:.6g}{where}")


class SingularDesign(NumericalError):
    """The local weighted design is rank deficient or too ill-conditioned.

    Usually means the bandwidth is too small at ``x0``.
    """

    def __init__(self, x0, index=None, reason=""):
        self.x0 = x0
        self.index = index
        where = f" (grid index {index})" if index is not None else ""
        msg = f"singular local design at x0={x0:.6g}{where}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class UndefinedR2(NumericalError):
    """Total sum of squares is (numerically) zero, so R^2 is 0/0."""


class AllPointsInfeasible(NumericalError):
    """Fewer than two grid points produced a usable local ANOVA."""


class NonpositiveDenominator(NumericalError):
    """The F statistic denominator is not positive."""


class DegenerateDf(NumericalError):
    """Model or residual degrees of freedom are not positive."""


class QuadratureError(NumericalError):
    """A numeric integral failed to reach the requested accuracy."""

    def __init__(self, what, achieved):
        self.achieved = achieved
        super().__init__(f"quadrature for {what} did not converge (error estimate {achieved:.3g})")


class GridFailures(NumericalError):
    """One or more grid points failed during a sweep.

    ``failures`` maps grid index to the per-point exception.
    """

    def __init__(self, failures):
        self.failures = dict(failures)
        idx = sorted(self.failures)
        shown = ", ".join(str(i) for i in idx[:10])
        more = "" if len(idx) <= 10 else f", ... ({len(idx)} total)"
        super().__init__(f"local fit failed at grid indices {shown}{more}")
