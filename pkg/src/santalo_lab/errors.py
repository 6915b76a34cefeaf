"""Exception hierarchy shared by every module of the package."""


class SantaloLabError(Exception):
    """Base class for all errors raised by santalo_lab."""


# geometry
class OriginNotInterior(SantaloLabError):
    """The origin is not an interior point of the body."""


class DegenerateBody(SantaloLabError):
    """The body has empty interior or is unbounded."""


# santalo
class PointOutside(SantaloLabError):
    """The evaluation point lies outside the interior of the body."""


class DivergentIntegral(SantaloLabError):
    """The polar-volume integrand is not integrable at the requested point."""


class MaxIterations(SantaloLabError):
    """An iterative solver stopped before reaching its tolerance.

    The best iterate found so far is attached as ``best``.
    """

    def __init__(self, iterations, best=None, message=None):
        self.iterations = iterations
        self.best = best
        super().__init__(message or f"no convergence after {iterations} iterations")


# sconcave
class EmptySupport(SantaloLabError):
    """The grid function vanishes identically."""


class InadmissibleS(SantaloLabError):
    """The concavity parameter s is not larger than -1/n."""


class UnboundedDual(SantaloLabError):
    """The dual function does not decay inside the sampling window."""


class NonPositive(SantaloLabError):
    """A strictly positive function was expected."""


class NotUnconditional(SantaloLabError):
    """The function is not invariant under coordinate reflections."""


class NotInClass(SantaloLabError):
    """The function fails a discrete class-membership test."""


# measures
class NotAdmissible(SantaloLabError):
    """The weight function violates monotonicity, log-convexity or integrability."""


class GridMismatch(SantaloLabError):
    """Two measures are not defined on the same grid or support."""


class EquatorPoint(SantaloLabError):
    """A point on or below the equator cannot be sent to the plane."""


# transport
class OutsideBall(SantaloLabError):
    """A point lies outside the open ball where the cost is defined."""


class NotUnit(SantaloLabError):
    """A point that should lie on the unit sphere does not."""


class Infeasible(SantaloLabError):
    """No coupling of the marginals has finite cost."""


class DegenerateInput(SantaloLabError):
    """Marginals with zero or mismatched total mass."""


class NotConverged(SantaloLabError):
    """Sinkhorn iterations did not reach the requested marginal residual."""

    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"residual {residual:.3e} after {iterations} iterations")


# sphere
class NotSymmetric(SantaloLabError):
    """The body or measure is not centrally symmetric."""


class NotUnitVolume(SantaloLabError):
    """The body does not have volume one."""


class NotConcentrated(SantaloLabError):
    """The measure violates the subspace concentration condition."""


class EmptySet(SantaloLabError):
    """A node subset is empty."""


# linearize
class NotStrictlyConvex(SantaloLabError):
    """The weight is not strictly log-concave in logarithmic radius."""


class NotEven(SantaloLabError):
    """The function is not even."""


# harness
class ConfigInvalid(SantaloLabError):
    """A configuration file is malformed."""


class UnknownSuite(SantaloLabError):
    """The requested suite name does not exist."""
