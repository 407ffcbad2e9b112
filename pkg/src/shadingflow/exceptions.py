"""Exception and warning types shared across the package."""


class ShadingFlowError(Exception):
    """Base class for all package-specific errors."""


class BadInputError(ShadingFlowError):
    """Malformed specification, file, or argument."""


class ShadowedPoint(ShadingFlowError):
    """A light source has a nonpositive dot product with the normal, so the
    rendered intensity is clamped and its derivatives do not exist."""

    def __init__(self, light_index: int, value: float):
        self.light_index = light_index
        self.value = value
        super().__init__(
            f"light {light_index} is shadowed (L.N = {value:.6g} <= 0)"
        )


class BorderPixel(ShadingFlowError):
    """Pixel too close to the raster border for the derivative stencil."""


class DegenerateGradient(ShadingFlowError):
    """Brightness gradient below threshold; the isophote frame is undefined."""


class SingularHessian(ShadingFlowError):
    """Height Hessian is numerically singular; its inverse is required."""


class SingularFxx(ShadingFlowError):
    """The 1D relation divides by f_xx, which vanishes here."""


class NonCriticalPoint(ShadingFlowError):
    """Critical-point operation invoked where the gradient does not vanish."""


class Inconsistent(ShadingFlowError):
    """No real solution exists for the given normalized second derivatives."""


class RankDeficient(ShadingFlowError):
    """Normal matrix too ill-conditioned for light-source recovery."""


class SingularityEncountered(ShadingFlowError):
    """Integration of the 1D relation hit |f_xx| below threshold."""

    def __init__(self, x: float, fxx: float):
        self.x = x
        self.fxx = fxx
        super().__init__(
            f"|f_xx| = {abs(fxx):.3g} fell below threshold at x = {x:.6g}"
        )


class NoBracket(ShadingFlowError):
    """Shooting could not bracket the boundary target."""


class BoxBoundaryRootWarning(UserWarning):
    """A recovered root lies within 1% of the search-box boundary."""
