"""Exception types raised across the package."""


class CfposeError(Exception):
    """Base class for all package-specific errors."""


class DegenerateDirectionError(CfposeError):
    """A direction vector collapsed below the degeneracy threshold before
    normalization, so the point carries no usable information for this pose.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ZeroSpreadError(CfposeError):
    """Point set has (near) zero spread; normalization is undefined."""


class NonFiniteError(CfposeError):
    """The objective became NaN/Inf. Carries the last finite iterate."""

    def __init__(self, message, last_theta=None):
        super().__init__(message)
        self.last_theta = last_theta


class NoConsensusError(CfposeError):
    """No RANSAC hypothesis reached the minimum inlier fraction."""

    def __init__(self, message, best_count=0, required=0):
        super().__init__(message)
        self.best_count = best_count
        self.required = required


class GenerationError(CfposeError):
    """Synthetic scene generation failed (e.g. too many points behind camera)."""


class EmptySegmentationError(CfposeError):
    """HSV threshold selected no pixels."""


class UnsupportedFormatError(CfposeError):
    """Image file format is not one of the supported ones."""


class CorruptFileError(CfposeError):
    """Image file exists but could not be decoded."""


class PointSetFormatError(CfposeError):
    """A point-set JSON document does not match the expected schema."""
