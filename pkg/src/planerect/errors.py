"""Exception types shared across the package."""


class PlanerectError(Exception):
    pass


class InvalidDepthError(PlanerectError, ValueError):
    """Depth value is non-positive or non-finite."""


class OrientationError(PlanerectError, ValueError):
    """A normal does not face the camera where it should."""


class DegenerateGeometryError(PlanerectError, ValueError):
    """Point configuration is rank-deficient for the requested solver."""


class InsufficientMatchesError(PlanerectError, ValueError):
    """Too few correspondences for the requested estimator."""


class AmbiguousPoseError(PlanerectError, ValueError):
    """Cheirality cannot disambiguate the pose decomposition."""


class ManifestError(PlanerectError, ValueError):
    """Dataset manifest failed validation."""
