"""Exception hierarchy shared by all glossforge modules."""


class GlossforgeError(Exception):
    """Base class for every error raised by this package."""


class OpticsDomainError(GlossforgeError, ValueError):
    """Angle or medium outside the supported dielectric regime."""


class DegenerateError(GlossforgeError, ValueError):
    """A ratio or range collapsed to zero width."""


class GeometryError(GlossforgeError, ValueError):
    """Scanner configuration cannot produce a mirror ray for some pixel."""


class ShapeMismatchError(GlossforgeError, ValueError):
    pass


class RegistrationError(GlossforgeError):
    """Tile registration failed (e.g. not enough overlap)."""


class CalibrationError(GlossforgeError, ValueError):
    """Gloss response samples are unusable."""


class FabricationError(GlossforgeError, ValueError):
    pass


class RasterFormatError(GlossforgeError, ValueError):
    pass


class ConfigError(GlossforgeError, ValueError):
    pass
