"""Exception types raised by scenepose."""


class ScenePoseError(ValueError):
    """Base class for all domain errors."""


class MissingDepth(ScenePoseError):
    pass


class NonPositiveDepth(ScenePoseError):
    pass


class BehindCamera(ScenePoseError):
    pass


class DegenerateView(ScenePoseError):
    pass


class DegeneratePose(ScenePoseError):
    pass


class EmptyLibrary(ScenePoseError):
    pass


class UnknownClass(ScenePoseError):
    pass


class RegionOutOfBounds(ScenePoseError):
    pass


class NoForeground(ScenePoseError):
    pass


class FormatError(ScenePoseError):
    """An input file does not match its documented format."""
