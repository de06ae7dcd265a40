"""Exception hierarchy shared by all modules."""


class Disentangle3DError(Exception):
    """Base class for every error raised by this package."""


class GeometryError(Disentangle3DError, ValueError):
    pass


class NonPositiveDepth(GeometryError):
    """Decoded depth is not in front of the camera."""


class DegenerateBox(GeometryError):
    pass


class BehindCamera(GeometryError):
    pass


class ZeroArea(GeometryError):
    pass


class InvalidBox(GeometryError):
    pass


class NonYawBox(GeometryError):
    """Box has a rotation component other than yaw about the camera y-axis."""


class UndefinedAtPoint(Disentangle3DError, ArithmeticError):
    """A derivative does not exist at the evaluation point."""


class DivergedToInvalid(Disentangle3DError, RuntimeError):
    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


class NoGroundTruth(Disentangle3DError, ValueError):
    pass


class MixedClasses(Disentangle3DError, ValueError):
    pass


class ParseError(Disentangle3DError, ValueError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.path = path
        self.line = line
