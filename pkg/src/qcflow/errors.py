"""Exception types raised by qcflow operations."""


class QcflowError(Exception):
    """Base class for all qcflow errors."""


class TooFewFrames(QcflowError):
    """A sequence needs at least two frames to define a flow."""


class MismatchedConnectivity(QcflowError):
    """Face lists differ between frames that must share connectivity."""


class NonManifold(QcflowError):
    """An edge is shared by more than two faces."""


class DegenerateFace(QcflowError):
    """A triangle has (near-)zero area."""


class ZeroArea(QcflowError):
    """Total surface area is not positive."""


class DegenerateCloud(QcflowError):
    """Point cloud has rank < 2 and cannot be triangulated."""


class OrientationFlip(QcflowError):
    """In-plane deformation gradient has non-positive determinant."""


class RankDeficientFit(QcflowError):
    """Local least-squares fit is rank deficient."""


class SingularSystem(QcflowError):
    """Gradient-operator normal equations could not be factorized."""


class ShapeMismatch(QcflowError):
    """Array argument has the wrong shape for the operator."""


class NonFiniteCost(QcflowError):
    """Cost or gradient evaluated to a non-finite value."""


class UnknownPreset(QcflowError):
    """Requested model preset name is not defined."""


class ConfigError(QcflowError):
    """Run configuration is missing keys or refers to missing files."""
