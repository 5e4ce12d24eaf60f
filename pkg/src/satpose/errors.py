"""Exception types shared across the satpose package."""


class SatposeError(Exception):
    """Base class for all satpose errors."""


class InvalidFov(SatposeError):
    """Horizontal field of view outside the open interval (0, 180) degrees."""


class PointBehindCamera(SatposeError):
    """A point reached the projection stage with z at or behind the camera plane."""


class InsufficientGeometry(SatposeError):
    """Mesh cannot supply the requested number of distinct surface samples."""


class MissingConfig(SatposeError):
    """A required configuration file is absent or fails validation."""


class DegenerateConfiguration(SatposeError):
    """Point configuration too degenerate to solve (collinear, rank-deficient, too few)."""


class SolutionBehindCamera(SatposeError):
    """Every admissible pose candidate places points at non-positive depth."""


class NoDetection(SatposeError):
    """The pipeline produced no usable pose for a frame.

    Reason codes are mutually exclusive:
      * ``detector_failed``  the detection emulator produced no box
      * ``ransac_failed``    consensus below ``min_inliers`` or every solve degenerate
      * ``gate_rejected``    a pose was found but the error gate discarded it
    """

    def __init__(self, reason: str, message: str = ""):
        self.reason = reason
        super().__init__(message or reason)


class EmptyDataset(SatposeError):
    """An aggregation was requested over zero records."""


class EmptyMask(SatposeError):
    """Rasterization covered zero pixels."""


class ZeroGroundTruthRange(SatposeError):
    """Normalized translation error is undefined for a zero ground-truth range."""
