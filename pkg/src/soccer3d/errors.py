"""Exception types raised across the library."""


class Soccer3DError(Exception):
    """Base class for all library-specific failures."""


class BehindCameraError(Soccer3DError):
    """Point lies at or behind the camera plane, or an intersection does."""


class InvalidDepthError(Soccer3DError):
    """Depth value outside its valid range."""


class ParallelRayError(Soccer3DError):
    """Pixel ray is (numerically) parallel to the target plane."""


class DegenerateUnprojectionError(Soccer3DError):
    """Homogeneous w collapsed during NDC unprojection."""


class SingularCameraError(Soccer3DError):
    """A camera matrix could not be inverted."""


class InvalidFrustumError(Soccer3DError):
    """Perspective frustum parameters violate 0 < z_near < z_far or focal > 0."""


class DimensionMismatchError(Soccer3DError):
    """Two grids or images that must share a shape do not."""


class EmptyEdgesError(Soccer3DError):
    """A distance map was requested for an empty edge set."""


class DegenerateCorrespondencesError(Soccer3DError):
    """Correspondences are rank-deficient or yield no valid focal length."""


class InsufficientVisibilityError(Soccer3DError):
    """Too few template points project inside the image to refine a camera."""


class DivergedError(Soccer3DError):
    """An optimization produced a non-finite objective."""


class FrameCalibrationError(Soccer3DError):
    """Per-frame calibration failure; carries solved cameras for earlier frames."""

    def __init__(self, frame_index, cameras, cause):
        super().__init__(f"calibration failed at frame {frame_index}: {cause}")
        self.frame_index = frame_index
        self.cameras = cameras
        self.cause = cause


class MalformedDetectionError(Soccer3DError):
    """A detection is missing required data (e.g. its neck keypoint)."""

    def __init__(self, frame, message):
        super().__init__(f"frame {frame}: {message}")
        self.frame = frame


class UnanchoredRegionError(Soccer3DError):
    """A connected pixel component contains no anchor."""


class ConvergenceError(Soccer3DError):
    """An iterative/linear solve failed to reach the residual contract."""

    def __init__(self, residual, message="solver did not converge"):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class EmptyPlayerError(Soccer3DError):
    """No valid masked pixels to mesh."""


class UnconstrainedTrajectoryError(Soccer3DError):
    """Trajectory problem has no observations (or is otherwise singular)."""


class EmptyEvaluationError(Soccer3DError):
    """Evaluation mask selects no pixels."""


class EmptyRenderError(Soccer3DError):
    """A synthetic render produced no output (field out of view, full dropout)."""
