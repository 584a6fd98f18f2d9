"""Exception hierarchy shared across the toolkit.

Every error carries a stable machine-readable ``code`` so CLI commands and
the session service can emit structured payloads without inspecting types.
"""

from __future__ import annotations


class CalibrationError(Exception):
    """Base class for all toolkit errors."""

    code = "error"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details

    def payload(self) -> dict:
        return {"code": self.code, "message": str(self), "details": self.details}


class DegenerateGeometryError(CalibrationError):
    """Zero-length normal, collinear sample, rank-deficient homography, ..."""

    code = "degenerate_geometry"


class BehindCameraError(CalibrationError):
    code = "behind_camera"


class ConvergenceError(CalibrationError):
    """Iterative refinement failed to converge (undistortion, pose, solver)."""

    code = "no_convergence"


class InsufficientDataError(CalibrationError):
    """Fewer points/measurements than the operation needs."""

    code = "insufficient_data"


class FitError(CalibrationError):
    """Model fitting found no acceptable consensus."""

    code = "fit_failure"


class OutOfBoundsError(CalibrationError):
    code = "out_of_bounds"


class OutOfViewError(CalibrationError):
    """Target outside a sensor's field of view."""

    code = "out_of_view"


class SingularSystemError(CalibrationError):
    """Normal matrix is rank deficient; carries the partial report."""

    code = "singular_system"

    def __init__(self, message: str, report=None, **details):
        super().__init__(message, **details)
        self.report = report


class SamplingError(CalibrationError):
    """Rejection sampling exhausted its attempt budget."""

    code = "sampling_exhausted"


class FormatError(CalibrationError):
    """File parsing or schema mismatch; details carry the offending field."""

    code = "format_error"


class ConflictError(CalibrationError):
    """Stale-revision mutation against the session store."""

    code = "conflict"


class InvalidStateError(CalibrationError):
    """Operation not applicable to the current session state."""

    code = "invalid_state"
