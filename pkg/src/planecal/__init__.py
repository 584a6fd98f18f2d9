"""planecal: LiDAR-RGB extrinsic calibration from checkerboard plane pairs.

The toolkit extracts one plane per sensor per board placement (RANSAC on a
seeded range-image patch for the LiDAR, planar pose estimation from detected
corners for the camera) and jointly estimates the camera-from-lidar SE(3)
offset by robust Gauss-Newton on a 4D plane-to-plane error.  A synthetic rig
reproduces the accuracy-vs-measurements benchmark, and a small HTTP service
drives the interactive acquisition loop.
"""

from .errors import CalibrationError
from .geometry import (
    Isometry3,
    Plane,
    PlaneError,
    Twist6,
    boxplus,
    canonicalize,
    closest_point,
    plane_error,
    transform_jacobian,
    transform_plane,
)
from .projection import (
    CameraIntrinsics,
    LidarProjectionParams,
    PointCloud,
    RangeImage,
    pinhole_project,
    pixel_to_point,
    project_by_id,
    undistort_pixel,
)
from .solver import (
    CalibrationReport,
    MeasurementPair,
    SolverConfig,
    calibrate,
    conditioning_check,
    evaluate_error,
    initial_guess,
)
from .synth import (
    NoiseSpec,
    RigSpec,
    SweepConfig,
    default_rig,
    generate_pool,
    run_sweep,
    sample_board_pose,
    simulate_camera,
    simulate_lidar,
    table_sweep_config,
)
from .target import (
    BoardSpec,
    CornerSet,
    PatchSelection,
    PlaneObservation,
    RansacConfig,
    board_pose,
    camera_plane,
    collect_patch,
    ransac_plane,
)

__version__ = "0.1.0"
