"""gazesynth: metric face-mesh recovery and normalized gaze-dataset synthesis.

The pipeline converts patch-space face reconstructions into metric
camera-space meshes, retargets them to new head poses with exact gaze
labels, and renders normalized, augmented training images.
"""

__version__ = "0.1.0"

from .geometry import (  # noqa: F401
    Angles,
    CameraIntrinsics,
    CropSpec,
    angular_error_deg,
    backproject_unit_ray,
    crop_matrix,
    head_rotation,
    pitch_yaw_to_vector,
    project_point,
    vector_to_pitch_yaw,
)
from .facemodel import (  # noqa: F401
    CORNER_LANDMARKS,
    Pose,
    ReferenceFaceModel,
    eye_center_distance,
    face_center_camera,
    solve_head_pose,
    solve_pnp,
)
