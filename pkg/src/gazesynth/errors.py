"""Exception hierarchy for the synthesis pipeline.

Every failure mode that callers are expected to branch on gets its own
class; generic misuse raises ValueError like any other library.
"""

from __future__ import annotations


class GazeSynthError(Exception):
    """Base class for all pipeline-specific errors."""


# -- geometry ------------------------------------------------------------

class InvalidCropError(GazeSynthError):
    """Crop has non-positive box size or scale."""


class DegenerateRayError(GazeSynthError):
    """Back-projected ray does not point in front of the camera."""


class BehindCameraError(GazeSynthError):
    """Point with z <= 0 cannot be perspective-projected."""


class InvalidDirectionError(GazeSynthError):
    """Zero-length vector has no direction / angles."""


class InvalidIntrinsicsError(GazeSynthError):
    """Camera matrix is not invertible or violates its invariants."""


# -- face model / PnP ----------------------------------------------------

class InsufficientCorrespondencesError(GazeSynthError):
    """Fewer than four 2D-3D correspondences supplied to the pose solver."""


class PnPConvergenceError(GazeSynthError):
    """Pose refinement ended above the residual threshold."""

    def __init__(self, message: str, residual_px: float):
        super().__init__(message)
        self.residual_px = residual_px


class DegenerateFaceError(GazeSynthError):
    """Coincident eye centers or otherwise degenerate landmark geometry."""


class IncompleteLandmarksError(GazeSynthError):
    """A required landmark (e.g. one of the six corners) is missing."""


# -- projective matching / retargeting -----------------------------------

class BehindCameraVertexError(GazeSynthError):
    """Lifting or transforming produced vertices with non-positive depth."""

    def __init__(self, message: str, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


class NoValidPoseError(GazeSynthError):
    """Pose pool has no entry passing the pose-norm filter."""


class DegenerateNormalizationError(GazeSynthError):
    """Head x-axis parallel to the camera-to-face ray; rotation undefined."""


# -- rendering -----------------------------------------------------------

class EmptyRenderError(GazeSynthError):
    """Mesh with no triangles cannot be rasterized."""


class SceneNotFoundError(GazeSynthError):
    """Requested scene id is not present in the scene pool."""


class DegenerateMaskError(GazeSynthError):
    """Landmarks are collinear; convex hull has no area."""


# -- dataset I/O ---------------------------------------------------------

class ManifestParseError(GazeSynthError):
    """Malformed JSON in a manifest; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ManifestSchemaError(GazeSynthError):
    """Missing or ill-typed manifest field; names the field and line."""

    def __init__(self, field: str, line: int, detail: str = "missing or invalid"):
        super().__init__(f"line {line}: field '{field}' {detail}")
        self.field = field
        self.line = line


class MissingLandmarksError(GazeSynthError):
    """Mesh sidecar with the landmark->vertex map is absent."""


class MeshIntegrityError(GazeSynthError):
    """Mesh file violates the format contract (bad indices, missing data)."""


# -- fixtures / CLI ------------------------------------------------------

class InvalidSpecError(GazeSynthError):
    """Synthetic-face spec places the face behind the camera or is malformed."""


class ConfigError(GazeSynthError):
    """Run configuration is unusable (bad paths, ratios, ranges)."""
