"""Camera models, projection/unprojection, and NDC <-> world conversion.

Conventions used by every module in this package:

* World frame: right-handed, y up, the playing field lies in the plane y = 0
  with the origin at the field center.
* Pinhole camera frame: x maps to image u (right), y maps to image v (rows
  grow downward), z is the viewing direction. ``X_cam = R @ X + t``.
* Pixels are (u, v) = (column, row); arrays are indexed ``[v, u]``.
* NDC: x, y in [-1, 1]; pixel (u, v) maps to ``(2u/W - 1, 1 - 2v/H)`` (note
  the y flip), and depth-buffer values d in [0, 1] map to NDC z = 2d - 1.
* GL eye frame looks down -z with y up; the fixed change of basis from the
  pinhole camera frame is diag(1, -1, -1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    BehindCameraError,
    DegenerateUnprojectionError,
    InvalidDepthError,
    InvalidFrustumError,
    ParallelRayError,
    SingularCameraError,
)

_EPS_Z = 1e-9
_EPS_W = 1e-12

# Pinhole camera frame (x right, y down, z forward) to GL eye frame
# (x right, y up, -z forward).
_CAM_TO_EYE = np.diag([1.0, -1.0, -1.0])


def _skew(v):
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def rotation_from_axis_angle(rvec) -> np.ndarray:
    """Rodrigues' formula; stable for small angles via the series expansion."""
    r = np.asarray(rvec, dtype=float)
    theta = float(np.linalg.norm(r))
    if theta < 1e-12:
        k = _skew(r)
        return np.eye(3) + k + 0.5 * (k @ k)
    k = _skew(r / theta)
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def axis_angle_from_rotation(mat) -> np.ndarray:
    """Inverse of :func:`rotation_from_axis_angle`, canonical angle in [0, pi]."""
    m = np.asarray(mat, dtype=float)
    cos_t = np.clip((np.trace(m) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos_t))
    axial = 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
    if theta < 1e-7:
        return axial  # R ~= I + skew => axial already equals the rotation vector
    if theta > np.pi - 1e-6:
        # sin(theta) ~ 0: recover the axis from the symmetric part.
        diag = np.clip((np.diag(m) + 1.0) / 2.0, 0.0, None)
        axis = np.sqrt(diag)
        # Fix relative signs from the off-diagonal products.
        i = int(np.argmax(axis))
        if axis[i] > 0:
            j, k = (i + 1) % 3, (i + 2) % 3
            axis[j] = np.copysign(axis[j], m[i, j] + m[j, i])
            axis[k] = np.copysign(axis[k], m[i, k] + m[k, i])
        axis /= max(np.linalg.norm(axis), 1e-12)
        if np.dot(axis, axial) < 0:
            axis = -axis
        return theta * axis
    return (theta / np.sin(theta)) * axial


def _orthonormalize(mat) -> np.ndarray:
    """Nearest rotation (Frobenius) with det +1."""
    u, _, vt = np.linalg.svd(np.asarray(mat, dtype=float))
    r = u @ vt
    if np.linalg.det(r) < 0:
        r = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return r


def _freeze(arr):
    arr = np.array(arr, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Camera:
    """Pinhole broadcast camera with square pixels and no distortion.

    Attributes:
        focal: Focal length in pixels (> 0).
        rotation: Axis-angle rotation vector (radians), magnitude < pi.
        translation: Translation in meters; ``X_cam = R @ X + t``.
        principal_point: (cx, cy) pixels; defaults to the image center.
        image_size: (width, height) pixels.
    """

    focal: float
    rotation: np.ndarray
    translation: np.ndarray
    principal_point: np.ndarray
    image_size: tuple[int, int]

    def __init__(self, focal, rotation, translation, principal_point=None,
                 image_size=(1920, 1080)):
        w, h = int(image_size[0]), int(image_size[1])
        if focal <= 0:
            raise ValueError(f"focal must be > 0, got {focal}")
        if w <= 0 or h <= 0:
            raise ValueError(f"image_size must be positive, got {image_size}")
        rotation = np.asarray(rotation, dtype=float)
        if rotation.shape != (3,):
            raise ValueError("rotation must be a 3-vector (axis-angle)")
        if np.linalg.norm(rotation) >= np.pi:
            raise ValueError("rotation magnitude must be < pi (canonical axis-angle)")
        if principal_point is None:
            principal_point = (w / 2.0, h / 2.0)
        object.__setattr__(self, "focal", float(focal))
        object.__setattr__(self, "rotation", _freeze(rotation))
        object.__setattr__(self, "translation", _freeze(translation))
        object.__setattr__(self, "principal_point", _freeze(principal_point))
        object.__setattr__(self, "image_size", (w, h))

    @property
    def rotation_matrix(self) -> np.ndarray:
        return rotation_from_axis_angle(self.rotation)

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation_matrix.T @ self.translation

    def to_dict(self) -> dict:
        return {
            "focal": self.focal,
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "principal_point": self.principal_point.tolist(),
            "image_size": list(self.image_size),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(d["focal"], d["rotation"], d["translation"],
                   d.get("principal_point"), d["image_size"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "Camera":
        return cls.from_dict(json.loads(s))


# Nonzero slots of the canonical symmetric perspective matrix.
_PROJ_PATTERN = np.zeros((4, 4), dtype=bool)
_PROJ_PATTERN[0, 0] = _PROJ_PATTERN[1, 1] = True
_PROJ_PATTERN[2, 2] = _PROJ_PATTERN[2, 3] = _PROJ_PATTERN[3, 2] = True


@dataclass(frozen=True)
class GlCamera:
    """Raster-pipeline camera: modelview + symmetric perspective projection."""

    modelview: np.ndarray
    projection: np.ndarray
    z_near: float
    z_far: float
    image_size: tuple[int, int]

    def __init__(self, modelview, projection, z_near, z_far, image_size):
        modelview = np.asarray(modelview, dtype=float)
        projection = np.asarray(projection, dtype=float)
        if modelview.shape != (4, 4) or projection.shape != (4, 4):
            raise ValueError("modelview and projection must be 4x4")
        if not (0 < z_near < z_far):
            raise InvalidFrustumError(f"need 0 < z_near < z_far, got {z_near}, {z_far}")
        rot = modelview[:3, :3]
        if (np.abs(rot @ rot.T - np.eye(3)).max() > 1e-6
                or abs(np.linalg.det(rot) - 1.0) > 1e-6):
            raise ValueError("modelview upper-left 3x3 is not a rotation")
        if np.abs(modelview[3] - [0, 0, 0, 1]).max() > 1e-9:
            raise ValueError("modelview bottom row must be (0, 0, 0, 1)")
        nz = np.abs(projection) > 0
        if nz[~_PROJ_PATTERN].any() or not nz[_PROJ_PATTERN].all():
            raise ValueError("projection lacks the symmetric-perspective sparsity pattern")
        object.__setattr__(self, "modelview", _freeze(modelview))
        object.__setattr__(self, "projection", _freeze(projection))
        object.__setattr__(self, "z_near", float(z_near))
        object.__setattr__(self, "z_far", float(z_far))
        object.__setattr__(self, "image_size", (int(image_size[0]), int(image_size[1])))

    def to_dict(self) -> dict:
        return {
            "modelview": [float(x) for x in self.modelview.ravel()],
            "projection": [float(x) for x in self.projection.ravel()],
            "z_near": self.z_near,
            "z_far": self.z_far,
            "image_size": list(self.image_size),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GlCamera":
        return cls(np.reshape(d["modelview"], (4, 4)),
                   np.reshape(d["projection"], (4, 4)),
                   d["z_near"], d["z_far"], d["image_size"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "GlCamera":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class Ray:
    """Half-line with unit direction."""

    origin: np.ndarray
    direction: np.ndarray

    def __init__(self, origin, direction):
        direction = np.asarray(direction, dtype=float)
        n = np.linalg.norm(direction)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"direction must be unit length, |d| = {n}")
        object.__setattr__(self, "origin", _freeze(origin))
        object.__setattr__(self, "direction", _freeze(direction))


def _as_points(points):
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    return np.atleast_2d(pts), single


def camera_depths(camera: Camera, points) -> np.ndarray:
    """Camera-space z of the given world points (no validity check)."""
    pts, single = _as_points(points)
    z = pts @ camera.rotation_matrix[2] + camera.translation[2]
    return z[0] if single else z


def project(camera: Camera, points):
    """Project world point(s) to pixel coordinates.

    Raises:
        BehindCameraError: if any point has camera-space depth <= 1e-9.
    """
    pts, single = _as_points(points)
    cam = pts @ camera.rotation_matrix.T + camera.translation
    z = cam[:, 2]
    if np.any(z <= _EPS_Z):
        raise BehindCameraError(f"point at camera depth {z.min():.3g} <= {_EPS_Z}")
    uv = camera.principal_point + camera.focal * cam[:, :2] / z[:, None]
    return uv[0] if single else uv


def project_with_depth(camera: Camera, points):
    """Non-raising batch projection; returns (pixels, depths).

    Pixels for points at or behind the camera plane are NaN; callers filter
    on ``depths > 0``.
    """
    pts, _ = _as_points(points)
    cam = pts @ camera.rotation_matrix.T + camera.translation
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = camera.principal_point + camera.focal * cam[:, :2] / z[:, None]
    uv[z <= _EPS_Z] = np.nan
    return uv, z


def unproject(camera: Camera, pixels, depth):
    """World point(s) at the given camera-space depth projecting to pixel(s).

    Raises:
        InvalidDepthError: if any depth <= 0.
    """
    px, single = _as_points(pixels)
    depth = np.broadcast_to(np.asarray(depth, dtype=float), (px.shape[0],))
    if np.any(depth <= 0):
        raise InvalidDepthError(f"depth must be > 0, got {depth.min()}")
    xy = (px - camera.principal_point) / camera.focal
    cam = np.column_stack([xy * depth[:, None], depth])
    world = (cam - camera.translation) @ camera.rotation_matrix
    return world[0] if single else world


def pixel_rays(camera: Camera, pixels):
    """World-space (origin, unit directions) of the rays through pixel(s)."""
    px, single = _as_points(pixels)
    xy = (px - camera.principal_point) / camera.focal
    dirs_cam = np.column_stack([xy, np.ones(len(px))])
    dirs = dirs_cam @ camera.rotation_matrix
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    origin = camera.center
    return origin, (dirs[0] if single else dirs)


def pixel_ray(camera: Camera, pixel) -> Ray:
    origin, direction = pixel_rays(camera, pixel)
    return Ray(origin, direction)


def ray_ground_intersect(camera: Camera, pixel) -> np.ndarray:
    """Intersect a pixel's ray with the ground plane y = 0.

    Returns a point constructed with y = 0 exactly.

    Raises:
        ParallelRayError: if the ray is parallel to the plane.
        BehindCameraError: if the intersection lies behind the camera.
    """
    origin, d = pixel_rays(camera, pixel)
    if abs(d[1]) < _EPS_Z:
        raise ParallelRayError("pixel ray parallel to the ground plane")
    s = -origin[1] / d[1]
    if s <= 0:
        raise BehindCameraError("ground intersection behind the camera")
    return np.array([origin[0] + s * d[0], 0.0, origin[2] + s * d[2]])


def ground_intersections(camera: Camera, pixels):
    """Batch ground-plane intersection; returns (points, valid mask).

    Invalid rays (parallel to the plane or intersecting behind the camera)
    are flagged instead of raising; their points are NaN except y = 0.
    """
    origin, dirs = pixel_rays(camera, np.atleast_2d(np.asarray(pixels, float)))
    dy = dirs[:, 1]
    valid = np.abs(dy) >= _EPS_Z
    s = np.full(len(dirs), np.nan)
    s[valid] = -origin[1] / dy[valid]
    valid &= s > 0
    pts = np.full((len(dirs), 3), np.nan)
    pts[valid, 0] = origin[0] + s[valid] * dirs[valid, 0]
    pts[valid, 1] = 0.0
    pts[valid, 2] = origin[2] + s[valid] * dirs[valid, 2]
    return pts, valid


def gl_projection(focal, image_size, z_near, z_far) -> np.ndarray:
    """Symmetric perspective matrix consistent with the pinhole model.

    Raises:
        InvalidFrustumError: unless focal > 0 and 0 < z_near < z_far.
    """
    if focal <= 0 or not (0 < z_near < z_far):
        raise InvalidFrustumError(
            f"need focal > 0 and 0 < z_near < z_far, got {focal}, {z_near}, {z_far}")
    w, h = image_size
    p = np.zeros((4, 4))
    p[0, 0] = 2.0 * focal / w
    p[1, 1] = 2.0 * focal / h
    p[2, 2] = -(z_far + z_near) / (z_far - z_near)
    p[2, 3] = -2.0 * z_far * z_near / (z_far - z_near)
    p[3, 2] = -1.0
    return p


def gl_modelview(rotation, translation) -> np.ndarray:
    """Modelview matrix for the pinhole extrinsics (rotation vector, translation)."""
    m = np.eye(4)
    m[:3, :3] = _CAM_TO_EYE @ rotation_from_axis_angle(rotation)
    m[:3, 3] = _CAM_TO_EYE @ np.asarray(translation, dtype=float)
    return m


def glcamera_from_camera(camera: Camera, z_near, z_far) -> GlCamera:
    """GlCamera equivalent of a pinhole camera with a centered principal point."""
    w, h = camera.image_size
    if np.abs(camera.principal_point - [w / 2.0, h / 2.0]).max() > 1e-9:
        raise InvalidFrustumError(
            "symmetric perspective requires the principal point at the image center")
    return GlCamera(gl_modelview(camera.rotation, camera.translation),
                    gl_projection(camera.focal, camera.image_size, z_near, z_far),
                    z_near, z_far, camera.image_size)


def depth_to_buffer(depth, z_near, z_far):
    """Camera-space depth -> depth-buffer value in [0, 1]."""
    depth = np.asarray(depth, dtype=float)
    z_ndc = ((z_far + z_near) * depth - 2.0 * z_far * z_near) / ((z_far - z_near) * depth)
    return 0.5 * z_ndc + 0.5


def buffer_to_depth(buffer_value, z_near, z_far):
    """Inverse of :func:`depth_to_buffer`."""
    z_ndc = 2.0 * np.asarray(buffer_value, dtype=float) - 1.0
    return 2.0 * z_far * z_near / (z_far + z_near - z_ndc * (z_far - z_near))


def pixel_to_ndc(pixels, depth_values, image_size):
    """Map pixel(s) + depth-buffer value(s) to the NDC cube [-1, 1]^3.

    Raises:
        InvalidDepthError: if any depth-buffer value is outside [0, 1].
    """
    px, single = _as_points(pixels)
    d = np.broadcast_to(np.asarray(depth_values, dtype=float), (px.shape[0],))
    if np.any((d < 0) | (d > 1)):
        raise InvalidDepthError("depth-buffer values must lie in [0, 1]")
    w, h = image_size
    ndc = np.column_stack([2.0 * px[:, 0] / w - 1.0,
                           1.0 - 2.0 * px[:, 1] / h,
                           2.0 * d - 1.0])
    return ndc[0] if single else ndc


def _inverses(glcam: GlCamera):
    try:
        return np.linalg.inv(glcam.projection), np.linalg.inv(glcam.modelview)
    except np.linalg.LinAlgError as exc:
        raise SingularCameraError(str(exc)) from exc


def ndc_to_world(glcam: GlCamera, pixels, ndc_depths):
    """Unproject pixel(s) at depth-buffer value(s) to world coordinates.

    Applies the inverse projection, then the inverse modelview, then the
    perspective divide.

    Raises:
        InvalidDepthError: depth-buffer value outside [0, 1].
        DegenerateUnprojectionError: |w| below 1e-12 after unprojection.
        SingularCameraError: a camera matrix is not invertible.
    """
    px, single = _as_points(pixels)
    ndc = np.atleast_2d(pixel_to_ndc(px, ndc_depths, glcam.image_size))
    proj_inv, mv_inv = _inverses(glcam)
    h = np.column_stack([ndc, np.ones(len(ndc))])
    world_h = h @ (mv_inv @ proj_inv).T
    w = world_h[:, 3]
    if np.any(np.abs(w) < _EPS_W):
        raise DegenerateUnprojectionError("homogeneous w collapsed during unprojection")
    world = world_h[:, :3] / w[:, None]
    return world[0] if single else world


def ndc_to_world_masked(glcam: GlCamera, pixels, ndc_depths):
    """Batch unprojection that flags degenerate pixels instead of raising."""
    px = np.atleast_2d(np.asarray(pixels, dtype=float))
    ndc = np.atleast_2d(pixel_to_ndc(px, ndc_depths, glcam.image_size))
    proj_inv, mv_inv = _inverses(glcam)
    h = np.column_stack([ndc, np.ones(len(ndc))])
    world_h = h @ (mv_inv @ proj_inv).T
    w = world_h[:, 3]
    valid = np.abs(w) >= _EPS_W
    world = np.full((len(px), 3), np.nan)
    world[valid] = world_h[valid, :3] / w[valid, None]
    return world, valid


def world_to_ndc(glcam: GlCamera, points):
    """Project world point(s) through the GL pipeline.

    Returns:
        (pixels, depth-buffer values): pixel (u, v) and depth in [0, 1].

    Raises:
        BehindCameraError: if any clip-space w is <= 1e-12 (point not in
            front of the camera).
    """
    pts, single = _as_points(points)
    h = np.column_stack([pts, np.ones(len(pts))])
    clip = h @ (glcam.projection @ glcam.modelview).T
    w = clip[:, 3]
    if np.any(w <= _EPS_W):
        raise BehindCameraError("point behind the camera in clip space")
    ndc = clip[:, :3] / w[:, None]
    width, height = glcam.image_size
    pix = np.column_stack([(ndc[:, 0] + 1.0) * 0.5 * width,
                           (1.0 - ndc[:, 1]) * 0.5 * height])
    depth = 0.5 * ndc[:, 2] + 0.5
    if single:
        return pix[0], float(depth[0])
    return pix, depth
