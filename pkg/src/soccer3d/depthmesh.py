"""Plane-relative quantized depth codec, billboard lifting, and textured
mesh generation.

A player's depth is stored as per-pixel signed offsets from a vertical
"billboard" plane through the player's ground point: 49 classes at 0.02 m
spacing (24 in front, 1 at the plane, 24 behind) plus class 49 for
background, covering a 0.96 m span. Decoding applies the offsets along
camera z at the per-pixel depth of the pixel ray's intersection with the
plane, which is what makes the offsets well-defined across the crop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .errors import EmptyPlayerError
from .geometry import Camera

BIN_SPACING = 0.02           # meters
N_FOREGROUND_CLASSES = 49    # classes 0..48, class 24 at the plane
BACKGROUND_CLASS = 49
CENTER_CLASS = 24
MAX_OFFSET = CENTER_CLASS * BIN_SPACING  # 0.48 m representable each way
DISCONTINUITY_THRESH = 0.1   # meters


@dataclass(frozen=True)
class Billboard:
    """Vertical plane through a player's ground point, facing the camera."""

    ground_point: np.ndarray   # (3,), y = 0
    normal: np.ndarray         # (3,), unit, y = 0
    plane_depth: float         # camera-space z of ground_point

    def __post_init__(self):
        gp = np.asarray(self.ground_point, dtype=float)
        n = np.asarray(self.normal, dtype=float)
        if gp[1] != 0.0:
            raise ValueError("billboard ground point must have y = 0")
        if abs(n[1]) > 1e-12 or abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("billboard normal must be horizontal and unit length")
        object.__setattr__(self, "ground_point", gp)
        object.__setattr__(self, "normal", n)


@dataclass(frozen=True)
class ClassMap:
    """Per-pixel quantized depth classes in [0, 49]; 49 = background."""

    classes: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.classes)
        if c.min() < 0 or c.max() > BACKGROUND_CLASS:
            raise ValueError("classes must lie in [0, 49]")
        object.__setattr__(self, "classes", c.astype(np.uint8))


@dataclass(frozen=True)
class DepthMap:
    """Metric camera-space depth with a validity mask."""

    depth: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=float)
        v = np.asarray(self.valid, dtype=bool)
        if d.shape != v.shape:
            raise ValueError("depth and validity mask must share shape")
        if v.any() and d[v].min() <= 0:
            raise ValueError("valid depths must be > 0")
        object.__setattr__(self, "depth", d)
        object.__setattr__(self, "valid", v)


@dataclass(frozen=True)
class PlayerMesh:
    """Textured triangle mesh of one player in world coordinates."""

    vertices: np.ndarray   # (N, 3)
    faces: np.ndarray      # (M, 3) int
    uvs: np.ndarray        # (N, 2) in [0, 1]^2
    texture: str | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=int).reshape(-1, 3)
        t = np.asarray(self.uvs, dtype=float).reshape(-1, 2)
        if len(t) != len(v):
            raise ValueError("one uv per vertex required")
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face indices out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "uvs", t)


def lift_billboard(camera: Camera, bbox) -> Billboard:
    """Billboard through the bbox's bottom-center ground point.

    The plane normal is the horizontal component of the camera-to-point
    direction, negated so it faces the camera.
    """
    x, y, w, h = bbox
    bottom_center = np.array([x + w / 2.0, y + h])
    ground = geo.ray_ground_intersect(camera, bottom_center)
    direction = ground - camera.center
    horiz = np.array([direction[0], 0.0, direction[2]])
    norm = np.linalg.norm(horiz)
    if norm < 1e-12:
        # Camera directly overhead: fall back to the viewing axis' horizontal
        # projection at the principal ray.
        horiz = np.array([0.0, 0.0, 1.0])
        norm = 1.0
    normal = -horiz / norm
    depth = float(geo.camera_depths(camera, ground))
    return Billboard(ground, normal, depth)


def plane_ray_depths(camera: Camera, billboard: Billboard, pixels):
    """Camera-space depth of each pixel ray's intersection with the plane.

    Returns (depths, valid); rays parallel to the plane or hitting it behind
    the camera are invalid.
    """
    origin, dirs = geo.pixel_rays(camera, np.atleast_2d(np.asarray(pixels, float)))
    denom = dirs @ billboard.normal
    valid = np.abs(denom) > 1e-12
    s = np.full(len(dirs), np.nan)
    s[valid] = (billboard.normal @ (billboard.ground_point - origin)) / denom[valid]
    # Depth along camera z: s * (R d)_z; R d has z = |dir_cam_z| / |dir| and
    # pixel rays are normalized, so recompute through camera_depths.
    pts = origin + s[:, None] * dirs
    depths = geo.camera_depths(camera, pts)
    valid &= np.isfinite(depths) & (depths > 0)
    return depths, valid


def encode_depth(depth: DepthMap, billboard: Billboard, camera: Camera,
                 crop_origin=(0, 0)) -> ClassMap:
    """Quantize plane-relative depth offsets into classes.

    The offset at each pixel is measured against the billboard plane's depth
    at that pixel ray (positive = behind the plane, farther from the
    camera); invalid pixels become the background class.
    """
    h, w = depth.depth.shape
    ox, oy = crop_origin
    us, vs = np.meshgrid(np.arange(w) + ox, np.arange(h) + oy)
    pixels = np.column_stack([us.ravel(), vs.ravel()]).astype(float)
    plane, plane_ok = plane_ray_depths(camera, billboard, pixels)
    plane = plane.reshape(h, w)
    plane_ok = plane_ok.reshape(h, w)
    delta = depth.depth - plane
    classes = np.full((h, w), BACKGROUND_CLASS, dtype=np.uint8)
    ok = depth.valid & plane_ok
    quant = np.clip(np.rint(delta[ok] / BIN_SPACING).astype(int) + CENTER_CLASS,
                    0, N_FOREGROUND_CLASSES - 1)
    classes[ok] = quant
    return ClassMap(classes)


def decode_depth(classes: ClassMap, billboard: Billboard, camera: Camera,
                 crop_origin=(0, 0)) -> DepthMap:
    """Reconstruct metric depth from classes: per-pixel plane depth plus the
    class offset; background pixels (and rays missing the plane) are invalid.
    """
    c = classes.classes
    h, w = c.shape
    ox, oy = crop_origin
    us, vs = np.meshgrid(np.arange(w) + ox, np.arange(h) + oy)
    pixels = np.column_stack([us.ravel(), vs.ravel()]).astype(float)
    plane, plane_ok = plane_ray_depths(camera, billboard, pixels)
    plane = plane.reshape(h, w)
    plane_ok = plane_ok.reshape(h, w)
    valid = (c != BACKGROUND_CLASS) & plane_ok
    depth = np.full((h, w), np.nan)
    depth[valid] = plane[valid] + (c[valid].astype(float) - CENTER_CLASS) * BIN_SPACING
    valid &= np.nan_to_num(depth, nan=-1.0) > 0
    depth[~valid] = np.nan
    return DepthMap(depth, valid)


def build_mesh(depth: DepthMap, mask, camera: Camera, crop_image=None,
               crop_origin=(0, 0), discontinuity_thresh=DISCONTINUITY_THRESH,
               texture=None) -> PlayerMesh:
    """Mesh the masked valid pixels: one vertex per pixel, faces from 2x2
    pixel connectivity, skipping faces that span depth discontinuities.

    UVs are pixel positions normalized by the crop size (v flipped so the
    texture image maps upright).

    Raises:
        EmptyPlayerError: no valid masked pixel.
    """
    h, w = depth.depth.shape
    ok = depth.valid & np.asarray(mask, dtype=bool)
    if not ok.any():
        raise EmptyPlayerError("no valid masked pixels to mesh")
    ox, oy = crop_origin
    vs, us = np.nonzero(ok)
    pixels = np.column_stack([us + ox, vs + oy]).astype(float)
    vertices = geo.unproject(camera, pixels, depth.depth[vs, us])
    uvs = np.column_stack([(us + 0.5) / w, 1.0 - (vs + 0.5) / h])

    index = np.full((h, w), -1, dtype=int)
    index[vs, us] = np.arange(len(pixels))
    faces = []
    d = depth.depth

    def emit(corner_idx, corner_depths):
        if max(corner_depths) - min(corner_depths) > discontinuity_thresh:
            return
        a, b, c = (vertices[i] for i in corner_idx)
        if np.linalg.norm(np.cross(b - a, c - a)) <= 1e-12:
            return
        faces.append(corner_idx)

    for v in range(h - 1):
        for u in range(w - 1):
            quad = [(v, u), (v + 1, u), (v + 1, u + 1), (v, u + 1)]
            good = [p for p in quad if index[p] >= 0]
            if len(good) == 4:
                tl, bl, br, tr = quad
                emit([index[tl], index[bl], index[br]],
                     [d[tl], d[bl], d[br]])
                emit([index[tl], index[br], index[tr]],
                     [d[tl], d[br], d[tr]])
            elif len(good) == 3:
                emit([index[p] for p in good], [d[p] for p in good])

    return PlayerMesh(vertices, np.array(faces, dtype=int).reshape(-1, 3),
                      uvs, texture)
