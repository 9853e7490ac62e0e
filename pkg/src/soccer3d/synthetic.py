"""Seeded synthetic scenes: exact cameras, rendered field edges, and NDC
depth buffers of a ground plane plus box players.

Every solver in the package is verifiable against these renders without
external data. Players are axis-aligned boxes, which is enough to exercise
the geometric paths (clustering, cropping, billboards, codecs) with exact
ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import geometry as geo
from .calibration import EdgeSet, FieldTemplate, sample_template_points
from .errors import EmptyRenderError
from .extraction import Capture
from .geometry import Camera, GlCamera


@dataclass(frozen=True)
class BoxPlayer:
    """Axis-aligned box standing on the ground plane."""

    ground: tuple[float, float, float]  # (x, 0, z)
    width: float = 0.6
    height: float = 1.8
    depth: float = 0.4
    velocity: tuple[float, float] = (0.0, 0.0)  # (dx, dz) per frame

    def bounds(self):
        gx, _, gz = self.ground
        lo = np.array([gx - self.width / 2, 0.0, gz - self.depth / 2])
        hi = np.array([gx + self.width / 2, self.height, gz + self.depth / 2])
        return lo, hi

    def at_frame(self, k: int) -> "BoxPlayer":
        gx, gy, gz = self.ground
        return replace(self, ground=(gx + k * self.velocity[0], gy,
                                     gz + k * self.velocity[1]))


@dataclass(frozen=True)
class SynthScene:
    """One frame of synthetic ground truth."""

    camera: Camera
    glcamera: GlCamera
    players: tuple[BoxPlayer, ...]
    template: FieldTemplate
    edge_dropout: float = 0.0
    edge_jitter: float = 0.0
    seed: int = 0


def look_at_camera(position, target, focal, image_size, up=(0.0, 1.0, 0.0)) -> Camera:
    """Pinhole camera at `position` looking at `target`, image upright wrt `up`."""
    position = np.asarray(position, dtype=float)
    forward = np.asarray(target, dtype=float) - position
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=float))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rot = np.vstack([right, down, forward])
    rvec = geo.axis_angle_from_rotation(rot)
    return Camera(focal, rvec, -rot @ position, image_size=image_size)


def make_scene(seed=0, n_players=3, image_size=(960, 540), z_near=2.0,
               z_far=300.0, edge_dropout=0.0, edge_jitter=0.0,
               template: FieldTemplate | None = None) -> SynthScene:
    """Seeded broadcast-style scene with separated players near midfield."""
    rng = np.random.default_rng(seed)
    if template is None:
        template = FieldTemplate.build()
    position = np.array([rng.uniform(-8.0, 8.0),
                         rng.uniform(24.0, 32.0),
                         rng.uniform(50.0, 58.0)])
    target = np.array([rng.uniform(-5.0, 5.0), 0.0, rng.uniform(-4.0, 2.0)])
    focal = rng.uniform(750.0, 1000.0)
    camera = look_at_camera(position, target, focal, image_size)
    glcamera = geo.glcamera_from_camera(camera, z_near, z_far)
    players = []
    spots = _separated_spots(rng, n_players, min_dist=4.0)
    for sx, sz in spots:
        players.append(BoxPlayer(
            ground=(sx, 0.0, sz),
            width=rng.uniform(0.5, 0.7),
            height=rng.uniform(1.6, 2.0),
            depth=rng.uniform(0.3, 0.5),
            velocity=(rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08)),
        ))
    return SynthScene(camera, glcamera, tuple(players), template,
                      edge_dropout, edge_jitter, seed)


def _separated_spots(rng, n, min_dist, x_range=(-18.0, 18.0), z_range=(-12.0, 12.0)):
    spots = []
    while len(spots) < n:
        cand = (rng.uniform(*x_range), rng.uniform(*z_range))
        if all((cand[0] - s[0]) ** 2 + (cand[1] - s[1]) ** 2 >= min_dist ** 2
               for s in spots):
            spots.append(cand)
    return spots


def make_capture_scene(seed=0, n_players=3, image_size=(960, 540), z_near=2.0,
                       z_far=300.0) -> SynthScene:
    """Zoomed-in scene of a midfield patch, engine-capture style.

    Tighter framing than :func:`make_scene` so player pixels are plentiful;
    not intended for field calibration (most of the template is off-frame).
    """
    rng = np.random.default_rng(seed)
    position = np.array([rng.uniform(-5.0, 5.0),
                         rng.uniform(22.0, 28.0),
                         rng.uniform(85.0, 100.0)])
    target = np.array([rng.uniform(-4.0, 4.0), 0.0, rng.uniform(-3.0, 3.0)])
    camera = look_at_camera(position, target, rng.uniform(2800.0, 3600.0),
                            image_size)
    glcamera = geo.glcamera_from_camera(camera, z_near, z_far)
    players = []
    for sx, sz in _separated_spots(rng, n_players, 3.0, (-8.0, 8.0), (-5.0, 5.0)):
        players.append(BoxPlayer(
            ground=(sx, 0.0, sz),
            width=rng.uniform(0.5, 0.7),
            height=rng.uniform(1.6, 2.0),
            depth=rng.uniform(0.3, 0.5),
            velocity=(rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08)),
        ))
    return SynthScene(camera, glcamera, tuple(players), FieldTemplate.build(),
                      seed=seed)


def scene_at_frame(scene: SynthScene, k: int) -> SynthScene:
    """Scene with players advanced k frames along their velocities."""
    return replace(scene, players=tuple(p.at_frame(k) for p in scene.players),
                   seed=scene.seed + k)


def render_edges(scene: SynthScene, spacing=0.05) -> EdgeSet:
    """Rasterized field-line edge pixels with optional dropout and jitter.

    Raises:
        EmptyRenderError: if no template point lands in the image.
    """
    pts = sample_template_points(scene.template, spacing)
    uv, depth = geo.project_with_depth(scene.camera, pts)
    w, h = scene.camera.image_size
    keep = (depth > 0.1) & (uv[:, 0] >= 0) & (uv[:, 0] < w) \
        & (uv[:, 1] >= 0) & (uv[:, 1] < h)
    uv = uv[keep]
    rng = np.random.default_rng(scene.seed)
    if scene.edge_jitter > 0:
        uv = uv + rng.normal(scale=scene.edge_jitter, size=uv.shape)
    if scene.edge_dropout > 0:
        uv = uv[rng.random(len(uv)) >= scene.edge_dropout]
    if len(uv) == 0:
        raise EmptyRenderError("no field edges rendered")
    px = np.rint(uv).astype(int)
    inside = (px[:, 0] >= 0) & (px[:, 0] < w) & (px[:, 1] >= 0) & (px[:, 1] < h)
    px = np.unique(px[inside], axis=0)
    if len(px) == 0:
        raise EmptyRenderError("no field edges rendered")
    return EdgeSet(px.astype(float), (w, h))


LABEL_OTHER = 0
LABEL_GROUND = 1
LABEL_PLAYER = 2

_GROUND_COLOR = np.array([0.22, 0.55, 0.25])
_SKY_COLOR = np.array([0.55, 0.65, 0.8])


def _player_color(i):
    palette = np.array([
        [0.85, 0.15, 0.15], [0.15, 0.25, 0.85], [0.9, 0.85, 0.2],
        [0.9, 0.5, 0.1], [0.6, 0.15, 0.7], [0.1, 0.7, 0.7],
        [0.95, 0.95, 0.95], [0.15, 0.15, 0.15], [0.5, 0.8, 0.3],
        [0.8, 0.3, 0.55], [0.3, 0.5, 0.9],
    ])
    return palette[i % len(palette)]


@dataclass(frozen=True)
class NdcRender:
    """Analytic ray-cast of a scene into a depth buffer with exact labels."""

    capture: Capture
    labels: np.ndarray        # (H, W) uint8: 0 other, 1 ground, 2 player
    player_index: np.ndarray  # (H, W) int: -1 or player index
    depth: np.ndarray         # (H, W) metric camera-space depth, inf where none


def render_ndc(scene: SynthScene) -> NdcRender:
    """Ray-cast the ground plane and player boxes into an NDC depth buffer."""
    cam = scene.camera
    w, h = cam.image_size
    us, vs = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    xy = np.stack([(us - cam.principal_point[0]) / cam.focal,
                   (vs - cam.principal_point[1]) / cam.focal], axis=-1)
    dirs_cam = np.concatenate([xy, np.ones((h, w, 1))], axis=-1)
    rot = cam.rotation_matrix
    dirs = dirs_cam.reshape(-1, 3) @ rot  # R^T per row
    origin = cam.center

    eps = 1e-9
    depth = np.full(h * w, np.inf)
    labels = np.full(h * w, LABEL_OTHER, dtype=np.uint8)
    player_index = np.full(h * w, -1, dtype=np.int32)

    dy = dirs[:, 1]
    ground_ok = np.abs(dy) > eps
    t_ground = np.where(ground_ok, -origin[1] / np.where(ground_ok, dy, 1.0), np.inf)
    hit_ground = ground_ok & (t_ground > eps)
    depth[hit_ground] = t_ground[hit_ground]
    labels[hit_ground] = LABEL_GROUND

    for i, player in enumerate(scene.players):
        lo, hi = player.bounds()
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
            t1 = (lo - origin) * inv
            t2 = (hi - origin) * inv
        t_near = np.nanmax(np.minimum(t1, t2), axis=1)
        t_far = np.nanmin(np.maximum(t1, t2), axis=1)
        hit = (t_far >= t_near) & (t_near > eps) & (t_near < depth)
        depth[hit] = t_near[hit]
        labels[hit] = LABEL_PLAYER
        player_index[hit] = i

    zn, zf = scene.glcamera.z_near, scene.glcamera.z_far
    buffer = np.ones(h * w)
    finite = np.isfinite(depth)
    buffer[finite] = np.clip(geo.depth_to_buffer(depth[finite], zn, zf), 0.0, 1.0)

    color = np.empty((h * w, 3))
    color[:] = _SKY_COLOR
    color[labels == LABEL_GROUND] = _GROUND_COLOR
    for i in range(len(scene.players)):
        color[player_index == i] = _player_color(i)

    capture = Capture(color.reshape(h, w, 3), buffer.reshape(h, w), scene.glcamera)
    return NdcRender(capture, labels.reshape(h, w),
                     player_index.reshape(h, w), depth.reshape(h, w))


# Landmark layout used to synthesize pose keypoints for a box player:
# (name, x offset in half-widths, height fraction).
_LANDMARKS = [
    ("head", 0.0, 1.0),
    ("neck", 0.0, 0.85),
    ("shoulder_l", -0.5, 0.8),
    ("shoulder_r", 0.5, 0.8),
    ("hip", 0.0, 0.5),
    ("knee_l", -0.3, 0.25),
    ("knee_r", 0.3, 0.25),
    ("foot_l", -0.5, 0.0),
    ("foot_r", 0.5, 0.0),
]


def synth_detections(scene: SynthScene, frame: int = 0):
    """Per-player raw boxes and pose keypoints for one frame.

    Returns:
        (boxes, poses): boxes as (x, y, w, h) from the projected 3-D box
        corners; poses as {name: (u, v, confidence)} dicts in player order.
    """
    cam = scene.camera
    w, h = cam.image_size
    boxes, poses = [], []
    for player in scene.players:
        lo, hi = player.bounds()
        corners = np.array([[x, y, z] for x in (lo[0], hi[0])
                            for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
        uv, depth = geo.project_with_depth(cam, corners)
        if not (depth > 0).all():
            continue
        x0, y0 = uv.min(axis=0)
        x1, y1 = uv.max(axis=0)
        if x1 < 0 or y1 < 0 or x0 >= w or y0 >= h:
            continue
        boxes.append((float(x0), float(y0), float(x1 - x0), float(y1 - y0)))
        gx, _, gz = player.ground
        pose = {}
        for name, dx, hfrac in _LANDMARKS:
            point = np.array([gx + dx * player.width / 2,
                              hfrac * player.height, gz])
            pose[name] = (*map(float, geo.project(cam, point)), 1.0)
        poses.append(pose)
    return boxes, poses
