"""Training-pair extraction from engine captures.

Unprojects an NDC capture to a world point cloud, strips the ground and
everything outside the field, separates players by density clustering, and
emits per-player image/metric-depth crop pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import geometry as geo
from .geometry import GlCamera

DEFAULT_HALF_LENGTH = 52.5
DEFAULT_HALF_WIDTH = 34.0
DEFAULT_GROUND_EPS = 0.05


@dataclass(frozen=True)
class Capture:
    """Per-frame engine capture: color buffer, NDC depth buffer, camera."""

    color: np.ndarray      # (H, W, 3) float in [0, 1]
    ndc_depth: np.ndarray  # (H, W) in [0, 1]
    glcam: GlCamera

    def __post_init__(self):
        h, w = self.ndc_depth.shape
        if self.color.shape[:2] != (h, w):
            raise ValueError("color and depth buffers must share dimensions")
        if self.glcam.image_size != (w, h):
            raise ValueError("capture camera image_size mismatch")


@dataclass(frozen=True)
class PointCloud:
    """World points with source-pixel provenance."""

    points: np.ndarray   # (N, 3)
    pixels: np.ndarray   # (N, 2) int (u, v)
    n_dropped: int


def extract_point_cloud(capture: Capture) -> PointCloud:
    """One world point per pixel via NDC unprojection; degenerate pixels dropped."""
    h, w = capture.ndc_depth.shape
    us, vs = np.meshgrid(np.arange(w), np.arange(h))
    pixels = np.column_stack([us.ravel(), vs.ravel()]).astype(float)
    depths = capture.ndc_depth.ravel()
    points, valid = geo.ndc_to_world_masked(capture.glcam, pixels, depths)
    return PointCloud(points[valid], pixels[valid].astype(int),
                      int((~valid).sum()))


def filter_players(points: np.ndarray, half_length=DEFAULT_HALF_LENGTH,
                   half_width=DEFAULT_HALF_WIDTH,
                   ground_eps=DEFAULT_GROUND_EPS) -> np.ndarray:
    """Boolean mask keeping above-ground points inside the field footprint."""
    pts = np.asarray(points, dtype=float)
    return ((np.abs(pts[:, 0]) <= half_length)
            & (np.abs(pts[:, 2]) <= half_width)
            & (pts[:, 1] > ground_eps))


def dbscan(points, eps=0.5, min_pts=20) -> np.ndarray:
    """Density-based clustering; returns int labels with -1 for noise.

    Core points have >= min_pts neighbors (inclusive of themselves) within
    eps; clusters are connected components of core points under the eps
    relation; border points join the cluster of their nearest core point,
    which makes the induced partition independent of input order. Cluster
    ids are assigned in first-appearance order, so output is deterministic
    for a given input order.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    labels = np.full(n, -1, dtype=int)
    if n == 0:
        return labels
    if eps <= 0 or min_pts < 1:
        raise ValueError("need eps > 0 and min_pts >= 1")
    tree = cKDTree(pts)
    neighbor_counts = tree.query_ball_point(pts, eps, return_length=True)
    core = np.nonzero(neighbor_counts >= min_pts)[0]
    if len(core) == 0:
        return labels
    core_set = set(core.tolist())
    # Flood-fill connected components over core points only.
    next_label = 0
    for seed in core:
        if labels[seed] != -1:
            continue
        labels[seed] = next_label
        stack = [seed]
        while stack:
            i = stack.pop()
            for j in tree.query_ball_point(pts[i], eps):
                if j in core_set and labels[j] == -1:
                    labels[j] = next_label
                    stack.append(j)
        next_label += 1
    # Border points: nearest core point within eps decides the cluster.
    border = np.nonzero((labels == -1))[0]
    if len(border):
        core_tree = cKDTree(pts[core])
        dist, idx = core_tree.query(pts[border], k=1)
        hit = dist <= eps
        labels[border[hit]] = labels[core[idx[hit]]]
    return labels


@dataclass(frozen=True)
class CropPair:
    """Aligned image / metric-depth crops of one clustered player."""

    image: np.ndarray        # (h, w, 3) float in [0, 1]
    depth: np.ndarray        # (h, w) metric camera-space depth, NaN off-player
    valid: np.ndarray        # (h, w) bool, True exactly on member pixels
    bbox: tuple[int, int, int, int]  # (x, y, w, h) in the source frame
    cluster_id: int

    def __post_init__(self):
        if self.image.shape[:2] != self.depth.shape or self.depth.shape != self.valid.shape:
            raise ValueError("crop image/depth/valid must share dimensions")


def emit_crop_pairs(capture: Capture, cloud: PointCloud, labels,
                    margin=10) -> list[CropPair]:
    """Per-cluster image and metric-depth crops.

    Depth is the camera-space z of each member point, valid only at member
    pixels. Clusters that project fully outside the frame are skipped.
    """
    labels = np.asarray(labels)
    h, w = capture.ndc_depth.shape
    modelview = capture.glcam.modelview
    out = []
    for cluster_id in sorted(set(labels.tolist()) - {-1}):
        member = labels == cluster_id
        px = cloud.pixels[member]
        inside = (px[:, 0] >= 0) & (px[:, 0] < w) & (px[:, 1] >= 0) & (px[:, 1] < h)
        if not inside.any():
            continue
        px = px[inside]
        pts = cloud.points[member][inside]
        x0 = max(int(px[:, 0].min()) - margin, 0)
        y0 = max(int(px[:, 1].min()) - margin, 0)
        x1 = min(int(px[:, 0].max()) + margin + 1, w)
        y1 = min(int(px[:, 1].max()) + margin + 1, h)
        eye = np.column_stack([pts, np.ones(len(pts))]) @ modelview.T
        depth_vals = -eye[:, 2]
        depth = np.full((y1 - y0, x1 - x0), np.nan)
        valid = np.zeros((y1 - y0, x1 - x0), dtype=bool)
        depth[px[:, 1] - y0, px[:, 0] - x0] = depth_vals
        valid[px[:, 1] - y0, px[:, 0] - x0] = True
        out.append(CropPair(capture.color[y0:y1, x0:x1].copy(), depth, valid,
                            (x0, y0, x1 - x0, y1 - y0), int(cluster_id)))
    return out
