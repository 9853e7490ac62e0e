"""Field-marking camera calibration.

Aligns a planar field-line template with detected edge points: a squared
distance map over the edges provides the alignment cost, a homography from
manual correspondences initializes the first frame, and damped least squares
refines the seven camera parameters (focal, rotation, translation) per frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import geometry as geo
from .errors import (
    DegenerateCorrespondencesError,
    DivergedError,
    EmptyEdgesError,
    FrameCalibrationError,
    InsufficientVisibilityError,
)
from .geometry import Camera
from .imageops import sobel_magnitude, to_gray

# Standard association-football markings, meters. All configurable via
# FieldTemplate.build().
FIELD_LENGTH = 105.0
FIELD_WIDTH = 68.0
PENALTY_BOX_DEPTH = 16.5
PENALTY_BOX_WIDTH = 40.32
GOAL_AREA_DEPTH = 5.5
GOAL_AREA_WIDTH = 18.32
CENTER_CIRCLE_RADIUS = 9.15
PENALTY_ARC_RADIUS = 9.15
PENALTY_SPOT_DIST = 11.0
CORNER_ARC_RADIUS = 1.0


def _seg(x0, z0, x1, z1):
    return np.array([[x0, 0.0, z0], [x1, 0.0, z1]])


def _arc_segments(cx, cz, radius, a0, a1, n):
    """Polyline tessellation of an arc in the y = 0 plane."""
    angles = np.linspace(a0, a1, n + 1)
    pts = np.column_stack([cx + radius * np.cos(angles),
                           np.zeros(n + 1),
                           cz + radius * np.sin(angles)])
    return [np.array([pts[i], pts[i + 1]]) for i in range(n)]


@dataclass(frozen=True)
class FieldTemplate:
    """Planar field-line template in the y = 0 plane.

    line_segments has shape (N, 2, 3): straight segments, with circles and
    arcs pre-tessellated into polylines. Symmetric under x -> -x and z -> -z.
    """

    length: float
    width: float
    line_segments: np.ndarray

    @classmethod
    def build(cls, length=FIELD_LENGTH, width=FIELD_WIDTH,
              penalty_depth=PENALTY_BOX_DEPTH, penalty_width=PENALTY_BOX_WIDTH,
              goal_area_depth=GOAL_AREA_DEPTH, goal_area_width=GOAL_AREA_WIDTH,
              circle_radius=CENTER_CIRCLE_RADIUS, arc_radius=PENALTY_ARC_RADIUS,
              spot_dist=PENALTY_SPOT_DIST, corner_radius=CORNER_ARC_RADIUS,
              circle_segments=72) -> "FieldTemplate":
        hl, hw = length / 2.0, width / 2.0
        segs = [
            _seg(-hl, -hw, hl, -hw),            # touchlines
            _seg(-hl, hw, hl, hw),
            _seg(-hl, -hw, -hl, hw),            # goal lines
            _seg(hl, -hw, hl, hw),
            _seg(0.0, -hw, 0.0, hw),            # halfway line
        ]
        for side in (1.0, -1.0):
            gx = side * hl
            px = side * (hl - penalty_depth)
            segs += [
                _seg(px, -penalty_width / 2, px, penalty_width / 2),
                _seg(px, -penalty_width / 2, gx, -penalty_width / 2),
                _seg(px, penalty_width / 2, gx, penalty_width / 2),
            ]
            ax = side * (hl - goal_area_depth)
            segs += [
                _seg(ax, -goal_area_width / 2, ax, goal_area_width / 2),
                _seg(ax, -goal_area_width / 2, gx, -goal_area_width / 2),
                _seg(ax, goal_area_width / 2, gx, goal_area_width / 2),
            ]
            # Penalty arc: the part of the circle around the penalty spot
            # outside the box.
            spot = side * (hl - spot_dist)
            cos_cut = (px - spot) / (side * arc_radius)
            alpha = float(np.arccos(np.clip(cos_cut, -1.0, 1.0)))
            if side > 0:
                segs += _arc_segments(spot, 0.0, arc_radius, alpha,
                                      2 * np.pi - alpha, 16)
            else:
                segs += _arc_segments(spot, 0.0, arc_radius, alpha - np.pi,
                                      np.pi - alpha, 16)
            for zs in (1.0, -1.0):
                # Corner quarter-arc, sweeping into the field.
                if side > 0 and zs < 0:
                    a_start, a_end = np.pi / 2, np.pi
                elif side > 0 and zs > 0:
                    a_start, a_end = np.pi, 3 * np.pi / 2
                elif side < 0 and zs > 0:
                    a_start, a_end = 3 * np.pi / 2, 2 * np.pi
                else:
                    a_start, a_end = 0.0, np.pi / 2
                segs += _arc_segments(gx, zs * hw, corner_radius, a_start, a_end, 6)
        if circle_radius > 0:
            segs += _arc_segments(0.0, 0.0, circle_radius, 0.0, 2 * np.pi,
                                  circle_segments)
        template = np.stack(segs)
        template.flags.writeable = False
        return cls(length, width, template)

    def to_dict(self) -> dict:
        return {
            "length": self.length,
            "width": self.width,
            "segments": [[list(p) for p in seg] for seg in self.line_segments],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FieldTemplate":
        if "segments" in d and d["segments"]:
            segs = np.asarray(d["segments"], dtype=float)
            segs.flags.writeable = False
            return cls(d["length"], d["width"], segs)
        return cls.build(d["length"], d["width"])


def sample_template_points(template: FieldTemplate, spacing: float) -> np.ndarray:
    """Points along every template segment at <= spacing intervals.

    Each segment contributes ceil(len/spacing) + 1 points including both
    endpoints; all returned points lie in y = 0.
    """
    if spacing <= 0:
        raise ValueError(f"spacing must be > 0, got {spacing}")
    out = []
    for p0, p1 in template.line_segments:
        length = float(np.linalg.norm(p1 - p0))
        n = max(int(np.ceil(length / spacing)), 1) if length > 0 else 1
        t = np.linspace(0.0, 1.0, n + 1)[:, None]
        out.append(p0 + t * (p1 - p0))
    return np.concatenate(out, axis=0)


@dataclass(frozen=True)
class EdgeSet:
    """Detected edge pixels of one frame; points are (u, v) = (col, row)."""

    points: np.ndarray
    image_size: tuple[int, int]

    def __init__(self, points, image_size):
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        w, h = int(image_size[0]), int(image_size[1])
        if len(points):
            if (points[:, 0].min() < 0 or points[:, 0].max() >= w
                    or points[:, 1].min() < 0 or points[:, 1].max() >= h):
                raise ValueError("edge points must lie inside [0, W) x [0, H)")
        pts = points.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "image_size", (w, h))

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "EdgeSet":
        vs, us = np.nonzero(np.asarray(mask))
        h, w = np.asarray(mask).shape
        return cls(np.column_stack([us, vs]).astype(float), (w, h))

    def to_mask(self) -> np.ndarray:
        w, h = self.image_size
        mask = np.zeros((h, w), dtype=bool)
        if len(self.points):
            u = np.clip(np.rint(self.points[:, 0]).astype(int), 0, w - 1)
            v = np.clip(np.rint(self.points[:, 1]).astype(int), 0, h - 1)
            mask[v, u] = True
        return mask


@dataclass(frozen=True)
class DistanceMap:
    """Squared pixel distance to the nearest edge point, on the pixel grid."""

    values: np.ndarray
    image_size: tuple[int, int]

    def sample(self, pixels: np.ndarray) -> np.ndarray:
        return bilinear_sample(self.values, pixels)


def bilinear_sample(grid: np.ndarray, pixels: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of grid[v, u] at float (u, v); clamped at borders."""
    h, w = grid.shape
    u = np.clip(np.asarray(pixels, float)[:, 0], 0.0, w - 1.0)
    v = np.clip(np.asarray(pixels, float)[:, 1], 0.0, h - 1.0)
    u0 = np.floor(u).astype(int)
    v0 = np.floor(v).astype(int)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    fu = u - u0
    fv = v - v0
    top = grid[v0, u0] * (1 - fu) + grid[v0, u1] * fu
    bot = grid[v1, u0] * (1 - fu) + grid[v1, u1] * fu
    return top * (1 - fv) + bot * fv


def build_distance_map(edges: EdgeSet) -> DistanceMap:
    """Exact squared Euclidean distance transform of the edge set.

    Edge points are rasterized to the pixel grid (rounded to the nearest
    pixel); the squared distance is computed exactly in integer arithmetic
    from the nearest-edge indices.
    """
    if len(edges.points) == 0:
        raise EmptyEdgesError("cannot build a distance map from an empty edge set")
    w, h = edges.image_size
    occupied = edges.to_mask()
    # distance_transform_edt measures to the nearest zero; features are edges.
    indices = ndimage.distance_transform_edt(~occupied, return_distances=False,
                                             return_indices=True)
    vi, ui = np.indices((h, w))
    dv = vi - indices[0]
    du = ui - indices[1]
    values = (du * du + dv * dv).astype(np.float64)
    values.flags.writeable = False
    return DistanceMap(values, (w, h))


def extract_edges(image, threshold=0.25, exclusion_mask=None) -> EdgeSet:
    """Fallback gradient-threshold edge extractor (Sobel magnitude).

    Args:
        image: RGB or grayscale array (uint8 or float in [0, 1]).
        threshold: Magnitude threshold on the [0, 1]-normalized gradient.
        exclusion_mask: Optional boolean mask of pixels to ignore (e.g.
            detected people).
    """
    arr = np.asarray(image, dtype=np.float64)
    if arr.dtype != np.float64 or arr.max() > 1.5:
        arr = arr / 255.0
    mag = sobel_magnitude(to_gray(arr))
    keep = mag > threshold
    if exclusion_mask is not None:
        keep &= ~np.asarray(exclusion_mask, dtype=bool)
    h, w = mag.shape
    vs, us = np.nonzero(keep)
    return EdgeSet(np.column_stack([us, vs]).astype(float), (w, h))


def _dlt_homography(world_xz: np.ndarray, pixels: np.ndarray) -> np.ndarray:
    """Direct linear transform with Hartley normalization.

    Maps (x, z, 1) plane coordinates to (u, v, 1) pixels.
    """

    def normalizer(pts):
        mean = pts.mean(axis=0)
        scale = np.sqrt(2.0) / max(np.linalg.norm(pts - mean, axis=1).mean(), 1e-12)
        t = np.array([[scale, 0, -scale * mean[0]],
                      [0, scale, -scale * mean[1]],
                      [0, 0, 1.0]])
        return t

    tw = normalizer(world_xz)
    tp = normalizer(pixels)
    wn = (np.column_stack([world_xz, np.ones(len(world_xz))]) @ tw.T)
    pn = (np.column_stack([pixels, np.ones(len(pixels))]) @ tp.T)
    rows = []
    for (x, z, _), (u, v, _) in zip(wn, pn):
        rows.append([x, z, 1, 0, 0, 0, -u * x, -u * z, -u])
        rows.append([0, 0, 0, x, z, 1, -v * x, -v * z, -v])
    a = np.asarray(rows)
    _, s, vt = np.linalg.svd(a)
    if s[-2] < 1e-9 * s[0]:
        raise DegenerateCorrespondencesError(
            "correspondences are rank deficient (collinear world points?)")
    hn = vt[-1].reshape(3, 3)
    return np.linalg.inv(tp) @ hn @ tw


def init_camera_from_correspondences(pairs, image_size) -> Camera:
    """Camera from >= 4 (world point on y = 0, pixel) pairs.

    Fits the plane-to-image homography by DLT, extracts the focal length
    from the orthonormality constraints on the first two rotation columns,
    orthonormalizes the rotation, and recovers the translation. The
    principal point is fixed at the image center.

    Raises:
        DegenerateCorrespondencesError: rank-deficient DLT or no positive
            focal-length solution.
    """
    world = np.asarray([np.asarray(p[0], dtype=float) for p in pairs])
    pixels = np.asarray([np.asarray(p[1], dtype=float) for p in pairs])
    if len(world) < 4:
        raise DegenerateCorrespondencesError(f"need >= 4 pairs, got {len(world)}")
    if np.abs(world[:, 1]).max() > 1e-9:
        raise ValueError("correspondence world points must lie on y = 0")
    hom = _dlt_homography(world[:, [0, 2]], pixels)
    w, h = int(image_size[0]), int(image_size[1])
    cx, cy = w / 2.0, h / 2.0
    # Columns of K^-1 H scale to (r_x, r_z, t); focal from |b1| = |b2|, b1.b2 = 0.
    p = hom[0, :] - cx * hom[2, :]
    q = hom[1, :] - cy * hom[2, :]
    r = hom[2, :]
    a1 = p[0] * p[1] + q[0] * q[1]
    b1 = r[0] * r[1]
    a2 = (p[0] ** 2 + q[0] ** 2) - (p[1] ** 2 + q[1] ** 2)
    b2 = r[0] ** 2 - r[1] ** 2
    denom = a1 * a1 + a2 * a2
    if denom < 1e-18:
        raise DegenerateCorrespondencesError("focal length unobservable")
    inv_f2 = -(a1 * b1 + a2 * b2) / denom
    if not np.isfinite(inv_f2) or inv_f2 <= 0:
        raise DegenerateCorrespondencesError(
            f"no positive focal-length solution (1/f^2 = {inv_f2:.3g})")
    focal = 1.0 / np.sqrt(inv_f2)
    k_inv = np.array([[1 / focal, 0, -cx / focal],
                      [0, 1 / focal, -cy / focal],
                      [0, 0, 1.0]])
    b = k_inv @ hom
    scale = 2.0 / (np.linalg.norm(b[:, 0]) + np.linalg.norm(b[:, 1]))
    r_x = scale * b[:, 0]
    r_z = scale * b[:, 1]
    t = scale * b[:, 2]
    rot = np.column_stack([r_x, np.cross(r_z, r_x), r_z])
    # Points must sit in front of the camera; flip the homography sign if not.
    if (rot[2] @ world[0] + t[2]) < 0:
        r_x, r_z, t = -r_x, -r_z, -t
        rot = np.column_stack([r_x, np.cross(r_z, r_x), r_z])
    rot = geo._orthonormalize(rot)
    return Camera(focal, geo.axis_angle_from_rotation(rot), t,
                  image_size=(w, h))


@dataclass
class RefineResult:
    """Refined camera plus the objective trace of accepted steps."""

    camera: Camera
    initial_objective: float
    final_objective: float
    objective_history: list = field(default_factory=list)
    n_iterations: int = 0
    n_visible: int = 0


def _camera_from_params(params, image_size, principal_point):
    return Camera(params[0], params[1:4], params[4:7],
                  principal_point=principal_point, image_size=image_size)


def _alignment_residuals_batch(param_stack, image_size, principal_point, grid,
                               template_points):
    """sqrt of the distance grid at projected template points, for a stack of
    parameter vectors at once.

    Returns (residuals (K, N), visible (K, N)); invisible entries are 0, so
    each row's sum of squares is that camera's alignment objective.
    """
    w, h = image_size
    rots = np.stack([geo.rotation_from_axis_angle(p[1:4]) for p in param_stack])
    cam = template_points[None] @ rots.transpose(0, 2, 1) + param_stack[:, None, 4:7]
    z = cam[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = (np.asarray(principal_point, dtype=float)
              + param_stack[:, None, 0:1] * cam[..., :2] / z[..., None])
    visible = (z > geo._EPS_Z) & (uv[..., 0] >= 0) & (uv[..., 0] <= w - 1) \
        & (uv[..., 1] >= 0) & (uv[..., 1] <= h - 1)
    uv = np.where(visible[..., None], uv, 0.0)
    k, n = z.shape
    vals = bilinear_sample(grid, uv.reshape(-1, 2)).reshape(k, n)
    res = np.where(visible, np.sqrt(np.maximum(vals, 0.0)), 0.0)
    return res, visible


def _alignment_residuals(params, image_size, principal_point, grid,
                         template_points):
    """Single-camera version of :func:`_alignment_residuals_batch`."""
    res, visible = _alignment_residuals_batch(
        np.asarray(params, dtype=float)[None, :], image_size, principal_point,
        grid, template_points)
    return res[0], visible[0]


def _lm_alignment_stage(params, image_size, principal_point, grid,
                        template_points, n_total, min_visible_frac,
                        max_iterations, rel_tol):
    """One damped-least-squares descent on a (possibly smoothed) distance grid.

    Returns (params, accepted-objective history, iterations run). Accepted
    steps strictly decrease the objective, so the history is monotone. The
    central-difference Jacobian is evaluated for all 14 perturbed parameter
    vectors in one batch.

    Raises:
        DivergedError: the objective became non-finite.
    """
    res, visible = _alignment_residuals(params, image_size, principal_point,
                                        grid, template_points)
    obj = float((res ** 2).sum())
    if not np.isfinite(obj):
        raise DivergedError("non-finite objective at initialization")
    history = [obj]
    if obj == 0.0 or max_iterations == 0:
        return params, history, 0

    mu = 1e-3
    steps = np.maximum(1e-6, 1e-6 * np.abs(params))
    n_iter = 0
    for n_iter in range(1, max_iterations + 1):
        stack = np.repeat(params[None, :], 14, axis=0)
        for j in range(7):
            stack[2 * j, j] += steps[j]
            stack[2 * j + 1, j] -= steps[j]
        all_res, _ = _alignment_residuals_batch(stack, image_size,
                                                principal_point, grid,
                                                template_points)
        idx = np.nonzero(visible)[0]
        base = res[idx]
        jac = ((all_res[0::2][:, idx] - all_res[1::2][:, idx])
               / (2 * steps[:, None])).T
        grad = jac.T @ base
        hess = jac.T @ jac
        diag = np.maximum(np.diag(hess), 1e-12)
        accepted = False
        for _ in range(25):
            try:
                delta = np.linalg.solve(hess + mu * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                mu *= 4.0
                continue
            cand = params + delta
            if cand[0] <= 0:
                mu *= 4.0
                continue
            cand_res, cand_vis = _alignment_residuals(
                cand, image_size, principal_point, grid, template_points)
            if cand_vis.sum() < min_visible_frac * n_total:
                mu *= 4.0
                continue
            cand_obj = float((cand_res ** 2).sum())
            if not np.isfinite(cand_obj):
                raise DivergedError("non-finite objective during refinement")
            if cand_obj < obj:
                params, res, visible = cand, cand_res, cand_vis
                prev, obj = obj, cand_obj
                history.append(obj)
                mu = max(mu * 0.4, 1e-12)
                accepted = True
                break
            mu *= 4.0
        if not accepted or obj == 0.0:
            break
        if (prev - obj) <= rel_tol * max(prev, 1e-300):
            break
    return params, history, n_iter


def refine_camera(init: Camera, dmap: DistanceMap, template_points,
                  smooth_sigma=1.0, polish_sigma=0.75, max_iterations=60,
                  rel_tol=1e-9, min_visible_frac=0.25) -> RefineResult:
    """Minimize the summed squared edge distance of projected template points.

    Damped least squares over the 7 parameters (focal, rotation, translation)
    with a central-difference Jacobian and bilinear map sampling, run as a
    coarse-to-fine schedule: a descent on the Gaussian-smoothed map
    (smooth_sigma) widens the convergence basin, a descent on the raw map
    traverses the shallow focal/translation valley to its sharp optimum, and
    a final descent on a lightly smoothed map (polish_sigma) re-centers
    within the rasterization-noise basin. Only points projecting inside the
    image contribute; the visible set is refreshed after each accepted step.

    Initial/final objectives are reported on the raw map; the returned camera
    is the best raw-objective stage iterate, so the result never exceeds the
    initial objective. objective_history is the final stage's accepted-step
    trace and decreases monotonically.

    Raises:
        InsufficientVisibilityError: fewer than min_visible_frac of the
            template points project inside the image at the initialization.
        DivergedError: the objective became non-finite.
    """
    template_points = np.asarray(template_points, dtype=float)
    params = np.concatenate([[init.focal], init.rotation, init.translation])
    n_total = len(template_points)
    size = init.image_size
    pp = init.principal_point

    def raw_objective(p):
        res, vis = _alignment_residuals(p, size, pp, dmap.values,
                                        template_points)
        return float((res ** 2).sum()), vis

    initial_raw, visible = raw_objective(params)
    if visible.sum() < min_visible_frac * n_total:
        raise InsufficientVisibilityError(
            f"only {visible.sum()}/{n_total} template points visible")
    if not np.isfinite(initial_raw):
        raise DivergedError("non-finite objective at initialization")
    if initial_raw == 0.0:
        return RefineResult(init, 0.0, 0.0, [0.0], 0, int(visible.sum()))

    grids = []
    if smooth_sigma > 0:
        grids.append(ndimage.gaussian_filter(dmap.values, smooth_sigma))
    grids.append(dmap.values)
    if polish_sigma > 0:
        grids.append(ndimage.gaussian_filter(dmap.values, polish_sigma))

    total_iter = 0
    best, best_raw, best_vis = params, initial_raw, visible
    current = params
    history = [initial_raw]
    for grid in grids:
        current, history, it = _lm_alignment_stage(
            current, size, pp, grid, template_points, n_total,
            min_visible_frac, max_iterations, rel_tol)
        total_iter += it
        current_raw, vis = raw_objective(current)
        if current_raw < best_raw:
            best, best_raw, best_vis = current, current_raw, vis
    refined = _camera_from_params(best, size, pp)
    return RefineResult(refined, initial_raw, best_raw, history,
                        total_iter, int(best_vis.sum()))


def calibrate_sequence(frames, first_frame_pairs, template=None, spacing=0.5,
                       **refine_kwargs) -> list[Camera]:
    """Calibrate a frame sequence of edge sets.

    Frame 0 is initialized from the manual correspondences; each later frame
    warm-starts from the previous solution.

    Raises:
        FrameCalibrationError: on per-frame failure; carries the frame index
            and the cameras solved for earlier frames.
    """
    frames = list(frames)
    if not frames:
        raise ValueError("no frames to calibrate")
    if template is None:
        template = FieldTemplate.build()
    points = sample_template_points(template, spacing)
    cameras: list[Camera] = []
    current = None
    for k, edges in enumerate(frames):
        try:
            if current is None:
                current = init_camera_from_correspondences(
                    first_frame_pairs, edges.image_size)
            dmap = build_distance_map(edges)
            current = refine_camera(current, dmap, points, **refine_kwargs).camera
        except Exception as exc:  # noqa: BLE001 - tagged and re-raised
            raise FrameCalibrationError(k, cameras, exc) from exc
        cameras.append(current)
    return cameras
