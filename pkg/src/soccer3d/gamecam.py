"""Recovery of a game engine's modelview/projection matrices.

Given an NDC depth buffer, a ground/player pixel segmentation, and a
field-calibrated auxiliary pinhole camera, solve for the nine parameters
(rotation, translation, focal, near and far planes) that map the engine's
world to the captured buffer: ground pixels must unproject onto the plane
points fixed by the auxiliary camera, and player pixels must reproject into
the auxiliary view. The second term pins the near/far parameters, which
collapse under the ground constraint alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .errors import DivergedError, SingularCameraError
from .geometry import Camera, GlCamera, pixel_to_ndc

__all__ = [
    "NdcCapture", "GameCamParams", "RecoveryResult", "ground_targets",
    "initial_params_from_aux", "recover_game_camera", "pixel_to_ndc",
]

DEFAULT_LAMBDA = 0.01
MAX_PIXELS_PER_TERM = 5000


@dataclass(frozen=True)
class NdcCapture:
    """Engine depth buffer plus ground/player pixel lists (disjoint)."""

    depth: np.ndarray          # (H, W) in [0, 1]
    ground_pixels: np.ndarray  # (N, 2) int (u, v)
    player_pixels: np.ndarray  # (M, 2) int (u, v)
    image_size: tuple[int, int]

    def __post_init__(self):
        d = self.depth
        if d.min() < 0 or d.max() > 1:
            raise ValueError("depth buffer values must lie in [0, 1]")
        ground = {tuple(p) for p in np.asarray(self.ground_pixels).tolist()}
        player = {tuple(p) for p in np.asarray(self.player_pixels).tolist()}
        if ground & player:
            raise ValueError("ground and player pixel lists must be disjoint")

    @classmethod
    def from_label_image(cls, depth, labels) -> "NdcCapture":
        """Build from a label image: 0 other, 1 ground, 2 player."""
        labels = np.asarray(labels)
        h, w = labels.shape
        gv, gu = np.nonzero(labels == 1)
        pv, pu = np.nonzero(labels == 2)
        return cls(np.asarray(depth, dtype=float),
                   np.column_stack([gu, gv]),
                   np.column_stack([pu, pv]), (w, h))


@dataclass(frozen=True)
class GameCamParams:
    """Nine engine-camera parameters."""

    rotation: np.ndarray
    translation: np.ndarray
    focal: float
    z_near: float
    z_far: float

    def __post_init__(self):
        if self.focal <= 0:
            raise ValueError("focal must be > 0")
        if not (0 < self.z_near < self.z_far):
            raise ValueError("need 0 < z_near < z_far")
        object.__setattr__(self, "rotation", np.asarray(self.rotation, float))
        object.__setattr__(self, "translation", np.asarray(self.translation, float))

    def to_glcamera(self, image_size) -> GlCamera:
        return GlCamera(geo.gl_modelview(self.rotation, self.translation),
                        geo.gl_projection(self.focal, image_size,
                                          self.z_near, self.z_far),
                        self.z_near, self.z_far, image_size)


def ground_targets(aux: Camera, ground_pixels):
    """World plane points for ground pixels via the auxiliary camera's rays.

    Returns (targets (N, 3) with y = 0, kept mask, n_dropped); rays parallel
    to the plane or intersecting behind the camera are dropped.
    """
    pts, valid = geo.ground_intersections(aux, np.asarray(ground_pixels, float))
    return pts[valid], valid, int((~valid).sum())


def initial_params_from_aux(aux: Camera, z_near=1.0, z_far=1000.0) -> GameCamParams:
    """Initialization: pose and focal from the auxiliary camera, default planes.

    The auxiliary camera cannot be used directly (it carries no near/far
    planes and the engine's world scale is unknown), but it is the only
    available pose prior.
    """
    return GameCamParams(aux.rotation, aux.translation, aux.focal, z_near, z_far)


@dataclass
class RecoveryResult:
    """Recovered camera plus the objective decomposition and trace."""

    glcamera: GlCamera
    objective: float
    ground_objective: float          # sum of squared meters
    player_objective: float          # sum of squared pixels (unweighted)
    objective_history: list = field(default_factory=list)
    n_iterations: int = 0


def _pack(params: GameCamParams):
    return np.concatenate([
        params.rotation, params.translation,
        [np.log(params.focal), np.log(params.z_near),
         np.log(params.z_far - params.z_near)],
    ])


def _unpack(x) -> GameCamParams:
    z_near = float(np.exp(x[7]))
    return GameCamParams(x[0:3], x[3:6], float(np.exp(x[6])),
                         z_near, z_near + float(np.exp(x[8])))


def _subsample(pixels, cap):
    pixels = np.asarray(pixels)
    if len(pixels) <= cap:
        return pixels
    stride = int(np.ceil(len(pixels) / cap))
    return pixels[::stride]


class _Recovery:
    """Residual evaluation state shared across LM iterations."""

    def __init__(self, capture, aux, lam, max_pixels):
        w, h = capture.image_size
        self.image_size = (w, h)
        self.sqrt_lam = np.sqrt(lam)
        gp = _subsample(capture.ground_pixels, max_pixels)
        pp = _subsample(capture.player_pixels, max_pixels)
        targets, kept, _ = ground_targets(aux, gp)
        gp = gp[kept]
        self.targets = targets
        depth = capture.depth
        # Homogeneous NDC coordinates are fixed; only the matrices change.
        self.ground_ndc = self._ndc_h(gp, depth[gp[:, 1], gp[:, 0]])
        self.player_ndc = self._ndc_h(pp, depth[pp[:, 1], pp[:, 0]])
        self.player_obs = pp.astype(float)
        self.aux = aux

    def _ndc_h(self, pixels, depths):
        ndc = pixel_to_ndc(pixels.astype(float), depths, self.image_size)
        return np.column_stack([np.atleast_2d(ndc), np.ones(len(pixels))])

    def unproject(self, x, ndc_h):
        params = _unpack(x)
        mv = geo.gl_modelview(params.rotation, params.translation)
        proj = geo.gl_projection(params.focal, self.image_size,
                                 params.z_near, params.z_far)
        try:
            a = np.linalg.inv(mv) @ np.linalg.inv(proj)
        except np.linalg.LinAlgError as exc:
            raise SingularCameraError(str(exc)) from exc
        world_h = ndc_h @ a.T
        w = world_h[:, 3]
        if np.any(np.abs(w) < 1e-12):
            return None
        return world_h[:, :3] / w[:, None]

    def residuals(self, x):
        """Stacked residual vector, or None if the candidate is infeasible."""
        ground_world = self.unproject(x, self.ground_ndc)
        if ground_world is None:
            return None
        parts = [(ground_world - self.targets).ravel()]
        if len(self.player_ndc) and self.sqrt_lam > 0:
            player_world = self.unproject(x, self.player_ndc)
            if player_world is None:
                return None
            uv, depth = geo.project_with_depth(self.aux, player_world)
            if np.any(depth <= geo._EPS_Z):
                return None
            parts.append(self.sqrt_lam * (uv - self.player_obs).ravel())
        return np.concatenate(parts)

    def decompose(self, x):
        """(ground sum of squares, unweighted player sum of squares)."""
        ground_world = self.unproject(x, self.ground_ndc)
        ground = float(((ground_world - self.targets) ** 2).sum()) \
            if ground_world is not None else float("inf")
        player = 0.0
        if len(self.player_ndc):
            player_world = self.unproject(x, self.player_ndc)
            if player_world is None:
                return ground, float("inf")
            uv, depth = geo.project_with_depth(self.aux, player_world)
            if np.any(depth <= geo._EPS_Z):
                return ground, float("inf")
            player = float(((uv - self.player_obs) ** 2).sum())
        return ground, player


def recover_game_camera(capture: NdcCapture, aux: Camera,
                        init: GameCamParams, lam=DEFAULT_LAMBDA,
                        max_pixels=MAX_PIXELS_PER_TERM, max_iterations=150,
                        rel_tol=1e-14, min_ground=100, min_player=20) -> RecoveryResult:
    """Solve for the engine camera by damped least squares over 9 parameters.

    The parameter vector is (rotation, translation, log focal, log z_near,
    log(z_far - z_near)), so positivity holds by construction and the
    modelview rotation stays exactly orthonormal. Pixel sets are subsampled
    to at most max_pixels each (uniform stride). Accepted steps strictly
    decrease the objective.

    Raises:
        ValueError: fewer than min_ground/min_player pixels (set
            min_player=0 for ground-only probes).
        SingularCameraError: a camera matrix became non-invertible.
        DivergedError: non-finite objective.
    """
    if len(capture.ground_pixels) < min_ground:
        raise ValueError(f"need >= {min_ground} ground pixels, "
                         f"got {len(capture.ground_pixels)}")
    if len(capture.player_pixels) < min_player:
        raise ValueError(f"need >= {min_player} player pixels, "
                         f"got {len(capture.player_pixels)}")

    state = _Recovery(capture, aux, lam, max_pixels)
    x = _pack(init)
    res = state.residuals(x)
    if res is None:
        raise DivergedError("initialization is infeasible (degenerate unprojection)")
    obj = float(res @ res)
    if not np.isfinite(obj):
        raise DivergedError("non-finite objective at initialization")
    history = [obj]

    def finish(x, history, n_iter):
        params = _unpack(x)
        ground, player = state.decompose(x)
        return RecoveryResult(params.to_glcamera(state.image_size),
                              history[-1], ground, player, history, n_iter)

    if obj < 1e-12:
        return finish(x, history, 0)

    mu = 1e-6
    n_iter = 0
    steps = np.maximum(1e-7, 1e-7 * np.abs(x))
    for n_iter in range(1, max_iterations + 1):
        jac = np.empty((len(res), 9))
        for j in range(9):
            dx = np.zeros(9)
            dx[j] = steps[j]
            rp = state.residuals(x + dx)
            rm = state.residuals(x - dx)
            if rp is None or rm is None:
                rp = res if rp is None else rp
                rm = res if rm is None else rm
            jac[:, j] = (rp - rm) / (2 * steps[j])
        grad = jac.T @ res
        hess = jac.T @ jac
        diag = np.maximum(np.diag(hess), 1e-12)
        accepted = False
        for _ in range(30):
            try:
                delta = np.linalg.solve(hess + mu * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                mu *= 5.0
                continue
            cand = x + delta
            cand_res = state.residuals(cand)
            if cand_res is None:
                mu *= 5.0
                continue
            cand_obj = float(cand_res @ cand_res)
            if not np.isfinite(cand_obj):
                raise DivergedError("non-finite objective during recovery")
            if cand_obj < obj:
                x, res = cand, cand_res
                prev, obj = obj, cand_obj
                history.append(obj)
                mu = max(mu * 0.3, 1e-14)
                accepted = True
                break
            mu *= 5.0
        if not accepted or obj < 1e-14:
            break
        if (prev - obj) <= rel_tol * max(prev, 1e-300):
            break
    return finish(x, history, n_iter)
