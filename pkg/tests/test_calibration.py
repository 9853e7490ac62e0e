import numpy as np
import pytest

from soccer3d import calibration as cal
from soccer3d import geometry as geo
from soccer3d import synthetic as synth
from soccer3d.errors import (
    DegenerateCorrespondencesError,
    EmptyEdgesError,
    FrameCalibrationError,
    InsufficientVisibilityError,
)
from soccer3d.calibration import EdgeSet, FieldTemplate


def rotation_error_deg(cam_a, cam_b):
    r = cam_a.rotation_matrix @ cam_b.rotation_matrix.T
    cos_t = np.clip((np.trace(r) - 1) / 2, -1, 1)
    return np.degrees(np.arccos(cos_t))


def perturbed(camera, rot_deg=2.0, focal_frac=0.02, seed=0):
    rng = np.random.default_rng(seed)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    delta = geo.rotation_from_axis_angle(axis * np.radians(rot_deg))
    rot = delta @ camera.rotation_matrix
    return geo.Camera(camera.focal * (1 + focal_frac),
                      geo.axis_angle_from_rotation(rot),
                      camera.translation, camera.principal_point,
                      camera.image_size)


class TestTemplate:
    def test_all_points_on_ground(self):
        template = FieldTemplate.build()
        pts = cal.sample_template_points(template, 0.5)
        assert np.abs(pts[:, 1]).max() == 0.0

    def test_fencepost_single_segment(self):
        template = FieldTemplate(10.0, 10.0,
                                 np.array([[[0, 0, 0], [10.0, 0, 0]]]))
        pts = cal.sample_template_points(template, 1.0)
        assert len(pts) == 11

    def test_count_matches_closed_form(self):
        template = FieldTemplate.build()
        spacing = 0.5
        want = 0
        for p0, p1 in template.line_segments:
            want += int(np.ceil(np.linalg.norm(p1 - p0) / spacing)) + 1
        pts = cal.sample_template_points(template, spacing)
        assert len(pts) == want

    def test_mirror_symmetry(self):
        template = FieldTemplate.build()
        pts = cal.sample_template_points(template, 0.5)
        for flip in ([-1, 1, 1], [1, 1, -1]):
            mirrored = pts * np.asarray(flip, dtype=float)
            # The mirrored point set must equal the point set (as a set).
            a = np.array(sorted(map(tuple, np.round(pts, 9))))
            b = np.array(sorted(map(tuple, np.round(mirrored, 9))))
            assert np.abs(a - b).max() < 1e-9

    def test_invalid_spacing(self):
        with pytest.raises(ValueError):
            cal.sample_template_points(FieldTemplate.build(), 0.0)

    def test_json_round_trip(self):
        template = FieldTemplate.build()
        back = FieldTemplate.from_dict(template.to_dict())
        assert np.allclose(back.line_segments, template.line_segments)


class TestDistanceMap:
    def test_zero_at_edges(self):
        edges = EdgeSet(np.array([[10.0, 10.0], [3.0, 7.0]]), (32, 32))
        dmap = cal.build_distance_map(edges)
        assert dmap.values[10, 10] == 0.0
        assert dmap.values[7, 3] == 0.0

    def test_single_point_squared_distance(self):
        edges = EdgeSet(np.array([[10.0, 10.0]]), (32, 32))
        dmap = cal.build_distance_map(edges)
        assert dmap.values[10, 13] == 9.0  # pixel (13, 10): 3^2

    def test_empty_edges(self):
        with pytest.raises(EmptyEdgesError):
            cal.build_distance_map(EdgeSet(np.zeros((0, 2)), (32, 32)))

    def test_matches_brute_force(self, rng):
        for _ in range(5):
            n = rng.integers(1, 40)
            pts = np.column_stack([rng.integers(0, 64, n),
                                   rng.integers(0, 64, n)]).astype(float)
            dmap = cal.build_distance_map(EdgeSet(pts, (64, 64)))
            vi, ui = np.indices((64, 64))
            du = ui[..., None] - pts[:, 0]
            dv = vi[..., None] - pts[:, 1]
            brute = (du * du + dv * dv).min(axis=-1)
            assert np.array_equal(dmap.values, brute)

    def test_bilinear_sampling(self):
        edges = EdgeSet(np.array([[0.0, 0.0]]), (8, 8))
        dmap = cal.build_distance_map(edges)
        # Between (1,0)->1 and (2,0)->4 the interpolant is linear.
        got = dmap.sample(np.array([[1.5, 0.0]]))[0]
        assert abs(got - 2.5) < 1e-12


def synth_pairs(camera, world_points):
    return [(p, geo.project(camera, p)) for p in world_points]


class TestInitFromCorrespondences:
    def make_truth(self, seed=0):
        rng = np.random.default_rng(seed)
        pos = np.array([rng.uniform(-5, 5), rng.uniform(18, 28), rng.uniform(45, 60)])
        target = np.array([rng.uniform(-5, 5), 0.0, rng.uniform(-5, 5)])
        return synth.look_at_camera(pos, target, rng.uniform(900, 1500), (960, 540))

    def test_recovers_focal_from_four_points(self):
        truth = self.make_truth()
        world = [np.array([x, 0.0, z]) for x, z in
                 [(-20, -15), (20, -15), (20, 15), (-20, 15)]]
        cam = cal.init_camera_from_correspondences(synth_pairs(truth, world),
                                                   (960, 540))
        assert abs(cam.focal - truth.focal) / truth.focal < 0.01
        uv = geo.project(cam, np.array(world))
        want = geo.project(truth, np.array(world))
        assert np.linalg.norm(uv - want, axis=1).max() <= 2.0

    def test_collinear_points_degenerate(self):
        truth = self.make_truth()
        world = [np.array([x, 0.0, 0.0]) for x in (-20, -10, 0, 10)]
        with pytest.raises(DegenerateCorrespondencesError):
            cal.init_camera_from_correspondences(synth_pairs(truth, world),
                                                 (960, 540))

    def test_too_few_pairs(self):
        truth = self.make_truth()
        world = [np.array([x, 0.0, z]) for x, z in [(-20, -15), (20, -15), (0, 15)]]
        with pytest.raises(DegenerateCorrespondencesError):
            cal.init_camera_from_correspondences(synth_pairs(truth, world),
                                                 (960, 540))

    def test_noisy_monte_carlo(self):
        # 8 noisy correspondences (sigma = 1 px): reprojection RMSE <= 3 px,
        # averaged over 100 trials.
        rng = np.random.default_rng(7)
        rmses = []
        for trial in range(100):
            truth = self.make_truth(seed=trial)
            world = [np.array([x, 0.0, z])
                     for x, z in [(-25, -15), (0, -15), (25, -15), (-25, 15),
                                  (0, 15), (25, 15), (-12, 0), (12, 0)]]
            pairs = [(p, geo.project(truth, p) + rng.normal(scale=1.0, size=2))
                     for p in world]
            cam = cal.init_camera_from_correspondences(pairs, (960, 540))
            uv = geo.project(cam, np.array(world))
            want = np.array([px for _, px in pairs])
            rmses.append(np.sqrt(np.mean(np.sum((uv - want) ** 2, axis=1))))
        assert np.mean(rmses) <= 3.0


class TestRefineCamera:
    def test_exact_zero_fixed_point(self):
        # Edges constructed so the init projects exactly onto zero cells.
        scene = synth.make_scene(seed=3)
        truth = scene.camera
        w, h = truth.image_size
        rng = np.random.default_rng(5)
        px = np.column_stack([rng.integers(50, w - 50, 200),
                              rng.integers(h // 2, h - 20, 200)]).astype(float)
        world, valid = geo.ground_intersections(truth, px)
        world = world[valid]
        px = px[valid]
        dmap = cal.build_distance_map(EdgeSet(px, (w, h)))
        result = cal.refine_camera(truth, dmap, world)
        assert result.final_objective < 1e-9
        assert abs(result.camera.focal - truth.focal) < 1e-6 * truth.focal
        assert np.abs(result.camera.rotation - truth.rotation).max() < 1e-6
        assert np.abs(result.camera.translation - truth.translation).max() < 1e-6

    def test_recovers_perturbed_camera(self):
        scene = synth.make_scene(seed=11)
        edges = synth.render_edges(scene)
        dmap = cal.build_distance_map(edges)
        points = cal.sample_template_points(scene.template, 0.5)
        init = perturbed(scene.camera, rot_deg=2.0, focal_frac=0.02, seed=1)
        result = cal.refine_camera(init, dmap, points)
        assert rotation_error_deg(result.camera, scene.camera) < 0.2
        assert abs(result.camera.focal - scene.camera.focal) / scene.camera.focal < 0.005

    def test_objective_monotone_and_bounded(self):
        scene = synth.make_scene(seed=13)
        edges = synth.render_edges(scene)
        dmap = cal.build_distance_map(edges)
        points = cal.sample_template_points(scene.template, 0.5)
        init = perturbed(scene.camera, rot_deg=1.5, focal_frac=0.01, seed=2)
        result = cal.refine_camera(init, dmap, points)
        hist = np.array(result.objective_history)
        assert (np.diff(hist) < 0).all()
        assert result.final_objective <= result.initial_objective

    def test_insufficient_visibility(self):
        scene = synth.make_scene(seed=17)
        edges = synth.render_edges(scene)
        dmap = cal.build_distance_map(edges)
        points = cal.sample_template_points(scene.template, 0.5)
        away = synth.look_at_camera([0, 20, 200], [100, 15, 350], 1200, (960, 540))
        with pytest.raises(InsufficientVisibilityError):
            cal.refine_camera(away, dmap, points)


class TestCalibrateSequence:
    @staticmethod
    def correspondence_pairs(camera):
        world = [np.array([x, 0.0, z]) for x, z in
                 [(-20, -15), (20, -15), (20, 15), (-20, 15), (0, 0), (-30, 0)]]
        return [(p, geo.project(camera, p)) for p in world]

    def test_static_sequence_is_stationary(self):
        scene = synth.make_scene(seed=23)
        edges = synth.render_edges(scene)
        frames = [edges] * 10
        cams = cal.calibrate_sequence(frames, self.correspondence_pairs(scene.camera))
        assert len(cams) == 10
        for cam in cams[1:]:
            assert abs(cam.focal - cams[0].focal) < 1e-3
            assert np.abs(cam.rotation - cams[0].rotation).max() < 1e-3
            assert np.abs(cam.translation - cams[0].translation).max() < 1e-3

    def test_panning_sequence(self):
        base = synth.make_scene(seed=29)
        truth_cams = []
        frames = []
        pos = base.camera.center
        for k in range(10):
            angle = np.radians(0.2 * k)
            target = np.array([30 * np.sin(angle), 0.0, -30 * (1 - np.cos(angle))])
            cam = synth.look_at_camera(pos, target, base.camera.focal, (960, 540))
            truth_cams.append(cam)
            scene = synth.SynthScene(cam, geo.glcamera_from_camera(cam, 2.0, 300.0),
                                     (), base.template, seed=base.seed + k)
            frames.append(synth.render_edges(scene))
        cams = cal.calibrate_sequence(frames, self.correspondence_pairs(truth_cams[0]))
        for got, want in zip(cams, truth_cams):
            assert rotation_error_deg(got, want) <= 0.2

    def test_empty_frame_tagged(self):
        scene = synth.make_scene(seed=31)
        edges = synth.render_edges(scene)
        empty = EdgeSet(np.zeros((0, 2)), edges.image_size)
        with pytest.raises(FrameCalibrationError) as info:
            cal.calibrate_sequence([edges, edges, empty],
                                   self.correspondence_pairs(scene.camera))
        assert info.value.frame_index == 2
        assert len(info.value.cameras) == 2


class TestExtractEdges:
    def test_finds_a_bright_line(self):
        img = np.zeros((40, 40))
        img[20, 5:35] = 1.0
        edges = cal.extract_edges(img, threshold=0.2)
        assert len(edges.points) > 0
        assert np.all(np.abs(edges.points[:, 1] - 20) <= 2)

    def test_exclusion_mask(self):
        img = np.zeros((40, 40))
        img[20, 5:35] = 1.0
        mask = np.zeros((40, 40), dtype=bool)
        mask[:, :20] = True
        edges = cal.extract_edges(img, threshold=0.2, exclusion_mask=mask)
        assert edges.points[:, 0].min() >= 20
