import numpy as np
import pytest

from soccer3d import tracking as trk
from soccer3d.errors import MalformedDetectionError
from soccer3d.tracking import Detection, Track

from soccer3d import synthetic as synth


def det(frame, neck, extra=None, spread=10.0):
    """Detection with a neck at `neck` and a small keypoint cloud around it."""
    u, v = neck
    kps = {
        "neck": (u, v, 1.0),
        "head": (u, v - spread, 1.0),
        "foot_l": (u - spread / 2, v + 2 * spread, 1.0),
        "foot_r": (u + spread / 2, v + 2 * spread, 1.0),
    }
    if extra:
        kps.update(extra)
    return Detection(frame, trk.keypoint_bbox(kps, pad=0.1), kps)


class TestRefineBoxes:
    def test_box_around_one_pose(self):
        pose = {"neck": (100.0, 100.0, 1.0), "head": (100.0, 80.0, 1.0),
                "foot_l": (90.0, 140.0, 1.0), "foot_r": (110.0, 140.0, 1.0)}
        boxes = [(80.0, 70.0, 40.0, 80.0)]
        out = trk.refine_boxes(boxes, [pose], (640, 480))
        assert len(out) == 1
        want = trk.keypoint_bbox(pose, pad=0.1)
        assert np.allclose(out[0].bbox, want)

    def test_two_poses_in_overlapping_boxes(self):
        # Occlusion fixture: two overlapping boxes, two poses; pose
        # assignment still yields two separate detections.
        pose_a = {"neck": (100.0, 100.0, 1.0), "head": (100.0, 80.0, 1.0),
                  "foot_l": (92.0, 140.0, 1.0)}
        pose_b = {"neck": (120.0, 100.0, 1.0), "head": (120.0, 80.0, 1.0),
                  "foot_l": (128.0, 140.0, 1.0)}
        boxes = [(85.0, 70.0, 40.0, 80.0), (105.0, 70.0, 40.0, 80.0)]
        out = trk.refine_boxes(boxes, [pose_a, pose_b], (640, 480))
        assert len(out) == 2
        assert not np.allclose(out[0].bbox, out[1].bbox)

    def test_pose_without_box_kept(self):
        pose = {"neck": (300.0, 200.0, 1.0), "head": (300.0, 180.0, 1.0),
                "foot_l": (295.0, 240.0, 1.0)}
        out = trk.refine_boxes([], [pose], (640, 480))
        assert len(out) == 1

    def test_implausible_height_dropped_with_camera(self):
        cam = synth.make_capture_scene(seed=3).camera
        # Project a 4 m-tall and a 1.8 m-tall column at the same spot.
        from soccer3d import geometry as geo

        def pose_of_height(h):
            top = geo.project(cam, np.array([2.0, h, 3.0]))
            bot = geo.project(cam, np.array([2.0, 0.0, 3.0]))
            mid = geo.project(cam, np.array([2.0, h * 0.85, 3.0]))
            return {"head": (*top, 1.0), "neck": (*mid, 1.0), "foot_l": (*bot, 1.0)}

        giant = pose_of_height(4.0)
        normal = pose_of_height(1.8)
        out = trk.refine_boxes([], [giant, normal], cam.image_size, camera=cam)
        assert len(out) == 1
        assert np.allclose(out[0].keypoints["neck"][:2], normal["neck"][:2])

    def test_empty_inputs(self):
        assert trk.refine_boxes([], [], (640, 480)) == []


class TestMergeTracks:
    def test_merge_within_thresholds(self):
        dets = [det(0, (100, 100)), det(5, (100 + 30, 100))]
        tracks = trk.merge_tracks(dets)
        assert len(tracks) == 1
        assert [d.frame for d in tracks[0].detections] == [0, 5]

    def test_no_merge_beyond_distance(self):
        dets = [det(0, (100, 100)), det(5, (160, 100))]  # 60 px apart
        assert len(trk.merge_tracks(dets)) == 2

    def test_threshold_boundaries(self):
        # 49.9 px / 10 frames merges; 50.1 px or 11 frames does not.
        assert len(trk.merge_tracks([det(0, (100, 100)),
                                     det(10, (149.9, 100))])) == 1
        assert len(trk.merge_tracks([det(0, (100, 100)),
                                     det(10, (150.1, 100))])) == 2
        assert len(trk.merge_tracks([det(0, (100, 100)),
                                     det(11, (100, 100))])) == 2

    def test_same_frame_never_merges(self):
        dets = [det(3, (100, 100)), det(3, (101, 100))]
        assert len(trk.merge_tracks(dets)) == 2

    def test_missing_neck_raises_with_frame(self):
        bad = Detection(7, (0, 0, 10, 10), {"head": (5.0, 5.0, 1.0)})
        with pytest.raises(MalformedDetectionError) as info:
            trk.merge_tracks([det(0, (10, 10)), bad])
        assert info.value.frame == 7

    def test_partition_no_loss_no_duplication(self, rng):
        for _ in range(20):
            dets = _fuzz_detections(rng)
            tracks = trk.merge_tracks(dets)
            seen = [id(d.keypoints) for t in tracks for d in t.detections]
            assert len(seen) == len(dets)
            assert set(seen) == {id(d.keypoints) for d in dets}
            for t in tracks:
                frames = [d.frame for d in t.detections]
                assert all(b > a for a, b in zip(frames, frames[1:]))

    def test_deterministic_and_permutation_stable_partition(self, rng):
        for _ in range(10):
            dets = _fuzz_detections(rng)
            ref = _partition(trk.merge_tracks(dets))
            again = _partition(trk.merge_tracks(list(dets)))
            assert ref == again

    def test_idempotent_on_merged_output(self, rng):
        for _ in range(10):
            dets = _fuzz_detections(rng)
            tracks = trk.merge_tracks(dets)
            flat = [d for t in tracks for d in t.detections]
            again = trk.merge_tracks(flat)
            assert _partition(tracks) == _partition(again)

    def test_chained_merge(self):
        # Three pieces chain into one track through repeated closest-pair
        # merging.
        dets = [det(0, (100, 100)), det(4, (110, 100)), det(8, (120, 100))]
        tracks = trk.merge_tracks(dets)
        assert len(tracks) == 1
        assert [d.frame for d in tracks[0].detections] == [0, 4, 8]

    def test_json_round_trip(self):
        dets = [det(0, (100, 100)), det(5, (120, 100))]
        tracks = trk.merge_tracks(dets)
        back = trk.tracks_from_json(trk.tracks_to_json(tracks))
        assert _partition(back) == _partition(tracks)
        text = trk.detections_to_jsonl(dets)
        parsed = trk.detections_from_jsonl(text)
        assert len(parsed) == 2 and parsed[0].frame == 0


def _fuzz_detections(rng, n_players=4, n_frames=20):
    dets = []
    for p in range(n_players):
        u, v = rng.uniform(100, 500), rng.uniform(100, 380)
        for frame in range(n_frames):
            if rng.random() < 0.25:
                continue  # dropouts create gaps to re-link
            u += rng.uniform(-8, 8)
            v += rng.uniform(-8, 8)
            dets.append(det(frame, (u, v)))
    order = rng.permutation(len(dets))
    return [dets[i] for i in order]


def _partition(tracks):
    return sorted(tuple(sorted((d.frame, round(d.neck[0], 6), round(d.neck[1], 6))
                               for d in t.detections)) for t in tracks)
