import numpy as np
import pytest

from soccer3d import metrics
from soccer3d.depthmesh import DepthMap
from soccer3d.errors import (
    DimensionMismatchError,
    EmptyEvaluationError,
    InvalidDepthError,
)
from soccer3d.metrics import EvalPair


def depth_map(values, valid=None):
    values = np.asarray(values, dtype=float)
    if valid is None:
        valid = np.ones_like(values, dtype=bool)
    return DepthMap(values, valid)


class TestStRmse:
    def test_identical_is_zero(self, rng):
        d = rng.uniform(10, 50, (8, 8))
        assert metrics.st_rmse(EvalPair(depth_map(d), depth_map(d))) == 0.0

    def test_scale_invariance(self, rng):
        gt = rng.uniform(10, 50, (8, 8))
        pred = gt * rng.uniform(0.8, 1.2, (8, 8))
        base = metrics.st_rmse(EvalPair(depth_map(pred), depth_map(gt)))
        for c in (0.1, 1.0, 10.0):
            scaled = metrics.st_rmse(EvalPair(depth_map(c * pred), depth_map(gt)))
            assert abs(scaled - base) < 1e-12

    def test_double_depth_is_zero(self, rng):
        gt = rng.uniform(5, 20, (6, 6))
        assert metrics.st_rmse(EvalPair(depth_map(2 * gt), depth_map(gt))) < 1e-12

    def test_four_pixel_hand_computation(self):
        pred = np.array([[10.0, 20.0], [30.0, 40.0]])
        gt = np.array([[11.0, 19.0], [33.0, 37.0]])
        d = np.log(pred.ravel()) - np.log(gt.ravel())
        want = np.sqrt(np.mean(d ** 2) - np.mean(d) ** 2)
        got = metrics.st_rmse(EvalPair(depth_map(pred), depth_map(gt)))
        assert abs(got - want) < 1e-12

    def test_symmetry(self, rng):
        a = rng.uniform(5, 40, (7, 7))
        b = rng.uniform(5, 40, (7, 7))
        ab = metrics.st_rmse(EvalPair(depth_map(a), depth_map(b)))
        ba = metrics.st_rmse(EvalPair(depth_map(b), depth_map(a)))
        assert abs(ab - ba) < 1e-12

    def test_mask_intersection(self):
        pred_valid = np.array([[True, True], [False, True]])
        gt_valid = np.array([[True, False], [True, True]])
        pair = EvalPair(depth_map(np.full((2, 2), 5.0), pred_valid),
                        depth_map(np.full((2, 2), 5.0), gt_valid))
        assert pair.mask.tolist() == [[True, False], [False, True]]

    def test_empty_mask_raises(self):
        pair = EvalPair(depth_map(np.full((2, 2), 5.0)),
                        depth_map(np.full((2, 2), 5.0)),
                        mask=np.zeros((2, 2), bool))
        with pytest.raises(EmptyEvaluationError):
            metrics.st_rmse(pair)

    def test_nonpositive_depth_raises(self):
        bad = np.array([[1.0, -2.0]])
        pair = EvalPair(DepthMap(bad, np.array([[True, False]])),
                        depth_map(np.array([[1.0, 1.0]])),
                        mask=np.array([[True, True]]))
        with pytest.raises(InvalidDepthError):
            metrics.st_rmse(pair)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            EvalPair(depth_map(np.ones((2, 2))), depth_map(np.ones((2, 3))))


class TestIou:
    def test_identical(self):
        m = np.zeros((4, 4), bool)
        m[1:3, 1:3] = True
        assert metrics.iou(m, m) == 1.0

    def test_disjoint(self):
        a = np.zeros((4, 4), bool)
        a[0, 0] = True
        b = np.zeros((4, 4), bool)
        b[3, 3] = True
        assert metrics.iou(a, b) == 0.0

    def test_shifted_block(self):
        # 2x2 block vs the same block shifted one column: 2/6.
        a = np.zeros((4, 4), bool)
        a[1:3, 1:3] = True
        b = np.zeros((4, 4), bool)
        b[1:3, 2:4] = True
        assert abs(metrics.iou(a, b) - 2.0 / 6.0) < 1e-15

    def test_both_empty_is_one(self):
        assert metrics.iou(np.zeros((3, 3), bool), np.zeros((3, 3), bool)) == 1.0

    def test_symmetry(self, rng):
        a = rng.random((6, 6)) > 0.5
        b = rng.random((6, 6)) > 0.5
        assert metrics.iou(a, b) == metrics.iou(b, a)

    def test_dimension_error(self):
        with pytest.raises(DimensionMismatchError):
            metrics.iou(np.zeros((2, 2), bool), np.zeros((3, 3), bool))
