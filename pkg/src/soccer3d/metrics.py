"""Evaluation metrics: scale-invariant depth RMSE and mask IoU."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .depthmesh import DepthMap
from .errors import (
    DimensionMismatchError,
    EmptyEvaluationError,
    InvalidDepthError,
)


@dataclass(frozen=True)
class EvalPair:
    """Predicted vs ground-truth depth with an evaluation mask.

    The mask defaults to the intersection of the two validity masks.
    """

    predicted: DepthMap
    ground_truth: DepthMap
    mask: np.ndarray = None

    def __post_init__(self):
        if self.predicted.depth.shape != self.ground_truth.depth.shape:
            raise DimensionMismatchError(
                f"{self.predicted.depth.shape} vs {self.ground_truth.depth.shape}")
        mask = self.mask
        if mask is None:
            mask = self.predicted.valid & self.ground_truth.valid
        else:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != self.predicted.depth.shape:
                raise DimensionMismatchError("mask shape mismatch")
        object.__setattr__(self, "mask", mask)


def st_rmse(pair: EvalPair) -> float:
    """Scale-invariant RMSE on log depths.

    With d_i = log(pred_i) - log(gt_i) over evaluated pixels, returns
    sqrt(mean(d^2) - mean(d)^2); invariant under pred -> c * pred for c > 0.

    Raises:
        EmptyEvaluationError: the mask selects no pixels.
        InvalidDepthError: a masked depth is not positive.
    """
    mask = pair.mask
    if not mask.any():
        raise EmptyEvaluationError("no pixels selected for evaluation")
    pred = pair.predicted.depth[mask]
    gt = pair.ground_truth.depth[mask]
    if np.any(pred <= 0) or np.any(gt <= 0) or not (np.isfinite(pred).all()
                                                    and np.isfinite(gt).all()):
        raise InvalidDepthError("masked depths must be positive and finite")
    d = np.log(pred) - np.log(gt)
    centered = d - d.mean()  # mean(d^2) - mean(d)^2, computed stably
    return float(np.sqrt(np.mean(centered * centered)))


def iou(mask_a, mask_b) -> float:
    """Intersection over union of two binary masks; 1.0 when both are empty."""
    a = np.asarray(mask_a, dtype=bool)
    b = np.asarray(mask_b, dtype=bool)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"mask shapes {a.shape} vs {b.shape}")
    union = (a | b).sum()
    if union == 0:
        return 1.0
    return float((a & b).sum() / union)
