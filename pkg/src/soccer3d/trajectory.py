"""3-D trajectory smoothing.

Minimizes data fidelity at observed frames plus squared second differences
over the whole window, per coordinate, via a banded Cholesky solve. The
system is pentadiagonal and symmetric positive definite whenever two or
more frames are observed (with a single observation the minimizer is only
unique up to a line through it).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .errors import UnconstrainedTrajectoryError


@dataclass(frozen=True)
class TrajectoryProblem:
    """Observations D_t at frames t, over a window of n_frames."""

    n_frames: int
    observations: dict      # frame -> (3,) world point
    smoothness_weight: float = 1.0

    def __post_init__(self):
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        obs = {int(t): np.asarray(p, dtype=float)
               for t, p in self.observations.items()}
        if obs and (min(obs) < 0 or max(obs) >= self.n_frames):
            raise ValueError("observation frames must lie in [0, n_frames)")
        if self.smoothness_weight < 0:
            raise ValueError("smoothness weight must be >= 0")
        object.__setattr__(self, "observations", obs)

    def to_dict(self) -> dict:
        return {"n_frames": self.n_frames,
                "observations": {str(t): p.tolist()
                                 for t, p in sorted(self.observations.items())},
                "smoothness_weight": self.smoothness_weight}

    @classmethod
    def from_dict(cls, d: dict) -> "TrajectoryProblem":
        return cls(d["n_frames"],
                   {int(t): p for t, p in d["observations"].items()},
                   d.get("smoothness_weight", 1.0))


def smooth_trajectory(problem: TrajectoryProblem) -> np.ndarray:
    """Exact minimizer of the smoothing energy; returns (n_frames, 3).

    Raises:
        UnconstrainedTrajectoryError: no observations, or the system is
            singular (a single observation leaves the slope free).
    """
    if not problem.observations:
        raise UnconstrainedTrajectoryError("no observations to fit")
    n = problem.n_frames
    frames = sorted(problem.observations)
    data = np.zeros((n, 3))
    for t in frames:
        data[t] = problem.observations[t]
    weight = problem.smoothness_weight

    a = np.zeros((n, n))
    a[frames, frames] = 1.0
    if n >= 3 and weight > 0:
        d2 = np.zeros((n - 2, n))
        idx = np.arange(n - 2)
        d2[idx, idx] = 1.0
        d2[idx, idx + 1] = -2.0
        d2[idx, idx + 2] = 1.0
        a += weight * (d2.T @ d2)

    # Upper banded form for solveh_banded: bandwidth 2.
    ab = np.zeros((3, n))
    ab[2] = np.diag(a)
    if n > 1:
        ab[1, 1:] = np.diag(a, 1)
    if n > 2:
        ab[0, 2:] = np.diag(a, 2)
    rhs = np.zeros((n, 3))
    rhs[frames] = [problem.observations[t] for t in frames]
    try:
        solution = sla.solveh_banded(ab, rhs)
    except np.linalg.LinAlgError as exc:
        raise UnconstrainedTrajectoryError(
            f"singular smoothing system ({exc}); a single observation does "
            "not pin the trajectory slope") from exc
    return solution


def trajectory_to_json(trajectory: np.ndarray) -> str:
    return json.dumps({"trajectory": np.asarray(trajectory, float).tolist()})


def trajectory_from_json(text: str) -> np.ndarray:
    return np.asarray(json.loads(text)["trajectory"], dtype=float)
