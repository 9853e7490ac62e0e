import json

import numpy as np
import pytest

from soccer3d import trajectory as traj
from soccer3d.errors import UnconstrainedTrajectoryError
from soccer3d.trajectory import TrajectoryProblem


def descent_oracle(problem, tol=1e-10, max_iter=2_000_000):
    """Steepest descent with exact line search on the smoothing energy."""
    n = problem.n_frames
    frames = sorted(problem.observations)
    sel = np.zeros((n, n))
    sel[frames, frames] = 1.0
    d = np.zeros((n, 3))
    for t in frames:
        d[t] = problem.observations[t]
    a = sel.copy()
    if n >= 3 and problem.smoothness_weight > 0:
        d2 = np.zeros((n - 2, n))
        idx = np.arange(n - 2)
        d2[idx, idx] = 1.0
        d2[idx, idx + 1] = -2.0
        d2[idx, idx + 2] = 1.0
        a += problem.smoothness_weight * (d2.T @ d2)
    b = sel @ d
    x = np.zeros((n, 3))
    for _ in range(max_iter):
        g = a @ x - b
        gnorm = np.abs(g).max()
        if gnorm < tol:
            break
        ag = a @ g
        denom = (g * ag).sum()
        if denom <= 0:
            break
        alpha = (g * g).sum() / denom
        x = x - alpha * g
    return x


class TestSmoothTrajectory:
    def test_constant_observations_fixed_point(self):
        c = np.array([3.0, 0.9, -7.0])
        problem = TrajectoryProblem(8, {t: c for t in range(8)})
        x = traj.smooth_trajectory(problem)
        assert np.abs(x - c).max() < 1e-9

    def test_linear_motion_unchanged(self):
        t = np.arange(12)
        line = np.column_stack([0.5 * t, np.full(12, 0.9), -0.25 * t + 3.0])
        problem = TrajectoryProblem(12, {int(k): line[k] for k in t})
        x = traj.smooth_trajectory(problem)
        assert np.abs(x - line).max() < 1e-9

    def test_gap_matches_descent_oracle(self):
        # N = 5, observations at t in {0,1,3,4} on a line, t = 2 missing.
        line = {t: np.array([2.0 * t, 1.0, -t]) for t in (0, 1, 3, 4)}
        problem = TrajectoryProblem(5, line)
        x = traj.smooth_trajectory(problem)
        oracle = descent_oracle(problem)
        assert np.abs(x - oracle).max() < 1e-6

    def test_random_problems_match_oracle(self, rng):
        for _ in range(5):
            n = int(rng.integers(5, 30))
            frames = sorted(rng.choice(n, size=max(2, n // 2), replace=False))
            obs = {int(t): rng.normal(size=3) * 5 for t in frames}
            problem = TrajectoryProblem(n, obs)
            x = traj.smooth_trajectory(problem)
            oracle = descent_oracle(problem)
            assert np.abs(x - oracle).max() < 1e-6

    def test_normal_equation_residual(self, rng):
        n = 40
        frames = sorted(rng.choice(n, size=20, replace=False))
        obs = {int(t): rng.normal(size=3) * 10 for t in frames}
        problem = TrajectoryProblem(n, obs)
        x = traj.smooth_trajectory(problem)
        sel = np.zeros((n, n))
        sel[frames, frames] = 1.0
        d2 = np.zeros((n - 2, n))
        idx = np.arange(n - 2)
        d2[idx, idx] = 1.0
        d2[idx, idx + 1] = -2.0
        d2[idx, idx + 2] = 1.0
        a = sel + d2.T @ d2
        b = np.zeros((n, 3))
        for t in frames:
            b[t] = obs[t]
        assert np.abs(a @ x - b).max() <= 1e-10

    def test_coordinates_decouple(self, rng):
        n = 15
        frames = sorted(rng.choice(n, size=8, replace=False))
        obs = {int(t): rng.normal(size=3) for t in frames}
        x = traj.smooth_trajectory(TrajectoryProblem(n, obs))
        perm = [2, 0, 1]
        x_perm = traj.smooth_trajectory(
            TrajectoryProblem(n, {t: p[perm] for t, p in obs.items()}))
        assert np.abs(x[:, perm] - x_perm).max() < 1e-12

    def test_weight_to_zero_recovers_data(self, rng):
        n = 10
        obs = {t: rng.normal(size=3) for t in range(n)}
        x = traj.smooth_trajectory(
            TrajectoryProblem(n, obs, smoothness_weight=1e-10))
        want = np.array([obs[t] for t in range(n)])
        assert np.abs(x - want).max() < 1e-6

    def test_empty_observations_raise(self):
        with pytest.raises(UnconstrainedTrajectoryError):
            traj.smooth_trajectory(TrajectoryProblem(5, {}))

    def test_single_observation_long_window_singular(self):
        with pytest.raises(UnconstrainedTrajectoryError):
            traj.smooth_trajectory(TrajectoryProblem(6, {2: [1.0, 2.0, 3.0]}))

    def test_tiny_windows(self):
        x = traj.smooth_trajectory(TrajectoryProblem(1, {0: [1.0, 2.0, 3.0]}))
        assert np.allclose(x, [[1, 2, 3]])
        x = traj.smooth_trajectory(
            TrajectoryProblem(2, {0: [0.0, 0.0, 0.0], 1: [1.0, 1.0, 1.0]}))
        assert np.allclose(x, [[0, 0, 0], [1, 1, 1]])

    def test_json_round_trip(self):
        problem = TrajectoryProblem(4, {0: [1.0, 0.0, 0.0], 3: [0.0, 0.0, 2.0]})
        back = TrajectoryProblem.from_dict(json.loads(json.dumps(problem.to_dict())))
        assert back.n_frames == 4
        assert set(back.observations) == {0, 3}
        x = traj.smooth_trajectory(problem)
        again = traj.trajectory_from_json(traj.trajectory_to_json(x))
        assert np.abs(again - x).max() < 1e-15

    def test_invalid_problems(self):
        with pytest.raises(ValueError):
            TrajectoryProblem(0, {})
        with pytest.raises(ValueError):
            TrajectoryProblem(3, {5: [0.0, 0.0, 0.0]})
