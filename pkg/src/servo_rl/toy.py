"""Renderer-free point-reach environment.

A point in an n-dimensional arena moves with bounded velocity toward a
goal point.  The reward has the same shape as the full servoing task
(weighted error decrease, constant step penalty, +100-|a| / -100
terminals) with the image term dropped, and the goal-conditioning API is
a drop-in for the replay buffer and hindsight relabeling, which is what
makes it useful: it isolates the RL stack from perception and kinematics
for fast convergence tests.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import EpisodeDone, StepResult


@dataclass(frozen=True)
class PointGoal:
    point: np.ndarray


@dataclass(frozen=True)
class PointObservation:
    position: np.ndarray
    goal: np.ndarray

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.position, self.goal])


class PointReachEnv:
    """Velocity-controlled point reaching, goal-conditioned."""

    def __init__(
        self,
        dim: int = 2,
        dt: float = 0.1,
        a_max: float = 1.0,
        success_radius: float = 0.05,
        max_steps: int = 50,
        arena: float = 1.0,
        diverge_bound: float = 1.5,
        phi1: float = 0.0,
        phi4: float = 0.1,
        max_steps_is_failure: bool = False,
    ):
        self.dim = dim
        self.dt = dt
        self.a_max = a_max
        self.success_radius = success_radius
        self.max_steps = max_steps
        self.arena = arena
        self.diverge_bound = diverge_bound
        self.phi1 = phi1
        self.phi4 = phi4
        self.max_steps_is_failure = max_steps_is_failure

        self._pos = np.zeros(dim)
        self._goal = np.zeros(dim)
        self._step_count = 0
        self._done = True

    @property
    def obs_dim(self) -> int:
        return 2 * self.dim

    @property
    def act_dim(self) -> int:
        return self.dim

    @property
    def done(self) -> bool:
        return self._done

    @property
    def step_count(self) -> int:
        return self._step_count

    @property
    def goal(self) -> PointGoal:
        return PointGoal(self._goal.copy())

    @property
    def current_errors(self) -> tuple[float, float, float]:
        return float(np.linalg.norm(self._pos - self._goal)), 0.0, 0.0

    def reset(self, setting: int, rng: np.random.Generator) -> tuple[PointObservation, PointGoal]:
        """Uniform start and goal in the arena, at least one radius apart.
        `setting` is accepted for interface parity and ignored."""
        del setting
        for _ in range(100):
            pos = rng.uniform(-self.arena, self.arena, self.dim)
            goal = rng.uniform(-self.arena, self.arena, self.dim)
            if np.linalg.norm(pos - goal) > 2.0 * self.success_radius:
                break
        self._pos = pos
        self._goal = goal
        self._step_count = 0
        self._done = False
        return self._observe(), self.goal

    def observe(self) -> PointObservation:
        return self._observe()

    def _observe(self) -> PointObservation:
        return PointObservation(self._pos.copy(), self._goal.copy())

    def step(self, action) -> StepResult:
        if self._done:
            raise EpisodeDone("episode already terminated; call reset()")
        a = np.clip(np.asarray(action, dtype=np.float64).reshape(self.dim), -1.0, 1.0)
        d_prev = float(np.linalg.norm(self._pos - self._goal))
        self._pos = self._pos + a * (self.a_max * self.dt)
        d_new = float(np.linalg.norm(self._pos - self._goal))

        outcome = "running"
        if np.any(np.abs(self._pos) > self.diverge_bound):
            outcome = "diverged-trans"
        elif d_new < self.success_radius:
            outcome = "success"
        elif self._step_count + 1 >= self.max_steps:
            outcome = "max-steps"

        reward = self.phi1 * (d_prev - d_new) - self.phi4
        if outcome == "success":
            reward += 100.0 - float(np.linalg.norm(a))
        elif outcome == "diverged-trans" or (outcome == "max-steps" and self.max_steps_is_failure):
            reward += -100.0

        self._step_count += 1
        self._done = outcome != "running"
        return StepResult(self._observe(), reward, self._done, outcome)

    # ----------------------------------------------- goal-conditioning API
    def achieved_payload(self) -> dict[str, np.ndarray]:
        return {"point": self._pos.copy()}

    def goal_from_achieved(self, achieved: dict[str, np.ndarray]) -> PointGoal:
        return PointGoal(achieved["point"].copy())

    def errors_against(self, achieved: dict[str, np.ndarray],
                       goal: PointGoal) -> tuple[float, float, float]:
        return float(np.linalg.norm(achieved["point"] - goal.point)), 0.0, 0.0

    def recompute_transition(self, achieved_prev: dict, achieved: dict,
                             action: np.ndarray, goal: PointGoal) -> tuple[float, bool, str]:
        d_prev = self.errors_against(achieved_prev, goal)[0]
        d_new = self.errors_against(achieved, goal)[0]
        if d_new < self.success_radius:
            outcome = "success"
        else:
            outcome = "running"
        reward = self.phi1 * (d_prev - d_new) - self.phi4
        if outcome == "success":
            reward += 100.0 - float(np.linalg.norm(np.asarray(action)))
        return reward, outcome != "running", outcome

    def replace_goal_in_obs(self, obs_vec: np.ndarray, goal: PointGoal) -> np.ndarray:
        out = np.asarray(obs_vec, dtype=np.float64).copy()
        out[self.dim:] = goal.point
        return out


def proportional_controller_action(env: PointReachEnv) -> np.ndarray:
    """Full-speed action straight at the goal (the toy demonstrator)."""
    delta = env.goal.point - env.achieved_payload()["point"]
    return np.clip(delta / (env.a_max * env.dt), -1.0, 1.0)
