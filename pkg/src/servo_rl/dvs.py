"""Direct (photometric) visual servoing baseline and demonstration source.

The controller treats the normalized depth image itself as the feature
vector: the per-pixel interaction row is -grad(I) * L_x(x, y, Z) with
image gradients from central differences and the point-feature interaction
matrix evaluated at the pixel's own rendered depth.  The control law is
the classic  twist = -gain * pinv(L) * (I - I_des),  with a damped
pseudo-inverse for rank robustness.

DVS converges only from nearby poses, which is exactly why it doubles as
the generator of imperfect near-goal demonstration episodes for the
learner and as the weak baseline for multi-perspective starts.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kinematics import Twist
from .scene import CameraModel, DepthImage
from .td3 import Transition
from .training import env_observation_vector


@dataclass(frozen=True)
class DvsConfig:
    gain: float = 3.0
    mu: float = 1e-6
    max_steps: int = 200
    converge_trans: float = 0.002
    valid_limit: float = 0.98     # normalized depth at/above this = sensor miss

    def __post_init__(self) -> None:
        if self.gain <= 0.0:
            raise ValueError("gain must be positive")


def interaction_matrix(image: DepthImage, cam: CameraModel) -> np.ndarray:
    """(pixels, 6) map from camera twist to per-pixel normalized-depth rate.

    Row-major pixel order.  Each row combines two effects:

      * the photometric term -grad(I) * L_x(x, y, Z): the moving depth
        pattern sweeping past the pixel, with central-difference image
        gradients (one-sided at the borders) and the point interaction
        matrix at the pixel's own rendered depth Z;
      * the depth-rate term (-v_z - (w x X)_z) / (far - near): unlike
        luminance, the measured value *is* the camera-frame depth of the
        tracked point, so it changes under optical-axis translation and
        tilt even without any image motion.  Dropping this term leaves the
        controller nearly blind along the optical axis.
    """
    norm = cam.normalize(image.data).astype(np.float64)
    z = image.data.astype(np.float64)
    gv, gu = np.gradient(norm)          # d/dv (rows), d/du (cols)
    gx = gu * cam.fx                    # gradient w.r.t. normalized image x
    gy = gv * cam.fy
    u = np.arange(cam.width, dtype=np.float64)
    v = np.arange(cam.height, dtype=np.float64)
    uu, vv = np.meshgrid(u, v)
    x = (uu - cam.cx) / cam.fx
    y = (vv - cam.cy) / cam.fy
    scale = 1.0 / (cam.far - cam.near)

    rows = np.empty((cam.height, cam.width, 6))
    rows[..., 0] = gx / z
    rows[..., 1] = gy / z
    rows[..., 2] = -(gx * x + gy * y) / z - scale
    rows[..., 3] = -(gx * x * y + gy * (1.0 + y * y)) - scale * y * z
    rows[..., 4] = gx * (1.0 + x * x) + gy * x * y + scale * x * z
    rows[..., 5] = -(gx * y - gy * x)
    return rows.reshape(-1, 6)


def dvs_step(current: DepthImage, desired: DepthImage, cam: CameraModel,
             cfg: DvsConfig) -> Twist:
    """One control step: camera twist reducing the photometric error.

    Pixels at (or averaged into) the far plane in either image are sensor
    misses, not scene measurements; their rows and error entries are
    masked out of the least-squares solve.
    """
    if current.data.shape != desired.data.shape:
        raise ValueError("current/desired image dimensions differ")
    cur = cam.normalize(current.data).astype(np.float64).reshape(-1)
    des = cam.normalize(desired.data).astype(np.float64).reshape(-1)
    err = cur - des
    mat = interaction_matrix(current, cam)
    valid = (cur < cfg.valid_limit) & (des < cfg.valid_limit)
    err = np.where(valid, err, 0.0)
    mat = mat * valid[:, None]
    lhs = mat.T @ mat + cfg.mu * np.eye(6)
    v = -cfg.gain * np.linalg.solve(lhs, mat.T @ err)
    return Twist(v[:3], v[3:])


def dvs_action(env, cfg: DvsConfig) -> np.ndarray:
    """The DVS twist for the env's current view, as a normalized action."""
    return env.action_from_twist(
        dvs_step(env.current_depth_image, env.goal.depth_image, env.cam, cfg))


@dataclass
class DvsTrajectory:
    rows: list[dict]
    converged: bool
    outcome: str
    steps: int
    final_e_trans: float
    final_e_rot: float

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "e_trans", "e_rot", "e_img",
                             "vx", "vy", "vz", "wx", "wy", "wz", "converged"])
            for row in self.rows:
                writer.writerow(
                    [row["step"]]
                    + [f"{row[k]:.17g}" for k in ("e_trans", "e_rot", "e_img")]
                    + [f"{val:.17g}" for val in row["twist"]]
                    + [int(self.converged)])


def run_dvs_servo(env, cfg: DvsConfig) -> DvsTrajectory:
    """Drive the env's active episode with DVS until convergence
    (e_trans below cfg.converge_trans), env termination, or the step cap."""
    rows: list[dict] = []
    outcome = "running"
    steps = 0
    while True:
        e_trans, e_rot, e_img = env.current_errors
        if e_trans < cfg.converge_trans:
            break
        if steps >= cfg.max_steps or env.done:
            break
        action = dvs_action(env, cfg)
        twist = env.bounds.to_twist(action)
        res = env.step(action)
        steps += 1
        outcome = res.outcome
        rows.append({
            "step": steps,
            "e_trans": env.current_errors[0],
            "e_rot": env.current_errors[1],
            "e_img": env.current_errors[2],
            "twist": twist.as_vector(),
        })
        if res.done:
            break
    final_e_trans, final_e_rot, _ = env.current_errors
    return DvsTrajectory(rows, final_e_trans < cfg.converge_trans, outcome,
                         steps, final_e_trans, final_e_rot)


def collect_demonstrations(
    env,
    cfg: DvsConfig,
    rng: np.random.Generator,
    episodes: int = 1,
    trans_radius: float = 0.03,
    rot_radius: float = 0.05,
) -> list[list[Transition]]:
    """Near-goal DVS rollouts converted to replay transitions.

    Episodes start within `trans_radius` / `rot_radius` of a fresh goal and
    are driven by DVS; only episodes that end in the env's success outcome
    are kept.  Rewards come from the env itself, so stored demonstrations
    are bit-compatible with live transitions.
    """
    kept: list[list[Transition]] = []
    for _ in range(episodes):
        env.reset_near_goal(rng, trans_radius, rot_radius)
        transitions: list[Transition] = []
        obs_vec = env_observation_vector(env)
        while not env.done and len(transitions) < cfg.max_steps:
            prev_payload = env.achieved_payload()
            action = dvs_action(env, cfg)
            res = env.step(action)
            next_vec = res.observation.flatten()
            transitions.append(Transition(
                obs=obs_vec, action=action.copy(), reward=res.reward,
                next_obs=next_vec, done=res.done, outcome=res.outcome,
                achieved_prev=prev_payload, achieved=env.achieved_payload(),
                goal=env.goal))
            obs_vec = next_vec
        if transitions and transitions[-1].outcome == "success":
            kept.append(transitions)
    return kept


def demo_provider(cfg: DvsConfig, episodes: int = 1,
                  trans_radius: float = 0.03, rot_radius: float = 0.05):
    """Demonstration source with the signature train_policy expects."""
    def provide(env, rng: np.random.Generator) -> list[list[Transition]]:
        return collect_demonstrations(env, cfg, rng, episodes, trans_radius, rot_radius)
    return provide
