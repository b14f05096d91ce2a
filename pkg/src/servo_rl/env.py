"""Goal-conditioned visual servoing MDP.

reset() perturbs the cup, samples a reachable goal camera pose with the
cup in view, renders and encodes the desired image, and places the arm at
a fixed home posture (settings 1-2) or a random pose on the viewing
hemisphere (setting 3).  step() maps a normalized action to a camera
twist, resolves joint velocities, integrates one control period, re-renders,
and scores the move with the potential-based reward: weighted decreases of
translation / rotation / image error, a constant step penalty, and a
terminal +100-|a| on success or -100 on any failure (divergence,
singularity, joint limit, collision, cup out of view, step budget).

Episode logs are JSON-lines, one record per step.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autoencoder import AeModel, encode_normalized
from .config import RunConfig
from .kinematics import (
    DhChain,
    Pose,
    SingularityError,
    Twist,
    fk_frames,
    forward_kinematics,
    pose_errors,
    quat_from_matrix,
    resolve_joint_velocities,
    solve_camera_ik,
    ur5e_chain,
)
from .scene import (
    CameraModel,
    DepthImage,
    Scene,
    look_at,
    object_in_fov,
    perturb_object,
    render_depth,
    sample_camera_pose_on_cap,
)

FAILURE_OUTCOMES = (
    "diverged-trans", "diverged-rot", "singularity", "joint-limit",
    "collision", "out-of-fov", "max-steps",
)


class EpisodeDone(RuntimeError):
    """step() called after the episode already terminated."""


class ResetError(RuntimeError):
    """Could not realize a feasible start/goal within the retry budget."""


@dataclass(frozen=True)
class ActionBounds:
    """Per-axis camera twist limits; actions in [-1, 1] scale onto these."""

    linear: float
    angular: float

    def __post_init__(self) -> None:
        if self.linear <= 0 or self.angular <= 0:
            raise ValueError("bounds must be positive")

    def to_twist(self, action: np.ndarray) -> Twist:
        return Twist(action[:3] * self.linear, action[3:] * self.angular)

    def from_twist(self, twist: Twist) -> np.ndarray:
        """Normalized action whose execution best approximates `twist`."""
        a = np.concatenate([twist.linear / self.linear, twist.angular / self.angular])
        return np.clip(a, -1.0, 1.0)


@dataclass(frozen=True)
class RewardWeights:
    phi1: float = 100.0
    phi2: float = 10.0
    phi3: float = 10.0
    phi4: float = 0.1
    phi_trans: float = 0.002
    phi_rot: float = 0.05
    d_trans: float = 1.0
    d_rot: float = 2.5
    phi_jacobian: float = 1e-4
    max_steps: int = 200

    def __post_init__(self) -> None:
        if not (self.phi_trans < self.d_trans and self.phi_rot < self.d_rot):
            raise ValueError("success thresholds must be below divergence bounds")


@dataclass(frozen=True)
class EpisodeGoal:
    """Desired camera pose with its rendered depth image and latent code.

    `image` is the normalized float32 view used by the reward path and by
    hindsight relabeling; `depth_image` keeps the metric render (None for
    goals synthesized from stored achieved states, which only ever feed
    the normalized path).
    """

    camera_pose: Pose
    image: np.ndarray      # normalized float32, flat (pixels,)
    latent: np.ndarray     # (L,)
    scene: Scene
    depth_image: "DepthImage | None" = None


@dataclass(frozen=True)
class Observation:
    s_t: np.ndarray
    s_des: np.ndarray
    fc: float
    q: np.ndarray
    qdot: np.ndarray
    ee_position: np.ndarray
    ee_quaternion: np.ndarray

    def flatten(self) -> np.ndarray:
        return np.concatenate([
            self.s_t, self.s_des, [self.fc], self.q, self.qdot,
            self.ee_position, self.ee_quaternion,
        ])


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    reward: float
    done: bool
    outcome: str


def image_error(img_a, img_b) -> float:
    """Mean squared difference over normalized float32 pixels."""
    a = np.asarray(img_a, dtype=np.float64).reshape(-1)
    b = np.asarray(img_b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.mean(d * d))


def compute_reward(prev_errors, new_errors, action: np.ndarray, outcome: str,
                   weights: RewardWeights) -> float:
    """Potential-based reward plus the terminal branch for `outcome`."""
    pe_t, pe_r, pe_i = prev_errors
    ne_t, ne_r, ne_i = new_errors
    r = (weights.phi1 * (pe_t - ne_t)
         + weights.phi2 * (pe_r - ne_r)
         + weights.phi3 * (pe_i - ne_i)
         - weights.phi4 * 1.0)
    if outcome == "success":
        r += 100.0 - float(np.linalg.norm(action))
    elif outcome in FAILURE_OUTCOMES:
        r += -100.0
    return r


def check_collision(chain: DhChain, q: np.ndarray, scene: Scene,
                    link_radius: float = 0.05, camera_radius: float = 0.03) -> bool:
    """Bounding spheres at the joint frames (plus the camera) vs the table
    plane and the cup cylinder.  Tangency does not count as a collision."""
    frames = fk_frames(chain, q)
    centers = [f[:3, 3] for f in frames[1:]]
    radii = [link_radius] * len(centers)
    t_ee = Pose.from_matrix(frames[-1])
    centers.append(t_ee.compose(chain.hand_eye).translation)
    radii.append(camera_radius)

    z_lo = scene.table_height
    z_hi = scene.table_height + scene.cup_height
    for center, radius in zip(centers, radii):
        if center[2] - radius < scene.table_height:
            return True
        rho = float(np.hypot(center[0] - scene.cup_x, center[1] - scene.cup_y))
        d_radial = max(rho - scene.cup_radius, 0.0)
        d_axial = max(z_lo - center[2], center[2] - z_hi, 0.0)
        if np.hypot(d_radial, d_axial) < radius:
            return True
    return False


def _pose_to_vec12(pose: Pose) -> np.ndarray:
    return np.concatenate([pose.translation, pose.rotation.reshape(-1)])


def _vec12_to_pose(vec: np.ndarray) -> Pose:
    return Pose(np.asarray(vec[3:12], dtype=float).reshape(3, 3),
                np.asarray(vec[:3], dtype=float).copy())


class ServoEnv:
    """Simulated eye-in-hand servoing environment.

    One instance owns one episode at a time; instances share no mutable
    state, so evaluation may run several in parallel.
    """

    def __init__(
        self,
        ae_model: AeModel,
        chain: DhChain | None = None,
        scene: Scene | None = None,
        cam: CameraModel | None = None,
        weights: RewardWeights | None = None,
        bounds: ActionBounds | None = None,
        fc: float = 10.0,
        goal_radius: tuple[float, float] = (0.15, 0.40),
        goal_min_cos_zenith: float = 0.30,
        goal_roll_range: float = 2.0 * np.pi,
        home_radius: float = 0.45,
        home_cos_zenith: float = 0.95,
        home_azimuth: float = np.pi,
        link_radius: float = 0.05,
        reset_tries: int = 100,
    ):
        self.ae = ae_model
        self.chain = chain if chain is not None else ur5e_chain()
        self.base_scene = scene if scene is not None else Scene()
        self.cam = cam if cam is not None else CameraModel.from_fov()
        self.weights = weights if weights is not None else RewardWeights()
        self.bounds = bounds if bounds is not None else ActionBounds(0.1, 0.5)
        self.fc = fc
        self.goal_radius = goal_radius
        self.goal_min_cos_zenith = goal_min_cos_zenith
        self.goal_roll_range = goal_roll_range
        self.link_radius = link_radius
        self.reset_tries = reset_tries
        self.object_ranges = {1: 0.05, 2: 0.10, 3: 0.10}

        if (self.cam.width != ae_model.width or self.cam.height != ae_model.height):
            raise ValueError("autoencoder was trained for a different image size")

        # Fixed home posture: camera on the viewing cap above the nominal
        # cup position, solved once through IK.
        zen_sin = np.sqrt(max(0.0, 1.0 - home_cos_zenith ** 2))
        offset = home_radius * np.array([
            zen_sin * np.cos(home_azimuth), zen_sin * np.sin(home_azimuth), home_cos_zenith])
        target = self.base_scene.cup_center()
        home_pose = look_at(target + offset, target, 0.0)
        self._ik_seed = np.array([0.0, -1.2, 1.4, -1.8, -1.6, 0.0])
        home_q = solve_camera_ik(self.chain, home_pose, self._ik_seed)
        if home_q is None:
            raise ResetError("could not realize the home camera pose; check the scene layout")
        self.home_q = home_q

        # Episode state
        self._scene: Scene | None = None
        self._goal: EpisodeGoal | None = None
        self._q = self.home_q.copy()
        self._qdot = np.zeros(6)
        self._depth: DepthImage | None = None
        self._image: np.ndarray | None = None   # normalized f32, flat
        self._latent: np.ndarray | None = None
        self._errors: tuple[float, float, float] | None = None
        self._step_count = 0
        self._done = True
        self._log: list[dict] = []

    # ----------------------------------------------------------- factories
    @classmethod
    def from_config(cls, cfg: RunConfig, ae_model: AeModel) -> "ServoEnv":
        handeye_vals = [float(v) for v in cfg.get_str("dh.handeye").split(",")]
        hand_eye = Pose.from_xyz_rpy(*handeye_vals)
        chain = DhChain(
            a=np.array([cfg.get_float(f"dh.a[{i}]") for i in range(6)]),
            d=np.array([cfg.get_float(f"dh.d[{i}]") for i in range(6)]),
            alpha=np.array([cfg.get_float(f"dh.alpha[{i}]") for i in range(6)]),
            theta_offset=np.zeros(6),
            joint_limits=np.array([[cfg.get_float("dh.limit_min"),
                                    cfg.get_float("dh.limit_max")]] * 6),
            velocity_limits=np.full(6, cfg.get_float("dh.velocity_limit")),
            hand_eye=hand_eye,
        )
        scene = Scene(
            table_height=cfg.get_float("scene.table_height"),
            table_center=(cfg.get_float("scene.table_cx"), cfg.get_float("scene.table_cy")),
            table_half_extent=cfg.get_float("scene.table_half_extent"),
            cup_radius=cfg.get_float("scene.cup_radius"),
            cup_height=cfg.get_float("scene.cup_height"),
            cup_x=cfg.get_float("scene.cup_x"),
            cup_y=cfg.get_float("scene.cup_y"),
            cup_yaw=cfg.get_float("scene.cup_yaw"),
        )
        cam = CameraModel.from_fov(
            cfg.get_int("camera.width"), cfg.get_int("camera.height"),
            cfg.get_float("camera.fov_deg"), cfg.get_float("camera.near"),
            cfg.get_float("camera.far"), cfg.get_int("camera.supersample"))
        weights = RewardWeights(
            phi1=cfg.get_float("env.phi1"), phi2=cfg.get_float("env.phi2"),
            phi3=cfg.get_float("env.phi3"), phi4=cfg.get_float("env.phi4"),
            phi_trans=cfg.get_float("env.phi_trans"), phi_rot=cfg.get_float("env.phi_rot"),
            d_trans=cfg.get_float("env.d_trans"), d_rot=cfg.get_float("env.d_rot"),
            phi_jacobian=cfg.get_float("kin.det_threshold"),
            max_steps=cfg.get_int("env.max_steps"))
        env = cls(
            ae_model,
            chain=chain,
            scene=scene,
            cam=cam,
            weights=weights,
            bounds=ActionBounds(cfg.get_float("env.bound_linear"),
                                cfg.get_float("env.bound_angular")),
            fc=cfg.get_float("env.fc"),
            goal_radius=(cfg.get_float("env.goal_radius_min"),
                         cfg.get_float("env.goal_radius_max")),
            goal_min_cos_zenith=cfg.get_float("env.goal_min_cos_zenith"),
            goal_roll_range=cfg.get_float("env.goal_roll_range"),
            home_radius=cfg.get_float("env.home_radius"),
            home_cos_zenith=cfg.get_float("env.home_cos_zenith"),
            home_azimuth=cfg.get_float("env.home_azimuth"),
            link_radius=cfg.get_float("env.link_radius"),
            reset_tries=cfg.get_int("env.reset_tries"),
        )
        env.object_ranges = {
            1: cfg.get_float("env.object_range_setting1"),
            2: cfg.get_float("env.object_range_setting2"),
            3: cfg.get_float("env.object_range_setting3"),
        }
        return env

    # ---------------------------------------------------------- properties
    @property
    def obs_dim(self) -> int:
        return 2 * self.ae.latent_dim + 1 + 6 + 6 + 7

    @property
    def act_dim(self) -> int:
        return 6

    @property
    def done(self) -> bool:
        return self._done

    @property
    def goal(self) -> EpisodeGoal:
        if self._goal is None:
            raise RuntimeError("no active episode; call reset() first")
        return self._goal

    @property
    def scene(self) -> Scene:
        if self._scene is None:
            raise RuntimeError("no active episode; call reset() first")
        return self._scene

    @property
    def current_errors(self) -> tuple[float, float, float]:
        """(e_trans, e_rot, e_img) against the active goal."""
        if self._errors is None:
            raise RuntimeError("no active episode; call reset() first")
        return self._errors

    @property
    def current_image(self) -> np.ndarray:
        """Normalized float32 depth image of the current view, flat."""
        if self._image is None:
            raise RuntimeError("no active episode; call reset() first")
        return self._image

    @property
    def current_depth_image(self) -> DepthImage:
        """Metric depth image of the current view."""
        if self._depth is None:
            raise RuntimeError("no active episode; call reset() first")
        return self._depth

    @property
    def step_count(self) -> int:
        return self._step_count

    @property
    def joint_state(self) -> tuple[np.ndarray, np.ndarray]:
        return self._q.copy(), self._qdot.copy()

    def camera_pose(self) -> Pose:
        return forward_kinematics(self.chain, self._q)[1]

    def action_from_twist(self, twist: Twist) -> np.ndarray:
        return self.bounds.from_twist(twist)

    # -------------------------------------------------------------- resets
    def _feasible_q_for(self, camera_pose: Pose, scene: Scene,
                        require_fov: bool) -> np.ndarray | None:
        q = solve_camera_ik(self.chain, camera_pose, self._ik_seed)
        if q is None:
            return None
        if np.any(q <= self.chain.joint_limits[:, 0] + 1e-6) or \
                np.any(q >= self.chain.joint_limits[:, 1] - 1e-6):
            return None
        if abs(np.linalg.det(fk_jacobian_ee(self.chain, q))) <= 10.0 * self.weights.phi_jacobian:
            return None
        if check_collision(self.chain, q, scene, self.link_radius):
            return None
        if require_fov and not object_in_fov(scene, forward_kinematics(self.chain, q)[1],
                                             self.cam):
            return None
        return q

    def _sample_goal(self, scene: Scene, rng: np.random.Generator) -> EpisodeGoal:
        for _ in range(self.reset_tries):
            pose = sample_camera_pose_on_cap(
                rng, self.goal_radius, scene.cup_center(),
                self.goal_min_cos_zenith, self.goal_roll_range)
            if not object_in_fov(scene, pose, self.cam):
                continue
            if self._feasible_q_for(pose, scene, require_fov=False) is None:
                continue
            depth = render_depth(scene, pose, self.cam)
            image = self.cam.normalize(depth.data).reshape(-1)
            latent = encode_normalized(self.ae, image)
            return EpisodeGoal(pose, image, latent, scene, depth)
        raise ResetError(f"no feasible goal pose found in {self.reset_tries} tries")

    def _begin_episode(self, scene: Scene, goal: EpisodeGoal, q: np.ndarray) -> Observation:
        self._scene = scene
        self._goal = goal
        self._q = q.copy()
        self._qdot = np.zeros(6)
        self._step_count = 0
        self._done = False
        self._log = []
        self._refresh_view()
        return self._observe()

    def _refresh_view(self) -> None:
        t_c = self.camera_pose()
        self._depth = render_depth(self._scene, t_c, self.cam)
        img = self.cam.normalize(self._depth.data).reshape(-1)
        self._image = img
        self._latent = encode_normalized(self.ae, img)
        e_trans, e_rot = pose_errors(t_c, self._goal.camera_pose)
        self._errors = (e_trans, e_rot, image_error(img, self._goal.image))

    def reset(self, setting: int, rng: np.random.Generator) -> tuple[Observation, EpisodeGoal]:
        """Start an episode under experimental setting 1, 2, or 3.

        Start/goal pairs are resampled until the initial errors sit inside
        the divergence bounds: an episode born beyond them would terminate
        as a failure on its first step no matter what the agent does.
        """
        if setting not in self.object_ranges:
            raise ValueError(f"setting must be one of {sorted(self.object_ranges)}")
        scene = perturb_object(self.base_scene, rng, self.object_ranges[setting])
        for _ in range(self.reset_tries):
            goal = self._sample_goal(scene, rng)
            if setting in (1, 2):
                q = self.home_q
                if not object_in_fov(scene, forward_kinematics(self.chain, q)[1], self.cam):
                    raise ResetError("cup not visible from the home posture")
            else:
                q = None
                for _ in range(self.reset_tries):
                    pose = sample_camera_pose_on_cap(
                        rng, self.goal_radius, scene.cup_center(),
                        self.goal_min_cos_zenith, self.goal_roll_range)
                    if not object_in_fov(scene, pose, self.cam):
                        continue
                    cand = self._feasible_q_for(pose, scene, require_fov=True)
                    if cand is not None:
                        q = cand
                        break
                if q is None:
                    raise ResetError(
                        f"no feasible start pose found in {self.reset_tries} tries")
            _, t_c = forward_kinematics(self.chain, q)
            e_trans, e_rot = pose_errors(t_c, goal.camera_pose)
            if e_trans < 0.9 * self.weights.d_trans and e_rot < 0.9 * self.weights.d_rot:
                return self._begin_episode(scene, goal, q), goal
        raise ResetError(
            f"no start/goal pair inside the divergence bounds in {self.reset_tries} tries")

    def reset_near_goal(self, rng: np.random.Generator, trans_radius: float,
                        rot_radius: float = 0.0,
                        object_range: float = 0.05) -> tuple[Observation, EpisodeGoal]:
        """Start with the camera perturbed off the goal pose by at most
        `trans_radius` meters and `rot_radius` radians (demonstrations,
        local-convergence studies)."""
        scene = perturb_object(self.base_scene, rng, object_range)
        goal = self._sample_goal(scene, rng)
        for _ in range(self.reset_tries):
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            dt = rng.uniform(0.0, trans_radius) * direction
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            angle = rng.uniform(0.0, rot_radius) if rot_radius > 0 else 0.0
            d_rot = _axis_angle_matrix(axis, angle)
            pose = Pose(goal.camera_pose.rotation @ d_rot,
                        goal.camera_pose.translation + dt)
            if not object_in_fov(scene, pose, self.cam):
                continue
            q = self._feasible_q_for(pose, scene, require_fov=True)
            if q is not None:
                return self._begin_episode(scene, goal, q), goal
        raise ResetError(f"no feasible near-goal start found in {self.reset_tries} tries")

    # --------------------------------------------------------------- steps
    def observe(self) -> Observation:
        """Observation of the current state (no side effects)."""
        return self._observe()

    def _observe(self) -> Observation:
        t_ee = forward_kinematics(self.chain, self._q)[0]
        return Observation(
            s_t=self._latent.copy(),
            s_des=self._goal.latent.copy(),
            fc=self.fc,
            q=self._q.copy(),
            qdot=self._qdot.copy(),
            ee_position=t_ee.translation.copy(),
            ee_quaternion=quat_from_matrix(t_ee.rotation),
        )

    def step(self, action) -> StepResult:
        if self._done:
            raise EpisodeDone("episode already terminated; call reset()")
        a = np.clip(np.asarray(action, dtype=np.float64).reshape(6), -1.0, 1.0)
        prev_errors = self._errors

        outcome = "running"
        qdot = np.zeros(6)
        try:
            qdot = resolve_joint_velocities(
                self.chain, self._q, self.bounds.to_twist(a), self.weights.phi_jacobian)
        except SingularityError:
            outcome = "singularity"
            q_new = self._q
        else:
            q_new = self._q + qdot / self.fc
            if np.any(q_new < self.chain.joint_limits[:, 0]) or \
                    np.any(q_new > self.chain.joint_limits[:, 1]):
                outcome = "joint-limit"

        self._q = np.asarray(q_new, dtype=np.float64)
        self._qdot = qdot
        self._refresh_view()
        new_errors = self._errors

        if outcome == "running":
            t_c = self.camera_pose()
            if check_collision(self.chain, self._q, self._scene, self.link_radius):
                outcome = "collision"
            elif not object_in_fov(self._scene, t_c, self.cam):
                outcome = "out-of-fov"
            elif new_errors[0] > self.weights.d_trans:
                outcome = "diverged-trans"
            elif new_errors[1] > self.weights.d_rot:
                outcome = "diverged-rot"
            elif new_errors[0] < self.weights.phi_trans and new_errors[1] < self.weights.phi_rot:
                outcome = "success"
            elif self._step_count + 1 >= self.weights.max_steps:
                outcome = "max-steps"

        reward = compute_reward(prev_errors, new_errors, a, outcome, self.weights)
        self._step_count += 1
        self._done = outcome != "running"
        obs = self._observe()
        self._log.append({
            "step": self._step_count,
            "q": [float(v) for v in self._q],
            "qdot": [float(v) for v in self._qdot],
            "action": [float(v) for v in a],
            "reward": reward,
            "e_trans": new_errors[0],
            "e_rot": new_errors[1],
            "e_img": new_errors[2],
            "outcome": outcome,
        })
        return StepResult(obs, reward, self._done, outcome)

    # ----------------------------------------------- goal-conditioning API
    def achieved_payload(self) -> dict[str, np.ndarray]:
        """Snapshot of the goal-relevant part of the current state."""
        return {
            "pose": _pose_to_vec12(self.camera_pose()),
            "image": self._image.copy(),
            "latent": self._latent.copy(),
        }

    def goal_from_achieved(self, achieved: dict[str, np.ndarray]) -> EpisodeGoal:
        return EpisodeGoal(_vec12_to_pose(achieved["pose"]), achieved["image"],
                           achieved["latent"], self.goal.scene)

    def errors_against(self, achieved: dict[str, np.ndarray],
                       goal: EpisodeGoal) -> tuple[float, float, float]:
        e_trans, e_rot = pose_errors(_vec12_to_pose(achieved["pose"]), goal.camera_pose)
        return e_trans, e_rot, image_error(achieved["image"], goal.image)

    def recompute_transition(self, achieved_prev: dict, achieved: dict,
                             action: np.ndarray, goal: EpisodeGoal) -> tuple[float, bool, str]:
        """Reward/done/outcome of a stored transition under a substituted
        goal.  Purely goal-relative: reaching the substituted goal is a
        success regardless of why the original episode ended."""
        prev_errors = self.errors_against(achieved_prev, goal)
        new_errors = self.errors_against(achieved, goal)
        if new_errors[0] > self.weights.d_trans:
            outcome = "diverged-trans"
        elif new_errors[1] > self.weights.d_rot:
            outcome = "diverged-rot"
        elif new_errors[0] < self.weights.phi_trans and new_errors[1] < self.weights.phi_rot:
            outcome = "success"
        else:
            outcome = "running"
        reward = compute_reward(prev_errors, new_errors, action, outcome, self.weights)
        return reward, outcome != "running", outcome

    def replace_goal_in_obs(self, obs_vec: np.ndarray, goal: EpisodeGoal) -> np.ndarray:
        out = np.asarray(obs_vec, dtype=np.float64).copy()
        latent = self.ae.latent_dim
        out[latent:2 * latent] = goal.latent
        return out

    # ------------------------------------------------------ state plumbing
    def get_state(self) -> dict:
        """Snapshot sufficient to re-simulate from this exact state."""
        return {
            "q": self._q.copy(),
            "qdot": self._qdot.copy(),
            "step_count": self._step_count,
            "done": self._done,
            "scene": self._scene,
            "goal": self._goal,
        }

    def set_state(self, state: dict) -> Observation:
        self._scene = state["scene"]
        self._goal = state["goal"]
        self._q = state["q"].copy()
        self._qdot = state["qdot"].copy()
        self._step_count = state["step_count"]
        self._done = state["done"]
        self._refresh_view()
        return self._observe()

    def write_episode_log(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for row in self._log:
                fh.write(json.dumps(row) + "\n")


def fk_jacobian_ee(chain: DhChain, q: np.ndarray) -> np.ndarray:
    from .kinematics import geometric_jacobian

    return geometric_jacobian(chain, q, frame="ee")


def _axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    from .kinematics import skew

    k = skew(axis)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)
