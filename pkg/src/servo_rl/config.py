"""Flat key-value run configuration.

One registry of defaults covers every tunable in the project.  Configs are
plain text files of `key = value` lines (# comments allowed); the CLI adds
`--set key=value` overrides on top.  Unknown keys are rejected so typos
fail loudly, and the fully-resolved config is echoed into every run
directory for provenance.

All randomness flows from the single `seed` key through named substreams
(see `substream`), so components can be re-seeded independently and
parallel fan-out cannot change results.
"""
from __future__ import annotations

import zlib
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    """Bad key, bad value, or unparseable config file."""


DEFAULTS: dict[str, float | int | bool | str] = {
    "seed": 0,

    # Camera intrinsics / depth range
    "camera.width": 32,
    "camera.height": 32,
    "camera.fov_deg": 45.0,
    "camera.near": 0.05,
    "camera.far": 1.5,
    "camera.supersample": 3,

    # Table-and-cup scene (meters; robot base at the origin on the table plane)
    "scene.table_height": 0.0,
    "scene.table_cx": 0.55,
    "scene.table_cy": 0.0,
    "scene.table_half_extent": 0.8,
    "scene.cup_radius": 0.04,
    "scene.cup_height": 0.10,
    "scene.cup_x": 0.55,
    "scene.cup_y": 0.0,
    "scene.cup_yaw": 0.0,
    # Camera-pose sphere for autoencoder data generation
    "scene.cap_radius_min": 0.05,
    "scene.cap_radius_max": 0.85,

    # UR5e DH table (a, d, alpha per joint; overridable per index)
    "dh.a[0]": 0.0, "dh.a[1]": -0.425, "dh.a[2]": -0.3922,
    "dh.a[3]": 0.0, "dh.a[4]": 0.0, "dh.a[5]": 0.0,
    "dh.d[0]": 0.1625, "dh.d[1]": 0.0, "dh.d[2]": 0.0,
    "dh.d[3]": 0.1333, "dh.d[4]": 0.0997, "dh.d[5]": 0.0996,
    "dh.alpha[0]": 1.5707963267948966, "dh.alpha[1]": 0.0, "dh.alpha[2]": 0.0,
    "dh.alpha[3]": 1.5707963267948966, "dh.alpha[4]": -1.5707963267948966,
    "dh.alpha[5]": 0.0,
    "dh.limit_min": -6.283185307179586,
    "dh.limit_max": 6.283185307179586,
    "dh.velocity_limit": 3.141592653589793,
    "dh.handeye": "0,0,0.05,0,0,0",   # x,y,z,roll,pitch,yaw (ee -> camera)

    "kin.det_threshold": 1e-4,

    # Autoencoder
    "ae.latent": 16,
    "ae.hidden1": 256,
    "ae.hidden2": 64,
    "ae.learning_rate": 1e-3,
    "ae.batch": 64,
    "ae.epochs": 200,
    "ae.val_fraction": 0.1,
    "ae.early_stop_delta": 1e-5,
    "ae.early_stop_window": 20,

    # Environment: reward weights, thresholds, control loop
    "env.phi1": 100.0,
    "env.phi2": 10.0,
    "env.phi3": 10.0,
    "env.phi4": 0.1,
    "env.phi_trans": 0.002,
    "env.phi_rot": 0.05,
    "env.d_trans": 1.0,
    "env.d_rot": 2.5,
    "env.fc": 10.0,
    "env.max_steps": 200,
    "env.bound_linear": 0.1,      # m/s per axis
    "env.bound_angular": 0.5,     # rad/s per axis
    "env.goal_radius_min": 0.15,
    "env.goal_radius_max": 0.40,
    "env.goal_min_cos_zenith": 0.45,
    "env.goal_roll_range": 6.283185307179586,
    "env.home_radius": 0.45,
    "env.home_cos_zenith": 0.95,
    "env.home_azimuth": 3.141592653589793,
    "env.link_radius": 0.05,
    "env.reset_tries": 100,
    "env.object_range_setting1": 0.05,
    "env.object_range_setting2": 0.10,
    "env.object_range_setting3": 0.10,

    # Direct visual servoing baseline
    "dvs.gain": 3.0,
    "dvs.valid_limit": 0.98,
    "dvs.mu": 1e-6,
    "dvs.max_steps": 200,
    "dvs.converge_trans": 0.002,
    "demo.prob": 0.1,
    "demo.radius": 0.03,
    "demo.rot_radius": 0.05,

    # TD3 agent
    "td3.eta": 0.99,
    "td3.tau": 0.005,
    "td3.policy_delay": 2,
    "td3.explore_sigma": 0.1,
    "td3.target_sigma": 0.2,
    "td3.target_clip": 0.5,
    "td3.batch": 256,
    "td3.hidden": 256,
    "td3.actor_lr": 3e-4,
    "td3.critic_lr": 3e-4,
    "td3.warmup_steps": 1000,
    "td3.explore_steps": 5000,
    "td3.buffer_capacity": 1000000,
    "td3.updates_per_step": 1,
    "her.k": 4,

    # Training loop
    "train.episodes": 2000,
    "train.eval_every": 0,        # env steps between eval rounds; 0 disables
    "train.eval_episodes": 50,
    "train.checkpoint_every": 200,  # episodes

    # Toy point-reach environment
    "toy.dim": 2,
    "toy.dt": 0.1,
    "toy.a_max": 1.0,
    "toy.success_radius": 0.05,
    "toy.max_steps": 50,
    "toy.phi1": 0.0,
    "toy.phi4": 0.1,
    "toy.max_steps_failure": False,
    "toy.hidden": 64,
    "toy.batch": 128,
    "toy.explore_steps": 1000,
    "toy.warmup_steps": 500,
    "toy.demo_prob": 0.1,

    # Evaluation bench
    "eval.trials": 100,
    "eval.start": "default",      # default | near-goal | hemisphere
    "eval.near_goal_trans": 0.005,
    "eval.near_goal_rot": 0.0349065850398866,  # 2 degrees
    "eval.hist_trans_bin": 0.0005,
    "eval.hist_trans_max": 0.005,
    "eval.hist_rot_bin": 0.01,
    "eval.hist_rot_max": 0.2,
}


def _parse_value(raw: str, like: float | int | bool | str):
    raw = raw.strip()
    if isinstance(like, bool):
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if isinstance(like, int):
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"expected an integer, got {raw!r}") from exc
    if isinstance(like, float):
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"expected a number, got {raw!r}") from exc
    return raw


class RunConfig:
    """Resolved configuration: defaults + file + explicit overrides."""

    def __init__(self, values: dict | None = None):
        self.values: dict = dict(DEFAULTS)
        if values:
            for key, val in values.items():
                if key not in DEFAULTS:
                    raise ConfigError(f"unknown config key {key!r}")
                self.values[key] = _parse_value(str(val), DEFAULTS[key])

    @classmethod
    def load(cls, path: str | Path | None = None,
             overrides: list[str] | tuple[str, ...] = ()) -> "RunConfig":
        merged: dict[str, str] = {}
        if path is not None:
            text = Path(path).read_text()
            for lineno, line in enumerate(text.splitlines(), 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, val = line.split("=", 1)
                merged[key.strip()] = val.strip()
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value")
            key, val = item.split("=", 1)
            merged[key.strip()] = val.strip()
        return cls(merged)

    def get(self, key: str):
        try:
            return self.values[key]
        except KeyError as exc:
            raise ConfigError(f"unknown config key {key!r}") from exc

    def get_float(self, key: str) -> float:
        return float(self.get(key))

    def get_int(self, key: str) -> int:
        return int(self.get(key))

    def get_bool(self, key: str) -> bool:
        return bool(self.get(key))

    def get_str(self, key: str) -> str:
        return str(self.get(key))

    def set(self, key: str, value) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _parse_value(str(value), DEFAULTS[key])

    @property
    def seed(self) -> int:
        return self.get_int("seed")

    def write(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [f"{key} = {self.values[key]}" for key in sorted(self.values)]
        path.write_text("\n".join(lines) + "\n")


def substream(seed: int, name: str, *indices: int) -> np.random.Generator:
    """Independent, reproducible RNG stream keyed by (seed, name, indices).

    The name is hashed with crc32 so streams are stable across platforms
    and sessions.
    """
    key = [int(seed), zlib.crc32(name.encode("utf-8"))] + [int(i) for i in indices]
    return np.random.default_rng(np.random.SeedSequence(key))
