"""Synthetic depth camera over a parametric table-and-cup scene.

The scene is a horizontal table plane with a capped cylinder ("cup")
standing on it.  Rendering is analytic ray casting against those three
primitives (plane, cylinder side, caps) with no sampling noise, so the
same inputs always produce the same bits.

Depth convention: each pixel stores the camera-frame z coordinate of the
nearest hit (what a real depth sensor reports), clamped to [near, far];
misses are encoded as the far value.  Camera frame: x right, y down,
z forward along the optical axis.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .kinematics import Pose, quat_from_matrix, rot_z

_RAY_CACHE: dict[tuple, np.ndarray] = {}


@dataclass(frozen=True)
class CameraModel:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    near: float
    far: float
    supersample: int = 3

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not self.near < self.far:
            raise ValueError("need near < far")
        if self.supersample < 1:
            raise ValueError("supersample factor must be >= 1")

    @staticmethod
    def from_fov(width: int = 32, height: int = 32, fov_deg: float = 45.0,
                 near: float = 0.05, far: float = 1.5,
                 supersample: int = 3) -> "CameraModel":
        f = (height / 2.0) / np.tan(np.radians(fov_deg) / 2.0)
        return CameraModel(width, height, f, f,
                           (width - 1) / 2.0, (height - 1) / 2.0, near, far,
                           supersample)

    def pixel_rays(self) -> np.ndarray:
        """Unnormalized camera-frame ray directions, z = 1, one per sub-ray.

        With z = 1 the ray parameter t at a hit *is* the camera-frame
        depth, which keeps the renderer's depth convention exact.  Each
        pixel owns a supersample x supersample grid of sub-rays centered
        on it; the renderer box-averages them, which is what lets the
        image vary smoothly as object edges sweep across pixels.
        """
        key = (self.width, self.height, self.fx, self.fy,
               self.cx, self.cy, self.supersample)
        cached = _RAY_CACHE.get(key)
        if cached is not None:
            return cached
        s = self.supersample
        sub = (np.arange(s, dtype=np.float64) + 0.5) / s - 0.5
        u = (np.arange(self.width, dtype=np.float64)[:, None] + sub[None, :]).reshape(-1)
        v = (np.arange(self.height, dtype=np.float64)[:, None] + sub[None, :]).reshape(-1)
        uu, vv = np.meshgrid(u, v)
        rays = np.stack([(uu - self.cx) / self.fx,
                         (vv - self.cy) / self.fy,
                         np.ones_like(uu)], axis=-1).reshape(-1, 3)
        _RAY_CACHE[key] = rays
        return rays

    def project(self, pts_cam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Pixel coordinates and depths of camera-frame points (N, 3)."""
        z = pts_cam[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * pts_cam[:, 0] / z + self.cx
            v = self.fy * pts_cam[:, 1] / z + self.cy
        return np.stack([u, v], axis=1), z

    def normalize(self, depth_m: np.ndarray) -> np.ndarray:
        """Map metric depth to float32 in [0, 1]; the network-facing format."""
        d = (np.asarray(depth_m, dtype=np.float64) - self.near) / (self.far - self.near)
        return d.astype(np.float32)


@dataclass(frozen=True)
class DepthImage:
    """Metric depth image, float32, shape (height, width)."""

    data: np.ndarray

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)


@dataclass(frozen=True)
class Scene:
    """Horizontal table plane with a capped-cylinder cup standing on it.

    The cup carries a handle post (a second, thinner cylinder rigid with
    it, taller than the cup so it shows from every azimuth) whose bearing
    is `cup_yaw`.  Without it a bare cylinder on a plane would look
    identical from every pose on an orbit around its axis, making yaw
    unobservable and the z-rotation of the object a visual no-op.
    """

    table_height: float = 0.0
    table_center: tuple[float, float] = (0.55, 0.0)
    table_half_extent: float = 0.8
    cup_radius: float = 0.04
    cup_height: float = 0.10
    cup_x: float = 0.55
    cup_y: float = 0.0
    cup_yaw: float = 0.0
    handle_radius: float = 0.02
    handle_height: float = 0.13
    handle_gap: float = 0.008

    def __post_init__(self) -> None:
        if (abs(self.cup_x - self.table_center[0]) > self.table_half_extent
                or abs(self.cup_y - self.table_center[1]) > self.table_half_extent):
            raise ValueError("cup must stand within the table extent")

    def cup_center(self) -> np.ndarray:
        """Mid-height point of the cup, the natural look-at target."""
        return np.array([self.cup_x, self.cup_y, self.table_height + self.cup_height / 2.0])

    def cup_top_center(self) -> np.ndarray:
        return np.array([self.cup_x, self.cup_y, self.table_height + self.cup_height])

    def handle_center_xy(self) -> tuple[float, float]:
        reach = self.cup_radius + self.handle_gap + self.handle_radius
        return (self.cup_x + reach * np.cos(self.cup_yaw),
                self.cup_y + reach * np.sin(self.cup_yaw))


def _capped_cylinder_hits(origin: np.ndarray, dirs: np.ndarray, t_best: np.ndarray,
                          cx: float, cy: float, radius: float,
                          z_lo: float, z_hi: float) -> np.ndarray:
    """Fold nearest hits of a vertical capped cylinder into t_best."""
    dz = dirs[:, 2]
    ox = origin[0] - cx
    oy = origin[1] - cy
    a = dirs[:, 0] ** 2 + dirs[:, 1] ** 2
    b = 2.0 * (ox * dirs[:, 0] + oy * dirs[:, 1])
    c = ox * ox + oy * oy - radius ** 2
    disc = b * b - 4.0 * a * c
    with np.errstate(divide="ignore", invalid="ignore"):
        sq = np.sqrt(np.maximum(disc, 0.0))
        for sign in (-1.0, 1.0):
            t_cyl = (-b + sign * sq) / (2.0 * a)
            z_at = origin[2] + t_cyl * dz
            ok = (disc >= 0.0) & (a > 1e-15) & (t_cyl > 0.0) & (z_at >= z_lo) & (z_at <= z_hi)
            t_best = np.where(ok & (t_cyl < t_best), t_cyl, t_best)
        for z_cap in (z_hi, z_lo):
            t_cap = (z_cap - origin[2]) / dz
            hit_x = origin[0] + t_cap * dirs[:, 0] - cx
            hit_y = origin[1] + t_cap * dirs[:, 1] - cy
            ok = ((np.abs(dz) > 1e-15) & (t_cap > 0.0)
                  & (hit_x * hit_x + hit_y * hit_y <= radius ** 2))
            t_best = np.where(ok & (t_cap < t_best), t_cap, t_best)
    return t_best


def render_depth(scene: Scene, camera_pose: Pose, cam: CameraModel) -> DepthImage:
    """Analytic nearest-hit depth of the scene from `camera_pose`."""
    dirs = camera_pose.rotation @ cam.pixel_rays().T  # (3, N) world directions
    dirs = dirs.T
    origin = camera_pose.translation
    n = dirs.shape[0]
    t_best = np.full(n, np.inf)

    # Table plane z = h, restricted to the square extent.
    dz = dirs[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_plane = (scene.table_height - origin[2]) / dz
    hit_xy = origin[:2] + t_plane[:, None] * dirs[:, :2]
    ok = (
        (np.abs(dz) > 1e-15)
        & (t_plane > 0.0)
        & (np.abs(hit_xy[:, 0] - scene.table_center[0]) <= scene.table_half_extent)
        & (np.abs(hit_xy[:, 1] - scene.table_center[1]) <= scene.table_half_extent)
    )
    t_best = np.where(ok & (t_plane < t_best), t_plane, t_best)

    z_lo = scene.table_height
    t_best = _capped_cylinder_hits(origin, dirs, t_best, scene.cup_x, scene.cup_y,
                                   scene.cup_radius, z_lo, z_lo + scene.cup_height)
    handle_x, handle_y = scene.handle_center_xy()
    t_best = _capped_cylinder_hits(origin, dirs, t_best, handle_x, handle_y,
                                   scene.handle_radius, z_lo, z_lo + scene.handle_height)

    depth = np.clip(t_best, cam.near, cam.far)
    s = cam.supersample
    depth = depth.reshape(cam.height, s, cam.width, s).mean(axis=(1, 3))
    return DepthImage(depth.astype(np.float32))


def look_at(position: np.ndarray, target: np.ndarray, roll: float = 0.0) -> Pose:
    """Camera pose at `position` with the optical axis through `target`.

    Roll rotates the image about the optical axis; with roll 0 the image
    x axis is horizontal (or world-x aligned for a straight-down view).
    """
    z = np.asarray(target, dtype=float) - np.asarray(position, dtype=float)
    nz = np.linalg.norm(z)
    if nz < 1e-12:
        raise ValueError("camera position coincides with the target")
    z = z / nz
    ref = np.array([0.0, 0.0, 1.0])
    if abs(z @ ref) > 1.0 - 1e-9:
        ref = np.array([1.0, 0.0, 0.0])
    x = np.cross(ref, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    r = np.stack([x, y, z], axis=1) @ rot_z(roll)
    return Pose(r, np.asarray(position, dtype=float).copy())


def sample_camera_pose_on_cap(
    rng: np.random.Generator,
    radius_range: tuple[float, float],
    target: np.ndarray,
    min_cos_zenith: float = 0.0,
    roll_range: float = 2.0 * np.pi,
) -> Pose:
    """Random pose on the upper spherical cap around `target`, looking at it.

    Position is uniform over the cap area (cos-zenith uniform in
    [min_cos_zenith, 1]) at a radius uniform in `radius_range`; the
    orientation looks at the target with a random roll.
    """
    r_lo, r_hi = radius_range
    if not 0.0 < r_lo <= r_hi:
        raise ValueError("need 0 < radius_min <= radius_max")
    radius = rng.uniform(r_lo, r_hi)
    cos_zen = rng.uniform(min_cos_zenith, 1.0)
    azimuth = rng.uniform(0.0, 2.0 * np.pi)
    roll = rng.uniform(0.0, roll_range)
    sin_zen = np.sqrt(max(0.0, 1.0 - cos_zen * cos_zen))
    offset = radius * np.array([sin_zen * np.cos(azimuth),
                                sin_zen * np.sin(azimuth),
                                cos_zen])
    return look_at(np.asarray(target, dtype=float) + offset, target, roll)


def perturb_object(scene: Scene, rng: np.random.Generator, move_range: float) -> Scene:
    """Move the cup uniformly within +-move_range in x/y and re-draw its yaw."""
    dx = rng.uniform(-move_range, move_range)
    dy = rng.uniform(-move_range, move_range)
    yaw = rng.uniform(0.0, 2.0 * np.pi)
    return replace(scene, cup_x=scene.cup_x + dx, cup_y=scene.cup_y + dy, cup_yaw=yaw)


def _cup_probe_points(scene: Scene, n_rim: int = 8) -> np.ndarray:
    """Cup center plus top/bottom rim samples, used for FOV checks."""
    ang = np.linspace(0.0, 2.0 * np.pi, n_rim, endpoint=False)
    ring = np.stack([scene.cup_x + scene.cup_radius * np.cos(ang),
                     scene.cup_y + scene.cup_radius * np.sin(ang),
                     np.zeros(n_rim)], axis=1)
    top = ring + np.array([0.0, 0.0, scene.table_height + scene.cup_height])
    bottom = ring + np.array([0.0, 0.0, scene.table_height])
    return np.vstack([scene.cup_center()[None, :], top, bottom])


def object_in_fov(scene: Scene, camera_pose: Pose, cam: CameraModel) -> bool:
    """True iff the cup center and at least one silhouette sample project
    inside the (closed) image bounds with positive depth."""
    pts_cam = camera_pose.inverse().transform_points(_cup_probe_points(scene))
    uv, z = cam.project(pts_cam)
    inside = (
        (z > 0.0)
        & (uv[:, 0] >= 0.0) & (uv[:, 0] <= cam.width - 1)
        & (uv[:, 1] >= 0.0) & (uv[:, 1] <= cam.height - 1)
    )
    return bool(inside[0] and inside[1:].any())


# ---------------------------------------------------------------- datasets

def generate_autoencoder_dataset(
    n_cam: int,
    n_obj: int,
    out_dir: str | Path,
    seed: int,
    scene: Scene | None = None,
    cam: CameraModel | None = None,
    radius_range: tuple[float, float] = (0.05, 0.85),
) -> dict:
    """Render n_cam x n_obj depth images into a dataset directory.

    Layout: manifest.json (counts, dims, normalization constants, seed),
    samples.bin (normalized little-endian float32, image-major), and
    poses.csv (camera pose as xyz+quaternion plus cup x, y, yaw).

    Every sample's randomness is derived from (seed, sample index), so the
    output is byte-identical no matter how generation is scheduled.
    """
    from .config import substream

    if n_cam < 1 or n_obj < 1:
        raise ValueError("need n_cam >= 1 and n_obj >= 1")
    scene = scene or Scene()
    cam = cam or CameraModel.from_fov()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    manifest = {
        "samples": n_cam * n_obj,
        "n_cam": n_cam,
        "n_obj": n_obj,
        "width": cam.width,
        "height": cam.height,
        "seed": seed,
        "radius_range": list(radius_range),
        "normalization": {"near": cam.near, "far": cam.far},
    }
    try:
        with open(out_dir / "samples.bin", "wb") as bin_fh, \
                open(out_dir / "poses.csv", "w", newline="") as csv_fh:
            writer = csv.writer(csv_fh)
            writer.writerow(["index", "cam_x", "cam_y", "cam_z",
                             "cam_qw", "cam_qx", "cam_qy", "cam_qz",
                             "cup_x", "cup_y", "cup_yaw"])
            for i in range(n_cam):
                # One camera pose per i, shared by that row of object poses.
                pose = sample_camera_pose_on_cap(
                    substream(seed, "dataset-cam", i), radius_range, scene.cup_center())
                for j in range(n_obj):
                    idx = i * n_obj + j
                    obj = perturb_object(scene, substream(seed, "dataset-obj", idx), 0.10)
                    img = render_depth(obj, pose, cam)
                    bin_fh.write(cam.normalize(img.data).astype("<f4").tobytes())
                    quat = quat_from_matrix(pose.rotation)
                    writer.writerow(
                        [idx] + [f"{v:.17g}" for v in pose.translation]
                        + [f"{v:.17g}" for v in quat]
                        + [f"{obj.cup_x:.17g}", f"{obj.cup_y:.17g}", f"{obj.cup_yaw:.17g}"])
        with open(out_dir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=1)
    except OSError as exc:
        raise OSError(f"writing dataset under {out_dir}: {exc}") from exc
    return manifest


def load_dataset(path: str | Path) -> tuple[np.ndarray, dict]:
    """(normalized images as float32 (N, H, W), manifest dict)."""
    path = Path(path)
    try:
        with open(path / "manifest.json") as fh:
            manifest = json.load(fh)
        raw = np.frombuffer((path / "samples.bin").read_bytes(), dtype="<f4")
    except OSError as exc:
        raise OSError(f"reading dataset under {path}: {exc}") from exc
    n, h, w = manifest["samples"], manifest["height"], manifest["width"]
    if raw.size != n * h * w:
        raise ValueError(f"dataset {path}: expected {n * h * w} floats, found {raw.size}")
    return raw.reshape(n, h, w).astype(np.float32), manifest
