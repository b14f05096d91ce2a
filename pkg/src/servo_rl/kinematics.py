"""Kinematics for a 6-DOF serial arm modeled on the UR5e.

Standard DH convention: the transform contributed by joint i is
Rz(theta_i + offset_i) Tz(d_i) Tx(a_i) Rx(alpha_i).  The camera hangs off
the flange through a fixed hand-eye transform, so forward kinematics
returns both the end-effector pose and the camera pose.

Joint velocities are resolved from a commanded camera twist through the
SE(3) adjoint (camera frame -> ee frame) and the ee-frame geometric
Jacobian; configurations whose Jacobian determinant falls under a
threshold raise SingularityError instead of producing wild velocities.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


class SingularityError(RuntimeError):
    """Jacobian determinant magnitude at or below the safety threshold."""


# ---------------------------------------------------------------- rotations

def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rot_x(t: float) -> np.ndarray:
    c, s = np.cos(t), np.sin(t)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(t: float) -> np.ndarray:
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(t: float) -> np.ndarray:
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rpy_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def rotation_angle(r: np.ndarray) -> float:
    """Axis-angle magnitude of a rotation matrix, in [0, pi]."""
    c = (np.trace(r) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def rotation_log(r: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle) of a rotation matrix."""
    angle = rotation_angle(r)
    if angle < 1e-12:
        return np.zeros(3)
    if np.pi - angle < 1e-6:
        # Near pi the off-diagonal formula degenerates; recover the axis
        # from the symmetric part instead.
        m = (r + np.eye(3)) / 2.0
        axis = np.sqrt(np.maximum(np.diagonal(m), 0.0))
        # Fix signs using the largest component.
        k = int(np.argmax(axis))
        if axis[k] > 0.0:
            sign = np.sign(np.array([m[0, k], m[1, k], m[2, k]]))
            sign[sign == 0.0] = 1.0
            axis = np.abs(axis) * sign * np.sign(axis[k])
        n = np.linalg.norm(axis)
        if n > 0.0:
            axis = axis / n
        return axis * angle
    vee = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    return vee * (angle / (2.0 * np.sin(angle)))


def quat_from_matrix(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) with w >= 0 for a canonical sign."""
    t = np.trace(r)
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (r[2, 1] - r[1, 2]) / s,
                      (r[0, 2] - r[2, 0]) / s,
                      (r[1, 0] - r[0, 1]) / s])
    else:
        i = int(np.argmax(np.diagonal(r)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(r[i, i] - r[j, j] - r[k, k] + 1.0, 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (r[k, j] - r[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (r[j, i] + r[i, j]) / s
        q[1 + k] = (r[k, i] + r[i, k]) / s
    q /= np.linalg.norm(q)
    if q[0] < 0.0:
        q = -q
    return q


# --------------------------------------------------------------------- Pose

@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotation (3x3 orthonormal) plus translation (m)."""

    rotation: np.ndarray
    translation: np.ndarray

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_xyz_rpy(x: float, y: float, z: float,
                     roll: float = 0.0, pitch: float = 0.0, yaw: float = 0.0) -> "Pose":
        return Pose(rpy_matrix(roll, pitch, yaw), np.array([x, y, z], dtype=float))

    @staticmethod
    def from_matrix(t: np.ndarray) -> "Pose":
        return Pose(t[:3, :3].copy(), t[:3, 3].copy())

    def as_matrix(self) -> np.ndarray:
        t = np.eye(4)
        t[:3, :3] = self.rotation
        t[:3, 3] = self.translation
        return t

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def transform_points(self, pts: np.ndarray) -> np.ndarray:
        return pts @ self.rotation.T + self.translation

    def orthonormality_residual(self) -> float:
        r = self.rotation
        return float(max(np.abs(r.T @ r - np.eye(3)).max(),
                         abs(np.linalg.det(r) - 1.0)))


@dataclass(frozen=True)
class Twist:
    """Linear (m/s) + angular (rad/s) velocity of a rigid frame."""

    linear: np.ndarray
    angular: np.ndarray

    @staticmethod
    def from_vector(v: np.ndarray) -> "Twist":
        v = np.asarray(v, dtype=float)
        return Twist(v[:3].copy(), v[3:6].copy())

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])


@dataclass(frozen=True)
class JointState:
    """Joint positions (rad) and velocities (rad/s)."""

    q: np.ndarray
    qdot: np.ndarray

    def violates_limits(self, chain: "DhChain") -> bool:
        return bool(np.any(self.q < chain.joint_limits[:, 0])
                    or np.any(self.q > chain.joint_limits[:, 1])
                    or np.any(np.abs(self.qdot) > chain.velocity_limits))


# ------------------------------------------------------------------ DhChain

@dataclass(frozen=True)
class DhChain:
    """Standard DH table for a 6-joint arm plus the fixed hand-eye transform."""

    a: np.ndarray
    d: np.ndarray
    alpha: np.ndarray
    theta_offset: np.ndarray
    joint_limits: np.ndarray        # (6, 2) rad
    velocity_limits: np.ndarray     # (6,) rad/s
    hand_eye: Pose                  # ee -> camera

    def __post_init__(self) -> None:
        for name in ("a", "d", "alpha", "theta_offset", "velocity_limits"):
            if getattr(self, name).shape != (6,):
                raise ValueError(f"{name} must have shape (6,)")
        if self.joint_limits.shape != (6, 2):
            raise ValueError("joint_limits must have shape (6, 2)")
        if np.any(self.joint_limits[:, 0] >= self.joint_limits[:, 1]):
            raise ValueError("joint limit min must be < max")

    def with_hand_eye(self, hand_eye: Pose) -> "DhChain":
        return replace(self, hand_eye=hand_eye)


def ur5e_chain(hand_eye: Pose | None = None) -> DhChain:
    """UR5e with its published standard DH parameters.

    Default limits are +-2pi at pi rad/s per joint; the default hand-eye
    puts the camera 5 cm beyond the flange, optical axis along ee z.
    """
    if hand_eye is None:
        hand_eye = Pose(np.eye(3), np.array([0.0, 0.0, 0.05]))
    return DhChain(
        a=np.array([0.0, -0.425, -0.3922, 0.0, 0.0, 0.0]),
        d=np.array([0.1625, 0.0, 0.0, 0.1333, 0.0997, 0.0996]),
        alpha=np.array([np.pi / 2, 0.0, 0.0, np.pi / 2, -np.pi / 2, 0.0]),
        theta_offset=np.zeros(6),
        joint_limits=np.array([[-2.0 * np.pi, 2.0 * np.pi]] * 6),
        velocity_limits=np.full(6, np.pi),
        hand_eye=hand_eye,
    )


def dh_joint_transform(a: float, d: float, alpha: float, theta: float) -> np.ndarray:
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array([
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def fk_frames(chain: DhChain, q: np.ndarray) -> list[np.ndarray]:
    """4x4 transforms of the base frame and every joint frame, base first."""
    frames = [np.eye(4)]
    t = np.eye(4)
    for i in range(6):
        t = t @ dh_joint_transform(chain.a[i], chain.d[i], chain.alpha[i],
                                   q[i] + chain.theta_offset[i])
        frames.append(t)
    return frames


def forward_kinematics(chain: DhChain, q: np.ndarray) -> tuple[Pose, Pose]:
    """(ee pose, camera pose) in the base frame."""
    t_ee = Pose.from_matrix(fk_frames(chain, q)[-1])
    return t_ee, t_ee.compose(chain.hand_eye)


def geometric_jacobian(chain: DhChain, q: np.ndarray, frame: str = "base") -> np.ndarray:
    """6x6 Jacobian mapping qdot to the ee twist [v; w].

    frame="base" expresses the twist in the base frame, frame="ee" in the
    end-effector frame (block rotation by R_ee^T).
    """
    frames = fk_frames(chain, q)
    p_ee = frames[-1][:3, 3]
    jac = np.empty((6, 6))
    for i in range(6):
        z = frames[i][:3, 2]
        p = frames[i][:3, 3]
        jac[:3, i] = np.cross(z, p_ee - p)
        jac[3:, i] = z
    if frame == "ee":
        rt = frames[-1][:3, :3].T
        jac = np.vstack([rt @ jac[:3], rt @ jac[3:]])
    elif frame != "base":
        raise ValueError("frame must be 'base' or 'ee'")
    return jac


def twist_transform(pose: Pose) -> np.ndarray:
    """6x6 adjoint of `pose` mapping a child-frame twist to the parent frame.

    For the hand-eye pose (ee -> camera) this re-expresses a camera-frame
    twist as the end-effector twist: [[R, [t]x R], [0, R]].
    """
    r, t = pose.rotation, pose.translation
    out = np.zeros((6, 6))
    out[:3, :3] = r
    out[:3, 3:] = skew(t) @ r
    out[3:, 3:] = r
    return out


def resolve_joint_velocities(
    chain: DhChain,
    q: np.ndarray,
    camera_twist: Twist,
    det_threshold: float = 1e-4,
) -> np.ndarray:
    """Joint velocities reproducing a commanded camera-frame twist.

    Raises SingularityError when |det J_ee| <= det_threshold.  The result
    is scaled uniformly (direction preserved) if any joint would exceed
    its velocity limit.
    """
    jac = geometric_jacobian(chain, q, frame="ee")
    det = np.linalg.det(jac)
    if abs(det) <= det_threshold:
        raise SingularityError(f"|det J| = {abs(det):.3e} <= {det_threshold:.3e}")
    v_ee = twist_transform(chain.hand_eye) @ camera_twist.as_vector()
    qdot = np.linalg.solve(jac, v_ee)
    over = np.abs(qdot) / chain.velocity_limits
    worst = over.max()
    if worst > 1.0:
        qdot = qdot / worst
    return qdot


def jacobian_determinant(chain: DhChain, q: np.ndarray) -> float:
    """det of the ee-frame Jacobian (|det| is rotation-frame invariant)."""
    return float(np.linalg.det(geometric_jacobian(chain, q, frame="ee")))


def pose_errors(t_c: Pose, t_c_star: Pose) -> tuple[float, float]:
    """(translation error in m, rotation error in rad, both >= 0)."""
    e_trans = float(np.linalg.norm(t_c.translation - t_c_star.translation))
    e_rot = rotation_angle(t_c_star.rotation.T @ t_c.rotation)
    return e_trans, e_rot


def camera_jacobian(chain: DhChain, q: np.ndarray) -> np.ndarray:
    """Base-frame Jacobian of the camera point (used by the IK helper)."""
    frames = fk_frames(chain, q)
    t_ee = Pose.from_matrix(frames[-1])
    p_cam = t_ee.compose(chain.hand_eye).translation
    jac = np.empty((6, 6))
    for i in range(6):
        z = frames[i][:3, 2]
        p = frames[i][:3, 3]
        jac[:3, i] = np.cross(z, p_cam - p)
        jac[3:, i] = z
    return jac


def solve_camera_ik(
    chain: DhChain,
    target: Pose,
    q0: np.ndarray,
    tol: float = 1e-11,
    max_iters: int = 300,
    damping: float = 1e-6,
    step_clip: float = 0.5,
) -> np.ndarray | None:
    """Damped least-squares IK driving the camera frame onto `target`.

    Returns the joint vector, or None if it fails to converge (callers
    resample).  Deterministic given its inputs.
    """
    q = np.array(q0, dtype=float)
    for _ in range(max_iters):
        _, t_c = forward_kinematics(chain, q)
        err = np.concatenate([
            target.translation - t_c.translation,
            rotation_log(target.rotation @ t_c.rotation.T),
        ])
        if np.linalg.norm(err) < tol:
            return q
        jac = camera_jacobian(chain, q)
        jjt = jac @ jac.T + damping * np.eye(6)
        dq = jac.T @ np.linalg.solve(jjt, err)
        n = np.linalg.norm(dq)
        if n > step_clip:
            dq *= step_clip / n
        q = np.clip(q + dq, chain.joint_limits[:, 0], chain.joint_limits[:, 1])
    return None
