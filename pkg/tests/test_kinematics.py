import numpy as np
import pytest

from servo_rl import kinematics as kin

RNG = np.random.default_rng(314)


def random_nonsingular_q(rng, chain, min_det=1e-3):
    while True:
        q = rng.uniform(-1.6, 1.6, 6)
        if abs(kin.jacobian_determinant(chain, q)) > min_det:
            return q


def oracle_fk(chain, q):
    """Independent per-joint 4x4 matrix-product chain."""
    t = np.eye(4)
    for i in range(6):
        th = q[i] + chain.theta_offset[i]
        ct, st = np.cos(th), np.sin(th)
        ca, sa = np.cos(chain.alpha[i]), np.sin(chain.alpha[i])
        a, d = chain.a[i], chain.d[i]
        m = np.array([
            [ct, -st * ca, st * sa, a * ct],
            [st, ct * ca, -ct * sa, a * st],
            [0.0, sa, ca, d],
            [0.0, 0.0, 0.0, 1.0],
        ])
        t = np.matmul(t, m)
    return t


class TestForwardKinematics:
    def test_degenerate_chain_stacks_d_offsets(self):
        d = np.array([0.1, 0.2, 0.05, 0.3, 0.15, 0.2])
        chain = kin.DhChain(
            a=np.zeros(6), d=d, alpha=np.zeros(6), theta_offset=np.zeros(6),
            joint_limits=np.array([[-np.pi, np.pi]] * 6),
            velocity_limits=np.ones(6), hand_eye=kin.Pose.identity())
        t_ee, _ = kin.forward_kinematics(chain, np.zeros(6))
        assert np.allclose(t_ee.translation, [0.0, 0.0, d.sum()], atol=1e-15)
        assert np.allclose(t_ee.rotation, np.eye(3), atol=1e-15)

    def test_ur5e_matches_per_joint_product_oracle(self):
        chain = kin.ur5e_chain()
        for q in [np.zeros(6)] + [RNG.uniform(-np.pi, np.pi, 6) for _ in range(20)]:
            want = oracle_fk(chain, q)
            t_ee, _ = kin.forward_kinematics(chain, q)
            assert np.abs(t_ee.translation - want[:3, 3]).max() < 1e-9
            assert np.abs(t_ee.rotation - want[:3, :3]).max() < 1e-9

    def test_identity_hand_eye_makes_camera_equal_ee(self):
        chain = kin.ur5e_chain(hand_eye=kin.Pose.identity())
        q = RNG.uniform(-1, 1, 6)
        t_ee, t_c = kin.forward_kinematics(chain, q)
        assert np.array_equal(t_ee.rotation, t_c.rotation)
        assert np.array_equal(t_ee.translation, t_c.translation)

    def test_rotation_stays_orthonormal(self):
        chain = kin.ur5e_chain()
        for _ in range(100):
            t_ee, t_c = kin.forward_kinematics(chain, RNG.uniform(-2 * np.pi, 2 * np.pi, 6))
            assert t_ee.orthonormality_residual() < 1e-9
            assert t_c.orthonormality_residual() < 1e-9


class TestJacobian:
    def fd_jacobian(self, chain, q, h=1e-6):
        jac = np.zeros((6, 6))
        t0, _ = kin.forward_kinematics(chain, q)
        for i in range(6):
            qp, qm = q.copy(), q.copy()
            qp[i] += h
            qm[i] -= h
            tp, _ = kin.forward_kinematics(chain, qp)
            tm, _ = kin.forward_kinematics(chain, qm)
            jac[:3, i] = (tp.translation - tm.translation) / (2 * h)
            dr = (tp.rotation - tm.rotation) / (2 * h) @ t0.rotation.T
            jac[3:, i] = [dr[2, 1] - dr[1, 2], dr[0, 2] - dr[2, 0], dr[1, 0] - dr[0, 1]]
            jac[3:, i] /= 2.0
        return jac

    def test_columns_match_fk_finite_differences(self):
        chain = kin.ur5e_chain()
        for _ in range(100):
            q = RNG.uniform(-2.5, 2.5, 6)
            jac = kin.geometric_jacobian(chain, q, "base")
            assert np.abs(jac - self.fd_jacobian(chain, q)).max() < 1e-5

    def test_elbow_straight_is_singular(self):
        chain = kin.ur5e_chain()
        q = np.array([0.3, -1.0, 0.0, 0.5, 1.1, 0.2])  # q3 = 0: elbow straight
        assert abs(kin.jacobian_determinant(chain, q)) < 1e-8

    def test_ee_frame_is_base_frame_rotated(self):
        chain = kin.ur5e_chain()
        q = RNG.uniform(-1.5, 1.5, 6)
        t_ee, _ = kin.forward_kinematics(chain, q)
        rt = t_ee.rotation.T
        base = kin.geometric_jacobian(chain, q, "base")
        want = np.vstack([rt @ base[:3], rt @ base[3:]])
        assert np.allclose(kin.geometric_jacobian(chain, q, "ee"), want, atol=1e-12)


class TestTwistTransform:
    def test_identity_pose_gives_identity(self):
        assert np.array_equal(kin.twist_transform(kin.Pose.identity()), np.eye(6))

    def test_pure_translation_cross_product_oracle(self):
        # t = (0,0,0.1); angular twist (1,0,0) => induced linear [t]x w = (0, 0.1, 0)
        pose = kin.Pose(np.eye(3), np.array([0.0, 0.0, 0.1]))
        v = kin.twist_transform(pose) @ np.array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
        assert np.allclose(v[:3], [0.0, 0.1, 0.0], atol=1e-15)
        assert np.allclose(v[3:], [1.0, 0.0, 0.0], atol=1e-15)

    def test_composition_homomorphism(self):
        for _ in range(20):
            p1 = _random_pose()
            p2 = _random_pose()
            lhs = kin.twist_transform(p1.compose(p2))
            rhs = kin.twist_transform(p1) @ kin.twist_transform(p2)
            assert np.abs(lhs - rhs).max() < 1e-9


def _random_pose():
    axis = RNG.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = RNG.uniform(0, np.pi)
    k = kin.skew(axis)
    rot = np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)
    return kin.Pose(rot, RNG.uniform(-1, 1, 3))


class TestResolveJointVelocities:
    def test_zero_twist_gives_zero_velocities(self):
        chain = kin.ur5e_chain()
        q = random_nonsingular_q(RNG, chain)
        qdot = kin.resolve_joint_velocities(chain, q, kin.Twist(np.zeros(3), np.zeros(3)))
        assert np.array_equal(qdot, np.zeros(6))

    def test_round_trip_reproduces_twist(self):
        # Clamping rescales qdot by design, so keep draws inside the limits.
        chain = kin.ur5e_chain()
        checked = 0
        while checked < 25:
            q = random_nonsingular_q(RNG, chain, min_det=0.01)
            tw = kin.Twist(RNG.uniform(-0.02, 0.02, 3), RNG.uniform(-0.1, 0.1, 3))
            v_ee = kin.twist_transform(chain.hand_eye) @ tw.as_vector()
            unclamped = np.linalg.solve(kin.geometric_jacobian(chain, q, "ee"), v_ee)
            if np.any(np.abs(unclamped) > chain.velocity_limits):
                continue
            qdot = kin.resolve_joint_velocities(chain, q, tw)
            resid = kin.geometric_jacobian(chain, q, "ee") @ qdot - v_ee
            assert np.abs(resid).max() < 1e-9
            checked += 1

    def test_singular_configuration_raises(self):
        chain = kin.ur5e_chain()
        q = np.array([0.3, -1.0, 0.0, 0.5, 1.1, 0.2])
        with pytest.raises(kin.SingularityError):
            kin.resolve_joint_velocities(chain, q, kin.Twist(np.ones(3) * 0.01, np.zeros(3)))

    def test_velocity_clamp_preserves_direction(self):
        chain = kin.ur5e_chain()
        q = random_nonsingular_q(RNG, chain)
        tw = kin.Twist(np.array([0.9, -0.8, 0.7]), np.array([2.0, -2.0, 1.5]))
        qdot = kin.resolve_joint_velocities(chain, q, tw)
        assert np.abs(qdot).max() <= chain.velocity_limits.max() + 1e-12
        unclamped = np.linalg.solve(kin.geometric_jacobian(chain, q, "ee"),
                                    kin.twist_transform(chain.hand_eye) @ tw.as_vector())
        ratio = qdot / unclamped
        assert np.abs(ratio - ratio[0]).max() < 1e-9  # uniform scaling


class TestPoseErrors:
    def test_identical_poses_are_zero(self):
        p = _random_pose()
        assert kin.pose_errors(p, p) == (0.0, 0.0)

    def test_pure_z_offset(self):
        p = kin.Pose.identity()
        q = kin.Pose(np.eye(3), np.array([0.0, 0.0, 0.05]))
        e_trans, e_rot = kin.pose_errors(p, q)
        assert e_trans == pytest.approx(0.05, abs=1e-15)
        assert e_rot == 0.0

    def test_30_degree_rotation(self):
        p = kin.Pose(kin.rot_x(np.pi / 6), np.zeros(3))
        e_trans, e_rot = kin.pose_errors(p, kin.Pose.identity())
        assert e_trans == 0.0
        assert abs(e_rot - np.pi / 6) < 1e-12

    def test_symmetric_in_arguments(self):
        for _ in range(10):
            a, b = _random_pose(), _random_pose()
            assert kin.pose_errors(a, b) == pytest.approx(kin.pose_errors(b, a), abs=1e-12)


class TestIkHelper:
    def test_reaches_target_camera_pose(self):
        chain = kin.ur5e_chain()
        q_true = np.array([0.4, -1.3, 1.2, -1.5, -1.4, 0.3])
        _, target = kin.forward_kinematics(chain, q_true)
        q = kin.solve_camera_ik(chain, target, np.array([0.0, -1.2, 1.4, -1.8, -1.6, 0.0]))
        assert q is not None
        _, t_c = kin.forward_kinematics(chain, q)
        assert np.linalg.norm(t_c.translation - target.translation) < 1e-9
        assert kin.rotation_angle(t_c.rotation.T @ target.rotation) < 1e-6

    def test_unreachable_returns_none(self):
        chain = kin.ur5e_chain()
        target = kin.Pose(np.eye(3), np.array([5.0, 0.0, 0.0]))
        assert kin.solve_camera_ik(chain, target, np.zeros(6), max_iters=50) is None
