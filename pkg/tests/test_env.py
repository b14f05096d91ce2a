import json

import numpy as np
import pytest

from servo_rl import env as envm
from servo_rl import kinematics as kin
from servo_rl.autoencoder import build_ae_model
from servo_rl.config import RunConfig, substream
from servo_rl.scene import Scene


@pytest.fixture(scope="module")
def ae_model():
    # Untrained weights are fine for env mechanics: latents just need to
    # be deterministic functions of the image.
    return build_ae_model(32, 32, 16, 64, 32, 0.05, 1.5, substream(0, "ae"))


@pytest.fixture()
def env(ae_model):
    return envm.ServoEnv.from_config(RunConfig(), ae_model)


class TestReset:
    def test_fixed_seed_reproduces_everything(self, env):
        obs_a, goal_a = env.reset(1, substream(4, "r"))
        qa = env.joint_state[0]
        obs_b, goal_b = env.reset(1, substream(4, "r"))
        assert np.array_equal(obs_a.flatten(), obs_b.flatten())
        assert np.array_equal(goal_a.image, goal_b.image)
        assert np.array_equal(qa, env.joint_state[0])

    def test_setting1_object_displacement_within_5cm(self, env):
        base = env.base_scene
        for i in range(50):
            env.reset(1, substream(5, "r", i))
            assert abs(env.scene.cup_x - base.cup_x) <= 0.05
            assert abs(env.scene.cup_y - base.cup_y) <= 0.05

    def test_setting2_object_displacement_within_10cm(self, env):
        base = env.base_scene
        for i in range(25):
            env.reset(2, substream(6, "r", i))
            dx = abs(env.scene.cup_x - base.cup_x)
            assert dx <= 0.10
        assert dx > 0.0

    def test_settings_1_and_2_start_from_home(self, env):
        env.reset(1, substream(7, "r"))
        assert np.array_equal(env.joint_state[0], env.home_q)
        env.reset(2, substream(7, "r"))
        assert np.array_equal(env.joint_state[0], env.home_q)

    def test_setting3_start_poses_spread_over_hemisphere(self, env):
        positions = []
        for i in range(40):
            env.reset(3, substream(8, "r", i))
            positions.append(env.camera_pose().translation)
        positions = np.array(positions)
        spread = positions.max(axis=0) - positions.min(axis=0)
        assert spread[0] > 0.15 and spread[1] > 0.15  # nondegenerate scatter
        dists = np.linalg.norm(positions[:, None] - positions[None, :], axis=-1)
        assert np.median(dists[dists > 0]) > 0.1

    def test_goal_always_sees_object(self, env):
        from servo_rl.scene import object_in_fov

        for i in range(25):
            _, goal = env.reset(3, substream(9, "r", i))
            assert object_in_fov(env.scene, goal.camera_pose, env.cam)

    def test_invalid_setting_rejected(self, env):
        with pytest.raises(ValueError):
            env.reset(4, substream(0, "r"))

    def test_observation_layout(self, env, ae_model):
        obs, _ = env.reset(1, substream(10, "r"))
        flat = obs.flatten()
        assert flat.shape == (2 * ae_model.latent_dim + 1 + 6 + 6 + 7,)
        assert abs(np.linalg.norm(obs.ee_quaternion) - 1.0) < 1e-9
        assert obs.fc == env.fc


class TestStepAndReward:
    def test_zero_action_reward_is_minus_phi4(self, env):
        env.reset(1, substream(11, "r"))
        res = env.step(np.zeros(6))
        assert res.reward == -env.weights.phi4
        assert res.outcome == "running"
        assert not res.done

    def test_success_terminal_reward(self, ae_model):
        env = envm.ServoEnv.from_config(RunConfig(), ae_model)
        env.reset_near_goal(substream(12, "r"), 0.0, 0.0)
        action = np.full(6, 1e-4)
        res = env.step(action)
        assert res.outcome == "success"
        assert res.done
        # errors move by at most ~1e-6 here, so the potential terms
        # contribute < 1e-3 on top of the terminal branch
        expected_terminal = 100.0 - float(np.linalg.norm(action))
        assert res.reward == pytest.approx(expected_terminal - env.weights.phi4, abs=1e-3)

    def test_max_steps_failure(self, ae_model):
        cfg = RunConfig()
        cfg.set("env.max_steps", 3)
        env = envm.ServoEnv.from_config(cfg, ae_model)
        env.reset(1, substream(13, "r"))
        outcomes = [env.step(np.zeros(6)) for _ in range(3)]
        assert [r.outcome for r in outcomes] == ["running", "running", "max-steps"]
        assert outcomes[-1].done
        assert outcomes[-1].reward == -env.weights.phi4 - 100.0

    def test_singularity_failure(self, ae_model):
        # raise the determinant threshold after reset so any motion request
        # trips the singularity guard
        env = envm.ServoEnv.from_config(RunConfig(), ae_model)
        env.reset(1, substream(14, "r"))
        env.weights = envm.RewardWeights(phi_jacobian=1e9)
        res = env.step(np.full(6, 0.1))
        assert res.outcome == "singularity"
        assert res.done
        assert res.reward == -env.weights.phi4 - 100.0  # deltas are zero: no motion

    def test_joint_limit_failure(self, ae_model):
        env = envm.ServoEnv.from_config(RunConfig(), ae_model)
        env.reset(1, substream(15, "r"))
        limits = np.stack([env.joint_state[0] - 1e-5, env.joint_state[0] + 1e-5], axis=1)
        env.chain = env.chain.with_hand_eye(env.chain.hand_eye)  # keep chain type
        import dataclasses

        env.chain = dataclasses.replace(env.chain, joint_limits=limits)
        res = env.step(np.full(6, 0.5))
        assert res.outcome == "joint-limit"
        assert res.done
        assert res.reward <= -100.0 + 5.0  # -100 plus small potential terms

    def test_divergence_failure(self, ae_model):
        # shrink the divergence bound after reset so any motion away from
        # the goal trips it
        env = envm.ServoEnv.from_config(RunConfig(), ae_model)
        env.reset(1, substream(16, "r"))
        e_trans = env.current_errors[0]
        env.weights = envm.RewardWeights(phi_trans=1e-12, d_trans=e_trans * 0.5)
        res = env.step(np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0]))
        assert res.outcome in ("diverged-trans", "diverged-rot")
        assert res.done
        assert res.reward <= -90.0

    def test_out_of_fov_failure(self, ae_model):
        env = envm.ServoEnv.from_config(RunConfig(), ae_model)
        env.reset(1, substream(17, "r"))
        res = None
        for _ in range(60):
            res = env.step(np.array([0.0, 0.0, 0.0, 1.0, 1.0, 0.0]))
            if res.done:
                break
        assert res is not None and res.done
        assert res.outcome in ("out-of-fov", "diverged-rot")
        assert res.reward <= -90.0

    def test_collision_failure(self, ae_model):
        env = envm.ServoEnv.from_config(RunConfig(), ae_model)
        env.reset(1, substream(18, "r"))
        # command straight descent in the camera frame (z forward = down-ish)
        res = None
        for _ in range(200):
            res = env.step(np.array([0.0, 0.0, 1.0, 0.0, 0.0, 0.0]))
            if res.done:
                break
        assert res is not None and res.done
        assert res.outcome in ("collision", "out-of-fov")

    def test_step_after_done_raises(self, ae_model):
        cfg = RunConfig()
        cfg.set("env.max_steps", 1)
        env = envm.ServoEnv.from_config(cfg, ae_model)
        env.reset(1, substream(19, "r"))
        env.step(np.zeros(6))
        with pytest.raises(envm.EpisodeDone):
            env.step(np.zeros(6))

    def test_episode_is_deterministic_bit_for_bit(self, ae_model):
        env = envm.ServoEnv.from_config(RunConfig(), ae_model)
        actions = [substream(20, "a", i).uniform(-0.3, 0.3, 6) for i in range(10)]

        def run():
            env.reset(1, substream(20, "r"))
            rewards = []
            for a in actions:
                res = env.step(a)
                rewards.append(res.reward)
                if res.done:
                    break
            return rewards

        assert run() == run()

    def test_reward_telescoping_over_trajectory(self, ae_model):
        env = envm.ServoEnv.from_config(RunConfig(), ae_model)
        env.reset(1, substream(21, "r"))
        e0 = env.current_errors
        rng = substream(21, "a")
        total = 0.0
        steps = 0
        while steps < 30:
            res = env.step(rng.uniform(-0.2, 0.2, 6))
            total += res.reward
            steps += 1
            if res.done:
                break
        eT = env.current_errors
        w = env.weights
        expected = (w.phi1 * (e0[0] - eT[0]) + w.phi2 * (e0[1] - eT[1])
                    + w.phi3 * (e0[2] - eT[2]) - w.phi4 * steps)
        terminal = env._log[-1]["outcome"]
        if terminal == "success":
            expected += 100.0 - np.linalg.norm(env._log[-1]["action"])
        elif terminal != "running":
            expected += -100.0
        assert total == pytest.approx(expected, abs=1e-9)


class TestComputeReward:
    def test_one_millimeter_improvement_arithmetic(self):
        w = envm.RewardWeights()
        r = envm.compute_reward((0.010, 0.0, 0.0), (0.009, 0.0, 0.0),
                                np.zeros(6), "running", w)
        assert r == pytest.approx(w.phi1 * 0.001 - w.phi4, abs=1e-12)

    def test_failure_is_minus_100_regardless_of_deltas(self):
        w = envm.RewardWeights()
        for outcome in envm.FAILURE_OUTCOMES:
            r = envm.compute_reward((0.5, 0.5, 0.5), (0.0, 0.0, 0.0),
                                    np.zeros(6), outcome, w)
            improvement = w.phi1 * 0.5 + w.phi2 * 0.5 + w.phi3 * 0.5
            assert r == improvement - w.phi4 - 100.0

    def test_success_with_zero_action_is_plus_100(self):
        w = envm.RewardWeights()
        r = envm.compute_reward((0.0, 0.0, 0.0), (0.0, 0.0, 0.0),
                                np.zeros(6), "success", w)
        assert r == 100.0 - w.phi4

    def test_success_subtracts_action_norm(self):
        w = envm.RewardWeights()
        a = np.array([0.3, -0.4, 0.0, 0.0, 0.0, 0.0])
        r = envm.compute_reward((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), a, "success", w)
        assert r == 100.0 - 0.5 - w.phi4


class TestImageError:
    def test_identical_images_zero(self):
        a = np.full((32, 32), 0.4, dtype=np.float32)
        assert envm.image_error(a, a) == 0.0

    def test_constant_difference(self):
        a = np.zeros(16, dtype=np.float32)
        b = np.full(16, 0.1, dtype=np.float32)
        assert envm.image_error(a, b) == pytest.approx(0.01, rel=1e-6)

    def test_symmetric(self):
        rng = substream(22, "i")
        a = rng.uniform(0, 1, 64).astype(np.float32)
        b = rng.uniform(0, 1, 64).astype(np.float32)
        assert envm.image_error(a, b) == envm.image_error(b, a)

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError):
            envm.image_error(np.zeros(4), np.zeros(5))


class TestCollision:
    def test_home_posture_is_clear(self, env):
        assert not envm.check_collision(env.chain, env.home_q, env.base_scene)

    def test_below_table_collides(self, env):
        # elbow-down posture driving the wrist under the plane
        q = np.array([0.0, 0.6, 0.8, 0.0, 0.0, 0.0])
        frames = kin.fk_frames(env.chain, q)
        assert min(f[2, 3] for f in frames[1:]) < 0.05  # sanity: something is low
        assert envm.check_collision(env.chain, q, env.base_scene)

    def test_exact_tangency_is_not_collision(self):
        chain = kin.ur5e_chain()
        # place the scene plane exactly link_radius below every center
        frames = kin.fk_frames(chain, np.array([0.0, -1.57, 1.57, 0.0, 0.0, 0.0]))
        zmin = min(f[2, 3] for f in frames[1:])
        radius = 0.05
        scene = Scene(table_height=zmin - radius, table_center=(5.0, 5.0),
                      cup_x=5.0, cup_y=5.0)
        cam_z = kin.Pose.from_matrix(frames[-1]).compose(chain.hand_eye).translation[2]
        if cam_z - 0.03 <= zmin - radius:  # camera sphere would dip lower
            pytest.skip("camera sphere below link spheres in this posture")
        assert not envm.check_collision(chain, np.array([0.0, -1.57, 1.57, 0.0, 0.0, 0.0]),
                                        scene, link_radius=radius)


class TestGoalConditioning:
    def test_recompute_matches_live_for_original_goal(self, ae_model):
        env = envm.ServoEnv.from_config(RunConfig(), ae_model)
        env.reset(1, substream(23, "r"))
        goal = env.goal
        prev = env.achieved_payload()
        rng = substream(23, "a")
        for _ in range(5):
            action = rng.uniform(-0.3, 0.3, 6)
            res = env.step(action)
            new = env.achieved_payload()
            r, done, outcome = env.recompute_transition(prev, new, action, goal)
            if res.outcome in ("running", "success", "diverged-trans", "diverged-rot"):
                assert r == res.reward
                assert done == res.done
                assert outcome == res.outcome
            prev = new
            if res.done:
                break

    def test_replace_goal_swaps_desired_latent(self, ae_model):
        env = envm.ServoEnv.from_config(RunConfig(), ae_model)
        obs, goal = env.reset(1, substream(24, "r"))
        flat = obs.flatten()
        env.step(np.full(6, 0.1))
        new_goal = env.goal_from_achieved(env.achieved_payload())
        swapped = env.replace_goal_in_obs(flat, new_goal)
        latent = ae_model.latent_dim
        assert np.array_equal(swapped[latent:2 * latent], new_goal.latent)
        assert np.array_equal(swapped[:latent], flat[:latent])
        assert np.array_equal(swapped[2 * latent:], flat[2 * latent:])

    def test_state_snapshot_replays_step(self, ae_model):
        env = envm.ServoEnv.from_config(RunConfig(), ae_model)
        env.reset(1, substream(25, "r"))
        env.step(np.full(6, 0.2))
        snap = env.get_state()
        action = np.array([0.1, -0.2, 0.3, 0.0, 0.1, -0.1])
        r1 = env.step(action)
        q1 = env.joint_state[0]
        env.set_state(snap)
        r2 = env.step(action)
        assert r1.reward == r2.reward
        assert np.array_equal(q1, env.joint_state[0])


def test_episode_log_is_json_lines(ae_model, tmp_path):
    env = envm.ServoEnv.from_config(RunConfig(), ae_model)
    env.reset(1, substream(26, "r"))
    for _ in range(3):
        env.step(np.zeros(6))
    env.write_episode_log(tmp_path / "ep.jsonl")
    lines = (tmp_path / "ep.jsonl").read_text().splitlines()
    assert len(lines) == 3
    row = json.loads(lines[0])
    assert set(row) == {"step", "q", "qdot", "action", "reward",
                        "e_trans", "e_rot", "e_img", "outcome"}
