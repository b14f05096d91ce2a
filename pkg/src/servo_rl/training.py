"""Episode-driven TD3 training with the optional strategies.

The loop is environment-agnostic: anything exposing the goal-conditioned
env protocol (reset/step/achieved_payload/goal_from_achieved/
recompute_transition/replace_goal_in_obs) can be trained, which is how the
point-reach diagnostics share this code with the full servoing task.

Strategies, combinable per TrainVariant:
  * exploration -- a prefill phase of uniformly random actions, stored
    (and hindsight-relabeled, when HER is on) before any gradient step;
  * HER -- every finished episode is relabeled with future achieved
    states as substitute goals;
  * demonstrations -- with some probability per episode, a provider rolls
    out near-goal expert episodes whose transitions join the same buffer.

Per-episode progress goes to curve.csv; optional periodic deterministic
evaluations go to eval_curve.csv; checkpoints are written every
`checkpoint_every` episodes and at the end.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig, substream
from .td3 import ReplayBuffer, Td3Agent, Td3Settings, TrainVariant, Transition, her_relabel

CURVE_COLUMNS = ["episode", "steps", "return", "success", "e_trans_final",
                 "e_rot_final", "outcome", "wall_seconds"]
EVAL_COLUMNS = ["total_steps", "episodes", "success_rate", "mean_return"]


@dataclass
class TrainResult:
    agent: Td3Agent
    curve: list[dict]
    eval_curve: list[dict]
    total_steps: int
    checkpoint_base: Path | None


def rollout_episode(env, act_fn, collect: bool = True,
                    max_steps: int | None = None) -> tuple[list[Transition], float, str]:
    """Run one episode from the env's current (just reset) state.

    act_fn(obs_vec) -> action.  Returns (transitions, return, outcome).
    """
    transitions: list[Transition] = []
    total = 0.0
    outcome = "running"
    obs_vec = None
    steps = 0
    while not env.done:
        if obs_vec is None:
            obs_vec = env_observation_vector(env)
        prev_payload = env.achieved_payload()
        action = act_fn(obs_vec)
        res = env.step(action)
        next_vec = res.observation.flatten()
        if collect:
            transitions.append(Transition(
                obs=obs_vec, action=np.asarray(action, dtype=np.float64).copy(),
                reward=res.reward, next_obs=next_vec, done=res.done,
                outcome=res.outcome, achieved_prev=prev_payload,
                achieved=env.achieved_payload(), goal=env.goal))
        total += res.reward
        outcome = res.outcome
        obs_vec = next_vec
        steps += 1
        if max_steps is not None and steps >= max_steps:
            break
    return transitions, total, outcome


def env_observation_vector(env) -> np.ndarray:
    """Flattened observation of the env's current state."""
    return env.observe().flatten()


def evaluate_policy(env, agent: Td3Agent, setting: int, episodes: int,
                    rng_factory) -> tuple[float, float]:
    """Deterministic-policy success rate and mean return over fresh episodes."""
    successes = 0
    returns = []
    for i in range(episodes):
        env.reset(setting, rng_factory(i))
        _, ep_return, outcome = rollout_episode(
            env, lambda o: agent.select_action(o, explore=False), collect=False)
        successes += outcome == "success"
        returns.append(ep_return)
    return successes / max(episodes, 1), float(np.mean(returns)) if returns else 0.0


def train_policy(
    env,
    agent: Td3Agent,
    variant: TrainVariant,
    cfg: RunConfig,
    setting: int = 1,
    episodes: int | None = None,
    out_dir: str | Path | None = None,
    demo_provider=None,
    eval_env=None,
    start_episode: int = 0,
    max_total_steps: int | None = None,
    probe=None,
) -> TrainResult:
    """Run the episode loop for `episodes` episodes.

    demo_provider(env, rng) -> list[list[Transition]] supplies expert
    episodes when the variant uses demonstrations.  `probe`, if given, is
    called as probe(event, **info) at interesting moments (used by tests).
    `max_total_steps` additionally caps the summed environment steps of
    the training episodes (exploration not counted).
    """
    seed = cfg.seed
    episodes = episodes if episodes is not None else cfg.get_int("train.episodes")
    explore_steps = cfg.get_int("td3.explore_steps")
    warmup = cfg.get_int("td3.warmup_steps")
    updates_per_step = cfg.get_int("td3.updates_per_step")
    her_k = cfg.get_int("her.k")
    demo_prob = cfg.get_float("demo.prob")
    eval_every = cfg.get_int("train.eval_every")
    eval_episodes = cfg.get_int("train.eval_episodes")
    checkpoint_every = cfg.get_int("train.checkpoint_every")

    env_rng = substream(seed, "env")
    agent_rng = substream(seed, "agent")
    target_rng = substream(seed, "td-target")
    her_rng = substream(seed, "her")
    demo_rng = substream(seed, "demo")
    explore_rng = substream(seed, "explore")
    buffer = ReplayBuffer(cfg.get_int("td3.buffer_capacity"), substream(seed, "buffer"))

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_base = out_dir / "policy" if out_dir is not None else None

    total_steps = 0
    gradient_steps = 0
    random_stored = 0

    def store_episode(transitions: list[Transition]) -> None:
        buffer.extend(transitions)
        if variant.use_her and transitions:
            buffer.extend(her_relabel(env, transitions, her_k, her_rng))

    # Exploration prefill: exactly `explore_steps` random-action transitions
    # enter the buffer before the first gradient step.
    if variant.use_exploration:
        while random_stored < explore_steps:
            env.reset(setting, env_rng)
            budget = explore_steps - random_stored
            transitions, _, _ = rollout_episode(
                env, lambda _o: explore_rng.uniform(-1.0, 1.0, env.act_dim),
                max_steps=budget)
            store_episode(transitions)
            random_stored += len(transitions)
        if probe is not None:
            probe("exploration-done", random_stored=random_stored, buffer_size=len(buffer))

    curve: list[dict] = []
    eval_curve: list[dict] = []
    last_eval = 0
    t0 = time.monotonic()

    for episode in range(start_episode, start_episode + episodes):
        if max_total_steps is not None and total_steps >= max_total_steps:
            break
        if variant.use_demonstration and demo_provider is not None \
                and demo_rng.uniform() < demo_prob:
            for demo in demo_provider(env, demo_rng):
                buffer.extend(demo)

        env.reset(setting, env_rng)
        ep_transitions: list[Transition] = []
        ep_return = 0.0
        obs_vec = env_observation_vector(env)
        while not env.done:
            prev_payload = env.achieved_payload()
            action = agent.select_action(obs_vec, explore=True, rng=agent_rng)
            res = env.step(action)
            next_vec = res.observation.flatten()
            ep_transitions.append(Transition(
                obs=obs_vec, action=action.copy(), reward=res.reward,
                next_obs=next_vec, done=res.done, outcome=res.outcome,
                achieved_prev=prev_payload, achieved=env.achieved_payload(),
                goal=env.goal))
            buffer.add(ep_transitions[-1])
            ep_return += res.reward
            obs_vec = next_vec
            total_steps += 1
            if len(buffer) >= max(agent.s.batch, warmup):
                if gradient_steps == 0 and probe is not None:
                    probe("first-gradient-step", buffer_size=len(buffer),
                          random_stored=random_stored)
                for _ in range(updates_per_step):
                    agent.train_step(buffer, target_rng)
                    gradient_steps += 1
        if variant.use_her and ep_transitions:
            buffer.extend(her_relabel(env, ep_transitions, her_k, her_rng))

        final = ep_transitions[-1] if ep_transitions else None
        e_trans, e_rot, _ = env.current_errors
        curve.append({
            "episode": episode,
            "steps": len(ep_transitions),
            "return": ep_return,
            "success": int(final is not None and final.outcome == "success"),
            "e_trans_final": e_trans,
            "e_rot_final": e_rot,
            "outcome": final.outcome if final is not None else "empty",
            "wall_seconds": time.monotonic() - t0,
        })

        if eval_every > 0 and eval_env is not None and total_steps - last_eval >= eval_every:
            last_eval = total_steps
            rate, mean_ret = evaluate_policy(
                eval_env, agent, setting, eval_episodes,
                lambda i: substream(seed, "train-eval", total_steps, i))
            eval_curve.append({"total_steps": total_steps, "episodes": episode + 1,
                               "success_rate": rate, "mean_return": mean_ret})
        if checkpoint_base is not None and checkpoint_every > 0 \
                and (episode + 1) % checkpoint_every == 0:
            agent.save(checkpoint_base, scalars={"episode": episode + 1})
            write_curve_csv(curve, out_dir / "curve.csv")
            write_eval_csv(eval_curve, out_dir / "eval_curve.csv")

    if out_dir is not None:
        agent.save(checkpoint_base, scalars={"episode": start_episode + episodes})
        write_curve_csv(curve, out_dir / "curve.csv")
        write_eval_csv(eval_curve, out_dir / "eval_curve.csv")
    return TrainResult(agent, curve, eval_curve, total_steps, checkpoint_base)


def write_curve_csv(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for row in rows:
            writer.writerow([
                row["episode"], row["steps"], f"{row['return']:.17g}", row["success"],
                f"{row['e_trans_final']:.17g}", f"{row['e_rot_final']:.17g}",
                row["outcome"], f"{row['wall_seconds']:.3f}",
            ])


def write_eval_csv(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVAL_COLUMNS)
        for row in rows:
            writer.writerow([row["total_steps"], row["episodes"],
                             f"{row['success_rate']:.17g}", f"{row['mean_return']:.17g}"])
