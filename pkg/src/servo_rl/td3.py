"""TD3 agent, replay buffer, and hindsight relabeling.

Six networks as usual: two critics, one actor, and a target copy of each.
Critics regress onto r + eta * min(targetQ1, targetQ2) evaluated at the
target actor's smoothed action; the actor is updated every `policy_delay`
critic updates by ascending critic 1, after which all three targets take a
Polyak step.

Transitions carry the achieved state (camera pose, image, latent) of both
endpoints plus the episode goal, which is what lets hindsight relabeling
recompute rewards exactly and lets tests replay any stored step.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn


@dataclass
class Transition:
    """One goal-conditioned replay record."""

    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool
    outcome: str
    achieved_prev: dict[str, np.ndarray]
    achieved: dict[str, np.ndarray]
    goal: object


class ReplayBuffer:
    """Uniform-sampling FIFO ring buffer with a seeded sampler.

    Core fields live in preallocated numpy arrays for fast batch sampling;
    the achieved/goal extras stay on the Transition objects, kept in a
    parallel ring so eviction frees them too.
    """

    def __init__(self, capacity: int, rng: np.random.Generator):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.rng = rng
        self._obs: np.ndarray | None = None
        self._actions: np.ndarray | None = None
        self._rewards: np.ndarray | None = None
        self._next_obs: np.ndarray | None = None
        self._dones: np.ndarray | None = None
        self._records: list[Transition | None] = [None] * self.capacity
        self._size = 0
        self._head = 0

    def __len__(self) -> int:
        return self._size

    def _allocate(self, tr: Transition) -> None:
        obs_dim = tr.obs.shape[0]
        act_dim = tr.action.shape[0]
        self._obs = np.empty((self.capacity, obs_dim))
        self._actions = np.empty((self.capacity, act_dim))
        self._rewards = np.empty(self.capacity)
        self._next_obs = np.empty((self.capacity, obs_dim))
        self._dones = np.zeros(self.capacity, dtype=bool)

    def add(self, tr: Transition) -> None:
        if self._obs is None:
            self._allocate(tr)
        i = self._head
        self._obs[i] = tr.obs
        self._actions[i] = tr.action
        self._rewards[i] = tr.reward
        self._next_obs[i] = tr.next_obs
        self._dones[i] = tr.done
        self._records[i] = tr
        self._head = (self._head + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def extend(self, transitions) -> None:
        for tr in transitions:
            self.add(tr)

    def sample(self, batch_size: int) -> dict[str, np.ndarray]:
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = self.rng.integers(0, self._size, size=batch_size)
        return {
            "obs": self._obs[idx],
            "action": self._actions[idx],
            "reward": self._rewards[idx],
            "next_obs": self._next_obs[idx],
            "done": self._dones[idx],
            "index": idx,
        }

    def record(self, index: int) -> Transition:
        rec = self._records[index]
        if rec is None:
            raise IndexError(f"no record at {index}")
        return rec


@dataclass
class Td3Settings:
    eta: float = 0.99
    tau: float = 0.005
    policy_delay: int = 2
    explore_sigma: float = 0.1
    target_sigma: float = 0.2
    target_clip: float = 0.5
    batch: int = 256
    hidden: int = 256
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4

    def __post_init__(self) -> None:
        if not 0.0 < self.eta < 1.0:
            raise ValueError("discount eta must be in (0, 1)")
        if self.policy_delay < 1:
            raise ValueError("policy_delay must be >= 1")


class Td3Agent:
    """Twin critics, delayed actor, target networks."""

    def __init__(self, obs_dim: int, act_dim: int, settings: Td3Settings,
                 rng: np.random.Generator):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.s = settings
        h = settings.hidden
        self.actor = nn.make_mlp([obs_dim, h, h, act_dim], rng, "relu", "tanh",
                                 final_scale=0.01)
        self.critic1 = nn.make_mlp([obs_dim + act_dim, h, h, 1], rng, "relu", "identity")
        self.critic2 = nn.make_mlp([obs_dim + act_dim, h, h, 1], rng, "relu", "identity")
        self.target_actor = self.actor.copy()
        self.target_critic1 = self.critic1.copy()
        self.target_critic2 = self.critic2.copy()
        self.opt_actor = nn.adam_init(self.actor, settings.actor_lr)
        self.opt_critic1 = nn.adam_init(self.critic1, settings.critic_lr)
        self.opt_critic2 = nn.adam_init(self.critic2, settings.critic_lr)
        self.update_count = 0

    # -------------------------------------------------------------- acting
    def select_action(self, obs: np.ndarray, explore: bool,
                      rng: np.random.Generator | None = None) -> np.ndarray:
        a = nn.forward(self.actor, np.asarray(obs, dtype=np.float64).reshape(1, -1))[0]
        if explore:
            if rng is None:
                raise ValueError("explore=True requires an rng")
            a = a + rng.normal(0.0, self.s.explore_sigma, size=a.shape)
        return np.clip(a, -1.0, 1.0)

    # ------------------------------------------------------------ learning
    def td_target(self, batch: dict[str, np.ndarray],
                  rng: np.random.Generator) -> np.ndarray:
        """r + (1-done) * eta * min(Q1', Q2') at the smoothed target action."""
        s2 = batch["next_obs"]
        a2 = nn.forward(self.target_actor, s2)
        noise = np.clip(rng.normal(0.0, self.s.target_sigma, size=a2.shape),
                        -self.s.target_clip, self.s.target_clip)
        a2 = np.clip(a2 + noise, -1.0, 1.0)
        sa2 = np.concatenate([s2, a2], axis=1)
        q1 = nn.forward(self.target_critic1, sa2)[:, 0]
        q2 = nn.forward(self.target_critic2, sa2)[:, 0]
        q_min = np.minimum(q1, q2)
        return batch["reward"] + (1.0 - batch["done"].astype(np.float64)) * self.s.eta * q_min

    def update_critics(self, batch: dict[str, np.ndarray], y: np.ndarray) -> tuple[float, float]:
        sa = np.concatenate([batch["obs"], batch["action"]], axis=1)
        losses = []
        for critic, opt in ((self.critic1, self.opt_critic1),
                            (self.critic2, self.opt_critic2)):
            q = nn.forward(critic, sa)[:, 0]
            err = q - y
            loss = float(np.mean(err * err))
            if not np.isfinite(loss):
                raise nn.NonFiniteError(f"critic loss became non-finite ({loss})")
            grads, _ = nn.backward(critic, (2.0 * err / err.size)[:, None])
            nn.adam_step(critic, grads, opt)
            losses.append(loss)
        self.update_count += 1
        return losses[0], losses[1]

    def update_actor_and_targets(self, batch: dict[str, np.ndarray]) -> float | None:
        """Delayed actor ascent on critic 1 plus target soft updates.

        Runs only when update_count is a multiple of policy_delay; returns
        the actor loss (-mean Q1) when it ran, None otherwise.
        """
        if self.update_count % self.s.policy_delay != 0:
            return None
        s = batch["obs"]
        a = nn.forward(self.actor, s)
        sa = np.concatenate([s, a], axis=1)
        q = nn.forward(self.critic1, sa)
        actor_loss = -float(np.mean(q))
        # d(-mean q)/dq, chained through the critic to its action inputs,
        # then through the actor. Critic parameters are left untouched.
        _, grad_sa = nn.backward(self.critic1, np.full_like(q, -1.0 / q.shape[0]))
        grad_a = grad_sa[:, self.obs_dim:]
        actor_grads, _ = nn.backward(self.actor, grad_a)
        nn.adam_step(self.actor, actor_grads, self.opt_actor)
        nn.soft_update(self.target_actor, self.actor, self.s.tau)
        nn.soft_update(self.target_critic1, self.critic1, self.s.tau)
        nn.soft_update(self.target_critic2, self.critic2, self.s.tau)
        return actor_loss

    def train_step(self, buffer: ReplayBuffer, rng: np.random.Generator) -> dict:
        batch = buffer.sample(self.s.batch)
        y = self.td_target(batch, rng)
        c1, c2 = self.update_critics(batch, y)
        actor_loss = self.update_actor_and_targets(batch)
        return {"critic1": c1, "critic2": c2, "actor": actor_loss}

    # --------------------------------------------------------- persistence
    def nets(self) -> dict[str, nn.MlpNet]:
        return {
            "actor": self.actor, "critic1": self.critic1, "critic2": self.critic2,
            "target_actor": self.target_actor, "target_critic1": self.target_critic1,
            "target_critic2": self.target_critic2,
        }

    def save(self, base: str | Path, scalars: dict | None = None) -> None:
        extra = {"obs_dim": self.obs_dim, "act_dim": self.act_dim,
                 "update_count": self.update_count,
                 "eta": self.s.eta, "tau": self.s.tau,
                 "policy_delay": self.s.policy_delay,
                 "explore_sigma": self.s.explore_sigma,
                 "target_sigma": self.s.target_sigma,
                 "target_clip": self.s.target_clip,
                 "batch": self.s.batch, "hidden": self.s.hidden,
                 "actor_lr": self.s.actor_lr, "critic_lr": self.s.critic_lr}
        extra.update(scalars or {})
        nn.save_checkpoint(base, self.nets(),
                           {"actor": self.opt_actor, "critic1": self.opt_critic1,
                            "critic2": self.opt_critic2},
                           scalars=extra)

    @classmethod
    def load(cls, base: str | Path) -> tuple["Td3Agent", dict]:
        nets, optimizers, scalars = nn.load_checkpoint(base)
        settings = Td3Settings(
            eta=scalars["eta"], tau=scalars["tau"],
            policy_delay=int(scalars["policy_delay"]),
            explore_sigma=scalars["explore_sigma"],
            target_sigma=scalars["target_sigma"], target_clip=scalars["target_clip"],
            batch=int(scalars["batch"]), hidden=int(scalars["hidden"]),
            actor_lr=scalars["actor_lr"], critic_lr=scalars["critic_lr"])
        agent = cls.__new__(cls)
        agent.obs_dim = int(scalars["obs_dim"])
        agent.act_dim = int(scalars["act_dim"])
        agent.s = settings
        agent.actor = nets["actor"]
        agent.critic1 = nets["critic1"]
        agent.critic2 = nets["critic2"]
        agent.target_actor = nets["target_actor"]
        agent.target_critic1 = nets["target_critic1"]
        agent.target_critic2 = nets["target_critic2"]
        agent.opt_actor = optimizers["actor"]
        agent.opt_critic1 = optimizers["critic1"]
        agent.opt_critic2 = optimizers["critic2"]
        agent.update_count = int(scalars["update_count"])
        return agent, scalars


@dataclass(frozen=True)
class TrainVariant:
    """Which training strategies are switched on."""

    use_exploration: bool
    use_her: bool
    use_demonstration: bool


VARIANTS: dict[str, TrainVariant] = {
    "pure-td3": TrainVariant(False, False, False),
    "td3-explore": TrainVariant(True, False, False),
    "td3-her-explore": TrainVariant(True, True, False),
    "full": TrainVariant(True, True, True),
}


def her_relabel(env, episode: list[Transition], k: int,
                rng: np.random.Generator) -> list[Transition]:
    """Hindsight relabels with the "future" strategy.

    For each transition, k achieved states are drawn from the remainder of
    the episode (the transition's own endpoint included) and substituted as
    goals; rewards, done flags, and the desired-latent slot of both
    observations are recomputed through the owning env.
    """
    if k <= 0 or not episode:
        return []
    out: list[Transition] = []
    n = len(episode)
    for i, tr in enumerate(episode):
        futures = rng.integers(i, n, size=k)
        for j in futures:
            goal = env.goal_from_achieved(episode[j].achieved)
            reward, done, outcome = env.recompute_transition(
                tr.achieved_prev, tr.achieved, tr.action, goal)
            out.append(Transition(
                obs=env.replace_goal_in_obs(tr.obs, goal),
                action=tr.action.copy(),
                reward=reward,
                next_obs=env.replace_goal_in_obs(tr.next_obs, goal),
                done=done,
                outcome=outcome,
                achieved_prev=tr.achieved_prev,
                achieved=tr.achieved,
                goal=goal,
            ))
    return out
