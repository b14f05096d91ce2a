"""Seeded evaluation bench: success rates and error distributions.

Each trial re-seeds the environment from (seed, trial index), runs one
episode under a controller (learned policy, DVS, or a test stub), and
records the terminal outcome and final errors.  Success is the env's own
terminal success branch (translation under 2 mm and rotation under its
threshold with no failure).  Error histograms cover successful trials
only; failures are tallied by reason.

Trials are independent, so they can fan out over processes; per-trial
seeds make the report identical either way.  Reports serialize to JSON
plus plot-data CSVs (success_rates.csv, errors_trans.csv, errors_rot.csv).
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import substream


@dataclass
class HistogramSpec:
    bin_width: float
    max_value: float

    @property
    def n_bins(self) -> int:
        return int(round(self.max_value / self.bin_width))

    def edges(self) -> list[float]:
        return [i * self.bin_width for i in range(self.n_bins + 1)]

    def count(self, values: list[float]) -> list[int]:
        counts = [0] * (self.n_bins + 1)   # last bin: overflow
        for v in values:
            i = int(v / self.bin_width)
            counts[min(i, self.n_bins)] += 1
        return counts


@dataclass
class EvalReport:
    method: str
    setting: int
    start_mode: str
    seed: int
    trials: int
    successes: int
    failure_counts: dict[str, int]
    mean_episode_length: float
    trans_hist: list[int]
    rot_hist: list[int]
    trans_spec: HistogramSpec
    rot_spec: HistogramSpec
    per_trial: list[dict] = field(default_factory=list)

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "setting": self.setting,
            "start_mode": self.start_mode,
            "seed": self.seed,
            "trials": self.trials,
            "successes": self.successes,
            "success_rate": self.success_rate,
            "failure_counts": self.failure_counts,
            "mean_episode_length": self.mean_episode_length,
            "trans_hist": self.trans_hist,
            "rot_hist": self.rot_hist,
            "trans_bins": {"width": self.trans_spec.bin_width,
                           "max": self.trans_spec.max_value},
            "rot_bins": {"width": self.rot_spec.bin_width,
                         "max": self.rot_spec.max_value},
            "per_trial": self.per_trial,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            method=d["method"], setting=d["setting"], start_mode=d["start_mode"],
            seed=d["seed"], trials=d["trials"], successes=d["successes"],
            failure_counts=dict(d["failure_counts"]),
            mean_episode_length=d["mean_episode_length"],
            trans_hist=list(d["trans_hist"]), rot_hist=list(d["rot_hist"]),
            trans_spec=HistogramSpec(d["trans_bins"]["width"], d["trans_bins"]["max"]),
            rot_spec=HistogramSpec(d["rot_bins"]["width"], d["rot_bins"]["max"]),
            per_trial=[dict(r) for r in d["per_trial"]],
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial success rate."""
    if trials == 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2.0 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _run_trial(env, controller, setting: int, start_mode: str, seed: int,
               trial: int, near_goal: tuple[float, float]) -> dict:
    rng = substream(seed, "eval", trial)
    if start_mode == "near-goal":
        env.reset_near_goal(rng, near_goal[0], near_goal[1])
    elif start_mode == "hemisphere":
        env.reset(3, rng)
    else:
        env.reset(setting, rng)
    steps = 0
    outcome = "running"
    while not env.done:
        action = controller.act(env)
        res = env.step(action)
        outcome = res.outcome
        steps += 1
    e_trans, e_rot, _ = env.current_errors
    return {"trial": trial, "outcome": outcome, "steps": steps,
            "e_trans": e_trans, "e_rot": e_rot}


def evaluate(
    controller,
    env,
    setting: int,
    n_trials: int,
    seed: int,
    start_mode: str = "default",
    method: str = "policy",
    trans_spec: HistogramSpec | None = None,
    rot_spec: HistogramSpec | None = None,
    near_goal: tuple[float, float] = (0.005, 0.0349065850398866),
    env_factory=None,
) -> EvalReport:
    """Run n_trials seeded episodes; success = env terminal success.

    With SERVO_RL_THREADS > 1 and an env_factory, trials fan out over a
    process pool; per-trial seeding keeps the report identical to the
    serial run.
    """
    trans_spec = trans_spec or HistogramSpec(0.0005, 0.005)
    rot_spec = rot_spec or HistogramSpec(0.01, 0.2)

    workers = int(os.environ.get("SERVO_RL_THREADS", "1"))
    rows: list[dict]
    if workers > 1 and env_factory is not None and n_trials > 1:
        from concurrent.futures import ProcessPoolExecutor

        chunks = [list(range(i, n_trials, workers)) for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_trial_chunk, env_factory, controller, setting,
                            start_mode, seed, chunk, near_goal)
                for chunk in chunks if chunk
            ]
            rows = [row for fut in futures for row in fut.result()]
        rows.sort(key=lambda r: r["trial"])
    else:
        rows = [_run_trial(env, controller, setting, start_mode, seed, t, near_goal)
                for t in range(n_trials)]

    successes = [r for r in rows if r["outcome"] == "success"]
    failures: dict[str, int] = {}
    for r in rows:
        if r["outcome"] != "success":
            failures[r["outcome"]] = failures.get(r["outcome"], 0) + 1
    return EvalReport(
        method=method,
        setting=setting,
        start_mode=start_mode,
        seed=seed,
        trials=n_trials,
        successes=len(successes),
        failure_counts=failures,
        mean_episode_length=float(np.mean([r["steps"] for r in rows])) if rows else 0.0,
        trans_hist=trans_spec.count([r["e_trans"] for r in successes]),
        rot_hist=rot_spec.count([r["e_rot"] for r in successes]),
        trans_spec=trans_spec,
        rot_spec=rot_spec,
        per_trial=rows,
    )


def _trial_chunk(env_factory, controller, setting, start_mode, seed, trials, near_goal):
    env = env_factory()
    return [_run_trial(env, controller, setting, start_mode, seed, t, near_goal)
            for t in trials]


def compare(report_a: EvalReport, report_b: EvalReport) -> dict:
    """Side-by-side summary with Wilson 95% intervals on each rate."""
    if report_a.setting != report_b.setting or report_a.trials != report_b.trials:
        raise ValueError("reports come from mismatched protocols")
    lo_a, hi_a = wilson_interval(report_a.successes, report_a.trials)
    lo_b, hi_b = wilson_interval(report_b.successes, report_b.trials)
    return {
        "setting": report_a.setting,
        "trials": report_a.trials,
        "methods": [report_a.method, report_b.method],
        "success_rates": [report_a.success_rate, report_b.success_rate],
        "wilson": [[lo_a, hi_a], [lo_b, hi_b]],
        "rate_difference": report_a.success_rate - report_b.success_rate,
        "ci_separated": lo_a > hi_b or lo_b > hi_a,
    }


def export_comparison(reports: list[EvalReport], out_dir: str | Path) -> None:
    """Plot-data CSVs: success rates plus per-bin error histograms."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "success_rates.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["setting", "method", "start_mode", "trials", "successes",
                         "success_rate", "wilson_lo", "wilson_hi"])
        for rep in reports:
            lo, hi = wilson_interval(rep.successes, rep.trials)
            writer.writerow([rep.setting, rep.method, rep.start_mode, rep.trials,
                             rep.successes, f"{rep.success_rate:.17g}",
                             f"{lo:.17g}", f"{hi:.17g}"])
    for name, attr, spec_attr in (("errors_trans.csv", "trans_hist", "trans_spec"),
                                  ("errors_rot.csv", "rot_hist", "rot_spec")):
        with open(out_dir / name, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["setting", "method", "bin_lo", "bin_hi", "count"])
            for rep in reports:
                spec: HistogramSpec = getattr(rep, spec_attr)
                edges = spec.edges()
                counts = getattr(rep, attr)
                for i, count in enumerate(counts):
                    lo = edges[i] if i < len(edges) else spec.max_value
                    hi = edges[i + 1] if i + 1 < len(edges) else float("inf")
                    writer.writerow([rep.setting, rep.method, f"{lo:.17g}",
                                     f"{hi:.17g}", count])


# ----------------------------------------------------------- controllers

class PolicyController:
    """Deterministic actor rollout."""

    def __init__(self, agent):
        self.agent = agent

    def act(self, env) -> np.ndarray:
        from .training import env_observation_vector

        return self.agent.select_action(env_observation_vector(env), explore=False)


class DvsController:
    """Classical photometric servoing as a drop-in controller."""

    def __init__(self, cfg):
        self.cfg = cfg

    def act(self, env) -> np.ndarray:
        from .dvs import dvs_action

        return dvs_action(env, self.cfg)


class ZeroController:
    """Emits the zero action; useful as a harness self-test."""

    def act(self, env) -> np.ndarray:
        return np.zeros(env.act_dim)


class ReplayController:
    """Replays a recorded action sequence (harness self-test)."""

    def __init__(self, actions: list[np.ndarray]):
        self.actions = [np.asarray(a, dtype=np.float64) for a in actions]
        self._i = 0

    def act(self, env) -> np.ndarray:
        a = self.actions[min(self._i, len(self.actions) - 1)]
        self._i += 1
        return a
