"""Command-line pipeline driver.

Subcommands cover the whole workflow: render an autoencoder dataset
(gen-scenes), train the autoencoder (train-ae), train a policy variant
(train-policy, servo or toy environment), evaluate a checkpoint or the
DVS baseline (eval), run the paired policy-vs-DVS comparison
(compare-dvs), and aggregate run artifacts into plot-data CSVs
(export-plots).

Every command echoes its fully-resolved configuration into the output
directory, and all randomness flows from the single seed, so re-running a
command from its echoed config reproduces its outputs (modulo wall-clock
columns).

Exit codes: 0 success, 2 bad configuration or arguments, 3 missing input
artifact, 4 numerical abort.
"""
from __future__ import annotations

import argparse
import csv
import json
import shutil
import sys
from pathlib import Path

import numpy as np

from . import autoencoder as ae_mod
from . import dvs as dvs_mod
from . import evalbench
from .config import ConfigError, RunConfig
from .env import ResetError, ServoEnv
from .scene import CameraModel, Scene, generate_autoencoder_dataset
from .td3 import Td3Agent, Td3Settings, VARIANTS
from .toy import PointReachEnv, proportional_controller_action
from .training import train_policy, write_curve_csv, write_eval_csv
from . import nn
from .config import substream

EXIT_OK = 0
EXIT_BAD_CONFIG = 2
EXIT_MISSING_ARTIFACT = 3
EXIT_NUMERICAL = 4


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--seed", type=int, help="shorthand for --set seed=N")


def _load_config(args) -> RunConfig:
    overrides = list(args.overrides)
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    return RunConfig.load(args.config, overrides)


def _echo_config(cfg: RunConfig, out_dir: Path) -> None:
    cfg.write(out_dir / "config.txt")


def _scene_from_config(cfg: RunConfig) -> Scene:
    return Scene(
        table_height=cfg.get_float("scene.table_height"),
        table_center=(cfg.get_float("scene.table_cx"), cfg.get_float("scene.table_cy")),
        table_half_extent=cfg.get_float("scene.table_half_extent"),
        cup_radius=cfg.get_float("scene.cup_radius"),
        cup_height=cfg.get_float("scene.cup_height"),
        cup_x=cfg.get_float("scene.cup_x"),
        cup_y=cfg.get_float("scene.cup_y"),
        cup_yaw=cfg.get_float("scene.cup_yaw"),
    )


def _camera_from_config(cfg: RunConfig) -> CameraModel:
    return CameraModel.from_fov(
        cfg.get_int("camera.width"), cfg.get_int("camera.height"),
        cfg.get_float("camera.fov_deg"), cfg.get_float("camera.near"),
        cfg.get_float("camera.far"), cfg.get_int("camera.supersample"))


def _dvs_config(cfg: RunConfig) -> dvs_mod.DvsConfig:
    return dvs_mod.DvsConfig(
        gain=cfg.get_float("dvs.gain"), mu=cfg.get_float("dvs.mu"),
        max_steps=cfg.get_int("dvs.max_steps"),
        converge_trans=cfg.get_float("dvs.converge_trans"),
        valid_limit=cfg.get_float("dvs.valid_limit"))


def _load_ae_for(args, cfg: RunConfig) -> ae_mod.AeModel:
    """Autoencoder from --ae, or from the policy run dir, else fail."""
    candidates = []
    if getattr(args, "ae", None):
        candidates.append(Path(args.ae))
    if getattr(args, "policy", None):
        candidates.append(Path(args.policy) / "autoencoder")
    for base in candidates:
        base = base if base.suffix == "" else base.with_suffix("")
        if base.with_suffix(".json").exists():
            return ae_mod.load_ae(base)
        if (base / "autoencoder.json").exists():
            return ae_mod.load_ae(base / "autoencoder")
    raise FileNotFoundError(
        "no autoencoder checkpoint found; pass --ae RUNDIR (from train-ae) "
        "or --policy RUNDIR (from train-policy)")


# ----------------------------------------------------------- subcommands

def cmd_gen_scenes(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out)
    manifest = generate_autoencoder_dataset(
        args.cams, args.objs, out, cfg.seed,
        scene=_scene_from_config(cfg), cam=_camera_from_config(cfg),
        radius_range=(cfg.get_float("scene.cap_radius_min"),
                      cfg.get_float("scene.cap_radius_max")))
    print(f"wrote {manifest['samples']} samples to {out}")
    return EXIT_OK


def cmd_train_ae(args) -> int:
    cfg = _load_config(args)
    dataset = Path(args.dataset)
    if not (dataset / "manifest.json").exists():
        raise FileNotFoundError(f"dataset manifest not found under {dataset}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out)
    model, rows = ae_mod.train_autoencoder(dataset, cfg, out)
    print(f"trained autoencoder for {len(rows)} epochs; "
          f"final val mse {rows[-1]['val_mse']:.6f}; checkpoint in {out}")
    return EXIT_OK


def _make_servo_env(cfg: RunConfig, model: ae_mod.AeModel) -> ServoEnv:
    return ServoEnv.from_config(cfg, model)


def _make_toy_env(cfg: RunConfig) -> PointReachEnv:
    return PointReachEnv(
        dim=cfg.get_int("toy.dim"), dt=cfg.get_float("toy.dt"),
        a_max=cfg.get_float("toy.a_max"),
        success_radius=cfg.get_float("toy.success_radius"),
        max_steps=cfg.get_int("toy.max_steps"),
        phi1=cfg.get_float("toy.phi1"), phi4=cfg.get_float("toy.phi4"),
        max_steps_is_failure=cfg.get_bool("toy.max_steps_failure"))


def _toy_demo_provider(episodes: int = 1):
    def provide(env, rng):
        from .training import rollout_episode

        demos = []
        for _ in range(episodes):
            env.reset(1, rng)
            transitions, _, outcome = rollout_episode(
                env, lambda _o: proportional_controller_action(env))
            if outcome == "success":
                demos.append(transitions)
        return demos
    return provide


def _agent_settings(cfg: RunConfig, toy: bool) -> Td3Settings:
    return Td3Settings(
        eta=cfg.get_float("td3.eta"), tau=cfg.get_float("td3.tau"),
        policy_delay=cfg.get_int("td3.policy_delay"),
        explore_sigma=cfg.get_float("td3.explore_sigma"),
        target_sigma=cfg.get_float("td3.target_sigma"),
        target_clip=cfg.get_float("td3.target_clip"),
        batch=cfg.get_int("toy.batch") if toy else cfg.get_int("td3.batch"),
        hidden=cfg.get_int("toy.hidden") if toy else cfg.get_int("td3.hidden"),
        actor_lr=cfg.get_float("td3.actor_lr"),
        critic_lr=cfg.get_float("td3.critic_lr"))


def cmd_train_policy(args) -> int:
    cfg = _load_config(args)
    if args.variant not in VARIANTS:
        raise ConfigError(f"unknown variant {args.variant!r}; "
                          f"choose from {', '.join(VARIANTS)}")
    variant = VARIANTS[args.variant]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out)

    toy = args.env == "toy"
    if toy:
        env = _make_toy_env(cfg)
        eval_env = _make_toy_env(cfg)
        demo_provider = _toy_demo_provider()
        cfg_local = cfg
        # Toy runs use their own smaller exploration/warmup budgets.
        cfg_local.set("td3.explore_steps", cfg.get_int("toy.explore_steps"))
        cfg_local.set("td3.warmup_steps", cfg.get_int("toy.warmup_steps"))
        cfg_local.set("demo.prob", cfg.get_float("toy.demo_prob"))
    else:
        model = _load_ae_for(args, cfg)
        ae_mod.save_ae(model, out / "autoencoder")   # make the run self-contained
        env = _make_servo_env(cfg, model)
        eval_env = _make_servo_env(cfg, model)
        demo_provider = dvs_mod.demo_provider(
            _dvs_config(cfg), episodes=1,
            trans_radius=cfg.get_float("demo.radius"),
            rot_radius=cfg.get_float("demo.rot_radius"))

    start_episode = 0
    episodes = args.episodes if args.episodes is not None else cfg.get_int("train.episodes")
    if args.resume and (out / "policy.json").exists():
        agent, scalars = Td3Agent.load(out / "policy")
        start_episode = int(scalars.get("episode", 0))
        episodes = max(0, episodes - start_episode)
        print(f"resuming from episode {start_episode}")
    else:
        agent = Td3Agent(env.obs_dim, env.act_dim, _agent_settings(cfg, toy),
                         substream(cfg.seed, "agent-init"))

    result = train_policy(
        env, agent, variant, cfg, setting=args.setting, episodes=episodes,
        out_dir=out, demo_provider=demo_provider if variant.use_demonstration else None,
        eval_env=eval_env, start_episode=start_episode)
    n_succ = sum(r["success"] for r in result.curve)
    print(f"trained {len(result.curve)} episodes ({result.total_steps} steps); "
          f"{n_succ} successes; checkpoint in {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out)

    if args.env == "toy":
        env = _make_toy_env(cfg)
        if args.dvs:
            raise ConfigError("the DVS baseline runs only on the servo environment")
        agent, _ = Td3Agent.load(Path(args.policy) / "policy")
        controller = evalbench.PolicyController(agent)
        method = "policy"
    else:
        model = _load_ae_for(args, cfg)
        env = _make_servo_env(cfg, model)
        if args.dvs:
            controller = evalbench.DvsController(_dvs_config(cfg))
            method = "dvs"
        else:
            if not args.policy:
                raise FileNotFoundError("eval needs --policy RUNDIR (or --dvs)")
            policy_base = Path(args.policy) / "policy"
            if not policy_base.with_suffix(".json").exists():
                raise FileNotFoundError(f"policy checkpoint not found: {policy_base}.json")
            agent, _ = Td3Agent.load(policy_base)
            controller = evalbench.PolicyController(agent)
            method = "policy"

    trials = args.trials if args.trials is not None else cfg.get_int("eval.trials")
    report = evalbench.evaluate(
        controller, env, args.setting, trials, cfg.seed,
        start_mode=args.start, method=method,
        trans_spec=evalbench.HistogramSpec(cfg.get_float("eval.hist_trans_bin"),
                                           cfg.get_float("eval.hist_trans_max")),
        rot_spec=evalbench.HistogramSpec(cfg.get_float("eval.hist_rot_bin"),
                                         cfg.get_float("eval.hist_rot_max")),
        near_goal=(cfg.get_float("eval.near_goal_trans"),
                   cfg.get_float("eval.near_goal_rot")))
    report.save(out / "report.json")
    evalbench.export_comparison([report], out)
    print(f"{method} setting {args.setting} ({args.start}): "
          f"success rate {report.success_rate:.3f} over {trials} trials")
    return EXIT_OK


def cmd_compare_dvs(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out)

    model = _load_ae_for(args, cfg)
    policy_base = Path(args.policy) / "policy"
    if not policy_base.with_suffix(".json").exists():
        raise FileNotFoundError(f"policy checkpoint not found: {policy_base}.json")
    agent, _ = Td3Agent.load(policy_base)
    settings = [1, 2, 3] if args.setting == "all" else [int(args.setting)]
    trials = args.trials if args.trials is not None else cfg.get_int("eval.trials")

    reports = []
    combined = []
    for setting in settings:
        for method, controller in (
                ("policy", evalbench.PolicyController(agent)),
                ("dvs", evalbench.DvsController(_dvs_config(cfg)))):
            env = _make_servo_env(cfg, model)
            rep = evalbench.evaluate(controller, env, setting, trials, cfg.seed,
                                     start_mode=args.start, method=method)
            rep.save(out / f"report_{method}_setting{setting}.json")
            reports.append(rep)
        comparison = evalbench.compare(reports[-2], reports[-1])
        combined.append(comparison)
        print(f"setting {setting}: policy {comparison['success_rates'][0]:.3f} "
              f"vs dvs {comparison['success_rates'][1]:.3f}")
    evalbench.export_comparison(reports, out)
    with open(out / "comparison.json", "w") as fh:
        json.dump(combined, fh, indent=1)
    return EXIT_OK


def cmd_export_plots(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    curve_rows: list[list] = []
    reports: list[evalbench.EvalReport] = []
    for run in args.runs:
        run = Path(run)
        if not run.exists():
            raise FileNotFoundError(f"run directory not found: {run}")
        curve = run / "curve.csv"
        if curve.exists():
            with open(curve) as fh:
                reader = csv.reader(fh)
                header = next(reader)
                for row in reader:
                    curve_rows.append([run.name] + row)
        for report_path in sorted(run.glob("report*.json")):
            reports.append(evalbench.EvalReport.load(report_path))
    if curve_rows:
        with open(out / "curves.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            from .training import CURVE_COLUMNS

            writer.writerow(["run"] + CURVE_COLUMNS)
            writer.writerows(curve_rows)
    if reports:
        evalbench.export_comparison(reports, out)
    print(f"aggregated {len(curve_rows)} curve rows and {len(reports)} reports into {out}")
    return EXIT_OK


# ------------------------------------------------------------------ main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="servo-rl",
        description="multi-perspective visual servoing: simulator, learner, benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scenes", help="render an autoencoder dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--cams", type=int, required=True)
    p.add_argument("--objs", type=int, required=True)
    _add_config_args(p)
    p.set_defaults(func=cmd_gen_scenes)

    p = sub.add_parser("train-ae", help="train the depth-image autoencoder")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    _add_config_args(p)
    p.set_defaults(func=cmd_train_ae)

    p = sub.add_parser("train-policy", help="train a TD3 policy variant")
    p.add_argument("--out", required=True)
    p.add_argument("--variant", required=True, choices=sorted(VARIANTS))
    p.add_argument("--setting", type=int, default=1, choices=(1, 2, 3))
    p.add_argument("--env", default="servo", choices=("servo", "toy"))
    p.add_argument("--ae", help="train-ae run dir (or checkpoint base)")
    p.add_argument("--episodes", type=int)
    p.add_argument("--resume", action="store_true")
    _add_config_args(p)
    p.set_defaults(func=cmd_train_policy)

    p = sub.add_parser("eval", help="evaluate a policy checkpoint or DVS")
    p.add_argument("--out", required=True)
    p.add_argument("--policy", help="train-policy run dir")
    p.add_argument("--dvs", action="store_true", help="evaluate the DVS baseline")
    p.add_argument("--ae", help="autoencoder run dir (for --dvs without --policy)")
    p.add_argument("--env", default="servo", choices=("servo", "toy"))
    p.add_argument("--setting", type=int, default=1, choices=(1, 2, 3))
    p.add_argument("--start", default="default",
                   choices=("default", "near-goal", "hemisphere"))
    p.add_argument("--trials", type=int)
    _add_config_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare-dvs", help="paired policy-vs-DVS comparison")
    p.add_argument("--out", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--setting", default="all", choices=("1", "2", "3", "all"))
    p.add_argument("--start", default="default",
                   choices=("default", "near-goal", "hemisphere"))
    p.add_argument("--trials", type=int)
    p.add_argument("--ae")
    _add_config_args(p)
    p.set_defaults(func=cmd_compare_dvs)

    p = sub.add_parser("export-plots", help="aggregate run CSVs for plotting")
    p.add_argument("--out", required=True)
    p.add_argument("--runs", nargs="+", required=True)
    p.set_defaults(func=cmd_export_plots)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: bad configuration: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except FileNotFoundError as exc:
        print(f"error: missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING_ARTIFACT
    except (nn.NonFiniteError, ResetError) as exc:
        print(f"error: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
