"""``rl`` command line: train, eval and plot.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ALGORITHMS, EXPERIMENTS, ConfigError, RunConfig, load_config, resolve
from .core import ContractViolation, make_rng
from .dqn import greedy_net_policy, moving_average, train_dqn
from .envs import CartPoleEnv, HighwayConfig, HighwayEnv, TaxiEnv
from .envs.highway import write_trajectory_csv
from .plot import plot_curves
from .tabular import evaluate, greedy_policy, random_policy, train_tabular

RANDOM_TAXI_STEP_CAP = 5000
MA_WINDOW = 50

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--experiment", choices=EXPERIMENTS)
        p.add_argument("--algo", choices=ALGORITHMS)
        p.add_argument("--config", type=Path, help="flat key = value file, or a run manifest (.json)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--episodes", type=int)

    train = sub.add_parser("train", help="train an agent")
    common(train)
    train.add_argument("--quiet", action="store_true")

    ev = sub.add_parser("eval", help="evaluate a checkpoint greedily")
    common(ev)
    ev.add_argument("--checkpoint", type=Path)
    ev.add_argument("--baseline", choices=["random"])
    ev.add_argument("--trajectory", action="store_true",
                    help="highway only: log the first evaluation episode to trajectory.csv")

    plot = sub.add_parser("plot", help="render curve.csv files to SVG")
    plot.add_argument("curves", nargs="+", type=Path)
    plot.add_argument("--out", type=Path, required=True, help="output .svg path")
    plot.add_argument("--window", type=int, default=MA_WINDOW)
    return parser


def resolve_run(args) -> RunConfig:
    if args.config is not None:
        run = load_config(args.config, args.experiment, args.algo, args.seed)
        if args.experiment and run.experiment != args.experiment:
            raise ConfigError(f"config is for {run.experiment}, not {args.experiment}")
        if args.seed is not None:
            run.seed = args.seed
    else:
        if args.experiment is None:
            raise UsageError("--experiment is required without --config")
        run = resolve({}, args.experiment, args.algo, args.seed)
    if args.episodes is not None:
        if args.episodes < 0:
            raise ConfigError("--episodes must be non-negative")
        if run.tabular:
            run.tabular = replace(run.tabular, episodes=args.episodes)
        else:
            run.dqn = replace(run.dqn, episodes=args.episodes).validate()
    return run


def make_env(run: RunConfig, seed: Optional[int] = None, max_steps: Optional[int] = None):
    if run.experiment == "taxi":
        return TaxiEnv(seed, max_episode_steps=max_steps or run.taxi_max_steps)
    if run.experiment == "cartpole":
        params = run.cartpole if max_steps is None else replace(run.cartpole, max_episode_steps=max_steps)
        return CartPoleEnv(seed, params)
    return HighwayEnv(run.highway or HighwayConfig(), seed)


def _fmt(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"refusing to serialize non-finite value {x!r}")
    return repr(float(x))


def curve_csv(rewards, epsilons) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["episode", "total_reward", "epsilon", f"moving_avg_{MA_WINDOW}"])
    ma = moving_average(rewards, MA_WINDOW)
    for i, (r, e, m) in enumerate(zip(rewards, epsilons, ma)):
        w.writerow([i, _fmt(r), _fmt(e), _fmt(m)])
    return buf.getvalue()


def step_log_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["episode", "step", "epsilon", "loss", "buffer_size"])
    for r in rows:
        # loss is blank before the replay warm-up is reached
        loss = "" if math.isnan(r.loss) else _fmt(r.loss)
        w.writerow([r.episode, r.step, _fmt(r.epsilon), loss, r.buffer_size])
    return buf.getvalue()


def cmd_train(args, log=print) -> int:
    run = resolve_run(args)
    if run.algorithm == "random":
        raise ConfigError("random is an evaluation baseline, not a training algorithm")
    rng = make_rng(run.seed)
    env = make_env(run)

    def progress(ep, total, eps):
        if not args.quiet and (ep + 1) % 100 == 0:
            log(f"episode {ep + 1}: reward {total:.2f} epsilon {eps:.3f}")

    outputs: dict[str, str] = {}
    if run.tabular:
        result = train_tabular(env, run.tabular, rng, on_episode=progress)
        model = result.q
    else:
        result = train_dqn(env, run.dqn, rng, on_episode=progress)
        model = result.net
        outputs["steps.csv"] = step_log_csv(result.step_log)
    outputs["curve.csv"] = curve_csv(result.episode_rewards, result.episode_epsilons)
    manifest = {"tool": "valuerl", "version": __version__, "command": "train",
                "config": run.to_dict()}
    outputs["manifest.json"] = json.dumps(manifest, indent=2, sort_keys=True) + "\n"

    args.out.mkdir(parents=True, exist_ok=True)
    for name, text in outputs.items():
        (args.out / name).write_text(text, encoding="utf-8")
    save_checkpoint(args.out / "model.ckpt", model, run.experiment, run.algorithm)
    if not args.quiet:
        log(f"wrote {len(result.episode_rewards)} episodes to {args.out}")
    return EXIT_OK


def cmd_eval(args, log=print) -> int:
    run = resolve_run(args)
    episodes = args.episodes if args.episodes is not None else run.eval_episodes
    if episodes < 1:
        raise ConfigError("--episodes must be >= 1 for evaluation")
    if args.trajectory and run.experiment != "highway":
        raise UsageError("--trajectory is only available for the highway experiment")
    rows = []
    traj_rows = None
    rng = make_rng(run.seed)
    if run.algorithm != "random":
        if args.checkpoint is None:
            raise UsageError("--checkpoint is required unless --algo random")
        ckpt = load_checkpoint(args.checkpoint, run.experiment)
        policy = greedy_policy(ckpt.model) if run.experiment == "taxi" else greedy_net_policy(ckpt.model)
        env = make_env(run)
        if args.trajectory:
            # a separate single-episode pass so the logged run does not shift the eval seeds
            env.log_trajectory = True
            evaluate(env, policy, 1, make_rng(run.seed))
            traj_rows = list(env.trajectory)
            env.log_trajectory = False
        stats = evaluate(env, policy, episodes, rng)
        rows.append((ckpt.algorithm, stats))
    if run.algorithm == "random" or args.baseline == "random":
        cap = RANDOM_TAXI_STEP_CAP if run.experiment == "taxi" else None
        env = make_env(run, max_steps=cap)
        base_rng = make_rng(run.seed + 1)
        stats = evaluate(env, random_policy(env.descriptor, base_rng), episodes, base_rng)
        rows.append(("random", stats))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["agent", "episodes", "penalties_per_episode", "timesteps_per_trip",
                "reward_per_move", "mean_return"])
    for name, s in rows:
        w.writerow([name, s.episodes, _fmt(s.penalties_per_episode), _fmt(s.timesteps_per_trip),
                    _fmt(s.reward_per_move), _fmt(s.mean_return)])
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "eval.csv").write_text(buf.getvalue(), encoding="utf-8")
    if traj_rows is not None:
        write_trajectory_csv(args.out / "trajectory.csv", traj_rows)
    for name, s in rows:
        log(f"{name}: penalties/episode {s.penalties_per_episode:.2f}, "
            f"timesteps/trip {s.timesteps_per_trip:.2f}, reward/move {s.reward_per_move:.3f}")
    return EXIT_OK


def cmd_plot(args, log=print) -> int:
    for p in args.curves:
        if not p.exists():
            raise FileNotFoundError(f"curve file not found: {p}")
    plot_curves(args.curves, args.out, args.window)
    log(f"wrote {args.out}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "plot": cmd_plot}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"rl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ContractViolation, CheckpointError, FileNotFoundError, ValueError, OSError) as exc:
        print(f"rl: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
