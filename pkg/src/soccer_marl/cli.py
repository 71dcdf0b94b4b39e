"""Command line entry point: ``soccer-marl {train,eval,heatmap,replay}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_policy
from .config import Config, ConfigError, load_config

log = logging.getLogger("soccer_marl")


def _config(args) -> Config:
    return load_config(args.config) if args.config else Config()


def _adversary(source: str):
    if source == "bot":
        return "bot"
    return load_policy(source)[0]


def cmd_train(args) -> int:
    from .plotting import plot_training_curve
    from .trainer import Trainer
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.resume:
        trainer = Trainer.load(args.resume, cfg if args.config else None)
    else:
        trainer = Trainer(cfg, seed=args.seed, n_envs=args.n_envs)
    epochs = args.epochs if args.epochs is not None else trainer.cfg.trainer.total_epochs
    trainer.train(epochs, log_path=out / "train_log.csv", checkpoint_dir=out,
                  time_budget=args.time_budget)
    trainer.save(out / "last.ckpt")
    trainer.export_policy(out / "policy.ckpt")
    if trainer.history:
        plot_training_curve(trainer.history, out / "training_curve.png")
    log.info("trained to epoch %d; policy written to %s", trainer.epoch, out / "policy.ckpt")
    return 0


def cmd_eval(args) -> int:
    from .evaluation import get_scenario, run_match
    from .plotting import plot_match_report
    cfg = _config(args)
    blue = _adversary(args.blue)
    red = _adversary(args.red)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for name in args.scenario:
        scen = get_scenario(name)
        traj = out / f"{name}_trajectories.jsonl" if args.trajectories else None
        rep = run_match(cfg, blue, red, scen, seed=args.seed, duration=args.duration,
                        episodes=args.episodes, n_blue=args.n_blue, n_red=args.n_red,
                        trajectory_path=traj)
        rep.to_csv(out / f"{name}_report.csv")
        reports.append(rep)
        print(json.dumps(rep.summary()))
    plot_match_report(reports, out / "match_report.png")
    return 0


def cmd_heatmap(args) -> int:
    from .evaluation import export_value_heatmap, frozen_state
    from .plotting import plot_heatmap
    cfg = _config(args)
    params, _ = load_policy(args.checkpoint)
    world = frozen_state(cfg, args.n_blue, args.n_red, seed=args.seed)
    subject = args.subject if args.subject == "ball" else int(args.subject)
    grid = export_value_heatmap(params, world, cfg, subject, args.viewer, args.resolution)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(out.with_suffix(".csv"), grid, delimiter=",")
    plot_heatmap(grid, world, out.with_suffix(".png"), subject, args.viewer)
    print(f"wrote {out.with_suffix('.csv')} and {out.with_suffix('.png')}")
    return 0


def cmd_replay(args) -> int:
    from .evaluation import read_trajectories, replay_log
    from .plotting import plot_trajectory
    cfg = _config(args)
    result = replay_log(args.log, cfg)
    if args.plot:
        eps = read_trajectories(args.log)
        first = next(iter(eps.values()), None)
        if first is not None:
            plot_trajectory(first, args.plot)
    print(json.dumps({"episodes": result["episodes"],
                      "mismatches": {f"{k[0]}:{k[1]}": v for k, v in result["mismatches"].items()}}))
    return 0 if not result["mismatches"] else 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="soccer-marl", description=__doc__)
    p.add_argument("--config", help="YAML config file (defaults built in)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train the blue team with PPO")
    t.add_argument("--out", default="runs/train")
    t.add_argument("--epochs", type=int)
    t.add_argument("--n-envs", type=int)
    t.add_argument("--time-budget", type=float, help="stop after this many wall-clock seconds")
    t.add_argument("--resume", help="training checkpoint to resume from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="play matches and write reports")
    e.add_argument("--blue", required=True, help="policy checkpoint or 'bot'")
    e.add_argument("--red", default="bot", help="policy checkpoint or 'bot'")
    e.add_argument("--scenario", nargs="+", default=["offensive", "equal", "defensive"])
    e.add_argument("--duration", type=float, help="simulated seconds per scenario")
    e.add_argument("--episodes", type=int, help="play this many parallel episodes instead")
    e.add_argument("--n-blue", type=int)
    e.add_argument("--n-red", type=int)
    e.add_argument("--trajectories", action="store_true", help="also write JSONL trajectory logs")
    e.add_argument("--out", default="runs/eval")
    e.set_defaults(func=cmd_eval)

    h = sub.add_parser("heatmap", help="critic value heat map over a frozen state")
    h.add_argument("--checkpoint", required=True)
    h.add_argument("--subject", default="ball", help="'ball' or an agent slot index")
    h.add_argument("--viewer", type=int, default=0)
    h.add_argument("--resolution", type=int, default=80)
    h.add_argument("--n-blue", type=int, default=2)
    h.add_argument("--n-red", type=int, default=2)
    h.add_argument("--out", default="runs/heatmap")
    h.set_defaults(func=cmd_heatmap)

    r = sub.add_parser("replay", help="re-simulate a trajectory log and check it bitwise")
    r.add_argument("log")
    r.add_argument("--plot", help="write a trajectory figure of the first episode here")
    r.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
