"""Command-line front end: ``tankguard <command> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .. import __version__
from ..config import RunConfig
from ..maze import SimulationError
from ..safe_rl import SafeSac, TrainingDiverged, collect_offline, load_dataset, pretrain_safety, safety_auc
from ..safe_rl.offline import split
from ..safe_rl.replay import write_dataset, write_dataset_jsonl
from .compare import CompareError, compare
from .config_file import ConfigError, FileConfig, load_config
from .episode_log import ReplayMismatch, dump_json, replay_episode
from .plan import ExperimentPlan
from .runner import prepare_dir, run_eval, run_train, train_dir

log = logging.getLogger("tankguard")


class UsageError(ValueError):
    pass


def _common(defaults_suppressed=True):
    p = argparse.ArgumentParser(add_help=False)
    d = argparse.SUPPRESS if defaults_suppressed else None
    p.add_argument("--config", default=d, help="TOML run configuration file")
    p.add_argument("--seed", type=int, default=d, help="random seed (default 0)")
    p.add_argument("--out", default=d, help="output root (default $TANKGUARD_OUT or ./runs)")
    p.add_argument("--maze", default=d, help="built-in maze name or maze JSON path")
    p.add_argument("--layer", choices=("on", "off"), default=d, help="passivity layer")
    p.add_argument("--run-config", dest="run_config", default=d, help="agnostic | Eb<b> | Eb<b>-Ef<f>")
    p.add_argument("--overwrite", action="store_true", default=d, help="replace non-empty output directories")
    p.add_argument("-v", "--verbose", action="store_true", default=d)
    return p


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="tankguard", parents=[common],
                                     description="Passivity-aware safe RL for variable impedance control.")
    parser.add_argument("--version", action="version", version=f"tankguard {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("collect", parents=[common], help="collect the offline violation dataset")
    p.add_argument("-n", "--tuples", type=int, help="number of transitions (default: train.offline_tuples)")
    p.add_argument("--horizon", type=int, help="random steps per spawn (default: train.offline_horizon)")
    p.add_argument("--format", choices=("bin", "jsonl"), default="bin")

    p = sub.add_parser("pretrain", parents=[common], help="pretrain safety critic and recovery policy")
    p.add_argument("dataset", help="dataset file from 'collect'")
    p.add_argument("--steps", type=int, help="gradient steps (default: train.pretrain_steps)")
    p.add_argument("--holdout", type=float, default=0.2, help="held-out fraction for the AUC report")

    p = sub.add_parser("train", parents=[common], help="train one run config and seed")
    p.add_argument("--episodes", type=int)
    p.add_argument("--pretrained", help="bundle directory from 'pretrain' (skips offline pretraining)")

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint bundle")
    p.add_argument("checkpoint", help="checkpoint bundle directory")
    p.add_argument("--episodes", type=int)
    p.add_argument("--terminate", action="store_true", help="end episodes on energy violations")
    p.add_argument("--label", help="output subdirectory name")

    p = sub.add_parser("replay", parents=[common], help="verify an episode log bitwise")
    p.add_argument("episode_csv")

    p = sub.add_parser("compare", parents=[common], help="aggregate evaluation directories")
    p.add_argument("eval_dirs", nargs="+")
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("experiment", parents=[common], help="train and evaluate the [experiment] plan")
    p.add_argument("--workers", type=int)
    return parser


def _settings(args):
    cfg = load_config(args.config) if getattr(args, "config", None) else FileConfig()
    run_cfg = dict(cfg.run)
    name = getattr(args, "run_config", None) or run_cfg.pop("name", "agnostic")
    run_cfg.pop("name", None)
    if getattr(args, "seed", None) is not None:
        run_cfg["seed"] = args.seed
    if getattr(args, "maze", None):
        run_cfg["maze"] = args.maze
    if getattr(args, "layer", None):
        run_cfg["layer"] = args.layer == "on"
    run_cfg.setdefault("maze", "corridor")
    try:
        run = RunConfig.from_name(name, **run_cfg)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    out = Path(getattr(args, "out", None) or os.environ.get("TANKGUARD_OUT") or "runs")
    return cfg, run, out


def cmd_collect(args, cfg, run, out):
    n = args.tuples or cfg.train.offline_tuples
    horizon = args.horizon or cfg.train.offline_horizon
    data = collect_offline(n, maze=run.maze, run=run.with_(layer=False, monitor_only=False), seed=run.seed,
                           horizon=horizon, jitter=cfg.train.offline_jitter, env_cfg=cfg.env)
    out.mkdir(parents=True, exist_ok=True)
    path = out / ("dataset.jsonl" if args.format == "jsonl" else "dataset.tgds")
    if path.exists() and not getattr(args, "overwrite", False):
        raise FileExistsError(f"{path} exists; pass --overwrite to replace it")
    (write_dataset_jsonl if args.format == "jsonl" else write_dataset)(path, data)
    n_viol = sum(t.violated for t in data)
    print(f"collected {len(data)} tuples, {n_viol} violations ({n_viol / len(data):.2%}) -> {path}")


def cmd_pretrain(args, cfg, run, out):
    data = load_dataset(args.dataset)
    train_set, held = split(data, args.holdout, seed=run.seed)
    agent = SafeSac(cfg.train, seed=run.seed, env_cfg=cfg.env)
    pretrain_safety(agent, train_set, steps=args.steps, seed=run.seed)
    d = prepare_dir(out / "safety", getattr(args, "overwrite", False))
    agent.save(d, extra={"run_config": run.to_dict(), "env_config": cfg.env.to_dict(), "config_hash": "",
                         "dataset": str(args.dataset)})
    (d / "runconfig.json").write_text(json.dumps(run.to_dict(), indent=2, sort_keys=True) + "\n")
    try:
        auc = safety_auc(agent, held)
        print(f"pretrained safety critic on {len(train_set)} tuples; held-out AUC {auc:.4f} -> {d}")
    except ValueError:
        print(f"pretrained safety critic on {len(train_set)} tuples; held-out AUC undefined -> {d}")


def cmd_train(args, cfg, run, out):
    train_cfg = cfg.train
    if args.episodes:
        train_cfg = type(train_cfg).from_dict({**train_cfg.to_dict(), "episodes": args.episodes})
    d = train_dir(out / "train", run)

    def progress(row):
        log.info("episode %d steps %d reward %.1f %s", row["episode"], row["steps"], row["reward"], row["reason"])

    res = run_train(run.with_(layer=False), train_cfg, cfg.env, d, pretrained=args.pretrained,
                    overwrite=getattr(args, "overwrite", False), progress=progress)
    tail = res.log[-100:]
    rate = sum(r["success"] for r in tail) / len(tail)
    print(f"trained {run.name} seed {run.seed}: success over last {len(tail)} episodes {rate:.2%} -> {d}")


def cmd_eval(args, cfg, run, out):
    layer = getattr(args, "layer", "off") == "on"
    monitor = run if getattr(args, "run_config", None) else None
    rc = Path(args.checkpoint) / "runconfig.json"
    if not rc.is_file():
        raise FileNotFoundError(f"{args.checkpoint}: not a checkpoint bundle (runconfig.json missing)")
    trained = RunConfig.from_dict(json.loads(rc.read_text()))
    label = args.label or f"{trained.name}-layer-{'on' if layer else 'off'}"
    d = out / "eval" / label / f"seed{trained.seed}"
    ev = cfg.eval
    summary, _ = run_eval(args.checkpoint, d, layer=layer, monitor=monitor, terminate=args.terminate,
                          episodes=args.episodes or ev["episodes"], seed=run.seed, log_episodes=ev["log_episodes"],
                          trace_stride=ev["trace_stride"], deterministic=ev["deterministic"],
                          overwrite=getattr(args, "overwrite", False))
    print(f"{summary['label']} seed {summary['seed']}: success {summary['success']}/{summary['episodes']}, "
          f"violations force {summary['violations_force']} tank {summary['violations_tank']} "
          f"flow {summary['violations_flow']}, mean final tank {summary['mean_tank_end']:.3f} J -> {d}")


def cmd_replay(args, cfg, run, out):
    n = replay_episode(args.episode_csv)
    print(f"replay ok: {n} ticks match {args.episode_csv}")


def cmd_compare(args, cfg, run, out):
    d = out / "compare"
    files = compare(args.eval_dirs, d, figures=not args.no_figures)
    print("\n".join(str(f) for f in files))


def cmd_experiment(args, cfg, run, out):
    ex = cfg.experiment
    plan = ExperimentPlan(ex["run_configs"], ex["seeds"], out, maze=run.maze, train=cfg.train, env=cfg.env,
                          eval_episodes=cfg.eval["episodes"], eval_layers=tuple(ex["eval_layers"]),
                          workers=args.workers or ex["workers"], overwrite=getattr(args, "overwrite", False))
    results = plan.execute()
    dump_json(out / "experiment.json", results)
    print(f"{len(results)} runs -> {out}")


COMMANDS = {"collect": cmd_collect, "pretrain": cmd_pretrain, "train": cmd_train, "eval": cmd_eval,
            "replay": cmd_replay, "compare": cmd_compare, "experiment": cmd_experiment}

ERROR_KINDS = (
    (ReplayMismatch, "replay-mismatch"),
    (CompareError, "compare"),
    (SimulationError, "simulation"),
    (TrainingDiverged, "diverged"),
    (FileExistsError, "exists"),
    (FileNotFoundError, "not-found"),
    (OSError, "io"),
    (ValueError, "invalid"),
)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, run, out = _settings(args)
    except (ConfigError, UsageError) as exc:
        parser.print_usage(sys.stderr)
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    try:
        COMMANDS[args.command](args, cfg, run, out)
    except Exception as exc:  # one-line machine-parsable failure
        for cls, kind in ERROR_KINDS:
            if isinstance(exc, cls):
                msg = " ".join(str(exc).split())
                print(f"error: {kind}: {msg}", file=sys.stderr)
                return 1
        raise
    return 0
