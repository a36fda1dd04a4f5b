"""Command-line harness.

Every training flag can also be supplied through a flat key-value
config file (``key = value`` per line, ``#`` comments); explicit
command-line flags override the file.
"""

from __future__ import annotations

import argparse
import csv
import sys

from .agents import AgentConfig, VARIANTS
from .envs import ENV_NAMES
from .errors import ConfigurationError
from .harness import (RunConfig, cross_evaluate, emit_curves, evaluate_policy,
                      history_length_sweep, load_checkpoint, observability_sweep,
                      run_training, _make_wrapped_env, _stream)
from .pomdp import PomdpConfig, VERSIONS


def parse_config_file(path: str) -> dict:
    """Flat ``key = value`` document; keys mirror the CLI flag names."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(
                    f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _coerce(parser: argparse.ArgumentParser, values: dict) -> dict:
    """Convert file strings to the types the parser's actions expect."""
    by_dest = {a.dest: a for a in parser._actions}
    out = {}
    for key, raw in values.items():
        action = by_dest.get(key)
        if action is None:
            raise ConfigurationError(f"unknown config key: {key}")
        if isinstance(action, (argparse._StoreTrueAction,
                               argparse._StoreFalseAction)):
            out[key] = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(action, argparse._AppendAction):
            cast = action.type or str
            out[key] = [cast(v.strip()) for v in raw.split(",") if v.strip()]
        elif action.type is not None:
            out[key] = action.type(raw)
        else:
            out[key] = raw
    return out


def _add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--algo", choices=VARIANTS, default="lstm-td3")
    p.add_argument("--env", choices=ENV_NAMES, default="pendulum")
    p.add_argument("--pomdp", choices=VERSIONS, default="mdp")
    p.add_argument("--p-flk", type=float, default=0.2)
    p.add_argument("--sigma-rn", type=float, default=0.1)
    p.add_argument("--p-rsm", type=float, default=0.1)
    p.add_argument("--pomdp-seed", type=int, default=0)
    p.add_argument("--history-len", type=int, default=None,
                   help="history window length (default: 5 for lstm-td3 and "
                        "the -ow variants, 0 otherwise)")
    p.add_argument("--seed", type=int, action="append", default=None,
                   help="random seed; repeat for several runs")
    p.add_argument("--steps", type=int, default=30000)
    p.add_argument("--eval-every", type=int, default=4000)
    p.add_argument("--eval-episodes", type=int, default=10)
    p.add_argument("--start-steps", type=int, default=10000)
    p.add_argument("--update-after", type=int, default=1000)
    p.add_argument("--buffer-capacity", type=int, default=1_000_000)
    p.add_argument("--out", default="runs")
    p.add_argument("--no-dc", action="store_true",
                   help="single critic instead of twin critics")
    p.add_argument("--no-tps", action="store_true",
                   help="disable target policy smoothing")
    p.add_argument("--no-cfe", action="store_true",
                   help="concatenate raw current input instead of the "
                        "current-feature branch")
    p.add_argument("--no-pa", action="store_true",
                   help="exclude past actions from the history")
    p.add_argument("--verbose", action="store_true")


def _run_config_from_args(args) -> RunConfig:
    overrides = {"start_steps": args.start_steps,
                 "update_after": args.update_after}
    if args.history_len is not None:
        overrides["history_len"] = args.history_len
    elif args.algo in ("td3-ow", "td3-ow-apa"):
        overrides["history_len"] = 5
    if args.no_dc:
        overrides["use_double_critics"] = False
    if args.no_tps:
        overrides["use_target_policy_smoothing"] = False
    if args.no_dc and args.algo == "ddpg":
        del overrides["use_double_critics"]  # already implied
    if args.no_cfe:
        overrides["use_cfe"] = False
    if args.no_pa:
        overrides["include_past_actions"] = False
    if args.algo == "ddpg" and args.no_tps:
        overrides.pop("use_target_policy_smoothing", None)
    agent = AgentConfig.for_variant(args.algo, **overrides)
    pomdp = PomdpConfig(version=args.pomdp, p_flk=args.p_flk,
                        sigma_rn=args.sigma_rn, p_rsm=args.p_rsm,
                        rng_seed=args.pomdp_seed)
    return RunConfig(agent=agent, env_name=args.env, pomdp=pomdp,
                     total_steps=args.steps, eval_every=args.eval_every,
                     eval_episodes=args.eval_episodes,
                     seeds=args.seed if args.seed else [0],
                     out_dir=args.out, buffer_capacity=args.buffer_capacity)


def _apply_config_file(parser, subparser, args, argv):
    """Re-parse with file values as defaults so CLI flags win."""
    if getattr(args, "config", None):
        subparser.set_defaults(
            **_coerce(subparser, parse_config_file(args.config)))
        return parser.parse_args(argv)
    return args


def _pomdp_from_args(args) -> PomdpConfig:
    return PomdpConfig(version=args.pomdp, p_flk=args.p_flk,
                       sigma_rn=args.sigma_rn, p_rsm=args.p_rsm,
                       rng_seed=args.pomdp_seed)


def _write_rows(rows, fieldnames, out_path):
    if out_path:
        with open(out_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fieldnames)
            w.writeheader()
            w.writerows(rows)
    w = csv.DictWriter(sys.stdout, fieldnames=fieldnames)
    w.writeheader()
    w.writerows(rows)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = argparse.ArgumentParser(
        prog="memrl",
        description="Memory-based actor-critic training and evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the training loop")
    _add_train_flags(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--episodes", type=int, default=10)
    p_eval.add_argument("--seed", type=int, default=0)

    p_cross = sub.add_parser("cross-eval",
                             help="evaluate under a different corruption")
    p_cross.add_argument("--checkpoint", required=True)
    p_cross.add_argument("--pomdp", choices=VERSIONS, required=True,
                         dest="pomdp")
    p_cross.add_argument("--p-flk", type=float, default=0.2)
    p_cross.add_argument("--sigma-rn", type=float, default=0.1)
    p_cross.add_argument("--p-rsm", type=float, default=0.1)
    p_cross.add_argument("--pomdp-seed", type=int, default=0)
    p_cross.add_argument("--episodes", type=int, default=10)
    p_cross.add_argument("--seed", type=int, default=0)
    p_cross.add_argument("--out", default=None)

    p_hist = sub.add_parser("sweep-history",
                            help="evaluate one checkpoint at several "
                                 "history lengths")
    p_hist.add_argument("--checkpoint", required=True)
    p_hist.add_argument("--lengths", default="0,1,3,5")
    p_hist.add_argument("--episodes", type=int, default=10)
    p_hist.add_argument("--seed", type=int, default=0)
    p_hist.add_argument("--out", default=None)

    p_obs = sub.add_parser("sweep-observability",
                           help="train across a corruption-parameter grid")
    _add_train_flags(p_obs)
    p_obs.add_argument("--param", choices=("p_flk", "sigma_rn", "p_rsm"),
                       required=True)
    p_obs.add_argument("--values", required=True,
                       help="comma-separated grid, e.g. 0.05,0.1,0.2")
    p_obs.add_argument("--report", default=None,
                       help="write the aggregated report here")

    p_curves = sub.add_parser("curves",
                              help="merge per-seed metrics into mean/std curves")
    p_curves.add_argument("metrics", nargs="+")
    p_curves.add_argument("--out", required=True)

    args = parser.parse_args(argv)

    if args.command == "train":
        args = _apply_config_file(parser, p_train, args, argv)
        config = _run_config_from_args(args)
        paths = run_training(config, quiet=not args.verbose)
        for seed, (metrics, ckpt) in paths.items():
            print(f"seed {seed}: metrics {metrics} checkpoint {ckpt}")
        return 0

    if args.command == "eval":
        agent, header = load_checkpoint(args.checkpoint)
        pomdp = PomdpConfig(**header["pomdp"]) if header["pomdp"] \
            else PomdpConfig()
        env = _make_wrapped_env(header["env_name"], pomdp, (args.seed, 5),
                                (pomdp.rng_seed, args.seed, 6))
        res = evaluate_policy(agent, env, args.episodes, _stream(args.seed, 7))
        print(f"mean_return {res.mean_return!r}")
        print(f"std_return {res.std_return!r}")
        print(f"avg_q1 {res.avg_q1!r}")
        if res.avg_actor_memory is not None:
            print(f"avg_actor_memory {res.avg_actor_memory!r}")
            print(f"avg_critic_memory {res.avg_critic_memory!r}")
        return 0

    if args.command == "cross-eval":
        row = cross_evaluate(args.checkpoint, _pomdp_from_args(args),
                             episodes=args.episodes, seed=args.seed)
        _write_rows([row], ["train_version", "eval_version", "mean_return",
                            "std_return"], args.out)
        return 0

    if args.command == "sweep-history":
        lengths = [int(v) for v in args.lengths.split(",") if v != ""]
        rows = history_length_sweep(args.checkpoint, lengths,
                                    episodes=args.episodes, seed=args.seed)
        _write_rows(rows, ["history_len", "mean_return", "std_return"],
                    args.out)
        return 0

    if args.command == "sweep-observability":
        args = _apply_config_file(parser, p_obs, args, argv)
        base = _run_config_from_args(args)
        values = [float(v) for v in args.values.split(",") if v != ""]
        rows = observability_sweep(base, args.param, values,
                                   quiet=not args.verbose)
        _write_rows(rows, ["param", "value", "seed", "max_avg_return"],
                    args.report)
        return 0

    if args.command == "curves":
        emit_curves(args.metrics, args.out)
        print(f"wrote {args.out}")
        return 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
