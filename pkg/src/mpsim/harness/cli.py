"""Command line entry point: ``mpsim <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

import yaml

from ..population import PopulationConfig, PopulationError, save_population, synthesize_population
from .config import ConfigError, load_config
from .experiments import benchmark, run_scenario, sensitivity_sweep, transfer_run

log = logging.getLogger("mpsim")


def _progress(seed, episode, metrics):
    log.info("seed %s episode %d: total cases %d", seed, episode, metrics[-1].cum_cases)


def cmd_synth_pop(args):
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = yaml.safe_load(fh) or {}
        data = data.get("population", {}).get("synth", data)
    if args.agents is not None:
        data["agent_count"] = args.agents
    if args.seed is not None:
        data["seed"] = args.seed
    pop = synthesize_population(PopulationConfig(**data))
    save_population(pop, args.out)
    print(json.dumps({"agents": pop.n_agents, "facilities": pop.n_facilities, "out": args.out}))


def cmd_train(args):
    cfg = load_config(args.config)
    if args.out:
        cfg = cfg.replace(output=args.out)
    if args.episodes is not None:
        cfg = cfg.replace(episodes=args.episodes)
    if args.init_from:
        res = transfer_run(args.init_from, cfg, cfg.episodes, init_checkpoint=args.checkpoint_name,
                           baseline=args.baseline, progress=_progress)
        print(json.dumps({k: v["mean_total_cases"] for k, v in res.items()}))
    else:
        rep = run_scenario(cfg, progress=_progress)
        print(json.dumps({"mean_total_cases": rep.mean_total, "output": rep.output}))


def cmd_eval(args):
    cfg = load_config(args.config).replace(episodes=0)
    if args.out:
        cfg = cfg.replace(output=args.out)
    if args.episodes is not None:
        cfg = cfg.replace(average_last=args.episodes)
    rep = run_scenario(cfg, init_from=args.checkpoint, progress=_progress)
    print(json.dumps({"mean_total_cases": rep.mean_total, "output": rep.output}))


def cmd_sweep(args):
    cfg = load_config(args.config)
    if args.out:
        cfg = cfg.replace(output=args.out)
    verdict = sensitivity_sweep(cfg, args.param, args.values, progress=_progress)
    print(json.dumps(verdict))


def cmd_bench(args):
    rows = benchmark(args.agents, days=args.days, backend=args.backend, threads=args.threads)
    print(json.dumps(rows, indent=2))


def build_parser():
    p = argparse.ArgumentParser(prog="mpsim", description="Agent-based pandemic simulator with SMADQN learners")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-pop", help="synthesise a population file")
    s.add_argument("--config", help="YAML with a population.synth section (or bare PopulationConfig keys)")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--agents", type=int)
    s.set_defaults(func=cmd_synth_pop)

    s = sub.add_parser("train", help="train a scenario (optionally fine-tune from a checkpoint)")
    s.add_argument("--config", required=True)
    s.add_argument("--init-from", help="checkpoint directory, or a run directory with seed<k>/<name>")
    s.add_argument("--checkpoint-name", help="checkpoint subdirectory when --init-from is a run directory")
    s.add_argument("--baseline", action="store_true", help="also train a from-scratch baseline of equal budget")
    s.add_argument("--episodes", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint without training")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--episodes", type=int, help="evaluation episodes per seed")
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="sensitivity sweep over beta or r_mask")
    s.add_argument("--config", required=True)
    s.add_argument("--param", required=True, choices=["beta", "r_mask"])
    s.add_argument("--values", required=True, type=float, nargs="+")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("bench", help="time fixed-policy day steps")
    s.add_argument("--agents", type=int, nargs="+", default=[1000])
    s.add_argument("--days", type=int, default=3)
    s.add_argument("--backend", choices=["auto", "python", "cython"])
    s.add_argument("--threads", type=int)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (ConfigError, PopulationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
