"""Experiment drivers: scenario runs, sweeps, policy transfer and throughput benchmarks."""
from __future__ import annotations

import json
import resource
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import kernels
from ..environment import METRIC_COLUMNS, World, write_household_dump, write_metrics_csv
from ..population import PopulationConfig, load_population, synthesize_population
from ..rng import Stream, derive_seed
from ..smadqn import MANIFEST, Trainer, load_checkpoint, run_episode
from .config import ConfigError, ScenarioConfig, save_config


def build_population(cfg: ScenarioConfig):
    if "file" in cfg.population:
        return load_population(cfg.population["file"])
    return synthesize_population(cfg.population_config())


def risky_policy(world, day, obs):
    return world.locked_actions()


def episode_seed(seed, episode):
    return derive_seed(seed, Stream.EPISODE, episode)


@dataclass
class RunReport:
    name: str
    output: str
    agents: int
    seeds: list
    episodes: int
    average_last: int
    totals: dict = field(default_factory=dict)  # seed -> cumulative cases at the end of each episode
    averaged: dict = field(default_factory=dict)  # metric column -> daily mean over the window
    timings: dict = field(default_factory=dict)

    @property
    def mean_total(self):
        """Mean end-of-episode cumulative cases over the last ``average_last`` episodes of every seed."""
        vals = [v for s in self.seeds for v in self.totals[str(s)][-self.average_last:]]
        return float(np.mean(vals)) if vals else float("nan")

    def daily_cases(self):
        return np.asarray(self.averaged.get("new_cases", []), dtype=float)

    def summary(self):
        return {
            "name": self.name, "agents": self.agents, "seeds": list(self.seeds), "episodes": self.episodes,
            "average_last": self.average_last, "mean_total_cases": self.mean_total,
            "totals": self.totals, "daily_new_cases": self.daily_cases().tolist(),
        }

    def write(self):
        out = Path(self.output)
        (out / "summary.json").write_text(json.dumps(self.summary(), indent=2, sort_keys=True))
        (out / "timings.json").write_text(json.dumps(self.timings, indent=2, sort_keys=True))

    @classmethod
    def read(cls, path):
        data = json.loads((Path(path) / "summary.json").read_text())
        rep = cls(data["name"], str(path), data["agents"], data["seeds"], data["episodes"], data["average_last"],
                  data["totals"])
        rep.averaged = {"new_cases": data["daily_new_cases"]}
        return rep


def _average(per_seed_metrics, window):
    rows = [m for eps in per_seed_metrics for m in eps[-window:]]
    if not rows:
        return {}
    out = {}
    for col in METRIC_COLUMNS:
        out[col] = np.mean([[getattr(d, col) for d in ep] for ep in rows], axis=0).tolist()
    return out


def _write_averaged(avg, path):
    days = len(avg.get("day", []))
    with open(path, "w") as fh:
        fh.write(",".join(METRIC_COLUMNS) + "\n")
        for i in range(days):
            fh.write(",".join(format(avg[c][i], ".10g") for c in METRIC_COLUMNS) + "\n")


def _checkpoint_for(init_from, seed, name=None):
    p = Path(init_from)
    if (p / MANIFEST).exists():
        return p
    cand = p / f"seed{seed}" / (name or "checkpoint")
    if (cand / MANIFEST).exists():
        return cand
    raise ConfigError(f"no checkpoint for seed {seed} under {init_from}")


def run_scenario(cfg: ScenarioConfig, init_from=None, init_checkpoint=None, out=None, pop=None, progress=None):
    """Train (or evaluate) every seed of ``cfg`` and write CSVs, checkpoints and a summary."""
    out = Path(out or cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    save_config(cfg, out / "config.yaml")
    pop = pop if pop is not None else build_population(cfg)
    tcfg = cfg.train_config()
    report = RunReport(cfg.name, str(out), pop.n_agents, list(cfg.seeds), cfg.episodes, cfg.average_last)
    per_seed = []
    t_start = time.perf_counter()
    for seed in cfg.seeds:
        sdir = out / f"seed{seed}"
        sdir.mkdir(exist_ok=True)
        world = World(pop, cfg.world_config(), seed)
        if init_from is not None:
            trainer = Trainer.from_checkpoint(_checkpoint_for(init_from, seed, init_checkpoint), world, tcfg, seed)
        else:
            trainer = Trainer(world, tcfg, seed)
        episodes = []
        ep_times = []
        n_eps = cfg.episodes if cfg.episodes > 0 else cfg.average_last
        for k in range(1, n_eps + 1):
            last = k == n_eps
            dump = _household_hook(world, sdir / "households.csv") if last and cfg.household_dump_days else None
            hook = (lambda d, m, dump=dump: dump(d) if d in cfg.household_dump_days else None) if dump else None
            t0 = time.perf_counter()
            if cfg.fixed_policy == "risky":
                _, metrics = run_episode(world, None, tcfg, 0.0, episode_seed(seed, k), record=False,
                                         policy=risky_policy, on_day=hook)
            elif cfg.episodes == 0:
                _, metrics = run_episode(world, trainer.learners, tcfg, trainer.epsilon,
                                         episode_seed(seed, trainer.episode + k), record=False, on_day=hook)
            else:
                metrics, _ = trainer.train_episode(on_day=hook)
            ep_times.append(time.perf_counter() - t0)
            episodes.append(metrics)
            write_metrics_csv(metrics, sdir / f"episode{k:03d}.csv")
            if cfg.fixed_policy is None and cfg.episodes > 0 and (k in cfg.checkpoint_episodes):
                trainer.save(sdir / f"checkpoint_ep{k:03d}")
            if progress:
                progress(seed, k, metrics)
        if cfg.fixed_policy is None:
            trainer.save(sdir / "checkpoint")
        if cfg.record_trace:
            world.trace.write_csv(sdir / "trace.csv")
            world.registry.write_csv(sdir / "isolation.csv")
        report.totals[str(seed)] = [int(ep[-1].cum_cases) for ep in episodes]
        report.timings[f"seed{seed}"] = {"episode_seconds": ep_times}
        per_seed.append(episodes)
    report.averaged = _average(per_seed, cfg.average_last)
    _write_averaged(report.averaged, out / "averaged.csv")
    report.timings["total_seconds"] = time.perf_counter() - t_start
    report.write()
    return report


def _household_hook(world, path):
    state = {"first": True}

    def dump(day):
        write_household_dump(world.household_rows(), path, append=not state["first"])
        state["first"] = False

    return dump


def sensitivity_sweep(cfg: ScenarioConfig, param, values, out=None, progress=None):
    """One run per value of ``beta`` or ``r_mask`` on a shared population; returns a verdict dict."""
    if param not in ("beta", "r_mask"):
        raise ConfigError(f"sweep parameter must be 'beta' or 'r_mask', got {param!r}")
    out = Path(out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    pop = build_population(cfg)
    section = "disease" if param == "beta" else "reward"
    reports = []
    for v in values:
        vcfg = cfg.with_section(section, **{param: float(v)}).replace(name=f"{cfg.name}-{param}={v}")
        reports.append(run_scenario(vcfg, out=out / f"{param}={v}", pop=pop, progress=progress))
    means = [r.mean_total for r in reports]
    curves = [r.daily_cases() for r in reports]
    with open(out / "sweep.csv", "w") as fh:
        fh.write("day," + ",".join(f"{param}={v}" for v in values) + "\n")
        for d in range(len(curves[0]) if curves else 0):
            fh.write(f"{d}," + ",".join(format(c[d], ".10g") for c in curves) + "\n")
    verdict = {
        "param": param, "values": [float(v) for v in values], "mean_total_cases": means,
        "monotone_increasing": bool(all(b > a for a, b in zip(means, means[1:]))),
    }
    (out / "sweep.json").write_text(json.dumps(verdict, indent=2))
    return verdict


def l1_distance(a, b, start=20, end=80):
    a = np.asarray(a, dtype=float)[start:end]
    b = np.asarray(b, dtype=float)[start:end]
    return float(np.abs(a - b).sum())


def transfer_run(base_checkpoint, cfg: ScenarioConfig, finetune_episodes, out=None, init_checkpoint=None,
                 baseline=True, progress=None):
    """Fine-tune a checkpoint under ``cfg`` and, optionally, train a from-scratch baseline of equal budget."""
    out = Path(out or cfg.output)
    fcfg = cfg.replace(episodes=int(finetune_episodes), name=f"{cfg.name}-finetune")
    pop = build_population(cfg)
    probe = World(pop, cfg.world_config(), cfg.seeds[0])
    for seed in cfg.seeds:
        load_checkpoint(_checkpoint_for(base_checkpoint, seed, init_checkpoint), probe.obs_dim)  # dimension check
    tuned = run_scenario(fcfg, init_from=base_checkpoint, init_checkpoint=init_checkpoint, out=out / "finetune",
                         pop=pop, progress=progress)
    result = {"finetune": tuned.summary()}
    if baseline and finetune_episodes > 0:
        scratch = run_scenario(fcfg.replace(name=f"{cfg.name}-scratch"), out=out / "scratch", pop=pop,
                               progress=progress)
        result["scratch"] = scratch.summary()
    (out / "transfer.json").write_text(json.dumps(result, indent=2))
    return result


def benchmark(agent_counts=(1000,), days=3, seed=0, backend=None, threads=None, pop_seed=1):
    """Wall time per simulated day under the fixed risky policy, per population size."""
    if threads is not None:
        kernels.set_threads(threads)
    rows = []
    for n in agent_counts:
        t0 = time.perf_counter()
        pop = synthesize_population(PopulationConfig(agent_count=int(n), seed=pop_seed))
        synth = time.perf_counter() - t0
        from ..environment import WorldConfig
        world = World(pop, WorldConfig(backend=backend), seed)
        steps = []
        for d in range(days):
            t0 = time.perf_counter()
            world.step(world.locked_actions())
            steps.append(time.perf_counter() - t0)
        rows.append({
            "agents": int(n), "backend": world.k.NAME, "threads": int(world.k.get_num_threads()),
            "synth_seconds": synth, "step_seconds": steps, "mean_step_seconds": float(np.mean(steps)),
            "episode_seconds_estimate": float(np.mean(steps)) * 80,
            "peak_rss_mb": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0,
        })
    for a, b in zip(rows, rows[1:]):
        b["ratio_to_previous"] = b["mean_step_seconds"] / a["mean_step_seconds"]
    return rows
