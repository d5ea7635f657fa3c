"""Long-running desk-scale experiments behind the qualitative ordering and transfer checks.

Each job runs one seed at a time into ``<results>/<job>/seed<k>/`` and is
skipped when that directory already holds a summary, so an interrupted
campaign resumes where it stopped.
"""
from __future__ import annotations

import json
import logging
import time
from pathlib import Path

import numpy as np

from ..environment import read_metrics_csv
from .config import load_config
from .experiments import build_population, l1_distance, run_scenario

log = logging.getLogger("mpsim.heavy")

CONFIG_DIR = Path(__file__).resolve().parents[3] / "configs" / "experiments"
SEEDS = (0, 1, 2)
BETA_FACTORS = (0.8, 1.0, 1.2)
RMASK_JOBS = {-0.1: "none", -0.3: "rmask_0.3", -0.5: "rmask_0.5"}
TRANSFER_FROM = 80
TRANSFER_EPISODES = 20

# execution order: cheapest and most informative first
JOBS = ("beta", "id_off", "id_on", "qt_weak", "qt_strong", "none", "strong", "transfer", "rmask_0.3", "rmask_0.5")


def _done(path):
    return (Path(path) / "summary.json").exists()


def _run_seed(cfg, seed, out, pop, **kw):
    if _done(out):
        return
    t0 = time.perf_counter()
    run_scenario(cfg.replace(seeds=[seed], output=str(out)), out=out, pop=pop,
                 progress=lambda s, k, m: log.info("%s seed %d ep %d cases %d", cfg.name, s, k, m[-1].cum_cases),
                 **kw)
    log.info("%s seed %d finished in %.0f s", cfg.name, seed, time.perf_counter() - t0)


def run_job(job, results, config_dir=CONFIG_DIR, seeds=SEEDS):
    results = Path(results)
    if job == "beta":
        cfg = load_config(config_dir / "beta_risky.yaml")
        pop = build_population(cfg)
        for f in BETA_FACTORS:
            vcfg = cfg.with_section("disease", beta=15.8 * f).replace(name=f"beta_x{f}")
            for s in seeds:
                _run_seed(vcfg, s, results / "beta" / f"x{f}" / f"seed{s}", pop)
        return
    if job == "transfer":
        cfg = load_config(config_dir / "strong.yaml").replace(episodes=TRANSFER_EPISODES, name="none_finetune")
        pop = build_population(cfg)
        for s in seeds:
            ckpt = results / "none" / f"seed{s}" / f"seed{s}" / f"checkpoint_ep{TRANSFER_FROM:03d}"
            if not ckpt.exists():
                log.warning("transfer seed %d: checkpoint %s missing, skipped", s, ckpt)
                continue
            _run_seed(cfg, s, results / "transfer" / f"seed{s}", pop, init_from=ckpt)
        return
    cfg = load_config(config_dir / f"{job}.yaml")
    pop = build_population(cfg)
    for s in seeds:
        _run_seed(cfg, s, results / job / f"seed{s}", pop)


# ---------------------------------------------------------------------------
# collection


def _seed_summary(path):
    p = Path(path) / "summary.json"
    return json.loads(p.read_text()) if p.exists() else None


def job_totals(results, job, sub=None, seeds=SEEDS):
    """Per-seed mean end-of-episode cases over the averaging window, with the protocol actually run."""
    base = Path(results) / job / (sub or "")
    out = {}
    for s in seeds:
        summ = _seed_summary(base / f"seed{s}")
        if summ is None:
            continue
        out[s] = {"mean_total": summ["mean_total_cases"], "episodes": summ["episodes"], "agents": summ["agents"],
                  "average_last": summ["average_last"]}
    return out


def episode_curve(run_dir, seed, episodes):
    """Daily new cases averaged over the given 1-based episode numbers of one seed."""
    rows = [read_metrics_csv(Path(run_dir) / f"seed{seed}" / f"episode{k:03d}.csv")["new_cases"] for k in episodes]
    return np.mean(rows, axis=0)


def transfer_distances(results, seeds=SEEDS, window=10):
    """Per seed: L1 (days 20-80) of fine-tuned and 20-episode curves to the 100-episode reference."""
    results = Path(results)
    out = {}
    for s in seeds:
        strong = results / "strong" / f"seed{s}"
        tuned = results / "transfer" / f"seed{s}"
        if not (_done(strong) and _done(tuned)):
            continue
        n_ref = _seed_summary(strong)["episodes"]
        ref = episode_curve(strong, s, range(n_ref - window + 1, n_ref + 1))
        short = episode_curve(strong, s, range(TRANSFER_EPISODES - window + 1, TRANSFER_EPISODES + 1))
        ft = episode_curve(tuned, s, range(TRANSFER_EPISODES - window + 1, TRANSFER_EPISODES + 1))
        out[s] = {"finetune_l1": l1_distance(ft, ref), "scratch20_l1": l1_distance(short, ref),
                  "reference_episodes": n_ref}
    return out


def main(argv=None):
    import argparse
    p = argparse.ArgumentParser(description="run the desk-scale experiment campaign (resumable)")
    p.add_argument("--results", default="results")
    p.add_argument("--jobs", nargs="+", default=list(JOBS), choices=list(JOBS))
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    for job in args.jobs:
        log.info("job %s", job)
        run_job(job, args.results)
    log.info("campaign complete")


if __name__ == "__main__":
    main()
