"""Compiled core versus numpy fallback: per-kernel timings and a full simulated day.

    python benchmarks/bench_kernels.py --agents 100000 --repeat 5
"""
import argparse
import json
import time

import numpy as np

from mpsim import kernels
from mpsim.environment import VISIT_RULE, World, WorldConfig
from mpsim.epidemic import DiseaseParams
from mpsim.population import PopulationConfig, synthesize_population


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_inputs(pop, seed=0):
    rng = np.random.default_rng(seed)
    n, nf = pop.n_agents, pop.n_facilities
    act = rng.integers(0, 4, n).astype(np.int8)
    shop = rng.integers(0, 3, n).astype(np.int8)
    active = np.ones(n, dtype=np.uint8)
    va, vf, vt = kernels.BACKENDS["python"].build_visits(pop.aff.astype(np.int32), active, pop.group.astype(np.int8),
                                                          act, shop, VISIT_RULE)
    return dict(n=n, nf=nf, act=act, shop=shop, active=active, va=va, vf=vf, vt=vt,
                cap=pop.fac_cap.astype(np.int64), w_src=np.where(va % 20 == 0, 1.0, 0.0),
                w_vic=np.where(va % 20 == 0, 0.0, 0.8), coef=rng.random(nf) * 0.01,
                state=rng.integers(0, 11, n).astype(np.int8), hosp=np.zeros(n, dtype=np.uint8),
                days=np.zeros(n, dtype=np.int16))


def bench_kernels(pop, repeat):
    d = kernel_inputs(pop)
    p = DiseaseParams()
    sev, nhos, hd = p.by_group()
    aff = pop.aff.astype(np.int32)
    group = pop.group.astype(np.int8)
    out = {}
    for name, mod in kernels.BACKENDS.items():
        key = mod.uniform(0, 1, d["va"].astype(np.int64), d["vt"].astype(np.int64))
        u = mod.uniform(0, 2, d["va"].astype(np.int64), 0)
        ua, ub = mod.uniform(0, 3, np.arange(d["n"]), 0), mod.uniform(0, 4, np.arange(d["n"]), 0)
        out[name] = {
            "uniform": _best(lambda: mod.uniform(0, 1, d["va"].astype(np.int64), 5), repeat),
            "build_visits": _best(lambda: mod.build_visits(aff, d["active"], group, d["act"], d["shop"], VISIT_RULE),
                                  repeat),
            "kickout": _best(lambda: mod.kickout(d["va"], d["vf"], key, d["cap"], d["nf"]), repeat),
            "infect": _best(lambda: mod.infect(d["va"], d["vf"], d["w_src"], d["w_vic"], d["coef"], u, d["n"],
                                               d["nf"]), repeat),
            "advance_health": _best(lambda: mod.advance_health(d["state"], group, d["hosp"], d["days"], ua, ub,
                                                               p.rates(), sev, nhos, hd), repeat),
        }
    return out


def bench_day(pop, repeat):
    out = {}
    for name in kernels.BACKENDS:
        world = World(pop, WorldConfig(backend=name), seed=0)
        world.step(world.locked_actions())  # warm up
        out[name] = _best(lambda: world.step(world.locked_actions()), repeat)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--agents", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--threads", type=int)
    args = ap.parse_args(argv)
    if args.threads:
        kernels.set_threads(args.threads)
    pop = synthesize_population(PopulationConfig(agent_count=args.agents, seed=1))
    res = {"agents": pop.n_agents, "backends": sorted(kernels.BACKENDS), "kernels": bench_kernels(pop, args.repeat),
           "day_step": bench_day(pop, args.repeat)}
    if "cython" in kernels.BACKENDS:
        res["speedup"] = {k: res["kernels"]["python"][k] / res["kernels"]["cython"][k] for k in res["kernels"]["python"]}
        res["speedup"]["day_step"] = res["day_step"]["python"] / res["day_step"]["cython"]
    print(json.dumps(res, indent=2))
    return res


if __name__ == "__main__":
    main()
