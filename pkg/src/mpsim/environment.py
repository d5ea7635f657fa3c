"""The multi-agent POMDP: actions, observations, rewards, supply and the daily pipeline."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields
from enum import IntEnum

import numpy as np

from . import kernels
from .epidemic import SYMPTOMATIC, ContactTraceLog, DiseaseParams, HealthState as HS
from .government import (
    PolicySchedule, QuarantineRegistry, capacity_for, generate_disclosure, quarantine_scan, release_scan,
)
from .population import (
    FREQUENCY, INFECTION_COEF, MIN_ACT, N_TYPES, REFERENCE_AGENTS, AgeGroup, FacilityType as FT, Population,
    assign_hospital, seeding_site,
)
from .rng import SUB, Stream, uniform


class Shop(IntEnum):
    NONE = 0
    ONLINE = 1
    OFFLINE = 2


@dataclass(frozen=True)
class Action:
    mask: bool = False
    act: int = 0
    shop: Shop = Shop.NONE


N_ACTIONS = np.array([2, 2, 24, 24], dtype=np.int64)  # per age group
FULL_SPACE = {AgeGroup.ADU, AgeGroup.RTR}


def encode_action(group, action: Action):
    group = AgeGroup(group)
    if group in FULL_SPACE:
        return int(action.mask) * 12 + int(action.act) * 3 + int(action.shop)
    if action.act != 0 or action.shop != Shop.NONE:
        raise ValueError(f"{group.label} agents only choose whether to wear a mask")
    return int(action.mask)


def decode_action(group, idx):
    group = AgeGroup(group)
    n = N_ACTIONS[group]
    if not 0 <= idx < n:
        raise ValueError(f"action index {idx} outside the {group.label} action space of size {n}")
    if group in FULL_SPACE:
        return Action(bool(idx // 12), int(idx % 12 // 3), Shop(idx % 3))
    return Action(bool(idx), 0, Shop.NONE)


def action_space(group):
    return [decode_action(group, i) for i in range(N_ACTIONS[AgeGroup(group)])]


def decode_actions(group, idx):
    """Vectorised decoding into (mask, act, shop); indices < 0 mean 'no action'."""
    group = np.asarray(group, dtype=np.int64)
    idx = np.asarray(idx, dtype=np.int64)
    full = (group == AgeGroup.ADU) | (group == AgeGroup.RTR)
    valid = idx >= 0
    i = np.where(valid, idx, 0)
    mask = np.where(full, i // 12, i).astype(np.uint8) * valid
    act = np.where(full, i % 12 // 3, 0).astype(np.int8) * valid
    shop = np.where(full, i % 3, 0).astype(np.int8) * valid
    return mask.astype(np.uint8), act.astype(np.int8), shop.astype(np.int8)


def visit_rule():
    """rule[group, act, shop, type] = 1 when that facility type is visited."""
    rule = np.zeros((4, 4, 3, N_TYPES), dtype=np.uint8)
    for g in AgeGroup:
        for a in range(4):
            for s in range(3):
                for t in FT:
                    if t == FT.HOSPITAL:
                        ok = False
                    elif t in (FT.HOUSEHOLD, FT.SCHOOL, FT.WORKPLACE):
                        ok = True
                    elif g not in FULL_SPACE:
                        ok = False
                    elif t == FT.RETAIL:
                        ok = s == Shop.OFFLINE
                    else:
                        ok = MIN_ACT[t] <= a
                    rule[g, a, s, t] = ok
    return rule


VISIT_RULE = visit_rule()

# ---------------------------------------------------------------------------
# observations

OBS_HEA_CLASSES = 5
OBS_BASE_DIM = 9
OBS_ID_DIM = 13
OBS_CLASS = np.zeros(len(HS), dtype=np.int64)
OBS_CLASS[[HS.SYM, HS.MSY]] = 1
OBS_CLASS[HS.SSY] = 2
OBS_CLASS[HS.IMS] = 3
OBS_CLASS[HS.DEA] = 4


@dataclass
class Observation:
    hea: np.ndarray
    rel: float
    sup: float
    city: float
    t: float
    sur: np.ndarray | None = None

    def vector(self):
        parts = [self.hea, [self.rel, self.sup, self.city, self.t]]
        if self.sur is not None:
            parts.append(self.sur)
        return np.concatenate(parts).astype(np.float64)

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=np.float64)
        sur = v[9:13].copy() if len(v) == OBS_ID_DIM else None
        return cls(v[:5].copy(), float(v[5]), float(v[6]), float(v[7]), float(v[8]), sur)


def supply_level(d):
    d = np.asarray(d, dtype=np.float64)
    return np.maximum(0.0, 1.0 - (d / 21.0) ** 2)


def supply_step(d, succeeded):
    """Days since replenishment after today's shopping."""
    return np.where(np.asarray(succeeded, dtype=bool), 0, np.asarray(d) + 1)


def resolve_online_shopping(requests, capacity=17000, rng=None, keys=None):
    """Serve a uniformly random subset of at most ``capacity`` requests (sorted ids)."""
    requests = np.asarray(requests, dtype=np.int64)
    if len(requests) <= capacity:
        return requests.copy()
    if keys is None:
        keys = rng.random(len(requests))
    pick = np.argsort(keys, kind="stable")[: int(capacity)]
    return np.sort(requests[pick])


# ---------------------------------------------------------------------------
# rewards


@dataclass
class RewardParams:
    alpha_act: float = 1.0
    r_mask: float = -0.1
    r_shop_offline: float = -1.0
    supply_scale: float = 1 / 0.58
    eth_mask: float = 0.1
    r_ill: object = "calibrated"  # or a constant penalty, e.g. 10000

    def ill_penalty(self, day):
        if isinstance(self.r_ill, str):
            if self.r_ill != "calibrated":
                raise ValueError(f"unknown R_ill schedule {self.r_ill!r}")
            d = np.asarray(day, dtype=np.float64)
            return 4500.0 * ((80.0 - d) / 80.0) ** 4 + 21000.0 * (d / 80.0) ** 4
        return np.full(np.shape(day), float(self.r_ill)) if np.ndim(day) else float(self.r_ill)


REWARD_TERMS = ("activity", "mask", "shop", "supply", "infection", "ethics")


def reward_terms(act, masked, offline, level, q, day, symptomatic, params: RewardParams):
    """Each named reward component; the reward is their sum."""
    act = np.asarray(act, dtype=np.float64)
    masked = np.asarray(masked, dtype=bool)
    symptomatic = np.asarray(symptomatic, dtype=bool)
    activity = params.alpha_act * act
    return {
        "activity": activity,
        "mask": params.r_mask * masked,
        "shop": params.r_shop_offline * np.asarray(offline, dtype=bool),
        "supply": -params.supply_scale * (1.0 - np.asarray(level, dtype=np.float64)),
        "infection": -np.asarray(q, dtype=np.float64) * params.ill_penalty(day),
        "ethics": np.where(symptomatic, -activity - params.eth_mask * ~masked, 0.0),
    }


def compute_reward(action: Action, day, q, level, symptomatic, params: RewardParams):
    terms = reward_terms(action.act, action.mask, action.shop == Shop.OFFLINE, level, q, day, symptomatic, params)
    return float(sum(float(v) for v in terms.values()))


# ---------------------------------------------------------------------------
# metrics

METRIC_COLUMNS = (
    "day", "new_cases", "cum_cases", "hospitalized", "deaths", "isolated", "mask_rate",
    "act0", "act1", "act2", "act3", "shop_off", "shop_on", "reward_chd", "reward_sch", "reward_adu", "reward_rtr",
)


@dataclass
class DayMetrics:
    day: int
    new_cases: int
    cum_cases: int
    hospitalized: int
    deaths: int
    isolated: int
    mask_rate: float
    act0: int
    act1: int
    act2: int
    act3: int
    shop_off: int
    shop_on: int
    reward_chd: float
    reward_sch: float
    reward_adu: float
    reward_rtr: float

    def row(self):
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            out.append(format(v, ".10g") if isinstance(v, float) else str(v))
        return out


def write_metrics_csv(metrics, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for m in metrics:
            w.writerow(m.row())


def read_metrics_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in METRIC_COLUMNS}


# ---------------------------------------------------------------------------
# world


@dataclass
class WorldConfig:
    disease: DiseaseParams = field(default_factory=DiseaseParams)
    reward: RewardParams = field(default_factory=RewardParams)
    schedule: PolicySchedule = field(default_factory=PolicySchedule)
    online_capacity: int | None = None  # None: 17000 scaled by population size
    episode_days: int = 80
    locked_days: int = 10
    seed_sym: int = 2
    seed_inc: int = 8
    record_trace: bool = True
    backend: str | None = None


class World:
    """Mutable simulation state for one population; stepped one day at a time."""

    def __init__(self, pop: Population, cfg: WorldConfig | None = None, seed=0):
        self.pop = pop
        self.cfg = cfg or WorldConfig()
        self.k = kernels.get_backend(self.cfg.backend)
        n = pop.n_agents
        self.n = n
        self.hospitals = pop.facilities_of(FT.HOSPITAL)
        self.households = pop.facilities_of(FT.HOUSEHOLD)
        self.coef = np.zeros(pop.n_facilities)
        nz = pop.fac_cap > 0
        t = pop.fac_type.astype(np.int64)
        self.coef[nz] = self.cfg.disease.beta * INFECTION_COEF[t[nz]] * FREQUENCY[t[nz]] / pop.fac_cap[nz]
        self.hh_coef = self.coef[pop.household]  # per agent
        cap = self.cfg.online_capacity
        self.online_capacity = int(round(17000 * n / REFERENCE_AGENTS)) if cap is None else int(cap)
        self.p_age = np.asarray(self.cfg.disease.p_age)[pop.group]
        self.p_hs = self.cfg.disease.infectivity()
        self.mask_factor = self.cfg.disease.mask_factor
        self.seed_site = seeding_site(pop)
        self.reset(seed)

    # -- lifecycle ------------------------------------------------------
    def reset(self, seed=0):
        n = self.n
        self.seed = int(seed)
        self.day = 0
        self.state = np.zeros(n, dtype=np.int8)
        self.in_hospital = np.zeros(n, dtype=np.uint8)
        self.hospital_of = np.full(n, -1, dtype=np.int32)
        self.days_sym = np.zeros(n, dtype=np.int16)
        self.recovered_day = np.full(n, -1, dtype=np.int32)
        self.last_mask = np.zeros(n, dtype=np.uint8)
        self.supply_days = np.zeros(self.pop.n_facilities, dtype=np.int32)
        self.registry = QuarantineRegistry(n)
        self.trace = ContactTraceLog()
        self.history = {}
        self.beds_free = self.pop.fac_beds[self.hospitals].copy()
        self.cum_cases = 0
        self.cum_discovered = 0
        self.deaths = 0
        self.last_q = np.zeros(n)
        self.last_new_cases = np.zeros(0, dtype=np.int64)
        self.report = generate_disclosure(self.history, 0, self.pop.fac_type)
        self._seed_infections()

    def _seed_infections(self):
        k = self.cfg.seed_sym + self.cfg.seed_inc
        if k == 0:
            return
        d = np.hypot(*(self.pop.home - self.seed_site).T)
        order = np.lexsort((np.arange(self.n), d))[:k]
        sym, inc = order[: self.cfg.seed_sym], order[self.cfg.seed_sym:]
        self.state[sym] = HS.SYM
        self.days_sym[sym] = 1
        self.state[inc] = HS.INC
        self.cum_cases = len(order)
        self.cum_discovered = len(sym)

    def seed_cases(self, sym=(), inc=()):
        """Manually infect agents (used by tests and custom scenarios)."""
        sym = np.asarray(sym, dtype=np.int64)
        inc = np.asarray(inc, dtype=np.int64)
        self.state[sym] = HS.SYM
        self.days_sym[sym] = 1
        self.state[inc] = HS.INC
        self.cum_cases += len(sym) + len(inc)
        self.cum_discovered += len(sym)

    # -- queries -----------------------------------------------------------
    @property
    def obs_dim(self):
        return OBS_ID_DIM if self.cfg.schedule.disclosure else OBS_BASE_DIM

    def acting(self):
        """Agents that choose an action today: alive and not hospitalised."""
        return (self.state != HS.DEA) & (self.in_hospital == 0)

    def visibly_symptomatic(self):
        return np.isin(self.state, SYMPTOMATIC) & (self.in_hospital == 0)

    def supply(self):
        return supply_level(self.supply_days[self.pop.household])

    def observe(self):
        """Observation matrix [N, obs_dim] for the current (start-of-day) state."""
        n = self.n
        obs = np.zeros((n, self.obs_dim), dtype=np.float64)
        obs[np.arange(n), OBS_CLASS[self.state]] = 1.0
        vis = self.visibly_symptomatic() & ~self.registry.isolated
        w = np.where(vis, np.where(self.last_mask > 0, self.mask_factor, 1.0), 0.0)
        per_hh = np.bincount(self.pop.household, weights=w, minlength=self.pop.n_facilities)
        others = per_hh[self.pop.household] - w
        obs[:, 5] = np.minimum(self.hh_coef * self.p_age * np.maximum(others, 0.0), 1.0)
        obs[:, 6] = self.supply()
        obs[:, 7] = self.cum_discovered / 1000.0
        obs[:, 8] = self.day
        if self.cfg.schedule.disclosure:
            obs[:, 9:13] = self.report.surveillance(self.pop.aff)
        return obs

    def build_observation(self, agent):
        return Observation.from_vector(self.observe()[int(agent)])

    def locked_actions(self):
        """Risky default for the first days: act 3, no mask, shop offline when supply is below one half."""
        idx = np.zeros(self.n, dtype=np.int64)
        full = (self.pop.group == AgeGroup.ADU) | (self.pop.group == AgeGroup.RTR)
        low = self.supply() < 0.5
        idx[full] = 3 * 3 + np.where(low[full], Shop.OFFLINE, Shop.NONE)
        idx[~self.acting()] = -1
        return idx

    # -- pipeline ----------------------------------------------------------
    def step(self, actions):
        """Advance one day. Returns (DayMetrics, rewards[N], next observations[N, D]).

        ``actions`` holds one action index per agent; non-acting agents (dead or
        hospitalised) must carry -1 and receive a reward of 0.
        """
        pop, k, day, seed = self.pop, self.k, self.day, self.seed
        n = self.n
        actions = np.asarray(actions, dtype=np.int64)
        acting = self.acting()
        if actions.shape != (n,):
            raise ValueError(f"expected {n} actions, got shape {actions.shape}")
        bad = acting & ((actions < 0) | (actions >= N_ACTIONS[pop.group]))
        if bad.any():
            i = int(np.nonzero(bad)[0][0])
            raise ValueError(f"agent {i}: action {actions[i]} outside its action space")
        actions = np.where(acting, actions, -1)
        symptomatic = self.visibly_symptomatic()

        # (1) government
        sched = self.cfg.schedule
        release_scan(self.registry, self.state, self.recovered_day, day)
        quarantine_scan(self.state, self.days_sym, self.registry, day, sched.quarantine, seed, self.trace)
        eff_cap = capacity_for(pop.fac_type, pop.fac_cap, day, sched)

        # (2) occupancy
        mask, act, shop = decode_actions(pop.group, actions)
        isolated = self.registry.isolated
        active = acting & ~isolated
        shop = np.where(isolated & (shop == Shop.OFFLINE), Shop.NONE, shop).astype(np.int8)
        v_agent, v_fac, v_typ = k.build_visits(pop.aff, active.astype(np.uint8), pop.group, act, shop, VISIT_RULE)
        if len(v_fac):
            sub = day * SUB + v_typ.astype(np.int64)
            key = uniform(seed, Stream.KICKOUT, v_agent, sub, k)
            keep = k.kickout(v_agent, v_fac, key, eff_cap, pop.n_facilities)
            v_agent, v_fac, v_typ = v_agent[keep], v_fac[keep], v_typ[keep]
        v_agent = np.ascontiguousarray(v_agent)
        v_fac = np.ascontiguousarray(v_fac)

        # (3) infection
        mfac = np.where(mask > 0, self.mask_factor, 1.0)
        py = self.p_hs[self.state] * mfac
        px = np.where(self.state == HS.HEA, self.p_age * mfac, 0.0)
        comm = np.where(v_typ == FT.COMMUNITY, act[v_agent] / 2.0, 1.0)
        w_src = np.ascontiguousarray(py[v_agent] * comm)
        w_vic = np.ascontiguousarray(px[v_agent] * comm)
        u = uniform(seed, Stream.INFECT, v_agent, day * SUB + v_typ.astype(np.int64), k) if len(v_fac) else np.zeros(0)
        _, p_vis, q, hit = k.infect(v_agent, v_fac, w_src, w_vic, self.coef, u, n, pop.n_facilities)
        victims = np.nonzero(hit >= 0)[0]
        victim_fac = v_fac[hit[victims]]
        ua = uniform(seed, Stream.ATTRIBUTE, victims, day, k)
        sources = k.attribute(victim_fac, ua, v_agent, v_fac, w_src, pop.n_facilities)
        self._record_disclosure(day, v_agent, v_fac, victim_fac, p_vis)

        # (4) health
        ids = np.arange(n)
        u1 = uniform(seed, Stream.HEALTH_GATE, ids, day, k)
        u2 = uniform(seed, Stream.HEALTH_BRANCH, ids, day, k)
        sev, nhos, hosp = self.cfg.disease.by_group()
        new, days = k.advance_health(self.state, pop.group, self.in_hospital, self.days_sym, u1, u2,
                                     self.cfg.disease.rates(), sev, nhos, hosp)
        old = self.state
        self.cum_discovered += int(((new == HS.SYM) & (old != HS.SYM)).sum())
        recovered = np.isin(new, (HS.IMA, HS.IMS)) & ~np.isin(old, (HS.IMA, HS.IMS))
        self.recovered_day[recovered] = day
        left = (self.in_hospital > 0) & (new != HS.SSY)
        if left.any():
            np.add.at(self.beds_free, self.hospital_of[left], 1)
            self.in_hospital[left] = 0
            self.hospital_of[left] = -1
        died = (new == HS.DEA) & (old != HS.DEA)
        self.deaths += int(died.sum())
        new[victims] = HS.INC
        days[victims] = 0
        self.recovered_day[victims] = -1
        self.state = new
        self.days_sym = days
        self.cum_cases += len(victims)
        self.last_new_cases = victims
        if self.cfg.record_trace and len(victims):
            self.trace.extend(day, victims, victim_fac, sources)
        self._admit()

        # (5) supply
        offline = active & (shop == Shop.OFFLINE)
        requests = np.nonzero(acting & (shop == Shop.ONLINE))[0]
        served = resolve_online_shopping(requests, self.online_capacity,
                                         keys=uniform(seed, Stream.ONLINE_SHOP, requests, day, k))
        success = offline.copy()
        success[served] = True
        got = np.bincount(pop.household[success], minlength=pop.n_facilities) > 0
        self.supply_days = np.where(got, 0, self.supply_days + 1).astype(np.int32)

        # (6) rewards, observations, metrics
        level = self.supply()
        terms = reward_terms(act, mask > 0, offline, level, q, day, symptomatic, self.cfg.reward)
        rewards = np.zeros(n)
        for v in terms.values():
            rewards += v
        rewards[~acting] = 0.0
        self.last_q = q
        self.last_terms = terms
        self.last_mask = np.where(acting, mask, 0).astype(np.uint8)
        self.day = day + 1
        self.report = generate_disclosure(self.history, self.day, pop.fac_type)
        metrics = self._metrics(day, len(victims), acting, mask, act, offline, len(requests), rewards)
        return metrics, rewards, self.observe()

    def _record_disclosure(self, day, v_agent, v_fac, victim_fac, p_vis):
        nf = self.pop.n_facilities
        healthy = self.state[v_agent] == HS.HEA
        if self.cfg.schedule.disclosure_mode == "analytic":
            tot = np.bincount(v_fac[healthy], weights=p_vis[healthy], minlength=nf)
            cnt = np.bincount(v_fac[healthy], minlength=nf)
            rec = np.divide(tot, cnt, out=np.zeros(nf), where=cnt > 0)
        else:
            rec = (np.bincount(victim_fac, minlength=nf).astype(np.float64),
                   np.bincount(v_fac[healthy], minlength=nf).astype(np.float64))
        self.history[day] = rec
        for old in [d for d in self.history if d < day - 2]:
            del self.history[old]

    def _admit(self):
        """Send severe agents without a bed to the nearest hospital with room, in id order."""
        waiting = np.nonzero((self.state == HS.SSY) & (self.in_hospital == 0))[0]
        if len(waiting) == 0 or len(self.hospitals) == 0:
            return
        hxy = self.pop.fac_xy[self.hospitals]
        for a in waiting.tolist():
            j = assign_hospital(self.pop.home[a], hxy, self.beds_free)
            if j is None:
                break
            self.beds_free[j] -= 1
            self.in_hospital[a] = 1
            self.hospital_of[a] = j

    def _metrics(self, day, new_cases, acting, mask, act, offline, n_online, rewards):
        g = self.pop.group
        full = acting & ((g == AgeGroup.ADU) | (g == AgeGroup.RTR))
        hist = np.bincount(act[full], minlength=4)
        n_act = int(acting.sum())
        means = []
        for grp in AgeGroup:
            sel = acting & (g == grp)
            means.append(float(rewards[sel].mean()) if sel.any() else 0.0)
        return DayMetrics(
            day=int(day), new_cases=int(new_cases), cum_cases=int(self.cum_cases),
            hospitalized=int(self.in_hospital.sum()), deaths=int(self.deaths),
            isolated=int(self.registry.isolated.sum()),
            mask_rate=float(mask[acting].mean()) if n_act else 0.0,
            act0=int(hist[0]), act1=int(hist[1]), act2=int(hist[2]), act3=int(hist[3]),
            shop_off=int(offline.sum()), shop_on=int(n_online),
            reward_chd=means[0], reward_sch=means[1], reward_adu=means[2], reward_rtr=means[3],
        )

    def household_rows(self):
        """(day, household_id, x, y, any_infected) rows for the current state."""
        infected = np.isin(self.state, (HS.INC, HS.INA, HS.PRE, HS.ASY, HS.SYM, HS.MSY, HS.SSY))
        anyinf = np.bincount(self.pop.household[infected], minlength=self.pop.n_facilities) > 0
        hh = self.households
        xy = self.pop.fac_xy[hh]
        return [(self.day, int(h), float(x), float(y), int(anyinf[h])) for h, (x, y) in zip(hh, xy)]


def write_household_dump(rows, path, append=False):
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if not append:
            w.writerow(["day", "household_id", "x", "y", "any_infected"])
        for r in rows:
            w.writerow([r[0], r[1], repr(r[2]), repr(r[3]), r[4]])


def step_day(world: World, joint_actions, government: PolicySchedule | None = None):
    """Functional entry point; optionally swaps in a different schedule first."""
    if government is not None:
        world.cfg.schedule = government
    return world.step(joint_actions)
