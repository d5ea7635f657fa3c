"""Government interventions: capacity schedules, information disclosure, quarantine."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .epidemic import HealthState as HS
from .population import MIN_ACT, N_TYPES, FacilityType as FT
from .rng import Stream, uniform

QUARANTINE_MODES = ("none", "weak", "strong")
UNRESTRICTED = (FT.HOSPITAL, FT.HOUSEHOLD)  # never covered by "others"
WEAK_DISCOVERY = 1 / 3
TRACE_PROB = 0.4
SYMPTOM_DAYS = 3
RELEASE_DELAY = 9
REPORT_LAG = 2


def _expand(rule, previous=None):
    """Turn ``{type: fraction, "others": x}`` into a full per-type fraction vector."""
    frac = np.ones(N_TYPES) if previous is None else previous.copy()
    others = rule.get("others")
    if others is not None:
        for t in FT:
            if t not in UNRESTRICTED:
                frac[t] = float(others)
    for key, val in rule.items():
        if key == "others":
            continue
        t = FT.parse(key) if isinstance(key, str) else FT(key)
        frac[t] = float(val)
    frac[FT.HOSPITAL] = 1.0
    return frac


@dataclass
class PolicySchedule:
    """Day-indexed capacity rules plus the disclosure flag and quarantine mode.

    ``rules`` is a list of ``(start_day, {type: fraction})``; a type not named in
    a rule keeps the fraction it had under the previous rule (``"others"`` sets
    every type except households and hospitals).
    """

    rules: list = field(default_factory=list)
    disclosure: bool = False
    quarantine: str = "none"
    disclosure_mode: str = "empirical"  # or "analytic"

    def __post_init__(self):
        if self.quarantine not in QUARANTINE_MODES:
            raise ValueError(f"quarantine must be one of {QUARANTINE_MODES}, got {self.quarantine!r}")
        if self.disclosure_mode not in ("empirical", "analytic"):
            raise ValueError("disclosure_mode must be 'empirical' or 'analytic'")
        days = [int(d) for d, _ in self.rules]
        if any(b <= a for a, b in zip(days, days[1:])):
            raise ValueError("schedule start days must be strictly increasing")
        self._days = np.array(days, dtype=np.int64)
        self._table = []
        prev = None
        for _, rule in self.rules:
            for key, val in rule.items():
                if not 0.0 <= float(val) <= 1.0:
                    raise ValueError(f"capacity fraction for {key} must lie in [0, 1]")
            prev = _expand(rule, prev)
            self._table.append(prev)

    @classmethod
    def reference(cls, disclosure=False, quarantine="none"):
        """The county's historical timeline (stay-at-home, yellow, green, restaurant rules)."""
        green = {"others": 0.5, "workplace": 0.75, "community": 1.0, "supermarket": 1.0, "retail": 1.0}
        rules = [
            (10, {"others": 0.0, "workplace": 0.25, "supermarket": 1.0, "community": 1.0, "retail": 1.0}),
            (62, {"workplace": 0.5, "community": 1.0, "supermarket": 1.0, "retail": 1.0, "restaurant": 0.25}),
            (82, {**green, "school": 0.0}),
            (110, {**green, "school": 0.0, "restaurant": 0.0}),
            (116, {**green, "school": 0.0, "restaurant": 0.1}),
            (123, {**green, "school": 0.0, "restaurant": 0.35}),
        ]
        return cls(rules, disclosure, quarantine)

    @classmethod
    def from_config(cls, entries, disclosure=False, quarantine="none", disclosure_mode="empirical"):
        if entries == "reference":
            sched = cls.reference(disclosure, quarantine)
            sched.disclosure_mode = disclosure_mode
            return sched
        rules = []
        for item in entries or []:
            item = dict(item)
            day = int(item.pop("day"))
            rules.append((day, item))
        return cls(rules, disclosure, quarantine, disclosure_mode)

    def fractions_at(self, day):
        """Capacity fraction per facility type in force on ``day``."""
        k = int(np.searchsorted(self._days, day, side="right")) - 1
        return np.ones(N_TYPES) if k < 0 else self._table[k]

    def to_config(self):
        out = []
        for day, rule in self.rules:
            out.append({"day": int(day), **{(k if isinstance(k, str) else FT(k).label): float(v) for k, v in rule.items()}})
        return out


def capacity_for(fac_type, capacity, day, schedule: PolicySchedule):
    """Effective capacity floor(C_F * fraction); scalars or arrays."""
    frac = schedule.fractions_at(day)[np.asarray(fac_type, dtype=np.int64)]
    return np.floor(np.asarray(capacity, dtype=np.float64) * frac + 1e-9).astype(np.int64)


@dataclass
class DisclosureReport:
    day: int
    probability: np.ndarray  # per facility; households always 0

    def surveillance(self, aff):
        """o_sur per agent: 1 - prod(1 - p_f) over affiliated facilities of each MinAct group."""
        aff = np.asarray(aff)
        n = aff.shape[0]
        keep = np.ones((n, 4))
        for t in range(N_TYPES):
            if t in UNRESTRICTED:
                continue
            col = aff[:, t]
            has = col >= 0
            p = np.where(has, self.probability[np.where(has, col, 0)], 0.0)
            keep[:, MIN_ACT[t]] *= 1.0 - p
        return 1.0 - keep


def generate_disclosure(history, day, fac_type, n_facilities=None):
    """Publish day ``day``'s report from the statistics recorded on ``day - 2``.

    ``history`` maps a day to ``(new_infections, healthy_occupants)`` arrays
    per facility, or to a ready-made probability array (analytic mode).
    """
    n_fac = len(fac_type) if n_facilities is None else n_facilities
    prob = np.zeros(n_fac)
    src = day - REPORT_LAG
    if src >= 0 and src in history:
        rec = history[src]
        if isinstance(rec, tuple):
            inf, healthy = rec
            np.divide(inf, healthy, out=prob, where=healthy > 0)
        else:
            prob[:] = rec
        prob[np.asarray(fac_type) == FT.HOUSEHOLD] = 0.0
        prob[np.asarray(fac_type) == FT.HOSPITAL] = 0.0
        np.clip(prob, 0.0, 1.0, out=prob)
    return DisclosureReport(day, prob)


@dataclass
class QuarantineRegistry:
    n_agents: int
    isolated: np.ndarray = None
    since: np.ndarray = None
    ledger: list = field(default_factory=list)

    def __post_init__(self):
        if self.isolated is None:
            self.isolated = np.zeros(self.n_agents, dtype=bool)
        if self.since is None:
            self.since = np.full(self.n_agents, -1, dtype=np.int32)

    def isolate(self, ids, day):
        ids = np.asarray(ids, dtype=np.int64)
        ids = ids[~self.isolated[ids]]
        self.isolated[ids] = True
        self.since[ids] = day
        self.ledger.extend((int(day), int(i), "isolate") for i in ids)
        return ids

    def release(self, ids, day):
        ids = np.asarray(ids, dtype=np.int64)
        self.isolated[ids] = False
        self.since[ids] = -1
        self.ledger.extend((int(day), int(i), "release") for i in ids)
        return ids

    def drop(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        self.isolated[ids] = False
        self.since[ids] = -1

    def members(self):
        return np.nonzero(self.isolated)[0]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["day", "agent", "action"])
            w.writerows(self.ledger)


def quarantine_scan(state, days_sym, registry: QuarantineRegistry, day, mode, seed, trace_log=None):
    """Discover symptomatic agents (and in strong mode their traced victims); isolates them.

    Returns the newly isolated ids (sorted).
    """
    if mode == "none":
        return np.zeros(0, dtype=np.int64)
    if mode not in QUARANTINE_MODES:
        raise ValueError(f"unknown quarantine mode {mode!r}")
    state = np.asarray(state)
    eligible = np.nonzero((np.asarray(days_sym) >= SYMPTOM_DAYS) & (state != HS.DEA) & ~registry.isolated)[0]
    if mode == "weak":
        u = uniform(seed, Stream.QUARANTINE, eligible, day)
        found = eligible[u < WEAK_DISCOVERY]
        return registry.isolate(found, day)
    found = registry.isolate(eligible, day)
    if trace_log is None or len(found) == 0:
        return found
    victims = []
    for src in found.tolist():
        victims.extend(trace_log.attributed_victims(src))
    if not victims:
        return found
    victims = np.unique(np.asarray(victims, dtype=np.int64))
    victims = victims[~registry.isolated[victims] & (state[victims] != HS.DEA)]
    u = uniform(seed, Stream.TRACE, victims, day)
    traced = registry.isolate(victims[u < TRACE_PROB], day)
    return np.union1d(found, traced)


def release_scan(registry: QuarantineRegistry, state, recovered_day, day):
    """Release isolates recovered at least 9 days ago; silently drop the dead. Returns released ids."""
    members = registry.members()
    if len(members) == 0:
        return members
    st = np.asarray(state)[members]
    dead = members[st == HS.DEA]
    registry.drop(dead)
    rec = np.asarray(recovered_day)[members]
    ok = (st != HS.DEA) & (rec >= 0) & (day >= rec + RELEASE_DELAY)
    return registry.release(members[ok], day)
