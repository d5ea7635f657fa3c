"""Synthetic county: agents, facilities and their affiliations.

The population is stored column-wise (one numpy array per attribute) so that a
million agents stay cheap; :class:`Agent` and :class:`Facility` are lightweight
record views produced on demand.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import ndtri


class PopulationError(ValueError):
    pass


class AgeGroup(IntEnum):
    CHD = 0
    SCH = 1
    ADU = 2
    RTR = 3

    @property
    def label(self):
        return self.name.lower()

    @classmethod
    def parse(cls, text):
        try:
            return cls[text.upper()]
        except KeyError:
            raise PopulationError(f"unknown age group {text!r}") from None


class FacilityType(IntEnum):
    HOSPITAL = 0
    HOUSEHOLD = 1
    WORKPLACE = 2
    SCHOOL = 3
    RETAIL = 4
    SUPERMARKET = 5
    COMMUNITY = 6
    LIBRARY = 7
    MUSEUM = 8
    GYM = 9
    RESTAURANT = 10
    STADIUM = 11
    THEATRE = 12
    CINEMA = 13

    @property
    def label(self):
        return self.name.lower()

    @classmethod
    def parse(cls, text):
        try:
            return cls[text.upper()]
        except KeyError:
            raise PopulationError(f"unknown facility type {text!r}") from None


N_TYPES = len(FacilityType)


@dataclass(frozen=True)
class FacilityTraits:
    infection_coef: float  # I_F
    frequency: float  # f_F, visits per day
    min_act: int


FT = FacilityType
TRAITS = {
    FT.HOSPITAL: FacilityTraits(0.0, 0.0, 0),
    FT.HOUSEHOLD: FacilityTraits(0.23, 1.0, 0),
    FT.WORKPLACE: FacilityTraits(0.14, 5 / 7, 0),
    FT.SCHOOL: FacilityTraits(0.21, 5 / 7, 0),
    FT.RETAIL: FacilityTraits(0.09, 1.0, 0),
    FT.SUPERMARKET: FacilityTraits(0.09, 1.0, 0),
    FT.COMMUNITY: FacilityTraits(0.0075, 1.0, 1),
    FT.LIBRARY: FacilityTraits(0.12, 10.5 / 365, 2),
    FT.MUSEUM: FacilityTraits(0.12, 2.5 / 365 * 1 / 0.54, 2),
    FT.GYM: FacilityTraits(0.15, 0.47, 2),
    FT.RESTAURANT: FacilityTraits(0.21, 4.2 / 7, 3),
    FT.STADIUM: FacilityTraits(0.42, 4.7 / 365 * 1 / 0.17, 3),
    FT.THEATRE: FacilityTraits(0.42, 3.8 / 365 * 1 / 0.35, 3),
    FT.CINEMA: FacilityTraits(0.42, 5.3 / 365 * 1 / 0.59, 3),
}
INFECTION_COEF = np.array([TRAITS[t].infection_coef for t in FT])
FREQUENCY = np.array([TRAITS[t].frequency for t in FT])
MIN_ACT = np.array([TRAITS[t].min_act for t in FT], dtype=np.int8)

COMPULSORY = (FT.HOUSEHOLD, FT.WORKPLACE, FT.SCHOOL)

# Reference county (Allegheny): residents and per-group counts.
REFERENCE_AGENTS = 1_188_112
REFERENCE_GROUP_COUNTS = {AgeGroup.CHD: 130_451, AgeGroup.SCH: 114_867, AgeGroup.RTR: 200_011}
REFERENCE_GROUP_COUNTS[AgeGroup.ADU] = REFERENCE_AGENTS - sum(REFERENCE_GROUP_COUNTS.values())


@dataclass(frozen=True)
class FacilitySpec:
    count: int
    mean_capacity: float
    max_capacity: int


# (count, mean capacity, max capacity); hospitals are in beds, doctors listed separately.
REFERENCE_FACILITIES = {
    FT.HOSPITAL: FacilitySpec(14, 384.0, 1542),
    FT.HOUSEHOLD: FacilitySpec(533_919, 2.22527, 13),
    FT.WORKPLACE: FacilitySpec(38_333, 13.5461, 7741),
    FT.SCHOOL: FacilitySpec(338, 517.583, 2239),
    FT.RETAIL: FacilitySpec(601, 247.977, 1533),
    FT.SUPERMARKET: FacilitySpec(87, 1900.97, 5380),
    FT.COMMUNITY: FacilitySpec(358, 3318.75, 15889),
    FT.LIBRARY: FacilitySpec(88, 302.17, 3069),
    FT.MUSEUM: FacilitySpec(78, 77.8333, 2347),
    FT.GYM: FacilitySpec(193, 110.782, 1797),
    FT.RESTAURANT: FacilitySpec(2691, 201.458, 3462),
    FT.STADIUM: FacilitySpec(3, 3963.33, 3976),
    FT.THEATRE: FacilitySpec(59, 159.576, 758),
    FT.CINEMA: FacilitySpec(36, 367.917, 3811),
}
HOSPITAL_DOCTORS = FacilitySpec(14, 1577.43, 8613)  # recorded, not simulated

PRIORITY_RADIUS_KM = {
    FT.RETAIL: 2.0,
    FT.SUPERMARKET: 5.0,
    FT.RESTAURANT: 5.0,
    FT.GYM: 5.0,
    FT.COMMUNITY: 5.0,
    FT.THEATRE: 10.0,
    FT.CINEMA: 10.0,
    FT.LIBRARY: 10.0,
    FT.MUSEUM: 10.0,
    FT.STADIUM: 35.0,
}
REFERENCE_SIDE_KM = 35.0


@dataclass
class Agent:
    id: int
    age_group: AgeGroup
    home_location: tuple
    household_id: int
    affiliations: dict = field(default_factory=dict)


@dataclass
class Facility:
    id: int
    ftype: FacilityType
    location: tuple
    capacity: int
    beds: int | None = None


@dataclass
class PopulationConfig:
    agent_count: int = REFERENCE_AGENTS
    age_fractions: tuple = tuple(REFERENCE_GROUP_COUNTS[g] / REFERENCE_AGENTS for g in AgeGroup)
    facilities: dict = field(default_factory=lambda: dict(REFERENCE_FACILITIES))
    # scale facility counts by agent_count / REFERENCE_AGENTS (at least one per listed type)
    scale_facilities: bool = True
    radii_km: dict = field(default_factory=lambda: dict(PRIORITY_RADIUS_KM))
    side_km: float | None = None  # default keeps the reference density
    town_centers: int = 5
    town_spread: float = 0.2  # Gaussian sigma as a fraction of the side
    facility_locations: dict = field(default_factory=dict)  # type -> list of (x, y); fixes count and placement
    seed: int = 0

    def __post_init__(self):
        fr = np.asarray(self.age_fractions, dtype=float)
        if fr.shape != (4,) or (fr < 0).any() or abs(fr.sum() - 1.0) > 1e-9:
            raise PopulationError(f"age fractions must be 4 non-negative values summing to 1, got {self.age_fractions}")
        if self.agent_count < 1:
            raise PopulationError("agent_count must be positive")
        self.facilities = {FT(k) if not isinstance(k, str) else FT.parse(k): v for k, v in self.facilities.items()}
        self.facilities = {k: v if isinstance(v, FacilitySpec) else FacilitySpec(*v) for k, v in self.facilities.items()}
        self.radii_km = {FT(k) if not isinstance(k, str) else FT.parse(k): float(v) for k, v in self.radii_km.items()}
        self.facility_locations = {
            (FT(k) if not isinstance(k, str) else FT.parse(k)): np.asarray(v, dtype=np.float64).reshape(-1, 2)
            for k, v in self.facility_locations.items()
        }
        for t in self.facility_locations:
            if t not in self.facilities:
                raise PopulationError(f"{t.label}: locations given but no capacity distribution configured")

    @property
    def side(self):
        if self.side_km is not None:
            return float(self.side_km)
        return REFERENCE_SIDE_KM * math.sqrt(self.agent_count / REFERENCE_AGENTS)

    def facility_count(self, ftype):
        if ftype in self.facility_locations:
            return len(self.facility_locations[ftype])
        spec = self.facilities.get(ftype)
        if spec is None or spec.count <= 0:
            return 0
        if not self.scale_facilities:
            return int(spec.count)
        return max(1, int(round(spec.count * self.agent_count / REFERENCE_AGENTS)))

    def group_counts(self):
        return apportion(self.agent_count, self.age_fractions)


def apportion(total, fractions):
    """Largest-remainder rounding of ``total * fractions`` to integers summing to total."""
    fr = np.asarray(fractions, dtype=float)
    raw = fr * total
    base = np.floor(raw + 1e-9).astype(np.int64)
    rem = raw - base
    short = int(total - base.sum())
    if short > 0:
        order = np.argsort(-rem, kind="stable")
        base[order[:short]] += 1
    return base


class Population:
    """Column store of agents and facilities."""

    def __init__(self, group, home, household, aff, fac_type, fac_xy, fac_cap, fac_beds):
        self.group = np.asarray(group, dtype=np.int8)
        self.home = np.asarray(home, dtype=np.float64).reshape(-1, 2)
        self.household = np.asarray(household, dtype=np.int32)
        self.aff = np.ascontiguousarray(aff, dtype=np.int32)
        self.fac_type = np.asarray(fac_type, dtype=np.int8)
        self.fac_xy = np.asarray(fac_xy, dtype=np.float64).reshape(-1, 2)
        self.fac_cap = np.asarray(fac_cap, dtype=np.int64)
        self.fac_beds = np.asarray(fac_beds, dtype=np.int64)

    @property
    def n_agents(self):
        return len(self.group)

    @property
    def n_facilities(self):
        return len(self.fac_type)

    def agent(self, i):
        i = int(i)
        affs = {FT(t): int(f) for t, f in enumerate(self.aff[i]) if f >= 0 and t != FT.HOUSEHOLD}
        return Agent(i, AgeGroup(int(self.group[i])), tuple(self.home[i]), int(self.household[i]), affs)

    def facility(self, j):
        j = int(j)
        t = FT(int(self.fac_type[j]))
        beds = int(self.fac_beds[j]) if t == FT.HOSPITAL else None
        return Facility(j, t, tuple(self.fac_xy[j]), int(self.fac_cap[j]), beds)

    def agents(self):
        return (self.agent(i) for i in range(self.n_agents))

    def facilities(self):
        return (self.facility(j) for j in range(self.n_facilities))

    def facilities_of(self, ftype):
        return np.nonzero(self.fac_type == int(ftype))[0]

    def group_counts(self):
        return np.bincount(self.group, minlength=4)

    def household_sizes(self):
        return np.bincount(self.household, minlength=self.n_facilities)[self.facilities_of(FT.HOUSEHOLD)]

    def same_as(self, other):
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("group", "home", "household", "aff", "fac_type", "fac_xy", "fac_cap", "fac_beds")
        )

    def validate(self):
        """Check every agent/facility invariant; raises PopulationError."""
        n, nf = self.n_agents, self.n_facilities
        if self.aff.shape != (n, N_TYPES):
            raise PopulationError("affiliation table has the wrong shape")
        if (self.fac_cap < 1).any():
            bad = int(np.nonzero(self.fac_cap < 1)[0][0])
            raise PopulationError(f"facility {bad}: capacity must be >= 1")
        if (self.group < 0).any() or (self.group > 3).any():
            raise PopulationError("invalid age group code")
        if (self.household < 0).any() or (self.household >= nf).any():
            bad = int(np.nonzero((self.household < 0) | (self.household >= nf))[0][0])
            raise PopulationError(f"agent {bad}: household id out of range")
        if (self.fac_type[self.household] != FT.HOUSEHOLD).any():
            bad = int(np.nonzero(self.fac_type[self.household] != FT.HOUSEHOLD)[0][0])
            raise PopulationError(f"agent {bad}: household id does not name a household")
        if not np.array_equal(self.aff[:, FT.HOUSEHOLD], self.household):
            raise PopulationError("household column disagrees with household ids")
        present = self.aff >= 0
        if (self.aff >= nf).any():
            bad = int(np.nonzero((self.aff >= nf).any(axis=1))[0][0])
            raise PopulationError(f"agent {bad}: affiliation to nonexistent facility")
        types = np.where(present, self.fac_type[np.where(present, self.aff, 0)], -1)
        mismatch = present & (types != np.arange(N_TYPES)[None, :])
        if mismatch.any():
            bad = int(np.nonzero(mismatch.any(axis=1))[0][0])
            raise PopulationError(f"agent {bad}: affiliation type does not match facility type")
        if present[:, FT.HOSPITAL].any():
            raise PopulationError("agents are never statically affiliated to hospitals")
        bad_work = present[:, FT.WORKPLACE] & (self.group != AgeGroup.ADU)
        bad_school = present[:, FT.SCHOOL] & (self.group != AgeGroup.SCH)
        if bad_work.any() or bad_school.any():
            bad = int(np.nonzero(bad_work | bad_school)[0][0])
            raise PopulationError(f"agent {bad}: school/workplace affiliation not allowed for its age group")
        return self


# ---------------------------------------------------------------------------
# synthesis


def lognormal_params(mean, maximum, count):
    """(mu, sigma) of a log-normal with the given mean whose expected sample max is ``maximum``."""
    if maximum <= mean:
        return math.log(mean), 0.0
    z = float(ndtri(1.0 - 1.0 / (max(count, 1) + 1.0)))
    gap = math.log(maximum / mean)
    disc = z * z - 2.0 * gap
    sigma = z - math.sqrt(disc) if disc >= 0 else z
    mu = math.log(mean) - sigma * sigma / 2.0
    return mu, sigma


def sample_capacities(spec, count, rng):
    mu, sigma = lognormal_params(spec.mean_capacity, spec.max_capacity, spec.count)
    cap = np.rint(rng.lognormal(mu, sigma, size=count)) if sigma > 0 else np.full(count, round(spec.mean_capacity))
    return np.clip(cap, 1, spec.max_capacity).astype(np.int64)


def hilbert_index(x, y, order=16):
    """Hilbert-curve index of integer grid points in [0, 2**order)."""
    x = np.asarray(x, dtype=np.int64).copy()
    y = np.asarray(y, dtype=np.int64).copy()
    d = np.zeros_like(x)
    s = 1 << (order - 1)
    while s > 0:
        rx = (x & s) > 0
        ry = (y & s) > 0
        d += s * s * ((3 * rx) ^ ry)
        flip = ~ry
        swap_x = flip & rx
        x[swap_x] = s - 1 - x[swap_x]
        y[swap_x] = s - 1 - y[swap_x]
        tmp = x[flip].copy()
        x[flip] = y[flip]
        y[flip] = tmp
        s >>= 1
    return d


def _curve_key(xy, side, order=16):
    g = np.clip((xy / side * ((1 << order) - 1)).astype(np.int64), 0, (1 << order) - 1)
    return hilbert_index(g[:, 0], g[:, 1], order)


def _balanced_assign(agent_xy, fac_ids, fac_xy, fac_cap, side):
    """Assign agents to facilities along a Hilbert curve, shares proportional to capacity.

    Neighbouring agents land in nearby facilities and every facility receives
    about ``cap * demand / total_capacity`` members.
    """
    n = len(agent_xy)
    out = np.empty(n, dtype=np.int32)
    if n == 0:
        return out
    forder = np.argsort(_curve_key(fac_xy, side), kind="stable")
    cum = np.cumsum(fac_cap[forder]).astype(np.float64)
    cum *= n / cum[-1]
    aorder = np.argsort(_curve_key(agent_xy, side), kind="stable")
    slot = np.searchsorted(cum, np.arange(n) + 0.5, side="right")
    slot = np.minimum(slot, len(forder) - 1)
    out[aorder] = fac_ids[forder[slot]]
    return out


def _household_sizes(n_agents, n_households, mean_size, max_size, rng):
    sizes = 1 + rng.poisson(max(mean_size - 1.0, 0.0), size=n_households)
    sizes = np.clip(sizes, 1, max_size)
    diff = n_agents - int(sizes.sum())
    while diff != 0:
        if diff > 0:
            cand = np.nonzero(sizes < max_size)[0]
            pick = rng.choice(cand, size=min(diff, len(cand)), replace=False)
            sizes[pick] += 1
        else:
            cand = np.nonzero(sizes > 1)[0]
            pick = rng.choice(cand, size=min(-diff, len(cand)), replace=False)
            sizes[pick] -= 1
        diff = n_agents - int(sizes.sum())
    return sizes


def synthesize_population(cfg: PopulationConfig) -> Population:
    """Build a synthetic county from ``cfg``; deterministic in ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.agent_count
    side = cfg.side
    counts = cfg.group_counts()
    group = np.repeat(np.arange(4, dtype=np.int8), counts)
    rng.shuffle(group)

    # households: one adult or retiree heads each, the rest fill remaining slots
    hh_spec = cfg.facilities.get(FT.HOUSEHOLD)
    if hh_spec is None:
        raise PopulationError("household: no households configured")
    n_hh = min(cfg.facility_count(FT.HOUSEHOLD), n)
    heads_pool = np.nonzero((group == AgeGroup.ADU) | (group == AgeGroup.RTR))[0]
    if n_hh < 1 or n_hh * hh_spec.max_capacity < n:
        raise PopulationError(f"household: {n_hh} households of at most {hh_spec.max_capacity} cannot host {n} agents")
    if len(heads_pool) < n_hh:
        raise PopulationError(f"household: {n_hh} households need an adult or retiree each, only {len(heads_pool)} exist")
    sizes = _household_sizes(n, n_hh, n / n_hh, hh_spec.max_capacity, rng)
    heads = rng.choice(heads_pool, size=n_hh, replace=False)
    rest = np.setdiff1d(np.arange(n), heads)
    rng.shuffle(rest)
    hh_local = np.empty(n, dtype=np.int64)
    hh_local[heads] = np.arange(n_hh)
    hh_local[rest] = np.repeat(np.arange(n_hh), sizes - 1)

    # facilities: households first, then every other type in enum order
    centers = rng.uniform(0.2 * side, 0.8 * side, size=(max(cfg.town_centers, 1), 2))
    weights = rng.dirichlet(np.full(len(centers), 2.0))
    sigma = cfg.town_spread * side

    def clustered(k):
        which = rng.choice(len(centers), size=k, p=weights)
        pts = centers[which] + rng.normal(0.0, sigma, size=(k, 2))
        return np.clip(pts, 0.0, side)

    ftypes, fxy, fcap, fbeds = [], [], [], []
    hh_xy = rng.uniform(0.0, side, size=(n_hh, 2))
    ftypes.append(np.full(n_hh, FT.HOUSEHOLD, dtype=np.int8))
    fxy.append(hh_xy)
    fcap.append(sizes.astype(np.int64))
    fbeds.append(np.zeros(n_hh, dtype=np.int64))
    offset = n_hh
    type_ids = {FT.HOUSEHOLD: np.arange(n_hh)}
    for t in FT:
        if t == FT.HOUSEHOLD:
            continue
        k = cfg.facility_count(t)
        if k == 0:
            type_ids[t] = np.zeros(0, dtype=np.int64)
            continue
        cap = sample_capacities(cfg.facilities[t], k, rng)
        ftypes.append(np.full(k, t, dtype=np.int8))
        fxy.append(cfg.facility_locations[t] if t in cfg.facility_locations else clustered(k))
        fcap.append(cap)
        fbeds.append(cap.copy() if t == FT.HOSPITAL else np.zeros(k, dtype=np.int64))
        type_ids[t] = np.arange(offset, offset + k)
        offset += k
    fac_type = np.concatenate(ftypes)
    fac_xy = np.concatenate(fxy)
    fac_cap = np.concatenate(fcap)
    fac_beds = np.concatenate(fbeds)

    household = hh_local.astype(np.int32)
    home = hh_xy[hh_local]
    aff = np.full((n, N_TYPES), -1, dtype=np.int32)
    aff[:, FT.HOUSEHOLD] = household

    for t, grp in ((FT.SCHOOL, AgeGroup.SCH), (FT.WORKPLACE, AgeGroup.ADU)):
        who = np.nonzero(group == grp)[0]
        if len(who) == 0:
            continue
        ids = type_ids[t]
        if len(ids) == 0 or fac_cap[ids].sum() == 0:
            raise PopulationError(f"{t.label}: no capacity configured for {len(who)} {grp.label} agents")
        aff[who, t] = _balanced_assign(home[who], ids, fac_xy[ids], fac_cap[ids], side)

    for t, radius in cfg.radii_km.items():
        ids = type_ids.get(t, ())
        if len(ids) == 0:
            continue
        tree = cKDTree(fac_xy[ids])
        dist, which = tree.query(hh_xy, k=1, distance_upper_bound=radius)
        hh_choice = np.where(np.isfinite(dist), ids[np.minimum(which, len(ids) - 1)], -1)
        aff[:, t] = hh_choice[hh_local]

    return Population(group, home, household, aff, fac_type, fac_xy, fac_cap, fac_beds)


def seeding_site(pop: Population, radius_km=2.0):
    """Location standing in for the first-case hospital: the hospital nearest the densest facility cluster."""
    venues = np.nonzero((pop.fac_type != FT.HOUSEHOLD) & (pop.fac_type != FT.HOSPITAL))[0]
    if len(venues) == 0:
        return pop.home.mean(axis=0)
    pts = pop.fac_xy[venues]
    density = cKDTree(pts).query_ball_point(pts, r=radius_km, return_length=True)
    center = pts[int(np.argmax(density))]
    hospitals = pop.facilities_of(FT.HOSPITAL)
    if len(hospitals) == 0:
        return center
    d = np.hypot(*(pop.fac_xy[hospitals] - center).T)
    return pop.fac_xy[hospitals[int(np.argmin(d))]]


def assign_hospital(location, hospital_xy, free_beds):
    """Index of the nearest hospital with a free bed, or None when all are full."""
    free = np.asarray(free_beds) > 0
    if not free.any():
        return None
    d = np.hypot(*(np.asarray(hospital_xy, dtype=float) - np.asarray(location, dtype=float)).T)
    d = np.where(free, d, np.inf)
    return int(np.argmin(d))


# ---------------------------------------------------------------------------
# text format


HEADER = "# mpsim population v1"


def save_population(pop: Population, path):
    """Write the line-delimited ``F``/``A`` record format."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(HEADER + "\n")
        for j in range(pop.n_facilities):
            t = FT(int(pop.fac_type[j]))
            x, y = (float(v) for v in pop.fac_xy[j])
            line = f"F {j} {t.label} {x!r} {y!r} {int(pop.fac_cap[j])}"
            if t == FT.HOSPITAL:
                line += f" {int(pop.fac_beds[j])}"
            fh.write(line + "\n")
        labels = [t.label for t in FT]
        for i in range(pop.n_agents):
            x, y = (float(v) for v in pop.home[i])
            row = pop.aff[i]
            extra = " ".join(f"{labels[t]}={row[t]}" for t in range(N_TYPES) if row[t] >= 0 and t != FT.HOUSEHOLD)
            line = f"A {i} {AgeGroup(int(pop.group[i])).label} {x!r} {y!r} {int(pop.household[i])}"
            fh.write(line + (" " + extra if extra else "") + "\n")


def load_population(path) -> Population:
    """Parse and validate a population file; errors carry the line number."""
    ftypes, fxy, fcap, fbeds = [], [], [], []
    groups, homes, households, affs = [], [], [], []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tok = line.split()
            try:
                if tok[0] == "F":
                    if groups:
                        raise PopulationError("facility record after agent records")
                    if len(tok) not in (6, 7):
                        raise PopulationError("facility record needs 5 or 6 fields")
                    if int(tok[1]) != len(ftypes):
                        raise PopulationError(f"facility id {tok[1]} is not dense (expected {len(ftypes)})")
                    t = FT.parse(tok[2])
                    cap = int(tok[5])
                    if cap < 1:
                        raise PopulationError("capacity must be >= 1")
                    ftypes.append(int(t))
                    fxy.append((float(tok[3]), float(tok[4])))
                    fcap.append(cap)
                    if t == FT.HOSPITAL:
                        fbeds.append(int(tok[6]) if len(tok) == 7 else cap)
                    else:
                        if len(tok) == 7:
                            raise PopulationError("only hospitals carry a bed count")
                        fbeds.append(0)
                elif tok[0] == "A":
                    if len(tok) < 6:
                        raise PopulationError("agent record needs at least 5 fields")
                    if int(tok[1]) != len(groups):
                        raise PopulationError(f"agent id {tok[1]} is not dense (expected {len(groups)})")
                    g = AgeGroup.parse(tok[2])
                    hh = int(tok[5])
                    row = [-1] * N_TYPES
                    row[FT.HOUSEHOLD] = hh
                    for item in tok[6:]:
                        key, _, val = item.partition("=")
                        t = FT.parse(key)
                        if t == FT.HOUSEHOLD:
                            raise PopulationError("household is given positionally, not as an affiliation")
                        if row[t] >= 0:
                            raise PopulationError(f"duplicate {t.label} affiliation")
                        row[t] = int(val)
                    for t, f in enumerate(row):
                        if f >= 0 and (f >= len(ftypes) or ftypes[f] != t):
                            what = "nonexistent facility" if f >= len(ftypes) else "facility of another type"
                            raise PopulationError(f"agent {tok[1]}: {FT(t).label}={f} refers to a {what}")
                    groups.append(int(g))
                    homes.append((float(tok[3]), float(tok[4])))
                    households.append(hh)
                    affs.append(row)
                else:
                    raise PopulationError(f"unknown record kind {tok[0]!r}")
            except PopulationError as exc:
                raise PopulationError(f"line {lineno}: {exc}") from None
            except (ValueError, IndexError) as exc:
                raise PopulationError(f"line {lineno}: malformed record ({exc})") from None
    if not groups:
        raise PopulationError("population file contains no agents")
    pop = Population(
        groups,
        np.array(homes, dtype=np.float64),
        households,
        np.array(affs, dtype=np.int32),
        ftypes,
        np.array(fxy, dtype=np.float64).reshape(-1, 2),
        fcap,
        fbeds,
    )
    return pop.validate()
