"""Shared fixtures: hand-built populations with exactly known membership."""
import numpy as np
import pytest

from mpsim.environment import World, WorldConfig
from mpsim.population import N_TYPES, AgeGroup, FacilityType as FT, Population, PopulationConfig, synthesize_population


def hand_population(households, extras=(), memberships=None, hospital_beds=10, hh_capacity=None):
    """Build a Population from explicit lists.

    households: list of lists of AgeGroup codes, one list per household.
    extras: list of (FacilityType, capacity, (x, y)) for non-household facilities.
    memberships: {agent_id: {FacilityType: extra_index}} affiliations into ``extras``.
    A single hospital with ``hospital_beds`` beds is always appended last.
    """
    group, household, home = [], [], []
    fac_type, fac_xy, fac_cap = [], [], []
    for h, members in enumerate(households):
        xy = (1.0 + h, 1.0)
        fac_type.append(FT.HOUSEHOLD)
        fac_xy.append(xy)
        fac_cap.append(hh_capacity or len(members))
        for g in members:
            group.append(int(g))
            household.append(h)
            home.append(xy)
    base = len(fac_type)
    for t, cap, xy in extras:
        fac_type.append(t)
        fac_cap.append(cap)
        fac_xy.append(xy)
    fac_type.append(FT.HOSPITAL)
    fac_cap.append(hospital_beds)
    fac_xy.append((50.0, 50.0))
    n = len(group)
    aff = np.full((n, N_TYPES), -1, dtype=np.int32)
    aff[:, FT.HOUSEHOLD] = household
    for a, m in (memberships or {}).items():
        for t, j in m.items():
            aff[a, t] = base + j
    beds = np.where(np.array(fac_type) == FT.HOSPITAL, fac_cap, 0)
    pop = Population(group, home, household, aff, fac_type, fac_xy, fac_cap, beds)
    return pop.validate()


def quiet_world(pop, **kw):
    """World with no seeded cases and trace recording on."""
    cfg = WorldConfig(seed_sym=0, seed_inc=0, **kw)
    return World(pop, cfg, seed=kw.pop("seed", 0) if "seed" in kw else 0)


@pytest.fixture(scope="session")
def small_pop():
    return synthesize_population(PopulationConfig(agent_count=2000, seed=3))


@pytest.fixture(scope="session")
def tiny_pop():
    return synthesize_population(PopulationConfig(agent_count=300, seed=5))


ADU, RTR, CHD, SCH = AgeGroup.ADU, AgeGroup.RTR, AgeGroup.CHD, AgeGroup.SCH
