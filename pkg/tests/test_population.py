import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from mpsim.population import (
    FREQUENCY, INFECTION_COEF, MIN_ACT, N_TYPES, REFERENCE_AGENTS, AgeGroup, FacilityType as FT,
    PopulationConfig, PopulationError, apportion, assign_hospital, lognormal_params, load_population,
    save_population, synthesize_population,
)


def test_traits_table():
    assert (INFECTION_COEF[FT.HOUSEHOLD], FREQUENCY[FT.HOUSEHOLD], MIN_ACT[FT.HOUSEHOLD]) == (0.23, 1.0, 0)
    assert INFECTION_COEF[FT.RESTAURANT] == 0.21
    assert FREQUENCY[FT.RESTAURANT] == pytest.approx(4.2 / 7)
    assert MIN_ACT[FT.RESTAURANT] == 3
    assert len(INFECTION_COEF) == len(FREQUENCY) == len(MIN_ACT) == N_TYPES == 14


def test_reference_group_counts():
    counts = PopulationConfig().group_counts()
    assert counts[AgeGroup.CHD] == 130_451
    assert counts[AgeGroup.SCH] == 114_867
    assert counts[AgeGroup.RTR] == 200_011
    assert counts.sum() == REFERENCE_AGENTS


def test_minimal_county():
    cfg = PopulationConfig(agent_count=1, age_fractions=(0, 0, 0, 1), facilities={"household": (1, 1, 1)})
    pop = synthesize_population(cfg).validate()
    assert pop.n_agents == 1 and pop.n_facilities == 1
    row = pop.aff[0]
    assert row[FT.HOUSEHOLD] == 0 and (np.delete(row, FT.HOUSEHOLD) == -1).all()
    assert pop.agent(0).affiliations == {}


def _nearest_oracle(pop, t, radius):
    ids = pop.facilities_of(t)
    out = np.full(pop.n_agents, -1)
    for i in range(pop.n_agents):
        best, bd = -1, np.inf
        for j in ids:
            d = np.hypot(*(pop.fac_xy[j] - pop.home[i]))
            if d <= radius and d < bd:
                best, bd = j, d
        out[i] = best
    return out


def test_fixed_supermarkets_nearest():
    cfg = PopulationConfig(agent_count=100, seed=4, facility_locations={"supermarket": [(0.05, 0.05), (0.3, 0.2)]})
    pop = synthesize_population(cfg)
    want = _nearest_oracle(pop, FT.SUPERMARKET, cfg.radii_km[FT.SUPERMARKET])
    assert np.array_equal(pop.aff[:, FT.SUPERMARKET], want)
    assert (want >= 0).all()


@settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(50, 600), st.integers(0, 10_000), st.floats(0.5, 10.0))
def test_affiliation_is_nearest_within_radius(n, seed, side):
    cfg = PopulationConfig(agent_count=n, seed=seed, side_km=side)
    pop = synthesize_population(cfg).validate()
    for t, r in cfg.radii_km.items():
        if len(pop.facilities_of(t)):
            assert np.array_equal(pop.aff[:, t], _nearest_oracle(pop, t, r)), t.label


@settings(max_examples=30, deadline=None)
@given(st.integers(20, 3000), st.integers(0, 10_000))
def test_structural_invariants(n, seed):
    cfg = PopulationConfig(agent_count=n, seed=seed)
    pop = synthesize_population(cfg).validate()
    assert pop.household_sizes().sum() == n
    want = cfg.group_counts()
    assert np.abs(pop.group_counts() - want).sum() <= 4
    assert np.abs(want - np.asarray(cfg.age_fractions) * n).max() < 1.0
    sch = pop.group == AgeGroup.SCH
    adu = pop.group == AgeGroup.ADU
    assert (pop.aff[sch, FT.SCHOOL] >= 0).all() and (pop.aff[~sch, FT.SCHOOL] == -1).all()
    assert (pop.aff[adu, FT.WORKPLACE] >= 0).all() and (pop.aff[~adu, FT.WORKPLACE] == -1).all()
    # household capacity equals its size and members share a location
    sizes = np.bincount(pop.household, minlength=pop.n_facilities)
    hh = pop.facilities_of(FT.HOUSEHOLD)
    assert np.array_equal(pop.fac_cap[hh], sizes[hh])
    assert np.array_equal(pop.home, pop.fac_xy[pop.household])


def test_synthesis_is_deterministic():
    a = synthesize_population(PopulationConfig(agent_count=500, seed=9))
    b = synthesize_population(PopulationConfig(agent_count=500, seed=9))
    c = synthesize_population(PopulationConfig(agent_count=500, seed=10))
    assert a.same_as(b) and not a.same_as(c)


def test_apportion():
    assert apportion(10, [0.5, 0.5]).tolist() == [5, 5]
    assert apportion(10, [1 / 3, 1 / 3, 1 / 3]).sum() == 10
    assert apportion(7, [0.0, 1.0]).tolist() == [0, 7]


def test_lognormal_fit_keeps_mean():
    mu, sigma = lognormal_params(13.55, 5000, 38_333)
    assert np.exp(mu + sigma ** 2 / 2) == pytest.approx(13.55, rel=1e-12)
    assert sigma > 0


def test_missing_school_capacity_is_an_error():
    fac = {"household": (400, 3, 13), "workplace": (10, 20, 50)}
    with pytest.raises(PopulationError, match="school"):
        synthesize_population(PopulationConfig(agent_count=1000, facilities=fac, scale_facilities=False))


def test_household_capacity_error():
    with pytest.raises(PopulationError, match="household"):
        synthesize_population(PopulationConfig(agent_count=100, age_fractions=(0, 0, 0, 1),
                                               facilities={"household": (2, 3, 3)}, scale_facilities=False))


# -- hospitals -------------------------------------------------------------------------

def test_assign_hospital_examples():
    xy = np.array([[0.0, 0.0], [5.0, 0.0]])
    assert assign_hospital((1.0, 0.0), xy, [0, 3]) == 1
    assert assign_hospital((1.0, 0.0), xy, [2, 3]) == 0
    assert assign_hospital((1.0, 0.0), xy, [0, 0]) is None


def test_assign_hospital_matches_scan():
    rng = np.random.default_rng(0)
    for _ in range(500):
        xy = rng.uniform(0, 10, (5, 2))
        beds = rng.integers(0, 3, 5)
        loc = rng.uniform(0, 10, 2)
        free = [j for j in range(5) if beds[j] > 0]
        want = min(free, key=lambda j: np.hypot(*(xy[j] - loc))) if free else None
        assert assign_hospital(loc, xy, beds) == want


# -- file format ------------------------------------------------------------------------

def test_round_trip(tmp_path):
    pop = synthesize_population(PopulationConfig(agent_count=800, seed=2))
    save_population(pop, tmp_path / "p.txt")
    back = load_population(tmp_path / "p.txt")
    assert pop.same_as(back)
    save_population(back, tmp_path / "q.txt")
    assert (tmp_path / "p.txt").read_bytes() == (tmp_path / "q.txt").read_bytes()


FIXTURE = """# mpsim population v1
F 0 household 1.0 1.0 2
F 1 supermarket 2.0 2.0 50
F 2 hospital 3.0 3.0 20 20
A 0 adu 1.0 1.0 0 supermarket=1
A 1 chd 1.0 1.0 0
"""


def test_hand_written_fixture(tmp_path):
    p = tmp_path / "f.txt"
    p.write_text(FIXTURE)
    pop = load_population(p)
    assert pop.n_agents == 2 and pop.n_facilities == 3
    assert pop.agent(0).affiliations == {FT.SUPERMARKET: 1}
    assert pop.facility(2).beds == 20


@pytest.mark.parametrize("bad,match", [
    (FIXTURE.replace("supermarket=1", "supermarket=9"), "line 5.*nonexistent"),
    (FIXTURE.replace("supermarket=1", "supermarket=2"), "line 5.*another type"),
    (FIXTURE.replace("A 1 chd", "A 3 chd"), "line 6.*dense"),
    (FIXTURE.replace("F 1 supermarket 2.0 2.0 50", "F 1 supermarket 2.0 2.0 0"), "line 3"),
    (FIXTURE.replace("A 1 chd 1.0 1.0 0", "A 1 toddler 1.0 1.0 0"), "line 6"),
    (FIXTURE.replace("A 1 chd 1.0 1.0 0", "A 1 chd 1.0 1.0 1"), "household"),
])
def test_schema_errors(tmp_path, bad, match):
    p = tmp_path / "bad.txt"
    p.write_text(bad)
    with pytest.raises(PopulationError, match=match):
        load_population(p)


def test_full_scale_synthesis_counts():
    pop = synthesize_population(PopulationConfig(seed=1))
    counts = pop.group_counts()
    assert counts[AgeGroup.CHD] == 130_451
    assert pop.n_agents == REFERENCE_AGENTS
    pop.validate()


@settings(max_examples=25, deadline=None)
@given(st.integers(30, 400), st.integers(0, 10_000), st.lists(st.integers(1, 8), min_size=4, max_size=4))
def test_nearest_with_many_stores(n, seed, k):
    fac = {"household": (max(n // 2, 1), 2, 13), "school": (2, 500, 900), "workplace": (3, 400, 900),
           "supermarket": (k[0], 100, 300), "retail": (k[1], 50, 100), "gym": (k[2], 30, 60),
           "community": (k[3], 2000, 4000)}
    cfg = PopulationConfig(agent_count=n, seed=seed, facilities=fac, scale_facilities=False, side_km=12.0)
    pop = synthesize_population(cfg).validate()
    for t in (FT.SUPERMARKET, FT.RETAIL, FT.GYM, FT.COMMUNITY):
        assert len(pop.facilities_of(t)) == fac[t.label][0]
        assert np.array_equal(pop.aff[:, t], _nearest_oracle(pop, t, cfg.radii_km[t])), t.label
