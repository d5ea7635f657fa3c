import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mpsim.epidemic import ContactTraceLog, HealthState as HS, InfectionEvent
from mpsim.government import (
    DisclosureReport, PolicySchedule, QuarantineRegistry, capacity_for, generate_disclosure, quarantine_scan,
    release_scan,
)
from mpsim.population import N_TYPES, FacilityType as FT

REF = PolicySchedule.reference()


def test_reference_schedule_examples():
    assert capacity_for(FT.WORKPLACE, 100, 10, REF) == 25
    assert capacity_for(FT.WORKPLACE, 100, 5, REF) == 100
    assert capacity_for(FT.RESTAURANT, 100, 10, REF) == 0
    assert capacity_for(FT.SUPERMARKET, 100, 10, REF) == 100
    assert capacity_for(FT.HOUSEHOLD, 7, 10, REF) == 7
    assert capacity_for(FT.HOSPITAL, 30, 10, REF) == 30
    assert capacity_for(FT.WORKPLACE, 100, 62, REF) == 50
    assert capacity_for(FT.RESTAURANT, 100, 62, REF) == 25
    assert capacity_for(FT.GYM, 100, 62, REF) == 0  # carried over from the day-10 rule


def test_schedule_validation():
    with pytest.raises(ValueError):
        PolicySchedule([(10, {"gym": 1.5})])
    with pytest.raises(ValueError):
        PolicySchedule([(10, {}), (5, {})])
    with pytest.raises(ValueError):
        PolicySchedule(quarantine="total")


def test_schedule_config_round_trip():
    s = PolicySchedule.from_config(REF.to_config())
    for d in range(0, 130, 3):
        np.testing.assert_array_equal(s.fractions_at(d), REF.fractions_at(d))


@settings(max_examples=100)
@given(st.integers(0, 10_000), st.floats(0, 1), st.floats(0, 1))
def test_capacity_monotone_in_fraction(cap, f1, f2):
    lo, hi = sorted((f1, f2))
    a = capacity_for(FT.GYM, cap, 0, PolicySchedule([(0, {"gym": lo})]))
    b = capacity_for(FT.GYM, cap, 0, PolicySchedule([(0, {"gym": hi})]))
    assert 0 <= a <= b <= cap


def test_disclosure_examples():
    types = np.array([FT.HOUSEHOLD, FT.GYM, FT.GYM, FT.RESTAURANT])
    hist = {3: (np.array([1.0, 0, 2, 0]), np.array([5.0, 4, 10, 0]))}
    rep = generate_disclosure(hist, 5, types)
    np.testing.assert_allclose(rep.probability, [0.0, 0.0, 0.2, 0.0])
    assert generate_disclosure(hist, 4, types).probability.sum() == 0.0  # nothing recorded for day 2


def test_surveillance_aggregation():
    prob = np.zeros(3)
    prob[1], prob[2] = 0.1, 0.2
    aff = np.full((1, N_TYPES), -1)
    aff[0, FT.RESTAURANT] = 1  # both MinAct 3
    aff[0, FT.CINEMA] = 2
    sur = DisclosureReport(0, prob).surveillance(aff)
    np.testing.assert_allclose(sur[0], [0, 0, 0, 1 - 0.9 * 0.8], atol=1e-15)
    assert sur[0, 3] == pytest.approx(0.28)


def test_disclosure_causality(small_pop):
    """The report used on day t+1 is unaffected by anything that happened on day t."""
    from mpsim.environment import World, WorldConfig
    sched = PolicySchedule(disclosure=True)
    w = World(small_pop, WorldConfig(schedule=sched), seed=3)
    for _ in range(8):
        w.step(w.locked_actions())
    day = w.day
    before = w.report.probability.copy()
    # rewrite the statistics of the most recent day: the published report must not move
    nf = small_pop.n_facilities
    w.history[day - 1] = (np.ones(nf), np.ones(nf))
    again = generate_disclosure(w.history, day, small_pop.fac_type)
    np.testing.assert_array_equal(again.probability, before)
    assert again.day == day


def test_weak_discovery_rate():
    n = 100_000
    reg = QuarantineRegistry(n)
    state = np.full(n, HS.MSY, dtype=np.int8)
    found = quarantine_scan(state, np.full(n, 3), reg, 20, "weak", seed=1)
    sigma = np.sqrt(n * (1 / 3) * (2 / 3))
    assert abs(len(found) - n / 3) < 3 * sigma
    assert reg.isolated.sum() == len(found)
    # below the symptom threshold nobody is discovered
    reg2 = QuarantineRegistry(n)
    assert len(quarantine_scan(state, np.full(n, 2), reg2, 20, "weak", seed=1)) == 0


def test_strong_traces_forty_percent():
    sources = 5000
    per = 10
    n = sources * (per + 1)
    log = ContactTraceLog()
    for s in range(sources):
        for v in range(per):
            log.append(InfectionEvent(1, sources + s * per + v, 0, s))
    state = np.full(n, HS.INC, dtype=np.int8)
    state[:sources] = HS.SYM
    days = np.zeros(n, dtype=np.int16)
    days[:sources] = 3
    reg = QuarantineRegistry(n)
    quarantine_scan(state, days, reg, 5, "strong", seed=2, trace_log=log)
    assert reg.isolated[:sources].all()
    traced = reg.isolated[sources:].reshape(sources, per).sum(axis=1)
    assert traced.mean() == pytest.approx(4.0, abs=3 * np.sqrt(per * 0.4 * 0.6 / sources))


def test_mode_none_isolates_nobody():
    reg = QuarantineRegistry(10)
    assert len(quarantine_scan(np.full(10, HS.SYM), np.full(10, 9), reg, 3, "none", 0)) == 0
    assert not reg.isolated.any()


def test_release_rules(tmp_path):
    reg = QuarantineRegistry(3)
    reg.isolate([0, 1, 2], 20)
    state = np.array([HS.IMS, HS.SSY, HS.DEA], dtype=np.int8)
    rec = np.array([30, -1, -1])
    for day in range(30, 39):
        assert len(release_scan(reg, state, rec, day)) == 0
    assert not reg.isolated[2]  # the dead leave the registry without a release
    assert list(release_scan(reg, state, rec, 39)) == [0]
    assert reg.isolated.tolist() == [False, True, False]
    reg.write_csv(tmp_path / "iso.csv")
    rows = (tmp_path / "iso.csv").read_text().splitlines()
    assert rows[0] == "day,agent,action"
    assert "39,0,release" in rows and not any(r.endswith(",2,release") for r in rows)
