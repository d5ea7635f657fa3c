"""Disease dynamics: infection probabilities, the health state machine, contact tracing."""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import _kernels_py as _kp
from . import kernels
from .population import FREQUENCY, INFECTION_COEF, AgeGroup, FacilityType


class HealthState(IntEnum):
    HEA = _kp.HEA
    INC = _kp.INC
    INA = _kp.INA
    PRE = _kp.PRE
    ASY = _kp.ASY
    SYM = _kp.SYM
    MSY = _kp.MSY
    SSY = _kp.SSY
    IMA = _kp.IMA
    IMS = _kp.IMS
    DEA = _kp.DEA

    @property
    def label(self):
        return self.name.lower()


HS = HealthState
N_STATES = len(HealthState)
SYMPTOMATIC = (HS.SYM, HS.MSY, HS.SSY)

# age group -> severity/fatality band (children and students share the youngest band)
AGE_BAND = np.array([0, 0, 1, 2], dtype=np.int64)


class DeadAgentError(RuntimeError):
    pass


@dataclass
class DiseaseParams:
    beta: float = 15.8
    asy_pop_rate: float = 0.25
    p_inc2pre: float = 1 / 3
    p_pre2sym: float = 0.5  # not given numerically; tunable
    p_ina2asy: float = 0.5  # not given numerically; tunable
    p_rec_asy: float | None = None  # None: same as p_rec_sym
    p_rec_sym: float = 1 / 8.8
    p_hos: float = 1 / 1.2
    p_sev2rec: float = 1 / 10
    p_sev2cri_nhos: tuple = (0.6, 0.8, 1.0)
    p_deimm_asy: float = 0.009
    p_deimm_sym: float = 0.0025
    infect_pre: float = 0.12
    infect_asy: float = 0.31
    infect_sym: float = 1.0
    severity_rate: tuple = (0.0157, 0.0638, 0.2484)
    fatality_rate_unrevised: tuple = (0.00021, 0.008, 0.1536)
    fatality_correction: float = 1.25
    p_age: tuple = (0.4, 0.38, 0.8175, 0.81)
    mask_factor: float = 0.4

    def __post_init__(self):
        self.validate()

    def validate(self):
        probs = [self.asy_pop_rate, self.p_inc2pre, self.p_pre2sym, self.p_ina2asy, self.rec_asy, self.p_rec_sym,
                 self.p_hos, self.p_sev2rec, self.p_deimm_asy, self.p_deimm_sym, self.infect_pre, self.infect_asy,
                 self.infect_sym, self.mask_factor, *self.p_sev2cri_nhos, *self.severity_rate,
                 *self.fatality_rate_unrevised, *self.p_age]
        if any(not (0.0 <= float(p) <= 1.0) for p in probs):
            raise ValueError("disease probabilities must lie in [0, 1]")
        if self.beta <= 0 or self.fatality_correction <= 0:
            raise ValueError("beta and fatality_correction must be positive")
        if len(self.p_sev2cri_nhos) != 3 or len(self.severity_rate) != 3 or len(self.fatality_rate_unrevised) != 3:
            raise ValueError("per-band parameters need three values")
        if len(self.p_age) != 4:
            raise ValueError("p_age needs one value per age group")
        x = self.conditional_fatality()
        if (x >= 1).any():
            raise ValueError("conditional in-hospital fatality must be below 1")
        return self

    @property
    def rec_asy(self):
        return self.p_rec_sym if self.p_rec_asy is None else self.p_rec_asy

    def conditional_fatality(self):
        """Fatality among severe cases per band: correction * fatality / severity."""
        return self.fatality_correction * np.asarray(self.fatality_rate_unrevised) / np.asarray(self.severity_rate)

    def hospital_death_hazard(self):
        """Daily in-hospital death probability q with q / (q + p_sev2rec) equal to the conditional fatality."""
        x = self.conditional_fatality()
        return self.p_sev2rec * x / (1.0 - x)

    def rates(self):
        r = np.zeros(10)
        r[_kp.R_INC_LEAVE] = self.p_inc2pre
        r[_kp.R_ASY_FRAC] = self.asy_pop_rate
        r[_kp.R_PRE2SYM] = self.p_pre2sym
        r[_kp.R_INA2ASY] = self.p_ina2asy
        r[_kp.R_REC_ASY] = self.rec_asy
        r[_kp.R_HOS] = self.p_hos
        r[_kp.R_REC_SYM] = self.p_rec_sym
        r[_kp.R_SEV2REC] = self.p_sev2rec
        r[_kp.R_DEIMM_ASY] = self.p_deimm_asy
        r[_kp.R_DEIMM_SYM] = self.p_deimm_sym
        return r

    def by_group(self):
        """(severity, out-of-hospital death, in-hospital death hazard) indexed by age group."""
        sev = np.asarray(self.severity_rate, dtype=float)[AGE_BAND]
        nhos = np.asarray(self.p_sev2cri_nhos, dtype=float)[AGE_BAND]
        hosp = self.hospital_death_hazard()[AGE_BAND]
        return sev, nhos, hosp

    def infectivity(self):
        """p_hs indexed by health state."""
        p = np.zeros(N_STATES)
        p[HS.PRE] = self.infect_pre
        p[HS.ASY] = self.infect_asy
        p[list(SYMPTOMATIC)] = self.infect_sym
        return p


def victim_factor(group, masked, params: DiseaseParams):
    """p_x = p_age * mask; works on scalars or arrays."""
    p_age = np.asarray(params.p_age)[np.asarray(group, dtype=np.int64)]
    return p_age * np.where(np.asarray(masked, dtype=bool), params.mask_factor, 1.0)


def source_factor(state, masked, params: DiseaseParams):
    """p_y = p_hs(state) * mask; zero for non-infectious states."""
    p_hs = params.infectivity()[np.asarray(state, dtype=np.int64)]
    return p_hs * np.where(np.asarray(masked, dtype=bool), params.mask_factor, 1.0)


def facility_coef(ftype, capacity, beta):
    """β I_F f_F / C_F for one facility (or arrays of them)."""
    capacity = np.asarray(capacity, dtype=float)
    if (capacity <= 0).any():
        raise ValueError("facility capacity must be positive")
    ftype = np.asarray(ftype, dtype=np.int64)
    return beta * INFECTION_COEF[ftype] * FREQUENCY[ftype] / capacity


def facility_infection_probability(ftype, capacity, victim_px, source_py, beta=15.8):
    """Per-victim probability min(β I_F f_F p_x Σ p_y / C_F, 1)."""
    if FacilityType(int(ftype)) == FacilityType.COMMUNITY:
        raise ValueError("use community_infection_probability for community facilities")
    coef = facility_coef(ftype, capacity, beta)
    total = float(np.sum(source_py))
    return np.minimum(coef * np.asarray(victim_px, dtype=float) * total, 1.0)


def community_infection_probability(capacity, victim_px, victim_act, source_py, source_act, beta=15.8):
    """Community variant: both sides are scaled by their activity level over 2."""
    coef = facility_coef(FacilityType.COMMUNITY, capacity, beta)
    total = float(np.sum(np.asarray(source_py, dtype=float) * np.asarray(source_act, dtype=float) / 2.0))
    px = np.asarray(victim_px, dtype=float) * np.asarray(victim_act, dtype=float) / 2.0
    return np.minimum(coef * px * total, 1.0)


def exact_infection_probability(ftype, capacity, victim_px, source_py, beta=15.8):
    """β I_F f_F p_x (1 − Π(1 − p_y)) / C_F, the quantity the summed form upper-bounds."""
    coef = facility_coef(ftype, capacity, beta)
    union = 1.0 - np.prod(1.0 - np.asarray(source_py, dtype=float))
    return coef * np.asarray(victim_px, dtype=float) * union


@dataclass(frozen=True)
class InfectionEvent:
    day: int
    victim: int
    facility: int
    source: int


@dataclass
class ContactTraceLog:
    """Append-only infection ledger indexed by source."""

    events: list = field(default_factory=list)
    _by_source: dict = field(default_factory=lambda: defaultdict(list))

    def append(self, event: InfectionEvent):
        self._by_source[event.source].append(len(self.events))
        self.events.append(event)

    def extend(self, day, victims, facilities, sources):
        for v, f, s in zip(np.asarray(victims).tolist(), np.asarray(facilities).tolist(), np.asarray(sources).tolist()):
            self.append(InfectionEvent(int(day), v, f, s))

    def __len__(self):
        return len(self.events)

    def attributed_victims(self, source, within_days=None, day=None):
        """Victims infected by ``source``; optionally only in the last ``within_days`` days up to ``day``."""
        idx = self._by_source.get(int(source), ())
        evs = [self.events[i] for i in idx]
        if within_days is not None:
            if day is None:
                day = max((e.day for e in self.events), default=0)
            evs = [e for e in evs if day - within_days <= e.day <= day]
        return [e.victim for e in evs]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["day", "victim", "source", "facility"])
            for e in self.events:
                w.writerow([e.day, e.victim, e.source, e.facility])


def sample_infections(facility_id, victims, victim_p, sources, source_py, day, rng, log=None):
    """Infect each victim independently with its probability; attribute each case to one source.

    ``victim_p`` are the already computed per-victim probabilities. Attribution
    draws a source with probability proportional to its p_y.
    """
    victims = np.asarray(victims, dtype=np.int64)
    if len(victims) == 0:
        return []
    hit = rng.random(len(victims)) < np.asarray(victim_p, dtype=float)
    w = np.asarray(source_py, dtype=float)
    if not hit.any() or w.sum() <= 0:
        return []
    cum = np.cumsum(w)
    picks = np.searchsorted(cum, rng.random(int(hit.sum())) * cum[-1], side="right")
    picks = np.minimum(picks, len(w) - 1)
    events = [InfectionEvent(int(day), int(v), int(facility_id), int(sources[k])) for v, k in zip(victims[hit], picks)]
    if log is not None:
        for e in events:
            log.append(e)
    return events


def advance_health_state(state, group, in_hospital, days_sym, rng, params: DiseaseParams, backend=None):
    """One daily transition for a single agent; returns (new state, new days_symptomatic).

    ``hea`` is left unchanged here; infection events move agents from hea to inc.
    """
    if HS(int(state)) == HS.DEA:
        raise DeadAgentError("cannot advance a dead agent")
    mod = backend or kernels.default
    sev, nhos, hosp = params.by_group()
    u = rng.random(2)
    new, days = mod.advance_health(
        np.array([state], dtype=np.int8), np.array([group], dtype=np.int8), np.array([in_hospital], dtype=np.uint8),
        np.array([days_sym], dtype=np.int16), u[:1], u[1:], params.rates(), sev, nhos, hosp,
    )
    return HS(int(new[0])), int(days[0])


def advance_health_states(state, group, in_hospital, days_sym, u1, u2, params: DiseaseParams, backend=None):
    """Vectorised daily transition for every agent."""
    mod = backend or kernels.default
    sev, nhos, hosp = params.by_group()
    return mod.advance_health(
        np.ascontiguousarray(state, dtype=np.int8), np.ascontiguousarray(group, dtype=np.int8),
        np.ascontiguousarray(in_hospital, dtype=np.uint8), np.ascontiguousarray(days_sym, dtype=np.int16),
        np.ascontiguousarray(u1, dtype=np.float64), np.ascontiguousarray(u2, dtype=np.float64),
        params.rates(), sev, nhos, hosp,
    )


__all__ = [
    "AGE_BAND", "AgeGroup", "ContactTraceLog", "DeadAgentError", "DiseaseParams", "HealthState", "InfectionEvent",
    "advance_health_state", "advance_health_states", "community_infection_probability",
    "exact_infection_probability", "facility_coef", "facility_infection_probability", "sample_infections",
    "source_factor", "victim_factor",
]
