"""Numpy implementation of the per-day hot loops.

Every function here has a twin in ``_kernels_c.pyx`` that performs the same
floating point operations in the same order, so the two backends produce
bit-identical results. Keep them in lockstep when editing either one.
"""
import numpy as np

NAME = "python"

MASK64 = (1 << 64) - 1
K_STREAM = 0x9E3779B97F4A7C15
K_A = 0xD1B54A32D192ED03
K_B = 0x8CB92BA72F3D8DD7
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0

# health state codes (mirrors epidemic.HealthState)
HEA, INC, INA, PRE, ASY, SYM, MSY, SSY, IMA, IMS, DEA = range(11)

# layout of the ``rates`` vector passed to advance_health
R_INC_LEAVE, R_ASY_FRAC, R_PRE2SYM, R_INA2ASY, R_REC_ASY, R_HOS, R_REC_SYM, R_SEV2REC, R_DEIMM_ASY, R_DEIMM_SYM = range(10)


def set_num_threads(n):
    return 1


def get_num_threads():
    return 1


def _mix_int(z):
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _mix(z):
    z = z ^ (z >> np.uint64(30))
    z = z * _M1
    z = z ^ (z >> np.uint64(27))
    z = z * _M2
    return z ^ (z >> np.uint64(31))


def stream_key(seed, stream):
    return _mix_int((seed & MASK64) ^ ((stream * K_STREAM) & MASK64))


def uniform(seed, stream, a, b):
    """Counter-based uniforms in [0, 1): one independent draw per (a, b) pair."""
    a = np.asarray(a, dtype=np.int64).astype(np.uint64)
    b = np.asarray(b, dtype=np.int64).astype(np.uint64)
    h0 = np.uint64(stream_key(seed, stream))
    h = _mix(h0 + a * np.uint64(K_A))
    h = _mix(h ^ (b * np.uint64(K_B)))
    return (h >> np.uint64(11)).astype(np.float64) * _INV53


def build_visits(aff, active, group, act, shop, rule):
    """Expand agent affiliations into the day's visit list (agent-major order)."""
    allowed = rule[group, act, shop].astype(bool)
    allowed &= aff >= 0
    allowed &= active.astype(bool)[:, None]
    agent, typ = np.nonzero(allowed)
    fac = aff[agent, typ]
    return agent.astype(np.int32), fac.astype(np.int32), typ.astype(np.int8)


def kickout(v_agent, v_fac, key, cap, n_fac):
    """Keep at most ``cap[f]`` visitors per facility, dropping the largest keys.

    Ties on the key are broken by visit index, so the kept set is a pure
    function of the inputs. ``v_agent`` is accepted for signature parity.
    """
    keep = np.ones(len(v_fac), dtype=bool)
    if len(v_fac) == 0:
        return keep
    counts = np.bincount(v_fac, minlength=n_fac)
    over = counts > cap
    if not over.any():
        return keep
    idx = np.nonzero(over[v_fac])[0]
    f = v_fac[idx]
    order = np.lexsort((key[idx], f))
    idx = idx[order]
    f = f[order]
    starts = np.searchsorted(f, f, side="left")
    rank = np.arange(len(f)) - starts
    keep[idx[rank >= cap[f]]] = False
    return keep


def infect(v_agent, v_fac, w_src, w_vic, coef, u, n_agents, n_fac):
    """Facility pressure, per-visit infection probability and first hit per agent.

    Returns (pressure[n_fac], p[n_visits], q[n_agents], hit_visit[n_agents]) where
    q is the agent's total daily infection probability and hit_visit the index
    of the first visit whose draw infected the agent (-1 if none).
    """
    pressure = np.bincount(v_fac, weights=w_src, minlength=n_fac).astype(np.float64)
    p = np.minimum(coef[v_fac] * w_vic * pressure[v_fac], 1.0)
    q = np.zeros(n_agents, dtype=np.float64)
    hit_visit = np.full(n_agents, -1, dtype=np.int64)
    if len(v_agent) == 0:
        return pressure, p, q, hit_visit
    change = np.empty(len(v_agent), dtype=bool)
    change[0] = True
    np.not_equal(v_agent[1:], v_agent[:-1], out=change[1:])
    starts = np.nonzero(change)[0]
    prod = np.multiply.reduceat(1.0 - p, starts)
    q[v_agent[starts]] = 1.0 - prod
    hits = np.nonzero(u < p)[0]
    if len(hits):
        ha = v_agent[hits]
        first = np.ones(len(hits), dtype=bool)
        first[1:] = ha[1:] != ha[:-1]
        hit_visit[ha[first]] = hits[first]
    return pressure, p, q, hit_visit


def attribute(victim_fac, u, v_agent, v_fac, w_src, n_fac):
    """Pick one source per victim, proportionally to source weight in its facility."""
    out = np.full(len(victim_fac), -1, dtype=np.int32)
    if len(victim_fac) == 0:
        return out
    src = np.nonzero(w_src > 0)[0]
    if len(src) == 0:
        return out
    order = np.argsort(v_fac[src], kind="stable")
    src = src[order]
    sf = v_fac[src]
    sw = w_src[src]
    sa = v_agent[src]
    cum = np.cumsum(sw)
    s = np.searchsorted(sf, victim_fac, side="left")
    e = np.searchsorted(sf, victim_fac, side="right")
    ok = e > s
    s, e, uu = s[ok], e[ok], u[ok]
    base = np.where(s > 0, cum[np.maximum(s - 1, 0)], 0.0)
    total = cum[e - 1] - base
    target = base + uu * total
    k = np.searchsorted(cum, target, side="right")
    k = np.minimum(np.maximum(k, s), e - 1)
    out[ok] = sa[k]
    return out


def advance_health(state, group, hosp, days_sym, u1, u2, rates, sev, nhos_death, hosp_death):
    """One daily transition of the disease state machine for every agent.

    Newly infected agents are handled by the caller; ``hea`` agents are left
    untouched here, as are the dead.
    """
    st = state
    new = st.copy()
    days = days_sym.copy()
    h = hosp.astype(bool)

    m = st == INC
    go = m & (u1 < rates[R_INC_LEAVE])
    new[go & (u2 < rates[R_ASY_FRAC])] = INA
    new[go & ~(u2 < rates[R_ASY_FRAC])] = PRE

    m = st == PRE
    go = m & (u1 < rates[R_PRE2SYM])
    new[go] = SYM
    days[go] = 1

    m = st == INA
    new[m & (u1 < rates[R_INA2ASY])] = ASY

    m = st == ASY
    new[m & (u1 < rates[R_REC_ASY])] = IMA

    m = st == SYM
    go = m & (u1 < rates[R_HOS])
    severe = u2 < sev[group]
    new[go & severe] = SSY
    new[go & ~severe] = MSY
    days[m] += 1

    m = st == MSY
    go = m & (u1 < rates[R_REC_SYM])
    new[go] = IMS
    days[m & ~go] += 1
    days[go] = 0

    m = st == SSY
    mh = m & h
    qd = hosp_death[group]
    die = mh & (u1 < qd)
    rec = mh & ~die & (u1 < qd + rates[R_SEV2REC])
    mo = m & ~h
    die_out = mo & (u1 < nhos_death[group])
    new[die | die_out] = DEA
    new[rec] = IMS
    stay = m & ~(die | die_out | rec)
    days[stay] += 1
    days[die | die_out | rec] = 0

    m = st == IMA
    new[m & (u1 < rates[R_DEIMM_ASY])] = HEA
    m = st == IMS
    new[m & (u1 < rates[R_DEIMM_SYM])] = HEA
    return new, days
