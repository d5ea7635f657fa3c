"""SMADQN: shared per-age-group soft Q-learning with episode-end λ-returns and dual replay buffers."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import logsumexp, ndtr

from .approximator import QFunction, load_weights, save_weights, train_mse
from .environment import N_ACTIONS, World
from .population import AgeGroup
from .rng import Stream, derive_seed, generator, normal, uniform

GROUP_FILES = {g: f"{g.label}.qnet" for g in AgeGroup}
MANIFEST = "manifest.json"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    eps_min: float = 0.9
    eps_max: float = 1.2
    eps_step: float = 0.1
    alpha: float = 1 / 3
    gamma: float = 0.9
    lam: float = 0.9
    n_batches: int = 100
    lr_low: float = 0.001
    lr_high: float = 0.01
    adam_step_size: float = 1e-5  # listed alongside the schedule; kept for reference only
    lr_override: float | None = None
    replace_frac: float = 1 / 3
    episode_days: int = 80
    locked_days: int = 10
    hidden: tuple = (64, 64)
    soft_value: bool = True

    def learning_rate(self, episode):
        """0.01 x + 0.001 (1 - x) with x = clip(episode / 20 - 1, 0, 1)."""
        if self.lr_override is not None:
            return float(self.lr_override)
        x = min(max(episode / 20.0 - 1.0, 0.0), 1.0)
        return self.lr_high * x + self.lr_low * (1.0 - x)

    def epsilon_after(self, epochs):
        return min(self.eps_min + self.eps_step * epochs, self.eps_max)


# ---------------------------------------------------------------------------
# action selection


def soft_policy(qvals, alpha):
    """softmax(Q / alpha) along the last axis."""
    z = np.asarray(qvals, dtype=np.float64) / alpha
    z = z - z.max(axis=-1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=-1, keepdims=True)


def resample_probability(eps):
    """Chance that the standard-normal gate g >= eps triggers a uniform resample."""
    return float(ndtr(-eps))


def select_action(q, observation, eps, rng, n_actions=None, alpha=1 / 3):
    """Soft sample, then with probability P(g >= eps) replace it by a uniform action."""
    qv = q(observation) if callable(q) else np.asarray(q, dtype=np.float64)
    n = len(qv) if n_actions is None else n_actions
    a = int(rng.choice(n, p=soft_policy(qv[:n], alpha)))
    if rng.standard_normal() >= eps:
        a = int(rng.integers(n))
    return a


def select_actions(qvals, eps, alpha, u_soft, gate, u_resample):
    """Vectorised form of :func:`select_action` driven by pre-drawn numbers."""
    p = soft_policy(qvals, alpha)
    cum = np.cumsum(p, axis=1)
    n = p.shape[1]
    a = (cum < (u_soft * cum[:, -1])[:, None]).sum(axis=1)
    a = np.minimum(a, n - 1)
    redo = gate >= eps
    a[redo] = np.minimum((u_resample[redo] * n).astype(np.int64), n - 1)
    return a


# ---------------------------------------------------------------------------
# λ-returns


def state_value(qvals, alpha, soft=True):
    qvals = np.asarray(qvals, dtype=np.float64)
    if soft:
        return alpha * logsumexp(qvals / alpha, axis=-1)
    return qvals.max(axis=-1)


def lambda_returns(rewards, next_values, lengths, terminal, gamma, lam):
    """Backward λ-return recursion for a batch of padded trajectories.

    rewards, next_values: [n, T]; next_values[i, t] is V'(o_{t+1}).
    The last step of a terminal trajectory has no successor; a truncated one
    bootstraps from V' of its final observation.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(next_values, dtype=np.float64)
    lengths = np.asarray(lengths, dtype=np.int64)
    terminal = np.asarray(terminal, dtype=bool)
    n, T = r.shape
    G = np.zeros((n, T))
    nxt = np.zeros(n)
    for t in range(T - 1, -1, -1):
        last = lengths - 1 == t
        inside = t < lengths
        boot = np.where(terminal, 0.0, gamma * v[:, t])
        mid = gamma * ((1.0 - lam) * v[:, t] + lam * nxt)
        g = r[:, t] + np.where(last, boot, mid)
        g = np.where(inside, g, 0.0)
        G[:, t] = g
        nxt = g
    return G


def compute_lambda_returns(rewards, next_values, gamma, lam, terminal=True):
    """Single-trajectory convenience wrapper; returns G_0..G_{L-1}."""
    r = np.asarray(rewards, dtype=np.float64)[None, :]
    v = np.asarray(next_values, dtype=np.float64)[None, :]
    return lambda_returns(r, v, [r.shape[1]], [terminal], gamma, lam)[0]


# ---------------------------------------------------------------------------
# buffers


class TrajectoryBuffer:
    """Padded per-agent trajectories of one age group."""

    def __init__(self, n, T, obs_dim):
        self.obs = np.zeros((n, T + 1, obs_dim), dtype=np.float32)
        self.act = np.zeros((n, T), dtype=np.int16)
        self.rew = np.zeros((n, T), dtype=np.float64)
        self.length = np.zeros(n, dtype=np.int64)
        self.terminal = np.zeros(n, dtype=bool)
        self.agent = np.full(n, -1, dtype=np.int64)

    def __len__(self):
        return len(self.length)

    @property
    def T(self):
        return self.act.shape[1]

    @property
    def n_transitions(self):
        return int(self.length.sum())

    def take(self, idx):
        out = TrajectoryBuffer.__new__(TrajectoryBuffer)
        for k in ("obs", "act", "rew", "length", "terminal", "agent"):
            setattr(out, k, getattr(self, k)[idx].copy())
        return out

    def assign(self, dst, src_buf, src):
        for k in ("obs", "act", "rew", "length", "terminal", "agent"):
            getattr(self, k)[dst] = getattr(src_buf, k)[src]


def merge_buffers(permanent, temporal, rng, frac=1 / 3):
    """Replace floor(frac * |permanent|) random permanent trajectories with random temporal ones.

    Returns (permanent, replaced indices). With no permanent buffer yet the
    temporal buffer is adopted wholesale.
    """
    if permanent is None or len(permanent) == 0:
        return temporal, np.arange(len(temporal))
    k = int(np.floor(frac * len(permanent) + 1e-12))
    if k == 0 or len(temporal) == 0:
        return permanent, np.zeros(0, dtype=np.int64)
    dst = np.sort(rng.choice(len(permanent), size=k, replace=False))
    src = rng.choice(len(temporal), size=k, replace=len(temporal) < k)
    permanent.assign(dst, temporal, src)
    return permanent, dst


# ---------------------------------------------------------------------------
# learners


def default_input_scale(obs_dim):
    s = np.ones(obs_dim)
    if obs_dim >= 9:
        s[7] = 0.1  # cumulative cases / 1000
        s[8] = 1.0 / 80.0  # day index
    return s


@dataclass
class Learner:
    group: AgeGroup
    q: QFunction
    target: QFunction

    @classmethod
    def create(cls, group, obs_dim, cfg: TrainConfig, rng):
        sizes = [obs_dim, *cfg.hidden, int(N_ACTIONS[group])]
        q = QFunction(sizes, rng, input_scale=default_input_scale(obs_dim))
        return cls(AgeGroup(group), q, q.copy())


def make_learners(obs_dim, cfg: TrainConfig, seed=0):
    return {g: Learner.create(g, obs_dim, cfg, generator(seed, Stream.INIT, int(g))) for g in AgeGroup}


def fill_targets(buf: TrajectoryBuffer, target: QFunction, cfg: TrainConfig, block=2048):
    """λ-return targets for every stored step, using the frozen target network."""
    G = np.zeros_like(buf.rew)
    T = buf.T
    for s in range(0, len(buf), block):
        obs = buf.obs[s:s + block, 1:T + 1]
        n = len(obs)
        v = state_value(target.infer(obs.reshape(n * T, -1)), cfg.alpha, cfg.soft_value).reshape(n, T)
        G[s:s + block] = lambda_returns(buf.rew[s:s + block], v, buf.length[s:s + block],
                                        buf.terminal[s:s + block], cfg.gamma, cfg.lam)
    return G


def train_epoch(learners, buffers, cfg: TrainConfig, episode, rng):
    """One pass over each permanent buffer in n_b shuffled minibatches; returns mean loss per group."""
    losses = {}
    lr = cfg.learning_rate(episode)
    for g, learner in learners.items():
        buf = buffers.get(g)
        if buf is None or buf.n_transitions == 0:
            if buf is not None and len(buf):
                raise ValueError(f"{AgeGroup(g).label}: buffer holds no transitions")
            continue
        learner.target.load_from(learner.q)
        G = fill_targets(buf, learner.target, cfg)
        ti, tt = np.nonzero(np.arange(buf.T)[None, :] < buf.length[:, None])
        perm = rng.permutation(len(ti))
        batch_losses = []
        for part in np.array_split(perm, min(cfg.n_batches, len(perm))):
            i, t = ti[part], tt[part]
            batch_losses.append(train_mse(learner.q, buf.obs[i, t].astype(np.float64), buf.act[i, t], G[i, t], lr))
        losses[g] = float(np.mean(batch_losses))
    return losses


def policy_actions(world: World, learners, eps, cfg: TrainConfig, seed, day, obs):
    """Every acting agent's action index for ``day`` (-1 for the rest)."""
    acting = world.acting()
    out = np.full(world.n, -1, dtype=np.int64)
    if day < cfg.locked_days:
        return world.locked_actions()
    ids_all = np.arange(world.n)
    for g, learner in learners.items():
        ids = ids_all[acting & (world.pop.group == g)]
        if len(ids) == 0:
            continue
        qv = learner.q.infer(obs[ids])
        out[ids] = select_actions(
            qv, eps, cfg.alpha,
            uniform(seed, Stream.ACTION_SOFT, ids, day),
            normal(seed, Stream.ACTION_GATE, ids, day),
            uniform(seed, Stream.ACTION_RESAMPLE, ids, day),
        )
    return out


def run_episode(world: World, learners, cfg: TrainConfig, eps, seed, record=True, policy=None, on_day=None):
    """Simulate one episode; returns (temporal buffers per group or None, DayMetrics list).

    ``policy`` optionally replaces the learners with a callable (world, day, obs) -> actions.
    """
    world.reset(seed)
    T = cfg.episode_days
    obs = world.observe()
    groups = world.pop.group
    deciders = world.acting()
    bufs, slot = {}, np.full(world.n, -1, dtype=np.int64)
    if record:
        for g in AgeGroup:
            members = np.nonzero(deciders & (groups == g))[0]
            slot[members] = np.arange(len(members))
            b = TrajectoryBuffer(len(members), T, world.obs_dim)
            b.agent[:] = members
            bufs[g] = b
    open_ = deciders.copy()
    metrics = []
    for day in range(T):
        if policy is not None:
            actions = np.asarray(policy(world, day, obs), dtype=np.int64)
        else:
            actions = policy_actions(world, learners, eps, cfg, seed, day, obs)
        m, rewards, nxt = world.step(actions)
        metrics.append(m)
        if record:
            rec = np.nonzero(open_)[0]
            ended = world.acting()[rec] == 0
            for g in AgeGroup:
                sel = rec[groups[rec] == g]
                if len(sel) == 0:
                    continue
                b, s = bufs[g], slot[sel]
                b.obs[s, day] = obs[sel]
                b.act[s, day] = actions[sel]
                b.rew[s, day] = rewards[sel]
                b.obs[s, day + 1] = nxt[sel]
                b.length[s] = day + 1
            stop = rec[ended]
            for g in AgeGroup:
                sel = stop[groups[stop] == g]
                bufs[g].terminal[slot[sel]] = True
            open_[stop] = False
        if on_day is not None:
            on_day(day, m)
        obs = nxt
    if record:
        for b in bufs.values():
            b.terminal[:] = True  # finite horizon: the last day has no successor either
    return (bufs if record else None), metrics


# ---------------------------------------------------------------------------
# training driver and checkpoints


@dataclass
class Trainer:
    world: World
    cfg: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    learners: dict = None
    episode: int = 0
    epsilon: float = None
    permanent: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.learners is None:
            self.learners = make_learners(self.world.obs_dim, self.cfg, self.seed)
        if self.epsilon is None:
            self.epsilon = self.cfg.eps_min

    def train_episode(self, on_day=None):
        self.episode += 1
        ep_seed = derive_seed(self.seed, Stream.EPISODE, self.episode)
        temporal, metrics = run_episode(self.world, self.learners, self.cfg, self.epsilon, ep_seed, on_day=on_day)
        rng = generator(self.seed, Stream.BUFFER, self.episode)
        for g, buf in temporal.items():
            self.permanent[g], _ = merge_buffers(self.permanent.get(g), buf, rng, self.cfg.replace_frac)
        losses = train_epoch(self.learners, self.permanent, self.cfg, self.episode,
                             generator(self.seed, Stream.SHUFFLE, self.episode))
        self.epsilon = min(self.epsilon + self.cfg.eps_step, self.cfg.eps_max)
        return metrics, losses

    def evaluate(self, episode_seed):
        _, metrics = run_episode(self.world, self.learners, self.cfg, self.epsilon, episode_seed, record=False)
        return metrics

    def save(self, path):
        save_checkpoint(path, self.learners, self.cfg, self.episode, self.epsilon)

    @classmethod
    def from_checkpoint(cls, path, world, cfg=None, seed=0):
        learners, saved_cfg, episode, eps = load_checkpoint(path, world.obs_dim)
        return cls(world, cfg or saved_cfg, seed, learners, episode, eps)


def save_checkpoint(path, learners, cfg: TrainConfig, episode, epsilon):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for g, learner in learners.items():
        save_weights(learner.q, path / GROUP_FILES[AgeGroup(g)])
    manifest = {"version": CHECKPOINT_VERSION, "episode": int(episode), "epsilon": float(epsilon),
                "obs_dim": int(next(iter(learners.values())).q.n_in), "train": asdict(cfg)}
    (path / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_checkpoint(path, obs_dim=None):
    """(learners, TrainConfig, episode, epsilon); obs_dim mismatch raises a descriptive error."""
    path = Path(path)
    man = json.loads((path / MANIFEST).read_text())
    if man.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {man.get('version')}")
    if obs_dim is not None and man["obs_dim"] != obs_dim:
        raise ValueError(
            f"{path}: checkpoint observations have {man['obs_dim']} features but the scenario produces {obs_dim}; "
            "information disclosure must be set the same way in both scenarios"
        )
    train = dict(man["train"])
    train["hidden"] = tuple(train["hidden"])
    cfg = TrainConfig(**train)
    learners = {}
    for g in AgeGroup:
        q = load_weights(path / GROUP_FILES[g], n_in=obs_dim, n_out=int(N_ACTIONS[g]))
        learners[g] = Learner(g, q, q.copy())
    return learners, cfg, int(man["episode"]), float(man["epsilon"])


# ---------------------------------------------------------------------------
# toy chain used to validate the learning loop


@dataclass
class ChainMDP:
    """States 0..n-1; action 1 advances (leaving the last state pays ``goal`` and ends), action 0 returns to 0."""

    n_states: int = 3
    gamma: float = 0.9
    horizon: int = 12
    goal: float = 5.0

    def step(self, s, a):
        if a == 1:
            if s == self.n_states - 1:
                return s, self.goal, True
            return s + 1, 0.0, False
        return 0, 0.0, False

    def one_hot(self, s):
        v = np.zeros(self.n_states)
        v[s] = 1.0
        return v

    def soft_q_star(self, alpha, soft=True, iters=2000):
        """Value iteration with the same backup the learner regresses on."""
        Q = np.zeros((self.n_states, 2))
        for _ in range(iters):
            V = state_value(Q, alpha, soft)
            new = np.zeros_like(Q)
            for s in range(self.n_states):
                for a in range(2):
                    s2, r, done = self.step(s, a)
                    new[s, a] = r + (0.0 if done else self.gamma * V[s2])
            Q = new
        return Q


def collect_chain(mdp: ChainMDP, q: QFunction, eps, alpha, rng, n_episodes):
    T = mdp.horizon
    buf = TrajectoryBuffer(n_episodes, T, mdp.n_states)
    for i in range(n_episodes):
        s = int(rng.integers(mdp.n_states))
        for t in range(T):
            o = mdp.one_hot(s)
            a = select_action(q, o, eps, rng, 2, alpha)
            s2, r, done = mdp.step(s, a)
            buf.obs[i, t] = o
            buf.act[i, t] = a
            buf.rew[i, t] = r
            buf.obs[i, t + 1] = mdp.one_hot(s2)
            buf.length[i] = t + 1
            s = s2
            if done:
                buf.terminal[i] = True
                break
    return buf


def train_chain(seed=0, epochs=200, episodes_per_epoch=30, cfg: TrainConfig | None = None, mdp=None,
                lr_final=0.0005):
    """Run the SMADQN loop on :class:`ChainMDP`; returns (learned Q table, optimal Q table).

    The step size is held for the first half of training, then annealed
    linearly to ``lr_final`` so that Adam settles instead of oscillating.
    """
    mdp = mdp or ChainMDP()
    cfg = cfg or TrainConfig(lam=0.0, n_batches=20, lr_override=0.01, hidden=(32, 32))
    lr0 = cfg.learning_rate(1)
    rng = np.random.default_rng(seed)
    learner = Learner(AgeGroup.ADU, QFunction([mdp.n_states, *cfg.hidden, 2], rng), None)
    learner.target = learner.q.copy()
    learners = {AgeGroup.ADU: learner}
    perm = None
    eps = cfg.eps_min
    for ep in range(1, epochs + 1):
        temp = collect_chain(mdp, learner.q, eps, cfg.alpha, rng, episodes_per_epoch)
        perm, _ = merge_buffers(perm, temp, rng, cfg.replace_frac)
        x = min(max(2.0 * ep / epochs - 1.0, 0.0), 1.0)
        cfg = replace(cfg, lr_override=lr0 * (1.0 - x) + lr_final * x)
        train_epoch(learners, {AgeGroup.ADU: perm}, cfg, ep, rng)
        eps = min(eps + cfg.eps_step, cfg.eps_max)
    learned = learner.q.forward(np.eye(mdp.n_states))
    return learned, mdp.soft_q_star(cfg.alpha, cfg.soft_value)
