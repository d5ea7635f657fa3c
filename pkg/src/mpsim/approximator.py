"""Small fully connected Q-network with Adam, in plain numpy (float64)."""
from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"MPSQNET\x00"
VERSION = 1


class WeightFileError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class QFunction:
    """ReLU MLP mapping an observation to one value per action.

    ``input_scale`` multiplies observations before the first layer, which lets
    raw features with large ranges (such as the day index) feed the network
    without changing the observation itself.
    """

    def __init__(self, sizes, rng=None, zero=False, input_scale=None, betas=(0.9, 0.999), eps=1e-8):
        self.sizes = [int(s) for s in sizes]
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"invalid layer sizes {sizes}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.W, self.b = [], []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            if zero:
                self.W.append(np.zeros((fan_in, fan_out)))
            else:
                lim = np.sqrt(6.0 / fan_in)
                self.W.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
            self.b.append(np.zeros(fan_out))
        self.input_scale = np.ones(self.sizes[0]) if input_scale is None else np.asarray(input_scale, dtype=np.float64)
        if self.input_scale.shape != (self.sizes[0],):
            raise ValueError("input_scale must match the input dimension")
        self.betas = betas
        self.eps = eps
        self.reset_optimizer()

    @property
    def n_in(self):
        return self.sizes[0]

    @property
    def n_out(self):
        return self.sizes[-1]

    def params(self):
        return [p for pair in zip(self.W, self.b) for p in pair]

    def reset_optimizer(self):
        self.m = [np.zeros_like(p) for p in self.params()]
        self.v = [np.zeros_like(p) for p in self.params()]
        self.t = 0

    def copy(self):
        q = QFunction.__new__(QFunction)
        q.sizes = list(self.sizes)
        q.W = [w.copy() for w in self.W]
        q.b = [b.copy() for b in self.b]
        q.input_scale = self.input_scale.copy()
        q.betas, q.eps = self.betas, self.eps
        q.m = [x.copy() for x in self.m]
        q.v = [x.copy() for x in self.v]
        q.t = self.t
        return q

    def load_from(self, other):
        """Copy parameters (not optimiser state) from a network of the same shape."""
        if other.sizes != self.sizes:
            raise ValueError("architecture mismatch")
        for dst, src in zip(self.params(), other.params()):
            dst[...] = src
        self.input_scale[...] = other.input_scale

    def flat(self):
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, vec):
        off = 0
        for p in self.params():
            p[...] = vec[off:off + p.size].reshape(p.shape)
            off += p.size

    def fingerprint(self):
        return zlib.crc32(self.flat().tobytes())

    # -- evaluation ------------------------------------------------------
    def _check_input(self, x, dtype=np.float64):
        x = np.asarray(x, dtype=dtype)
        if x.shape[-1] != self.n_in:
            raise ValueError(f"observation dimension {x.shape[-1]} does not match network input {self.n_in}")
        return x

    def forward(self, x, chunk=1 << 16):
        """Action values for one observation (1-D) or a batch (2-D)."""
        x = self._check_input(x)
        if x.ndim == 1:
            return self._forward(x[None, :])[0]
        if len(x) <= chunk:
            return self._forward(x)
        return np.concatenate([self._forward(x[i:i + chunk]) for i in range(0, len(x), chunk)])

    __call__ = forward

    def infer(self, x, chunk=1 << 16):
        """Batch evaluation in float32, for action selection and bootstrap values."""
        x = self._check_input(x, np.float32)
        if x.ndim == 1:
            x = x[None, :]
        W = [w.astype(np.float32) for w in self.W]
        b = [v.astype(np.float32) for v in self.b]
        scale = self.input_scale.astype(np.float32)
        out = np.empty((len(x), self.n_out), dtype=np.float32)
        last = len(W) - 1
        for s in range(0, len(x), chunk):
            h = x[s:s + chunk].astype(np.float32) * scale
            for i in range(len(W)):
                h = h @ W[i]
                h += b[i]
                if i < last:
                    np.maximum(h, 0.0, out=h)
            out[s:s + chunk] = h
        return out.astype(np.float64)

    def _forward(self, x, keep=False):
        h = x * self.input_scale
        acts = [h]
        last = len(self.W) - 1
        for i, (w, b) in enumerate(zip(self.W, self.b)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return acts if keep else h

    # -- training --------------------------------------------------------
    def loss(self, obs, actions, targets):
        q = self.forward(obs)
        sel = q[np.arange(len(q)), np.asarray(actions)]
        return float(np.mean((sel - np.asarray(targets)) ** 2))

    def gradients(self, obs, actions, targets):
        """(loss, gradient list aligned with params()) of the mean squared error on chosen actions."""
        obs = self._check_input(obs)
        if obs.ndim == 1:
            obs = obs[None, :]
        actions = np.asarray(actions, dtype=np.int64).reshape(-1)
        targets = np.asarray(targets, dtype=np.float64).reshape(-1)
        acts = self._forward(obs, keep=True)
        out = acts[-1]
        rows = np.arange(len(out))
        diff = out[rows, actions] - targets
        loss = float(np.mean(diff ** 2))
        delta = np.zeros_like(out)
        delta[rows, actions] = 2.0 * diff / len(out)
        grads = []
        for i in range(len(self.W) - 1, -1, -1):
            grads.append(delta.sum(axis=0))
            grads.append(acts[i].T @ delta)
            if i > 0:
                delta = (delta @ self.W[i].T) * (acts[i] > 0)
        grads.reverse()  # -> W0, b0, W1, b1, ...
        return loss, grads

    def adam_step(self, grads, lr):
        self.t += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params(), grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        self.assert_finite()

    def assert_finite(self):
        for p in self.params():
            if not np.isfinite(p).all():
                raise NonFiniteError("network parameters became non-finite")


def forward(q: QFunction, observation):
    return q.forward(observation)


def train_mse(q: QFunction, obs, actions, targets, lr):
    """One Adam step on the chosen-action squared error; returns the loss before the step."""
    targets = np.asarray(targets, dtype=np.float64)
    if len(targets) == 0:
        raise ValueError("empty batch")
    if not np.isfinite(targets).all():
        raise NonFiniteError("training targets must be finite")
    loss, grads = q.gradients(obs, actions, targets)
    q.adam_step(grads, lr)
    return loss


def gradient_check(q: QFunction, sample, h=1e-5):
    """Max relative error between analytic and central-difference gradients over all parameters."""
    obs, actions, targets = sample
    _, grads = q.gradients(obs, actions, targets)
    analytic = np.concatenate([g.ravel() for g in grads])
    base = q.flat()
    numeric = np.empty_like(base)
    for i in range(len(base)):
        vec = base.copy()
        vec[i] += h
        q.set_flat(vec)
        up = q.loss(obs, actions, targets)
        vec[i] -= 2 * h
        q.set_flat(vec)
        down = q.loss(obs, actions, targets)
        numeric[i] = (up - down) / (2 * h)
    q.set_flat(base)
    return float(np.max(relative_errors(analytic, numeric))) if len(base) else 0.0


def relative_errors(a, b, floor=1e-7):
    """Elementwise |a - b| / max(|a|, |b|); plain absolute difference when both are below ``floor``."""
    a = np.asarray(a)
    b = np.asarray(b)
    scale = np.maximum(np.abs(a), np.abs(b))
    return np.where(scale >= floor, np.abs(a - b) / np.maximum(scale, floor), np.abs(a - b))


def save_weights(q: QFunction, path):
    """Version-tagged little-endian binary: magic, version, sizes, float64 blob, crc32."""
    head = MAGIC + struct.pack("<II", VERSION, len(q.sizes)) + struct.pack(f"<{len(q.sizes)}I", *q.sizes)
    blob = np.concatenate([q.input_scale] + [p.ravel() for p in q.params()]).astype("<f8").tobytes()
    body = head + blob
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


def load_weights(path, n_in=None, n_out=None):
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 12 or data[: len(MAGIC)] != MAGIC:
        raise WeightFileError(f"{path}: not a weight file")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise WeightFileError(f"{path}: checksum mismatch")
    off = len(MAGIC)
    version, n_sizes = struct.unpack_from("<II", body, off)
    if version != VERSION:
        raise WeightFileError(f"{path}: unsupported format version {version}")
    off += 8
    sizes = list(struct.unpack_from(f"<{n_sizes}I", body, off))
    off += 4 * n_sizes
    if n_in is not None and sizes[0] != n_in:
        raise WeightFileError(f"{path}: network expects {sizes[0]} inputs, scenario provides {n_in}")
    if n_out is not None and sizes[-1] != n_out:
        raise WeightFileError(f"{path}: network has {sizes[-1]} outputs, action space has {n_out}")
    vec = np.frombuffer(body, dtype="<f8", offset=off).astype(np.float64)
    q = QFunction(sizes, zero=True)
    expected = sizes[0] + sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
    if len(vec) != expected:
        raise WeightFileError(f"{path}: parameter blob has {len(vec)} values, expected {expected}")
    q.input_scale = vec[: sizes[0]].copy()
    q.set_flat(vec[sizes[0]:])
    return q
