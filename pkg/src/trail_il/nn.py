"""Tiny float64 MLP with hand-written backprop, Adam, and a gradient checker.

Networks act on row batches: ``x`` has shape (N, in) and the output (N, out).
Parameters are kept as a flat list ``[W1, b1, W2, b2, ...]`` with ``W`` of
shape (in, out) so that optimisers and checkers can treat them uniformly.

Checkpoint byte layout (all integers/floats in the declared byte order)::

    offset 0   8 bytes   magic b"TRAILMLP"
    offset 8   1 byte    byte-order tag, b"<" (little) or b">" (big)
    offset 9   3 bytes   reserved, zero
    offset 12  uint32    n = number of layer sizes
    offset 16  n*uint32  layer sizes [in, h1, ..., out]
    then, per layer: W as in*out float64 row-major, then b as out float64
"""
from __future__ import annotations

import struct
import sys
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

MAGIC = b"TRAILMLP"


class NonFiniteError(FloatingPointError):
    def __init__(self, message, layer=None, step=None):
        super().__init__(message)
        self.layer = layer
        self.step = step


def swish(x):
    return x * expit(x)


def _swish_grad(x):
    sig = expit(x)
    return sig * (1.0 + x * (1.0 - sig))


@dataclass
class Mlp:
    sizes: tuple
    params: list

    @classmethod
    def init(cls, sizes, rng, scale=1.0):
        """LeCun-normal weights, zero biases."""
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"invalid layer sizes {sizes}")
        params = []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            params.append(scale * rng.standard_normal((n_in, n_out)) / np.sqrt(n_in))
            params.append(np.zeros(n_out))
        return cls(sizes, params)

    @property
    def n_layers(self):
        return len(self.sizes) - 1

    def copy(self):
        return Mlp(self.sizes, [p.copy() for p in self.params])

    def n_params(self):
        return sum(p.size for p in self.params)

    def __call__(self, x):
        return forward(self, x)


def _as_batch(net, x):
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != net.sizes[0]:
        raise ValueError(f"input width {x.shape[1]} != {net.sizes[0]}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("non-finite network input", layer=0)
    return x, squeeze


def _run(net, x):
    pre = []
    h = x
    for i in range(net.n_layers):
        w, b = net.params[2 * i], net.params[2 * i + 1]
        with np.errstate(invalid="ignore", over="ignore"):
            z = h @ w + b
        if not np.all(np.isfinite(z)):
            raise NonFiniteError(f"non-finite pre-activation at layer {i + 1}", layer=i + 1)
        pre.append((h, z))
        h = z if i == net.n_layers - 1 else swish(z)
    return h, pre


def forward(net, x):
    x, squeeze = _as_batch(net, x)
    out, _ = _run(net, x)
    return out[0] if squeeze else out


def forward_backward(net, x, upstream):
    """Return ``(output, param_grads, input_grad)`` for ``sum(upstream * output)``."""
    x, squeeze = _as_batch(net, x)
    out, cache = _run(net, x)
    g = np.asarray(upstream, dtype=np.float64).reshape(out.shape)
    grads = [None] * len(net.params)
    for i in reversed(range(net.n_layers)):
        h_in, z = cache[i]
        if i != net.n_layers - 1:
            g = g * _swish_grad(z)
        grads[2 * i] = h_in.T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ net.params[2 * i].T
    if squeeze:
        return out[0], grads, g[0]
    return out, grads, g


@dataclass
class Adam:
    """Bias-corrected adaptive-moment optimiser over a list of arrays."""

    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params, grads):
        """Update ``params`` in place and return them."""
        if len(params) != len(grads):
            raise ValueError("params and grads differ in length")
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise NonFiniteError("non-finite gradient", step=self.step_count)
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p.shape != g.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


def opt_step(state, params, grads):
    return state.step(params, grads)


# --- gradient checking --------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_index: tuple
    n_checked: int
    tolerance: float

    @property
    def passed(self):
        return self.max_rel_err <= self.tolerance


def gradient_check(loss_fn, params, h=1e-5, tolerance=1e-4, floor=1e-8,
                   max_coords=10_000, rng=None):
    """Compare ``loss_fn(params) -> (loss, grads)`` against central differences.

    Relative error per coordinate is ``|analytic - numeric| / max(|numeric|, floor)``.
    Above ``max_coords`` parameters a random subset of that size is checked.
    ``params`` are perturbed in place and restored.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    _, analytic = loss_fn(params)
    coords = [(i, j) for i, p in enumerate(params) for j in range(p.size)]
    if len(coords) > max_coords:
        rng = rng if rng is not None else np.random.default_rng(0)
        pick = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[k] for k in sorted(pick)]
    worst, worst_idx = 0.0, None
    for i, j in coords:
        flat = params[i].reshape(-1)
        orig = flat[j]
        flat[j] = orig + h
        up, _ = loss_fn(params)
        flat[j] = orig - h
        down, _ = loss_fn(params)
        flat[j] = orig
        numeric = (up - down) / (2.0 * h)
        a = np.asarray(analytic[i]).reshape(-1)[j]
        rel = abs(a - numeric) / max(abs(numeric), floor)
        if worst_idx is None or rel > worst:
            worst, worst_idx = rel, (i, j)
    return GradCheckReport(float(worst), worst_idx, len(coords), tolerance)


# --- checkpoints ----------------------------------------------------------------

def save_mlp(path, net, byteorder="<"):
    if byteorder not in "<>":
        raise ValueError("byteorder must be '<' or '>'")
    with open(path, "wb") as fh:
        fh.write(MAGIC + byteorder.encode() + b"\x00" * 3)
        fh.write(struct.pack(f"{byteorder}I", len(net.sizes)))
        fh.write(struct.pack(f"{byteorder}{len(net.sizes)}I", *net.sizes))
        dt = np.dtype(np.float64).newbyteorder(byteorder)
        for p in net.params:
            fh.write(np.ascontiguousarray(p, dtype=dt).tobytes())


def load_mlp(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise ValueError(f"{path}: not an MLP checkpoint")
    order = blob[8:9].decode()
    if order not in "<>":
        raise ValueError(f"{path}: bad byte-order tag {order!r}")
    (n,) = struct.unpack_from(f"{order}I", blob, 12)
    sizes = struct.unpack_from(f"{order}{n}I", blob, 16)
    offset = 16 + 4 * n
    dt = np.dtype(np.float64).newbyteorder(order)
    params = []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        for shape in ((n_in, n_out), (n_out,)):
            count = int(np.prod(shape))
            arr = np.frombuffer(blob, dtype=dt, count=count, offset=offset)
            params.append(arr.astype(np.float64).reshape(shape))
            offset += 8 * count
    if offset != len(blob):
        raise ValueError(f"{path}: {len(blob) - offset} trailing bytes")
    return Mlp(tuple(sizes), params)


NATIVE_ORDER = "<" if sys.byteorder == "little" else ">"
