"""Offline/expert dataset generation and the JSONL on-disk format."""
from __future__ import annotations

import gzip
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mdp_core import as_dist


class DatasetError(ValueError):
    """Malformed or out-of-range dataset file."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class EmptyDatasetError(DatasetError):
    pass


@dataclass
class OfflineDataset:
    """(s, a, s') triples. Tabular datasets hold integer index arrays."""

    s: np.ndarray
    a: np.ndarray
    sp: np.ndarray
    d_off: np.ndarray | None = None

    def __post_init__(self):
        if len(self.s) == 0:
            raise EmptyDatasetError("offline dataset is empty")
        if not (len(self.s) == len(self.a) == len(self.sp)):
            raise DatasetError("s, a, sp have different lengths")

    def __len__(self):
        return len(self.s)

    @property
    def tabular(self):
        return np.issubdtype(np.asarray(self.s).dtype, np.integer)

    def counts(self, n_states, n_actions):
        """Empirical transition counts ``N[s, a, s']``."""
        out = np.zeros((n_states, n_actions, n_states))
        np.add.at(out, (self.s, self.a, self.sp), 1.0)
        return out

    def __eq__(self, other):
        if not isinstance(other, OfflineDataset):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("s", "a", "sp"))


@dataclass
class ExpertDataset:
    """(s, a) pairs with optional episode start offsets."""

    s: np.ndarray
    a: np.ndarray
    episodes: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if len(self.s) == 0:
            raise EmptyDatasetError("expert dataset is empty")
        if len(self.s) != len(self.a):
            raise DatasetError("s and a have different lengths")

    def __len__(self):
        return len(self.s)

    @property
    def tabular(self):
        return np.issubdtype(np.asarray(self.s).dtype, np.integer)

    def __eq__(self, other):
        if not isinstance(other, ExpertDataset):
            return NotImplemented
        return np.array_equal(self.s, other.s) and np.array_equal(self.a, other.a)


def _sample_rows(rng, probs, rows):
    """Inverse-CDF draw of one category per requested row of ``probs``."""
    cdf = np.cumsum(probs[rows], axis=-1)
    u = rng.random(len(rows))[:, None]
    idx = (u >= cdf).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def generate_offline(mdp, d_off, m, seed):
    """i.i.d. triples ``s ~ d_off, a ~ Unif(A), s' ~ T(s, a)``."""
    if m < 1:
        raise ValueError("m must be at least 1")
    d_off = as_dist(d_off)
    if d_off.shape != (mdp.n_states,):
        raise ValueError("d_off does not match the number of states")
    rng = np.random.default_rng(seed)
    s = rng.choice(mdp.n_states, size=m, p=d_off)
    a = rng.integers(mdp.n_actions, size=m)
    flat = mdp.transition.reshape(-1, mdp.n_states)
    sp = _sample_rows(rng, flat, s * mdp.n_actions + a)
    return OfflineDataset(s.astype(np.int64), a.astype(np.int64), sp.astype(np.int64), d_off)


def generate_expert(mdp, expert, n, seed):
    """Roll out ``expert`` from mu, stopping each step with probability 1 - gamma.

    Pairs are concatenated across episodes until ``n`` are collected, so the
    state marginal approximates the discounted visitation d^pi.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    probs = expert.probs if hasattr(expert, "probs") else np.asarray(expert)
    rng = np.random.default_rng(seed)
    n_s, n_a = mdp.n_states, mdp.n_actions
    # pre-draw all uniforms: one block per step (start, action, next, stop)
    u = rng.random((n, 4))
    mu_cdf = np.cumsum(mdp.initial)
    pi_cdf = np.cumsum(probs, axis=1)
    t_cdf = np.cumsum(mdp.transition, axis=2)
    stop = 1.0 - mdp.gamma
    s_out = np.empty(n, dtype=np.int64)
    a_out = np.empty(n, dtype=np.int64)
    starts = [0]
    s = min(int(np.searchsorted(mu_cdf, u[0, 0], side="right")), n_s - 1)
    for i in range(n):
        a = min(int(np.searchsorted(pi_cdf[s], u[i, 1], side="right")), n_a - 1)
        s_out[i] = s
        a_out[i] = a
        if u[i, 3] < stop:
            nxt = i + 1 if i + 1 < n else i
            s = min(int(np.searchsorted(mu_cdf, u[nxt, 0], side="right")), n_s - 1)
            starts.append(i + 1)
        else:
            s = min(int(np.searchsorted(t_cdf[s, a], u[i, 2], side="right")), n_s - 1)
    episodes = np.array([b for b in starts if b < n], dtype=np.int64)
    return ExpertDataset(s_out, a_out, episodes)


# --- JSONL ------------------------------------------------------------------

def _open(path, mode):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def _fmt(value):
    arr = np.asarray(value)
    if arr.ndim == 0:
        if np.issubdtype(arr.dtype, np.integer):
            return str(int(arr))
        return format(float(arr), ".17g")
    return "[" + ",".join(_fmt(v) for v in arr) + "]"


def save_dataset(path, dataset):
    """Write one JSON object per line. Floats carry 17 significant digits."""
    keys = ("s", "a", "sp") if isinstance(dataset, OfflineDataset) else ("s", "a")
    cols = [getattr(dataset, k) for k in keys]
    with _open(path, "w") as fh:
        for row in zip(*cols):
            body = ",".join(f'"{k}":{_fmt(v)}' for k, v in zip(keys, row))
            fh.write("{" + body + "}\n")
    return dataset


def _to_array(values, line):
    arr = np.asarray(values)
    if arr.dtype == object:
        raise DatasetError("ragged vector field", line)
    if arr.ndim == 1 and arr.dtype.kind in "iu":
        return arr.astype(np.int64)
    return arr.astype(np.float64)


def load_dataset(path, n_states=None, n_actions=None):
    """Read a JSONL dataset; the record keys decide offline vs expert.

    When ``n_states``/``n_actions`` are given, tabular indices are range
    checked and the first offending line is reported.
    """
    rows = []
    with _open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON ({exc.msg})", lineno) from None
            if not isinstance(rec, dict) or "s" not in rec or "a" not in rec:
                raise DatasetError("record must be an object with 's' and 'a'", lineno)
            for key, bound in (("s", n_states), ("a", n_actions), ("sp", n_states)):
                v = rec.get(key)
                if bound is None or v is None or not isinstance(v, int):
                    continue
                if not 0 <= v < bound:
                    raise DatasetError(f"{key}={v} out of range [0, {bound})", lineno)
            rows.append((lineno, rec))
    if not rows:
        raise EmptyDatasetError(f"{path}: empty dataset")
    offline = "sp" in rows[0][1]
    for lineno, rec in rows:
        if ("sp" in rec) != offline:
            raise DatasetError("mixed offline and expert records", lineno)
    s = _to_array([r["s"] for _, r in rows], None)
    a = _to_array([r["a"] for _, r in rows], None)
    if offline:
        sp = _to_array([r["sp"] for _, r in rows], None)
        return OfflineDataset(s, a, sp)
    return ExpertDataset(s, a)
