"""Exact tabular MDP machinery.

Everything here works on dense numpy arrays and solves linear systems
directly, so visitation distributions and the divergences built on top of
them are exact up to floating point.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ROW_TOL = 1e-12
DRIFT_TOL = 1e-10


class DimensionError(ValueError):
    """Array shapes do not agree."""


class SupportError(ValueError):
    """KL or chi-square requested where p has mass outside the support of q."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


def _check_simplex_rows(arr, name, tol=ROW_TOL):
    arr = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    if np.any(arr < 0):
        raise ValueError(f"{name} has negative entries")
    sums = arr.sum(axis=-1)
    bad = np.abs(sums - 1.0) > tol
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"{name} row {idx} sums to {sums[idx]!r}, not 1")
    return arr


def _frozen(arr):
    arr = np.array(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TabularMdp:
    """Finite MDP without rewards.

    ``transition[s, a]`` is the next-state distribution, ``initial`` the
    start distribution and ``gamma`` the discount.
    """

    transition: np.ndarray
    initial: np.ndarray
    gamma: float

    def __post_init__(self):
        t = _check_simplex_rows(self.transition, "transition")
        if t.ndim != 3 or t.shape[0] != t.shape[2]:
            raise DimensionError(f"transition must be |S|x|A|x|S|, got {t.shape}")
        mu = _check_simplex_rows(self.initial, "initial")
        if mu.shape != (t.shape[0],):
            raise DimensionError(f"initial has shape {mu.shape}, expected ({t.shape[0]},)")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        object.__setattr__(self, "transition", _frozen(t))
        object.__setattr__(self, "initial", _frozen(mu))
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def n_actions(self):
        return self.transition.shape[1]

    def to_json(self):
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.gamma,
            "initial": self.initial.tolist(),
            "transition": self.transition.tolist(),
        }

    @classmethod
    def from_json(cls, doc):
        mdp = cls(np.asarray(doc["transition"]), np.asarray(doc["initial"]), doc["gamma"])
        if (mdp.n_states, mdp.n_actions) != (doc["n_states"], doc["n_actions"]):
            raise DimensionError("declared n_states/n_actions do not match the tables")
        return mdp

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class TabularPolicy:
    """Row-stochastic |S| x |A| table."""

    probs: np.ndarray

    def __post_init__(self):
        p = _check_simplex_rows(self.probs, "policy")
        if p.ndim != 2:
            raise DimensionError(f"policy must be 2-d, got shape {p.shape}")
        object.__setattr__(self, "probs", _frozen(p))

    @property
    def n_states(self):
        return self.probs.shape[0]

    @property
    def n_actions(self):
        return self.probs.shape[1]

    @classmethod
    def deterministic(cls, actions, n_actions):
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((len(actions), n_actions))
        probs[np.arange(len(actions)), actions] = 1.0
        return cls(probs)

    @classmethod
    def uniform(cls, n_states, n_actions):
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    def greedy_actions(self):
        return np.argmax(self.probs, axis=1)


def as_dist(p, tol=ROW_TOL):
    """Validate a probability vector and return it as a read-only float array."""
    p = _check_simplex_rows(p, "distribution", tol)
    if p.ndim != 1:
        raise DimensionError(f"distribution must be 1-d, got shape {p.shape}")
    return p


def _check_policy(mdp, policy):
    probs = policy.probs if isinstance(policy, TabularPolicy) else np.asarray(policy)
    if probs.shape != (mdp.n_states, mdp.n_actions):
        raise DimensionError(
            f"policy shape {probs.shape} does not match MDP ({mdp.n_states}, {mdp.n_actions})"
        )
    return probs


def policy_transition(transition, probs):
    """State-to-state kernel ``P[s, s'] = sum_a pi(a|s) T(s'|s, a)``."""
    return np.einsum("sa,sap->sp", probs, transition)


def state_visitation(mdp, policy):
    """Discounted state visitation ``(1 - gamma) (I - gamma P_pi^T)^{-1} mu``.

    Solved with a dense LU factorisation. Entries in ``[-1e-10, 0)`` are
    clamped and the vector renormalised; anything more negative, or a total
    mass more than ``1e-10`` away from one, is treated as a bug.
    """
    probs = _check_policy(mdp, policy)
    p_pi = policy_transition(mdp.transition, probs)
    n = mdp.n_states
    lhs = np.eye(n) - mdp.gamma * p_pi.T
    try:
        d = (1.0 - mdp.gamma) * np.linalg.solve(lhs, mdp.initial)
    except np.linalg.LinAlgError as exc:  # cannot happen for gamma < 1
        raise RuntimeError("visitation system is singular") from exc
    if d.min() < -DRIFT_TOL or abs(d.sum() - 1.0) > DRIFT_TOL:
        raise RuntimeError(f"visitation solve drifted: min={d.min()!r}, sum={d.sum()!r}")
    d = np.clip(d, 0.0, None)
    return d / d.sum()


def tv(p, q):
    """Total variation distance ``0.5 * sum |p - q|``."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionError(f"shape mismatch {p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


def kl(p, q):
    """KL(p || q) with ``0 log 0 = 0``; raises SupportError if p is not << q."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionError(f"shape mismatch {p.shape} vs {q.shape}")
    bad = (p > 0) & (q <= 0)
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise SupportError(f"KL undefined: p>0 where q=0 at index {idx}", idx)
    mask = p > 0
    # clamp tiny negative rounding so the sum stays >= 0
    return max(float(np.sum(p[mask] * np.log(p[mask] / q[mask]))), 0.0)


def chi2(p, q):
    """Pearson chi-square ``sum (p - q)^2 / q`` over the support of q."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionError(f"shape mismatch {p.shape} vs {q.shape}")
    bad = (p > 0) & (q <= 0)
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise SupportError(f"chi-square undefined: p>0 where q=0 at index {idx}", idx)
    mask = q > 0
    return float(np.sum((p[mask] - q[mask]) ** 2 / q[mask]))


_DIVERGENCES = {"TV": tv, "KL": kl, "CHI2": chi2}


def divergence(kind, p, q):
    try:
        fn = _DIVERGENCES[kind.upper()]
    except KeyError:
        raise ValueError(f"unknown divergence {kind!r}; choose from {sorted(_DIVERGENCES)}") from None
    return fn(p, q)


def policy_diff(mdp, pi1, pi2):
    """TV distance between the two policies' discounted state visitations."""
    return tv(state_visitation(mdp, pi1), state_visitation(mdp, pi2))


def transition_err(d, pi1, pi2, tbar):
    """One-step mismatch ``0.5 * sum_s' |E_{s~d} sum_a tbar(s'|s,a)(pi1 - pi2)(a|s)|``."""
    d = np.asarray(d, dtype=np.float64)
    p1 = pi1.probs if isinstance(pi1, TabularPolicy) else np.asarray(pi1)
    p2 = pi2.probs if isinstance(pi2, TabularPolicy) else np.asarray(pi2)
    tbar = np.asarray(tbar, dtype=np.float64)
    n_s, n_a = p1.shape
    if p2.shape != p1.shape or d.shape != (n_s,) or tbar.shape[:2] != (n_s, n_a):
        raise DimensionError("transition_err inputs have inconsistent shapes")
    flow = np.einsum("s,sa,sap->p", d, p1 - p2, tbar)
    return 0.5 * float(np.abs(flow).sum())


def value_iteration(mdp, reward, tol=1e-10, max_iter=100_000):
    """Greedy deterministic policy for the discounted reward ``reward[s, a]``.

    Iterates until the sup-norm Bellman residual drops below ``tol``. Ties in
    the final argmax go to the lowest action index; values within 1e-12 of the
    max count as ties so float noise does not pick arbitrary actions.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    reward = np.asarray(reward, dtype=np.float64)
    if reward.shape != (mdp.n_states, mdp.n_actions):
        raise DimensionError(f"reward shape {reward.shape} does not match MDP")
    v = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        q = reward + mdp.gamma * mdp.transition @ v
        v_new = q.max(axis=1)
        if np.max(np.abs(v_new - v)) < tol:
            v = v_new
            break
        v = v_new
    q = reward + mdp.gamma * mdp.transition @ v
    ties = q >= q.max(axis=1, keepdims=True) - 1e-12
    return TabularPolicy.deterministic(np.argmax(ties, axis=1), mdp.n_actions)


def soften(policy, eps):
    """Mix a policy with the uniform policy: ``(1 - eps) pi + eps / |A|``."""
    probs = policy.probs
    return TabularPolicy((1.0 - eps) * probs + eps / probs.shape[1])


def rollout_visitation(mdp, policy, n_samples, rng):
    """Monte-Carlo estimate of d^pi from geometric-horizon rollouts."""
    probs = _check_policy(mdp, policy)
    counts = np.zeros(mdp.n_states)
    s = rng.choice(mdp.n_states, p=mdp.initial)
    for _ in range(n_samples):
        counts[s] += 1
        if rng.random() < 1.0 - mdp.gamma:
            s = rng.choice(mdp.n_states, p=mdp.initial)
            continue
        a = rng.choice(mdp.n_actions, p=probs[s])
        s = rng.choice(mdp.n_states, p=mdp.transition[s, a])
    return counts / n_samples


def random_mdp(rng, n_states, n_actions, gamma, concentration=1.0):
    """Dirichlet-random transitions and initial distribution."""
    alpha = np.full(n_states, concentration)
    transition = rng.dirichlet(alpha, size=(n_states, n_actions))
    initial = rng.dirichlet(alpha)
    return TabularMdp(transition, initial, gamma)


def random_policy(rng, n_states, n_actions, min_prob=1e-3):
    """Full-support random policy with every entry at least ``min_prob``."""
    raw = rng.dirichlet(np.ones(n_actions), size=n_states)
    return TabularPolicy(min_prob + (1.0 - n_actions * min_prob) * raw)
