"""Behavioral cloning in the raw action space, plus rollout evaluation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp_core import TabularPolicy
from .nn import Adam, NonFiniteError
from .trail import GaussianHead, HeadConfig, _philox, gaussian_nll


@dataclass
class GaussianPolicy:
    head: GaussianHead

    def sample(self, s, rng):
        mean, log_std = self.head.dist(np.atleast_2d(s))
        return (mean + np.exp(log_std) * rng.standard_normal(mean.shape))[0]


def tabular_bc(s, a, n_states, n_actions):
    """Count-based ``pi(a | s)``; unseen states get the uniform row."""
    counts = np.zeros((n_states, n_actions))
    np.add.at(counts, (np.asarray(s), np.asarray(a)), 1.0)
    tot = counts.sum(1, keepdims=True)
    return TabularPolicy(np.where(tot > 0, counts / np.maximum(tot, 1.0), 1.0 / n_actions))


def vanilla_bc(expert, mode="tabular", cfg=None, n_states=None, n_actions=None):
    """Maximum-likelihood policy on expert pairs.

    ``mode="tabular"`` needs ``n_states``/``n_actions``; ``mode="gaussian"``
    fits a diagonal-Gaussian MLP on vector states and actions.
    """
    if len(expert) == 0:
        raise ValueError("expert dataset is empty")
    if mode == "tabular":
        if n_states is None or n_actions is None:
            raise ValueError("tabular BC needs n_states and n_actions")
        return tabular_bc(expert.s, expert.a, n_states, n_actions)
    if mode != "gaussian":
        raise ValueError(f"unknown BC mode {mode!r}")
    cfg = cfg or HeadConfig()
    rng = _philox(cfg.seed, 5)
    s = np.atleast_2d(np.asarray(expert.s, dtype=np.float64))
    a = np.asarray(expert.a, dtype=np.float64).reshape(len(s), -1)
    head = GaussianHead.init(s.shape[1], a.shape[1], cfg.hidden, rng)
    opt = Adam(lr=cfg.lr)
    for step in range(1, cfg.steps + 1):
        idx = rng.integers(len(s), size=min(cfg.batch, len(s)))
        loss, grads, _, _ = gaussian_nll(head, s[idx], a[idx])
        if not np.isfinite(loss):
            raise NonFiniteError(f"BC loss diverged at step {step}", step=step)
        opt.step(head.net.params, grads)
    return GaussianPolicy(head)


# --- evaluation ---------------------------------------------------------------

@dataclass
class EvalSummary:
    mean_return: float
    stderr_return: float
    success_rate: float
    stderr_success: float
    per_seed_success: list

    def to_dict(self):
        return {
            "mean_return": self.mean_return,
            "stderr_return": self.stderr_return,
            "success_rate": self.success_rate,
            "stderr_success": self.stderr_success,
            "per_seed_success": self.per_seed_success,
        }


def run_episode(mdp, act, goal_state, rng, horizon, reward=None):
    """One rollout from mu; returns ``(discounted return, reached goal)``.

    ``act(s, rng)`` draws a raw action. The episode ends on reaching the goal.
    """
    t_cdf = np.cumsum(mdp.transition, axis=2)
    s = int(rng.choice(mdp.n_states, p=mdp.initial))
    ret = 0.0
    for t in range(horizon):
        if s == goal_state:
            return ret, True
        a = act(s, rng)
        if reward is not None:
            ret += mdp.gamma ** t * reward[s, a]
        s = min(int(np.searchsorted(t_cdf[s, a], rng.random(), side="right")), mdp.n_states - 1)
        if s == goal_state and reward is None:
            ret += mdp.gamma ** (t + 1)
    return ret, s == goal_state


def policy_actor(policy):
    probs = policy.probs

    def act(s, rng):
        return int(rng.choice(probs.shape[1], p=probs[s]))

    return act


def evaluate(mdp, act, goal_state, episodes=10, seeds=4, horizon=50, base_seed=0, reward=None):
    """Mean and standard error of return/success across ``seeds`` groups of episodes.

    Without an explicit reward the return is ``gamma^t`` at the first goal
    arrival (0 if never reached).
    """
    returns = np.zeros((seeds, episodes))
    success = np.zeros((seeds, episodes))
    for i in range(seeds):
        rng = np.random.default_rng([int(base_seed), i])
        for e in range(episodes):
            returns[i, e], success[i, e] = run_episode(mdp, act, goal_state, rng, horizon, reward)
    per_seed = success.mean(axis=1)
    per_ret = returns.mean(axis=1)

    def se(x):
        return float(x.std(ddof=1) / np.sqrt(len(x))) if len(x) > 1 else 0.0

    return EvalSummary(float(per_ret.mean()), se(per_ret), float(per_seed.mean()), se(per_seed),
                       per_seed.tolist())
