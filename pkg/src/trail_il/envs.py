"""Synthetic environments whose raw actions factor through a small latent set.

``build_redundant_gridworld`` duplicates each cardinal move ``k`` times, so
the true action representation is ``a mod 4`` and the MDP is exactly
factored through four latent actions. ``PointMassEnv`` is the continuous
counterpart: a D-dimensional raw action acts only through a rank-2 map.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mdp_core import TabularMdp

# right, left, down, up as (dx, dy)
MOVES = ((1, 0), (-1, 0), (0, 1), (0, -1))
N_MOVES = len(MOVES)


@dataclass(frozen=True)
class GridSpec:
    width: int
    height: int
    goal: tuple
    walls: frozenset = field(default_factory=frozenset)
    slip_prob: float = 0.1
    redundancy: int = 1
    gamma: float = 0.95
    start: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "walls", frozenset(tuple(w) for w in self.walls))
        object.__setattr__(self, "goal", tuple(self.goal))
        if self.start is not None:
            object.__setattr__(self, "start", tuple(self.start))
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be positive")
        if self.redundancy < 1:
            raise ValueError("redundancy must be a positive integer")
        if not 0.0 <= self.slip_prob < 1.0:
            raise ValueError("slip_prob must lie in [0, 1)")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        for cell in (self.goal, *self.walls):
            if not (0 <= cell[0] < self.width and 0 <= cell[1] < self.height):
                raise ValueError(f"cell {cell} lies outside the grid")
        if self.goal in self.walls:
            raise ValueError("goal cannot be a wall")
        if self.start is not None and (self.start in self.walls or self.start == self.goal):
            raise ValueError("start must be a free non-goal cell")

    @property
    def n_actions(self):
        return N_MOVES * self.redundancy

    def cells(self):
        """Free cells in row-major order; the index in this list is the state id."""
        return [
            (x, y)
            for y in range(self.height)
            for x in range(self.width)
            if (x, y) not in self.walls
        ]

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        doc["walls"] = frozenset(tuple(w) for w in doc.get("walls", ()))
        return cls(**doc)

    def to_dict(self):
        return {
            "width": self.width,
            "height": self.height,
            "goal": list(self.goal),
            "walls": sorted(list(w) for w in self.walls),
            "slip_prob": self.slip_prob,
            "redundancy": self.redundancy,
            "gamma": self.gamma,
            "start": None if self.start is None else list(self.start),
        }


def default_grid(redundancy=16, slip_prob=0.1, gamma=0.95):
    """5x5 grid with two interior walls (23 free cells), goal in a corner."""
    return GridSpec(
        width=5, height=5, goal=(4, 4), walls=frozenset({(1, 1), (3, 2)}),
        slip_prob=slip_prob, redundancy=redundancy, gamma=gamma, start=(0, 0),
    )


@dataclass(frozen=True)
class Gridworld:
    spec: GridSpec
    mdp: TabularMdp
    phi_star: np.ndarray  # (|S|, |A|) latent index a mod 4
    reward: np.ndarray  # (|S|, |A|)
    cells: tuple
    goal_state: int

    @property
    def n_latent(self):
        return N_MOVES


def build_redundant_gridworld(spec):
    """Return the MDP, ground-truth action grouping and goal reward.

    The intended move succeeds with probability ``1 - slip_prob``; otherwise a
    uniformly random cardinal move is applied. Blocked moves stay in place and
    the goal is absorbing. Every duplicate of a move shares the same row.
    """
    cells = spec.cells()
    index = {c: i for i, c in enumerate(cells)}
    n_s = len(cells)
    goal = index[spec.goal]

    def target(cell, move):
        nxt = (cell[0] + move[0], cell[1] + move[1])
        return index.get(nxt, index[cell])

    base = np.zeros((n_s, N_MOVES, n_s))
    for s, cell in enumerate(cells):
        if s == goal:
            base[s, :, s] = 1.0
            continue
        for m, move in enumerate(MOVES):
            base[s, m, target(cell, move)] += 1.0 - spec.slip_prob
            for other in MOVES:
                base[s, m, target(cell, other)] += spec.slip_prob / N_MOVES
    # exact duplication: raw action a behaves like move a mod 4
    transition = np.tile(base, (1, spec.redundancy, 1))
    if spec.start is None:
        initial = np.ones(n_s)
        initial[goal] = 0.0
    else:
        initial = np.zeros(n_s)
        initial[index[spec.start]] = 1.0
    initial /= initial.sum()
    mdp = TabularMdp(transition, initial, spec.gamma)
    phi_star = np.tile(np.arange(spec.n_actions) % N_MOVES, (n_s, 1))
    reward = np.zeros((n_s, spec.n_actions))
    reward[goal] = 1.0
    return Gridworld(spec, mdp, phi_star, reward, tuple(cells), goal)


@dataclass(frozen=True)
class PointMassEnv:
    """2-d point mass driven through a fixed D -> 2 linear mixing."""

    mixing: np.ndarray  # (2, D), unit-norm rows
    dt: float = 0.1
    noise_std: float = 0.0
    low: float = -1.0
    high: float = 1.0

    def __post_init__(self):
        m = np.asarray(self.mixing, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != 2 or m.shape[1] < 2:
            raise ValueError(f"mixing must be 2 x D with D >= 2, got {m.shape}")
        if np.linalg.matrix_rank(m) != 2:
            raise ValueError("mixing must have rank 2")
        object.__setattr__(self, "mixing", m)

    @property
    def action_dim(self):
        return self.mixing.shape[1]

    @classmethod
    def random(cls, action_dim, rng, **kw):
        m = rng.standard_normal((2, action_dim))
        m /= np.linalg.norm(m, axis=1, keepdims=True)
        return cls(m, **kw)


def point_mass_step(state, action, env, rng):
    """``clip(state + dt * mixing @ action + noise)`` with noise from ``rng``."""
    state = np.asarray(state, dtype=np.float64)
    action = np.asarray(action, dtype=np.float64)
    if not (np.all(np.isfinite(state)) and np.all(np.isfinite(action))):
        raise ValueError("point_mass_step received non-finite input")
    nxt = state + env.dt * env.mixing @ action
    if env.noise_std > 0:
        nxt = nxt + env.noise_std * rng.standard_normal(2)
    return np.clip(nxt, env.low, env.high)
