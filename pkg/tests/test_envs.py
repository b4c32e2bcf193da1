import numpy as np
import pytest

from trail_il.envs import GridSpec, PointMassEnv, build_redundant_gridworld, default_grid, point_mass_step
from trail_il.mdp_core import TabularPolicy, state_visitation, value_iteration
from trail_il.theory import transition_term


def test_smallest_grid():
    g = build_redundant_gridworld(GridSpec(2, 1, goal=(1, 0), slip_prob=0.0, start=(0, 0)))
    assert (g.mdp.n_states, g.mdp.n_actions) == (2, 4)
    assert g.mdp.transition[0, 0, 1] == 1.0  # right
    assert g.mdp.transition[0, 1, 0] == 1.0  # left is blocked


def test_default_grid_dimensions():
    g = build_redundant_gridworld(default_grid())
    assert g.mdp.n_states == 23
    assert g.mdp.n_actions == 64
    assert g.mdp.initial[0] == 1.0


def test_duplicates_are_bitwise_identical():
    g = build_redundant_gridworld(default_grid(redundancy=3))
    t = g.mdp.transition
    for a in range(4, t.shape[1]):
        assert np.array_equal(t[:, a], t[:, a - 4])


def _tree_mean(rows):
    # halving sums of equal rows are exact in floating point
    while len(rows) > 1:
        rows = 0.5 * (rows[0::2] + rows[1::2])
    return rows[0]


def test_grouped_rows_reproduce_every_row():
    g = build_redundant_gridworld(default_grid())  # 16 copies per move
    t = g.mdp.transition
    for z in range(4):
        members = np.flatnonzero(g.phi_star[0] == z)
        for s in range(g.mdp.n_states):
            mean = _tree_mean(t[s, members])
            assert np.max(np.abs(t[s, members] - mean)) == 0.0


def test_ground_truth_factorisation_has_zero_error():
    g = build_redundant_gridworld(default_grid())
    d_off = np.full(g.mdp.n_states, 1.0 / g.mdp.n_states)
    assert transition_term(g.mdp, d_off, g.phi_star, g.mdp.transition[:, :4]) == 0.0


def test_expert_reaches_goal_without_slip():
    spec = default_grid(redundancy=2, slip_prob=0.0)
    g = build_redundant_gridworld(spec)
    pi = value_iteration(g.mdp, g.reward).greedy_actions()
    for start in range(g.mdp.n_states):
        s = start
        for _ in range(spec.width + spec.height):
            s = int(np.argmax(g.mdp.transition[s, pi[s]]))
        assert s == g.goal_state


def test_expert_concentrates_on_goal():
    g = build_redundant_gridworld(default_grid(redundancy=1))
    pi = value_iteration(g.mdp, g.reward)
    uni = TabularPolicy.uniform(g.mdp.n_states, 4)
    assert state_visitation(g.mdp, pi)[g.goal_state] > state_visitation(g.mdp, uni)[g.goal_state]


@pytest.mark.parametrize("kw", [
    dict(width=0, height=2, goal=(0, 0)),
    dict(width=2, height=2, goal=(1, 1), walls={(1, 1)}),
    dict(width=2, height=2, goal=(5, 1)),
    dict(width=2, height=2, goal=(1, 1), slip_prob=1.0),
    dict(width=2, height=2, goal=(1, 1), redundancy=0),
])
def test_invalid_specs(kw):
    with pytest.raises(ValueError):
        GridSpec(**kw)


def test_spec_dict_roundtrip():
    spec = default_grid()
    assert GridSpec.from_dict(spec.to_dict()) == spec


def test_point_mass():
    rng = np.random.default_rng(0)
    env = PointMassEnv(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), dt=1.0, low=-5, high=5)
    x = np.array([0.2, -0.3])
    assert np.array_equal(point_mass_step(x, np.zeros(3), env, rng), x)
    assert np.allclose(point_mass_step(x, np.array([1.0, 0, 0]), env, rng), x + [1.0, 0.0])
    # actions differing by a kernel direction land in the same place
    assert np.array_equal(point_mass_step(x, np.array([0.5, 0.1, 0.0]), env, rng),
                          point_mass_step(x, np.array([0.5, 0.1, 7.0]), env, rng))
    with pytest.raises(ValueError):
        point_mass_step(x, np.array([np.nan, 0, 0]), env, rng)
    with pytest.raises(ValueError):
        PointMassEnv(np.array([[1.0, 0.0], [2.0, 0.0]]))


def test_point_mass_noise_and_clip():
    env = PointMassEnv.random(5, np.random.default_rng(1), noise_std=0.1)
    assert np.allclose(np.linalg.norm(env.mixing, axis=1), 1.0)
    a = point_mass_step([0.0, 0.0], np.ones(5), env, np.random.default_rng(2))
    b = point_mass_step([0.0, 0.0], np.ones(5), env, np.random.default_rng(2))
    assert np.array_equal(a, b)
    far = point_mass_step([0.99, 0.99], 100 * np.ones(5), env, np.random.default_rng(3))
    assert np.all(np.abs(far) <= 1.0)
