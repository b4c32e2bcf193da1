"""Check the imitation-gap bound on the gridworld and on random MDPs.

With the true action grouping, the optimal decoder and the expert's own
latent policy, every term of the bound is zero and so is the gap. On random
instances the gap is usually a small fraction of the bound.
"""
import numpy as np

from trail_il.envs import build_redundant_gridworld, default_grid
from trail_il.mdp_core import value_iteration
from trail_il.theory import (
    marginalize_policy,
    optimal_decoder,
    random_theorem1_instance,
    theorem1_report,
)

world = build_redundant_gridworld(default_grid())
mdp, phi = world.mdp, world.phi_star
expert = value_iteration(mdp, world.reward)
d_off = np.full(mdp.n_states, 1.0 / mdp.n_states)
decoder = optimal_decoder(np.outer(d_off, np.full(mdp.n_actions, 1.0 / mdp.n_actions)), phi, 4)
rep = theorem1_report(mdp, expert, d_off, phi, mdp.transition[:, :4], decoder,
                      marginalize_policy(expert, phi, 4))
print(f"gridworld, ground truth: gap {rep.lhs:.2e}, bound {rep.rhs:.2e}")

rng = np.random.default_rng(0)
ratios = []
for i in range(200):
    r = random_theorem1_instance(rng, near_optimal=i % 2 == 1).report()
    assert r.holds
    if r.rhs > 0:
        ratios.append(r.lhs / r.rhs)
print(f"200 random instances hold; gap/bound median {np.median(ratios):.4f}, max {max(ratios):.4f}")
