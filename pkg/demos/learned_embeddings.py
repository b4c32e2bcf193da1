"""Train the contrastive transition model and watch duplicate actions merge.

Actions that are exact duplicates of one another move the agent identically,
so their learned embeddings should end up close together relative to the
embeddings of genuinely different moves.
"""
import numpy as np

from trail_il.data import generate_offline
from trail_il.envs import build_redundant_gridworld, default_grid
from trail_il.trail import EbmConfig, cluster_embeddings, group_distance_ratio, train_transition_ebm

world = build_redundant_gridworld(default_grid(redundancy=4))
n_s, n_a = world.mdp.n_states, world.mdp.n_actions
offline = generate_offline(world.mdp, np.full(n_s, 1.0 / n_s), 20_000, 0)

for steps in (200, 1000, 3000):
    model, log = train_transition_ebm(offline, EbmConfig(hidden=(64, 64), steps=steps, eval_every=steps), n_s, n_a)
    ratio, within, across = group_distance_ratio(model.phi_table(), world.phi_star)
    print(f"{steps:>5d} steps: loss {log[-1][1]:.3f}, within/across distance {ratio:.3f}")

phi = cluster_embeddings(model.phi_table(), 4)
print("clustered latent of each action at the start state:", phi[0].tolist())
print("true groups:                                       ", world.phi_star[0].tolist())
