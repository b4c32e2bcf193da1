"""How the imitation gap of latent BC shrinks with the number of expert pairs.

The mean gap over resampled datasets should fall roughly like 1/sqrt(n),
staying below the sample-complexity bound. A chart is written to
sample_complexity.svg.
"""
import numpy as np

from trail_il.cli import ExperimentConfig, build_env
from trail_il.plots import line_chart
from trail_il.theory import loglog_slope, optimal_decoder, theorem2_sweep

world, expert, d_off = build_env(ExperimentConfig())
mdp, phi = world.mdp, world.phi_star
decoder = optimal_decoder(np.outer(d_off, np.full(mdp.n_actions, 1.0 / mdp.n_actions)), phi, 4)
ns = [100, 300, 1000, 3000, 10_000]
rows = theorem2_sweep(mdp, expert, d_off, phi, mdp.transition[:, :4], decoder, ns, resamples=40, seed=0)
for r in rows:
    print(f"n={r['n']:>6d}  gap {r['mean_diff']:.4f} +- {r['stderr']:.4f}   bound {r['bound']:.3f}")
print(f"log-log slope {loglog_slope(ns, [r['mean_diff'] for r in rows]):.3f}")

svg = line_chart({"mean gap": (ns, [r["mean_diff"] for r in rows]),
                  "bound": (ns, [r["bound"] for r in rows])},
                 title="gap vs expert pairs", xlabel="n", ylabel="gap", logx=True, logy=True)
with open("sample_complexity.svg", "w") as fh:
    fh.write(svg)
