"""Simulate event-level and snapshot data and summarize the panel.

The same equilibrium can be observed two ways: every state change with its
exact timestamp (an event log), or snapshots on a fixed sampling lattice (a
panel).  The snapshot law is the matrix exponential of the intensity
matrix, so snapshotting the event simulator must agree with the panel
simulator -- checked here on one-step transition frequencies.
"""

import numpy as np

from ctgames import solve_mpe, transition_matrix
from ctgames.equilibrium import aggregate_generator
from ctgames.experiments import experiment_spec
from ctgames.simulate import descriptive_stats, sample_discrete, simulate_continuous, to_panel

print(__doc__)

spec = experiment_spec(2, scale="desk", seed=7)
mpe = solve_mpe(spec.theta_true, spec.config)

log = simulate_continuous(spec.theta_true, mpe.ccp, spec.config,
                          n_markets=200, seed=7, horizon=5.0)
print(f"event log: {log.n_events} state changes across {log.n_markets} markets "
      f"observed for 5 time units each")
movers = np.bincount(log.actor + 1, minlength=spec.config.n_players + 1)
print(f"  moves by nature: {movers[0]}, by firms: {movers[1:]}")

panel = sample_discrete(spec.theta_true, mpe.ccp, spec.config,
                        n_markets=400, periods=25, seed=8)
stats = descriptive_stats(panel, spec.config)
print("\nsnapshot panel summary (400 markets x 25 periods):")
print(f"  active firms {stats['avg_active']:.3f} (sd {stats['sd_active']:.3f}), "
      f"AR(1) {stats['ar1']:.3f}")
print(f"  entrants/exits per period {stats['avg_entrants']:.3f}/"
      f"{stats['avg_exits']:.3f}, excess turnover {stats['excess_turnover']:.3f}")
print(f"  per-firm activity {np.round(stats['activity_prob'], 3)}")

# agreement between the two observation schemes
snap = to_panel(log, spec.config, periods=5)
counts = np.zeros((spec.config.n_states, spec.config.n_states))
states = snap.state.reshape(-1, 6)
for n in range(5):
    np.add.at(counts, (states[:, n], states[:, n + 1]), 1)
p_hat = counts / np.maximum(counts.sum(axis=1, keepdims=True), 1)
p_true = transition_matrix(aggregate_generator(mpe.ccp, spec.config), spec.config.delta)
visited = counts.sum(axis=1) > 50
gap = np.abs(p_hat[visited] - p_true[visited]).max()
print(f"\nsnapshotted event log vs matrix-exponential law: "
      f"max one-step frequency gap {gap:.3f} on well-visited rows "
      f"(shrinks with more markets)")
