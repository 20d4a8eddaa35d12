"""Monitoring a data stream with the running test and its confidence sequence.

Observations arrive one at a time.  The running statistic can be checked
after every observation without inflating the error rate.
"""
import numpy as np

from universal_cl import GaussianModel, Plugin, SequentialState, pairwise_weights

model = GaussianModel(2, [[1.0, 0.5], [0.5, 1.0]])
weights = pairwise_weights(2)
null = model.space.with_pins({0: 0.0, 1: 0.0})

stream = model.sample([0.35, 0.3], 400, seed=3)
state = SequentialState(model, weights, (0.0, 0.0), null, Plugin("moments"), significance_level=0.05)
for x in stream:
    state.update(x)
    if state.n % 50 == 0:
        p, p_min = state.p_values()
        print(f"n={state.n:3d} log M={state.log_m:7.3f} P={p:.4f} running min P={p_min:.4f}")
print("decision:", state.decision(0.05))

# Points that stay inside every set so far form the running intersection.
grid = [np.array([a, b]) for a in np.linspace(-0.4, 0.8, 13) for b in np.linspace(-0.6, 0.6, 13)]
inside = [t for t in grid if state.confseq_membership(t, 0.05)[1]]
print(f"{len(inside)} of {len(grid)} grid points remain in the running intersection at n={state.n}")
