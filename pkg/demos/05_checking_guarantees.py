"""Monte Carlo and exact checks of the validity guarantees.

Small replicate counts keep this quick; the acceptance suite runs the full
sizes.
"""
from universal_cl import GaussianModel, OptimizerSettings, Plugin, bivariate_bernoulli, conditional_weights, pairwise_weights
from universal_cl.harness import (
    ExperimentConfig,
    estimate_coverage,
    estimate_expectation_bound,
    estimate_random_stop_pvalue,
    exact_supermartingale_check,
    format_reports,
    simulate_trajectories,
)

fast = OptimizerSettings(restarts=1)
gauss = GaussianModel(2, [[1.0, 0.5], [0.5, 1.0]])

cfg = ExperimentConfig(gauss, (0.0, 0.0), pairwise_weights(2), n=30, levels=(0.05, 0.1), replicates=300, seed=1,
                       plugin=Plugin(settings=fast), settings=fast)
print(format_reports(estimate_coverage(cfg)))

bern = bivariate_bernoulli()
exact = ExperimentConfig(bern, (0.3, 0.6, 2.0), conditional_weights(2), n=2, guarantee="expectation")
print(format_reports(estimate_expectation_bound(exact, exact=True)))

steps = exact_supermartingale_check(bern, conditional_weights(2), (0.3, 0.6, 2.0), (0.5, 0.5, 1.0), max_history=1)
print(f"supermartingale step holds for {sum(s.holds for s in steps)} of {len(steps)} histories")

seq = ExperimentConfig(gauss, (0.0, 0.0), pairwise_weights(2), n=100, replicates=300, seed=2, guarantee="random_stop",
                       null_space=gauss.space.with_pins({0: 0.0, 1: 0.0}), plugin=Plugin("moments"), theta_init=(0.0, 0.0))
traj = simulate_trajectories(seq)
print(format_reports(estimate_random_stop_pvalue(seq, trajectories=traj, rules=("uniform", "argmin"))))
