"""Universal inference with composite likelihoods.

Split and swapped composite likelihood ratio confidence sets and tests,
always-valid sequential tests, p-value processes and confidence sequences,
plus a Monte Carlo / exact-enumeration harness for their guarantees.
"""
from .batch import (
    ConfidenceSetGrid,
    GridSpec,
    TestDecision,
    confset_grid,
    confset_membership,
    fit_plugins,
    reject_by_emptiness,
    split_clrt,
    swapped_clrt,
)
from .combinatorics import (
    Division,
    Subset,
    WeightScheme,
    conditional_weights,
    enumerate_divisions,
    enumerate_subsets,
    full_likelihood_weights,
    make_weights,
    marginal_weights,
    pairwise_weights,
    preset_weights,
)
from .estimation import FitResult, OptimizerSettings, Plugin, fit_mcle, plugin_estimator
from .likelihood import SplitSample, log_cl, log_cl_density, log_clrs, log_swapped_clrs, split_dataset
from .models import (
    CompositeModel,
    DiscreteTableModel,
    GaussianModel,
    ParamSpace,
    binary_loglinear,
    bivariate_bernoulli,
)
from .sequential import (
    SeqReport,
    SequentialState,
    confseq_membership,
    p_values,
    run_sequential,
    seq_decision,
    seq_init,
    seq_update,
)

__all__ = [
    "CompositeModel",
    "ConfidenceSetGrid",
    "DiscreteTableModel",
    "Division",
    "FitResult",
    "GaussianModel",
    "GridSpec",
    "OptimizerSettings",
    "ParamSpace",
    "Plugin",
    "SeqReport",
    "SequentialState",
    "SplitSample",
    "Subset",
    "TestDecision",
    "WeightScheme",
    "binary_loglinear",
    "bivariate_bernoulli",
    "conditional_weights",
    "confseq_membership",
    "confset_grid",
    "confset_membership",
    "enumerate_divisions",
    "enumerate_subsets",
    "fit_mcle",
    "fit_plugins",
    "full_likelihood_weights",
    "log_cl",
    "log_cl_density",
    "log_clrs",
    "log_swapped_clrs",
    "make_weights",
    "marginal_weights",
    "p_values",
    "pairwise_weights",
    "plugin_estimator",
    "preset_weights",
    "reject_by_emptiness",
    "run_sequential",
    "seq_decision",
    "seq_init",
    "seq_update",
    "split_clrt",
    "split_dataset",
    "swapped_clrt",
]

__version__ = "0.1.0"
