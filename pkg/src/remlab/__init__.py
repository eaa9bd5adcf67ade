"""remlab: a simulation and verification lab for extremes of random-energy
models, branching random walks, the 2-d Gaussian free field, and
tree/hypercube percolation.

The package samples tree-structured Gaussian fields and exponential-weight
percolation instances with a counter-based, seed-reproducible generator,
computes exact extremal statistics over their leaf sets, and checks them
against closed-form predictions (leading orders, logarithmic corrections,
barrier and entropic-repulsion effects, Poisson window statistics) and
exact small-instance oracles.
"""

from .models import (BudgetExceededError, ModelValidationError, ModelSpec,
                     UnsupportedModelError, brw_model, grem_model,
                     interpolating_model, make_model, node_increment,
                     rem_model, stream_leaves)
from .montecarlo import MCEstimate, estimate, run_trials, trial_seeds
from .theory import (LevelPrediction, beta_c, percolation_constants,
                     predicted_level, solve_variational)

__version__ = "0.1.0"

__all__ = [
    "BudgetExceededError", "ModelValidationError", "ModelSpec",
    "UnsupportedModelError", "brw_model", "grem_model",
    "interpolating_model", "make_model", "node_increment", "rem_model",
    "stream_leaves", "MCEstimate", "estimate", "run_trials", "trial_seeds",
    "LevelPrediction", "beta_c", "percolation_constants", "predicted_level",
    "solve_variational", "__version__",
]
