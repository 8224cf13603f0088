"""Approximated structured prediction for large graphical models.

Learns log-linear models on loopy factor graphs by block coordinate descent
on a local (fractional-entropy) approximation of the epsilon-soft-max
structured prediction objective.  ``epsilon = 1`` gives approximated CRFs,
``epsilon = 0`` approximated structured SVMs.
"""

from .graph import FactorGraph, build_chain, build_grid, greedy_coloring, is_acyclic
from .inference import (BeliefSet, InferenceMessages, approx_soft_max, extract_beliefs, predict,
                        run_norm_product)
from .learner import (MessageState, TrainingSet, TrainResult, TrainTrace, beliefs_from_state,
                      dual_objective, lambda_block_update, lambda_sweep, line_search,
                      primal_objective, project_beliefs, theta_gradient, train)
from .model import (FeatureSet, PotentialSet, TrainConfig, assemble_potentials, bethe_weights,
                    denoising_features, empirical_means, hamming_prior, load_model, save_model)
from .numerics import entropy, soft_max, soft_max_distribution
from .oracle import (ExactSummary, StateSpaceTooLarge, exact_losses, exact_marginals,
                     exact_soft_max, exact_sp_objective_and_gradient)

__all__ = [
    "approx_soft_max", "assemble_potentials", "beliefs_from_state", "BeliefSet", "bethe_weights",
    "build_chain", "build_grid", "denoising_features", "dual_objective", "empirical_means",
    "entropy", "exact_losses", "exact_marginals", "exact_soft_max",
    "exact_sp_objective_and_gradient", "ExactSummary", "extract_beliefs", "FactorGraph",
    "FeatureSet", "greedy_coloring", "hamming_prior", "InferenceMessages", "is_acyclic",
    "lambda_block_update", "lambda_sweep", "line_search", "load_model", "MessageState",
    "PotentialSet", "predict", "primal_objective", "project_beliefs", "run_norm_product",
    "save_model", "soft_max", "soft_max_distribution", "StateSpaceTooLarge", "theta_gradient",
    "train", "TrainConfig", "TrainingSet", "TrainResult", "TrainTrace",
]

__version__ = "0.1.0"
