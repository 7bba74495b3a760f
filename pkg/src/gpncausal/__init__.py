"""Bayesian estimation of intervention distributions in Gaussian process networks."""
from .causal_local import fit_local, local_curve, local_mixture
from .causal_mc import InterventionCurve, InterventionQuery, downstream_targets, intervene_known_dag, intervene_unknown_dag
from .errors import (AcyclicityError, ArchiveIntegrityError, CapacityError, DomainError, GpnError, NumericError,
                     OptimizationError, RangeError, UsageError)
from .gpn import fit_gpn, generate_fourier_gpn, simulate, true_intervention_expectation
from .graph import Dag, enumerate_dags, mutilate, topological_order
from .kernel_gp import HyperPrior, Hyperparams, gp_posterior, log_marginal_likelihood, sample_hyperparameters
from .linear_baseline import fit_linear_family, intervene_linear
from .stats_eval import WeightedSample, causal_effect_delta, credible_band, kde, wasserstein, weighted_hd_quantile
from .structure import FamilyCache, enumerate_posterior, sample_dags

__version__ = "0.1.0"
