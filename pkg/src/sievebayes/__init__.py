"""Sieve-prior density estimation on [0, 1] and the real line.

Histogram, frequency-polygon and Bernstein sieve priors with Dirichlet
weights, Barron-type estimators, exact best-L1 approximation, a
Gaussian-mixture sieve, and Monte-Carlo rate studies driven from the
``sievebayes`` command line tool.
"""
__version__ = "0.1.0"

from .core import (QuadratureRule, RandomSource, SlopeFit, StudyResult, chi_square,  # noqa: E402
                   fit_log_log_slope, hellinger, integrate, kl_and_v2, l1_distance, logsumexp,
                   read_observations, sample_dirichlet, stream, sup_distance)
from .densities import CATALOG_NAMES, TargetDensity, catalog_lookup, sample_iid  # noqa: E402
from .basis import (BinPartition, WeightedDensity, approx_error, basis_matrix,  # noqa: E402
                    projection_weights)
from .sieve import (DirichletSpec, ModelSizePrior, SievePrior, histogram_log_marginal,  # noqa: E402
                    l1_risk_study, mc_log_marginal, posterior)
from .barron import (BarronConfig, barron_estimator, chi2_risk_study, clt_study,  # noqa: E402
                     confidence_interval, posterior_mean_identity_check)
from .best_approx import best_l1_weights, lower_bound_study  # noqa: E402
from . import gaussian  # noqa: E402
