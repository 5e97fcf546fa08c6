"""Sparse linear regression with the Lasso and Slope estimators.

Analytic tuning rules, an adaptive sparsity selector, certifiers for
restricted-eigenvalue type conditions, seeded random designs and a
Monte-Carlo harness.
"""

from .adaptive import DyadicGrid, SelectionResult, SelectorConfig, run_adaptive, select_m_hat, threshold_w
from .conditions import (ConeSpec, ConstantBracket, certified_sre_lower, cone_constant_bracket,
                         cone_contains, cone_contains_many, small_ball_probe, sparse_eigenvalues,
                         wre_from_sre)
from .core import (C_SQ2, NoiseModel, dual_sorted_l1_norm, empirical_norm, h_g_values,
                   lq_norm, norm_decomposition_sides, rearrange_desc, slope_weights, sorted_l1_norm, stirling_bracket)
from .estimators import (FitResult, LassoConfig, SlopeConfig, TuningContext, duality_gap,
                         fit_lasso, fit_slope, kkt_residual, lambda_of_s, lasso_tuning_lambda,
                         oracle_remainders, universal_lambda)
from .harness import ExperimentConfig, ExperimentReport, simulate
from .prox import ProxRequest, prox_oracle, prox_sorted_l1
from .random_design import (DesignSpec, PackingSet, generate_design, generate_noise,
                            generate_packing, generate_sparse_beta, make_rng)

__version__ = "0.1.0"
__all__ = [name for name in dir() if not name.startswith("_")]
