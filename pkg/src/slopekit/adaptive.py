"""Lepski-type aggregation of Lasso fits over a dyadic sparsity grid.

Lasso estimators are fitted at sparsity levels ``b_m = 2**(m-1)`` with the
level-``b`` tuning ``2(4+sqrt2) sigma sqrt(log(2ep/b)/n)``.  The selected
index is the smallest ``m`` from which every consecutive pair of fits stays
within twice the threshold ``w(b_k)``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .core import C_SQ2, as_design, as_vector, empirical_norm, lq_norm
from .estimators import FitResult, LassoConfig, fit_lasso, lambda_of_s, SCHEMA_VERSION


@dataclass(frozen=True)
class DyadicGrid:
    s_star: int

    def __post_init__(self):
        if self.s_star < 2:
            raise ValueError("s_star must be at least 2")

    @property
    def M(self):
        return int(math.floor(math.log2(self.s_star))) + 1

    @property
    def levels(self):
        return [2 ** (m - 1) for m in range(1, self.M + 1)]


@dataclass(frozen=True)
class SelectorConfig:
    """``metric`` is ``"prediction"`` or ``"lq"`` (with ``q`` in [1, 2]).

    ``c0_constant`` defaults to ``7(4+sqrt2)/(2 theta_star)`` for prediction
    and ``49(4+sqrt2)/(4 theta_star)`` for the l_q metric.
    """

    sigma: float = 1.0
    metric: str = "prediction"
    q: float = 2.0
    theta_star: float = 1.0
    c0_constant: float = None

    def __post_init__(self):
        if self.metric not in ("prediction", "lq"):
            raise ValueError("metric must be 'prediction' or 'lq'")
        if self.metric == "lq" and not 1 <= self.q <= 2:
            raise ValueError("q must lie in [1, 2]")
        if not 0 < self.theta_star <= 1:
            raise ValueError("theta_star must lie in (0, 1]")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def c0(self):
        if self.c0_constant is not None:
            return self.c0_constant
        if self.metric == "prediction":
            return 7 * C_SQ2 / (2 * self.theta_star)
        return 49 * C_SQ2 / (4 * self.theta_star)


@dataclass
class SelectionResult:
    m_hat: int
    s_hat: int
    beta_tilde: np.ndarray
    per_level_fits: list
    distances: list
    thresholds: list
    tilde_fit: FitResult = None
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "m_hat": int(self.m_hat),
            "s_hat": int(self.s_hat),
            "beta_tilde": [float(b) + 0.0 for b in self.beta_tilde],
            "distances": [float(d) for d in self.distances],
            "thresholds": [float(t) for t in self.thresholds],
            "levels": [f.tuning.get("level") for f in self.per_level_fits],
            "converged": all(f.converged for f in self.per_level_fits)
            and (self.tilde_fit is None or self.tilde_fit.converged),
            "config": self.config,
        }


def threshold_w(b, cfg, n, p):
    """Threshold ``w(b)`` of the selector for the configured metric."""
    if not 1 <= b <= p:
        raise ValueError("b must lie in [1, p]")
    root = math.sqrt(math.log(2 * math.e * p / b) / n)
    if cfg.metric == "prediction":
        return cfg.c0 * cfg.sigma * math.sqrt(b) * root
    return cfg.c0 * cfg.sigma * b ** (1.0 / cfg.q) * root


def select_m_hat(distances, thresholds, M):
    """Smallest ``m`` in ``2..M`` with ``d_k <= 2 w_k`` for all ``k >= m``.

    ``distances[k-2]`` and ``thresholds[k-2]`` belong to ``k = 2..M``.
    Falls back to ``M`` when no index qualifies.
    """
    if len(distances) != M - 1 or len(thresholds) != M - 1:
        raise ValueError("need one distance and threshold per k = 2..M")
    m_hat = M
    for k in range(M, 1, -1):
        if distances[k - 2] <= 2 * thresholds[k - 2]:
            m_hat = k
        else:
            break
    return m_hat


def _distance(x, a, b, cfg):
    if cfg.metric == "prediction":
        return empirical_norm(x @ (a - b))
    return lq_norm(a - b, cfg.q)


def run_adaptive(x, y, cfg, grid, *, max_iters=100_000, gap_tol=None):
    """Fit the dyadic Lasso family, select ``m_hat`` and return ``beta_tilde``."""
    x = as_design(x)
    y = as_vector(y, "response")
    n, p = x.shape
    if grid.s_star > p:
        raise ValueError("s_star exceeds p")
    fits = {}

    def fit_at(b):
        if b not in fits:
            lam = lambda_of_s(b, n, p, cfg.sigma)
            r = fit_lasso(x, y, LassoConfig(lam, max_iters=max_iters, gap_tol=gap_tol))
            r.tuning["level"] = int(b)
            fits[b] = r
        return fits[b]

    levels = grid.levels
    per_level = [fit_at(b) for b in levels]
    distances = [_distance(x, per_level[k - 1].coefficients, per_level[k - 2].coefficients, cfg)
                 for k in range(2, grid.M + 1)]
    thresholds = [threshold_w(levels[k - 1], cfg, n, p) for k in range(2, grid.M + 1)]
    m_hat = select_m_hat(distances, thresholds, grid.M)
    s_hat = 2 ** (m_hat - 1)
    tilde = fit_at(min(2 * s_hat, p))
    return SelectionResult(
        m_hat=m_hat, s_hat=s_hat, beta_tilde=tilde.coefficients.copy(),
        per_level_fits=per_level, distances=distances, thresholds=thresholds,
        tilde_fit=tilde,
        config={"metric": cfg.metric if cfg.metric == "prediction" else f"l{cfg.q:g}",
                "q": cfg.q if cfg.metric == "lq" else None,
                "c0": cfg.c0, "theta_star": cfg.theta_star, "sigma": cfg.sigma,
                "s_star": grid.s_star, "M": grid.M},
    )
