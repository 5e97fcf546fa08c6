"""Lasso and Slope solvers, tuning rules and bound constants.

Both estimators minimise the objective in the scaling used throughout the
package::

    ||X b - y||_n^2 + 2 * penalty(b),    ||u||_n^2 = sum(u**2) / n

with ``penalty = lam * ||b||_1`` (Lasso) or the sorted-l1 norm (Slope).
Note the factor 2 and the 1/n: most libraries minimise
``(1/2n)||y - Xb||^2 + lam ||b||_1`` instead, which has the same minimiser
for the same ``lam``, but half the objective value.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (C_SQ2, as_design, as_vector, as_weights,
                   dual_sorted_l1_norm, sorted_l1_norm)
from .prox import project_permutahedron, prox_sorted_l1, soft_threshold

SCHEMA_VERSION = 1


@dataclass
class LassoConfig:
    lam: float
    max_iters: int = 100_000
    gap_tol: float = None
    strategy: str = "fista"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.gap_tol is not None and not self.gap_tol > 0:
            raise ValueError("gap_tol must be positive")
        if self.strategy not in ("fista", "cd"):
            raise ValueError("strategy must be 'fista' or 'cd'")


@dataclass
class SlopeConfig:
    weights: np.ndarray
    max_iters: int = 100_000
    gap_tol: float = None

    def __post_init__(self):
        self.weights = as_weights(self.weights)
        if self.gap_tol is not None and not self.gap_tol > 0:
            raise ValueError("gap_tol must be positive")


@dataclass
class FitResult:
    coefficients: np.ndarray
    objective: float
    duality_gap: float
    iterations: int
    converged: bool
    kkt: float = float("nan")
    tuning: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "coefficients": [float(c) + 0.0 for c in self.coefficients],
            "objective": float(self.objective),
            "duality_gap": float(self.duality_gap),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "kkt_residual": float(self.kkt),
            "tuning": self.tuning,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass(frozen=True)
class TuningContext:
    """Constants of the sparsity-aware tuning rule.

    ``c0`` is the cone constant ``(1+gamma+tau)/(1-gamma-tau)``; with the
    defaults ``gamma=1/2, tau=1/4`` it equals 7.
    """

    s: int
    n: int
    p: int
    sigma: float = 1.0
    gamma: float = 0.5
    tau: float = 0.25
    delta0: float = 0.5

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0 <= self.tau < 1 - self.gamma:
            raise ValueError("tau must lie in [0, 1 - gamma)")
        if not 1 <= self.s <= self.p:
            raise ValueError("need 1 <= s <= p")
        if self.n < 1:
            raise ValueError("n must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not 0 < self.delta0 < 1:
            raise ValueError("delta0 must lie in (0, 1)")

    @property
    def c0(self):
        return (1 + self.gamma + self.tau) / (1 - self.gamma - self.tau)


# ---------------------------------------------------------------------------
# tuning rules

def lasso_tuning_lambda(ctx, multiplier=1.0):
    """Smallest lambda allowed by the sparsity-aware rule, times ``multiplier``.

    ``(4+sqrt2) sigma / gamma * sqrt(log(2ep/s) / n)``.
    """
    return multiplier * C_SQ2 * ctx.sigma / ctx.gamma \
        * math.sqrt(math.log(2 * math.e * ctx.p / ctx.s) / ctx.n)


def lambda_of_s(s, n, p, sigma):
    """Level-``s`` tuning used by the adaptive procedure (gamma = 1/2)."""
    return 2 * C_SQ2 * sigma * math.sqrt(math.log(2 * math.e * p / s) / n)


def universal_lambda(n, p, sigma, eps, delta=None):
    """``(1+eps) sigma sqrt(2 log(p/delta) / n)``; ``delta=None`` means 1."""
    if p < 2 or n < 1 or not sigma > 0 or not eps >= 0:
        raise ValueError("invalid inputs")
    if delta is None:
        delta = 1.0
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    return (1 + eps) * sigma * math.sqrt(2 * math.log(p / delta) / n)


def delta_of_lambda(lam, ctx):
    """``exp(-(gamma lam sqrt(n) / ((4+sqrt2) sigma))**2)``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    r = ctx.gamma * lam * math.sqrt(ctx.n) / (C_SQ2 * ctx.sigma)
    return math.exp(-r * r)


def lasso_bound_constant(ctx, lam, theta):
    """Oracle-inequality constant
    ``(1+gamma+tau)^2 * max(log(1/delta0) / (s log(1/delta(lam))), 1/theta^2)``.
    """
    if not theta > 0:
        raise ValueError("theta must be positive")
    ld = -math.log(delta_of_lambda(lam, ctx))
    first = math.log(1 / ctx.delta0) / (ctx.s * ld) if ld > 0 else math.inf
    return (1 + ctx.gamma + ctx.tau) ** 2 * max(first, 1 / theta ** 2)


def oracle_remainders(n, p, s, sigma, eps, kappa=1.0):
    """Remainder terms of the two universal-lambda oracle inequalities
    at the confidence level ``delta = p**-s``.

    Returns ``(tied, untied)``: the bound whose lambda is tied to delta, and
    the delta-free one carrying the additive 2.8.
    """
    log_inv_delta = s * math.log(p)
    tied = sigma ** 2 / n * ((1 + eps) * math.sqrt(2 * s * (math.log(p) + log_inv_delta)) / kappa
                             + math.sqrt(s) + math.sqrt(2 * log_inv_delta)) ** 2
    untied = sigma ** 2 / n * ((1 + eps) * math.sqrt(2 * s * math.log(p)) / kappa
                               + math.sqrt(s) + math.sqrt(2 * log_inv_delta) + 2.8) ** 2
    return tied, untied


# ---------------------------------------------------------------------------
# objective, gap, KKT

def _penalty(beta, kind, param):
    if kind == "l1":
        return param * float(np.sum(np.abs(beta)))
    return sorted_l1_norm(beta, param)


def objective(x, y, beta, kind, param):
    r = x @ beta - y
    return float(r @ r) / x.shape[0] + 2 * _penalty(beta, kind, param)


def duality_gap(x, y, beta, kind, param):
    """Fenchel duality gap of the full objective.

    The dual point is the residual rescaled into the dual-norm ball of the
    penalty (max-abs for l1, cumulative-sum ratio for sorted l1).
    """
    n = x.shape[0]
    r = y - x @ beta
    corr = x.T @ r / n
    if kind == "l1":
        dn = float(np.max(np.abs(corr))) / param if corr.size else 0.0
    else:
        dn = dual_sorted_l1_norm(corr, param)
    theta = r / max(1.0, dn)
    primal = 0.5 * float(r @ r) / n + _penalty(beta, kind, param)
    dual = 0.5 * (float(y @ y) - float((y - theta) @ (y - theta))) / n
    return 2 * max(primal - dual, 0.0)


def kkt_residual(x, y, beta, penalty):
    """Distance from ``-grad ||X b - y||_n^2`` to the penalty subdifferential.

    ``penalty`` is ``("l1", lam)`` or ``("sorted", weights)``; the penalty is
    taken as ``2 * lam ||b||_1`` or ``2 ||b||_*`` to match the objective.
    """
    kind, param = penalty
    x = as_design(x)
    y = as_vector(y)
    beta = as_vector(beta)
    n = x.shape[0]
    # work with half the objective: target z must lie in subdiff of the norm
    z = x.T @ (y - x @ beta) / n
    if kind == "l1":
        lam = float(param)
        nz = beta != 0
        res = np.where(nz, z - lam * np.sign(beta), np.maximum(np.abs(z) - lam, 0.0))
        return 2 * float(np.linalg.norm(res))
    if kind != "sorted":
        raise ValueError(f"unknown penalty kind {kind!r}")
    lam = as_weights(param, beta.size)
    a = np.abs(beta)
    order = np.argsort(-a, kind="stable")
    sq = 0.0
    i = 0
    p = beta.size
    while i < p:
        j = i
        while j + 1 < p and a[order[j + 1]] == a[order[i]]:
            j += 1
        idx = order[i:j + 1]
        if a[order[i]] == 0:
            # zero cluster: distance to the tail dual-norm ball
            tail = lam[i:]
            zs = z[idx]
            proj_res = prox_sorted_l1(point=zs, weights=tail) if np.any(tail > 0) else zs
            sq += float(proj_res @ proj_res)
            break
        sgn = np.sign(beta[idx])
        t = z[idx] * sgn
        proj = project_permutahedron(t, lam[i:j + 1])
        sq += float(np.sum((t - proj) ** 2))
        i = j + 1
    return 2 * math.sqrt(sq)


# ---------------------------------------------------------------------------
# solvers

def _default_gap_tol(y):
    return 1e-8 * (1 + float(y @ y) / y.size)


def _check(x, y, p_expected=None):
    x = as_design(x)
    y = as_vector(y, "response")
    if x.shape[0] != y.size:
        raise ValueError(f"design has {x.shape[0]} rows but response has {y.size} entries")
    if p_expected is not None and x.shape[1] != p_expected:
        raise ValueError("design columns and weights differ in length")
    return x, y


def _fista(x, y, kind, param, max_iters, gap_tol, check_every=10):
    """FISTA with backtracking and gradient-based adaptive restart from ``beta = 0``.

    Momentum is reset whenever it points against the last proximal step.
    Acceptance does not compare objective values, which stop separating
    iterates in floating point well before the duality gap closes; the
    iterate with the smallest observed gap is returned.
    """
    n, p = x.shape
    if kind == "l1":
        def prox(v, t):
            return soft_threshold(v, t * param)
    else:
        def prox(v, t):
            return prox_sorted_l1(point=v, weights=param, step=t)

    beta = np.zeros(p)
    z = beta.copy()
    t_k = 1.0
    # initial curvature guess from a power iteration on X^T X
    v = np.ones(p) / math.sqrt(p)
    for _ in range(20):
        w = x.T @ (x @ v)
        nv = np.linalg.norm(w)
        if nv == 0:
            break
        v = w / nv
    L = max(2 * float(v @ (x.T @ (x @ v))) / n, 1e-12)
    gap = duality_gap(x, y, beta, kind, param)
    best, best_gap = beta, gap
    it = 0
    while best_gap > gap_tol and it < max_iters:
        it += 1
        grad = 2 * x.T @ (x @ z - y) / n
        while True:
            cand = prox(z - grad / L, 2.0 / L)
            d = cand - z
            # for the quadratic loss f(c) - f(z) - <grad, d> = ||X d||_n^2 exactly;
            # testing that form avoids cancellation between two large values
            xd = x @ d
            if float(xd @ xd) / n <= 0.5 * L * float(d @ d) * (1 + 1e-12):
                break
            L *= 2.0
        if float((z - cand) @ (cand - beta)) > 0:
            t_k, z = 1.0, cand
        else:
            t_next = 0.5 * (1 + math.sqrt(1 + 4 * t_k * t_k))
            z = cand + ((t_k - 1) / t_next) * (cand - beta)
            t_k = t_next
        beta = cand
        if it % check_every == 0 or it < 3:
            gap = duality_gap(x, y, beta, kind, param)
            if gap < best_gap:
                best, best_gap = beta, gap
    if best is not beta:
        gap = duality_gap(x, y, beta, kind, param)
        if gap < best_gap:
            best, best_gap = beta, gap
    return best, it, best_gap


def _coordinate_descent(x, y, lam, max_iters, gap_tol):
    n, p = x.shape
    beta = np.zeros(p)
    r = y.copy()
    sq = np.sum(x * x, axis=0) / n
    gap = duality_gap(x, y, beta, "l1", lam)
    it = 0
    while gap > gap_tol and it < max_iters:
        it += 1
        for j in range(p):
            if sq[j] == 0:
                continue
            old = beta[j]
            rho = x[:, j] @ r / n + sq[j] * old
            new = soft_threshold(rho, lam) / sq[j]
            if new != old:
                r -= x[:, j] * (new - old)
                beta[j] = new
        gap = duality_gap(x, y, beta, "l1", lam)
    return beta, it, gap


def fit_lasso(x, y, cfg):
    """Minimise ``||X b - y||_n^2 + 2 lam ||b||_1``.

    Non-convergence is reported through ``converged=False``; the best
    iterate is still returned.
    """
    x, y = _check(x, y)
    tol = cfg.gap_tol if cfg.gap_tol is not None else _default_gap_tol(y)
    if cfg.strategy == "cd":
        beta, it, gap = _coordinate_descent(x, y, cfg.lam, cfg.max_iters, tol)
    else:
        beta, it, gap = _fista(x, y, "l1", cfg.lam, cfg.max_iters, tol)
    return FitResult(
        coefficients=beta,
        objective=objective(x, y, beta, "l1", cfg.lam),
        duality_gap=gap,
        iterations=it,
        converged=gap <= tol,
        kkt=kkt_residual(x, y, beta, ("l1", cfg.lam)),
        tuning={"estimator": "lasso", "lambda": float(cfg.lam)},
    )


def fit_slope(x, y, cfg):
    """Minimise ``||X b - y||_n^2 + 2 ||b||_*`` with the configured weights."""
    x, y = _check(x, y, cfg.weights.size)
    tol = cfg.gap_tol if cfg.gap_tol is not None else _default_gap_tol(y)
    beta, it, gap = _fista(x, y, "sorted", cfg.weights, cfg.max_iters, tol)
    return FitResult(
        coefficients=beta,
        objective=objective(x, y, beta, "sorted", cfg.weights),
        duality_gap=gap,
        iterations=it,
        converged=gap <= tol,
        kkt=kkt_residual(x, y, beta, ("sorted", cfg.weights)),
        tuning={"estimator": "slope", "weights": [float(w) for w in cfg.weights]},
    )
