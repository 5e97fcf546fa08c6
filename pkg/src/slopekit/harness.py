"""Seeded Monte-Carlo experiments for the deviation and oracle bounds.

Every scenario returns an :class:`ExperimentReport` with one record per
replicate and order-independent aggregates.  Replicate ``r`` draws its
signal and noise from its own Philox stream, so reports do not depend on
the number of worker threads.

Monte-Carlo margins are one-sided, three binomial standard errors.
"""

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np
from scipy import stats

from .adaptive import DyadicGrid, SelectorConfig, run_adaptive
from .core import (C_SQ2, NoiseModel, empirical_norm, lq_norm, rearrange_desc,
                   slope_weights, sorted_l1_norm, stirling_bracket, write_csv_matrix)
from .estimators import (SCHEMA_VERSION, LassoConfig, SlopeConfig, TuningContext,
                         fit_lasso, fit_slope, lasso_tuning_lambda, universal_lambda)
from .random_design import (STREAM_BETA, STREAM_DESIGN, STREAM_MISC, STREAM_NOISE,
                            DesignSpec, generate_design, generate_noise,
                            generate_packing, generate_sparse_beta, make_rng,
                            replicate_rng)

log = logging.getLogger(__name__)

SCENARIOS = ("event", "oracle-lasso", "oracle-slope", "adaptive", "rate",
             "lower-bound", "subgaussian-noise")


@dataclass
class ExperimentConfig:
    scenario: str
    design: DesignSpec = field(default_factory=lambda: DesignSpec("orthonormal", 200, 100))
    noise: NoiseModel = field(default_factory=NoiseModel)
    s: int = 3
    s_star: int = 16
    gamma: float = 0.5
    tau: float = 0.25
    a_constant: float = 2 * C_SQ2
    delta0: float = 0.1
    replicates: int = 500
    seed: int = 0
    amplitude: float = 10.0
    lambda_multiplier: float = 1.0
    theta: float = None
    q_values: tuple = (1.0, 1.5, 2.0)
    # event / subgaussian-noise
    p_values: tuple = None
    main_event_replicates: int = 1000
    # adaptive
    metric: str = "prediction"
    q: float = 2.0
    theta_star: float = 1.0
    # rate
    grid: tuple = None
    estimators: tuple = ("slope", "lasso", "lasso-universal")
    universal_eps: float = 0.0
    # lower-bound
    packing_q: float = 2.0
    packing_size: int = 32
    packing_attempts: int = 10_000
    alpha: float = None
    c_tilde: float = 0.1
    # solver
    max_iters: int = 100_000
    gap_tol: float = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if isinstance(self.design, dict):
            self.design = DesignSpec.from_dict(self.design)
        if isinstance(self.noise, dict):
            self.noise = NoiseModel(**self.noise)
        self.q_values = tuple(float(q) for q in self.q_values)
        if self.p_values is not None:
            self.p_values = tuple(int(p) for p in self.p_values)
        if self.grid is not None:
            self.grid = tuple(tuple(int(v) for v in g) for g in self.grid)
        self.estimators = tuple(self.estimators)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "design":
                v = v.to_dict()
            elif f.name == "noise":
                v = {"kind": v.kind, "sigma": v.sigma}
            elif isinstance(v, tuple):
                v = [list(t) if isinstance(t, tuple) else t for t in v]
            out[f.name] = v
        return out


@dataclass
class ExperimentReport:
    config: dict
    aggregates: dict
    records: list
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        return _clean({"schema_version": SCHEMA_VERSION, "config": self.config,
                       "aggregates": self.aggregates, "records": self.records,
                       "metadata": self.metadata})

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True, allow_nan=False)

    def write_csv(self, path):
        rows = [_flatten(r) for r in self.records]
        cols = []
        for r in rows:
            for k in r:
                if k not in cols:
                    cols.append(k)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in rows:
                w.writerow([_fmt(r.get(c)) for c in cols])


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    if v is None:
        return ""
    return str(v)


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "_"))
        else:
            out[key] = v
    return out


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    return v


def binomial_summary(flags):
    """Frequency and binomial standard error of a boolean sequence."""
    flags = np.asarray(flags, dtype=bool)
    m = flags.size
    f = float(flags.mean()) if m else float("nan")
    se = math.sqrt(f * (1 - f) / m) if m else float("nan")
    return {"frequency": f, "se": se, "count": int(flags.sum()), "trials": m}


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return {"mean": float(x.mean()), "se": 0.0}
    return {"mean": float(x.mean()), "se": float(x.std(ddof=1) / math.sqrt(x.size))}


def _map(fn, n, threads):
    if threads is None or threads <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(n)))


def _design(cfg, index=0, spec=None):
    spec = spec or cfg.design
    return generate_design(spec, cfg.seed, rng=make_rng(cfg.seed, (STREAM_DESIGN << 32) ^ index))


def _theta(cfg):
    if cfg.theta is not None:
        return float(cfg.theta)
    if cfg.design.kind == "orthonormal":
        return 1.0
    raise ValueError("theta is unknown for a non-orthonormal design; bracket it "
                     "with the conditions module and pass it as 'theta'")


def _model_draw(cfg, x, r):
    n, p = x.shape
    beta = generate_sparse_beta(p, cfg.s, cfg.amplitude, cfg.seed,
                                rng=replicate_rng(cfg.seed, STREAM_BETA, r))
    xi = generate_noise(cfg.noise, n, cfg.seed, rng=replicate_rng(cfg.seed, STREAM_NOISE, r))
    return beta, xi, x @ beta + xi


# ---------------------------------------------------------------------------
# deviation events

def _probe_directions(x, g, rng, k_random=8):
    """Directions for the all-u events: sparse and dense random ones plus
    directions aligned with the largest correlations in ``g``."""
    n, p = x.shape
    U = []
    for k in sorted({1, 2, 4, 8, 16, p} & set(range(1, p + 1))):
        u = np.zeros(p)
        J = rng.choice(p, size=k, replace=False)
        u[J] = rng.standard_normal(k)
        U.append(u)
    for _ in range(k_random):
        U.append(rng.standard_normal(p))
    order = np.argsort(-np.abs(g), kind="stable")
    k = 1
    while k <= p:
        u = np.zeros(p)
        u[order[:k]] = np.sign(g[order[:k]])
        U.append(u)
        v = np.zeros(p)
        v[order[:k]] = g[order[:k]]
        U.append(v)
        k *= 2
    U.append(g.copy())
    return np.array(U)


def _event_one_p(cfg, p, index, threads):
    spec = DesignSpec(cfg.design.kind, max(cfg.design.n, p) if cfg.design.kind == "orthonormal"
                      else cfg.design.n, p, cfg.design.normalize, cfg.design.sigma_matrix)
    x = _design(cfg, index, spec)
    n = x.shape[0]
    sigma = cfg.noise.sigma
    j = np.arange(1, p + 1)
    root = np.sqrt(np.log(2.0 * p / j))
    hw = C_SQ2 * sigma * np.sqrt(np.log(2.0 * p / j) / n)
    gconst = C_SQ2 * sigma * math.sqrt(math.log(1 / cfg.delta0) / n)

    def one(r):
        xi = generate_noise(cfg.noise, n, cfg.seed,
                            rng=replicate_rng(cfg.seed, STREAM_NOISE, (index << 24) ^ r))
        g = x.T @ xi / math.sqrt(n)
        ratio = float(np.max(rearrange_desc(g) / (sigma * root)))
        rec = {"p": p, "replicate": r, "max_ratio": ratio, "event_e2": ratio <= 4.0}
        if r < cfg.main_event_replicates:
            U = _probe_directions(x, g, replicate_rng(cfg.seed, STREAM_MISC, (index << 24) ^ r))
            lhs = U @ g / math.sqrt(n)
            H = np.sort(np.abs(U), axis=1)[:, ::-1] @ hw
            G = gconst * np.sqrt(np.sum((U @ x.T) ** 2, axis=1) / n)
            slack = np.maximum(H, G) - lhs
            rec["main_event"] = bool(np.all(slack >= -1e-12 * np.maximum(H, G)))
            rec["main_event_min_slack_ratio"] = float(np.min(lhs / np.maximum(np.maximum(H, G), 1e-300)))
        return rec

    return _map(one, cfg.replicates, threads)


def event_probability(cfg, threads=1):
    if cfg.noise.kind != "gaussian":
        raise ValueError("the event scenario needs gaussian noise")
    p_values = cfg.p_values or (cfg.design.p,)
    records, agg = [], {}
    for idx, p in enumerate(p_values):
        recs = _event_one_p(cfg, p, idx, threads)
        records.extend(recs)
        e2 = binomial_summary([r["event_e2"] for r in recs])
        e2["theory_lower_bound"] = 0.5
        e2["passes"] = e2["frequency"] >= 0.5 - 3 * e2["se"]
        main = [r["main_event"] for r in recs if "main_event" in r]
        me = binomial_summary(main)
        me["level"] = 1 - cfg.delta0 / 2
        me["passes"] = me["frequency"] >= me["level"] - 3 * me["se"]
        me["note"] = "necessary-condition check over sampled directions"
        agg[f"p={p}"] = {"sorted_gaussian_event": e2, "main_event": me}
    return ExperimentReport(cfg.to_dict(), agg, records)


def subgaussian_noise_check(cfg, threads=1):
    if cfg.noise.kind == "gaussian":
        raise ValueError("use the event scenario for gaussian noise")
    x = _design(cfg)
    n, p = x.shape
    sigma = cfg.noise.sigma
    j = np.arange(1, p + 1)
    hw = np.sqrt(np.log(2.0 * p / j) / n)
    gfac = (math.sqrt(math.pi / 2) + math.sqrt(2 * math.log(1 / cfg.delta0))) / math.sqrt(n)

    def one(r):
        xi = generate_noise(cfg.noise, n, cfg.seed, rng=replicate_rng(cfg.seed, STREAM_NOISE, r))
        g = x.T @ xi / math.sqrt(n)
        U = _probe_directions(x, g, replicate_rng(cfg.seed, STREAM_MISC, r))
        lhs = U @ g / math.sqrt(n)
        rhs = 40 * sigma * np.maximum(np.sort(np.abs(U), axis=1)[:, ::-1] @ hw,
                                      np.sqrt(np.sum((U @ x.T) ** 2, axis=1) / n) * gfac)
        return {"replicate": r, "holds": bool(np.all(lhs <= rhs)),
                "max_lhs_over_rhs": float(np.max(lhs / np.maximum(rhs, 1e-300)))}

    records = _map(one, cfg.replicates, threads)
    b = binomial_summary([r["holds"] for r in records])
    b["level"] = 1 - cfg.delta0
    b["passes"] = b["frequency"] >= b["level"] - 3 * b["se"]
    return ExperimentReport(cfg.to_dict(), {"subgaussian_event": b}, records)


# ---------------------------------------------------------------------------
# oracle inequalities

def oracle_check_lasso(cfg, threads=1):
    x = _design(cfg)
    n, p = x.shape
    s, sigma = cfg.s, cfg.noise.sigma
    theta = _theta(cfg)
    ctx = TuningContext(s=s, n=n, p=p, sigma=sigma, gamma=cfg.gamma, tau=cfg.tau,
                        delta0=cfg.delta0)
    lam = lasso_tuning_lambda(ctx, cfg.lambda_multiplier)
    rhs_pred = 49 * lam ** 2 * s / (16 * theta ** 2)
    rhs_q = {q: 49 * lam * s ** (1 / q) / (8 * theta ** 2) for q in cfg.q_values}
    lc = LassoConfig(lam, max_iters=cfg.max_iters, gap_tol=cfg.gap_tol)

    def one(r):
        beta, xi, y = _model_draw(cfg, x, r)
        fit = fit_lasso(x, y, lc)
        d = fit.coefficients - beta
        pred = empirical_norm(x @ d) ** 2
        rec = {"replicate": r, "pred_err": pred, "soi_lhs": lam / 2 * lq_norm(d, 1) + pred,
               "pred_violation": pred > rhs_pred,
               "soi_violation": lam / 2 * lq_norm(d, 1) + pred > rhs_pred,
               "converged": fit.converged}
        for q in cfg.q_values:
            e = lq_norm(d, q)
            rec[f"err_l{q:g}"] = e
            rec[f"l{q:g}_violation"] = e > rhs_q[q]
        return rec

    records = _map(one, cfg.replicates, threads)
    theory_prob = 0.5 * (s / (2 * math.e * p)) ** (s / theta ** 2)
    agg = {"lambda": lam, "theta": theta, "rhs_pred": rhs_pred,
           "theory_violation_bound": theory_prob}
    for key in ["pred_violation", "soi_violation"] + [f"l{q:g}_violation" for q in cfg.q_values]:
        b = binomial_summary([rr[key] for rr in records])
        b["passes"] = b["frequency"] <= theory_prob + 3 * b["se"]
        agg[key] = b
    for q in cfg.q_values:
        agg[f"rhs_l{q:g}"] = rhs_q[q]
    ms = _mean_se([rr["pred_err"] for rr in records])
    exp_rhs = 49 * lam ** 2 * s / 16 * (1 / theta ** 2 + 1 / (2 * math.log(2 * math.e * p)))
    agg["mean_pred_err"] = dict(ms, rhs=exp_rhs, passes=ms["mean"] <= exp_rhs + 3 * ms["se"])
    for q in cfg.q_values:
        mq = _mean_se([rr[f"err_l{q:g}"] ** q for rr in records])
        rq = (49 / 8) ** q * lam ** q * s * (1 / theta ** (2 * q) + 1 / math.log(2 * math.e * p) ** q)
        agg[f"mean_l{q:g}_pow"] = dict(mq, rhs=rq, passes=mq["mean"] <= rq + 3 * mq["se"])
    agg["all_converged"] = all(rr["converged"] for rr in records)
    return ExperimentReport(cfg.to_dict(), agg, records)


def equival_bracket_holds(n, p, sigma, a):
    """Check ``A^2 s log(2p/s) <= n/sigma^2 * sum_{j<=s} w_j^2 <= A^2 s log(2ep/s)`` for all s."""
    w2 = np.cumsum(slope_weights(n, p, sigma, a) ** 2)
    for s in range(1, p + 1):
        lo, _, hi = stirling_bracket(s, p)
        scale = a * a * sigma * sigma / n
        if not (scale * lo <= w2[s - 1] * (1 + 1e-12) and w2[s - 1] <= scale * hi * (1 + 1e-12)):
            return False
    return True


def oracle_check_slope(cfg, threads=1):
    if cfg.a_constant < 2 * C_SQ2 - 1e-12:
        raise ValueError("the slope bounds need a_constant >= 2(4+sqrt2)")
    x = _design(cfg)
    n, p = x.shape
    s, sigma = cfg.s, cfg.noise.sigma
    theta = _theta(cfg)
    w = slope_weights(n, p, sigma, cfg.a_constant)
    cum2 = np.cumsum(w ** 2)
    sum_s = float(cum2[s - 1])
    rhs_l2sq = 9 * sum_s / (4 * theta ** 4)
    rhs_soi = 49 * sum_s / (16 * theta ** 2)
    sc = SlopeConfig(w, max_iters=cfg.max_iters, gap_tol=cfg.gap_tol)
    exp_c = 49 / 16 * (1 / theta ** 2 + 1 / (2 * math.log(2 * p)))

    def one(r):
        beta, xi, y = _model_draw(cfg, x, r)
        fit = fit_slope(x, y, sc)
        d = fit.coefficients - beta
        pred = empirical_norm(x @ d) ** 2
        l2sq = float(d @ d)
        star = sorted_l1_norm(d, w)
        # best k-term approximations of the truth, k = 0..s
        order = np.argsort(-np.abs(beta), kind="stable")
        balanced = math.inf
        for k in range(0, s + 1):
            bk = np.zeros(p)
            bk[order[:k]] = beta[order[:k]]
            approx = empirical_norm(x @ (bk - beta)) ** 2
            pen = exp_c * (float(cum2[k - 1]) if k else 0.0)
            balanced = min(balanced, approx + pen)
        return {"replicate": r, "pred_err": pred, "l2sq_err": l2sq, "sorted_l1_err": star,
                "l2sq_violation": l2sq > rhs_l2sq,
                "soi_violation": 0.5 * star + pred > rhs_soi,
                "balanced_rhs": balanced, "converged": fit.converged}

    records = _map(one, cfg.replicates, threads)
    prob_l2 = 0.5 * (s / (2 * p)) ** (s / theta ** 2)
    agg = {"theta": theta, "sum_lambda_sq": sum_s, "rhs_l2sq": rhs_l2sq, "rhs_soi": rhs_soi,
           "theory_violation_bound": prob_l2,
           "equival_bracket_all_s": equival_bracket_holds(n, p, sigma, cfg.a_constant)}
    for key in ("l2sq_violation", "soi_violation"):
        b = binomial_summary([rr[key] for rr in records])
        b["passes"] = b["frequency"] <= prob_l2 + 3 * b["se"]
        agg[key] = b
    ms = _mean_se([rr["pred_err"] for rr in records])
    agg["mean_pred_err"] = dict(ms, rhs=exp_c * sum_s,
                                passes=ms["mean"] <= exp_c * sum_s + 3 * ms["se"])
    ml = _mean_se([rr["l2sq_err"] for rr in records])
    r_l2 = 9 * sum_s / 4 * (1 / theta ** 4 + 1 / math.log(2 * p) ** 2)
    agg["mean_l2sq_err"] = dict(ml, rhs=r_l2, passes=ml["mean"] <= r_l2 + 3 * ml["se"])
    agg["balanced_rhs_mean"] = float(np.mean([rr["balanced_rhs"] for rr in records]))
    agg["all_converged"] = all(rr["converged"] for rr in records)
    return ExperimentReport(cfg.to_dict(), agg, records)


# ---------------------------------------------------------------------------
# rate, adaptation, lower bound

def rate_regression(cfg, grid=None, threads=1):
    """Regress log mean prediction error on ``log(sigma^2 s log(2ep/s) / n)``."""
    grid = grid or cfg.grid
    if not grid or len(grid) < 2:
        raise ValueError("rate regression needs at least two grid points")
    sigma = cfg.noise.sigma
    rates = [sigma ** 2 * s * math.log(2 * math.e * p / s) / n for n, p, s in grid]
    records = []
    for gi, (n, p, s) in enumerate(grid):
        spec = DesignSpec(cfg.design.kind, n, p, cfg.design.normalize, cfg.design.sigma_matrix)
        x = _design(cfg, gi, spec)
        sub = ExperimentConfig(scenario="rate", design=spec, noise=cfg.noise, s=s,
                               amplitude=cfg.amplitude, seed=cfg.seed)
        ctx = TuningContext(s=s, n=n, p=p, sigma=sigma, gamma=cfg.gamma, tau=cfg.tau)
        configs = {
            "lasso": LassoConfig(lasso_tuning_lambda(ctx, cfg.lambda_multiplier),
                                 max_iters=cfg.max_iters, gap_tol=cfg.gap_tol),
            "lasso-universal": LassoConfig(universal_lambda(n, p, sigma, cfg.universal_eps),
                                           max_iters=cfg.max_iters, gap_tol=cfg.gap_tol),
            "slope": SlopeConfig(slope_weights(n, p, sigma, cfg.a_constant),
                                 max_iters=cfg.max_iters, gap_tol=cfg.gap_tol),
        }

        def one(r, gi=gi, x=x, sub=sub, n=n, p=p, s=s, configs=configs):
            beta, xi, y = _model_draw(sub, x, (gi << 24) ^ r)
            rec = {"grid_index": gi, "n": n, "p": p, "s": s, "replicate": r,
                   "rate": rates[gi]}
            for est in cfg.estimators:
                c = configs[est]
                fit = fit_slope(x, y, c) if est == "slope" else fit_lasso(x, y, c)
                rec[f"pred_err_{est}"] = empirical_norm(x @ (fit.coefficients - beta)) ** 2
            return rec

        records.extend(_map(one, cfg.replicates, threads))
    agg = {"rates": rates}
    lr = np.log(rates)
    for est in cfg.estimators:
        means = [float(np.mean([r[f"pred_err_{est}"] for r in records if r["grid_index"] == gi]))
                 for gi in range(len(grid))]
        fit = stats.linregress(lr, np.log(means))
        agg[est] = {"mean_pred_err": means, "slope": float(fit.slope),
                    "slope_se": float(fit.stderr), "intercept": float(fit.intercept),
                    "r_squared": float(fit.rvalue ** 2)}
    agg["rate_span"] = max(rates) / min(rates)
    return ExperimentReport(cfg.to_dict(), agg, records)


def adaptive_check(cfg, threads=1):
    x = _design(cfg)
    n, p = x.shape
    s, sigma = cfg.s, cfg.noise.sigma
    if not (s <= cfg.s_star <= p / (2 * math.e)):
        raise ValueError("need s <= s_star <= p/(2e)")
    grid = DyadicGrid(cfg.s_star)
    sel = SelectorConfig(sigma=sigma, metric=cfg.metric, q=cfg.q, theta_star=cfg.theta_star)
    m0 = next(m for m in range(1, grid.M + 2) if 2 ** (m - 1) >= s)
    if cfg.metric == "prediction":
        scale = sel.c0 * sigma * math.sqrt(s * math.log(2 * math.e * p / s) / n)
    else:
        scale = sel.c0 * sigma * s ** (1 / cfg.q) * math.sqrt(math.log(2 * math.e * p / s) / n)

    def one(r):
        beta, xi, y = _model_draw(cfg, x, r)
        res = run_adaptive(x, y, sel, grid, max_iters=cfg.max_iters, gap_tol=cfg.gap_tol)
        d = res.beta_tilde - beta
        err = empirical_norm(x @ d) if cfg.metric == "prediction" else lq_norm(d, cfg.q)
        chain_ok = True
        if res.m_hat <= min(m0, grid.M):
            m_top = min(m0, grid.M)
            fits = res.per_level_fits
            a = fits[res.m_hat - 1].coefficients
            b = fits[m_top - 1].coefficients
            dd = empirical_norm(x @ (a - b)) if cfg.metric == "prediction" else lq_norm(a - b, cfg.q)
            bound = 2 * sum(res.thresholds[k - 2] for k in range(res.m_hat + 1, m_top + 1))
            chain_ok = dd <= bound * (1 + 1e-9) + 1e-12
        return {"replicate": r, "m_hat": res.m_hat, "s_hat": res.s_hat,
                "s_hat_le_s": res.s_hat <= s, "error": err, "ratio": err / scale,
                "chain_ok": chain_ok}

    records = _map(one, cfg.replicates, threads)
    b = binomial_summary([rr["s_hat_le_s"] for rr in records])
    bound = 1 - 2 * math.log2(p) ** 2 * (2 * s / p) ** (2 * s)
    b["theory_lower_bound"] = bound
    b["passes"] = b["frequency"] >= bound - 3 * b["se"]
    ratios = np.array([rr["ratio"] for rr in records])
    hist = {}
    for rr in records:
        hist[str(rr["m_hat"])] = hist.get(str(rr["m_hat"]), 0) + 1
    agg = {"s_hat_le_s": b, "m_hat_counts": dict(sorted(hist.items())),
           "c0": sel.c0, "M": grid.M,
           "ratio_quantiles": {str(q): float(np.quantile(ratios, q)) for q in (0.5, 0.9, 0.99, 1.0)},
           "c1_calibrated": float(np.max(ratios)),
           "chain_all_ok": all(rr["chain_ok"] for rr in records)}
    return ExperimentReport(cfg.to_dict(), agg, records)


def lower_bound_sim(cfg, packing=None, threads=1):
    """Closest-point decoding over a scaled packing of sparse sign vectors."""
    x = _design(cfg)
    n, p = x.shape
    s, sigma, q = cfg.s, cfg.noise.sigma, float(cfg.packing_q)
    if packing is None:
        packing = generate_packing(p, s, q, cfg.packing_size, cfg.seed, cfg.packing_attempts)
    if packing.size == 0:
        raise ValueError("empty packing")
    alpha = cfg.alpha if cfg.alpha is not None else math.sqrt(cfg.c_tilde) / 8
    theta_max1 = float(np.max(np.sqrt(np.sum(x * x, axis=0) / n)))
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    psi = sigma * s ** inv_q * math.sqrt(math.log(math.e * p / s) / n)
    a = alpha / theta_max1 * psi * s ** (-inv_q)
    B = a * packing.elements
    sep_target = 4.0 ** (-inv_q) * alpha / theta_max1 * psi
    XB = B @ x.T
    kl_nominal = alpha ** 2 * s * math.log(math.e * p / s)
    op_n = float(np.linalg.norm(x, 2)) / math.sqrt(n)
    kl_rigorous = 2 * kl_nominal * (op_n / theta_max1) ** 2
    sep_ok, kls = True, []
    for i in range(len(B)):
        for j in range(i + 1, len(B)):
            if lq_norm(B[i] - B[j], q) < sep_target * (1 - 1e-12):
                sep_ok = False
            diff = XB[i] - XB[j]
            kls.append(float(diff @ diff) / (2 * sigma ** 2))

    def one(r):
        rng = replicate_rng(cfg.seed, STREAM_MISC, r)
        k = int(rng.integers(len(B)))
        xi = generate_noise(cfg.noise, n, cfg.seed, rng=replicate_rng(cfg.seed, STREAM_NOISE, r))
        y = XB[k] + xi
        dec = int(np.argmin(np.sum((XB - y) ** 2, axis=1)))
        return {"replicate": r, "truth": k, "decoded": dec, "error": dec != k,
                "lq_loss": lq_norm(B[dec] - B[k], q)}

    records = _map(one, cfg.replicates, threads)
    kls = np.array(kls) if kls else np.zeros(0)
    agg = {"packing_size": packing.size, "packing_complete": packing.complete,
           "log_card_over_slog": math.log(packing.size) / (s * math.log(math.e * p / s)),
           "alpha": alpha, "radius": a, "psi": psi, "theta_max_1": theta_max1,
           "separation_target": sep_target, "separation_ok": sep_ok,
           "kl_max": float(kls.max()) if kls.size else 0.0,
           "kl_ceiling_nominal": kl_nominal, "kl_ceiling_rigorous": kl_rigorous,
           "kl_pairs_over_nominal_ceiling": int(np.sum(kls > kl_nominal * (1 + 1e-12))),
           "kl_within_rigorous": bool(np.all(kls <= kl_rigorous * (1 + 1e-12))),
           "decoder_error": binomial_summary([rr["error"] for rr in records]),
           "mean_lq_loss_over_psi": float(np.mean([rr["lq_loss"] for rr in records])) / psi}
    return ExperimentReport(cfg.to_dict(), agg, records)


def simulate(cfg, threads=1, grid=None):
    """Dispatch a scenario by name."""
    t0 = time.perf_counter()
    if cfg.scenario == "event":
        rep = event_probability(cfg, threads)
    elif cfg.scenario == "subgaussian-noise":
        rep = subgaussian_noise_check(cfg, threads)
    elif cfg.scenario == "oracle-lasso":
        rep = oracle_check_lasso(cfg, threads)
    elif cfg.scenario == "oracle-slope":
        rep = oracle_check_slope(cfg, threads)
    elif cfg.scenario == "adaptive":
        rep = adaptive_check(cfg, threads)
    elif cfg.scenario == "rate":
        rep = rate_regression(cfg, grid, threads)
    else:
        rep = lower_bound_sim(cfg, threads=threads)
    rep.metadata = {"seed": cfg.seed, "replicates": cfg.replicates,
                    "rng": "philox(seed, (purpose << 32) ^ replicate)"}
    log.info("scenario %s finished in %.2fs", cfg.scenario, time.perf_counter() - t0)
    return rep


def emit_data(cfg, directory, replicate=0):
    """Write design, true coefficients and response of one replicate as CSV."""
    os.makedirs(directory, exist_ok=True)
    x = _design(cfg)
    beta, xi, y = _model_draw(cfg, x, replicate)
    write_csv_matrix(os.path.join(directory, "X.csv"), x)
    write_csv_matrix(os.path.join(directory, "beta.csv"), beta)
    write_csv_matrix(os.path.join(directory, "y.csv"), y)
    return x, beta, y


def random_design_event_check(p, n, s, c0, replicates=20, seed=0, restarts=50,
                              iters=100, a=2 * C_SQ2):
    """Frequency of the random-design event for Gaussian rows with covariance I/2.

    The event asks for unit-bounded column norms and a weighted-cone constant
    of at least ``kappa / sqrt(2)`` with ``kappa = 1/sqrt(2)``.  The cone
    constant is decided from both sides: the smallest eigenvalue of the full
    Gram matrix certifies it, a cone witness refutes it; replicates that are
    neither are counted separately as undecided.
    """
    from .conditions import ConeSpec, cone_constant_bracket
    kappa = 1 / math.sqrt(2)
    spec = DesignSpec("gaussian-anisotropic", n, p, "none", np.eye(p) / 2)
    w = slope_weights(n, p, 1.0, a)
    cone = ConeSpec("WRE", s, c0, w)
    records = []
    for r in range(replicates):
        x = generate_design(spec, seed, rng=replicate_rng(seed, STREAM_DESIGN, r))
        cols_ok = bool(np.max(np.sum(x * x, axis=0) / n) <= 1)
        lam_min = float(np.linalg.eigvalsh(x.T @ x / n)[0])
        certified = lam_min > 0 and math.sqrt(lam_min) >= kappa / math.sqrt(2)
        br = cone_constant_bracket(x, cone, restarts=restarts, iters=iters, seed=seed + r,
                                   budget=0)
        refuted = br.upper < kappa / math.sqrt(2)
        records.append({"replicate": r, "columns_ok": cols_ok, "sqrt_lambda_min": math.sqrt(max(lam_min, 0)),
                        "cone_upper": br.upper, "certified": certified, "refuted": refuted,
                        "event": cols_ok and certified})
    b = binomial_summary([rr["event"] for rr in records])
    return {"event": b, "undecided": sum(1 for rr in records if not rr["certified"] and not rr["refuted"]),
            "calibrated_constant": n * kappa ** 2 / ((1 + c0) ** 2 * s * math.log(2 * math.e * p / s)),
            "records": records}
