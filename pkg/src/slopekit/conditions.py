"""Restricted-eigenvalue type conditions on a design matrix.

Three cones are supported, each a set of directions ``delta`` on which
``||X delta||_n / ||delta||_2`` is bounded below:

* ``RE``  : ``||d||_1 <= (1+c0) * (sum of the s largest |d_j|)``
* ``SRE`` : ``||d||_1 <= (1+c0) * sqrt(s) * ||d||_2``
* ``WRE`` : ``||d||_* <= (1+c0) * ||d||_2 * sqrt(sum_{j<=s} w_j^2)``

Exact constants are out of reach in general; :func:`cone_constant_bracket`
returns a witness-based upper value and a certified lower value.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import as_design, as_vector, as_weights, column_norms

CONE_KINDS = ("RE", "SRE", "WRE")


@dataclass(frozen=True)
class ConeSpec:
    kind: str
    s: int
    c0: float
    weights: np.ndarray = None

    def __post_init__(self):
        if self.kind not in CONE_KINDS:
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.s < 1:
            raise ValueError("s must be >= 1")
        if not self.c0 > 0:
            raise ValueError("c0 must be positive")
        if self.kind == "WRE":
            if self.weights is None:
                raise ValueError("WRE cone needs weights")
            object.__setattr__(self, "weights", as_weights(self.weights))
            if self.s > self.weights.size:
                raise ValueError("s exceeds the number of weights")


@dataclass
class ConstantBracket:
    lower: float
    upper: float
    witness: np.ndarray
    method: str

    def to_dict(self):
        return {"lower": float(self.lower), "upper": float(self.upper),
                "witness": [float(w) for w in self.witness], "method": self.method}


def _cone_margin(D, cone):
    """Row-wise ``(rhs, lhs)`` of the cone inequality for a batch ``D``."""
    A = np.sort(np.abs(D), axis=1)[:, ::-1]
    l2 = np.sqrt(np.sum(A * A, axis=1))
    if cone.kind == "RE":
        lhs = A.sum(axis=1)
        rhs = (1 + cone.c0) * A[:, :cone.s].sum(axis=1)
    elif cone.kind == "SRE":
        lhs = A.sum(axis=1)
        rhs = (1 + cone.c0) * math.sqrt(cone.s) * l2
    else:
        w = cone.weights
        lhs = A @ w
        rhs = (1 + cone.c0) * l2 * math.sqrt(float(np.sum(w[:cone.s] ** 2)))
    return rhs, lhs


def cone_contains_many(D, cone, rtol=1e-12):
    D = np.atleast_2d(np.asarray(D, dtype=float))
    if cone.s > D.shape[1]:
        raise ValueError("s exceeds the dimension")
    rhs, lhs = _cone_margin(D, cone)
    return lhs <= rhs * (1 + rtol) + 1e-300


def cone_contains(delta, cone, rtol=1e-12):
    """Membership of ``delta`` in the cone, with relative tolerance ``rtol``."""
    delta = as_vector(delta)
    if cone.kind == "WRE" and cone.weights.size != delta.size:
        raise ValueError("weights and delta differ in length")
    return bool(cone_contains_many(delta[None, :], cone, rtol)[0])


# ---------------------------------------------------------------------------
# sparse eigenvalues

def _supports(p, s, budget):
    count = math.comb(p, s)
    if count > budget:
        raise ValueError(f"C({p},{s}) = {count} supports exceed the budget {budget}; "
                         "use cone_constant_bracket for a sampled estimate")
    return itertools.combinations(range(p), s)


def sparse_eigenvalues(x, s, budget=1_000_000, return_witness=False):
    """Exact ``(theta_min, theta_max)`` of ``||X d||_n / ||d||_2`` over s-sparse ``d``."""
    x = as_design(x)
    n, p = x.shape
    if not 1 <= s <= p:
        raise ValueError("need 1 <= s <= p")
    gram = x.T @ x / n
    lo, hi = math.inf, 0.0
    wit = None
    for J in _supports(p, s, budget):
        J = list(J)
        evals, evecs = np.linalg.eigh(gram[np.ix_(J, J)])
        if evals[0] < lo:
            lo = evals[0]
            wit = np.zeros(p)
            wit[J] = evecs[:, 0]
        hi = max(hi, evals[-1])
    res = (math.sqrt(max(lo, 0.0)), math.sqrt(max(hi, 0.0)))
    if return_witness:
        return res + (wit,)
    return res


def _sparse_candidates(gram, s, budget):
    p = gram.shape[0]
    out = []
    for J in _supports(p, s, budget):
        J = list(J)
        _, evecs = np.linalg.eigh(gram[np.ix_(J, J)])
        v = np.zeros(p)
        v[J] = evecs[:, 0]
        out.append(v)
    return np.array(out)


# ---------------------------------------------------------------------------
# cone constants

def _retract(D, cone, steps=50):
    """Pull rows of ``D`` into the cone by the smallest soft-threshold that works."""
    inside = cone_contains_many(D, cone)
    if np.all(inside):
        return D
    out = D.copy()
    bad = np.where(~inside)[0]
    B = D[bad]
    A = np.sort(np.abs(B), axis=1)[:, ::-1]
    lo = np.zeros(len(bad))
    hi = A[:, 1] if A.shape[1] > 1 else A[:, 0]  # one-sparse rows are always inside
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        T = np.sign(B) * np.maximum(np.abs(B) - mid[:, None], 0.0)
        ok = cone_contains_many(T, cone)
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    out[bad] = np.sign(B) * np.maximum(np.abs(B) - hi[:, None], 0.0)
    return out


def _normalize_rows(D):
    nrm = np.linalg.norm(D, axis=1, keepdims=True)
    nrm[nrm == 0] = 1.0
    return D / nrm


def _ratio(D, gram):
    return np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", D, gram, D), 0.0))


def _descend(starts, gram, cone, iters):
    L = 2 * max(float(np.linalg.eigvalsh(gram)[-1]), 1e-12)
    D = _normalize_rows(_retract(_normalize_rows(starts), cone))
    best = _ratio(D, gram)
    best_D = D.copy()
    for _ in range(iters):
        q = np.einsum("ij,jk,ik->i", D, gram, D)
        G = 2 * (D @ gram - q[:, None] * D)
        D = _normalize_rows(_retract(D - G / L, cone))
        r = _ratio(D, gram)
        better = r < best
        best = np.where(better, r, best)
        best_D[better] = D[better]
    return best, best_D


def certified_sre_lower(theta1, s, c0, rigorous=False):
    """Sparsity level certified by a lower bound on the s-sparse eigenvalue.

    Returns ``(s1_max, theta1/sqrt(2))``: for ``s1 <= s1_max`` the SRE(s1, c0)
    constant is at least ``theta1/sqrt(2)``.  The default uses
    ``s1_max = floor((s-1) theta1^2 / (2 c0^2))``; ``rigorous=True`` replaces
    ``c0`` by ``1 + c0``, which is what the cone definition actually needs.
    """
    if not theta1 > 0:
        raise ValueError("theta1 must be positive")
    if s < 2:
        raise ValueError("s must be >= 2")
    c = (1 + c0) if rigorous else c0
    s1 = int(math.floor((s - 1) * theta1 ** 2 / (2 * c * c) + 1e-12))
    return s1, theta1 / math.sqrt(2)


def sre_chain_lower(x, s, c0, budget=20_000):
    """Certified lower bound on the SRE(s, c0) constant.

    For normalized designs ``||X d||_n^2 >= t^2 ||d||_2^2 - ||d||_1^2/(k-1)``
    whenever ``t`` is the k-sparse minimal eigenvalue; on the SRE cone
    ``||d||_1^2 <= (1+c0)^2 s ||d||_2^2``.  Maximised over k, visiting the
    cheap large levels first while the total number of enumerated supports
    stays within ``budget``.
    """
    x = as_design(x)
    if np.max(column_norms(x)) > 1 + 1e-12:
        return 0.0
    p = x.shape[1]
    best = 0.0
    spent = 0
    for k in range(p, 1, -1):
        cost = math.comb(p, k)
        if spent + cost > budget:
            break
        spent += cost
        tmin, _ = sparse_eigenvalues(x, k, budget)
        val = tmin ** 2 - (1 + c0) ** 2 * s / (k - 1)
        if val > best * best:
            best = math.sqrt(val)
        if k == p and (1 + c0) * math.sqrt(s) >= math.sqrt(p):
            # the cone covers everything: the smallest singular value is exact
            best = max(best, tmin)
    return best


def wre_from_sre(s, p, c0=None):
    """``ceil(s log(2ep/s) / log 2)``: SRE at this level implies WRE at ``s``."""
    if not 1 <= s <= p:
        raise ValueError("need 1 <= s <= p")
    return int(math.ceil(s * math.log(2 * math.e * p / s) / math.log(2) - 1e-12))


def _wre_sre_level(weights, s):
    w = np.asarray(weights)
    if w[-1] <= 0:
        return None
    return int(math.ceil(float(np.sum(w[:s] ** 2)) / w[-1] ** 2 - 1e-12))


def cone_constant_bracket(x, cone, restarts=200, iters=200, seed=0,
                          budget=1_000_000, candidates=None, chain_budget=20_000):
    """Bracket ``min ||X d||_n / ||d||_2`` over the cone.

    The upper value comes from the best witness among the s-sparse minimal
    eigenvectors, ``candidates`` and a projected-gradient descent from
    ``restarts`` random starts plus the sparse eigenvectors.  The lower value
    comes from the sparse-eigenvalue chain and is certified; the chain
    enumerates at most ``chain_budget`` supports in total.
    """
    x = as_design(x)
    n, p = x.shape
    if cone.s > p:
        raise ValueError("s exceeds p")
    if cone.kind == "WRE" and cone.weights.size != p:
        raise ValueError("weights and design differ in length")
    gram = x.T @ x / n
    rng = np.random.default_rng(seed)
    starts = [rng.standard_normal((restarts, p))]
    try:
        sparse = _sparse_candidates(gram, min(cone.s, p), budget)
    except ValueError:
        sparse = np.empty((0, p))
    starts.append(sparse)
    starts.append(np.linalg.eigh(gram)[1].T)
    if candidates is not None:
        cand = np.atleast_2d(np.asarray(candidates, dtype=float))
        cand = cand[cone_contains_many(cand, cone, rtol=1e-9)]
        starts.append(cand)
    S = np.vstack(starts)
    fixed = np.vstack([sparse] + ([cand] if candidates is not None else []))
    vals, wits = _descend(S, gram, cone, iters)
    if len(fixed):
        fv = _ratio(_normalize_rows(fixed), gram)
        vals = np.concatenate([vals, fv])
        wits = np.vstack([wits, _normalize_rows(fixed)])
    i = int(np.argmin(vals))
    upper, witness = float(vals[i]), wits[i]

    if cone.kind == "WRE":
        s2 = _wre_sre_level(cone.weights, cone.s)
        lower = sre_chain_lower(x, min(s2, p), cone.c0, chain_budget) if s2 else 0.0
    else:
        lower = sre_chain_lower(x, cone.s, cone.c0, chain_budget)
    lower = min(lower, upper)
    method = "certified-chain" if lower > 0 else "sampled"
    return ConstantBracket(lower=lower, upper=upper, witness=witness, method=method)


def small_ball_probe(rows, u, s1, trials, seed=0):
    """Estimate ``min_delta P(|delta^T x| >= u ||delta||_2)`` over sampled
    s1-sparse unit directions, using the empirical law of ``rows``."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[0] == 0:
        raise ValueError("empty sample")
    if u < 0 or trials < 1:
        raise ValueError("need u >= 0 and trials >= 1")
    p = rows.shape[1]
    rng = np.random.default_rng(seed)
    best = 1.0
    for _ in range(trials):
        d = np.zeros(p)
        J = rng.choice(p, size=min(s1, p), replace=False)
        d[J] = rng.standard_normal(J.size)
        d /= np.linalg.norm(d)
        best = min(best, float(np.mean(np.abs(rows @ d) >= u)))
    return best
