"""Sorted-l1 norm, empirical norms, weight sequences and CSV I/O.

Every other module in the package works on plain ``numpy`` arrays; the
helpers here validate and convert inputs, and compute the quantities that
the tuning rules are built from.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

#: Constant appearing in every tuning rule, kept at full double precision.
C_SQ2 = 4.0 + math.sqrt(2.0)

NOISE_KINDS = ("gaussian", "rademacher-scaled", "bounded-subgaussian")


@dataclass(frozen=True)
class NoiseModel:
    """Noise law with scale ``sigma``.

    All kinds satisfy ``E exp(xi**2 / sigma**2) <= e``.  The bounded kind is
    uniform on ``[-sigma, sigma]``.
    """

    kind: str = "gaussian"
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


def as_vector(v, name="vector"):
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def as_design(x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError("design must be a non-empty 2-D array")
    if not np.all(np.isfinite(x)):
        raise ValueError("design has non-finite entries")
    return x


def as_weights(w, p=None):
    """Validate a Slope weight vector: nonnegative, nonincreasing, nonzero."""
    w = as_vector(w, "weights")
    if p is not None and w.size != p:
        raise ValueError(f"weights have length {w.size}, expected {p}")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if np.any(np.diff(w) > 0):
        raise ValueError("weights must be nonincreasing")
    if not np.any(w > 0):
        raise ValueError("weights must not all be zero")
    return w


def rearrange_desc(v):
    """Absolute values of ``v`` sorted nonincreasingly (stable on ties)."""
    a = np.abs(as_vector(v))
    order = np.argsort(-a, kind="stable")
    return a[order]


def sorted_l1_norm(v, w):
    """Sorted-l1 norm ``sum_j w_j |v|_(j)`` with ``w`` nonincreasing."""
    v = as_vector(v)
    w = as_weights(w)
    if v.size != w.size:
        raise ValueError("vector and weights differ in length")
    return float(np.dot(w, rearrange_desc(v)))


def dual_sorted_l1_norm(z, w):
    """Dual norm of the sorted-l1 norm.

    ``max_k (sum_{j<=k} |z|_(j)) / (sum_{j<=k} w_j)``; ratios with a zero
    denominator count as infinite unless the numerator is zero too.
    """
    zs = np.cumsum(rearrange_desc(z))
    ws = np.cumsum(as_weights(w, zs.size))
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(ws > 0, zs / np.where(ws > 0, ws, 1.0),
                     np.where(zs > 0, np.inf, 0.0))
    return float(np.max(r))


def lq_norm(v, q):
    """l_q norm for ``q >= 1``; ``q = inf`` gives the max norm."""
    v = as_vector(v)
    q = float(q)
    if not q >= 1:
        raise ValueError("q must be >= 1")
    if math.isinf(q):
        return float(np.max(np.abs(v))) if v.size else 0.0
    if q == 1:
        return float(np.sum(np.abs(v)))
    if q == 2:
        return float(np.linalg.norm(v))
    return float(np.sum(np.abs(v) ** q) ** (1.0 / q))


def l0_norm(v, threshold=1e-12):
    """Number of entries with magnitude above ``threshold``."""
    return int(np.count_nonzero(np.abs(as_vector(v)) > threshold))


def empirical_norm(u):
    """Root mean square ``sqrt(sum(u**2) / n)``."""
    u = as_vector(u)
    return float(np.linalg.norm(u) / math.sqrt(u.size))


def column_norms(x):
    """Empirical norms ``||X e_j||_n`` of the columns."""
    x = as_design(x)
    return np.sqrt(np.sum(x * x, axis=0) / x.shape[0])


def is_normalized(x, tol=1e-12):
    return bool(np.max(column_norms(x)) <= 1.0 + tol)


def rescale_columns(x):
    """Divide each column by ``max(1, ||X e_j||_n)`` so all norms are <= 1."""
    x = as_design(x)
    scale = np.maximum(1.0, column_norms(x))
    out = x / scale
    # guard against round-up after the division
    over = column_norms(out) > 1.0
    while np.any(over):
        out[:, over] = np.nextafter(out[:, over], 0.0)
        over = column_norms(out) > 1.0
    return out


def slope_weights(n, p, sigma, a):
    """Slope weights ``a * sigma * sqrt(log(2p/j) / n)``, ``j = 1..p``."""
    if n < 1 or p < 1:
        raise ValueError("n and p must be positive")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if not a > 0:
        raise ValueError("a must be positive")
    if a <= C_SQ2:
        warnings.warn("weight constant a <= 4 + sqrt(2); the oracle bounds "
                      "need a strictly larger constant", stacklevel=2)
    j = np.arange(1, p + 1, dtype=float)
    return a * sigma * np.sqrt(np.log(2.0 * p / j) / n)


def norm_decomposition_sides(beta, beta_hat, w, s, tau):
    """Both sides of the sorted-norm decomposition inequality.

    For ``|beta|_0 <= s``, ``tau`` in [0, 1] and ``u = beta_hat - beta``::

        tau ||u||_* + ||beta||_* - ||beta_hat||_*
            <= (1+tau) sqrt(sum_{j<=s} w_j^2) ||u||_2 - (1-tau) sum_{j>s} w_j u#_j

    Returns ``(lhs, rhs)``.
    """
    beta = as_vector(beta)
    beta_hat = as_vector(beta_hat)
    w = as_weights(w, beta.size)
    if beta_hat.size != beta.size:
        raise ValueError("beta and beta_hat differ in length")
    if not 1 <= s <= beta.size:
        raise ValueError("need 1 <= s <= p")
    if not 0 <= tau <= 1:
        raise ValueError("tau must lie in [0, 1]")
    if np.count_nonzero(beta) > s:
        raise ValueError("beta has more than s nonzero entries")
    u = beta_hat - beta
    us = rearrange_desc(u)
    lhs = tau * sorted_l1_norm(u, w) + sorted_l1_norm(beta, w) - sorted_l1_norm(beta_hat, w)
    rhs = (1 + tau) * math.sqrt(float(np.sum(w[:s] ** 2))) * float(np.linalg.norm(u)) \
        - (1 - tau) * float(np.dot(w[s:], us[s:]))
    return float(lhs), float(rhs)


def stirling_bracket(s, p):
    """Return ``(s log(2p/s), sum_{j<=s} log(2p/j), s log(2ep/s))``.

    The first and last entries bracket the middle one for every
    ``1 <= s <= p``.
    """
    if not (1 <= s <= p):
        raise ValueError("need 1 <= s <= p")
    j = np.arange(1, s + 1, dtype=float)
    mid = float(np.sum(np.log(2.0 * p / j)))
    return s * math.log(2.0 * p / s), mid, s * (math.log(2.0 * p / s) + 1.0)


def h_g_values(u, x, sigma, delta0):
    """Evaluate the two deviation envelopes ``(H(u), G(u))``.

    ``H`` is the sorted-l1 envelope with weights
    ``(4+sqrt2) sigma sqrt(log(2p/j)/n)`` and ``G`` is
    ``(4+sqrt2) sigma sqrt(log(1/delta0)/n) ||Xu||_n``.
    """
    if not 0 < delta0 < 1:
        raise ValueError("delta0 must lie in (0, 1)")
    x = as_design(x)
    u = as_vector(u)
    n, p = x.shape
    if u.size != p:
        raise ValueError("u has wrong length")
    j = np.arange(1, p + 1, dtype=float)
    h = C_SQ2 * sigma * float(np.dot(rearrange_desc(u),
                                     np.sqrt(np.log(2.0 * p / j) / n)))
    g = C_SQ2 * sigma * math.sqrt(math.log(1.0 / delta0) / n) \
        * empirical_norm(x @ u)
    return h, g


# ---------------------------------------------------------------------------
# CSV I/O: headerless, comma separated, 17 significant digits.

def write_csv_matrix(path, a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for row in a:
            fh.write(",".join(f"{v:.17g}" for v in row))
            fh.write("\n")


def read_csv_matrix(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(t) for t in line.split(",")])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: empty file")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError(f"{path}: ragged rows")
    return np.array(rows, dtype=float)


def read_csv_vector(path):
    a = read_csv_matrix(path)
    if a.shape[1] != 1 and a.shape[0] != 1:
        raise ValueError(f"{path}: expected a single column")
    return a.ravel()


write_csv_vector = write_csv_matrix
