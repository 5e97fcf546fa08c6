"""Proximal maps of the l1 and sorted-l1 penalties.

``prox_sorted_l1`` is the fast path used by the solvers.  ``prox_oracle``
solves the same problem through a different route (projection onto the
dual-norm ball, computed with Wolfe's min-norm-point algorithm over the
signed permutahedron) and only exists to cross-check the fast path.
"""

from dataclasses import dataclass

import numpy as np

from .core import as_vector, as_weights


@dataclass(frozen=True)
class ProxRequest:
    point: np.ndarray
    weights: np.ndarray
    step: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "point", as_vector(self.point, "point"))
        object.__setattr__(self, "weights", as_weights(self.weights))
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.point.size != self.weights.size:
            raise ValueError("point and weights differ in length")


def soft_threshold(v, t):
    """Componentwise ``sign(v) * max(|v| - t, 0)``."""
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def pava_nonincreasing(y):
    """Least-squares fit of ``y`` by a nonincreasing sequence.

    Stack-based pool-adjacent-violators; each block keeps its start index,
    sum and length.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    starts = np.empty(n, dtype=np.intp)
    sums = np.empty(n)
    counts = np.empty(n, dtype=np.intp)
    top = -1
    for i in range(n):
        top += 1
        starts[top] = i
        sums[top] = y[i]
        counts[top] = 1
        # merge while the new block's mean exceeds its predecessor's
        while top > 0 and sums[top] * counts[top - 1] > sums[top - 1] * counts[top]:
            sums[top - 1] += sums[top]
            counts[top - 1] += counts[top]
            top -= 1
    out = np.empty(n)
    for b in range(top + 1):
        out[starts[b]:starts[b] + counts[b]] = sums[b] / counts[b]
    return out


def _prox_sorted(v, lam):
    a = np.abs(v)
    order = np.argsort(-a, kind="stable")
    z = np.maximum(pava_nonincreasing(a[order] - lam), 0.0)
    out = np.empty_like(a)
    out[order] = z
    return np.sign(v) * out


def prox_sorted_l1(req=None, *, point=None, weights=None, step=1.0):
    """``argmin_x 0.5 ||x - v||^2 + step * sum_j w_j |x|_(j)``.

    Accepts either a :class:`ProxRequest` or keyword arguments.
    """
    if req is None:
        req = ProxRequest(point, weights, step)
    return _prox_sorted(req.point, req.step * req.weights)


def prox_objective(x, req):
    from .core import sorted_l1_norm
    return 0.5 * float(np.sum((x - req.point) ** 2)) \
        + req.step * sorted_l1_norm(x, req.weights)


def _support_vertex(d, lam):
    """Vertex of the dual ball ``{w : dual norm <= 1}`` maximising ``<d, w>``."""
    order = np.argsort(-np.abs(d), kind="stable")
    w = np.empty_like(d)
    w[order] = lam
    return np.where(d < 0, -w, w)


def _min_norm_point(lmo, x0, tol=1e-14, max_iter=10000):
    """Wolfe's min-norm-point algorithm over ``conv`` of LMO vertices."""
    pts = [x0]
    wts = np.array([1.0])
    x = x0.copy()
    for _ in range(max_iter):
        q = lmo(x)
        scale = max(1.0, float(np.dot(q, q)))
        if float(np.dot(x, x) - np.dot(x, q)) <= tol * scale:
            break
        if any(np.array_equal(q, s) for s in pts):
            break
        pts.append(q)
        wts = np.append(wts, 0.0)
        while True:
            S = np.array(pts)
            k = len(pts)
            kkt = np.zeros((k + 1, k + 1))
            kkt[:k, :k] = S @ S.T
            kkt[:k, k] = 1.0
            kkt[k, :k] = 1.0
            rhs = np.zeros(k + 1)
            rhs[k] = 1.0
            alpha = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:k]
            if np.all(alpha > 1e-13):
                wts = alpha
                x = alpha @ S
                break
            neg = alpha <= 1e-13
            denom = wts[neg] - alpha[neg]
            theta = float(np.min(np.where(denom > 0, wts[neg] / np.where(denom > 0, denom, 1.0), 1.0)))
            wts = theta * alpha + (1.0 - theta) * wts
            keep = wts > 1e-13
            pts = [p for p, kp in zip(pts, keep) if kp]
            wts = wts[keep]
            wts = wts / wts.sum()
            x = wts @ np.array(pts)
    return x


def prox_oracle(req=None, *, point=None, weights=None, step=1.0, max_dim=8):
    """Reference sorted-l1 prox for small dimensions (tests only).

    Uses the Moreau identity ``prox(v) = v - P(v)`` where ``P`` projects onto
    ``step`` times the dual-norm unit ball, the signed permutahedron of the
    weights.  The projection is found as the min-norm point of the
    translated polytope, reached through its linear-minimisation oracle.
    """
    if req is None:
        req = ProxRequest(point, weights, step)
    v = req.point
    if v.size > max_dim:
        raise ValueError(f"oracle limited to dimension <= {max_dim}")
    lam = req.step * req.weights

    # polytope P - v; its min-norm point m gives prox(v) = -m
    def lmo(x):
        return _support_vertex(-x, lam) - v

    m = _min_norm_point(lmo, lmo(v))
    return -m


def project_permutahedron(a, w):
    """Euclidean projection of ``a`` onto the permutahedron of ``w``.

    ``w`` need not be sorted.  Used for the Slope subdifferential distance.
    """
    a = np.asarray(a, dtype=float)
    w = np.sort(np.asarray(w, dtype=float))[::-1]
    order = np.argsort(-a, kind="stable")
    v = pava_nonincreasing(a[order] - w)
    out = np.empty_like(a)
    out[order] = a[order] - v
    return out
