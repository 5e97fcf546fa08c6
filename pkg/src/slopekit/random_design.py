"""Seeded generators: designs, noise, sparse signals and packing sets.

Randomness comes from the counter-based Philox bit generator.  A stream is
addressed by ``(seed, stream_id)``; replicate ``r`` of a purpose ``k`` uses
``stream_id = (k << 32) ^ r``, so a replicate's draws do not depend on how
replicates are scheduled across workers.
"""

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import column_norms, rescale_columns

DESIGN_KINDS = ("gaussian-isotropic", "gaussian-anisotropic", "rademacher",
                "cauchy-rows", "orthonormal")

# stream purposes
STREAM_DESIGN = 1
STREAM_NOISE = 2
STREAM_BETA = 3
STREAM_PACKING = 4
STREAM_MISC = 5

_MASK64 = (1 << 64) - 1


def make_rng(seed, stream=0):
    """Philox generator keyed by ``(seed, stream)``."""
    key = np.array([int(seed) & _MASK64, int(stream) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def replicate_rng(seed, purpose, replicate):
    return make_rng(seed, (purpose << 32) ^ int(replicate))


@dataclass
class DesignSpec:
    kind: str = "gaussian-isotropic"
    n: int = 100
    p: int = 50
    normalize: str = "rescale"
    sigma_matrix: np.ndarray = None

    def __post_init__(self):
        if self.kind not in DESIGN_KINDS:
            raise ValueError(f"unknown design kind {self.kind!r}")
        if self.normalize not in ("check", "rescale", "none"):
            raise ValueError("normalize must be check, rescale or none")
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if self.kind == "gaussian-anisotropic":
            if self.sigma_matrix is None:
                raise ValueError("anisotropic design needs a covariance matrix")
            s = np.asarray(self.sigma_matrix, dtype=float)
            if s.shape != (self.p, self.p) or not np.allclose(s, s.T, atol=1e-12):
                raise ValueError("covariance must be symmetric p x p")
            self.sigma_matrix = s
        if self.kind == "orthonormal" and self.n < self.p:
            raise ValueError("orthonormal design needs n >= p")

    def to_dict(self):
        d = {"kind": self.kind, "n": self.n, "p": self.p, "normalize": self.normalize}
        if self.sigma_matrix is not None:
            d["sigma_matrix"] = np.asarray(self.sigma_matrix).tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("sigma_matrix") is not None:
            d["sigma_matrix"] = np.asarray(d["sigma_matrix"], dtype=float)
        return cls(**d)


def psd_sqrt(sigma, tol=1e-10):
    """Symmetric PSD square root; eigenvalues in ``[-tol, 0)`` are clipped."""
    evals, evecs = np.linalg.eigh(sigma)
    if np.min(evals) < -tol:
        raise ValueError("covariance matrix is not positive semidefinite")
    evals = np.clip(evals, 0.0, None)
    return (evecs * np.sqrt(evals)) @ evecs.T


def generate_design(spec, seed, rng=None):
    """Draw an ``n x p`` design according to ``spec``; pure in ``(spec, seed)``."""
    if rng is None:
        rng = make_rng(seed, STREAM_DESIGN << 32)
    n, p = spec.n, spec.p
    if spec.kind == "orthonormal":
        q, r = np.linalg.qr(rng.standard_normal((n, p)))
        q = q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))
        return math.sqrt(n) * q
    if spec.kind == "gaussian-isotropic":
        x = rng.standard_normal((n, p))
    elif spec.kind == "gaussian-anisotropic":
        x = rng.standard_normal((n, p)) @ psd_sqrt(spec.sigma_matrix)
    elif spec.kind == "rademacher":
        x = rng.choice(np.array([-1.0, 1.0]), size=(n, p))
    else:
        x = rng.standard_cauchy((n, p))
    if spec.normalize == "rescale":
        x = rescale_columns(x)
    elif spec.normalize == "check" and np.max(column_norms(x)) > 1 + 1e-12:
        warnings.warn("design columns exceed unit empirical norm", stacklevel=2)
    return x


def generate_noise(model, n, seed, rng=None):
    if rng is None:
        rng = make_rng(seed, STREAM_NOISE << 32)
    if model.kind == "gaussian":
        return model.sigma * rng.standard_normal(n)
    if model.kind == "rademacher-scaled":
        return model.sigma * rng.choice(np.array([-1.0, 1.0]), size=n)
    return model.sigma * rng.uniform(-1.0, 1.0, size=n)


def generate_sparse_beta(p, s, amplitude, seed, rng=None):
    """Uniform random support of size ``s`` with entries ``+-amplitude``.

    With ``amplitude == 0`` the zero vector comes back, so the caller should
    treat the draw as degenerate.
    """
    if not 1 <= s <= p:
        raise ValueError("need 1 <= s <= p")
    if rng is None:
        rng = make_rng(seed, STREAM_BETA << 32)
    beta = np.zeros(p)
    support = rng.choice(p, size=s, replace=False)
    beta[support] = amplitude * rng.choice(np.array([-1.0, 1.0]), size=s)
    return beta


@dataclass
class PackingSet:
    elements: np.ndarray
    s: int
    q: float
    complete: bool = True
    attempts: int = 0

    def __post_init__(self):
        e = np.asarray(self.elements, dtype=float)
        self.elements = e.reshape(0, 0) if e.size == 0 else np.atleast_2d(e)

    @property
    def size(self):
        return len(self.elements)

    @property
    def min_separation(self):
        return (self.s / 4.0) ** (0.0 if math.isinf(self.q) else 1.0 / self.q)

    def verify(self):
        """Check support sizes, sign alphabet and every pairwise distance."""
        e = np.asarray(self.elements)
        if e.size == 0:
            return True
        if not np.all(np.isin(e, (-1.0, 0.0, 1.0))):
            return False
        if not np.all(np.count_nonzero(e, axis=1) == self.s):
            return False
        sep = self.min_separation
        for i, j in itertools.combinations(range(len(e)), 2):
            if _lq(e[i] - e[j], self.q) < sep:
                return False
        return True


def _lq(v, q):
    a = np.abs(v)
    if math.isinf(q):
        return float(a.max())
    return float(np.sum(a ** q) ** (1.0 / q))


def generate_packing(p, s, q, target_size, seed, max_attempts=10_000):
    """Rejection-sample s-sparse sign vectors pairwise ``(s/4)^(1/q)`` apart in l_q.

    Stops at ``target_size`` or after ``max_attempts`` candidates; a partial
    set is flagged with ``complete=False``.
    """
    if p < 2 or not 1 <= s <= p / 2:
        raise ValueError("need p >= 2 and 1 <= s <= p/2")
    q = float(q)
    if not q >= 1:
        raise ValueError("q must be >= 1")
    rng = make_rng(seed, STREAM_PACKING << 32)
    sep = (s / 4.0) ** (0.0 if math.isinf(q) else 1.0 / q)
    accepted = []
    attempts = 0
    while len(accepted) < target_size and attempts < max_attempts:
        attempts += 1
        cand = generate_sparse_beta(p, s, 1.0, seed, rng=rng)
        if all(_lq(cand - a, q) >= sep for a in accepted):
            accepted.append(cand)
    if not accepted:
        raise ValueError("could not place a single packing element")
    ps = PackingSet(np.array(accepted), s, q,
                    complete=len(accepted) >= target_size, attempts=attempts)
    if not ps.verify():
        raise AssertionError("packing failed verification")
    return ps
