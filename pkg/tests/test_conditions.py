import math

import numpy as np
import pytest

from conftest import orthonormal_design
from slopekit.conditions import (ConeSpec, certified_sre_lower, cone_constant_bracket,
                                 cone_contains, cone_contains_many, small_ball_probe,
                                 sparse_eigenvalues, sre_chain_lower, wre_from_sre)
from slopekit.core import C_SQ2, rescale_columns, slope_weights


def sample_mixed(rng, m, p):
    """Vectors concentrated on a few coordinates plus a dense tail."""
    D = rng.standard_normal((m, p)) * rng.exponential(size=(m, 1)) * 0.3
    k = rng.integers(1, p + 1, size=m)
    for i in range(m):
        J = rng.choice(p, size=k[i], replace=False)
        D[i, J] += rng.standard_normal(k[i]) * 3
    return D


def test_cone_membership_examples():
    re = ConeSpec("RE", 2, 1.0)
    assert cone_contains([1.0, 1.0, 0.0, 0.0], re)
    assert cone_contains([1.0, 1.0, 1.0, 1.0], re)          # 4 <= 2 * 2
    assert not cone_contains([1.0, 1.0, 1.0, 1.0], ConeSpec("RE", 1, 1.0))
    sre = ConeSpec("SRE", 1, 1.0)
    assert cone_contains([3.0, 0.0, 0.0], sre)
    with pytest.raises(ValueError):
        ConeSpec("XRE", 1, 1.0)
    with pytest.raises(ValueError):
        ConeSpec("WRE", 1, 1.0)


def test_sre_threshold_exact():
    sre = ConeSpec("SRE", 1, 1.0)
    # ||d||_1 = 3, 2 ||d||_2 = 2 sqrt(3) ~ 3.46: inside
    assert cone_contains([1.0, 1.0, 1.0], sre)
    assert not cone_contains(np.ones(5), sre)               # 5 > 2 sqrt(5) ~ 4.47


def test_sparse_vectors_lie_in_every_cone(rng):
    p, s = 12, 3
    w = slope_weights(50, p, 1.0, 2 * C_SQ2)
    for _ in range(200):
        d = np.zeros(p)
        d[rng.choice(p, s, replace=False)] = rng.standard_normal(s)
        for kind in ("RE", "SRE", "WRE"):
            assert cone_contains(d, ConeSpec(kind, s, 0.5, w if kind == "WRE" else None))


def test_cone_inclusions_sampled(rng):
    p = 10
    w = slope_weights(40, p, 1.0, 2 * C_SQ2)
    D = sample_mixed(rng, 20000, p)
    for s in (1, 2, 3):
        for c0 in (0.5, 1.0, 3.0):
            in_re = cone_contains_many(D, ConeSpec("RE", s, c0))
            in_sre = cone_contains_many(D, ConeSpec("SRE", s, c0))
            in_wre = cone_contains_many(D, ConeSpec("WRE", s, 1 + c0, w))
            assert not np.any(in_re & ~in_sre)
            assert not np.any(in_sre & ~in_wre)
            # and the WRE cone sits inside the SRE cone at the larger level
            s2 = min(wre_from_sre(s, p), p)
            in_wre_c0 = cone_contains_many(D, ConeSpec("WRE", s, c0, w))
            in_sre2 = cone_contains_many(D, ConeSpec("SRE", s2, c0))
            assert not np.any(in_wre_c0 & ~in_sre2)


def test_sparse_eigenvalues_one_sparse_is_column_norm(rng):
    x = rng.standard_normal((30, 8)) * np.arange(1, 9)
    lo, hi = sparse_eigenvalues(x, 1)
    norms = np.sqrt(np.sum(x * x, axis=0) / 30)
    assert hi == np.max(norms)
    assert lo == pytest.approx(np.min(norms), rel=1e-14)


def test_full_sparse_eigenvalues_are_singular_values(rng):
    x = rng.standard_normal((25, 6))
    lo, hi = sparse_eigenvalues(x, 6)
    sv = np.linalg.svd(x / math.sqrt(25), compute_uv=False)
    assert lo == pytest.approx(sv[-1]) and hi == pytest.approx(sv[0])


def test_sparse_eigenvalues_monotone_in_s(rng):
    x = rng.standard_normal((20, 7))
    prev = (math.inf, 0.0)
    for s in range(1, 8):
        lo, hi = sparse_eigenvalues(x, s)
        assert lo <= prev[0] + 1e-12 and hi >= prev[1] - 1e-12
        prev = (lo, hi)


def test_budget_exceeded():
    with pytest.raises(ValueError):
        sparse_eigenvalues(np.ones((3, 40)), 10, budget=1000)


def test_certified_sre_lower_examples():
    assert certified_sre_lower(1.0, 9, 1.0) == (4, pytest.approx(1 / math.sqrt(2)))
    assert certified_sre_lower(1e-6, 9, 1.0)[0] == 0
    assert certified_sre_lower(1.0, 9, 2.0)[0] == 1        # 8/8 = 1 = floor(4/4)
    assert certified_sre_lower(1.0, 9, 1.0, rigorous=True)[0] == 1
    with pytest.raises(ValueError):
        certified_sre_lower(0.0, 9, 1.0)


def test_wre_from_sre_examples():
    assert wre_from_sre(1, 1) == 3
    for p in (1, 5, 50, 500):
        for s in range(1, min(p, 20) + 1):
            assert wre_from_sre(s, p) >= s


def test_orthonormal_design_constants_are_one():
    x = orthonormal_design(20, 6, 3)
    for kind in ("RE", "SRE"):
        br = cone_constant_bracket(x, ConeSpec(kind, 2, 1.0), restarts=20, iters=30)
        assert br.lower == pytest.approx(1.0, abs=1e-9)
        assert br.upper == pytest.approx(1.0, abs=1e-9)


def test_bracket_is_consistent(rng):
    x = rescale_columns(rng.standard_normal((25, 7)))
    br = cone_constant_bracket(x, ConeSpec("SRE", 2, 1.0), restarts=50, iters=100)
    assert 0 <= br.lower <= br.upper
    assert cone_contains(br.witness, ConeSpec("SRE", 2, 1.0), rtol=1e-9)
    ratio = np.linalg.norm(x @ br.witness) / math.sqrt(25) / np.linalg.norm(br.witness)
    assert ratio == pytest.approx(br.upper, rel=1e-9)
    # sampled cone vectors never beat the reported upper bound by more than noise
    D = sample_mixed(rng, 5000, 7)
    D = D[cone_contains_many(D, ConeSpec("SRE", 2, 1.0))]
    ratios = np.linalg.norm(D @ x.T, axis=1) / math.sqrt(25) / np.linalg.norm(D, axis=1)
    assert np.min(ratios) >= br.upper - 1e-3
    assert br.to_dict()["method"] in ("certified-chain", "sampled")


def test_chain_lower_is_valid(rng):
    x = rescale_columns(rng.standard_normal((40, 6)))
    low = sre_chain_lower(x, 1, 0.5)
    D = sample_mixed(rng, 20000, 6)
    D = D[cone_contains_many(D, ConeSpec("SRE", 1, 0.5))]
    ratios = np.linalg.norm(D @ x.T, axis=1) / math.sqrt(40) / np.linalg.norm(D, axis=1)
    assert np.min(ratios) >= low - 1e-12
    # unnormalised designs get no certificate
    assert sre_chain_lower(x * 3, 1, 0.5) == 0.0


def test_wre_bracket_runs(rng):
    x = rescale_columns(rng.standard_normal((30, 6)))
    w = slope_weights(30, 6, 1.0, 2 * C_SQ2)
    br = cone_constant_bracket(x, ConeSpec("WRE", 2, 1.0, w), restarts=30, iters=50)
    assert 0 <= br.lower <= br.upper


def test_small_ball_probe():
    rng = np.random.default_rng(0)
    rows = rng.standard_normal((20000, 5))
    assert small_ball_probe(rows, 0.1, 2, 20) >= 0.9
    assert small_ball_probe(rows, 0.0, 2, 5) == 1.0
    assert small_ball_probe(np.zeros((10, 5)), 0.1, 2, 5) == 0.0
    with pytest.raises(ValueError):
        small_ball_probe(np.zeros((0, 5)), 0.1, 2, 5)
