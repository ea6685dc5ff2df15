import math

import numpy as np
import pytest

from horolab import ReductionError, SampleStreams, coset_equal, enumerate_lattice, height, reduce
from horolab.quotient import (
    haar_region_mass,
    haar_sample_batch,
    reduce_batch,
    truncation_deficit,
    _z_of,
)


def test_reduce_identity():
    p = reduce(np.eye(2))
    assert np.abs(p.matrix - np.eye(2)).max() < 1e-12
    assert p.height == pytest.approx(1.0)


def test_reduce_translation():
    p = reduce(np.array([[1.0, 5.0], [0.0, 1.0]]))
    assert np.abs(p.matrix - np.eye(2)).max() < 1e-12
    assert np.array_equal(p.last_reducer, [[1, -5], [0, 1]])


def test_reduce_geodesic_inversion():
    # z = e^{-1} i violates |z| >= 1, reduction applies S and lands at height e
    r = 1.0
    p = reduce(np.diag([np.exp(-r / 2), np.exp(r / 2)]))
    assert p.height == pytest.approx(math.e, abs=1e-12)


def test_reduce_small_translation_keeps_height():
    p = reduce(np.array([[1.0, 0.25], [0.0, 1.0]]))
    assert p.height == pytest.approx(1.0, abs=1e-12)


def test_reduce_nonfinite_raises():
    with pytest.raises(ReductionError):
        reduce(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def _oracle_reduce(g, radius=40):
    """Exhaustive search for the reducing lattice element over small norms."""
    gam = enumerate_lattice(radius).astype(np.float64)
    prods = np.einsum("kij,jl->kil", gam, g)
    x, y = _z_of(prods)
    ok = (np.abs(x) <= 0.5 + 1e-9) & (x**2 + y**2 >= 1 - 1e-9)
    idx = np.flatnonzero(ok)
    assert idx.size > 0, "oracle radius too small"
    return prods[idx[0]]


def test_reduce_idempotence_vs_oracle():
    rng = np.random.default_rng(17)
    for _ in range(40):
        a = rng.normal(size=(2, 2))
        a[1, 1] = -a[0, 0]
        g = np.eye(2)
        m = a * rng.uniform(0.2, 1.2)
        # crude det-1 matrix via the exponential series
        from tests.test_lie import exp_oracle

        g = exp_oracle(m, 1.0) @ np.array([[1.0, rng.uniform(-8, 8)], [0.0, 1.0]])
        p = reduce(g)
        p2 = reduce(p.matrix)
        assert coset_equal(p, p2, 1e-9)
        oracle_rep = _oracle_reduce(g)
        _, yo = _z_of(oracle_rep[None])
        assert p.height == pytest.approx(float(yo[0]), rel=1e-9)


def test_coset_equal_basics(haar_pool):
    g, y = haar_pool
    p = reduce(g[0])
    assert coset_equal(p, p, 1e-9)
    from horolab import GroupElement, PointM

    q = PointM(GroupElement(-p.matrix), p.height, p.last_reducer)
    assert coset_equal(p, q, 1e-9)


def test_gamma_invariance_of_reduction(haar_pool):
    g, _ = haar_pool
    gam = enumerate_lattice(50)
    rng = np.random.default_rng(5)
    pick = gam[rng.integers(0, gam.shape[0], 300)].astype(np.float64)
    moved = np.einsum("nij,njk->nik", pick, g[:300])
    ra, _, _ = reduce_batch(moved)
    rb, _, _ = reduce_batch(g[:300])
    dev = np.minimum(
        np.abs(ra - rb).max(axis=(1, 2)), np.abs(ra + rb).max(axis=(1, 2))
    )
    assert dev.max() < 1e-9


def test_enumerate_lattice_counts():
    assert enumerate_lattice(0).shape[0] == 0
    got = enumerate_lattice(1)
    brute = set()
    for a in (-1, 0, 1):
        for b in (-1, 0, 1):
            for c in (-1, 0, 1):
                for d in (-1, 0, 1):
                    if a * d - b * c == 1:
                        brute.add((a, b, c, d))
    got_set = {tuple(m.ravel()) for m in got}
    assert got_set == brute
    assert got.shape[0] == len(brute) == 20
    rows = [tuple(m.ravel()) for m in got]
    assert rows == sorted(rows)


def test_enumerate_lattice_dets():
    gam = enumerate_lattice(6)
    dets = gam[:, 0, 0] * gam[:, 1, 1] - gam[:, 0, 1] * gam[:, 1, 0]
    assert np.all(dets == 1)
    # spot check against a brute-force scan at radius 3
    brute = 0
    for a in range(-3, 4):
        for b in range(-3, 4):
            for c in range(-3, 4):
                for d in range(-3, 4):
                    brute += a * d - b * c == 1
    assert enumerate_lattice(3).shape[0] == brute


def test_haar_in_fundamental_domain(haar_pool):
    g, y = haar_pool
    x, yy = _z_of(g)
    assert np.all(np.abs(x) <= 0.5 + 1e-9)
    assert np.all(x**2 + yy**2 >= 1 - 1e-9)
    assert np.abs(yy - y).max() < 1e-9
    assert np.all(y <= 1000.0 + 1e-9)
    dets = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] * g[:, 1, 0]
    assert np.abs(dets - 1).max() < 1e-9


def test_haar_height_mass(haar_pool):
    _, y = haar_pool
    y_max = 1000.0
    p_exact = (0.5 - 1.0 / y_max) / haar_region_mass(y_max)
    p_emp = float((y > 2).mean())
    se = math.sqrt(p_exact * (1 - p_exact) / y.size)
    assert abs(p_emp - p_exact) < 4 * se
    assert truncation_deficit(y_max) == pytest.approx(3 / (math.pi * y_max))


def test_haar_theta_marginal_uniform():
    # recover theta from the sampled frame: the rotation part of n^-1 a^-1 g
    streams = SampleStreams(314)
    g, y = haar_sample_batch(streams, np.arange(100_000, dtype=np.uint64), 1000.0)
    x, _ = _z_of(g)
    sy = np.sqrt(y)
    # k = a^{-1} n^{-1} g with n = [[1,x],[0,1]], a = diag(sy, 1/sy)
    k00 = (g[:, 0, 0] - x * g[:, 1, 0]) / sy
    k10 = g[:, 1, 0] * sy
    theta = np.arctan2(k10, k00) % (2 * math.pi)
    s = np.sort(theta) / (2 * math.pi)
    n = s.size
    d = np.max(np.abs(s - np.arange(1, n + 1) / n))
    assert d < 1.63 / math.sqrt(n)


def _rect_prob_quadrature(x_lo, x_hi, y_lo, y_hi, y_max):
    """Exact dx dy / y^2 mass of a rectangle, by fine quadrature in x."""
    xs = np.linspace(x_lo, x_hi, 20_001)
    floor = np.maximum(np.sqrt(np.maximum(1 - xs**2, 0.0)), y_lo)
    ceil = np.full_like(xs, min(y_hi, y_max))
    integrand = np.maximum(1.0 / floor - 1.0 / ceil, 0.0)
    return np.trapezoid(integrand, xs) / haar_region_mass(y_max)


def test_haar_rectangle_probabilities(haar_pool):
    g, y = haar_pool
    x, _ = _z_of(g)
    rects = [
        (-0.5, 0.5, 0.0, 2.0),
        (0.0, 0.5, 1.0, 3.0),
        (-0.25, 0.25, 0.8, 1.4),
        (-0.5, -0.2, 2.0, 10.0),
        (0.3, 0.5, 0.9, 1.1),
    ]
    for (a, b, c, d) in rects:
        p_exact = _rect_prob_quadrature(a, b, c, d, 1000.0)
        inside = (x >= a) & (x <= b) & (y >= c) & (y <= d)
        p_emp = float(inside.mean())
        se = math.sqrt(max(p_exact * (1 - p_exact), 1e-12) / y.size)
        assert abs(p_emp - p_exact) <= 4 * se, (a, b, c, d, p_emp, p_exact)


def test_haar_flow_invariance(ref_f, haar_pool):
    from horolab.lie import mul_unipotent

    g, y = haar_pool
    ind = lambda yy: (yy > 1.5).astype(float)
    for t in (1.0, 5.0, 20.0):
        moved = mul_unipotent(g, t)
        red, _, hy = reduce_batch(moved)
        for vals0, vals1 in (
            (ind(y), ind(hy)),
            (np.asarray(ref_f.eval_batch(g)), np.asarray(ref_f.eval_batch(red))),
        ):
            m0, m1 = vals0.mean(), vals1.mean()
            se = math.hypot(
                vals0.std() / math.sqrt(vals0.size), vals1.std() / math.sqrt(vals1.size)
            )
            assert abs(m0 - m1) <= 4 * se


def test_height_accessor(haar_pool):
    g, _ = haar_pool
    p = reduce(g[3])
    assert height(p) == pytest.approx(p.height)
    assert p.height >= math.sqrt(3) / 2 - 1e-9
