import math

import numpy as np
import pytest

from horolab import (
    BumpObservable,
    CutoffError,
    SampleStreams,
    ShiftedObservable,
    directional_derivative,
    observable_eval,
    project_zero_mean,
    sobolev_surrogate,
)
from horolab.lie import U_MAT, UT_MAT, X_MAT, exp_algebra_batch
from horolab.observables import profile_value
from horolab.quotient import enumerate_lattice, reduce, reduce_batch


def poincare_sum_oracle(f, g):
    """Independent full-lattice summation, scalar arithmetic."""
    total = 0.0
    for gam in enumerate_lattice(f.lattice_cutoff):
        m = gam.astype(float) @ g
        s2 = float(((m - f.center) ** 2).sum()) / f.radius**2
        if s2 < 1.0:
            total += math.exp(1.0 - 1.0 / (1.0 - s2))
    return f.amplitude * total


def test_center_value(ref_f):
    p = reduce(np.eye(2))
    assert observable_eval(ref_f, p) == pytest.approx(ref_f.amplitude, abs=1e-14)


def test_eval_matches_independent_oracle(ref_f, haar_pool):
    g, _ = haar_pool
    vals = np.asarray(ref_f.eval_batch(g[:500]))
    for i in range(0, 500, 23):
        assert vals[i] == pytest.approx(poincare_sum_oracle(ref_f, g[i]), abs=1e-12)


def test_compact_support(ref_f, haar_pool):
    g, y = haar_pool
    high = y > ref_f.support_height_bound
    assert high.any()
    assert np.abs(np.asarray(ref_f.eval_batch(g[high]))).max() == 0.0


def test_gamma_invariance(ref_f, haar_pool):
    g, _ = haar_pool
    gam = enumerate_lattice(50)
    rng = np.random.default_rng(9)
    pick = gam[rng.integers(0, gam.shape[0], 1000)].astype(np.float64)
    moved, _, _ = reduce_batch(np.einsum("nij,njk->nik", pick, g[:1000]))
    base, _, _ = reduce_batch(g[:1000])
    dev = np.abs(
        np.asarray(ref_f.eval_batch(moved)) - np.asarray(ref_f.eval_batch(base))
    )
    assert dev.max() <= 1e-10


def test_cutoff_certification():
    with pytest.raises(CutoffError):
        BumpObservable(np.eye(2), 0.3, 1.0, 1)
    # center whose support window reaches the cusp direction
    with pytest.raises(CutoffError):
        BumpObservable(np.array([[10.0, 0.0], [0.05, 0.1]]), 0.3, 1.0, 20)


def test_derivatives_match_finite_differences(ref_f, haar_pool):
    g, _ = haar_pool
    _, qmin = ref_f.eval_batch(g, with_qmin=True)
    inside = np.flatnonzero((qmin > 0.02) & (qmin < 0.8))[:1000]
    gs = g[inside]
    h = 1e-5
    for v in (U_MAT, X_MAT, UT_MAT):
        ann = ref_f.deriv_batch(gs, v)
        ep = exp_algebra_batch(np.tile(v, (gs.shape[0], 1, 1)), h)
        em = exp_algebra_batch(np.tile(v, (gs.shape[0], 1, 1)), -h)
        fd = (
            np.asarray(ref_f.eval_batch(np.einsum("nij,njk->nik", gs, ep)))
            - np.asarray(ref_f.eval_batch(np.einsum("nij,njk->nik", gs, em)))
        ) / (2 * h)
        scale = np.abs(fd).max()
        assert np.abs(ann - fd).max() <= 1e-6 * max(scale, 1.0)


def test_second_derivative_composes(ref_f, haar_pool):
    g, _ = haar_pool
    _, qmin = ref_f.eval_batch(g, with_qmin=True)
    gs = g[np.flatnonzero((qmin > 0.05) & (qmin < 0.7))[:200]]
    hh = 1e-5  # first derivatives are analytic, so the step can be small
    for v in (X_MAT, U_MAT):
        direct = ref_f.deriv2_batch(gs, v, v)
        ep = exp_algebra_batch(np.tile(v, (gs.shape[0], 1, 1)), hh)
        em = exp_algebra_batch(np.tile(v, (gs.shape[0], 1, 1)), -hh)
        comp = (
            ref_f.deriv_batch(np.einsum("nij,njk->nik", gs, ep), v)
            - ref_f.deriv_batch(np.einsum("nij,njk->nik", gs, em), v)
        ) / (2 * hh)
        assert np.abs(direct - comp).max() <= 1e-7 * max(np.abs(direct).max(), 1.0)


def test_first_order_vanishes_at_center(ref_f):
    p = reduce(np.eye(2))
    d = directional_derivative(ref_f, p, X_MAT, 1)
    h = 1e-5
    fd = (
        ref_f.eval_batch((p.matrix @ exp_algebra_batch(X_MAT[None], h))[0][None])[0]
        - ref_f.eval_batch((p.matrix @ exp_algebra_batch(X_MAT[None], -h))[0][None])[0]
    ) / (2 * h)
    assert abs(d) <= 1e-8
    assert abs(d - fd) <= 1e-8


def test_smooth_edge(ref_f):
    # derivatives die out at the support boundary (profile flat at the edge)
    v = U_MAT
    p0v = ref_f.center @ v
    speed = math.sqrt((p0v**2).sum())
    for s_frac in (1 - 1e-3, 1 - 5e-4):
        s = s_frac * ref_f.radius / speed
        g = (ref_f.center[None] @ exp_algebra_batch(v[None], s))[0]
        assert abs(ref_f.deriv_batch(g[None], v)[0]) <= 1e-9
        assert abs(ref_f.deriv2_batch(g[None], v, v)[0]) <= 1e-9


def test_profile_properties():
    assert profile_value(np.array([0.0]))[0] == pytest.approx(1.0)
    assert profile_value(np.array([1.0, 2.0])).max() == 0.0
    q = np.linspace(0, 0.999, 100)
    assert np.all(np.diff(profile_value(q)) <= 0)


def test_sobolev_zero_and_scaling():
    zero = BumpObservable(np.eye(2), 0.2, 0.0, 5)
    s0 = sobolev_surrogate(zero, 2, 2000, SampleStreams(1))
    assert s0.value == 0.0
    f1 = BumpObservable(np.eye(2), 0.2, 1.0, 5)
    f3 = BumpObservable(np.eye(2), 0.2, -3.0, 5)
    s1 = sobolev_surrogate(f1, 2, 20_000, SampleStreams(2))
    s3 = sobolev_surrogate(f3, 2, 20_000, SampleStreams(2))
    assert s3.value == pytest.approx(3.0 * s1.value, rel=1e-12)
    # k=1 words are a subset of k=2 words
    s1k1 = sobolev_surrogate(f1, 1, 20_000, SampleStreams(2))
    assert s1k1.value <= s1.value


def test_sobolev_reference_self_consistency():
    f = BumpObservable(np.eye(2), 0.2, 1.0, 5)
    a = sobolev_surrogate(f, 2, 20_000, SampleStreams(11))
    b = sobolev_surrogate(f, 2, 200_000, SampleStreams(12))
    assert abs(a.value - b.value) <= 3 * math.hypot(a.stderr, b.stderr)


def test_projection(ref_f, haar_pool):
    g, _ = haar_pool
    pf = project_zero_mean(ref_f, None, 100_000, SampleStreams(5))
    fresh = np.asarray(pf.eval_batch(g[:50_000]))
    se = fresh.std(ddof=1) / math.sqrt(fresh.size)
    assert abs(fresh.mean()) <= 3 * math.hypot(se, pf.shift_stderr)
    # projecting an already-centered observable shifts by ~0
    pf2 = project_zero_mean(pf, None, 100_000, SampleStreams(6))
    assert abs(pf2.shift - pf.shift) <= 3 * pf2.shift_stderr
    # constant observable: zero-amplitude bump plus offset
    const = ShiftedObservable(BumpObservable(np.eye(2), 0.2, 0.0, 5), -0.7)
    pc = project_zero_mean(const, None, 10_000, SampleStreams(7))
    assert pc.shift - const.shift == pytest.approx(0.7, abs=1e-12)
    assert np.abs(np.asarray(pc.eval_batch(g[:100]))).max() <= 1e-12


def test_projection_weighted(ref_f, ref_tau, haar_pool):
    g, _ = haar_pool
    pf = project_zero_mean(ref_f, ref_tau, 100_000, SampleStreams(8))
    from horolab.timechange import invariant_weight_batch

    w = invariant_weight_batch(ref_tau, g[:50_000])
    vals = w * np.asarray(pf.eval_batch(g[:50_000]))
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean()) <= 3 * math.hypot(se, pf.shift_stderr)


def test_serialization_roundtrip(ref_g):
    d = ref_g.to_spec()
    back = BumpObservable.from_spec(d)
    assert np.array_equal(back.center, ref_g.center)
    assert back.radius == ref_g.radius
    assert back.lattice_cutoff == ref_g.lattice_cutoff
