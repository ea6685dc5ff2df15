import numpy as np
import pytest

from horolab import (
    AlgebraElement,
    GroupElement,
    NumericOverflowError,
    exp_algebra,
    flow_geodesic_raw,
    flow_unipotent_raw,
    lie_bracket,
    pushforward_X_along_h,
)
from horolab.lie import U_MAT, UT_MAT, X_MAT, exp_algebra_batch, renormalize_det


def exp_oracle(a, t):
    """Scaling-and-squaring Taylor expansion, order 20."""
    m = np.asarray(a, dtype=np.float64) * t
    k = max(0, int(np.ceil(np.log2(max(np.linalg.norm(m), 1e-30)))) + 4)
    m = m / 2.0**k
    out = np.eye(2)
    term = np.eye(2)
    for j in range(1, 21):
        term = term @ m / j
        out = out + term
    for _ in range(k):
        out = out @ out
    return out


def random_traceless(rng, n, scale=1.0):
    a = rng.normal(size=(n, 2, 2)) * scale
    a[:, 1, 1] = -a[:, 0, 0]
    return a


def test_bracket_examples():
    assert np.array_equal(lie_bracket(X_MAT, U_MAT), -U_MAT)
    a = np.array([[0.3, -1.2], [0.5, -0.3]])
    assert np.abs(lie_bracket(a, a)).max() == 0.0
    # [U, U^T] computed by direct 2x2 arithmetic
    direct = U_MAT @ UT_MAT - UT_MAT @ U_MAT
    assert np.array_equal(lie_bracket(U_MAT, UT_MAT), direct)
    assert np.array_equal(direct, np.diag([1.0, -1.0]))


def test_exp_nilpotent_and_diagonal():
    t = 2.75
    assert np.allclose(exp_algebra(U_MAT, t), [[1, t], [0, 1]], atol=0)
    r = 1.3
    expected = np.diag([np.exp(-r / 2), np.exp(r / 2)])
    assert np.abs(exp_algebra(X_MAT, r) - expected).max() < 1e-15


def test_exp_vs_scaling_squaring_oracle():
    a = np.array([[0.3, 1.1], [-0.7, -0.3]])
    got = exp_algebra(a, 1.0)
    assert np.abs(got - exp_oracle(a, 1.0)).max() < 1e-12
    rng = np.random.default_rng(42)
    mats = random_traceless(rng, 2000, 1.6)
    norms = np.sqrt((mats**2).sum(axis=(1, 2)))
    mats = mats * (np.minimum(norms, 5.0) / norms)[:, None, None]
    ts = rng.uniform(-1, 1, 2000)
    got = exp_algebra_batch(mats, ts)
    for i in range(0, 2000, 97):
        ref = exp_oracle(mats[i], ts[i])
        rel = np.abs(got[i] - ref).max() / max(1.0, np.abs(ref).max())
        assert rel < 1e-12


def test_exp_one_parameter_and_det():
    rng = np.random.default_rng(3)
    a = random_traceless(rng, 500)
    # unit Frobenius norm keeps the factors conditioned at |s|,|t| <= 5
    a /= np.sqrt((a**2).sum(axis=(1, 2)))[:, None, None]
    s = rng.uniform(-5, 5, 500)
    t = rng.uniform(-5, 5, 500)
    e1, e2, e12 = (
        exp_algebra_batch(a, s),
        exp_algebra_batch(a, t),
        exp_algebra_batch(a, s + t),
    )
    prod = np.einsum("nij,njk->nik", e1, e2)
    scale = np.maximum(1.0, np.abs(e12).max(axis=(1, 2)))
    assert (np.abs(prod - e12).max(axis=(1, 2)) / scale).max() < 1e-11
    dets = e1[:, 0, 0] * e1[:, 1, 1] - e1[:, 0, 1] * e1[:, 1, 0]
    assert (np.abs(dets - 1) / scale**2).max() < 1e-11


def test_overflow_guard():
    with pytest.raises(NumericOverflowError):
        exp_algebra(X_MAT, 3000.0)


def test_flow_unipotent():
    t = 4.2
    assert np.array_equal(flow_unipotent_raw(np.eye(2), t), [[1, t], [0, 1]])
    rng = np.random.default_rng(8)
    g = exp_oracle(random_traceless(rng, 1)[0], 1.0)
    two_step = flow_unipotent_raw(flow_unipotent_raw(g, 1.3), 2.4)
    one_step = flow_unipotent_raw(g, 3.7)
    assert np.abs(two_step - one_step).max() < 1e-12
    direct = g @ np.array([[1.0, 3.7], [0.0, 1.0]])
    assert np.abs(one_step - direct).max() < 1e-14


def test_flow_geodesic_and_commutation():
    g = np.array([[1.2, 0.3], [0.4, (1 + 0.3 * 0.4) / 1.2]])
    assert np.abs(flow_geodesic_raw(g, 0.0) - g).max() == 0.0
    rng = np.random.default_rng(11)
    for _ in range(200):
        t = rng.uniform(-10, 10)
        r = rng.uniform(-3, 3)
        lhs = flow_unipotent_raw(flow_geodesic_raw(g, r), np.exp(r) * t)
        rhs = flow_geodesic_raw(flow_unipotent_raw(g, t), r)
        resid = np.abs(renormalize_det(lhs) - renormalize_det(rhs)).max()
        assert resid < 1e-10


def test_pushforward_transport():
    assert np.array_equal(pushforward_X_along_h(0.0).entries, X_MAT)
    assert np.array_equal(pushforward_X_along_h(1.0).entries, X_MAT + U_MAT)
    # conjugation oracle with the series exponential
    s = -2.5
    n_plus = exp_oracle(U_MAT, s)
    n_minus = exp_oracle(U_MAT, -s)
    oracle = n_plus @ X_MAT @ n_minus
    assert np.abs(pushforward_X_along_h(s).entries - oracle).max() < 1e-13
    assert np.abs(oracle - (X_MAT + s * U_MAT)).max() < 1e-13
    for s in np.linspace(-1000, 1000, 17):
        dev = np.abs(pushforward_X_along_h(s).entries - (X_MAT + s * U_MAT)).max()
        assert dev <= 1e-12 * max(1.0, abs(s))


def test_type_invariants():
    with pytest.raises(ValueError):
        AlgebraElement(np.array([[1.0, 0.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        GroupElement(np.array([[2.0, 0.0], [0.0, 1.0]]))
    g = GroupElement(np.array([[1.0 + 5e-10, 0.0], [0.0, 1.0]]))
    d = g.entries[0, 0] * g.entries[1, 1] - g.entries[0, 1] * g.entries[1, 0]
    assert abs(d - 1.0) < 1e-12  # renormalized
