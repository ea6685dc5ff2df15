import math

import numpy as np
import pytest

from horolab import (
    BumpObservable,
    CocycleConfig,
    DiagnosticBounds,
    SampleStreams,
    TimeChangeGenerator,
    v_shear,
)
from horolab.lie import mul_unipotent
from horolab.quotient import GroupElement, PointM, reduce, reduce_batch
from horolab.shear import (
    EXPAND_MAT,
    c_tau_bound,
    check_change_of_variable,
    check_change_of_variable_batch,
    displace_batch,
    distortion_estimate_batch,
    du_dr_residual_batch,
    ergodic_exceedance,
    exceedance_trend,
    sample_shear_diagnostics,
    shear_exceedance,
    _v_batch,
)
from horolab.observables import project_zero_mean


def test_expanding_direction():
    # the unipotent coordinate stretches by e^r along the displacement
    r = 0.7
    d = displace_batch(np.eye(2)[None], r)[0]
    n_t = mul_unipotent(d[None], 2.0)[0]
    # d n_2 = n_{2 e^r} d
    other = mul_unipotent(np.eye(2)[None], 2.0 * math.exp(r))[0] @ d
    assert np.abs(n_t - other).max() < 1e-12


def test_v_trivial(trivial_tau, cfg16):
    x = reduce(np.eye(2))
    assert v_shear(trivial_tau, x, 0.3, 5.0, cfg16) == pytest.approx(5.0, abs=1e-9)


def test_v_orbit_missing_support(ref_tau, cfg16):
    # high-cusp start: the whole orbit segment stays above the support height
    y0 = 40.0
    g = np.diag([math.sqrt(y0), 1 / math.sqrt(y0)])
    x = reduce(g)
    assert v_shear(ref_tau, x, 0.2, 3.0, cfg16) == pytest.approx(3.0, abs=1e-12)


def test_v_refinement(ref_tau, haar_pool):
    g, _ = haar_pool
    coarse = CocycleConfig(step=1 / 8, gl_nodes=8)
    fine = CocycleConfig(step=1 / 64, gl_nodes=16)
    _, v1, _ = _v_batch(ref_tau, displace_batch(g[:64], 0.1), 50.0, coarse)
    _, v2, _ = _v_batch(ref_tau, displace_batch(g[:64], 0.1), 50.0, fine)
    assert np.abs(v1 - v2).max() <= 1e-6 * 50.0


def test_change_of_variable_trivial(trivial_tau, cfg16):
    x = reduce(np.eye(2))
    res = check_change_of_variable(trivial_tau, x, 0.1, 3.0, 1e-4, cfg16)
    assert res <= 1e-8


def test_change_of_variable_reference(ref_tau, cfg16, haar_pool):
    g, _ = haar_pool
    st = SampleStreams(55)
    n = 200
    r = st.uniforms(np.arange(n, dtype=np.uint64), 0)
    t = 1.0 + 99.0 * st.uniforms(np.arange(n, dtype=np.uint64), 1)
    res = check_change_of_variable_batch(ref_tau, g[:n], r, t, 1e-4, cfg16)
    assert np.all(res <= 1e-4 * (1 + t))


def test_change_of_variable_richardson(ref_tau, cfg16, haar_pool):
    g, _ = haar_pool
    st = SampleStreams(56)
    n = 150
    r = st.uniforms(np.arange(n, dtype=np.uint64), 0)
    t = 20.0 + 80.0 * st.uniforms(np.arange(n, dtype=np.uint64), 1)
    res_h = check_change_of_variable_batch(ref_tau, g[:n], r, t, 2e-4, cfg16)
    res_h2 = check_change_of_variable_batch(ref_tau, g[:n], r, t, 1e-4, cfg16)
    sig = res_h > 2e-5
    assert sig.sum() >= 5
    ratio = np.median(res_h[sig] / res_h2[sig])
    assert 3.0 <= ratio <= 5.0, ratio


def test_h_range_validated(ref_tau, cfg16):
    x = reduce(np.eye(2))
    with pytest.raises(ValueError):
        check_change_of_variable(ref_tau, x, 0.1, 3.0, 1e-7, cfg16)


def test_distortion_trivial(trivial_tau, cfg16, haar_pool):
    g, _ = haar_pool
    dv = distortion_estimate_batch(
        trivial_tau, g[:20], np.full(20, 0.3), np.full(20, 10.0), 1e-4, cfg16
    )
    assert np.abs(dv).max() <= 1e-5


def test_distortion_bound(ref_tau, cfg16, haar_pool):
    g, _ = haar_pool
    st = SampleStreams(57)
    n = 150
    r = st.uniforms(np.arange(n, dtype=np.uint64), 0)
    t = 1.0 + 255.0 * st.uniforms(np.arange(n, dtype=np.uint64), 1)
    dv = distortion_estimate_batch(ref_tau, g[:n], r, t, 1e-4, cfg16)
    bound = (c_tau_bound(ref_tau.m_tau) + 1e-3) * t
    assert np.all(np.abs(dv) <= bound)
    # the bound also holds with the honest grid-level m_tau
    from horolab import admissibility_report

    rep = admissibility_report(ref_tau, 20_000)
    m_grid = max(max(row.grid_sup for row in rep.rows), 1.0)
    assert np.all(np.abs(dv) <= (c_tau_bound(m_grid) + 1e-3) * t)


def test_distortion_term_by_term_oracle(ref_tau, cfg16):
    """dv/dr against the two-summand expansion, each term by quadrature."""
    x = reduce(mul_unipotent(np.eye(2)[None], -0.15)[0])
    r, t, h = 0.2, 8.0, 1e-4
    g = x.matrix[None]
    dv = float(distortion_estimate_batch(ref_tau, g, np.array([r]), np.array([t]), h, cfg16)[0])
    # term 1: -(du/dr) (E tau)(h^tau_t(x_r)); du/dr by central difference
    u_p, _, _ = _v_batch(ref_tau, displace_batch(g, r + h), t, cfg16)
    u_m, _, _ = _v_batch(ref_tau, displace_batch(g, r - h), t, cfg16)
    du_dr = (u_p[0] - u_m[0]) / (2 * h)
    u0, v0, pts = _v_batch(ref_tau, displace_batch(g, r), t, cfg16)
    etau_end = float(ref_tau.deriv_batch(pts, EXPAND_MAT)[0])
    term1 = -du_dr * etau_end
    # term 2: -int_0^u d/dr[(E tau)(h_s(x_r))] ds by differencing the
    # derivative channel integrals at fixed upper limit u0
    from horolab.orbit import TauFamily, solve_cocycle

    def etau_integral(rr):
        gr = displace_batch(g, rr)
        # integrate E tau along the plain orbit up to the fixed length u0
        from horolab.orbit import ObservableFamily, _sorted_sweep

        fam = TauFamily(ref_tau, (EXPAND_MAT,), cfg16)
        _, cums, _ = _sorted_sweep(
            fam, gr, np.array([[float(u0[0])]]), cfg16, 1.0, False, False
        )
        return float(cums[0, 0, 1])

    term2 = -(etau_integral(r + h) - etau_integral(r - h)) / (2 * h)
    assert dv == pytest.approx(term1 + term2, rel=1e-3, abs=1e-6)


def test_du_dr_closed_form(ref_tau, cfg16, haar_pool):
    g, _ = haar_pool
    st = SampleStreams(58)
    n = 100
    r = st.uniforms(np.arange(n, dtype=np.uint64), 0)
    t = 1.0 + 99.0 * st.uniforms(np.arange(n, dtype=np.uint64), 1)
    res = du_dr_residual_batch(ref_tau, g[:n], r, t, 1e-4, cfg16)
    assert np.all(res <= 1e-4 * (1 + t))


def test_shear_samples(ref_tau, cfg16):
    samples = sample_shear_diagnostics(ref_tau, 40, cfg=cfg16, seed=4)
    for s in samples:
        assert np.isfinite([s.u_val, s.v_val, s.dv_dr, s.lhs_derivative, s.rhs_formula]).all()
        assert s.t / ref_tau.m_tau - 1e-6 <= s.u_val <= s.t * ref_tau.m_tau + 1e-6
        assert abs(s.lhs_derivative - s.rhs_formula) <= 1e-4 * (1 + s.t)


def test_diagnostic_bounds_validation():
    DiagnosticBounds(C_v=1.0, C_tau=6.0, gamma=0.25)
    with pytest.raises(ValueError):
        DiagnosticBounds(C_v=1.0, C_tau=6.0, gamma=1.5)
    with pytest.raises(ValueError):
        DiagnosticBounds(C_v=-1.0, C_tau=6.0, gamma=0.5)


def test_shear_exceedance_trivial(trivial_tau, cfg16):
    rep = shear_exceedance(trivial_tau, 4.0, [4.0, 8.0], 1.0, 500, 0.25, 3, cfg16)
    assert rep.c_v_fit == 0.0
    assert all(frac == 0.0 for (_, _, _, frac) in rep.rows)


def test_shear_exceedance_monotone(ref_tau, cfg16):
    rep = shear_exceedance(ref_tau, 4.0, [4.0, 8.0, 16.0], 0.5, 2000, 0.25, 5, cfg16)
    fr1 = rep.max_ratio_exceed[rep.c_v_fit]
    fr2 = rep.max_ratio_exceed[2 * rep.c_v_fit]
    assert fr2 <= fr1
    assert 0 <= fr1 <= 1


def test_shear_exceedance_trend(ref_tau):
    cfg = CocycleConfig(step=1 / 16, gl_nodes=6)
    t_list = [4.0, 8.0, 16.0, 32.0]
    reports = []
    c_ref = None
    for t0 in (4.0, 16.0):
        rep = shear_exceedance(
            ref_tau, t0, t_list, 0.5, 6000, 0.25, 6, cfg, c_v_fixed=c_ref
        )
        if c_ref is None:
            c_ref = rep.c_v_fit
        reports.append(rep.max_ratio_exceed[c_ref])
    assert reports[1] < reports[0]


def test_ergodic_exceedance_zero():
    zero = BumpObservable(np.eye(2), 0.2, 0.0, 5)
    rep = ergodic_exceedance(zero, [4.0, 16.0], [1.0, 2.0], 300, 2)
    assert all(f == 0.0 for f in rep.fractions)


def test_ergodic_exceedance_monotone_in_c(ref_f):
    f0 = project_zero_mean(ref_f, None, 50_000, SampleStreams(9))
    from horolab.orbit import integrate_observable

    cfg = CocycleConfig(step=1 / 16, gl_nodes=8)
    ints = integrate_observable(f0, displace_batch(np.tile(np.eye(2), (1, 1, 1)), 0.0), np.array([4.0, 8.0]), cfg)
    # fraction non-increasing in the candidate threshold
    st = SampleStreams(10)
    from horolab.quotient import haar_sample_batch

    g, _ = haar_sample_batch(st, np.arange(2000, dtype=np.uint64), 1000.0)
    ints = integrate_observable(f0, g, np.array([4.0, 8.0, 16.0]), cfg)
    m = np.abs(ints).max(axis=1)
    f1 = (m > 0.5).mean()
    f2 = (m > 1.0).mean()
    assert f2 <= f1


def test_exceedance_trend_helper():
    slope, ci = exceedance_trend([0.5, 0.25, 0.125], [4.0, 16.0, 64.0])
    assert slope == pytest.approx(-0.5, abs=1e-9)
    assert ci[0] < slope < ci[1]
