"""Birkhoff integrals, L2 growth, correlation estimators, decay fits.

Correlations are estimated by importance weighting against the truncated
Haar sampler: the time-changed invariant measure has density tau / mu(tau),
so the tau = 1 case reduces to the plain unipotent estimator exactly. Means
are taken on an independent half of the sample before the product is
subtracted, avoiding the O(1/n) bias of reusing the cross-term samples.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import AllBelowNoiseError, DegenerateFitError
from .observables import ShiftedObservable
from .orbit import CocycleConfig, integrate_observable, solve_cocycle
from .quotient import PointM, haar_sample_batch, reduce_batch
from .rng import SampleStreams
from .shear import EXPAND_MAT, displace_batch
from .timechange import TimeChangeGenerator, invariant_weight_batch


@dataclass(frozen=True)
class CorrelationEstimate:
    t: float
    value: float
    stderr: float
    n_samples: int
    flow_kind: str  # "unipotent" | "timechanged"
    means: tuple

    def __post_init__(self):
        if self.stderr < 0 or self.n_samples < 2:
            raise ValueError("bad correlation estimate")


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    intercept: float
    ci95: tuple
    points_used: int
    noise_floor: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "exponent": self.exponent,
                "ci_low": self.ci95[0],
                "ci_high": self.ci95[1],
                "points_used": self.points_used,
                "noise_floor": self.noise_floor,
                "intercept": self.intercept,
            }
        )


def birkhoff_integral(f, x: PointM, t: float, step: float = 1.0 / 16.0) -> float:
    """I_t f(x) = int_0^t f(h_s x) ds along the plain unipotent flow."""
    if step > 1.0 / 16.0 + 1e-12:
        raise ValueError("step must be <= 1/16")
    cfg = CocycleConfig(step=step)
    out = integrate_observable(f, x.matrix[None], np.array([float(t)]), cfg)
    return float(out[0, 0])


def birkhoff_batch(f, g0: np.ndarray, t_list, step: float) -> np.ndarray:
    cfg = CocycleConfig(step=step)
    return integrate_observable(f, g0, np.asarray(t_list, dtype=np.float64), cfg)


@dataclass
class L2GrowthResult:
    points: list  # (t, second moment, stderr)
    slope: float
    slope_ci: tuple
    coherent_growth: bool

    def fitted(self):
        return self.slope, self.slope_ci


def l2_growth(
    f, t_list, n_samples: int, step: float, seed: int
) -> L2GrowthResult:
    """Monte Carlo ||I_t f||_2^2 over the t-grid plus a log-log slope fit.

    Zero-mean f should show slope strictly below 2; a non-zero mean forces
    I_t f ~ mu(f) t and slope 2, flagged as coherent growth.
    """
    t_arr = np.asarray(sorted(t_list), dtype=np.float64)
    streams = SampleStreams(seed)
    g, _ = haar_sample_batch(streams, np.arange(n_samples, dtype=np.uint64), 1000.0)
    ints = birkhoff_batch(f, g, t_arr, step)
    sq = ints**2
    m2 = sq.mean(axis=0)
    se = sq.std(axis=0, ddof=1) / math.sqrt(n_samples)
    points = [(float(t_arr[j]), float(m2[j]), float(se[j])) for j in range(t_arr.size)]
    usable = [(t, v, s) for (t, v, s) in points if v > 0]
    if len(usable) < 3:
        raise DegenerateFitError("fewer than 3 positive second moments")
    x = np.log([p[0] for p in usable])
    y = np.log([p[1] for p in usable])
    w = np.array([(p[1] / max(p[2], 1e-300)) ** 2 for p in usable])  # 1/se_log^2
    slope, ci = _wls_line(x, y, w)[0:2]
    coherent = not (ci[1] < 2.0)
    return L2GrowthResult(points=points, slope=slope, slope_ci=ci, coherent_growth=coherent)


def _wls_line(x, y, w):
    sw = w.sum()
    xb = (w * x).sum() / sw
    yb = (w * y).sum() / sw
    sxx = (w * (x - xb) ** 2).sum()
    slope = (w * (x - xb) * (y - yb)).sum() / sxx
    intercept = yb - slope * xb
    se = math.sqrt(1.0 / sxx)
    dof = max(len(x) - 2, 1)
    tq = _t_quantile_975(dof)
    ci = (float(slope - tq * se), float(slope + tq * se))
    return slope, ci, intercept, se


def _t_quantile_975(dof: int) -> float:
    table = {1: 12.706, 2: 4.303, 3: 3.182, 4: 2.776, 5: 2.571, 6: 2.447,
             7: 2.365, 8: 2.306, 9: 2.262, 10: 2.228, 12: 2.179, 15: 2.131,
             20: 2.086, 30: 2.042, 60: 2.0}
    if dof in table:
        return table[dof]
    keys = sorted(table)
    for k in keys:
        if dof < k:
            return table[k]
    return 1.96


def _flow_points(tau, g, t_arr, cfg, flow_kind):
    """Reduced images of g under the requested flow at each t."""
    n = g.shape[0]
    tg = np.tile(t_arr, (n, 1))
    if flow_kind == "timechanged":
        _, _, pts = solve_cocycle(tau, g, tg, cfg, collect_points=True)
        return pts
    pts = np.empty((n, t_arr.size, 2, 2))
    cur = g.copy()
    prev_t = 0.0
    for j, t in enumerate(t_arr):
        step_t = t - prev_t
        cur[:, :, 1] += step_t * cur[:, :, 0]
        cur, _, _ = reduce_batch(cur)
        pts[:, j] = cur
        prev_t = t
    return pts


def correlation_curve(
    f,
    g_obs,
    t_list,
    flow_kind: str,
    tau: TimeChangeGenerator | None,
    n_samples: int,
    cfg: CocycleConfig | None = None,
    seed: int = 7,
) -> list:
    """CorrelationEstimate at each t of the grid, sharing one batch of orbits.

    Half the samples carry the cross term, the other half the means. For the
    time-changed flow the correlation is under mu^tau via the importance
    weight tau / mu(tau).
    """
    if flow_kind not in ("unipotent", "timechanged"):
        raise ValueError("flow_kind must be unipotent or timechanged")
    if flow_kind == "timechanged" and tau is None:
        raise ValueError("timechanged correlations need tau")
    cfg = cfg or CocycleConfig()
    t_arr = np.asarray(sorted(t_list), dtype=np.float64)
    streams = SampleStreams(seed)
    n_half = n_samples // 2
    idx_a = np.arange(n_half, dtype=np.uint64)
    idx_b = np.arange(n_half, n_samples, dtype=np.uint64)

    g_a, _ = haar_sample_batch(streams, idx_a, 1000.0)
    g_b, _ = haar_sample_batch(streams, idx_b, 1000.0)

    if flow_kind == "timechanged":
        w_a = invariant_weight_batch(tau, g_a)
        w_b = invariant_weight_batch(tau, g_b)
    else:
        w_a = np.ones(n_half)
        w_b = np.ones(idx_b.size)

    g_vals_a = np.asarray(g_obs.eval_batch(g_a))
    f_b = np.asarray(f.eval_batch(g_b))
    g_b_vals = np.asarray(g_obs.eval_batch(g_b))
    mean_f = float((w_b * f_b).mean())
    mean_g = float((w_b * g_b_vals).mean())
    se_f = float((w_b * f_b).std(ddof=1) / math.sqrt(idx_b.size))
    se_g = float((w_b * g_b_vals).std(ddof=1) / math.sqrt(idx_b.size))
    cov_fg = float(np.cov(w_b * f_b, w_b * g_b_vals, ddof=1)[0, 1] / idx_b.size)

    pts = _flow_points(tau, g_a, t_arr, cfg, flow_kind)
    out = []
    for j, t in enumerate(t_arr):
        f_at = np.asarray(f.eval_batch(pts[:, j]))
        prod = w_a * f_at * g_vals_a
        cross = float(prod.mean())
        se_cross = float(prod.std(ddof=1) / math.sqrt(n_half))
        value = cross - mean_f * mean_g
        var_prod = (mean_g * se_f) ** 2 + (mean_f * se_g) ** 2 + 2 * mean_f * mean_g * cov_fg
        stderr = math.sqrt(se_cross**2 + max(var_prod, 0.0))
        out.append(
            CorrelationEstimate(
                t=float(t),
                value=value,
                stderr=stderr,
                n_samples=n_samples,
                flow_kind=flow_kind,
                means=(mean_f, mean_g),
            )
        )
    return out


def correlation(
    f,
    g_obs,
    t: float,
    flow_kind: str,
    tau: TimeChangeGenerator | None = None,
    n_samples: int = 20_000,
    cfg: CocycleConfig | None = None,
    seed: int = 7,
) -> CorrelationEstimate:
    """Single-t correlation; see correlation_curve."""
    return correlation_curve(f, g_obs, [t], flow_kind, tau, n_samples, cfg, seed)[0]


def geodesic_average_A(
    f,
    tau: TimeChangeGenerator,
    x: PointM,
    t: float,
    s: float,
    quad_step: float = 1.0 / 16.0,
    cfg: CocycleConfig | None = None,
) -> float:
    """A_{t,s} f(x) = int_0^s f(h^tau_t(x exp(rE))) dr by Simpson in r."""
    out = geodesic_average_A_batch(f, tau, x.matrix[None], t, s, quad_step, cfg)
    return float(out[0])


def geodesic_average_A_batch(f, tau, g: np.ndarray, t, s, quad_step, cfg=None):
    cfg = cfg or CocycleConfig()
    if s <= 0:
        raise ValueError("s must be positive")
    m = max(2, int(math.ceil(s / quad_step)))
    m += m % 2  # Simpson needs an even interval count
    r_nodes = np.linspace(0.0, s, m + 1)
    wts = np.ones(m + 1)
    wts[1:-1:2] = 4.0
    wts[2:-1:2] = 2.0
    wts *= s / (3.0 * m)
    n = g.shape[0]
    stacked = np.concatenate([displace_batch(g, float(r)) for r in r_nodes], axis=0)
    t_arr = np.full((stacked.shape[0], 1), float(t))
    _, _, pts = solve_cocycle(tau, stacked, t_arr, cfg, collect_points=True)
    vals = np.asarray(f.eval_batch(pts[:, 0])).reshape(m + 1, n)
    return wts @ vals


def fit_decay_exponent(points, noise_mult: float = 2.0) -> DecayFit:
    """Weighted log-log fit of |correlation| against t; exponent = -slope.

    Points with |value| at or below the noise floor (noise_mult times the
    median stderr) are excluded; if every point is below it, that outcome is
    reported as AllBelowNoiseError, which callers treat as fast decay rather
    than failure.
    """
    pts = list(points)
    if not pts:
        raise DegenerateFitError("no points")
    med_se = float(np.median([p.stderr for p in pts]))
    noise_floor = noise_mult * med_se
    usable = [p for p in pts if abs(p.value) > noise_floor and p.t > 0]
    if not usable:
        raise AllBelowNoiseError(
            "all %d correlation points below the noise floor %.3g"
            % (len(pts), noise_floor),
            points=pts,
        )
    if len(usable) < 3:
        raise DegenerateFitError(
            "only %d points above the noise floor; need >= 3" % len(usable)
        )
    x = np.log([p.t for p in usable])
    y = np.log([abs(p.value) for p in usable])
    w = np.array([(abs(p.value) / p.stderr) ** 2 if p.stderr > 0 else 1e6 for p in usable])
    slope, ci, intercept, _ = _wls_line(x, y, w)
    return DecayFit(
        exponent=float(-slope),
        intercept=float(intercept),
        ci95=(float(-ci[1]), float(-ci[0])),
        points_used=len(usable),
        noise_floor=noise_floor,
    )
