"""Command-line harness: verification suite, experiments, summaries.

Subcommands: verify | correlate | shear | l2growth | exceedance | summarize.
Exit codes: 0 success, 1 numeric/check failure, 2 config or admissibility
error. Experiments write crash-safe CSV (header first, row-by-row flush)
plus a JSON run manifest. Sample work is cut into fixed blocks (8192) keyed
by sample index, so any worker count yields byte-identical numbers.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import multiprocessing as mp
import os
import sys
import time

import numpy as np

from . import __version__
from .config import BLOCK_SIZE, HELP_KEYS, ExperimentConfig, load_config
from .errors import (
    AllBelowNoiseError,
    ConfigError,
    CutoffError,
    DegenerateFitError,
    HorolabError,
    NonAdmissibleError,
)
from .ergodic import CorrelationEstimate, DecayFit, fit_decay_exponent, _wls_line
from .lie import U_MAT, X_MAT, exp_algebra_batch, mul_unipotent, unipotent
from .observables import BumpObservable
from .orbit import integrate_observable, solve_cocycle
from .quotient import haar_sample_batch, haar_region_mass, reduce_batch, truncation_deficit
from .rng import SampleStreams
from .shear import EXPAND_MAT, displace_batch
from .timechange import invariant_weight_batch

# ---------------------------------------------------------------------------
# deterministic block-parallel execution

_CTX: dict = {}


def _init_ctx(cfg: ExperimentConfig, kind: str):
    """Build heavy objects once per process (inherited on fork)."""
    ctx = {"cfg": cfg, "kind": kind, "cocycle": cfg.cocycle()}
    ctx["tau"] = cfg.tau()
    if kind in ("correlate", "l2growth", "exceedance"):
        weight = ctx["tau"] if kind == "correlate" else None
        ctx["f"] = cfg.observable_f(weight)
        ctx["g"] = cfg.observable_g(weight)
    return ctx


def _blocks(n: int):
    return [(lo, min(lo + BLOCK_SIZE, n)) for lo in range(0, n, BLOCK_SIZE)]


def _run_blocks(worker, n: int, workers: int):
    """Map worker(lo, hi) over fixed blocks; stitch results in block order."""
    blocks = _blocks(n)
    if workers <= 1 or len(blocks) <= 1:
        return [worker(b) for b in blocks]
    with mp.get_context("fork").Pool(processes=workers) as pool:
        return pool.map(worker, blocks)


def _block_correlate(bounds):
    lo, hi = bounds
    cfg = _CTX["cfg"]
    streams = SampleStreams(cfg.seed)
    idx = np.arange(lo, hi, dtype=np.uint64)
    g_pts, _ = haar_sample_batch(streams, idx, cfg.y_max)
    tau, f, g_obs, ccfg = _CTX["tau"], _CTX["f"], _CTX["g"], _CTX["cocycle"]
    flow_kind = _CTX["flow_kind"]
    n_half = cfg.n_samples // 2
    w = (
        invariant_weight_batch(tau, g_pts)
        if flow_kind == "timechanged"
        else np.ones(hi - lo)
    )
    is_a = idx < n_half
    out = {}
    if is_a.any():
        ga = g_pts[is_a]
        t_arr = np.asarray(cfg.t_grid)
        if flow_kind == "timechanged":
            _, _, pts = solve_cocycle(
                tau, ga, np.tile(t_arr, (ga.shape[0], 1)), ccfg, collect_points=True
            )
        else:
            pts = np.empty((ga.shape[0], t_arr.size, 2, 2))
            cur = ga.copy()
            prev = 0.0
            for j, t in enumerate(t_arr):
                cur[:, :, 1] += (t - prev) * cur[:, :, 0]
                cur, _, _ = reduce_batch(cur)
                pts[:, j] = cur
                prev = t
        gv = np.asarray(g_obs.eval_batch(ga)) * w[is_a]
        cross = np.empty((ga.shape[0], t_arr.size))
        for j in range(t_arr.size):
            cross[:, j] = np.asarray(f.eval_batch(pts[:, j])) * gv
        out["cross"] = cross
    if (~is_a).any():
        gb = g_pts[~is_a]
        wb = w[~is_a]
        out["wf"] = np.asarray(f.eval_batch(gb)) * wb
        out["wg"] = np.asarray(g_obs.eval_batch(gb)) * wb
    return out


def _block_l2(bounds):
    lo, hi = bounds
    cfg = _CTX["cfg"]
    streams = SampleStreams(cfg.seed)
    idx = np.arange(lo, hi, dtype=np.uint64)
    g_pts, _ = haar_sample_batch(streams, idx, cfg.y_max)
    from .ergodic import birkhoff_batch

    return birkhoff_batch(_CTX["f"], g_pts, np.asarray(cfg.t_grid), cfg.l2_step)


def _block_shear(bounds):
    lo, hi = bounds
    cfg = _CTX["cfg"]
    streams = SampleStreams(cfg.seed)
    idx = np.arange(lo, hi, dtype=np.uint64)
    g_pts, _ = haar_sample_batch(streams, idx, cfg.y_max)
    tau, ccfg = _CTX["tau"], _CTX["cocycle"]
    t_arr = np.asarray([t for t in cfg.t_grid if t >= cfg.shear_t0])
    r_grid = _CTX["r_grid"]
    ratios = np.empty((r_grid.size, t_arr.size, hi - lo))
    for i, r in enumerate(r_grid):
        g_r = displace_batch(g_pts, float(r))
        _, cums, _ = solve_cocycle(
            tau, g_r, np.tile(t_arr, (hi - lo, 1)), ccfg, dirs=(EXPAND_MAT,)
        )
        v = t_arr[None, :] - cums[:, :, 1]
        denom = r * t_arr[None, :] + t_arr[None, :] ** (1.0 - cfg.shear_gamma)
        ratios[i] = (np.abs(v - t_arr[None, :]) / denom).T
    return ratios


def _block_exceed(bounds):
    lo, hi = bounds
    cfg = _CTX["cfg"]
    streams = SampleStreams(cfg.seed)
    idx = np.arange(lo, hi, dtype=np.uint64)
    g_pts, _ = haar_sample_batch(streams, idx, cfg.y_max)
    return integrate_observable(_CTX["f"], g_pts, _CTX["t_all"], _CTX["cocycle"])


# ---------------------------------------------------------------------------
# experiment drivers

def _csv_writer(path, header):
    new = not os.path.exists(path)
    fh = open(path, "a", newline="", encoding="utf-8")
    wr = csv.writer(fh)
    if new:
        wr.writerow(header)
        fh.flush()
    return fh, wr


def _fmt(x):
    if isinstance(x, float):
        return "%.17g" % x
    return x


def _manifest(cfg: ExperimentConfig, kind: str, out_dir: str, wall: float, rows: int):
    path = os.path.join(out_dir, "%s_manifest.json" % kind)
    payload = {
        "kind": kind,
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(cfg).items()},
        "wall_seconds": wall,
        "rows_written": rows,
        "cusp_truncation_deficit": truncation_deficit(cfg.y_max),
        "version": __version__,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
    return path


def run_experiment(cfg: ExperimentConfig, kind: str, out_dir: str) -> dict:
    """Dispatch one experiment kind; returns summary facts."""
    os.makedirs(out_dir, exist_ok=True)
    t_start = time.time()
    global _CTX
    _CTX = _init_ctx(cfg, kind if kind != "correlate" else "correlate")
    rows = 0

    if kind == "correlate":
        path = os.path.join(out_dir, "correlate.csv")
        fh, wr = _csv_writer(
            path,
            ["flow_kind", "t", "value", "stderr", "n", "seed", "tau_epsilon", "f_id", "g_id"],
        )
        f_id = "bump_r%g" % cfg.f_radius
        g_id = "bump_r%g" % cfg.g_radius
        for flow_kind in ("unipotent", "timechanged"):
            _CTX["flow_kind"] = flow_kind
            parts = _run_blocks(_block_correlate, cfg.n_samples, cfg.workers)
            cross = np.concatenate([p["cross"] for p in parts if "cross" in p])
            wf = np.concatenate([p["wf"] for p in parts if "wf" in p])
            wg = np.concatenate([p["wg"] for p in parts if "wg" in p])
            mean_f, mean_g = float(wf.mean()), float(wg.mean())
            se_f = float(wf.std(ddof=1) / math.sqrt(wf.size))
            se_g = float(wg.std(ddof=1) / math.sqrt(wg.size))
            cov_fg = float(np.cov(wf, wg, ddof=1)[0, 1] / wf.size)
            var_prod = (mean_g * se_f) ** 2 + (mean_f * se_g) ** 2
            var_prod += 2 * mean_f * mean_g * cov_fg
            for j, t in enumerate(cfg.t_grid):
                col = cross[:, j]
                value = float(col.mean()) - mean_f * mean_g
                se = math.sqrt(
                    (col.std(ddof=1) / math.sqrt(col.size)) ** 2 + max(var_prod, 0.0)
                )
                wr.writerow(
                    [flow_kind] + [_fmt(v) for v in (t, value, se)]
                    + [cross.shape[0] * 2, cfg.seed, _fmt(cfg.tau_epsilon), f_id, g_id]
                )
                fh.flush()
                rows += 1
        fh.close()
        _manifest(cfg, kind, out_dir, time.time() - t_start, rows)
        return {"csv": path, "rows": rows}

    if kind == "l2growth":
        path = os.path.join(out_dir, "l2growth.csv")
        fh, wr = _csv_writer(path, ["t", "i2_mean", "stderr", "n", "seed", "f_id"])
        parts = _run_blocks(_block_l2, cfg.n_samples, cfg.workers)
        ints = np.concatenate(parts)
        sq = ints**2
        for j, t in enumerate(cfg.t_grid):
            m2 = float(sq[:, j].mean())
            se = float(sq[:, j].std(ddof=1) / math.sqrt(sq.shape[0]))
            wr.writerow([_fmt(float(t)), _fmt(m2), _fmt(se), sq.shape[0], cfg.seed, "f"])
            fh.flush()
            rows += 1
        fh.close()
        _manifest(cfg, kind, out_dir, time.time() - t_start, rows)
        return {"csv": path, "rows": rows}

    if kind == "shear":
        path = os.path.join(out_dir, "shear.csv")
        fh, wr = _csv_writer(
            path, ["t0", "t", "r", "quantile", "C_v_fit", "exceed_frac", "n", "seed"]
        )
        r_grid = np.array(
            [0.0, cfg.shear_r_max / 4.0, cfg.shear_r_max / 2.0, cfg.shear_r_max]
        )
        _CTX["r_grid"] = r_grid
        parts = _run_blocks(_block_shear, cfg.n_samples, cfg.workers)
        ratios = np.concatenate(parts, axis=2)
        per_sample = ratios.max(axis=(0, 1))
        q = 1.0 - cfg.shear_t0 ** (-cfg.shear_gamma)
        c_v = float(np.quantile(per_sample, q))
        t_arr = [t for t in cfg.t_grid if t >= cfg.shear_t0]
        for j, t in enumerate(t_arr):
            for i, r in enumerate(r_grid):
                frac = float((ratios[i, j] > c_v).mean())
                wr.writerow(
                    [_fmt(v) for v in (cfg.shear_t0, float(t), float(r), q, c_v, frac)]
                    + [cfg.n_samples, cfg.seed]
                )
                fh.flush()
                rows += 1
        fh.close()
        _manifest(cfg, kind, out_dir, time.time() - t_start, rows)
        return {"csv": path, "rows": rows, "c_v": c_v}

    if kind == "exceedance":
        path = os.path.join(out_dir, "exceedance.csv")
        fh, wr = _csv_writer(
            path, ["T0", "gamma", "c", "exceed_frac", "n", "seed"]
        )
        t0s = sorted(cfg.exceed_t0_list)
        t_all = sorted(
            {m * t0 for t0 in t0s for m in cfg.exceed_multipliers if m * t0 <= 512.0}
        )
        _CTX["t_all"] = np.asarray(t_all)
        parts = _run_blocks(_block_exceed, cfg.n_samples, cfg.workers)
        ints = np.concatenate(parts)
        gamma = cfg.shear_gamma
        c_used = None
        fracs = []
        for t0 in t0s:
            cols = [j for j, t in enumerate(t_all) if t >= t0]
            ratios = np.abs(ints[:, cols]) / np.asarray(t_all)[cols][None, :] ** (
                1.0 - gamma
            )
            mx = ratios.max(axis=1)
            if c_used is None:
                c_used = float(np.quantile(mx, 1.0 - t0 ** (-gamma)))
            frac = float((mx > c_used).mean())
            fracs.append(frac)
            wr.writerow(
                [_fmt(v) for v in (float(t0), gamma, c_used, frac)]
                + [cfg.n_samples, cfg.seed]
            )
            fh.flush()
            rows += 1
        fh.close()
        _manifest(cfg, kind, out_dir, time.time() - t_start, rows)
        return {"csv": path, "rows": rows, "fractions": fracs, "t0s": t0s}

    raise ConfigError("unknown experiment kind %r" % kind)


# ---------------------------------------------------------------------------
# summary

def emit_summary(csv_path: str, noise_mult: float = 2.0, out_path: str | None = None):
    """Fit decay exponents from a correlate CSV; print the comparison line."""
    groups: dict = {}
    with open(csv_path, newline="", encoding="utf-8") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames is None or "value" not in rd.fieldnames:
            raise ConfigError("malformed CSV %s" % csv_path)
        for row in rd:
            kind = row.get("flow_kind", "unipotent")
            groups.setdefault(kind, []).append(
                CorrelationEstimate(
                    t=float(row["t"]),
                    value=float(row["value"]),
                    stderr=float(row["stderr"]),
                    n_samples=max(int(float(row.get("n", 2))), 2),
                    flow_kind=kind,
                    means=(0.0, 0.0),
                )
            )
    if not groups:
        groups[""] = []
    fits: dict = {}
    lines = []
    for kind, pts in sorted(groups.items()):
        label = kind or "all"
        if not pts:
            fits[label] = {"all_below_noise": True, "points": 0}
            lines.append("%s: no rows; nothing above the noise floor" % label)
            continue
        try:
            fit = fit_decay_exponent(pts, noise_mult)
            fits[label] = json.loads(fit.to_json())
            lines.append(
                "%s: exponent %.3f  (95%% CI %.3f..%.3f, %d points)"
                % (label, fit.exponent, fit.ci95[0], fit.ci95[1], fit.points_used)
            )
        except AllBelowNoiseError:
            fits[label] = {"all_below_noise": True}
            lines.append(
                "%s: every point at the Monte Carlo noise floor "
                "(decay at least as fast as the floor)" % label
            )
        except DegenerateFitError as exc:
            fits[label] = {"degenerate": str(exc)}
            lines.append("%s: degenerate fit (%s)" % (label, exc))
    if "unipotent" in fits and "timechanged" in fits:
        a = fits["timechanged"].get("exponent")
        b = fits["unipotent"].get("exponent")
        if a is not None and b is not None:
            lines.append(
                "fitted alpha = %.3f vs fitted beta/8 = %.3f (ratio %.2f; "
                "both are estimates, no assertion made)" % (a, b / 8.0, a / (b / 8.0))
            )
            beta0 = b / (1.0 + b)
            lines.append(
                "derived chain: beta0 = beta/(1+beta) = %.3f, gamma = beta0/4 = %.3f"
                % (beta0, beta0 / 4.0)
            )
    text = "\n".join(lines)
    print(text)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump(fits, fh, indent=1, sort_keys=True)
    return fits


# ---------------------------------------------------------------------------
# verification suite

class CheckResult:
    def __init__(self, tag, passed, detail):
        self.tag, self.passed, self.detail = tag, passed, detail


def _verify_checks(cfg: ExperimentConfig, x_sign: float):
    """Fast invariant suite; each check prints one pass/fail line."""
    checks = []
    st = SampleStreams(cfg.seed)
    xm = x_sign * X_MAT

    def add(tag, passed, detail):
        checks.append(CheckResult(tag, bool(passed), detail))

    # commutation: g exp(rX) exp(e^r t U) == g exp(tU) exp(rX)
    n = 10_000
    idx = np.arange(n, dtype=np.uint64)
    g, _ = haar_sample_batch(st, idx, cfg.y_max)
    t = (st.uniforms(idx, 20) - 0.5) * 20.0
    r = (st.uniforms(idx, 21) - 0.5) * 6.0
    lhs = mul_unipotent(g @ exp_algebra_batch(np.tile(xm, (n, 1, 1)), r), np.exp(r) * t)
    rhs = mul_unipotent(g, t) @ exp_algebra_batch(np.tile(xm, (n, 1, 1)), r)
    from .lie import renormalize_det

    resid = np.abs(renormalize_det(lhs) - renormalize_det(rhs)).max()
    add("commutation", resid <= 1e-10, "max residual %.2e" % resid)

    # exponential one-parameter property and determinant
    a = np.random.default_rng(cfg.seed).normal(size=(2000, 2, 2))
    a[:, 1, 1] = -a[:, 0, 0]
    s1 = st.uniforms(np.arange(2000, dtype=np.uint64), 22) * 4 - 2
    s2 = st.uniforms(np.arange(2000, dtype=np.uint64), 23) * 4 - 2
    e1 = exp_algebra_batch(a, s1)
    e2 = exp_algebra_batch(a, s2)
    e12 = exp_algebra_batch(a, s1 + s2)
    resid = np.abs(np.einsum("nij,njk->nik", e1, e2) - e12).max()
    dets = np.abs(e1[:, 0, 0] * e1[:, 1, 1] - e1[:, 0, 1] * e1[:, 1, 0] - 1).max()
    add("exp-oneparam", resid <= 1e-11, "max dev %.2e" % resid)
    add("exp-det", dets <= 1e-11, "max |det-1| %.2e" % dets)

    # adjoint transport X + sU
    s_vals = np.linspace(-1000, 1000, 41)
    worst = 0.0
    for s in s_vals:
        got = unipotent(s)[()] @ xm @ unipotent(-s)[()]
        worst = max(worst, float(np.abs(got - (xm + s * x_sign * U_MAT)).max()))
    add("adjoint-transport", worst <= 1e-12 * 1000, "max dev %.2e" % worst)

    # reduction idempotence + lattice invariance
    from .quotient import enumerate_lattice

    g2, _ = haar_sample_batch(st, np.arange(3000, dtype=np.uint64), cfg.y_max)
    rep, _, _ = reduce_batch(g2)
    rep2, _, _ = reduce_batch(rep)
    dev = min(
        np.abs(rep2 - rep).max(axis=(1, 2)).max(),
        np.abs(rep2 + rep).max(axis=(1, 2)).max(),
    )
    gam = enumerate_lattice(50)
    pick = gam[
        (st.uniforms(np.arange(1000, dtype=np.uint64), 24) * gam.shape[0]).astype(int)
    ].astype(np.float64)
    gg = np.einsum("nij,njk->nik", pick, g2[:1000])
    repg, _, _ = reduce_batch(gg)
    dev2 = np.minimum(
        np.abs(repg - rep[:1000]).max(axis=(1, 2)),
        np.abs(repg + rep[:1000]).max(axis=(1, 2)),
    ).max()
    add("reduce-idempotence", dev <= 1e-9, "max dev %.2e" % dev)
    add("gamma-invariance", dev2 <= 1e-9, "max dev %.2e" % dev2)

    # haar sampler region mass
    gs, ys = haar_sample_batch(st, np.arange(200_000, dtype=np.uint64), cfg.y_max)
    p_emp = float((ys > 2).mean())
    p_exact = (0.5 - 1.0 / cfg.y_max) / haar_region_mass(cfg.y_max)
    se = math.sqrt(p_exact * (1 - p_exact) / ys.size)
    add(
        "haar-mass",
        abs(p_emp - p_exact) <= 4 * se,
        "emp %.5f exact %.5f (%.1f se)" % (p_emp, p_exact, abs(p_emp - p_exact) / se),
    )

    # observables: invariance under the lattice, compact support
    tau = cfg.tau()
    f = cfg.observable_f()
    vals = np.asarray(f.eval_batch(rep[:1000]))
    valsg = np.asarray(f.eval_batch(repg))
    add(
        "observable-invariance",
        np.abs(vals - valsg).max() <= 1e-10,
        "max dev %.2e" % np.abs(vals - valsg).max(),
    )
    high = ys > f.support_height_bound
    worst = np.abs(np.asarray(f.eval_batch(gs[high]))).max() if high.any() else 0.0
    add("compact-support", worst == 0.0, "max |f| above height bound %.1e" % worst)

    # cocycle: trivial, bounds, additivity, reversal
    ccfg = cfg.cocycle()
    from .observables import BumpObservable as _B
    from .timechange import TimeChangeGenerator as _T

    tau0 = _T(_B(np.eye(2), 0.2, 0.0, 5), 0.0)
    u0, _, _ = solve_cocycle(tau0, g2[:200], np.full((200, 1), 7.5), ccfg)
    add("cocycle-trivial", np.abs(u0 - 7.5).max() <= ccfg.tol * 10, "max dev %.1e" % np.abs(u0 - 7.5).max())

    tg = 1.0 + 200.0 * st.uniforms(np.arange(600, dtype=np.uint64), 25)
    u, cums, pts = solve_cocycle(tau, g2[:600], tg[:, None], ccfg, collect_points=True)
    ok_bounds = np.all(
        (u[:, 0] >= tg / tau.m_tau - 100 * ccfg.tol * (1 + tg))
        & (u[:, 0] <= tg * tau.m_tau + 100 * ccfg.tol * (1 + tg))
    )
    add("cocycle-bounds", ok_bounds, "u/t in [%.3f, %.3f]" % ((u[:, 0] / tg).min(), (u[:, 0] / tg).max()))

    r2 = 1.0 + 50.0 * st.uniforms(np.arange(300, dtype=np.uint64), 26)
    t2 = 1.0 + 50.0 * st.uniforms(np.arange(300, dtype=np.uint64), 27)
    u_sum, _, pts2 = solve_cocycle(tau, g2[:300], (t2 + r2)[:, None], ccfg)
    u_t, _, pts_t = solve_cocycle(tau, g2[:300], t2[:, None], ccfg, collect_points=True)
    u_r, _, _ = solve_cocycle(tau, pts_t[:, 0], r2[:, None], ccfg)
    resid = np.abs(u_sum[:, 0] - u_t[:, 0] - u_r[:, 0]).max()
    add("cocycle-additivity", resid <= 1e-7, "max resid %.1e" % resid)

    u_b, _, _ = solve_cocycle(tau, pts_t[:, 0], -t2[:, None], ccfg)
    resid = np.abs(u_b[:, 0] + u_t[:, 0]).max()
    add("cocycle-reversal", resid <= 1e-7, "max resid %.1e" % resid)

    # shear identity and distortion bound
    from .shear import (
        c_tau_bound,
        check_change_of_variable_batch,
        distortion_estimate_batch,
    )

    rr = st.uniforms(np.arange(200, dtype=np.uint64), 28)
    tt = 1.0 + 99.0 * st.uniforms(np.arange(200, dtype=np.uint64), 29)
    res = check_change_of_variable_batch(tau, g2[:200], rr, tt, 1e-4, ccfg)
    tol = 1e-4 * (1 + tt)
    add("shear-identity", np.all(res <= tol), "max resid %.2e, worst margin %.2f" % (res.max(), (tol / np.maximum(res, 1e-300)).min()))
    dv = distortion_estimate_batch(tau, g2[:200], rr, tt, 1e-4, ccfg)
    bound = (c_tau_bound(tau.m_tau) + 1e-3) * tt
    add("distortion-bound", np.all(np.abs(dv) <= bound), "max |dv/dr|/t %.3f" % (np.abs(dv) / tt).max())

    # invariant measure weight normalization
    wvals = invariant_weight_batch(tau, gs[:100_000])
    m = float(wvals.mean())
    se_w = float(wvals.std(ddof=1) / math.sqrt(100_000))
    add("invariant-weight", abs(m - 1.0) <= 4 * se_w + 4 * tau.normalization_stderr, "mean %.5f" % m)

    return checks


def run_verify(cfg: ExperimentConfig, x_sign: float = 1.0) -> int:
    checks = _verify_checks(cfg, x_sign)
    failed = 0
    for c in checks:
        print("%-22s %s   %s" % (c.tag, "PASS" if c.passed else "FAIL", c.detail))
        failed += 0 if c.passed else 1
    print("%d/%d checks passed" % (len(checks) - failed, len(checks)))
    return 0 if failed == 0 else 1


# ---------------------------------------------------------------------------
# entry point

def make_parser():
    p = argparse.ArgumentParser(
        prog="horolab",
        description="Numerical lab for time-changed horocycle flows on the "
        "modular surface.",
        epilog="Config keys:\n" + HELP_KEYS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--config", help="path to key = value config file")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--workers", type=int, help="override worker count")
    p.add_argument("--out", default="runs", help="output directory")
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", help="run the invariant verification suite")
    v.add_argument(
        "--x-sign",
        type=float,
        default=1.0,
        choices=(1.0, -1.0),
        help="mutation switch for self-testing the suite (flip to make the "
        "commutation check fail)",
    )
    for kind in ("correlate", "shear", "l2growth", "exceedance"):
        sub.add_parser(kind, help="run the %s experiment" % kind)
    s = sub.add_parser("summarize", help="fit decay exponents from a CSV")
    s.add_argument("csv", help="correlate CSV path")
    s.add_argument("--json-out", help="write the DecayFit JSON here")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.workers is not None:
            overrides["workers"] = args.workers
        cfg = load_config(args.config, overrides)
        if args.command == "verify":
            return run_verify(cfg, args.x_sign)
        if args.command == "summarize":
            emit_summary(args.csv, cfg.noise_mult, args.json_out)
            return 0
        out = run_experiment(cfg, args.command, args.out)
        print(json.dumps({k: v for k, v in out.items() if not isinstance(v, np.ndarray)}))
        return 0
    except (ConfigError, NonAdmissibleError, CutoffError) as exc:
        print("configuration error: %s" % exc, file=sys.stderr)
        return 2
    except DegenerateFitError as exc:
        print("fit error: %s" % exc, file=sys.stderr)
        return 1
    except AllBelowNoiseError as exc:
        print("all points below noise floor: %s" % exc, file=sys.stderr)
        return 0
    except HorolabError as exc:
        print("numeric failure: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
