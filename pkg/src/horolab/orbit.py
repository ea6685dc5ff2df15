"""Certified quadrature and cocycle inversion along unipotent orbits.

The sweep walks a batch of orbits over a shared uniform grid of cells in the
orbit parameter. A cell whose two endpoint evaluations both certify "no
support point within half a cell" (see BumpObservable.activity_threshold)
carries exactly constant integrands, so its contribution is exact; active
cells are refined with Gauss-Legendre nodes. The result: solver accuracy is
set by the Newton tolerance, not by the step, while cost stays at one cheap
evaluation per cell. A composite-Simpson mode ("simpson") is kept for
step-convergence diagnostics; it shows textbook 4th-order behavior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError
from .observables import ACTIVITY_WINDOW_MAX, DRIFT_MAX
from .quotient import reduce_batch

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl_nodes(n: int):
    """Gauss-Legendre nodes/weights on [0, 1]."""
    if n not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[n] = ((x + 1.0) / 2.0, w / 2.0)
    return _GL_CACHE[n]


@dataclass(frozen=True)
class CocycleConfig:
    """Orbit quadrature parameters.

    step: cell width in the orbit parameter. In "gauss" mode it only sets the
          activity-detection granularity; accuracy is step-independent.
    tol: inversion tolerance on |int_0^u tau - t|.
    reduce_every: cells between fundamental-domain reductions.
    gl_nodes: Gauss-Legendre points per active cell.
    quadrature: "gauss" (default) or "simpson" (4th-order diagnostics mode).
    """

    step: float = 1.0 / 64.0
    tol: float = 1e-9
    reduce_every: int = 16
    gl_nodes: int = 12
    quadrature: str = "gauss"

    def __post_init__(self):
        if not (0 < self.step <= 2 * ACTIVITY_WINDOW_MAX / 1.1):
            raise ValueError(
                "step must be in (0, %g]" % (2 * ACTIVITY_WINDOW_MAX / 1.1)
            )
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.quadrature not in ("gauss", "simpson"):
            raise ValueError("quadrature must be 'gauss' or 'simpson'")

    @property
    def effective_reduce_every(self) -> int:
        # target a drift of ~1/4 between reductions: tight active sets while
        # reductions stay rare; reduce_every only ever tightens this
        cap = max(1, int(math.floor(0.25 / self.step)))
        return max(1, min(self.reduce_every, cap))

    @property
    def drift_bound(self) -> float:
        # worst evaluation offset from the last reduced node: reduce_every
        # cells of node drift plus one in-cell window
        return min(DRIFT_MAX, (self.effective_reduce_every + 1) * self.step)


class TauFamily:
    """Integrand bundle for a time-change generator: tau plus derivatives.

    Channel 0 is tau itself (the inversion channel); further channels are
    directional derivatives of tau. All channels share the bump support, so
    one activity flag certifies them together. The certified lattice subset
    is fetched for the sweep's actual drift and window, which keeps it small.
    """

    def __init__(self, tau, dirs=(), cfg: "CocycleConfig | None" = None):
        self.tau = tau
        self.dirs = tuple(np.asarray(d, dtype=np.float64) for d in dirs)
        self.passive = (1.0,) + (0.0,) * len(self.dirs)
        self.min_rate = tau.positive_floor
        self._bump = tau.psi
        self.bind(cfg or CocycleConfig())

    def bind(self, cfg: "CocycleConfig"):
        self.gammas, self.q_act = self._bump.active_set(
            cfg.drift_bound, 0.55 * cfg.step
        )
        self.skip_floor = _skip_floor(self._bump, self.q_act, cfg.step)

    def node_values(self, g):
        val, qmin, d1 = self._bump.values_with_qmin(g, self.dirs, gammas=self.gammas)
        eps = self.tau.epsilon
        return [1.0 + eps * val] + [eps * d for d in d1], qmin

    def point_values(self, g):
        vals, _ = self.node_values(g)
        return vals


class ObservableFamily:
    """Integrand bundle for one (possibly shifted) observable."""

    def __init__(self, f, cfg: "CocycleConfig | None" = None):
        self.f = f
        self._bump = f.base if hasattr(f, "base") else f
        self._shift = getattr(f, "shift", 0.0)
        self.passive = (-self._shift,)
        self.min_rate = None  # not an inversion channel
        self.bind(cfg or CocycleConfig())

    def bind(self, cfg: "CocycleConfig"):
        self.gammas, self.q_act = self._bump.active_set(
            cfg.drift_bound, 0.55 * cfg.step
        )
        self.skip_floor = _skip_floor(self._bump, self.q_act, cfg.step)

    def node_values(self, g):
        val, qmin, _ = self._bump.values_with_qmin(g, (), gammas=self.gammas)
        return [val - self._shift], qmin

    def point_values(self, g):
        vals, _ = self.node_values(g)
        return vals


def _skip_floor(bump, q_act: float, step: float) -> float:
    """Height above which a point is provably outside activity reach.

    A point at reduced height above the support-window bound stays there for
    orbit time >= log of the height ratio (hyperbolic unit speed), so rows
    high in the cusp can certify whole blocks of cells passive at once.
    """
    delta_act = bump.radius * math.sqrt(q_act)
    return bump._reach_height_bound(delta_act) * math.exp(0.6 * step) * 1.05


def _advance(g: np.ndarray, ds) -> np.ndarray:
    out = g.copy()
    out[:, 0, 1] += ds * g[:, 0, 0]
    out[:, 1, 1] += ds * g[:, 1, 0]
    return out


class _Sweep:
    """One orbit sweep over a compacted alive set.

    Targets per row must be ascending with NaN padding at the end. In invert
    mode targets are values of the cumulative channel-0 integral; in
    checkpoint mode they are orbit times.
    """

    def __init__(self, family, g0, targets, cfg, direction, collect_points):
        g0 = np.asarray(g0, dtype=np.float64)
        targets = np.asarray(targets, dtype=np.float64)
        n, k = targets.shape
        if g0.shape[0] != n:
            raise ValueError("g0 and targets row counts differ")
        self.family = family
        self.cfg = cfg
        self.direction = float(direction)
        self.collect_points = collect_points
        self.n, self.k = n, k
        self.n_ch = len(family.passive)

        self.u_out = np.full((n, k), np.nan)
        self.cum_out = np.full((n, k, self.n_ch), np.nan)
        self.pts_out = np.zeros((n, k, 2, 2)) if collect_points else None

        red, _, _ = reduce_batch(g0)
        self.ids = np.arange(n)
        self.G = red
        self.targets = targets.copy()
        self.ptr = np.zeros(n, dtype=np.int64)
        self.cums = np.zeros((n, self.n_ch))

        self.q_act = family.q_act
        self.skip_floor = family.skip_floor
        v0, q0 = family.node_values(self.G)
        self.v0 = [np.asarray(v) for v in v0]
        self.act0 = q0 < self.q_act
        self.safe_until = self._skip_horizon(self.G, 0.0)
        self._drop_unneeded()

    def _skip_horizon(self, g: np.ndarray, s_now: float) -> np.ndarray:
        """Orbit time through which each row is certified passive by height."""
        c, d = g[:, 1, 0], g[:, 1, 1]
        det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] * g[:, 1, 0]
        y = det / (c * c + d * d)
        ratio = np.maximum(y / self.skip_floor, 1e-300)
        return s_now + np.maximum(np.log(ratio), 0.0)

    # -- bookkeeping -------------------------------------------------------

    def _pending(self):
        t = np.full(self.ids.shape, np.inf)
        live = np.flatnonzero(self.ptr < self.k)
        if live.size:
            nxt = self.targets[live, self.ptr[live]]
            t[live] = np.where(np.isfinite(nxt), nxt, np.inf)
        return t

    def _drop_unneeded(self):
        self._keep(np.isfinite(self._pending()))

    def _keep(self, mask):
        if mask.all():
            return
        self.ids = self.ids[mask]
        self.G = self.G[mask]
        self.targets = self.targets[mask]
        self.ptr = self.ptr[mask]
        self.cums = self.cums[mask]
        self.v0 = [v[mask] for v in self.v0]
        self.act0 = self.act0[mask]
        self.safe_until = self.safe_until[mask]

    def _points_at(self, g_rows: np.ndarray, xi: np.ndarray) -> np.ndarray:
        return _advance(g_rows, self.direction * xi)

    # -- cell quadrature (all helpers are subset-aligned) -------------------

    def _gl_integrals(self, g_rows: np.ndarray, xi: np.ndarray) -> np.ndarray:
        m = g_rows.shape[0]
        out = np.zeros((m, self.n_ch))
        if m == 0:
            return out
        x, w = _gl_nodes(self.cfg.gl_nodes)
        pts = self._points_at(
            np.repeat(g_rows, x.size, axis=0), (xi[:, None] * x[None, :]).ravel()
        )
        vals = self.family.point_values(pts)
        for c in range(self.n_ch):
            out[:, c] = xi * (vals[c].reshape(m, x.size) @ w)
        return out

    def _simpson_coeffs(self, v0_sub, vm_sub, v1_sub):
        """Quadratic-interpolant coefficients per channel: v0 + c1 x + c2 x^2."""
        h = self.cfg.step
        c1, c2 = [], []
        for c in range(self.n_ch):
            c2.append(2.0 * (v1_sub[c] - 2.0 * vm_sub[c] + v0_sub[c]) / (h * h))
            c1.append((4.0 * vm_sub[c] - 3.0 * v0_sub[c] - v1_sub[c]) / h)
        return c1, c2

    def _simpson_integrals(self, v0_sub, c1, c2, xi) -> np.ndarray:
        out = np.zeros((xi.size, self.n_ch))
        for c in range(self.n_ch):
            out[:, c] = v0_sub[c] * xi + c1[c] * xi**2 / 2.0 + c2[c] * xi**3 / 3.0
        return out

    def _subset_node_values(self, rows, at):
        """Channel values for a row subset at offset `at` within the cell."""
        pts = self._points_at(self.G[rows], np.full(rows.size, at))
        return self.family.point_values(pts)

    def _invert_active(self, rows, t_rem):
        """Newton-with-bracket solve of int_0^xi tau = t_rem on active rows."""
        h, tol = self.cfg.step, self.cfg.tol
        ga = self.G[rows]
        xa = np.clip(t_rem / max(self.family.min_rate, 1e-3), 0.0, h)
        lo = np.zeros(rows.size)
        hi = np.full(rows.size, h)
        if self.cfg.quadrature == "simpson":
            v0_sub = [v[rows] for v in self.v0]
            vm_sub = self._subset_node_values(rows, h / 2.0)
            v1_sub = self._subset_node_values(rows, h)
            c1, c2 = self._simpson_coeffs(v0_sub, vm_sub, v1_sub)
            for _ in range(60):
                tv = self._simpson_integrals(v0_sub, c1, c2, xa)[:, 0]
                resid = tv - t_rem
                if np.all(np.abs(resid) <= tol):
                    break
                hi = np.where(resid > 0, np.minimum(hi, xa), hi)
                lo = np.where(resid < 0, np.maximum(lo, xa), lo)
                slope = v0_sub[0] + c1[0] * xa + c2[0] * xa * xa
                xa = xa - resid / np.maximum(slope, 1e-6)
                bad = (xa < lo) | (xa > hi)
                xa = np.where(bad, 0.5 * (lo + hi), xa)
            else:
                raise ConvergenceError("simpson-mode inversion did not converge")
            return xa, self._simpson_integrals(v0_sub, c1, c2, xa)
        for _ in range(30):
            cums = self._gl_integrals(ga, xa)
            resid = cums[:, 0] - t_rem
            if np.all(np.abs(resid) <= tol):
                return xa, cums
            hi = np.where(resid > 0, np.minimum(hi, xa), hi)
            lo = np.where(resid < 0, np.maximum(lo, xa), lo)
            slope = self.family.point_values(self._points_at(ga, xa))[0]
            xa = xa - resid / np.maximum(slope, 1e-6)
            bad = (xa < lo) | (xa > hi)
            xa = np.where(bad, 0.5 * (lo + hi), xa)
        raise ConvergenceError("cocycle Newton polish did not converge")

    def _partial_cell(self, rows, xi, active, invert, t_rem=None):
        """xi and channel integrals over [0, xi] for a mixed row subset."""
        m = rows.size
        cums = np.zeros((m, self.n_ch))
        for c in range(self.n_ch):
            cums[:, c] = xi * self.family.passive[c]
        a = np.flatnonzero(active)
        if a.size:
            arows = rows[a]
            if invert:
                xa, ca = self._invert_active(arows, t_rem[a])
                xi = xi.copy()
                xi[a] = xa
                cums[a] = ca
            elif self.cfg.quadrature == "simpson":
                v0_sub = [v[arows] for v in self.v0]
                vm_sub = self._subset_node_values(arows, self.cfg.step / 2.0)
                v1_sub = self._subset_node_values(arows, self.cfg.step)
                c1, c2 = self._simpson_coeffs(v0_sub, vm_sub, v1_sub)
                cums[a] = self._simpson_integrals(v0_sub, c1, c2, xi[a])
            else:
                cums[a] = self._gl_integrals(self.G[arows], xi[a])
        return xi, cums

    # -- main loop ----------------------------------------------------------

    def run(self, invert: bool):
        cfg = self.cfg
        h = cfg.step
        finite = self.targets[np.isfinite(self.targets)]
        t_max = float(finite.max()) if finite.size else 0.0
        if invert:
            if self.family.min_rate is None or self.family.min_rate <= 0:
                raise ValueError("inversion needs a positive-rate channel 0")
            max_cells = int(math.ceil(t_max / (self.family.min_rate * h))) + 8
        else:
            max_cells = int(math.ceil(t_max / h)) + 4
        red_every = cfg.effective_reduce_every
        fam = self.family

        for j in range(max_cells):
            if self.ids.size == 0:
                return self._finish()
            s0 = j * h
            s1 = s0 + h
            G1 = _advance(self.G, self.direction * h)
            if (j + 1) % red_every == 0:
                G1, _, _ = reduce_batch(G1)
            need = self.safe_until < s1
            v1 = [np.full(self.ids.size, p) for p in fam.passive]
            act1 = np.zeros(self.ids.size, dtype=bool)
            rows_e = np.flatnonzero(need)
            if rows_e.size:
                ve, qe = fam.node_values(G1[rows_e])
                for c in range(self.n_ch):
                    v1[c][rows_e] = ve[c]
                act1[rows_e] = qe < self.q_act
                self.safe_until[rows_e] = self._skip_horizon(G1[rows_e], s1)
            cell_act = self.act0 | act1

            dcell = np.empty((self.ids.size, self.n_ch))
            for c in range(self.n_ch):
                dcell[:, c] = h * fam.passive[c]
            rows_a = np.flatnonzero(cell_act)
            if rows_a.size:
                if cfg.quadrature == "simpson":
                    vm = self._subset_node_values(rows_a, h / 2.0)
                    for c in range(self.n_ch):
                        dcell[rows_a, c] = (
                            h / 6.0 * (self.v0[c][rows_a] + 4.0 * vm[c] + v1[c][rows_a])
                        )
                else:
                    dcell[rows_a] = self._gl_integrals(
                        self.G[rows_a], np.full(rows_a.size, h)
                    )
            new_cums = self.cums + dcell

            while True:
                tnext = self._pending()
                if invert:
                    slack = 1e-12 * (1.0 + np.abs(new_cums[:, 0]))
                    hit = tnext <= new_cums[:, 0] + slack
                else:
                    hit = tnext <= s0 + h + 1e-12 * (1.0 + s0)
                if not hit.any():
                    break
                rows = np.flatnonzero(hit)
                if invert:
                    t_rem = np.clip(tnext[rows] - self.cums[rows, 0], 0.0, None)
                    xi = np.clip(t_rem, 0.0, h)
                    xi, cums_cell = self._partial_cell(
                        rows, xi, cell_act[rows], True, t_rem
                    )
                else:
                    xi = np.clip(tnext[rows] - s0, 0.0, h)
                    xi, cums_cell = self._partial_cell(rows, xi, cell_act[rows], False)
                oids = self.ids[rows]
                kk = self.ptr[rows]
                self.u_out[oids, kk] = s0 + xi
                self.cum_out[oids, kk] = self.cums[rows] + cums_cell
                if self.collect_points:
                    self.pts_out[oids, kk] = self._points_at(self.G[rows], xi)
                self.ptr[rows] += 1

            self.cums = new_cums
            self.G = G1
            self.v0 = v1
            self.act0 = act1
            self._drop_unneeded()
        if self.ids.size:
            raise ConvergenceError(
                "orbit sweep exhausted %d cells with %d rows unresolved"
                % (max_cells, self.ids.size)
            )
        return self._finish()

    def _finish(self):
        if self.collect_points:
            flat = self.pts_out.reshape(-1, 2, 2)
            good = np.isfinite(self.u_out).ravel()
            if good.any():
                red, _, _ = reduce_batch(flat[good])
                flat[good] = red
        return self.u_out, self.cum_out, self.pts_out


def _sorted_sweep(family, g0, targets, cfg, direction, collect_points, invert):
    """Run a sweep on per-row ascending targets, restoring input order."""
    order = np.argsort(
        np.where(np.isfinite(targets), targets, np.inf), axis=1, kind="stable"
    )
    tg = np.take_along_axis(targets, order, axis=1)
    sweep = _Sweep(family, g0, tg, cfg, direction, collect_points)
    u, cums, pts = sweep.run(invert)
    inv = np.argsort(order, axis=1, kind="stable")
    u = np.take_along_axis(u, inv, axis=1)
    cums = np.take_along_axis(cums, inv[..., None], axis=1)
    if pts is not None:
        pts = np.take_along_axis(pts, inv[..., None, None], axis=1)
    return u, cums, pts


def solve_cocycle(tau, g0, t_targets, cfg, *, dirs=(), collect_points=False):
    """Orbit times u with int_0^u tau = t for batches of (point, t-list).

    Negative targets run a mirrored sweep along the reversed orbit. Returns
    (u, cums, points); cums[..., 0] is the tau integral at u (equal to t up
    to tol) and further slots hold the integrals of the derivative channels.
    """
    g0 = np.asarray(g0, dtype=np.float64)
    t_targets = np.asarray(t_targets, dtype=np.float64)
    squeeze = t_targets.ndim == 1
    if squeeze:
        t_targets = t_targets[:, None]
    fam = TauFamily(tau, dirs, cfg)
    n, k = t_targets.shape
    u = np.full((n, k), np.nan)
    cums = np.full((n, k, 1 + len(dirs)), np.nan)
    pts = np.zeros((n, k, 2, 2)) if collect_points else None

    finite = np.isfinite(t_targets)
    zero = finite & (t_targets == 0)
    if zero.any():
        u[zero] = 0.0
        cums[zero] = 0.0
        if collect_points:
            red, _, _ = reduce_batch(g0)
            zi, zj = np.where(zero)
            pts[zi, zj] = red[zi]

    for sign in (1.0, -1.0):
        mask = finite & ((t_targets > 0) if sign > 0 else (t_targets < 0))
        if not mask.any():
            continue
        rows = np.flatnonzero(mask.any(axis=1))
        tg = np.where(mask[rows], np.abs(t_targets[rows]), np.nan)
        uu, cc, pp = _sorted_sweep(fam, g0[rows], tg, cfg, sign, collect_points, True)
        put = mask[rows]
        u_rows = u[rows]
        u_rows[put] = sign * uu[put]
        u[rows] = u_rows
        c_rows = cums[rows]
        c_rows[put] = sign * cc[put]
        cums[rows] = c_rows
        if collect_points:
            p_rows = pts[rows]
            p_rows[put] = pp[put]
            pts[rows] = p_rows

    if squeeze:
        u = u[:, 0]
        cums = cums[:, 0]
        pts = pts[:, 0] if pts is not None else None
    return u, cums, pts


def integrate_observable(f, g0, s_targets, cfg):
    """Cumulative int_0^s f(h_sigma x) dsigma at the requested checkpoints.

    s_targets may be one shared ascending list or an (n, k) per-row array.
    """
    g0 = np.asarray(g0, dtype=np.float64)
    s_targets = np.asarray(s_targets, dtype=np.float64)
    squeeze = False
    if s_targets.ndim == 1:
        s_targets = np.broadcast_to(
            s_targets[None, :], (g0.shape[0], s_targets.size)
        ).copy()
    if np.any(s_targets[np.isfinite(s_targets)] < 0):
        raise ValueError("checkpoints must be nonnegative")
    fam = ObservableFamily(f, cfg)
    _, cums, _ = _sorted_sweep(fam, g0, s_targets, cfg, 1.0, False, False)
    out = cums[:, :, 0]
    return out[:, 0] if squeeze else out
