"""Smooth compactly supported observables on the modular quotient.

An observable is a finite Poincare sum of one bump on the group,

    f(Gamma g) = amp * sum_gamma profile(||gamma g - p0||_F / delta),

with the mollifier profile(s) = exp(1 - 1/(1 - s^2)) on [0,1). The sum is
well defined on cosets because the truncation is certified: the constructor
derives a norm bound N_cert valid at every near-reduced evaluation point
below the support height and rejects any cutoff R that could miss a
contributing lattice element. Derivatives are analytic (chain rule through
the quadratic form Q = ||gamma g - p0||_F^2 / delta^2), never numeric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CutoffError
from .lie import U_MAT, UT_MAT, X_MAT, _as2x2
from .quotient import (
    MIN_HEIGHT,
    PointM,
    enumerate_lattice,
    haar_sample_batch,
    reduce_batch,
)
from .rng import SampleStreams

# Margin for evaluation at near-reduced points: between reductions the orbit
# representative is g_red * n_D with |D| <= DRIFT_MAX, and ||n_D||_2 <= 1+|D|.
DRIFT_MAX = 0.5
# Largest half-window (in orbit time) the activity certificate covers: a cell
# endpoint with qmin above the threshold provably sees no support point within
# this distance along the orbit.
ACTIVITY_WINDOW_MAX = 0.15

_EVAL_CHUNK = 16384


def profile_value(q: np.ndarray) -> np.ndarray:
    """Mollifier in the squared radial variable: exp(1 - 1/(1-q)) for q < 1."""
    q = np.asarray(q, dtype=np.float64)
    out = np.zeros_like(q)
    inside = q < 1.0
    with np.errstate(over="ignore", under="ignore"):
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - q[inside]))
    return out


def profile_d1(q: np.ndarray) -> np.ndarray:
    """d/dq of the mollifier: -phi(q) / (1-q)^2."""
    q = np.asarray(q, dtype=np.float64)
    out = np.zeros_like(q)
    inside = q < 1.0
    with np.errstate(over="ignore", under="ignore"):
        om = 1.0 - q[inside]
        out[inside] = -np.exp(1.0 - 1.0 / om) / (om * om)
    return out


def profile_d2(q: np.ndarray) -> np.ndarray:
    """d2/dq2 of the mollifier: phi(q) * ((1-q)^-4 - 2 (1-q)^-3)."""
    q = np.asarray(q, dtype=np.float64)
    out = np.zeros_like(q)
    inside = q < 1.0
    with np.errstate(over="ignore", under="ignore"):
        om = 1.0 - q[inside]
        out[inside] = np.exp(1.0 - 1.0 / om) * (om**-4 - 2.0 * om**-3)
    return out


def _profile_factor_sups():
    """Calculus sups of the fixed 1D profile factors, via a dense grid + 2%.

    F1  = sup |phi'(q)| * 2 sqrt(q)     (first-derivative chain factor)
    F1b = sup |phi'(q)|
    F2  = sup |phi''(q)| * 4 q          (second-derivative chain factor)
    """
    q = np.linspace(0.0, 1.0, 2_000_001)[:-1]
    d1 = np.abs(profile_d1(q))
    d2 = np.abs(profile_d2(q))
    f1 = float(np.max(d1 * 2.0 * np.sqrt(q))) * 1.02
    f1b = float(np.max(d1)) * 1.02
    f2 = float(np.max(d2 * 4.0 * q)) * 1.02
    return f1, f1b, f2


_F1, _F1B, _F2 = _profile_factor_sups()


def _fro(m: np.ndarray) -> float:
    return float(np.sqrt((np.asarray(m, dtype=np.float64) ** 2).sum()))


def _spec2(m: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(m, dtype=np.float64), 2))


@dataclass(frozen=True)
class SobolevSurrogate:
    """Monte Carlo estimate of the derivative-word L2 norm aggregate."""

    order: int
    value: float
    stderr: float


class BumpObservable:
    """Poincare-sum bump observable with certified truncation.

    Parameters
    ----------
    center : (2,2) array, the base point p0 (determinant 1).
    radius : float, Frobenius support radius delta.
    amplitude : float.
    lattice_cutoff : int, enumeration bound R (max |entry| of gamma).
    """

    def __init__(self, center, radius: float, amplitude: float, lattice_cutoff: int):
        p0 = np.array(_as2x2(center), dtype=np.float64)
        d = p0[0, 0] * p0[1, 1] - p0[0, 1] * p0[1, 0]
        if abs(d - 1.0) > 1e-9:
            raise ValueError("center must have determinant 1")
        if not (0 < radius < 1.0):
            raise ValueError("radius must lie in (0, 1)")
        self.center = p0
        self.radius = float(radius)
        self.amplitude = float(amplitude)
        self.lattice_cutoff = int(lattice_cutoff)
        self._certify()

    # -- certification ----------------------------------------------------

    def _reach_height_bound(self, dist: float) -> float:
        """Reduced-height bound of points whose orbit meets distance `dist`.

        If some gamma has ||gamma g - p0||_F <= dist then w = gamma g has
        Im z(w) inside the window set by the bottom row of p0 +- dist, and
        the reduced height of the underlying surface point is at most
        max(Im z, 1/Im z).
        """
        c0, d0 = abs(self.center[1, 0]), abs(self.center[1, 1])
        den_min = max(0.0, c0 - dist) ** 2 + max(0.0, d0 - dist) ** 2
        den_max = (c0 + dist) ** 2 + (d0 + dist) ** 2
        if den_min <= 0.0:
            raise CutoffError(
                "support window touches the cusp direction; the bottom row "
                "of the center is smaller than %.3f" % dist
            )
        return max(1.0 / den_min, den_max)

    @staticmethod
    def _norm_of_reduced(y_top: float) -> float:
        """max ||g||_F over reduced g with height <= y_top: y + (x^2+1)/y."""
        ys = (MIN_HEIGHT, max(y_top, MIN_HEIGHT))
        return math.sqrt(max(y + 1.25 / y for y in ys))

    def _certify(self):
        p0, delta = self.center, self.radius
        b0 = _fro(p0) + delta
        self._b0 = b0
        self._p0_inv_spec = _spec2(
            np.array([[p0[1, 1], -p0[0, 1]], [-p0[1, 0], p0[0, 0]]], dtype=np.float64)
        )

        # Height bound of the support itself, and the completeness condition
        # R >= (||p0||_F + delta) * max ||rep^{-1}||_F over reduced points
        # below it (||rep^{-1}||_F = ||rep||_F at determinant 1).
        self.support_height_bound = self._reach_height_bound(delta)
        r_min = b0 * self._norm_of_reduced(self.support_height_bound)
        if self.lattice_cutoff < r_min:
            raise CutoffError(
                "lattice cutoff %d cannot certify completeness; need >= %.2f"
                % (self.lattice_cutoff, r_min)
            )
        self.lattice_full = enumerate_lattice(self.lattice_cutoff)
        self._active_cache: dict[tuple, tuple] = {}
        self.lattice_active, _ = self.active_set(DRIFT_MAX, 0.0)

        # Overlap bound: two distinct contributing gammas force an integer
        # q != +-I with ||q p0 - p0||_F <= delta (1 + ||q||_2).
        if delta * self._p0_inv_spec >= 0.9:
            raise CutoffError("radius too large to certify the overlap count")
        q_norm_bound = b0 * self._p0_inv_spec / (1.0 - delta * self._p0_inv_spec)
        cand = enumerate_lattice(int(math.ceil(q_norm_bound)) + 1)
        count = 0
        for q in cand:
            qf = q.astype(np.float64)
            if _fro(qf @ p0 - p0) <= delta * (1.0 + _spec2(qf)):
                count += 1
        self.overlap_bound = max(count, 1)
        self.sup_bound = abs(self.amplitude) * self.overlap_bound

    def active_set(self, drift: float, window: float):
        """Certified lattice subset for near-reduced evaluation.

        Valid for arguments g = g_red n_D with |D| <= drift, and backs the
        activity certificate for orbit windows up to `window`: any gamma
        whose distance at such a g can fall below
        delta_act = (delta + window (||p0||+delta)) * slack
        is included; every excluded gamma provably stays above delta_act
        (sigma_min(gamma) = 1/||gamma||_2 and the norm-ball separation).
        Returns (gammas as float (k,2,2), q threshold = (delta_act/delta)^2).
        """
        key = (round(float(drift), 9), round(float(window), 9))
        if key in self._active_cache:
            return self._active_cache[key]
        if window > ACTIVITY_WINDOW_MAX:
            raise ValueError("window beyond certified maximum")
        if drift > DRIFT_MAX:
            raise ValueError("drift beyond certified maximum")
        delta = self.radius
        delta_act = (delta + window * (self._b0 + delta)) * 1.02
        y_reach = self._reach_height_bound(delta_act)
        n_cert = self._norm_of_reduced(y_reach) * (1.0 + drift)
        if delta_act * self._p0_inv_spec >= 0.95:
            raise CutoffError("radius too large for the activity certificate")
        entry_bound = n_cert * self._p0_inv_spec / (1.0 - delta_act * self._p0_inv_spec)
        r_enum = max(self.lattice_cutoff, int(math.ceil(entry_bound)) + 1)
        full = enumerate_lattice(r_enum)
        inv = np.empty_like(full)
        inv[:, 0, 0], inv[:, 1, 1] = full[:, 1, 1], full[:, 0, 0]
        inv[:, 0, 1], inv[:, 1, 0] = -full[:, 0, 1], -full[:, 1, 0]
        q_gam = inv.astype(np.float64) @ self.center
        norms_q = np.sqrt((q_gam**2).sum(axis=(1, 2)))
        norms_g = np.sqrt((full.astype(np.float64) ** 2).sum(axis=(1, 2)))
        keep = norms_q <= n_cert + norms_g * delta_act
        gammas = full[keep].astype(np.float64)
        if gammas.shape[0] == 0:
            raise CutoffError("no lattice element can reach the support")
        q_act = (delta_act / delta) ** 2
        self._active_cache[key] = (gammas, q_act)
        return self._active_cache[key]

    def derivative_sup_bound(self, direction, order: int = 1) -> float:
        """Certified sup bound on the directional derivative of this bump."""
        v = np.asarray(_as2x2(direction), dtype=np.float64)
        nu, nu2 = _spec2(v), _spec2(v @ v)
        amp_k = abs(self.amplitude) * self.overlap_bound
        b0, delta = self._b0, self.radius
        if order == 1:
            return amp_k * _F1 * (b0 * nu / delta)
        if order == 2:
            term2 = _F2 * (b0 * nu / delta) ** 2
            term1 = _F1B * 2.0 * b0 * (b0 * nu * nu + delta * nu2) / delta**2
            return amp_k * (term2 + term1)
        raise ValueError("order must be 1 or 2")

    # -- evaluation --------------------------------------------------------

    def activity_threshold(self, half_window: float) -> float:
        """Q threshold certifying 'no support point within half_window in s'.

        A gamma contributing at g n_xi sits at endpoint distance at most
        delta + |xi| (||p0||_F + delta), since the contributing product has
        norm <= ||p0|| + delta and n_{-xi} moves it by |xi| times that.
        qmin at both cell endpoints above this threshold makes every
        integrand built on this bump exactly constant on the cell.
        """
        return self.active_set(DRIFT_MAX, float(half_window))[1]

    def _terms(self, g: np.ndarray, gammas: np.ndarray, dirs=(), pairs=()):
        """Chunked Poincare-sum pass.

        Stage A classifies every (gamma, sample) pair in float32 through one
        BLAS product; only pairs inside the support (a percent-level set)
        reach the exact float64 stage B that accumulates values and
        derivatives. Classification in float32 is safe: the mollifier
        underflows to exactly 0 at q > 1 - 1/700, orders of magnitude before
        float32 rounding could misplace a pair, and activity thresholds
        carry 2% slack. dirs is a tuple of direction matrices; pairs holds
        (a, b) index pairs into dirs for mixed second derivatives.
        """
        g = np.asarray(g, dtype=np.float64)
        n = g.shape[0]
        delta2 = self.radius**2
        val = np.zeros(n)
        qmin = np.full(n, np.inf)
        d1 = [np.zeros(n) for _ in dirs]
        d2 = [np.zeros(n) for _ in pairs]
        dmats = [np.asarray(v, dtype=np.float64) for v in dirs]
        pmats = [dmats[a] @ dmats[b] for (a, b) in pairs]
        k = gammas.shape[0]
        a32 = np.ascontiguousarray(gammas.reshape(2 * k, 2), dtype=np.float32)
        p032 = self.center.astype(np.float32)
        for lo in range(0, n, _EVAL_CHUNK):
            hi = min(lo + _EVAL_CHUNK, n)
            m = hi - lo
            gc = g[lo:hi]
            # B[b, j*m + s] = g[s, b, j]; R[2a+i, j*m+s] = (gamma_a g_s)[i, j]
            b32 = np.ascontiguousarray(
                gc.transpose(1, 2, 0).reshape(2, 2 * m), dtype=np.float32
            )
            r4 = (a32 @ b32).reshape(k, 2, 2, m)
            r4 -= p032[None, :, :, None]
            q32 = np.einsum("kijm,kijm->km", r4, r4) / np.float32(delta2)
            np.minimum(qmin[lo:hi], q32.min(axis=0), out=qmin[lo:hi], casting="unsafe")
            ka, ss = np.nonzero(q32 < np.float32(1.0))
            if ka.size == 0:
                continue
            prod = gammas[ka] @ gc[ss]
            mp = prod - self.center
            qp = (mp * mp).sum(axis=(1, 2)) / delta2
            pv = profile_value(qp)
            val[lo:hi] += self.amplitude * np.bincount(ss, weights=pv, minlength=m)
            if not (dirs or pairs):
                continue
            dp = profile_d1(qp)
            mv = [prod @ v for v in dmats]
            qd = [2.0 * (mp * mvi).sum(axis=(1, 2)) / delta2 for mvi in mv]
            for i in range(len(dirs)):
                d1[i][lo:hi] += self.amplitude * np.bincount(
                    ss, weights=dp * qd[i], minlength=m
                )
            if pairs:
                dpp = profile_d2(qp)
                for i, (a, b) in enumerate(pairs):
                    mw = prod @ pmats[i]
                    qpp = (
                        2.0
                        * ((mv[a] * mv[b]).sum(axis=(1, 2)) + (mp * mw).sum(axis=(1, 2)))
                        / delta2
                    )
                    d2[i][lo:hi] += self.amplitude * np.bincount(
                        ss, weights=dpp * qd[a] * qd[b] + dp * qpp, minlength=m
                    )
        return val, qmin, d1, d2

    def eval_batch(self, g: np.ndarray, with_qmin: bool = False, gammas=None):
        """Values at near-reduced group elements (certified active subset)."""
        gam = self.lattice_active if gammas is None else gammas
        val, qmin, _, _ = self._terms(g, gam)
        return (val, qmin) if with_qmin else val

    def values_with_qmin(self, g: np.ndarray, dirs=(), gammas=None):
        """Value, certified qmin, and first derivatives in one shared pass."""
        gam = self.lattice_active if gammas is None else gammas
        val, qmin, d1, _ = self._terms(g, gam, dirs=tuple(dirs))
        return val, qmin, d1

    def deriv_batch(self, g: np.ndarray, direction) -> np.ndarray:
        """First directional derivative d/dr f(g exp(rV)) at r = 0, batched."""
        _, _, d1, _ = self._terms(g, self.lattice_active, dirs=(direction,))
        return d1[0]

    def deriv2_batch(self, g: np.ndarray, v, w) -> np.ndarray:
        """Mixed second derivative d2/da db f(g exp(aV) exp(bW)) at 0."""
        _, _, _, d2 = self._terms(g, self.lattice_active, dirs=(v, w), pairs=((0, 1),))
        return d2[0]

    def word_values(self, g: np.ndarray, k: int):
        """One shared pass: value plus all derivative words up to length k."""
        if k == 0:
            return [self.eval_batch(g)]
        dirs = _WORD_DIRS
        pairs = (
            tuple((a, b) for a in range(3) for b in range(3)) if k >= 2 else ()
        )
        val, _, d1, d2 = self._terms(g, self.lattice_active, dirs=dirs, pairs=pairs)
        return [val] + d1 + list(d2)

    def eval_point(self, x: PointM) -> float:
        """Full-cutoff sum at a reduced point (the spec-literal path)."""
        val, _, _, _ = self._terms(
            x.matrix[None], self.lattice_full.astype(np.float64)
        )
        return float(val[0])

    @property
    def passive_value(self) -> float:
        return 0.0

    # -- serialization -----------------------------------------------------

    def to_spec(self) -> dict:
        c = self.center
        return {
            "center.a11": float(c[0, 0]),
            "center.a12": float(c[0, 1]),
            "center.a21": float(c[1, 0]),
            "center.a22": float(c[1, 1]),
            "radius": self.radius,
            "amplitude": self.amplitude,
            "cutoff": self.lattice_cutoff,
        }

    @classmethod
    def from_spec(cls, d: dict) -> "BumpObservable":
        center = np.array(
            [
                [d["center.a11"], d["center.a12"]],
                [d["center.a21"], d["center.a22"]],
            ]
        )
        return cls(center, d["radius"], d["amplitude"], int(d["cutoff"]))


class ShiftedObservable:
    """A bump observable minus a constant (zero-mean projections, controls)."""

    def __init__(self, base: BumpObservable, shift: float, shift_stderr: float = 0.0):
        self.base = base
        self.shift = float(shift)
        self.shift_stderr = float(shift_stderr)

    def eval_batch(self, g, with_qmin: bool = False):
        out = self.base.eval_batch(g, with_qmin=with_qmin)
        if with_qmin:
            return out[0] - self.shift, out[1]
        return out - self.shift

    def deriv_batch(self, g, direction):
        return self.base.deriv_batch(g, direction)

    def deriv2_batch(self, g, v, w):
        return self.base.deriv2_batch(g, v, w)

    def eval_point(self, x: PointM) -> float:
        return self.base.eval_point(x) - self.shift

    def activity_threshold(self, half_window: float) -> float:
        return self.base.activity_threshold(half_window)

    @property
    def support_height_bound(self):
        return self.base.support_height_bound

    @property
    def passive_value(self) -> float:
        return -self.shift


def observable_eval(f, x: PointM) -> float:
    """f evaluated at a reduced point of the quotient."""
    return f.eval_point(x)


def directional_derivative(f, x: PointM, direction, order: int = 1) -> float:
    """Analytic directional derivative along exp(r V) at a reduced point."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    v = _as2x2(direction)
    g = x.matrix[None]
    if order == 1:
        return float(f.deriv_batch(g, v)[0])
    return float(f.deriv2_batch(g, v, v)[0])


_WORD_DIRS = (U_MAT, X_MAT, UT_MAT)


def sobolev_surrogate(
    f,
    k: int,
    n_samples: int,
    streams: SampleStreams,
    y_max: float = 1000.0,
) -> SobolevSurrogate:
    """Monte Carlo sqrt(sum over derivative words |w| <= k of ||w f||_2^2).

    Words run over the three basis directions; the empty word (the function
    itself) is included so the value dominates the plain L2 norm.
    """
    if k > 2:
        raise ValueError("surrogate implemented for k <= 2")
    idx = np.arange(n_samples, dtype=np.uint64)
    g, _ = haar_sample_batch(streams, idx, y_max)
    base = f.base if isinstance(f, ShiftedObservable) else f
    words = base.word_values(g, k)
    if isinstance(f, ShiftedObservable):
        words[0] = words[0] - f.shift
    total = np.zeros(n_samples)
    for wv in words:
        total += np.asarray(wv, dtype=np.float64) ** 2
    mean = float(total.mean())
    se_mean = float(total.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
    value = math.sqrt(max(mean, 0.0))
    stderr = se_mean / (2.0 * value) if value > 0 else math.sqrt(max(se_mean, 0.0))
    return SobolevSurrogate(order=k, value=value, stderr=stderr)


def project_zero_mean(
    f,
    weight=None,
    n_samples: int = 200_000,
    streams: SampleStreams | None = None,
    y_max: float = 1000.0,
) -> ShiftedObservable:
    """Subtract the Monte Carlo mean (plain or tau-weighted) from f.

    With a weight generator tau the subtracted constant is the estimate of
    the tau-weighted mean mu(tau f)/mu(tau), i.e. the mean under the
    invariant measure of the time-changed flow.
    """
    if streams is None:
        streams = SampleStreams(0)
    idx = np.arange(n_samples, dtype=np.uint64)
    g, _ = haar_sample_batch(streams, idx, y_max)
    vals = np.asarray(f.eval_batch(g), dtype=np.float64)
    if weight is not None:
        w = np.asarray(weight.eval_batch(g), dtype=np.float64)
        m = float((w * vals).mean() / w.mean())
        resid = w * (vals - m) / w.mean()
        se = float(resid.std(ddof=1) / math.sqrt(n_samples))
    else:
        m = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(n_samples))
    base = f.base if isinstance(f, ShiftedObservable) else f
    prior = f.shift if isinstance(f, ShiftedObservable) else 0.0
    return ShiftedObservable(base, prior + m, se)
