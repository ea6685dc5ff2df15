"""Points of SL(2,Z)\\SL(2,R): reduction, coset tests, Haar sampling, lattice.

A coset is represented by the matrix whose upper-half-plane shadow
z(g) = g.i (Moebius action) lies in the standard fundamental domain
|Re z| <= 1/2, |z| >= 1. Both the Moebius action and the lattice action are
left multiplications, so z(gamma g) = gamma.z(g) holds identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ReductionError
from .lie import GroupElement, _as2x2, renormalize_det
from .rng import SampleStreams

FUND_TOL = 1e-9
MAX_REDUCE_ITERS = 10_000
MIN_HEIGHT = math.sqrt(3.0) / 2.0

# variate slots used by the Haar sampler
_SLOT_X, _SLOT_Y, _SLOT_THETA = 0, 1, 2


@dataclass(frozen=True)
class PointM:
    """Reduced coset representative plus reduction metadata."""

    rep: GroupElement
    height: float
    last_reducer: np.ndarray  # integer 2x2, the gamma applied at reduction

    def __post_init__(self):
        r = np.asarray(self.last_reducer, dtype=np.int64)
        r.flags.writeable = False
        object.__setattr__(self, "last_reducer", r)

    @property
    def matrix(self) -> np.ndarray:
        return self.rep.entries


def _z_of(g: np.ndarray):
    """Upper-half-plane coordinates (x, y) of g.i for a batch of matrices."""
    a, b = g[..., 0, 0], g[..., 0, 1]
    c, d = g[..., 1, 0], g[..., 1, 1]
    den = c * c + d * d
    x = (a * c + b * d) / den
    y = (a * d - b * c) / den
    return x, y


def reduce_batch(g: np.ndarray, max_iters: int = MAX_REDUCE_ITERS):
    """Gauss reduction of a batch of group elements.

    Alternates integer translations z -> z - round(Re z) and inversions
    z -> -1/z (as left multiplications on the matrix) until z(g) lies in the
    fundamental domain. Returns (rep, reducer, height).
    """
    g = np.asarray(g, dtype=np.float64)
    if g.ndim == 2:
        g = g[None]
    if g.shape[-2:] != (2, 2):
        raise ValueError("expected (..., 2, 2) array")
    flat = g.reshape(-1, 2, 2).copy()
    n = flat.shape[0]
    if not np.all(np.isfinite(flat)):
        raise ReductionError("non-finite input to reduction")
    red = np.tile(np.eye(2, dtype=np.int64), (n, 1, 1))

    x, y = _z_of(flat)
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ReductionError("input does not map into the upper half plane")

    pending = np.arange(n)
    for _ in range(max_iters):
        shift = np.rint(x[pending])
        need_shift = shift != 0
        if np.any(need_shift):
            ids = pending[need_shift]
            s = shift[need_shift]
            # left multiply by [[1,-s],[0,1]]: row1 -= s*row2
            flat[ids, 0, :] -= s[:, None] * flat[ids, 1, :]
            red[ids, 0, :] -= s.astype(np.int64)[:, None] * red[ids, 1, :]
            x[ids] -= s
        r2 = x[pending] ** 2 + y[pending] ** 2
        need_inv = r2 < 1.0 - FUND_TOL
        if np.any(need_inv):
            ids = pending[need_inv]
            # left multiply by S = [[0,-1],[1,0]]
            top = flat[ids, 0, :].copy()
            flat[ids, 0, :] = -flat[ids, 1, :]
            flat[ids, 1, :] = top
            topr = red[ids, 0, :].copy()
            red[ids, 0, :] = -red[ids, 1, :]
            red[ids, 1, :] = topr
            xi, yi = _z_of(flat[ids])
            x[ids], y[ids] = xi, yi
        done = (np.abs(x[pending]) <= 0.5 + FUND_TOL) & (
            x[pending] ** 2 + y[pending] ** 2 >= 1.0 - FUND_TOL
        )
        pending = pending[~done]
        if pending.size == 0:
            break
    else:
        raise ReductionError(
            "reduction failed to converge for %d point(s)" % pending.size
        )
    if pending.size:
        raise ReductionError(
            "reduction failed to converge for %d point(s)" % pending.size
        )

    flat = renormalize_det(flat)
    shape = g.shape[:-2]
    return (
        flat.reshape(shape + (2, 2)),
        red.reshape(shape + (2, 2)),
        y.reshape(shape),
    )


def reduce(g) -> PointM:
    """Reduce a single group element to its PointM."""
    m = _as2x2(g)
    d = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if abs(d - 1.0) > 1e-6:
        raise ReductionError("determinant %r too far from 1" % d)
    rep, red, h = reduce_batch(m[None])
    return PointM(GroupElement(rep[0]), float(h[0]), red[0])


def height(p: PointM) -> float:
    """Im z of the reduced representative (cusp excursion diagnostic)."""
    return float(p.height)


@lru_cache(maxsize=None)
def _boundary_gammas() -> np.ndarray:
    return enumerate_lattice(2)


def coset_equal(p: PointM, q: PointM, tol: float) -> bool:
    """Same coset test modulo +-I, with a small-gamma sweep for boundary seams."""
    a, b = p.matrix, q.matrix
    if np.max(np.abs(a - b)) <= tol or np.max(np.abs(a + b)) <= tol:
        return True
    for gam in _boundary_gammas():
        ga = gam.astype(np.float64) @ a
        if np.max(np.abs(ga - b)) <= tol or np.max(np.abs(ga + b)) <= tol:
            return True
    return False


def enumerate_lattice(radius: int) -> np.ndarray:
    """All gamma in SL(2,Z) with max |entry| <= radius, lexicographic order.

    First columns (a, c) with gcd 1 get a particular solution of ad - bc = 1
    by the extended Euclid algorithm; the general solution shifts (b, d) by
    integer multiples of (a, c), and the entry bound clips the multiplier
    range. Output dtype is int64.
    """
    radius = int(radius)
    if radius < 0 or radius > 1000:
        raise ValueError("radius must be in [0, 1000]")
    rows = []
    for a in range(-radius, radius + 1):
        for c in range(-radius, radius + 1):
            if a == 0 and c == 0:
                continue
            if math.gcd(a, c) != 1:
                continue
            # particular (b0, d0) with a*d0 - c*b0 = 1
            g, u, v = _ext_gcd(a, c)
            # a*u + c*v = 1  ->  a*u - c*(-v) = 1: d0 = u, b0 = -v
            d0, b0 = u, -v
            # general: (b, d) = (b0 + k a, d0 + k c)
            lo, hi = -(10**18), 10**18
            for coeff, base in ((a, b0), (c, d0)):
                if coeff == 0:
                    if abs(base) > radius:
                        lo, hi = 1, 0
                        break
                    continue
                k1 = (-radius - base) / coeff
                k2 = (radius - base) / coeff
                k_lo, k_hi = min(k1, k2), max(k1, k2)
                lo = max(lo, math.ceil(k_lo - 1e-12))
                hi = min(hi, math.floor(k_hi + 1e-12))
            for k in range(lo, hi + 1):
                b, d = b0 + k * a, d0 + k * c
                rows.append((a, b, c, d))
    rows = sorted(set(rows))
    out = np.array(rows, dtype=np.int64).reshape(-1, 4)
    return out.reshape(-1, 2, 2) if out.size else np.zeros((0, 2, 2), np.int64)


def _ext_gcd(a: int, b: int):
    """g, u, v with a*u + b*v = g = gcd(a, b)."""
    old_r, r = a, b
    old_u, u = 1, 0
    old_v, v = 0, 1
    while r != 0:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_u, u = u, old_u - q * u
        old_v, v = v, old_v - q * v
    if old_r < 0:
        old_r, old_u, old_v = -old_r, -old_u, -old_v
    return old_r, old_u, old_v


def truncation_deficit(y_max: float) -> float:
    """Relative Haar mass removed by the cusp truncation y <= Y_max."""
    return 3.0 / (math.pi * y_max)


def haar_region_mass(y_max: float) -> float:
    """Total dx dy / y^2 mass of the truncated fundamental domain."""
    return math.pi / 3.0 - 1.0 / y_max


def _invert_x_cdf(u: np.ndarray, y_max: float) -> np.ndarray:
    """Inverse CDF of the x-marginal density 1/sqrt(1-x^2) - 1/Y_max on [-1/2, 1/2].

    W(x) = arcsin(x) - x/Y_max is the unnormalized CDF; 50 bisection steps
    pin x to ~1e-15 deterministically (no data-dependent iteration counts).
    """
    total = haar_region_mass(y_max)
    target = u * total + (math.asin(-0.5) + 0.5 / y_max)
    lo = np.full_like(u, -0.5)
    hi = np.full_like(u, 0.5)
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        w = np.arcsin(mid) - mid / y_max
        take = w < target
        lo = np.where(take, mid, lo)
        hi = np.where(take, hi, mid)
    return 0.5 * (lo + hi)


def haar_sample_batch(streams: SampleStreams, indices, y_max: float):
    """Truncated-Haar samples with density dx dy dtheta / y^2.

    Returns (reps, heights); the assembled representative n_x a_y k_theta is
    already reduced because the sampled (x, y) lies in the fundamental domain.
    """
    if y_max < 2.0:
        raise ValueError("Y_max must be >= 2")
    idx = np.asarray(indices, dtype=np.uint64)
    ux = streams.uniforms(idx, _SLOT_X)
    uy = streams.uniforms(idx, _SLOT_Y)
    ut = streams.uniforms(idx, _SLOT_THETA)

    x = _invert_x_cdf(ux, y_max)
    a = np.sqrt(np.maximum(1.0 - x * x, 0.0))
    a = np.maximum(a, MIN_HEIGHT)  # fp guard at the corner |x| = 1/2
    inv_y = (1.0 - uy) / a + uy / y_max
    y = 1.0 / inv_y
    theta = 2.0 * math.pi * ut

    sy = np.sqrt(y)
    ct, st = np.cos(theta), np.sin(theta)
    n = idx.shape[0]
    g = np.empty((n, 2, 2))
    # n_x a_y = [[sqrt(y), x/sqrt(y)], [0, 1/sqrt(y)]], then right-multiply k_theta
    g[:, 0, 0] = sy * ct + (x / sy) * st
    g[:, 0, 1] = -sy * st + (x / sy) * ct
    g[:, 1, 0] = st / sy
    g[:, 1, 1] = ct / sy
    return g, y


def haar_sample(streams: SampleStreams, y_max: float, index: int = 0) -> PointM:
    """Single truncated-Haar sample as a PointM."""
    g, y = haar_sample_batch(streams, np.array([index], dtype=np.uint64), y_max)
    return PointM(GroupElement(g[0]), float(y[0]), np.eye(2, dtype=np.int64))


def points_from_batch(reps: np.ndarray, heights: np.ndarray):
    """Wrap batch arrays as PointM objects (for the scalar public API)."""
    eye = np.eye(2, dtype=np.int64)
    return [
        PointM(GroupElement(reps[i]), float(heights[i]), eye)
        for i in range(reps.shape[0])
    ]
