"""2x2 group/algebra arithmetic: brackets, closed-form exponentials, raw flows.

The algebra basis is fixed once for the whole package:

    U = [[0,1],[0,0]]            unipotent generator (horocycle direction)
    X = diag(-1/2, 1/2)          diagonal generator, normalized so [X, U] = -U

With this sign the unipotent coordinate contracts under exp(rX) for r > 0:
the exact commutation relation is

    g exp(rX) exp(e^r t U) = g exp(tU) exp(rX),

i.e. flowing time e^r t after a geodesic displacement r equals flowing time t
before it. The expanding direction -X is what the shear module displaces
along; both conventions are exercised by the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericOverflowError

EXP_ARG_LIMIT = 700.0  # exp() overflows near 709 in double precision

U_MAT = np.array([[0.0, 1.0], [0.0, 0.0]])
UT_MAT = np.array([[0.0, 0.0], [1.0, 0.0]])
X_MAT = np.array([[-0.5, 0.0], [0.0, 0.5]])
IDENT = np.eye(2)

TRACE_TOL = 1e-12
DET_TOL = 1e-9


def _as2x2(m) -> np.ndarray:
    a = np.asarray(getattr(m, "entries", m), dtype=np.float64)
    if a.shape != (2, 2):
        raise ValueError("expected a 2x2 matrix, got shape %r" % (a.shape,))
    return a


@dataclass(frozen=True)
class AlgebraElement:
    """Traceless 2x2 real matrix (element of sl(2,R))."""

    entries: np.ndarray

    def __post_init__(self):
        a = _as2x2(self.entries)
        if abs(a[0, 0] + a[1, 1]) > TRACE_TOL:
            raise ValueError("algebra element must be traceless to %g" % TRACE_TOL)
        a = a.copy()
        a.flags.writeable = False
        object.__setattr__(self, "entries", a)


@dataclass(frozen=True)
class GroupElement:
    """2x2 real matrix with determinant 1 (up to fp drift, renormalized)."""

    entries: np.ndarray

    def __post_init__(self):
        a = _as2x2(self.entries)
        d = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        if not np.isfinite(d) or d <= 0:
            raise ValueError("group element needs positive finite determinant")
        if abs(d - 1.0) > DET_TOL:
            raise ValueError("determinant %r deviates from 1 beyond %g" % (d, DET_TOL))
        a = a / np.sqrt(d)
        a.flags.writeable = False
        object.__setattr__(self, "entries", a)


ALG_U = AlgebraElement(U_MAT)
ALG_X = AlgebraElement(X_MAT)
ALG_UT = AlgebraElement(UT_MAT)


def lie_bracket(a, b):
    """[A, B] = AB - BA."""
    am, bm = _as2x2(a), _as2x2(b)
    out = am @ bm - bm @ am
    if isinstance(a, AlgebraElement) or isinstance(b, AlgebraElement):
        return AlgebraElement(out)
    return out


def det2(m) -> float:
    a = _as2x2(m)
    return float(a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0])


def renormalize_det(g: np.ndarray) -> np.ndarray:
    """Divide by sqrt(det); keeps long product chains at determinant 1."""
    d = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    return g / np.sqrt(d)[..., None, None]


def exp_algebra_batch(a: np.ndarray, t) -> np.ndarray:
    """exp(tA) for traceless A, via the Cayley-Hamilton split on det(A).

    A^2 = -det(A) I for traceless 2x2 A, so the series collapses:
      det = 0:  I + tA
      det < 0:  cosh(lam t) I + sinh(lam t)/lam A,  lam = sqrt(-det)
      det > 0:  cos(om t) I + sin(om t)/om A,       om = sqrt(det)
    """
    a = np.asarray(a, dtype=np.float64)
    single = a.ndim == 2
    if single:
        a = a[None]
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), a.shape[:1]).copy()
    d = a[:, 0, 0] * a[:, 1, 1] - a[:, 0, 1] * a[:, 1, 0]

    lam = np.sqrt(np.abs(d))
    arg = np.abs(t) * lam
    if np.any((d < 0) & (arg > EXP_ARG_LIMIT)):
        raise NumericOverflowError(
            "hyperbolic argument |t|*sqrt(-det) exceeds %g" % EXP_ARG_LIMIT
        )

    c = np.empty_like(d)
    s_over = np.empty_like(d)  # sinh(lam t)/lam or sin(om t)/om or t
    zero = lam < 1e-300
    neg = (d < 0) & ~zero
    pos = (d > 0) & ~zero
    c[zero] = 1.0
    s_over[zero] = t[zero]
    c[neg] = np.cosh(lam[neg] * t[neg])
    s_over[neg] = np.sinh(lam[neg] * t[neg]) / lam[neg]
    c[pos] = np.cos(lam[pos] * t[pos])
    s_over[pos] = np.sin(lam[pos] * t[pos]) / lam[pos]

    out = c[:, None, None] * IDENT + s_over[:, None, None] * a
    return out[0] if single else out


def exp_algebra(a, t: float):
    """Group element exp(tA); see exp_algebra_batch for the closed form."""
    out = exp_algebra_batch(_as2x2(a), float(t))
    if not np.all(np.isfinite(out)):
        raise NumericOverflowError("non-finite entries in exp_algebra result")
    if isinstance(a, AlgebraElement):
        return GroupElement(out)
    return out


def unipotent(t) -> np.ndarray:
    """exp(tU) = [[1, t], [0, 1]]."""
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros(t.shape + (2, 2))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    out[..., 0, 1] = t
    return out


def geodesic(r) -> np.ndarray:
    """exp(rX) = diag(e^{-r/2}, e^{r/2})."""
    r = np.asarray(r, dtype=np.float64)
    if np.any(np.abs(r) > 2 * EXP_ARG_LIMIT):
        raise NumericOverflowError("geodesic parameter too large")
    out = np.zeros(r.shape + (2, 2))
    out[..., 0, 0] = np.exp(-r / 2.0)
    out[..., 1, 1] = np.exp(r / 2.0)
    return out


def mul_unipotent(g: np.ndarray, t) -> np.ndarray:
    """g @ exp(tU) without forming the factor; only the second column moves."""
    g = np.asarray(g, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    out = g.copy()
    out[..., 0, 1] = g[..., 0, 0] * t + g[..., 0, 1]
    out[..., 1, 1] = g[..., 1, 0] * t + g[..., 1, 1]
    return out


def flow_unipotent_raw(g, t: float):
    """Right translation by exp(tU); pure group arithmetic, no reduction."""
    out = mul_unipotent(_as2x2(g), float(t))
    if not np.all(np.isfinite(out)):
        raise NumericOverflowError("non-finite entries in unipotent flow")
    if isinstance(g, GroupElement):
        return GroupElement(renormalize_det(out))
    return out


def flow_geodesic_raw(g, r: float):
    """Right translation by exp(rX)."""
    out = _as2x2(g) @ geodesic(float(r))
    if not np.all(np.isfinite(out)):
        raise NumericOverflowError("non-finite entries in geodesic flow")
    if isinstance(g, GroupElement):
        return GroupElement(renormalize_det(out))
    return out


def pushforward_X_along_h(s: float) -> AlgebraElement:
    """Transport of X across unipotent displacement s: exp(sU) X exp(-sU).

    By exact conjugation this equals X + sU; the closed form is asserted by
    the test suite entrywise.
    """
    n_plus = unipotent(float(s))
    n_minus = unipotent(-float(s))
    return AlgebraElement(n_plus @ X_MAT @ n_minus)
