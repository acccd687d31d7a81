"""Closed-form torsion solutions and thin-domain expansion coefficients.

This is the oracle layer: everything here is exact arithmetic on
polynomials or stabilized series, used to validate the finite-element
results.  No finite differences anywhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import brentq

from .geometry.specs import PolyBoundaryFn

SQRT3 = math.sqrt(3.0)

_BRENT_TOL = 1e-12  # root tolerance for the thickness maximizer z0


# ---------------------------------------------------------------------------
# closed forms


def eval_equilateral_torsion(x, y):
    """Torsion function of the equilateral triangle with vertices
    (-sqrt(3)/3, 0), (sqrt(3)/3, 0), (0, 1):

        v0 = y (y - 1 + sqrt(3) x)(y - 1 - sqrt(3) x) / 4
           = y^3/4 - y^2/2 + y/4 - 3 x^2 y / 4.

    Returns (value, gradient); the formula is global, the caller restricts
    to the triangle.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    value = 0.25 * y**3 - 0.5 * y**2 + 0.25 * y - 0.75 * x**2 * y
    gx = -1.5 * x * y
    gy = 0.75 * y**2 - y + 0.25 - 0.75 * x**2
    return value, np.stack(np.broadcast_arrays(gx, gy), axis=-1)


def _cosh_ratio(num_arg, den_arg):
    """cosh(num_arg)/cosh(den_arg) for num_arg <= den_arg, overflow-safe:
    exp(num-den) * (1 + exp(-2 num)) / (1 + exp(-2 den))."""
    num_arg = np.abs(num_arg)
    den_arg = np.abs(den_arg)
    return (np.exp(num_arg - den_arg)
            * (1.0 + np.exp(-2.0 * num_arg)) / (1.0 + np.exp(-2.0 * den_arg)))


def eval_rectangle_torsion(eps: float, x, y, n_terms: int = 400):
    """Series torsion function on the rectangle [0,1] x [-eps, eps]:

        u = x(1-x)/2 - (2/pi^3) sum_{n odd} (2 / (n^3 cosh(n pi eps)))
                                 sin(n pi x) cosh(n pi y)

    cosh ratios are evaluated in stabilized form so the series stays
    usable for thousands of terms.
    """
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = 2 * np.arange(n_terms) + 1  # odd harmonics only
    ratio = _cosh_ratio(np.multiply.outer(y, n * math.pi),
                        n * math.pi * eps)
    terms = (2.0 / n**3) * np.sin(np.multiply.outer(x, n) * math.pi) * ratio
    return 0.5 * x * (1.0 - x) - (2.0 / math.pi**3) * terms.sum(axis=-1)


def rectangle_short_side_gradient(eps: float, n_terms: int = 400) -> float:
    """|grad u| at the midpoint (0, 0) of the short side of [0,1]x[-eps,eps]:

        f(eps) = 1/2 - (4/pi^2) sum_{k>=0} 1 / ((2k+1)^2 cosh((2k+1) pi eps))

    f(0) = 0 exactly (sum of 1/(2k+1)^2 is pi^2/8); the limit value is
    returned directly for eps = 0 since the raw partial sum converges
    only like 1/n_terms there.
    """
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    if eps == 0.0:
        return 0.0
    n = 2 * np.arange(n_terms) + 1
    s = np.sum(1.0 / (n**2 * np.cosh(n * math.pi * eps)))
    return 0.5 - (4.0 / math.pi**2) * float(s)


def eval_ellipse_torsion(a_semi: float, b_semi: float, x, y):
    """Torsion function of the ellipse x^2/a^2 + y^2/b^2 < 1:

        u = (a^2 b^2 / (2 (a^2 + b^2))) (1 - x^2/a^2 - y^2/b^2)

    Returns (value, gradient), both exact.
    """
    a2, b2 = a_semi**2, b_semi**2
    c = a2 * b2 / (2.0 * (a2 + b2))
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    value = c * (1.0 - x**2 / a2 - y**2 / b2)
    gx = -2.0 * c * x / a2
    gy = -2.0 * c * y / b2
    return value, np.stack(np.broadcast_arrays(gx, gy), axis=-1)


def eval_concentric_annulus_torsion(rho1: float, rho2: float, r):
    """Radial torsion function of the concentric annulus rho2 < |x| < rho1:

        u(r) = (rho1^2 - r^2)/4 + ((rho1^2 - rho2^2)/4) ln(r/rho1)/ln(rho1/rho2)

    Returns (value, du/dr); raises for r outside [rho2, rho1].
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < rho2 - 1e-14) or np.any(r > rho1 + 1e-14):
        raise ValueError(f"r must lie in [{rho2}, {rho1}]")
    c = (rho1**2 - rho2**2) / (4.0 * math.log(rho1 / rho2))
    value = 0.25 * (rho1**2 - r**2) + c * np.log(r / rho1)
    dvalue = -0.5 * r + c / r
    return value, dvalue


# ---------------------------------------------------------------------------
# thin-domain expansion


@dataclass(frozen=True)
class NarrowCoefficients:
    """Expansion data for the squared boundary gradient on a thin domain.

    lambda1 multiplies eps^2 (shared by both graphs); lambda2_lower /
    lambda2_upper multiply eps^4 on y = eps*f1 and y = eps*f2.
    """

    a1: float
    a2: float
    a3: float
    a4: float
    lambda1: float
    lambda2_lower: float
    lambda2_upper: float


@dataclass(frozen=True)
class GapLeadingTerm:
    """Leading eps^4 coefficient of (upper gradient)^2 - (lower gradient)^2
    at the thickest cross-section z0.  A negative coefficient predicts the
    lower graph carries the larger boundary gradient for small eps."""

    z0: float
    coefficient: float


def _as_poly(f: PolyBoundaryFn) -> Polynomial:
    return Polynomial(np.asarray(f.coefficients))


@lru_cache(maxsize=128)
def _narrow_polynomials(c1: tuple, c2: tuple) -> dict:
    """All expansion coefficients as exact polynomials in x."""
    f1 = Polynomial(np.asarray(c1))
    f2 = Polynomial(np.asarray(c2))
    a1 = 0.5 * (f1 + f2)
    a2 = -0.5 * f1 * f2
    a1dd = a1.deriv(2)
    a2dd = a2.deriv(2)
    a3 = (a1dd * (f1**2 + f1 * f2 + f2**2)) / 6.0 + 0.5 * a2dd * (f1 + f2)
    a4 = (f1**3 * a1dd) / 6.0 + 0.5 * a2dd * f1**2 - a3 * f1
    lam1 = 0.25 * (f2 - f1) ** 2

    def lam2(fk: Polynomial) -> Polynomial:
        return ((a1.deriv() * fk + a2.deriv()) ** 2
                + (fk - a1) * (fk**2 * a1dd + 2 * fk * a2dd - 2 * a3))

    return {
        "a1": a1, "a2": a2, "a3": a3, "a4": a4,
        "lambda1": lam1,
        "lambda2_lower": lam2(f1),
        "lambda2_upper": lam2(f2),
        "gap": f2 - f1,
        "a1dd": a1dd,
    }


def narrow_coefficients(f1: PolyBoundaryFn, f2: PolyBoundaryFn, x: float) -> NarrowCoefficients:
    """Evaluate a1..a4 and the lambda coefficients at x.

    a1 = (f1+f2)/2, a2 = -f1 f2 / 2,
    a3 = a1''(f1^2 + f1 f2 + f2^2)/6 + a2''(f1+f2)/2,
    a4 = f1^3 a1''/6 + a2'' f1^2/2 - a3 f1,
    lambda1 = (f2-f1)^2/4,
    lambda2_k = (a1' f_k + a2')^2 + (f_k - a1)(f_k^2 a1'' + 2 f_k a2'' - 2 a3).
    """
    P = _narrow_polynomials(f1.coefficients, f2.coefficients)
    return NarrowCoefficients(
        a1=float(P["a1"](x)), a2=float(P["a2"](x)),
        a3=float(P["a3"](x)), a4=float(P["a4"](x)),
        lambda1=float(P["lambda1"](x)),
        lambda2_lower=float(P["lambda2_lower"](x)),
        lambda2_upper=float(P["lambda2_upper"](x)),
    )


def narrow_predicted_gradient_sq(f1: PolyBoundaryFn, f2: PolyBoundaryFn,
                                 eps: float, x: float,
                                 side: Literal["lower", "upper"]) -> float:
    """Two-term prediction eps^2 lambda1 + eps^4 lambda2 for |grad u|^2 at
    the boundary point (x, eps*f_side(x))."""
    c = narrow_coefficients(f1, f2, x)
    lam2 = c.lambda2_lower if side == "lower" else c.lambda2_upper
    return eps**2 * c.lambda1 + eps**4 * lam2


def gap_leading_term(f1: PolyBoundaryFn, f2: PolyBoundaryFn,
                     a: float, b: float) -> GapLeadingTerm:
    """Locate the unique thickness maximizer z0 of f2 - f1 on (a, b) and
    evaluate the eps^4 gap coefficient

        (1/12) (f1'' + f2'')(z0) (f2 - f1)(z0)^3,

    equivalently (1/6) a1''(z0) (f2-f1)(z0)^3 since a1'' = (f1''+f2'')/2.
    For a symmetric pair f1 = -f2 the coefficient vanishes identically:
    both boundary gradients agree by symmetry.
    """
    P = _narrow_polynomials(f1.coefficients, f2.coefficients)
    gap = P["gap"]
    dgap = gap.deriv()
    xs = np.linspace(a, b, 2001)[1:-1]
    dvals = dgap(xs)
    signs = np.sign(dvals)
    flips = np.nonzero(signs[:-1] * signs[1:] < 0)[0]
    crossings = [(xs[k], xs[k + 1]) for k in flips
                 if dvals[k] > 0 > dvals[k + 1]]  # maxima only
    if len(crossings) != 1 or len(flips) != 1:
        raise ValueError(
            "f2 - f1 must have a unique interior maximizer; found "
            f"{len(flips)} derivative sign changes. For a plateau of "
            "maximizers the fail-point set is an interval and this "
            "coefficient is not defined."
        )
    lo, hi = crossings[0]
    z0 = brentq(dgap, lo, hi, xtol=_BRENT_TOL)
    coeff = (2.0 * P["a1dd"](z0)) * gap(z0) ** 3 / 12.0
    return GapLeadingTerm(z0=float(z0), coefficient=float(coeff))


# ---------------------------------------------------------------------------
# auxiliary polynomials for the perturbed-triangle analysis


@dataclass(frozen=True)
class BarrierEval:
    value: float
    laplacian_residual: float
    g_xy_origin: float


# bivariate coefficient table {(i, j): c} for c * x^i y^j
_BARRIER_TERMS = {
    (1, 1): 5.0 / 16.0,
    (1, 2): -3.0 / 4.0,
    (1, 3): 9.0 / 16.0,
    (3, 1): -9.0 / 16.0,
    (1, 4): -1.0 / 8.0,
    (4, 1): -3.0 * SQRT3 / 8.0,
}


def _poly2d_eval(terms: dict, x, y):
    total = 0.0
    for (i, j), c in terms.items():
        total = total + c * x**i * y**j
    return total


def _poly2d_deriv(terms: dict, dx: int, dy: int) -> dict:
    out = {}
    for (i, j), c in terms.items():
        if i < dx or j < dy:
            continue
        for _ in range(dx):
            c *= i
            i -= 1
        for _ in range(dy):
            c *= j
            j -= 1
        out[(i, j)] = out.get((i, j), 0.0) + c
    return out


def barrier_g(x, y) -> BarrierEval:
    """Comparison barrier g = (1/8) x y (3/2 (1-y)^2 - 9/2 x^2 + (1-y)^3 - 3 sqrt(3) x^3).

    Returns its value, the residual of -Lap(g) against
    3x/2 + 3xy^2/2 + 9 sqrt(3) x^2 y / 2 (exact polynomial differentiation,
    so the residual is zero to rounding), and the mixed derivative
    g_xy(0,0) = 5/16.
    """
    x = float(x)
    y = float(y)
    value = _poly2d_eval(_BARRIER_TERMS, x, y)
    gxx = _poly2d_eval(_poly2d_deriv(_BARRIER_TERMS, 2, 0), x, y)
    gyy = _poly2d_eval(_poly2d_deriv(_BARRIER_TERMS, 0, 2), x, y)
    rhs = 1.5 * x + 1.5 * x * y**2 + 4.5 * SQRT3 * x**2 * y
    gxy0 = _poly2d_deriv(_BARRIER_TERMS, 1, 1).get((0, 0), 0.0)
    return BarrierEval(value=value,
                       laplacian_residual=(-(gxx + gyy)) - rhs,
                       g_xy_origin=gxy0)


def barrier_g_value(x, y):
    """Vectorized barrier value only (for whole-mesh comparisons)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return _poly2d_eval(_BARRIER_TERMS, x, y)


def v1_rhs(family: Literal["stretch", "tilt"], x, y):
    """Right-hand side of the first-order shape-perturbation problem on the
    equilateral triangle: (3 sqrt(3)/2) y - (3/2) x for the base-stretching
    family, 3x for the apex-tilting family."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if family == "stretch":
        return 1.5 * SQRT3 * y - 1.5 * x
    if family == "tilt":
        return 3.0 * x + 0.0 * y
    raise ValueError(f"unknown family {family!r}")
