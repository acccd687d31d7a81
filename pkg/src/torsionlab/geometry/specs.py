"""Parametric domain families and geometric landmarks.

Five domain families are supported: triangles, narrow graph domains
(the region between two scaled polynomial graphs), thin rectangles,
ellipses, and non-concentric annuli.  Each family is a small frozen
dataclass that validates itself on construction and serializes to a
tagged JSON dict.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from numpy.polynomial import polynomial as npoly

Point = tuple[float, float]

_ENDPOINT_TOL = 1e-12
_CONVEXITY_TOL = 1e-10
_GRID_N = 1000  # validation grid for narrow-domain inequality checks


class DomainError(ValueError):
    """Raised when a domain specification violates its invariants."""


@dataclass(frozen=True)
class PolyBoundaryFn:
    """Polynomial boundary profile, coefficients low-to-high, degree <= 8.

    Evaluation and derivatives are exact coefficient arithmetic; no finite
    differences are ever involved, so fourth derivatives are as trustworthy
    as the coefficients themselves.
    """

    coefficients: tuple[float, ...]

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        if len(coeffs) == 0:
            raise DomainError("polynomial needs at least one coefficient")
        if len(coeffs) > 9:
            raise DomainError(
                f"polynomial degree {len(coeffs) - 1} exceeds the supported degree 8"
            )
        object.__setattr__(self, "coefficients", coeffs)

    def __call__(self, x):
        return npoly.polyval(x, self.coefficients)

    def deriv(self, order: int = 1) -> "PolyBoundaryFn":
        c = npoly.polyder(self.coefficients, m=order)
        if len(c) == 0:
            c = np.zeros(1)
        return PolyBoundaryFn(tuple(c))

    def eval_deriv(self, x, order: int):
        """Value of the order-th derivative at x (order 0 = the function)."""
        if order == 0:
            return self(x)
        return self.deriv(order)(x)


def poly(*coefficients: float) -> PolyBoundaryFn:
    """Shorthand constructor: poly(c0, c1, ...) = c0 + c1*x + ..."""
    return PolyBoundaryFn(tuple(coefficients))


@dataclass(frozen=True)
class Triangle:
    """Open triangle with vertices A, B, C.  Sides: 0=AB, 1=BC, 2=CA."""

    A: Point
    B: Point
    C: Point

    def __post_init__(self):
        a, b, c = (np.asarray(p, dtype=float) for p in (self.A, self.B, self.C))
        object.__setattr__(self, "A", (float(a[0]), float(a[1])))
        object.__setattr__(self, "B", (float(b[0]), float(b[1])))
        object.__setattr__(self, "C", (float(c[0]), float(c[1])))
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        scale = max(np.linalg.norm(b - a), np.linalg.norm(c - a))
        if abs(cross) <= 1e-14 * scale * scale:
            raise DomainError(f"collinear triangle vertices: {self.A}, {self.B}, {self.C}")

    @property
    def vertices(self) -> np.ndarray:
        return np.array([self.A, self.B, self.C], dtype=float)

    def side_lengths(self) -> np.ndarray:
        v = self.vertices
        return np.array([
            np.linalg.norm(v[1] - v[0]),  # AB
            np.linalg.norm(v[2] - v[1]),  # BC
            np.linalg.norm(v[0] - v[2]),  # CA
        ])

    def area(self) -> float:
        v = self.vertices
        return 0.5 * abs(
            (v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1])
            - (v[1, 1] - v[0, 1]) * (v[2, 0] - v[0, 0])
        )

    def diameter(self) -> float:
        return float(self.side_lengths().max())


@dataclass(frozen=True)
class Narrow:
    """Region between y = eps*f1(x) and y = eps*f2(x) over (a, b).

    f1 must be convex, f2 concave, both vanishing at the interval
    endpoints, with f2 > f1 strictly inside.  The checks run on a
    1000-point grid.
    """

    a: float
    b: float
    f1: PolyBoundaryFn
    f2: PolyBoundaryFn
    eps: float

    def __post_init__(self):
        if not self.b > self.a:
            raise DomainError("narrow domain needs b > a")
        if not self.eps > 0:
            raise DomainError("narrow domain needs eps > 0")
        for name, f in (("f1", self.f1), ("f2", self.f2)):
            for x_end in (self.a, self.b):
                if abs(f(x_end)) > _ENDPOINT_TOL:
                    raise DomainError(
                        f"{name}({x_end}) = {f(x_end):.3e}, boundary functions must vanish at the endpoints"
                    )
        xs = np.linspace(self.a, self.b, _GRID_N)[1:-1]
        gap = self.f2(xs) - self.f1(xs)
        if not np.all(gap > 0):
            raise DomainError("f2 > f1 must hold on the open interval (a, b)")
        if np.min(self.f1.eval_deriv(xs, 2)) < -_CONVEXITY_TOL:
            raise DomainError("f1 must be convex (f1'' >= 0)")
        if np.max(self.f2.eval_deriv(xs, 2)) > _CONVEXITY_TOL:
            raise DomainError("f2 must be concave (f2'' <= 0)")

    def max_gap(self) -> float:
        xs = np.linspace(self.a, self.b, _GRID_N)
        return float(np.max(self.f2(xs) - self.f1(xs)))

    def area(self) -> float:
        # eps * integral of (f2 - f1): exact for polynomials
        diff = npoly.polysub(self.f2.coefficients, self.f1.coefficients)
        anti = npoly.polyint(diff)
        return float(self.eps * (npoly.polyval(self.b, anti) - npoly.polyval(self.a, anti)))

    def diameter(self) -> float:
        return self.b - self.a


@dataclass(frozen=True)
class Rectangle:
    """Thin rectangle [0, 1] x [-eps, eps] with eps in (0, 1)."""

    eps: float

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise DomainError("rectangle needs eps in (0, 1)")

    def area(self) -> float:
        return 2.0 * self.eps

    def diameter(self) -> float:
        return math.hypot(1.0, 2.0 * self.eps)


@dataclass(frozen=True)
class Ellipse:
    """Ellipse x^2/a^2 + y^2/b^2 < 1 centered at the origin."""

    a_semi: float
    b_semi: float

    def __post_init__(self):
        if not (self.a_semi > 0 and self.b_semi > 0):
            raise DomainError("ellipse semi-axes must be positive")

    def area(self) -> float:
        return math.pi * self.a_semi * self.b_semi

    def diameter(self) -> float:
        return 2.0 * max(self.a_semi, self.b_semi)


@dataclass(frozen=True)
class Annulus:
    """Outer circle |x| < rho1 minus inner disk |x - (offset, 0)| <= rho2."""

    rho1: float
    rho2: float
    offset: float

    def __post_init__(self):
        if not (self.rho1 > 0 and self.rho2 > 0):
            raise DomainError("annulus radii must be positive")
        if not self.rho2 + abs(self.offset) < self.rho1:
            raise DomainError(
                f"inner disk must be strictly contained: rho2 + |offset| = "
                f"{self.rho2 + abs(self.offset)} >= rho1 = {self.rho1}"
            )

    def area(self) -> float:
        return math.pi * (self.rho1**2 - self.rho2**2)

    def diameter(self) -> float:
        return 2.0 * self.rho1


DomainSpec = Union[Triangle, Narrow, Rectangle, Ellipse, Annulus]


def spec_to_dict(spec: DomainSpec) -> dict:
    """Tagged JSON-ready dict for a domain spec."""
    if isinstance(spec, Triangle):
        return {"type": "triangle", "A": list(spec.A), "B": list(spec.B), "C": list(spec.C)}
    if isinstance(spec, Narrow):
        return {
            "type": "narrow",
            "a": spec.a,
            "b": spec.b,
            "f1": list(spec.f1.coefficients),
            "f2": list(spec.f2.coefficients),
            "eps": spec.eps,
        }
    if isinstance(spec, Rectangle):
        return {"type": "rectangle", "eps": spec.eps}
    if isinstance(spec, Ellipse):
        return {"type": "ellipse", "a_semi": spec.a_semi, "b_semi": spec.b_semi}
    if isinstance(spec, Annulus):
        return {"type": "annulus", "rho1": spec.rho1, "rho2": spec.rho2, "offset": spec.offset}
    raise TypeError(f"not a domain spec: {spec!r}")


def spec_from_dict(d: dict) -> DomainSpec:
    kind = d.get("type")
    if kind == "triangle":
        return Triangle(tuple(d["A"]), tuple(d["B"]), tuple(d["C"]))
    if kind == "narrow":
        return Narrow(d["a"], d["b"], PolyBoundaryFn(tuple(d["f1"])),
                      PolyBoundaryFn(tuple(d["f2"])), d["eps"])
    if kind == "rectangle":
        return Rectangle(d["eps"])
    if kind == "ellipse":
        return Ellipse(d["a_semi"], d["b_semi"])
    if kind == "annulus":
        return Annulus(d["rho1"], d["rho2"], d["offset"])
    raise DomainError(f"unknown domain type: {kind!r}")


def spec_to_json(spec: DomainSpec) -> str:
    return json.dumps(spec_to_dict(spec), sort_keys=True)


def spec_from_json(text: str) -> DomainSpec:
    return spec_from_dict(json.loads(text))


@dataclass(frozen=True)
class TriangleLandmarks:
    """Longest-side landmarks: midpoint M and foot of the altitude F.

    Ties on the longest side are broken by the lowest side index; this
    only matters for isosceles/equilateral triangles, where several sides
    carry a maximal-gradient point.
    """

    longest_side_id: int
    midpoint: Point
    altitude_foot: Point
    opposite_vertex: Point
    side_start: Point = field(repr=False, default=(0.0, 0.0))
    side_end: Point = field(repr=False, default=(0.0, 0.0))


def triangle_landmarks(A: Point, B: Point, C: Point) -> TriangleLandmarks:
    """Midpoint and altitude foot on the longest side of triangle ABC."""
    tri = Triangle(A, B, C)  # validates non-collinearity
    v = tri.vertices
    lengths = tri.side_lengths()
    side = int(np.argmax(np.round(lengths, 14)))  # lowest index wins exact ties
    # side k joins v[k] -> v[(k+1)%3]; opposite vertex is v[(k+2)%3]
    p, q = v[side], v[(side + 1) % 3]
    opp = v[(side + 2) % 3]
    mid = 0.5 * (p + q)
    t = np.dot(opp - p, q - p) / np.dot(q - p, q - p)
    foot = p + t * (q - p)
    return TriangleLandmarks(
        longest_side_id=side,
        midpoint=(float(mid[0]), float(mid[1])),
        altitude_foot=(float(foot[0]), float(foot[1])),
        opposite_vertex=(float(opp[0]), float(opp[1])),
        side_start=(float(p[0]), float(p[1])),
        side_end=(float(q[0]), float(q[1])),
    )


def curvature_graph(f: PolyBoundaryFn, x: float, eps: float, orientation: int) -> float:
    """Signed curvature of the boundary graph y = eps*f(x).

    orientation = +1 when the domain lies above the graph (a lower
    boundary), -1 when it lies below (an upper boundary).  The sign
    convention makes the curvature positive when the boundary bends
    toward the domain interior, so a convex lower profile and a concave
    upper profile both report positive curvature.
    """
    if orientation not in (+1, -1):
        raise ValueError("orientation must be +1 (lower boundary) or -1 (upper)")
    fp = eps * f.eval_deriv(x, 1)
    fpp = eps * f.eval_deriv(x, 2)
    return float(orientation * fpp / (1.0 + fp * fp) ** 1.5)
