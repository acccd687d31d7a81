"""Boundary-gradient profiling, fail-point location, and nodal-line tracing.

All consumers of a solved problem are pure functions of the solution; they
never mutate the mesh or nodal values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.optimize import minimize_scalar

from .fem import TorsionSolution, boundary_flux, element_corner_gradients
from .geometry.meshing import EDGE_CORNERS, Mesh
from .geometry.specs import TriangleLandmarks


class ProfileError(Exception):
    pass


# ---------------------------------------------------------------------------
# boundary profiles


@dataclass(frozen=True)
class ProfileSide:
    """Sampled boundary-gradient curve along one side, sorted by arc length."""

    side_id: int
    node_ids: np.ndarray
    s: np.ndarray
    points: np.ndarray
    dudn: np.ndarray
    grad_sq: np.ndarray
    length: float
    closed: bool

    def _segment(self, sq: float) -> tuple[np.ndarray, np.ndarray]:
        """Node triple (corner, mid, corner) bracketing arc position sq."""
        s, n = self.s, len(self.s)
        if self.closed:
            sq = sq % self.length
            corners = s[0::2]
            k = int(np.searchsorted(corners, sq, side="right")) - 1
            k = max(0, min(k, len(corners) - 1))
            i0 = 2 * k
            idx = [i0, i0 + 1, (i0 + 2) % n]
            ss = np.array([s[i0], s[i0 + 1],
                           s[i0 + 2] if i0 + 2 < n else self.length])
        else:
            corners = s[0::2]
            k = int(np.searchsorted(corners, sq, side="right")) - 1
            k = max(0, min(k, len(corners) - 2))
            i0 = 2 * k
            idx = [i0, i0 + 1, i0 + 2]
            ss = s[i0:i0 + 3]
        return np.asarray(idx), ss

    def interp_dudn(self, sq: float) -> float:
        idx, ss = self._segment(sq)
        vals = self.dudn[idx]
        if self.closed:
            sq = sq % self.length
        # quadratic Lagrange on the (possibly non-uniform) triple
        l0 = (sq - ss[1]) * (sq - ss[2]) / ((ss[0] - ss[1]) * (ss[0] - ss[2]))
        l1 = (sq - ss[0]) * (sq - ss[2]) / ((ss[1] - ss[0]) * (ss[1] - ss[2]))
        l2 = (sq - ss[0]) * (sq - ss[1]) / ((ss[2] - ss[0]) * (ss[2] - ss[1]))
        return float(vals[0] * l0 + vals[1] * l1 + vals[2] * l2)

    def interp_grad_sq(self, sq: float) -> float:
        return self.interp_dudn(sq) ** 2

    def s_of_x(self, x: float) -> float:
        """Arc position for a given x-coordinate on a graph side (x strictly
        monotone along the chain)."""
        xs = self.points[:, 0]
        if not (np.all(np.diff(xs) > 0) or np.all(np.diff(xs) < 0)):
            raise ProfileError("side is not a graph over x")
        if xs[0] > xs[-1]:
            return float(np.interp(x, xs[::-1], self.s[::-1]))
        return float(np.interp(x, xs, self.s))


@dataclass(frozen=True)
class BoundaryProfile:
    sides: dict[int, ProfileSide]
    mesh_h: float


def boundary_profile(solution: TorsionSolution) -> BoundaryProfile:
    """Per-side samples of (s, point, du/dn, |grad u|^2) from the consistent
    flux, including the quadratic mid-edge nodes."""
    mesh = solution.mesh
    flux = boundary_flux(solution)
    lut = flux.lookup()
    sides = {}
    for side_id, chain in mesh.sides.items():
        vals = np.array([lut[int(n)] for n in chain.node_ids])
        sides[side_id] = ProfileSide(
            side_id=side_id,
            node_ids=chain.node_ids,
            s=chain.s,
            points=mesh.nodes[chain.node_ids],
            dudn=vals,
            grad_sq=vals**2,
            length=chain.length,
            closed=chain.closed,
        )
    return BoundaryProfile(sides=sides, mesh_h=mesh.h)


# ---------------------------------------------------------------------------
# critical points on the boundary


@dataclass(frozen=True)
class CriticalPoint:
    side_id: int
    s: float
    point: tuple[float, float]
    grad_sq: float
    second_derivative_sign: Literal["max", "min", "flat"]
    curvature: float
    noise_floor: float


def _point_on_side(side: ProfileSide, sq: float) -> tuple[float, float]:
    if side.closed:
        sq = sq % side.length
    x = np.interp(sq, side.s, side.points[:, 0])
    y = np.interp(sq, side.s, side.points[:, 1])
    return float(x), float(y)


def locate_critical_points(profile: BoundaryProfile, side_id: int,
                           guard: int = 2, noise_factor: float = 10.0) -> list[CriticalPoint]:
    """Sign-change scan of the discrete tangential derivative of |grad u|^2,
    refined by bounded parabolic/Brent minimization of the interpolated
    profile.  A guard band of `guard` samples near open-chain endpoints is
    excluded: the gradient vanishes at corners and creates spurious flat
    stretches there.  Monotone profiles yield an empty list.
    """
    side = profile.sides[side_id]
    g2, s = side.grad_sq, side.s
    n = len(g2)
    if n < 8:
        raise ProfileError(f"side {side_id} has {n} samples; need at least 8")

    delta = float(np.median(np.diff(s)))
    d4 = np.abs(np.diff(g2, n=4)) if n > 4 else np.array([0.0])
    noise = float(np.median(d4)) if len(d4) else 0.0
    thr = noise_factor * noise / (4.0 * delta**2)

    # slope d[k] = g2[k+1] - g2[k] (cyclic for closed chains); a bracket is a
    # sample m where the slope changes sign across it
    if side.closed:
        d = np.roll(g2, -1) - g2
        centers = range(n)
    else:
        d = np.diff(g2)
        centers = range(guard + 1, n - 1 - guard)

    found: list[CriticalPoint] = []
    seen: list[float] = []
    for m in centers:
        d0 = d[(m - 1) % n] if side.closed else d[m - 1]
        d1 = d[m % n] if side.closed else d[m]
        if d0 == 0.0 or d1 == 0.0 or d0 * d1 > 0:
            continue
        s_lo = s[(m - 1) % n] if side.closed else s[m - 1]
        s_hi = s[(m + 1) % n] if side.closed else s[m + 1]
        if side.closed and s_hi <= s_lo:
            s_hi += side.length
        if side.closed and s_lo > s[m % n]:
            s_lo -= side.length
        sign = 1.0 if d0 > 0 else -1.0  # rising then falling = max
        res = minimize_scalar(lambda q: -sign * side.interp_grad_sq(q),
                              bounds=(s_lo, s_hi), method="bounded",
                              options={"xatol": 1e-12 * max(1.0, side.length)})
        s_star = float(res.x)
        if any(abs(s_star - q) < 0.5 * delta for q in seen):
            continue
        seen.append(s_star)
        gm = side.interp_grad_sq(s_star)
        curv = (side.interp_grad_sq(s_star - delta) - 2 * gm
                + side.interp_grad_sq(s_star + delta)) / delta**2
        if curv < -thr:
            flag = "max"
        elif curv > thr:
            flag = "min"
        else:
            flag = "flat"
        found.append(CriticalPoint(
            side_id=side_id, s=s_star, point=_point_on_side(side, s_star),
            grad_sq=float(gm), second_derivative_sign=flag,
            curvature=float(curv), noise_floor=float(thr),
        ))
    found.sort(key=lambda cp: cp.s)
    return found


# ---------------------------------------------------------------------------
# fail points


@dataclass(frozen=True)
class LandmarksCheck:
    is_on_longest_side: bool
    between_foot_and_midpoint: bool
    s_fail: float
    s_foot: float
    s_midpoint: float
    dist_to_foot: float
    dist_to_midpoint: float
    slack: float


@dataclass(frozen=True)
class FailPointReport:
    global_point: CriticalPoint
    per_side: list[CriticalPoint]
    landmarks_check: LandmarksCheck | None = None


def _chain_s_of_point(side: ProfileSide, p: np.ndarray) -> float:
    """Arc position of a point projected onto a straight side chain."""
    start = side.points[0]
    end = side.points[-1]
    t = end - start
    t = t / np.linalg.norm(t)
    return float(np.dot(np.asarray(p) - start, t))


def fail_point(solution: TorsionSolution,
               landmarks: TriangleLandmarks | None = None,
               slack_factor: float = 1.5) -> FailPointReport:
    """Global boundary maximum of |grad u|^2 with per-side diagnostics.

    The global point is the best per-side critical point; when no side
    yields one (flat profiles) the raw sample maximum is used.  Equal
    per-side maxima are tied to the lowest side id.
    """
    profile = boundary_profile(solution)
    per_side: list[CriticalPoint] = []
    for side_id in sorted(profile.sides):
        per_side.extend(locate_critical_points(profile, side_id))

    candidates = [cp for cp in per_side if cp.second_derivative_sign == "max"]
    if not candidates:
        candidates = per_side[:]
    if candidates:
        best_val = max(cp.grad_sq for cp in candidates)
        tol = 1e-8 * max(1e-300, best_val)  # symmetric domains tie to solver noise
        global_point = min((cp for cp in candidates if cp.grad_sq >= best_val - tol),
                           key=lambda cp: cp.side_id)
    else:
        # completely flat boundary (e.g. a disk): report the raw maximum
        best = None
        for side_id in sorted(profile.sides):
            side = profile.sides[side_id]
            k = int(np.argmax(side.grad_sq))
            if best is None or side.grad_sq[k] > best.grad_sq:
                best = CriticalPoint(side_id=side_id, s=float(side.s[k]),
                                     point=tuple(map(float, side.points[k])),
                                     grad_sq=float(side.grad_sq[k]),
                                     second_derivative_sign="flat",
                                     curvature=0.0, noise_floor=0.0)
        global_point = best

    check = None
    if landmarks is not None:
        side = profile.sides[landmarks.longest_side_id]
        s_f = _chain_s_of_point(side, np.array(landmarks.altitude_foot))
        s_m = _chain_s_of_point(side, np.array(landmarks.midpoint))
        slack = slack_factor * profile.mesh_h
        on_side = global_point.side_id == landmarks.longest_side_id
        lo, hi = min(s_f, s_m) - slack, max(s_f, s_m) + slack
        p = np.array(global_point.point)
        check = LandmarksCheck(
            is_on_longest_side=on_side,
            between_foot_and_midpoint=bool(on_side and lo <= global_point.s <= hi),
            s_fail=global_point.s, s_foot=s_f, s_midpoint=s_m,
            dist_to_foot=float(np.linalg.norm(p - np.array(landmarks.altitude_foot))),
            dist_to_midpoint=float(np.linalg.norm(p - np.array(landmarks.midpoint))),
            slack=slack,
        )
    return FailPointReport(global_point=global_point, per_side=per_side,
                           landmarks_check=check)


# ---------------------------------------------------------------------------
# nodal lines of directional derivatives


@dataclass(frozen=True)
class PathEnd:
    kind: Literal["side", "vertex", "interior"]
    point: tuple[float, float]
    side_id: int | None = None
    s: float | None = None
    corner_node: int | None = None


@dataclass(frozen=True)
class NodalPath:
    points: np.ndarray
    start: PathEnd
    end: PathEnd

    @property
    def length(self) -> float:
        return float(np.sum(np.hypot(*np.diff(self.points, axis=0).T)))


def _node_side_tags(mesh: Mesh) -> dict[int, list[tuple[int, float]]]:
    tags: dict[int, list[tuple[int, float]]] = {}
    for side_id, chain in mesh.sides.items():
        for n, s in zip(chain.node_ids, chain.s):
            tags.setdefault(int(n), []).append((side_id, float(s)))
    return tags


def _classify_end(mesh: Mesh, edge_nodes: tuple[int, int], point: np.ndarray,
                  tags, corner_tol: float) -> PathEnd:
    for cn in mesh.corner_nodes:
        if np.linalg.norm(point - mesh.nodes[cn]) <= corner_tol:
            return PathEnd(kind="vertex", point=tuple(map(float, point)),
                           corner_node=int(cn))
    a, b = edge_nodes
    ta = tags.get(a, [])
    tb = tags.get(b, [])
    shared = sorted(set(sid for sid, _ in ta) & set(sid for sid, _ in tb))
    if not shared:
        return PathEnd(kind="interior", point=tuple(map(float, point)))
    side_id = shared[0]
    sa = next(s for sid, s in ta if sid == side_id)
    sb = next(s for sid, s in tb if sid == side_id)
    chain = mesh.sides[side_id]
    if chain.closed and abs(sa - sb) > 0.5 * chain.length:
        if sa < sb:
            sa += chain.length
        else:
            sb += chain.length
    pa, pb = mesh.nodes[a], mesh.nodes[b]
    denom = np.linalg.norm(pb - pa)
    t = float(np.linalg.norm(point - pa) / denom) if denom > 0 else 0.0
    s = (1 - t) * sa + t * sb
    if chain.closed:
        s = s % chain.length
    return PathEnd(kind="side", point=tuple(map(float, point)),
                   side_id=side_id, s=float(s))


def trace_nodal_line(solution: TorsionSolution, direction,
                     min_length_factor: float = 3.0) -> list[NodalPath]:
    """Zero level set of (direction . grad u), chained into polylines.

    The quadratic gradient is evaluated at each element's corners and
    averaged per mesh vertex, giving a continuous piecewise-linear field on
    the vertex triangulation; marching then yields one segment per cut
    element with exactly matching endpoints.  Fragments shorter than
    min_length_factor * h are discarded as sub-resolution noise.
    """
    direction = np.asarray(direction, dtype=float)
    nrm = np.linalg.norm(direction)
    if abs(nrm - 1.0) > 1e-8:
        raise ValueError("direction must be a unit vector")
    mesh = solution.mesh
    corner_grads = element_corner_gradients(solution)      # (E,3,2)
    d_elem = corner_grads @ direction                      # (E,3)

    n_nodes = mesh.num_nodes
    sums = np.zeros(n_nodes)
    counts = np.zeros(n_nodes)
    verts = mesh.elements[:, :3]
    np.add.at(sums, verts.ravel(), d_elem.ravel())
    np.add.at(counts, verts.ravel(), 1.0)
    with np.errstate(invalid="ignore"):
        dvert = np.where(counts > 0, sums / np.maximum(counts, 1.0), 0.0)

    v = dvert[verts]                                       # (E,3)
    pos = v > 0.0
    cut = np.nonzero((pos.sum(axis=1) % 3) != 0)[0]

    crossing: dict[tuple[int, int], np.ndarray] = {}
    elem_edges: dict[int, list[tuple[int, int]]] = {}
    edge_owners: dict[tuple[int, int], list[int]] = {}
    for e in cut:
        tri = verts[e]
        vals = dvert[tri]
        edges_here = []
        for i, j in ((0, 1), (1, 2), (2, 0)):
            if pos[e, i] == pos[e, j]:
                continue
            a, b = int(tri[i]), int(tri[j])
            key = (a, b) if a < b else (b, a)
            if key not in crossing:
                va, vb = dvert[key[0]], dvert[key[1]]
                t = va / (va - vb)
                crossing[key] = (1 - t) * mesh.nodes[key[0]] + t * mesh.nodes[key[1]]
            edges_here.append(key)
            edge_owners.setdefault(key, []).append(int(e))
        if len(edges_here) == 2:
            elem_edges[int(e)] = edges_here

    tags = _node_side_tags(mesh)
    corner_tol = 1.5 * mesh.h
    termini = sorted(k for k, owners in edge_owners.items()
                     if len([e for e in owners if e in elem_edges]) == 1
                     and k in {ed for eds in elem_edges.values() for ed in eds})

    paths: list[NodalPath] = []
    visited: set[int] = set()

    def walk(start_edge):
        pts = [crossing[start_edge]]
        edge_seq = [start_edge]
        cur_edge = start_edge
        cur_elem = next(e for e in edge_owners[cur_edge]
                        if e in elem_edges and e not in visited)
        while True:
            visited.add(cur_elem)
            e1, e2 = elem_edges[cur_elem]
            nxt = e2 if e1 == cur_edge else e1
            pts.append(crossing[nxt])
            edge_seq.append(nxt)
            cur_edge = nxt
            nxt_elems = [e for e in edge_owners[cur_edge]
                         if e in elem_edges and e not in visited]
            if not nxt_elems:
                break
            cur_elem = nxt_elems[0]
        return np.array(pts), edge_seq

    for start_edge in termini:
        owners = [e for e in edge_owners[start_edge] if e in elem_edges and e not in visited]
        if not owners:
            continue
        pts, edge_seq = walk(start_edge)
        start = _classify_end(mesh, edge_seq[0], pts[0], tags, corner_tol)
        end = _classify_end(mesh, edge_seq[-1], pts[-1], tags, corner_tol)
        if end.kind == "side" and start.kind != "side":
            pts = pts[::-1]
            start, end = end, start
        path = NodalPath(points=pts, start=start, end=end)
        if path.length >= min_length_factor * mesh.h:
            paths.append(path)
    paths.sort(key=lambda p: -p.length)
    return paths


def nodal_tangent_angle_at_boundary(path: NodalPath, mesh: Mesh,
                                    end: Literal["auto", "start", "end"] = "auto") -> float:
    """Angle (degrees) between the least-squares tangent of the last five
    polyline points and the inward normal of the side the path meets;
    0 means perpendicular contact."""
    if len(path.points) < 5:
        raise ValueError(f"path has {len(path.points)} points; need at least 5")
    if end == "auto":
        which = "start" if path.start.kind == "side" else "end"
    else:
        which = end
    terminus = path.start if which == "start" else path.end
    if terminus.kind != "side":
        raise ValueError("selected path end does not touch a side")
    pts = path.points[:5] if which == "start" else path.points[-5:]

    centered = pts - pts.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    tangent = vt[0]

    chain = mesh.sides[terminus.side_id]
    k = int(np.argmin(np.abs(chain.s - terminus.s)))
    k0, k1 = max(0, k - 1), min(len(chain.s) - 1, k + 1)
    side_tan = mesh.nodes[chain.node_ids[k1]] - mesh.nodes[chain.node_ids[k0]]
    side_tan = side_tan / np.linalg.norm(side_tan)
    normal = np.array([-side_tan[1], side_tan[0]])
    cosang = abs(float(np.dot(tangent, normal)))
    return math.degrees(math.acos(min(1.0, cosang)))


# ---------------------------------------------------------------------------
# mixed-derivative fit at a right-angle corner


@dataclass(frozen=True)
class MixedDerivativeFit:
    c0: float             # coefficient of x*y, the mixed derivative at O
    c1: float             # coefficient of x*y^2 (sanity target -3/4 for w2)
    coefficients: tuple[float, ...]
    n_nodes: int
    r_fit: float


def mixed_derivative_origin(solution: TorsionSolution, r_fit: float = 0.15,
                            min_nodes: int = 30) -> MixedDerivativeFit:
    """Least-squares fit of nodal values near the origin to
    x*y*(c0 + c1*y + c2*x + c3*y^2 + c4*x*y + c5*x^2), returning c0 (the
    mixed derivative at O for solutions vanishing on both axes) and c1.
    """
    nodes = solution.mesh.nodes
    r = np.hypot(nodes[:, 0], nodes[:, 1])
    sel = r < r_fit
    n_sel = int(sel.sum())
    if n_sel < min_nodes:
        raise ValueError(f"only {n_sel} nodes inside r < {r_fit}; need {min_nodes}")
    x, y = nodes[sel, 0], nodes[sel, 1]
    xy = x * y
    basis = np.column_stack([xy, xy * y, xy * x, xy * y**2, xy * x * y, xy * x**2])
    coef, *_ = np.linalg.lstsq(basis, solution.nodal_values[sel], rcond=None)
    return MixedDerivativeFit(c0=float(coef[0]), c1=float(coef[1]),
                              coefficients=tuple(float(c) for c in coef),
                              n_nodes=n_sel, r_fit=r_fit)


# ---------------------------------------------------------------------------
# exports


def profile_to_csv(profile: BoundaryProfile) -> str:
    lines = ["side,s,x,y,dudn,gradsq"]
    for side_id in sorted(profile.sides):
        side = profile.sides[side_id]
        for s, (x, y), g, g2 in zip(side.s, side.points, side.dudn, side.grad_sq):
            lines.append(f"{side_id},{s!r},{x!r},{y!r},{g!r},{g2!r}")
    return "\n".join(lines) + "\n"


def paths_to_csv(paths: list[NodalPath]) -> str:
    lines = ["path_id,k,x,y"]
    for pid, path in enumerate(paths):
        for k, (x, y) in enumerate(path.points):
            lines.append(f"{pid},{k},{x!r},{y!r}")
    return "\n".join(lines) + "\n"
