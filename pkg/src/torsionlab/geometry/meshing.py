"""Conforming quadratic triangular meshes for the five domain families.

Construction strategy per family:

* Triangle: uniform 4-way refinement of the macro triangle (barycentric
  lattice), all elements straight.
* Narrow graph domain: mapped tensor grid, x-strips times vertical fibers
  between eps*f1 and eps*f2.  The end columns collapse to the domain tips,
  so the first/last strip degenerates into a fan of triangles.
* Rectangle: plain tensor grid.
* Ellipse / annulus: structured polar / transfinite grids with every fine
  grid node placed on the exact parametric curve, so edge-midpoint nodes
  of boundary edges sit on the true circle or ellipse.

Quad cells are split into two triangles with a "union jack" diagonal
pattern chosen so that mirror-symmetric domains get mirror-symmetric
meshes.  All fine grid points become P2 nodes: cell corners are element
vertices and odd-index grid points are the edge midside nodes, which keeps
neighbouring elements conforming automatically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from ..elements import EDGE_CORNERS, TRI_DN, jacobians
from .specs import (
    Annulus,
    DomainSpec,
    DomainError,
    Ellipse,
    Narrow,
    Rectangle,
    Triangle,
)


class MeshError(Exception):
    """Mesh construction failure."""


class UnderResolvedError(MeshError):
    """Requested h cannot resolve the narrow gap (fewer than 4 fibers)."""


class BoundaryEdge(NamedTuple):
    elem: int
    local_edge: int
    side_id: int
    s0: float
    s1: float


@dataclass(frozen=True)
class SideChain:
    """Ordered boundary nodes of one side, with arc-length coordinates."""

    side_id: int
    node_ids: np.ndarray
    s: np.ndarray
    length: float
    closed: bool


@dataclass(frozen=True)
class Mesh:
    """Conforming 6-node triangle mesh with tagged boundary chains."""

    spec: DomainSpec
    nodes: np.ndarray          # (N,2)
    elements: np.ndarray       # (E,6) node indices
    boundary_edges: tuple[BoundaryEdge, ...]
    sides: dict[int, SideChain]
    h: float
    corner_nodes: tuple[int, ...] = field(default=())

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.elements.setflags(write=False)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_elements(self) -> int:
        return len(self.elements)

    def boundary_node_ids(self) -> np.ndarray:
        ids = np.concatenate([c.node_ids for c in self.sides.values()])
        return np.unique(ids)

    def element_areas(self) -> np.ndarray:
        from ..elements import TRI_QW
        coords = self.nodes[self.elements]
        _, detJ = jacobians(coords, TRI_DN)
        return detJ @ TRI_QW


# ---------------------------------------------------------------------------
# generic helpers


def _check_jacobians(nodes, elements):
    coords = nodes[elements]
    _, detJ = jacobians(coords, TRI_DN)
    if not np.all(detJ > 0):
        bad = int(np.argwhere(detJ <= 0)[0, 0])
        raise MeshError(f"non-positive Jacobian in element {bad}")


def _finish_mesh(spec, nodes, elements, tags, h, closed_side_lengths, corner_nodes=()):
    """Assemble boundary edges + side chains from per-node (side, s) tags.

    tags: dict node_id -> list of (side_id, s).  Nodes at domain corners
    carry one entry per incident side; mid-edge nodes always carry one.
    """
    nodes = np.ascontiguousarray(nodes, dtype=float)
    elements = np.ascontiguousarray(elements, dtype=np.int64)
    _check_jacobians(nodes, elements)

    # corner-edge incidence: boundary edges appear in exactly one element
    edge_map: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for e, conn in enumerate(elements):
        for k, (i, j) in enumerate(EDGE_CORNERS):
            key = (min(conn[i], conn[j]), max(conn[i], conn[j]))
            edge_map.setdefault(key, []).append((e, k))

    bedges = []
    for key, owners in edge_map.items():
        if len(owners) > 2:
            raise MeshError(f"edge {key} shared by {len(owners)} elements")
        if len(owners) != 1:
            continue
        e, k = owners[0]
        mid = int(elements[e, 3 + k])
        mid_tags = tags.get(mid)
        if not mid_tags or len(mid_tags) != 1:
            raise MeshError(f"boundary mid node {mid} lacks a unique side tag")
        side, _s_mid = mid_tags[0]
        s_vals = []
        for c in key:
            options = [s for sd, s in tags.get(c, []) if sd == side]
            if not options:
                raise MeshError(f"boundary corner node {c} missing tag for side {side}")
            # corner of a closed loop may carry s=0; pick the value nearest the mid
            s_vals.append(min(options, key=lambda s: abs(s - _s_mid)))
        s0, s1 = sorted(s_vals)
        L = closed_side_lengths.get(side)
        if L is not None and s1 - s0 > 0.5 * L:
            # wrap-around edge of a closed loop: shift the low end up by L
            s0, s1 = s1, s0 + L
        bedges.append(BoundaryEdge(e, k, side, float(s0), float(s1)))
    bedges.sort(key=lambda be: (be.side_id, be.s0))

    # ordered per-side node chains
    side_ids = sorted({be.side_id for be in bedges})
    sides = {}
    for side in side_ids:
        entries = {}
        for nid, tag_list in tags.items():
            for sd, s in tag_list:
                if sd == side:
                    entries[nid] = s
        order = sorted(entries, key=entries.get)
        s_arr = np.array([entries[n] for n in order])
        closed = side in closed_side_lengths
        length = closed_side_lengths.get(side, float(s_arr[-1]))
        sides[side] = SideChain(side, np.array(order, dtype=np.int64), s_arr,
                                float(length), closed)

    return Mesh(spec=spec, nodes=nodes, elements=elements,
                boundary_edges=tuple(bedges), sides=sides, h=float(h),
                corner_nodes=tuple(int(c) for c in corner_nodes))


def _emit_quads(nid, rising_fn, wrap_j=False):
    """Split each coarse cell of a fine (2nx+1, NJ) id grid into P2 triangles.

    rising_fn(ci, cj) picks the diagonal; triangles with a repeated corner
    (collapsed grid lines) are dropped, which turns degenerate strips into
    fans.  Returns an (E,6) connectivity array.
    """
    NI, NJ = nid.shape
    nx = (NI - 1) // 2
    ny = NJ // 2 if wrap_j else (NJ - 1) // 2
    Jmod = (lambda j: j % NJ) if wrap_j else (lambda j: j)

    elems = []
    for ci in range(nx):
        i0 = 2 * ci
        for cj in range(ny):
            j0 = 2 * cj
            c00 = nid[i0, Jmod(j0)]
            c10 = nid[i0 + 2, Jmod(j0)]
            c11 = nid[i0 + 2, Jmod(j0 + 2)]
            c01 = nid[i0, Jmod(j0 + 2)]
            m_b = nid[i0 + 1, Jmod(j0)]
            m_r = nid[i0 + 2, Jmod(j0 + 1)]
            m_t = nid[i0 + 1, Jmod(j0 + 2)]
            m_l = nid[i0, Jmod(j0 + 1)]
            m_d = nid[i0 + 1, Jmod(j0 + 1)]
            if rising_fn(ci, cj):
                cand = [(c00, c10, c11, m_b, m_r, m_d),
                        (c00, c11, c01, m_d, m_t, m_l)]
            else:
                cand = [(c00, c10, c01, m_b, m_d, m_l),
                        (c10, c11, c01, m_r, m_t, m_d)]
            for tri in cand:
                if tri[0] != tri[1] and tri[1] != tri[2] and tri[2] != tri[0]:
                    elems.append(tri)
    return np.array(elems, dtype=np.int64)


def _symmetrize(x: np.ndarray, center: float) -> np.ndarray:
    """Force a grid to be exactly mirror-symmetric about center."""
    return center + 0.5 * ((x - center) - (x[::-1] - center))


def _even_at_least(value: float, minimum: int = 2) -> int:
    n = max(minimum, int(math.ceil(value)))
    return n + (n % 2)


def _cumulative_arclength(fx: Callable[[np.ndarray], np.ndarray],
                          fy: Callable[[np.ndarray], np.ndarray],
                          params: np.ndarray) -> np.ndarray:
    """Cumulative arc length of a parametric curve at the given params.

    Uses 4-point Gauss-Legendre per interval on the exact derivative-free
    secant refinement: the derivative is approximated spectrally well by
    sampling the curve, so we integrate |dc/dt| with central differences on
    a fine per-interval subgrid.  Accurate far beyond mesh tolerances.
    """
    # 8 Gauss points per interval with numerically differentiated tangent
    gp, gw = np.polynomial.legendre.leggauss(8)
    t0, t1 = params[:-1], params[1:]
    tm = 0.5 * (t0 + t1)[:, None] + 0.5 * (t1 - t0)[:, None] * gp[None, :]
    dt = 1e-7 * (t1 - t0)[:, None]
    dx = (fx(tm + dt) - fx(tm - dt)) / (2 * dt)
    dy = (fy(tm + dt) - fy(tm - dt)) / (2 * dt)
    speed = np.hypot(dx, dy)
    seg = 0.5 * (t1 - t0) * (speed @ gw)
    return np.concatenate([[0.0], np.cumsum(seg)])


# ---------------------------------------------------------------------------
# family builders


def _build_triangle(spec: Triangle, h: float) -> Mesh:
    v = spec.vertices
    area = spec.area()
    cross = (v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1]) - (v[1, 1] - v[0, 1]) * (v[2, 0] - v[0, 0])
    if cross > 0:
        A, B, C = v[0], v[1], v[2]
        side_map = (0, 1, 2)   # legs A->B, B->C, C->A keep original ids
    else:
        A, B, C = v[0], v[2], v[1]
        side_map = (2, 1, 0)   # built legs A->C, C->B, B->A

    # area-equivalent element size sqrt(2*area)/n <= h, n a power of two
    size0 = math.sqrt(2.0 * area)
    n = 1
    while size0 / n > h:
        n *= 2
    N = 2 * n

    u = (B - A) / N
    w = (C - A) / N
    offsets = np.zeros(N + 2, dtype=np.int64)
    rows = []
    for j in range(N + 1):
        i = np.arange(N + 1 - j)
        rows.append(A + np.outer(i, u) + j * w)
        offsets[j + 1] = offsets[j] + (N + 1 - j)
    nodes = np.vstack(rows)

    def nid(i, j):
        return offsets[j] + i

    elems = []
    for J in range(n):
        for I in range(n - J):
            i0, j0 = 2 * I, 2 * J
            elems.append((nid(i0, j0), nid(i0 + 2, j0), nid(i0, j0 + 2),
                          nid(i0 + 1, j0), nid(i0 + 1, j0 + 1), nid(i0, j0 + 1)))
            if I < n - J - 1:
                elems.append((nid(i0 + 2, j0), nid(i0 + 2, j0 + 2), nid(i0, j0 + 2),
                              nid(i0 + 2, j0 + 1), nid(i0 + 1, j0 + 2), nid(i0 + 1, j0 + 1)))
    elements = np.array(elems, dtype=np.int64)

    lenAB = np.linalg.norm(B - A)
    lenBC = np.linalg.norm(C - B)
    lenCA = np.linalg.norm(A - C)
    tags: dict[int, list] = {}

    def tag(node, side, s):
        tags.setdefault(int(node), []).append((side, float(s)))

    for i in range(N + 1):                      # leg A->B
        tag(nid(i, 0), side_map[0], lenAB * i / N)
    for k in range(N + 1):                      # leg B->C along i+j = N
        tag(nid(N - k, k), side_map[1], lenBC * k / N)
    for k in range(N + 1):                      # leg C->A
        tag(nid(0, N - k), side_map[2], lenCA * k / N)

    corners = (nid(0, 0), nid(N, 0), nid(0, N))
    return _finish_mesh(spec, nodes, elements, tags, h, {}, corners)


def _build_narrow(spec: Narrow, h: float) -> Mesh:
    eps, a, b = spec.eps, spec.a, spec.b
    max_gap = spec.max_gap()
    fibers = eps * max_gap / h
    if fibers < 4:
        raise UnderResolvedError(
            f"h={h} gives {fibers:.2f} fibers across the thickest section "
            f"({eps * max_gap:.3g}); at least 4 are required"
        )
    ny = _even_at_least(max(fibers, 8))
    nx = _even_at_least((b - a) / h, 4)

    xs = a + (b - a) * np.arange(2 * nx + 1) / (2 * nx)
    if a == -b:
        xs = _symmetrize(xs, 0.0)
    ts = np.arange(2 * ny + 1) / (2 * ny)
    ts = 0.5 * (ts + (1.0 - ts[::-1]))

    y1 = eps * spec.f1(xs)
    y2 = eps * spec.f2(xs)
    Y = y1[:, None] + ts[None, :] * (y2 - y1)[:, None]

    # end columns collapse onto the tips
    NI, NJ = 2 * nx + 1, 2 * ny + 1
    nid = np.empty((NI, NJ), dtype=np.int64)
    coords = []
    tip_left = len(coords)
    coords.append((a, 0.5 * (y1[0] + y2[0])))
    nid[0, :] = tip_left
    for i in range(1, NI - 1):
        base = len(coords)
        coords.extend(zip(np.full(NJ, xs[i]), Y[i]))
        nid[i, :] = base + np.arange(NJ)
    tip_right = len(coords)
    coords.append((b, 0.5 * (y1[-1] + y2[-1])))
    nid[NI - 1, :] = tip_right
    nodes = np.array(coords)

    def rising(ci, cj):
        return (ci + 0.5 - nx / 2) * (cj + 0.5 - ny / 2) >= 0

    elements = _emit_quads(nid, rising)

    # arc length along the two graphs, measured from x = a
    def arc(f):
        fp = f.deriv()
        gp, gw = np.polynomial.legendre.leggauss(8)
        t0, t1 = xs[:-1], xs[1:]
        tm = 0.5 * (t0 + t1)[:, None] + 0.5 * (t1 - t0)[:, None] * gp[None, :]
        speed = np.sqrt(1.0 + (eps * fp(tm)) ** 2)
        seg = 0.5 * (t1 - t0) * (speed @ gw)
        return np.concatenate([[0.0], np.cumsum(seg)])

    s_low = arc(spec.f1)
    s_up = arc(spec.f2)
    tags: dict[int, list] = {}
    for i in range(NI):
        tags.setdefault(int(nid[i, 0]), []).append((0, float(s_low[i])))
        tags.setdefault(int(nid[i, NJ - 1]), []).append((1, float(s_up[i])))

    corners = (tip_left, tip_right)
    return _finish_mesh(spec, nodes, elements, tags, h, {}, corners)


def _build_rectangle(spec: Rectangle, h: float) -> Mesh:
    eps = spec.eps
    nx = _even_at_least(1.0 / h, 2)
    ny = _even_at_least(2.0 * eps / h, 2)
    xs = _symmetrize(np.arange(2 * nx + 1) / (2 * nx), 0.5)
    ys = _symmetrize(-eps + 2 * eps * np.arange(2 * ny + 1) / (2 * ny), 0.0)

    NI, NJ = len(xs), len(ys)
    nid = np.arange(NI * NJ, dtype=np.int64).reshape(NI, NJ)
    nodes = np.column_stack([np.repeat(xs, NJ), np.tile(ys, NI)])

    def rising(ci, cj):
        return (ci + 0.5 - nx / 2) * (cj + 0.5 - ny / 2) >= 0

    elements = _emit_quads(nid, rising)

    tags: dict[int, list] = {}
    for i in range(NI):                       # bottom 0 / top 2, s = x
        tags.setdefault(int(nid[i, 0]), []).append((0, float(xs[i])))
        tags.setdefault(int(nid[i, NJ - 1]), []).append((2, float(xs[i])))
    for j in range(NJ):                       # left 3 / right 1, s = y + eps
        tags.setdefault(int(nid[0, j]), []).append((3, float(ys[j] + eps)))
        tags.setdefault(int(nid[NI - 1, j]), []).append((1, float(ys[j] + eps)))

    corners = (nid[0, 0], nid[NI - 1, 0], nid[NI - 1, NJ - 1], nid[0, NJ - 1])
    return _finish_mesh(spec, nodes, elements, tags, h, {}, corners)


def _ellipse_perimeter(a: float, b: float) -> float:
    gp, gw = np.polynomial.legendre.leggauss(64)
    t = math.pi * (gp + 1)  # half period, doubled below
    return float(2 * math.pi / 2 * np.sum(gw * np.hypot(a * np.sin(t), b * np.cos(t))) )


def _angular_count(target: float) -> int:
    n = max(16, int(math.ceil(target)))
    return n + (-n) % 4


def _build_ellipse(spec: Ellipse, h: float) -> Mesh:
    a, b = spec.a_semi, spec.b_semi
    perim = _ellipse_perimeter(a, b)
    aspect = max(a / b, b / a)
    ntheta = _angular_count(max(perim / h, math.pi * aspect))
    nr = _even_at_least(min(a, b) / h, 4)

    rho = np.arange(2 * nr + 1) / (2 * nr)
    theta = 2 * math.pi * np.arange(2 * ntheta) / (2 * ntheta)
    NI, NJ = len(rho), len(theta)

    nid = np.empty((NI, NJ), dtype=np.int64)
    coords = [(0.0, 0.0)]
    nid[0, :] = 0
    for i in range(1, NI):
        base = len(coords)
        coords.extend(zip(a * rho[i] * np.cos(theta), b * rho[i] * np.sin(theta)))
        nid[i, :] = base + np.arange(NJ)
    nodes = np.array(coords)

    def rising(ci, cj):
        return cj + 0.5 < ntheta / 2  # mirror-symmetric about the x-axis

    elements = _emit_quads(nid, rising, wrap_j=True)

    s = _cumulative_arclength(lambda t: a * np.cos(t), lambda t: b * np.sin(t),
                              np.concatenate([theta, [2 * math.pi]]))
    length = s[-1]
    tags: dict[int, list] = {}
    for j in range(NJ):
        tags.setdefault(int(nid[NI - 1, j]), []).append((0, float(s[j])))

    return _finish_mesh(spec, nodes, elements, tags, h, {0: float(length)})


def _build_annulus(spec: Annulus, h: float) -> Mesh:
    r1, r2, off = spec.rho1, spec.rho2, spec.offset
    ntheta = _angular_count(2 * math.pi * r1 / h)
    nr = _even_at_least((r1 - r2 + abs(off)) / h, 4)

    t = np.arange(2 * nr + 1) / (2 * nr)
    theta = 2 * math.pi * np.arange(2 * ntheta) / (2 * ntheta)
    ct, st = np.cos(theta), np.sin(theta)
    inner = np.column_stack([off + r2 * ct, r2 * st])
    outer = np.column_stack([r1 * ct, r1 * st])

    NI, NJ = len(t), len(theta)
    nid = np.arange(NI * NJ, dtype=np.int64).reshape(NI, NJ)
    nodes = ((1 - t)[:, None, None] * inner[None, :, :]
             + t[:, None, None] * outer[None, :, :]).reshape(-1, 2)

    def rising(ci, cj):
        return cj + 0.5 < ntheta / 2

    elements = _emit_quads(nid, rising, wrap_j=True)

    tags: dict[int, list] = {}
    for j in range(NJ):
        tags.setdefault(int(nid[NI - 1, j]), []).append((0, float(r1 * theta[j])))
        tags.setdefault(int(nid[0, j]), []).append((1, float(r2 * theta[j])))

    lengths = {0: 2 * math.pi * r1, 1: 2 * math.pi * r2}
    return _finish_mesh(spec, nodes, elements, tags, h, lengths)


def build_mesh(spec: DomainSpec, h: float) -> Mesh:
    """Mesh the domain with nominal element size h.

    Triangles refine the macro triangle uniformly until the
    area-equivalent size sqrt(2*area)/n drops to h; tensor families size
    their grids so cells are roughly h across.
    """
    if not 0 < h < spec.diameter():
        raise DomainError(f"h={h} must lie in (0, domain diameter {spec.diameter():.3g})")
    if isinstance(spec, Triangle):
        return _build_triangle(spec, h)
    if isinstance(spec, Narrow):
        return _build_narrow(spec, h)
    if isinstance(spec, Rectangle):
        return _build_rectangle(spec, h)
    if isinstance(spec, Ellipse):
        return _build_ellipse(spec, h)
    if isinstance(spec, Annulus):
        return _build_annulus(spec, h)
    raise TypeError(f"unsupported domain spec: {spec!r}")


def mesh_to_text(mesh: Mesh) -> str:
    """Plain-text mesh export.

    Line 1: "N_nodes N_elems N_bedges"; then "id x y" per node,
    "id n1..n6" per element, "elem edge side s0 s1" per boundary edge.
    """
    lines = [f"{mesh.num_nodes} {mesh.num_elements} {len(mesh.boundary_edges)}"]
    for i, (x, y) in enumerate(mesh.nodes):
        lines.append(f"{i} {x!r} {y!r}")
    for e, conn in enumerate(mesh.elements):
        lines.append(f"{e} " + " ".join(str(int(n)) for n in conn))
    for be in mesh.boundary_edges:
        lines.append(f"{be.elem} {be.local_edge} {be.side_id} {be.s0!r} {be.s1!r}")
    return "\n".join(lines) + "\n"
