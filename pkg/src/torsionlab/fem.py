"""Galerkin P2 solver for -Lap(u) = f with zero Dirichlet data.

Assembly uses a 7-point degree-5 rule with isoparametric mapping for
curved elements.  Dirichlet values are imposed by elimination, so the
solution vector is exactly zero on the boundary.  Boundary normal
derivatives are recovered with the consistent (variational) flux, which
is one order more accurate than differentiating the interpolant and is
what makes the eps^4-level comparisons in the experiments possible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, spsolve
from scipy.spatial import cKDTree

from .elements import (
    EDGE_CORNERS,
    EDGE_QP,
    EDGE_QW,
    TRI_DN,
    TRI_N,
    TRI_QP,
    TRI_QW,
    edge_shape_functions,
    shape_functions,
)
from .geometry.meshing import Mesh


class AssemblyError(Exception):
    pass


class SolverError(Exception):
    pass


class PointLocationError(Exception):
    pass


@dataclass
class LinearSystem:
    """Reduced stiffness system over free (interior) nodes.

    dirichlet_map[n] is the free index of node n, or -1 if constrained.
    The unreduced matrix and load are kept for flux recovery.
    """

    stiffness: sp.csr_matrix
    load: np.ndarray
    dirichlet_map: np.ndarray
    mesh: Mesh = field(repr=False)
    rhs_tag: str = "f"
    full_stiffness: sp.csr_matrix = field(repr=False, default=None)
    full_load: np.ndarray = field(repr=False, default=None)

    @property
    def num_free(self) -> int:
        return self.stiffness.shape[0]


@dataclass
class TorsionSolution:
    """Nodal P2 coefficients of a Poisson solve on a mesh.

    nodal_values is zero at every boundary node by construction.
    """

    mesh: Mesh = field(repr=False)
    nodal_values: np.ndarray = field(repr=False)
    rhs_tag: str = "f"
    solver_residual: float = 0.0
    interior_positive: bool | None = None
    system: LinearSystem | None = field(repr=False, default=None)
    _flux_cache: "BoundaryFlux | None" = field(repr=False, default=None)
    _locator: "_Locator | None" = field(repr=False, default=None)


def assemble(mesh: Mesh, rhs: Callable, rhs_tag: str | None = None) -> LinearSystem:
    """Assemble stiffness and load for -Lap(u) = rhs, u = 0 on the boundary.

    rhs is called as rhs(x, y) on coordinate arrays and must broadcast;
    constants may be returned as scalars.
    """
    coords = mesh.nodes[mesh.elements]                      # (E,6,2)
    J = np.einsum("eni,qnj->eqij", coords, TRI_DN)          # (E,Q,2,2)
    detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if not np.all(detJ > 0):
        e, q = np.argwhere(detJ <= 0)[0]
        raise AssemblyError(f"non-positive Jacobian at element {e}, quadrature point {q}")

    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1]
    inv[..., 0, 1] = -J[..., 0, 1]
    inv[..., 1, 0] = -J[..., 1, 0]
    inv[..., 1, 1] = J[..., 0, 0]
    inv /= detJ[..., None, None]
    # physical gradients: dN_phys[e,q,n,i] = dN_ref[q,n,j] * inv[e,q,j,i]
    dN_phys = np.einsum("qnj,eqji->eqni", TRI_DN, inv)

    w = TRI_QW[None, :] * detJ                              # (E,Q)
    K_loc = np.einsum("eq,eqni,eqmi->enm", w, dN_phys, dN_phys)

    xq = np.einsum("qn,eni->eqi", TRI_N, coords)
    f_q = np.broadcast_to(np.asarray(rhs(xq[..., 0], xq[..., 1]), dtype=float),
                          xq.shape[:2])
    F_loc = np.einsum("eq,eq,qn->en", w, f_q, TRI_N)

    n_nodes = mesh.num_nodes
    rows = np.repeat(mesh.elements, 6, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, 6)).ravel()
    K_full = sp.coo_matrix((K_loc.ravel(), (rows, cols)),
                           shape=(n_nodes, n_nodes)).tocsr()
    F_full = np.zeros(n_nodes)
    np.add.at(F_full, mesh.elements.ravel(), F_loc.ravel())

    constrained = mesh.boundary_node_ids()
    dirichlet_map = np.full(n_nodes, -1, dtype=np.int64)
    free = np.setdiff1d(np.arange(n_nodes), constrained)
    dirichlet_map[free] = np.arange(len(free))

    K_ff = K_full[free][:, free].tocsr()
    F_f = F_full[free]
    if rhs_tag is None:
        rhs_tag = getattr(rhs, "__name__", None) or "f"
    return LinearSystem(stiffness=K_ff, load=F_f, dirichlet_map=dirichlet_map,
                        mesh=mesh, rhs_tag=rhs_tag,
                        full_stiffness=K_full, full_load=F_full)


def solve(system: LinearSystem, rtol: float = 1e-11) -> TorsionSolution:
    """Diagonally preconditioned conjugate gradients on the reduced system.

    The iteration cap is 50*sqrt(n_free); non-convergence raises with the
    final residual.  The returned relative residual is always <= 1e-10.
    """
    K, b = system.stiffness, system.load
    n = system.num_free
    if n == 0:
        raise SolverError("no free nodes to solve for")
    diag = K.diagonal()
    M = sp.diags(1.0 / diag)
    maxiter = int(math.ceil(50.0 * math.sqrt(n)))
    x, info = cg(K, b, rtol=rtol, atol=0.0, maxiter=maxiter, M=M)
    bnorm = np.linalg.norm(b)
    residual = float(np.linalg.norm(b - K @ x) / bnorm) if bnorm > 0 else 0.0
    if info != 0 or residual > 1e-10:
        raise SolverError(
            f"CG did not converge: info={info}, relative residual {residual:.3e} "
            f"after cap {maxiter} iterations"
        )
    u = np.zeros(system.mesh.num_nodes)
    free = system.dirichlet_map >= 0
    u[free] = x
    u.setflags(write=False)
    interior_positive = bool(np.min(x) > 0.0) if n else None
    return TorsionSolution(mesh=system.mesh, nodal_values=u,
                           rhs_tag=system.rhs_tag, solver_residual=residual,
                           interior_positive=interior_positive, system=system)


def solve_torsion(mesh: Mesh, rtol: float = 1e-11) -> TorsionSolution:
    """Solve -Lap(u) = 1, u = 0 on the boundary."""
    return solve(assemble(mesh, lambda x, y: 1.0, rhs_tag="1"), rtol=rtol)


# ---------------------------------------------------------------------------
# point evaluation


class _Locator:
    """Element lookup by nearest centroids + Newton inversion of the
    quadratic map.  Caches the last hit element as the first candidate."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.coords = mesh.nodes[mesh.elements]
        self.tree = cKDTree(self.coords[:, :3].mean(axis=1))
        self.scale = float(np.max(mesh.nodes.max(axis=0) - mesh.nodes.min(axis=0)))
        self.last = 0

    def _invert(self, e: int, p: np.ndarray):
        X = self.coords[e]
        # straight-triangle barycentric start
        v0, v1, v2 = X[0], X[1], X[2]
        T = np.column_stack([v1 - v0, v2 - v0])
        try:
            ref = np.linalg.solve(T, p - v0)
        except np.linalg.LinAlgError:
            return None
        for _ in range(12):
            N, dN = shape_functions(ref[None, :])
            xk = N[0] @ X
            Jk = np.einsum("ni,nj->ij", X, dN[0])
            try:
                step = np.linalg.solve(Jk, p - xk)
            except np.linalg.LinAlgError:
                return None
            ref = ref + step
            if np.linalg.norm(step) < 1e-14 * max(1.0, self.scale):
                break
        N, _ = shape_functions(ref[None, :])
        if np.linalg.norm(N[0] @ X - p) > 1e-9 * self.scale:
            return None
        return ref

    def locate(self, p) -> tuple[int, np.ndarray]:
        p = np.asarray(p, dtype=float)
        tol = 1e-9
        candidates = [self.last]
        k = min(16, len(self.coords))
        candidates.extend(int(i) for i in self.tree.query(p, k=k)[1].ravel())
        best = None
        for e in candidates:
            ref = self._invert(e, p)
            if ref is None:
                continue
            margin = min(ref[0], ref[1], 1.0 - ref[0] - ref[1])
            if margin >= -tol:
                self.last = e
                return e, ref
            if best is None or margin > best[2]:
                best = (e, ref, margin)
        if best is not None and best[2] > -1e-6:
            self.last = best[0]
            return best[0], best[1]
        raise PointLocationError(f"point {tuple(p)} is outside the meshed domain")


def _locator(solution: TorsionSolution) -> _Locator:
    if solution._locator is None:
        solution._locator = _Locator(solution.mesh)
    return solution._locator


def evaluate(solution: TorsionSolution, p) -> float:
    """Value of the quadratic interpolant at an interior point."""
    e, ref = _locator(solution).locate(p)
    N, _ = shape_functions(ref[None, :])
    return float(N[0] @ solution.nodal_values[solution.mesh.elements[e]])


def gradient_at(solution: TorsionSolution, p) -> np.ndarray:
    """Gradient of the quadratic interpolant at an interior point."""
    e, ref = _locator(solution).locate(p)
    X = solution.mesh.nodes[solution.mesh.elements[e]]
    _, dN = shape_functions(ref[None, :])
    Jk = np.einsum("ni,nj->ij", X, dN[0])
    grad_ref = solution.nodal_values[solution.mesh.elements[e]] @ dN[0]
    return np.linalg.solve(Jk.T, grad_ref)


def element_corner_gradients(solution: TorsionSolution) -> np.ndarray:
    """Gradient of each element's quadratic interpolant at its 3 corners,
    shape (E,3,2).  Discontinuous across elements."""
    mesh = solution.mesh
    coords = mesh.nodes[mesh.elements]
    refs = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    _, dN = shape_functions(refs)                           # (3,6,2)
    J = np.einsum("eni,cnj->ecij", coords, dN)
    detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1]
    inv[..., 0, 1] = -J[..., 0, 1]
    inv[..., 1, 0] = -J[..., 1, 0]
    inv[..., 1, 1] = J[..., 0, 0]
    inv /= detJ[..., None, None]
    u_e = solution.nodal_values[mesh.elements]              # (E,6)
    grad_ref = np.einsum("en,cnj->ecj", u_e, dN)
    return np.einsum("ecj,ecji->eci", grad_ref, inv)


# ---------------------------------------------------------------------------
# consistent boundary flux


@dataclass(frozen=True)
class BoundaryFlux:
    """Inward normal derivative at boundary nodes (consistent recovery)."""

    node_ids: np.ndarray
    dudn: np.ndarray

    def lookup(self) -> dict[int, float]:
        return {int(n): float(v) for n, v in zip(self.node_ids, self.dudn)}


def boundary_flux(solution: TorsionSolution) -> BoundaryFlux:
    """Variationally consistent flux g ~ du/dn (inward positive).

    Solves M_b g = -(K u - F) restricted to boundary test functions, where
    M_b is the boundary mass matrix on the curved quadratic edges.  The
    discrete compatibility identity sum(M_b g) = integral of f holds to
    solver precision.
    """
    if solution._flux_cache is not None:
        return solution._flux_cache
    system = solution.system
    if system is None or system.full_stiffness is None:
        raise ValueError("solution carries no assembled system; flux needs one")
    mesh = solution.mesh
    bnodes = mesh.boundary_node_ids()
    index = {int(n): i for i, n in enumerate(bnodes)}
    nb = len(bnodes)

    residual = system.full_stiffness @ solution.nodal_values - system.full_load
    r_b = residual[bnodes]

    psi, _ = edge_shape_functions(EDGE_QP)                  # (3,3)
    rows, cols, vals = [], [], []
    for be in mesh.boundary_edges:
        conn = mesh.elements[be.elem]
        c0, c1 = EDGE_CORNERS[be.local_edge]
        enodes = (int(conn[c0]), int(conn[3 + be.local_edge]), int(conn[c1]))
        X = mesh.nodes[list(enodes)]                        # (3,2) start, mid, end
        _, dpsi = edge_shape_functions(EDGE_QP)
        tangent = np.einsum("qk,ki->qi", dpsi, X)
        speed = np.hypot(tangent[:, 0], tangent[:, 1])
        Me = np.einsum("q,qa,qb->ab", EDGE_QW * speed, psi, psi)
        li = [index[n] for n in enodes]
        for aa in range(3):
            for bb in range(3):
                rows.append(li[aa])
                cols.append(li[bb])
                vals.append(Me[aa, bb])
    Mb = sp.coo_matrix((vals, (rows, cols)), shape=(nb, nb)).tocsr()
    g = spsolve(Mb.tocsc(), -r_b)
    flux = BoundaryFlux(node_ids=bnodes, dudn=g)
    solution._flux_cache = flux
    return flux


# ---------------------------------------------------------------------------
# exports


def solution_to_csv(solution: TorsionSolution) -> str:
    lines = ["node_id,x,y,u"]
    for i, ((x, y), u) in enumerate(zip(solution.mesh.nodes, solution.nodal_values)):
        lines.append(f"{i},{x!r},{y!r},{u!r}")
    return "\n".join(lines) + "\n"


def flux_to_csv(solution: TorsionSolution) -> str:
    flux = boundary_flux(solution)
    lut = flux.lookup()
    mesh = solution.mesh
    lines = ["side_id,s,x,y,dudn"]
    for side_id in sorted(mesh.sides):
        chain = mesh.sides[side_id]
        for n, s in zip(chain.node_ids, chain.s):
            x, y = mesh.nodes[n]
            lines.append(f"{side_id},{s!r},{x!r},{y!r},{lut[int(n)]!r}")
    return "\n".join(lines) + "\n"
