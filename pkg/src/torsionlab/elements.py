"""Quadratic (6-node) triangle reference element: shape functions and quadrature.

Local node order: corners 0,1,2 counterclockwise, then edge midpoints
3 (between 0-1), 4 (1-2), 5 (2-0).  Reference triangle has vertices
(0,0), (1,0), (0,1).
"""
from __future__ import annotations

import math

import numpy as np

# edge k joins corner k to corner (k+1)%3; its midside node is 3+k
EDGE_CORNERS = ((0, 1), (1, 2), (2, 0))


def shape_functions(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """P2 basis values and reference gradients at (Q,2) reference points.

    Returns (N, dN) with shapes (Q,6) and (Q,6,2).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    xi, eta = pts[:, 0], pts[:, 1]
    lam0 = 1.0 - xi - eta
    lam1 = xi
    lam2 = eta

    N = np.empty((len(pts), 6))
    N[:, 0] = lam0 * (2 * lam0 - 1)
    N[:, 1] = lam1 * (2 * lam1 - 1)
    N[:, 2] = lam2 * (2 * lam2 - 1)
    N[:, 3] = 4 * lam0 * lam1
    N[:, 4] = 4 * lam1 * lam2
    N[:, 5] = 4 * lam2 * lam0

    # gradients of barycentric coords in (xi, eta)
    d0 = np.array([-1.0, -1.0])
    d1 = np.array([1.0, 0.0])
    d2 = np.array([0.0, 1.0])
    dN = np.empty((len(pts), 6, 2))
    dN[:, 0] = (4 * lam0 - 1)[:, None] * d0
    dN[:, 1] = (4 * lam1 - 1)[:, None] * d1
    dN[:, 2] = (4 * lam2 - 1)[:, None] * d2
    dN[:, 3] = 4 * (lam0[:, None] * d1 + lam1[:, None] * d0)
    dN[:, 4] = 4 * (lam1[:, None] * d2 + lam2[:, None] * d1)
    dN[:, 5] = 4 * (lam2[:, None] * d0 + lam0[:, None] * d2)
    return N, dN


def _tri_quadrature_deg5() -> tuple[np.ndarray, np.ndarray]:
    # 7-point degree-5 rule; weights sum to the reference area 1/2
    s15 = math.sqrt(15.0)
    a = (6.0 - s15) / 21.0
    b = (6.0 + s15) / 21.0
    wa = (155.0 - s15) / 1200.0
    wb = (155.0 + s15) / 1200.0
    pts = [(1 / 3, 1 / 3),
           (a, a), (1 - 2 * a, a), (a, 1 - 2 * a),
           (b, b), (1 - 2 * b, b), (b, 1 - 2 * b)]
    wts = [9.0 / 40.0, wa, wa, wa, wb, wb, wb]
    return np.array(pts), 0.5 * np.array(wts)


TRI_QP, TRI_QW = _tri_quadrature_deg5()
TRI_N, TRI_DN = shape_functions(TRI_QP)

# 3-point Gauss-Legendre on [0,1] (degree 5), for curved boundary edges
_G = math.sqrt(3.0 / 5.0)
EDGE_QP = np.array([0.5 - 0.5 * _G, 0.5, 0.5 + 0.5 * _G])
EDGE_QW = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


def edge_shape_functions(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Quadratic 1-D basis on an edge, nodes at t = 0, 1/2, 1.

    Returns (psi, dpsi) with shapes (Q,3), ordered (start, mid, end).
    """
    t = np.asarray(t, dtype=float)
    psi = np.stack([(1 - t) * (1 - 2 * t), 4 * t * (1 - t), t * (2 * t - 1)], axis=-1)
    dpsi = np.stack([4 * t - 3, 4 - 8 * t, 4 * t - 1], axis=-1)
    return psi, dpsi


def jacobians(coords: np.ndarray, dN: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Isoparametric Jacobians at quadrature points.

    coords: (E,6,2) nodal coordinates; dN: (Q,6,2) reference gradients.
    Returns (J, detJ) with shapes (E,Q,2,2) and (E,Q).
    """
    J = np.einsum("eni,qnj->eqij", coords, dN)
    detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    return J, detJ
