"""Domain specifications, meshing, and geometric landmarks."""
from .specs import (
    Annulus,
    DomainError,
    DomainSpec,
    Ellipse,
    Narrow,
    PolyBoundaryFn,
    Rectangle,
    Triangle,
    TriangleLandmarks,
    curvature_graph,
    poly,
    spec_from_dict,
    spec_from_json,
    spec_to_dict,
    spec_to_json,
    triangle_landmarks,
)
from .meshing import (
    BoundaryEdge,
    Mesh,
    MeshError,
    SideChain,
    UnderResolvedError,
    build_mesh,
    mesh_to_text,
)

__all__ = [
    "Annulus", "BoundaryEdge", "DomainError", "DomainSpec", "Ellipse", "Mesh",
    "MeshError", "Narrow", "PolyBoundaryFn", "Rectangle", "SideChain",
    "Triangle", "TriangleLandmarks", "UnderResolvedError", "build_mesh",
    "curvature_graph", "mesh_to_text", "poly", "spec_from_dict",
    "spec_from_json", "spec_to_dict", "spec_to_json", "triangle_landmarks",
]
