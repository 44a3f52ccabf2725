"""Forward and inverse physically based rendering toolkit.

Forward path: Cook-Torrance svBRDF shading of triangle meshes under
punctual and environment lighting, multi-view multi-channel dataset
rendering with specular-illumination condition maps. Inverse path:
gradient-based recovery of albedo/metallic/roughness textures from
rendered observations. Plus geometry utilities (SDF grids, marching
cubes) and the image/geometry evaluation protocol.
"""

from . import brdf, core, inverse, lighting, meshing, metrics, renderer, scene

__all__ = [
    "brdf",
    "core",
    "inverse",
    "lighting",
    "meshing",
    "metrics",
    "renderer",
    "scene",
]

__version__ = "0.1.0"
