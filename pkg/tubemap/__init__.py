"""Conformal parameterization of tube-like triangle meshes.

Typical use::

    from tubemap import load_mesh, parameterize_fixed, bend

    mesh = load_mesh("vessel.obj")
    tube, diagnostics = parameterize_fixed(mesh, d=0.05)
    torus_points, spec = bend(tube, "minor", rho=5.0)
"""

from tubemap.bending import TorusBend, added_distortion, bend
from tubemap.exceptions import TubemapError
from tubemap.free_boundary import ExtensionConfig, parameterize_free
from tubemap.mesh_core import TriMesh, extract_boundary_loops
from tubemap.mesh_io import load_mesh, save_mesh
from tubemap.metrics import DistortionReport, angular_distortion, emit_report
from tubemap.synth import TubeSpec, default_corpus, generate_tube
from tubemap.tube_param import TubeCoords, parameterize_fixed

__all__ = [
    "DistortionReport",
    "ExtensionConfig",
    "TorusBend",
    "TriMesh",
    "TubeCoords",
    "TubeSpec",
    "TubemapError",
    "added_distortion",
    "angular_distortion",
    "bend",
    "default_corpus",
    "emit_report",
    "extract_boundary_loops",
    "generate_tube",
    "load_mesh",
    "parameterize_fixed",
    "parameterize_free",
    "save_mesh",
]
