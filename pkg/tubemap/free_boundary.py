"""Free-boundary parameterization by growing rings past each boundary loop.

Each layer, per boundary loop:
  1. raw_extend_ring  push every ring vertex outward along a blend of the lateral direction
                      (tangent x normal, flipped away from the interior) and the normal
  2. smooth_ring      (I + omega * L_cycle) x = x_raw per coordinate
  3. stitch           a band of 2m triangles between the old and the new ring

The fixed-boundary pipeline then runs on the augmented mesh and its coordinates are
restricted to the original vertices, which form a prefix of the augmented vertex list.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
from scipy import sparse

from tubemap import config
from tubemap.exceptions import MeshError
from tubemap.mesh_core import BoundaryLoop, LinearConstraintSet, TriMesh, solve_constrained
from tubemap.tube_param import TubeCoords, parameterize_fixed, tube_distortion, two_loops

logger = logging.getLogger("tubemap.free_boundary")


@dataclass(frozen=True)
class ExtensionConfig:
    K: int = config.DEFAULT_LAYERS
    tau: float = config.DEFAULT_TAU
    omega: float = config.DEFAULT_OMEGA

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")
        if self.omega < 0.0:
            raise ValueError(f"omega must be >= 0, got {self.omega}")


@dataclass(frozen=True, eq=False)
class ExtensionRecord:
    """Augmented mesh; original vertex i is augmented vertex ``original_index[i]``."""

    mesh: TriMesh
    original_index: np.ndarray
    rings: List[np.ndarray] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def n_original(self) -> int:
        return len(self.original_index)


def _normalize(v: np.ndarray, what: str) -> np.ndarray:
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm <= 1e-300):
        raise MeshError(f"zero-norm {what} direction on ring vertex {int(np.flatnonzero(norm.ravel() <= 1e-300)[0])}")
    return v / norm


def raw_extend_ring(mesh: TriMesh, ring: BoundaryLoop, tau: float) -> np.ndarray:
    """Unsmoothed positions of the next ring outside ``ring``."""
    idx = np.asarray(ring.vertex_indices)
    p = mesh.vertices[idx]
    on_ring = np.zeros(mesh.n_vertices, dtype=bool)
    on_ring[idx] = True

    t = _normalize(np.roll(p, -1, axis=0) - np.roll(p, 1, axis=0), "tangent")
    inward = np.empty_like(p)
    spacing = np.empty(len(idx))
    for k, v in enumerate(idx.tolist()):
        nbrs = mesh.neighbors(v)
        nbrs = nbrs[~on_ring[nbrs]]
        if not len(nbrs):
            raise MeshError(f"ring vertex {v} has no interior neighbour")
        offsets = mesh.vertices[nbrs] - p[k]
        inward[k] = offsets.sum(axis=0)
        spacing[k] = np.linalg.norm(offsets, axis=1).mean()
    u = _normalize(inward, "interior")
    n = mesh.vertex_normals[idx]

    b = _normalize(np.cross(t, n), "lateral")
    flip = np.einsum("ij,ij->i", b, u) > 0
    b[flip] = -b[flip]
    d = _normalize((1.0 - tau) * b + tau * n, "extension")
    return p + spacing.mean() * d


def cycle_laplacian(m: int) -> sparse.csr_matrix:
    """Cycle-graph Laplacian: 2 on the diagonal, -1 on cyclic neighbours."""
    i = np.arange(m)
    rows = np.concatenate([i, i, i])
    cols = np.concatenate([i, (i + 1) % m, (i - 1) % m])
    vals = np.concatenate([np.full(m, 2.0), -np.ones(m), -np.ones(m)])
    return sparse.coo_matrix((vals, (rows, cols)), shape=(m, m)).tocsr()


def smooth_ring(x_raw: np.ndarray, omega: float) -> np.ndarray:
    x_raw = np.asarray(x_raw, dtype=np.float64)
    m = len(x_raw)
    if m < 3:
        raise ValueError(f"ring smoothing needs at least 3 points, got {m}")
    if omega == 0.0:
        return x_raw.copy()
    A = sparse.identity(m, format="csr") + omega * cycle_laplacian(m)
    return solve_constrained(A, LinearConstraintSet(), x_raw)


def stitch_band(old_ring: np.ndarray, new_ring: np.ndarray) -> np.ndarray:
    """Triangles (o[i+1], o[i], n[i]) and (o[i+1], n[i], n[i+1]) around the ring."""
    o = np.asarray(old_ring)
    n = np.asarray(new_ring)
    o1, n1 = np.roll(o, -1), np.roll(n, -1)
    first = np.column_stack([o1, o, n])
    second = np.column_stack([o1, n, n1])
    return np.stack([first, second], axis=1).reshape(-1, 3)


def _ring_loop(mesh: TriMesh, ring: np.ndarray) -> BoundaryLoop:
    pts = mesh.vertices[ring]
    return BoundaryLoop(ring, np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1))


def extend_mesh(mesh: TriMesh, cfg: ExtensionConfig) -> ExtensionRecord:
    """Grow ``cfg.K`` smoothed rings beyond each of the two boundary loops."""
    loops = list(two_loops(mesh))
    rings = [lp.vertex_indices for lp in loops]
    current = mesh
    t_raw = t_smooth = 0.0
    for layer in range(cfg.K):
        for r, ring in enumerate(rings):
            t0 = time.perf_counter()
            x_raw = raw_extend_ring(current, _ring_loop(current, ring), cfg.tau)
            t_raw += time.perf_counter() - t0
            t0 = time.perf_counter()
            x = smooth_ring(x_raw, cfg.omega)
            t_smooth += time.perf_counter() - t0

            new_ring = current.n_vertices + np.arange(len(ring))
            faces = np.vstack([current.faces, stitch_band(ring, new_ring)])
            current = TriMesh(np.vstack([current.vertices, x]), faces)
            rings[r] = new_ring
        logger.debug("extension layer %d: %d vertices", layer + 1, current.n_vertices)
    return ExtensionRecord(
        mesh=current,
        original_index=np.arange(mesh.n_vertices),
        rings=rings,
        timings={"raw_extension": t_raw, "ring_smoothing": t_smooth},
    )


def parameterize_free(
    mesh: TriMesh,
    cfg: ExtensionConfig = ExtensionConfig(),
    d: float = config.DEFAULT_STRIP_WIDTH,
    strict: bool = False,
) -> Tuple[TubeCoords, Dict]:
    """Fixed-boundary pipeline on the extended mesh, restricted to the original vertices."""
    record = extend_mesh(mesh, cfg)
    tube_ext, diagnostics = parameterize_fixed(record.mesh, d=d, strict=strict)
    t0 = time.perf_counter()
    keep = record.original_index
    tube = TubeCoords(tube_ext.u[keep], tube_ext.z[keep], tube_ext.L_star)
    restricted = tube_distortion(mesh, tube)
    diagnostics["timings"].update(record.timings)
    diagnostics["timings"]["restriction"] = time.perf_counter() - t0
    diagnostics.update(
        {
            "extension_layers": int(cfg.K),
            "tau": float(cfg.tau),
            "omega": float(cfg.omega),
            "n_extended_vertices": int(record.mesh.n_vertices),
            "distortion_restricted": float(restricted.mean_deg),
        }
    )
    logger.info(
        "free boundary K=%d omega=%.3g: distortion on original mesh %.4f deg",
        cfg.K, cfg.omega, restricted.mean_deg,
    )
    return tube, diagnostics
