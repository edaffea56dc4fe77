"""Triangle meshes, boundary loops, the cotangent Laplacian and constrained sparse solves.

``TriMesh`` is the carrier every other module works on. It is validated on construction
(valid indices, edge- and vertex-manifold, consistently oriented) and its arrays are made
read-only, so a mesh can be shared freely between stages and threads.

Typical use::

    from tubemap.mesh_core import TriMesh, extract_boundary_loops, cotan_stiffness

    mesh = TriMesh(vertices, faces)
    loop0, loop1 = extract_boundary_loops(mesh)
    K = -cotan_stiffness(mesh)          # SPD once boundary values are pinned
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import splu

from tubemap import config
from tubemap.exceptions import (
    ConstraintError,
    DegenerateFaceError,
    MeshError,
    NonManifoldError,
    SolverError,
)

logger = logging.getLogger("tubemap.mesh_core")


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _half_edges(faces: np.ndarray) -> np.ndarray:
    """Directed edges (a, b) of every face, three per face in face order."""
    return faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)


# ── TriMesh ─────────────────────────────────────────────────────────────────────
@dataclass(frozen=True, eq=False)
class TriMesh:
    """Indexed triangle surface. Faces are counterclockwise w.r.t. the outward normal."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=np.float64)
        faces = np.array(self.faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError(f"vertices must have shape (n, 3), got {vertices.shape}")
        if faces.ndim != 2 or faces.shape[1] != 3 or len(faces) == 0:
            raise MeshError(f"faces must have shape (m, 3) with m > 0, got {faces.shape}")
        _validate_topology(len(vertices), faces)
        object.__setattr__(self, "vertices", _readonly(vertices))
        object.__setattr__(self, "faces", _readonly(faces))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted (i, j) pairs."""
        he = np.sort(_half_edges(self.faces), axis=1)
        return _readonly(np.unique(he, axis=0))

    @cached_property
    def boundary_half_edges(self) -> np.ndarray:
        """Directed edges whose reverse is not in any face (surface on their left)."""
        he = _half_edges(self.faces)
        n = self.n_vertices
        keys = he[:, 0] * n + he[:, 1]
        reverse = he[:, 1] * n + he[:, 0]
        return _readonly(he[~np.isin(reverse, keys)])

    @cached_property
    def boundary_vertex_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_half_edges.ravel()] = True
        return _readonly(mask)

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric vertex adjacency (1 per mesh edge)."""
        e = self.edges
        n = self.n_vertices
        data = np.ones(2 * len(e))
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))

    def neighbors(self, i: int) -> np.ndarray:
        """One-ring vertex neighbours of vertex ``i``."""
        adj = self.adjacency
        return adj.indices[adj.indptr[i]:adj.indptr[i + 1]]

    @cached_property
    def vertex_faces(self) -> List[np.ndarray]:
        """Incident face indices per vertex."""
        order = np.argsort(self.faces.ravel(), kind="stable")
        counts = np.bincount(self.faces.ravel(), minlength=self.n_vertices)
        return np.split(order // 3, np.cumsum(counts)[:-1])

    @cached_property
    def face_cross(self) -> np.ndarray:
        """Per-face (v1 - v0) x (v2 - v0); its norm is twice the face area."""
        v = self.vertices[self.faces]
        return np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])

    @cached_property
    def face_areas(self) -> np.ndarray:
        return _readonly(0.5 * np.linalg.norm(self.face_cross, axis=1))

    @cached_property
    def face_normals(self) -> np.ndarray:
        cross = self.face_cross
        norm = np.linalg.norm(cross, axis=1, keepdims=True)
        return _readonly(cross / np.where(norm > 0, norm, 1.0))

    @cached_property
    def vertex_normals(self) -> np.ndarray:
        """Area-weighted incident face normals, normalised."""
        acc = np.zeros((self.n_vertices, 3))
        for k in range(3):
            np.add.at(acc, self.faces[:, k], self.face_cross)
        norm = np.linalg.norm(acc, axis=1, keepdims=True)
        return _readonly(acc / np.where(norm > 0, norm, 1.0))

    @cached_property
    def vertex_areas(self) -> np.ndarray:
        """One third of the one-ring area per vertex."""
        areas = np.zeros(self.n_vertices)
        for k in range(3):
            np.add.at(areas, self.faces[:, k], self.face_areas / 3.0)
        return _readonly(areas)

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges) + self.n_faces

    @property
    def total_area(self) -> float:
        return float(self.face_areas.sum())

    def with_vertices(self, vertices: np.ndarray) -> "TriMesh":
        """Same connectivity, new positions."""
        return TriMesh(vertices, self.faces)


def _validate_topology(n_vertices: int, faces: np.ndarray) -> None:
    if faces.min() < 0 or faces.max() >= n_vertices:
        raise MeshError(f"face indices must lie in [0, {n_vertices})")
    repeated = (
        (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2])
    )
    if repeated.any():
        raise MeshError(f"face {int(np.flatnonzero(repeated)[0])} repeats a vertex")
    used = np.zeros(n_vertices, dtype=bool)
    used[faces.ravel()] = True
    if not used.all():
        raise MeshError(f"{int((~used).sum())} vertices are not referenced by any face")

    he = _half_edges(faces)
    _, counts = np.unique(np.sort(he, axis=1), axis=0, return_counts=True)
    if (counts > 2).any():
        raise NonManifoldError("non-manifold input: an edge is shared by more than two faces")
    keys = he[:, 0] * n_vertices + he[:, 1]
    if len(np.unique(keys)) != len(keys):
        raise NonManifoldError("inconsistent orientation: a directed edge appears twice")

    # Vertex manifoldness: corners around each vertex must form a single edge-connected fan.
    m = len(faces)
    local = np.tile(np.arange(3), m)
    face_of = np.repeat(np.arange(m), 3)
    reverse = he[:, 1] * n_vertices + he[:, 0]
    order = np.argsort(keys)
    pos = np.searchsorted(keys[order], reverse)
    pos = np.minimum(pos, len(keys) - 1)
    has_twin = keys[order][pos] == reverse
    h = np.flatnonzero(has_twin)
    t = order[pos[has_twin]]
    # half-edge h = (a -> b) at corner (f, k); its twin t = (b -> a) at corner (g, l)
    corner_a_h = face_of[h] * 3 + local[h]
    corner_b_h = face_of[h] * 3 + (local[h] + 1) % 3
    corner_b_t = face_of[t] * 3 + local[t]
    corner_a_t = face_of[t] * 3 + (local[t] + 1) % 3
    rows = np.concatenate([corner_a_h, corner_b_h])
    cols = np.concatenate([corner_a_t, corner_b_t])
    graph = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(3 * m, 3 * m))
    _, labels = csgraph.connected_components(graph, directed=False)
    pairs = np.unique(np.column_stack([faces.ravel(), labels]), axis=0)
    fans = np.bincount(pairs[:, 0], minlength=n_vertices)
    if (fans > 1).any():
        raise NonManifoldError(f"non-manifold vertex {int(np.flatnonzero(fans > 1)[0])}")


def check_nondegenerate(mesh: TriMesh) -> None:
    """Raise if a face area is below ``DEGENERATE_AREA_RATIO`` times the mean face area."""
    areas = mesh.face_areas
    bad = np.flatnonzero(areas < config.DEGENERATE_AREA_RATIO * areas.mean())
    if len(bad):
        raise DegenerateFaceError(f"degenerate face {int(bad[0])} (area {areas[bad[0]]:.3g})", int(bad[0]))


def compact_faces(faces: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Re-index a face subset onto the vertices it uses.

    Returns ``(local_faces, global_index)`` with ``global_index[local] = global``.
    """
    global_index, inverse = np.unique(faces.ravel(), return_inverse=True)
    return inverse.reshape(faces.shape), global_index


# ── boundary loops ──────────────────────────────────────────────────────────────
@dataclass(frozen=True, eq=False)
class BoundaryLoop:
    """Cyclically ordered boundary vertices; ``edge_lengths[i]`` joins i and i+1."""

    vertex_indices: np.ndarray
    edge_lengths: np.ndarray

    def __len__(self) -> int:
        return len(self.vertex_indices)

    @property
    def total_length(self) -> float:
        return float(self.edge_lengths.sum())

    def rotated_to(self, vertex: int) -> "BoundaryLoop":
        """Same loop, starting at ``vertex``."""
        hits = np.flatnonzero(self.vertex_indices == vertex)
        if not len(hits):
            raise ValueError(f"vertex {vertex} is not on this loop")
        shift = int(hits[0])
        return BoundaryLoop(np.roll(self.vertex_indices, -shift), np.roll(self.edge_lengths, -shift))


def extract_boundary_loops(mesh: TriMesh) -> List[BoundaryLoop]:
    """All boundary loops, each walked with the surface on its left.

    Each loop starts at its smallest vertex index; loops are sorted by descending total length.
    """
    he = mesh.boundary_half_edges
    if not len(he):
        return []
    successor: Dict[int, int] = dict(zip(he[:, 0].tolist(), he[:, 1].tolist()))
    remaining = set(successor)
    loops = []
    while remaining:
        start = min(remaining)
        walk = [start]
        remaining.discard(start)
        nxt = successor[start]
        while nxt != start:
            walk.append(nxt)
            remaining.discard(nxt)
            nxt = successor[nxt]
        idx = np.array(walk, dtype=np.int64)
        pts = mesh.vertices[idx]
        lengths = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
        loops.append(BoundaryLoop(_readonly(idx), _readonly(lengths)))
    loops.sort(key=lambda lp: (-lp.total_length, int(lp.vertex_indices[0])))
    return loops


# ── discrete operators ──────────────────────────────────────────────────────────
def face_cotangents(mesh: TriMesh) -> np.ndarray:
    """Cotangent of the angle at each corner, shape (m, 3)."""
    v = mesh.vertices[mesh.faces]
    cots = np.empty((mesh.n_faces, 3))
    double_area = 2.0 * mesh.face_areas
    for k in range(3):
        a = v[:, (k + 1) % 3] - v[:, k]
        b = v[:, (k + 2) % 3] - v[:, k]
        cots[:, k] = np.einsum("ij,ij->i", a, b) / double_area
    return cots


def cotan_stiffness(mesh: TriMesh) -> sparse.csr_matrix:
    """Symmetric cotangent form W: W_ij = (cot a_ij + cot b_ij) / 2, rows sum to zero.

    Negative weights of obtuse configurations are kept as they are.
    """
    check_nondegenerate(mesh)
    cots = face_cotangents(mesh)
    f = mesh.faces
    rows, cols, vals = [], [], []
    for k in range(3):
        j, l = f[:, (k + 1) % 3], f[:, (k + 2) % 3]
        w = 0.5 * cots[:, k]
        rows += [j, l]
        cols += [l, j]
        vals += [w, w]
    n = mesh.n_vertices
    W = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    W = W - sparse.diags(np.asarray(W.sum(axis=1)).ravel())
    return W.tocsr()


def cotan_laplacian(mesh: TriMesh) -> sparse.csr_matrix:
    """L = diag(1 / A_i) W with A_i the one-third one-ring area."""
    W = cotan_stiffness(mesh)
    return (sparse.diags(1.0 / mesh.vertex_areas) @ W).tocsr()


# ── constrained solves ──────────────────────────────────────────────────────────
@dataclass
class LinearConstraintSet:
    """Pinned values and equality ties for one coordinate of a linear solve."""

    pins: Dict[int, float] = field(default_factory=dict)
    ties: List[Tuple[int, int]] = field(default_factory=list)

    def pin(self, index: int, value: float) -> "LinearConstraintSet":
        index = int(index)
        if index in self.pins and abs(self.pins[index] - value) > 1e-12:
            raise ConstraintError(f"unknown {index} pinned to {self.pins[index]} and {value}")
        self.pins[index] = float(value)
        return self

    def pin_many(self, indices, values) -> "LinearConstraintSet":
        values = np.broadcast_to(np.asarray(values, dtype=np.float64), np.shape(indices))
        for i, v in zip(np.asarray(indices).tolist(), values.tolist()):
            self.pin(i, v)
        return self

    def tie(self, a: int, b: int) -> "LinearConstraintSet":
        self.ties.append((int(a), int(b)))
        return self

    def resolve(self, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Merge tied unknowns and propagate pins.

        Returns ``(group, group_pinned, group_value)``: the group id of every unknown, and per
        group whether it is pinned and to what.
        """
        if self.ties:
            t = np.asarray(self.ties, dtype=np.int64)
            graph = sparse.coo_matrix((np.ones(len(t)), (t[:, 0], t[:, 1])), shape=(n, n))
            n_groups, group = csgraph.connected_components(graph, directed=False)
        else:
            n_groups, group = n, np.arange(n)
        group_pinned = np.zeros(n_groups, dtype=bool)
        group_value = np.zeros(n_groups)
        for i, value in self.pins.items():
            if not 0 <= i < n:
                raise ConstraintError(f"pinned unknown {i} out of range [0, {n})")
            g = group[i]
            if group_pinned[g] and abs(group_value[g] - value) > 1e-12 * max(1.0, abs(value)):
                raise ConstraintError(
                    f"contradictory constraints: unknown {i} tied to a value {group_value[g]} "
                    f"but pinned to {value}"
                )
            group_pinned[g] = True
            group_value[g] = value
        return group, group_pinned, group_value


def solve_constrained(
    A: sparse.spmatrix,
    constraints: Optional[LinearConstraintSet],
    rhs: np.ndarray,
    rtol: float = config.SOLVER_RTOL,
) -> np.ndarray:
    """Solve ``A x = rhs`` with pinned unknowns substituted and tied unknowns merged.

    ``rhs`` may be a vector or an (n, k) block sharing the same constraints. The reduced
    system must be SPD; it is factorised once with a sparse LU.
    """
    A = sparse.csr_matrix(A)
    n = A.shape[0]
    rhs = np.asarray(rhs, dtype=np.float64)
    constraints = constraints or LinearConstraintSet()
    group, group_pinned, group_value = constraints.resolve(n)

    free_groups = np.flatnonzero(~group_pinned)
    column = np.full(len(group_pinned), -1)
    column[free_groups] = np.arange(len(free_groups))
    x_fixed = np.where(group_pinned[group], group_value[group], 0.0)
    is_free = ~group_pinned[group]
    free_rows = np.flatnonzero(is_free)
    P = sparse.csr_matrix(
        (np.ones(len(free_rows)), (free_rows, column[group[free_rows]])),
        shape=(n, len(free_groups)),
    )

    shift = A @ x_fixed
    rhs_eff = rhs - (shift[:, None] if rhs.ndim == 2 else shift)
    if not len(free_groups):
        return np.broadcast_to(x_fixed[:, None], rhs.shape).copy() if rhs.ndim == 2 else x_fixed

    Ar = (P.T @ A @ P).tocsc()
    br = P.T @ rhs_eff
    try:
        y = splu(Ar).solve(br)
    except RuntimeError as exc:
        raise SolverError(f"singular reduced system ({Ar.shape[0]} unknowns): {exc}") from exc
    if not np.all(np.isfinite(y)):
        raise SolverError("reduced system produced non-finite values (singular?)")
    residual = np.linalg.norm(Ar @ y - br)
    scale = max(np.linalg.norm(br), np.linalg.norm(Ar @ y))
    if scale > 0 and residual > rtol * scale:
        raise SolverError(f"relative residual {residual / scale:.2e} exceeds {rtol:.0e}")
    logger.debug("solved %d unknowns (%d pinned groups)", len(free_groups), int(group_pinned.sum()))

    x = P @ y
    return x + (x_fixed[:, None] if rhs.ndim == 2 else x_fixed)
