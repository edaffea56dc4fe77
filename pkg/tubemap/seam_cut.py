"""Shortest boundary-to-boundary seam, cutting a tube into a disk, and gluing fields back.

Flow:
  1. ``shortest_seam``  multi-source Dijkstra from the second loop (every loop vertex starts
     at distance 0), then a greedy walk from the first loop that always takes the smallest
     vertex index among the tight edges. That walk is the lexicographically smallest of the
     shortest paths.
  2. ``cut_along_seam`` duplicates every seam vertex. Faces on the left of the directed seam
     are re-indexed to the copies (copy of seam vertex i gets index n + i).
  3. ``glue`` folds a per-vertex field on the cut mesh back onto the original vertices,
     checking that twins agree (optionally modulo a period).

The cut mesh boundary, walked with the surface on its left, reads

    p -> loop0 -> p' -> seam copies -> q' -> loop1 -> q -> seam copies -> p

so ``side0`` (p ... q) and ``side2pi`` (p' ... q') are the two images of the seam.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from tubemap import config
from tubemap.exceptions import GlueError, SeamError
from tubemap.mesh_core import BoundaryLoop, TriMesh, extract_boundary_loops

logger = logging.getLogger("tubemap.seam_cut")


@dataclass(frozen=True, eq=False)
class CutSeam:
    """Vertex path from loop0 to loop1 and its Euclidean length."""

    vertices: np.ndarray
    length: float

    def __len__(self) -> int:
        return len(self.vertices)


@dataclass(frozen=True, eq=False)
class CutMesh:
    """Disk-topology mesh obtained by cutting a tube along a seam.

    ``original_index[c]`` is the tube vertex of cut vertex ``c``; the first ``n_original``
    cut vertices are the tube vertices themselves. ``side0[i]`` and ``side2pi[i]`` are the two
    cut vertices of seam vertex ``i``, so ``side0[0] == p``, ``side2pi[0] == p'``,
    ``side0[-1] == q`` and ``side2pi[-1] == q'``. ``loop0`` / ``loop1`` hold the cut vertices
    of the two original boundary loops strictly between the corners, in boundary order.
    """

    mesh: TriMesh
    seam: CutSeam
    n_original: int
    original_index: np.ndarray
    side0: np.ndarray
    side2pi: np.ndarray
    loop0: np.ndarray
    loop1: np.ndarray
    boundary: BoundaryLoop

    @property
    def p(self) -> int:
        return int(self.side0[0])

    @property
    def p_prime(self) -> int:
        return int(self.side2pi[0])

    @property
    def q(self) -> int:
        return int(self.side0[-1])

    @property
    def q_prime(self) -> int:
        return int(self.side2pi[-1])

    @property
    def corners(self):
        return self.p, self.p_prime, self.q, self.q_prime

    @property
    def twin_map(self) -> np.ndarray:
        """(k, 2) pairs (x=0 side, x=2pi side), one per seam vertex."""
        return np.column_stack([self.side0, self.side2pi])


def _edge_length_graph(mesh: TriMesh) -> sparse.csr_matrix:
    e = mesh.edges
    lengths = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    n = mesh.n_vertices
    return sparse.csr_matrix(
        (np.concatenate([lengths, lengths]), (np.concatenate([e[:, 0], e[:, 1]]), np.concatenate([e[:, 1], e[:, 0]]))),
        shape=(n, n),
    )


# ── seam search ─────────────────────────────────────────────────────────────────
def shortest_seam(mesh: TriMesh, loop0: BoundaryLoop, loop1: BoundaryLoop) -> CutSeam:
    """Shortest vertex path joining ``loop0`` to ``loop1``; ties go to the lexicographically smallest."""
    start_set = np.asarray(loop0.vertex_indices)
    end_set = np.asarray(loop1.vertex_indices)
    if np.intersect1d(start_set, end_set).size:
        raise SeamError("boundary loops share vertices")

    graph = _edge_length_graph(mesh)
    dist = csgraph.dijkstra(graph, directed=False, indices=end_set, min_only=True)
    best = float(dist[start_set].min())
    if not np.isfinite(best):
        raise SeamError("boundary loops are not connected through the mesh")
    tol = 1e-12 * max(best, 1.0)

    on_end = np.zeros(mesh.n_vertices, dtype=bool)
    on_end[end_set] = True
    current = int(start_set[np.abs(dist[start_set] - best) <= tol].min())
    path = [current]
    while not on_end[current]:
        lo, hi = graph.indptr[current], graph.indptr[current + 1]
        nbrs, lengths = graph.indices[lo:hi], graph.data[lo:hi]
        tight = np.abs(lengths + dist[nbrs] - dist[current]) <= tol
        # strictly decreasing distance rules out zero-progress loops
        tight &= dist[nbrs] < dist[current]
        if not tight.any():
            raise SeamError(f"shortest-path walk stalled at vertex {current}")
        current = int(nbrs[tight].min())
        path.append(current)

    vertices = np.asarray(path, dtype=np.int64)
    length = float(np.linalg.norm(np.diff(mesh.vertices[vertices], axis=0), axis=1).sum())
    logger.debug("seam of %d vertices, length %.6g", len(vertices), length)
    return CutSeam(vertices, length)


# ── cutting ─────────────────────────────────────────────────────────────────────
def _fan_components(mesh: TriMesh, v: int, faces_of_v: np.ndarray, seam_edges: set) -> np.ndarray:
    """Label the faces around ``v`` by the fan pieces left after removing seam edges."""
    local = {int(f): k for k, f in enumerate(faces_of_v)}
    by_edge = {}
    rows, cols = [], []
    for f in faces_of_v:
        for w in mesh.faces[f]:
            w = int(w)
            if w == v or (min(v, w), max(v, w)) in seam_edges:
                continue
            other = by_edge.setdefault(w, int(f))
            if other != f:
                rows.append(local[other])
                cols.append(local[int(f)])
    k = len(faces_of_v)
    graph = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(k, k))
    n_comp, labels = csgraph.connected_components(graph, directed=False)
    if n_comp != 2:
        raise SeamError(f"seam vertex {v} splits its fan into {n_comp} pieces (degenerate flap)")
    return labels


def _face_with_directed_edge(mesh: TriMesh, faces_of_v: np.ndarray, a: int, b: int) -> Optional[int]:
    for f in faces_of_v:
        tri = mesh.faces[f].tolist()
        for k in range(3):
            if tri[k] == a and tri[(k + 1) % 3] == b:
                return int(f)
    return None


def cut_along_seam(mesh: TriMesh, seam: CutSeam) -> CutMesh:
    """Duplicate the seam vertices and re-index the faces on the seam's left to the copies."""
    path = np.asarray(seam.vertices, dtype=np.int64)
    if len(path) < 2:
        raise SeamError("seam needs at least two vertices")
    if len(np.unique(path)) != len(path):
        raise SeamError("seam path is not simple")
    boundary = mesh.boundary_vertex_mask
    if not (boundary[path[0]] and boundary[path[-1]]):
        raise SeamError("seam must start and end on boundary loops")
    touching = path[1:-1][boundary[path[1:-1]]]
    if len(touching):
        raise SeamError(f"seam touches a boundary loop at interior path vertex {int(touching[0])}")

    seam_edges = set()
    for a, b in zip(path[:-1].tolist(), path[1:].tolist()):
        lo, hi = min(a, b), max(a, b)
        if not mesh.adjacency[lo, hi]:
            raise SeamError(f"seam vertices {a} and {b} do not share an edge")
        seam_edges.add((lo, hi))

    n = mesh.n_vertices
    faces = mesh.faces.copy()
    for i, v in enumerate(path.tolist()):
        faces_of_v = mesh.vertex_faces[v]
        labels = _fan_components(mesh, v, faces_of_v, seam_edges)
        a, b = (v, int(path[i + 1])) if i + 1 < len(path) else (int(path[i - 1]), v)
        left_face = _face_with_directed_edge(mesh, faces_of_v, a, b)
        if left_face is None:
            raise SeamError(f"no face on the left of seam edge ({a}, {b})")
        left_label = labels[np.flatnonzero(faces_of_v == left_face)[0]]
        for f in faces_of_v[labels == left_label]:
            faces[f][faces[f] == v] = n + i

    vertices = np.vstack([mesh.vertices, mesh.vertices[path]])
    try:
        cut = TriMesh(vertices, faces)
    except ValueError as exc:
        raise SeamError(f"cutting produced an invalid mesh: {exc}") from exc
    loops = extract_boundary_loops(cut)
    if len(loops) != 1 or cut.euler_characteristic != 1:
        raise SeamError(
            f"cut mesh is not a disk ({len(loops)} boundary loops, chi={cut.euler_characteristic})"
        )
    original_index = np.concatenate([np.arange(n), path])
    copies = n + np.arange(len(path))
    return _label_cut_boundary(cut, seam, n, original_index, path, copies, loops[0], mesh)


def _label_cut_boundary(cut, seam, n, original_index, path, copies, loop, mesh) -> CutMesh:
    walk = loop.vertex_indices
    pos = {int(c): k for k, c in enumerate(walk)}
    m = len(walk)
    seam_vertex = np.zeros(cut.n_vertices, dtype=bool)
    seam_vertex[path] = True
    seam_vertex[copies] = True

    # p: the copy of seam[0] whose successor leaves the seam along the first loop
    start_pair = (int(path[0]), int(copies[0]))
    p = next(c for c in start_pair if not seam_vertex[walk[(pos[c] + 1) % m]])
    p_prime = start_pair[1] if p == start_pair[0] else start_pair[0]
    end_pair = (int(path[-1]), int(copies[-1]))

    def run(start: int, stop_set) -> np.ndarray:
        out = [start]
        k = pos[start]
        while True:
            k = (k + 1) % m
            out.append(int(walk[k]))
            if int(walk[k]) in stop_set:
                return np.asarray(out, dtype=np.int64)

    bottom = run(p, {p_prime})
    right = run(p_prime, set(end_pair))
    q_prime = int(right[-1])
    q = end_pair[1] if q_prime == end_pair[0] else end_pair[0]
    top = run(q_prime, {q})
    left = run(q, {p})
    if len(bottom) + len(right) + len(top) + len(left) - 4 != m:
        raise SeamError("cut boundary does not split into four sides")

    side2pi = right
    side0 = left[::-1]
    if len(side0) != len(path) or len(side2pi) != len(path):
        raise SeamError("cut boundary sides do not match the seam length")
    if not np.array_equal(original_index[side0], original_index[side2pi]):
        raise SeamError("seam twins are misaligned along the cut boundary")
    logger.debug(
        "cut mesh: %d vertices, corners p=%d p'=%d q=%d q'=%d", cut.n_vertices, p, p_prime, q, q_prime
    )
    return CutMesh(
        mesh=cut,
        seam=seam,
        n_original=n,
        original_index=original_index,
        side0=side0,
        side2pi=side2pi,
        loop0=bottom[1:-1],
        loop1=top[1:-1],
        boundary=loop,
    )


# ── gluing ──────────────────────────────────────────────────────────────────────
def glue(
    cut: CutMesh,
    field: np.ndarray,
    period: Optional[float] = None,
    tol: float = config.GLUE_TOL,
) -> np.ndarray:
    """Per-vertex values on the cut mesh -> values on the original mesh.

    Twins must agree within ``tol``; with ``period`` they are compared modulo the period and
    the glued field is reduced into ``[0, period)``.
    """
    field = np.asarray(field)
    if len(field) != cut.mesh.n_vertices:
        raise GlueError(f"field has {len(field)} values, cut mesh has {cut.mesh.n_vertices} vertices")
    diff = field[cut.side0] - field[cut.side2pi]
    if period is not None:
        diff = diff - period * np.round(diff / period)
    worst = float(np.max(np.abs(diff))) if diff.size else 0.0
    if worst > tol:
        bad = int(np.argmax(np.abs(diff).reshape(len(diff), -1).max(axis=1)))
        raise GlueError(
            f"seam twins disagree by {worst:.3g} at seam vertex {int(cut.seam.vertices[bad])} (tol {tol:g})"
        )
    glued = np.array(field[: cut.n_original], copy=True)
    if period is not None:
        glued = np.mod(glued, period)
        glued[glued >= period] = 0.0
    return glued
