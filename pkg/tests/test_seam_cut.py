import math

import numpy as np
import pytest
from scipy.sparse import csgraph

from conftest import make_cylinder, make_square
from tubemap.exceptions import GlueError, SeamError
from tubemap.mesh_core import BoundaryLoop, TriMesh, extract_boundary_loops
from tubemap.seam_cut import _edge_length_graph, cut_along_seam, glue, shortest_seam
from tubemap.synth import TubeSpec, generate_tube


@pytest.fixture
def noisy_tube():
    return generate_tube(TubeSpec("noisy", family="wavy", n_u=12, n_z=6, wave_amplitude=0.15, noise=0.3, seed=7))


def _loops(mesh):
    loop0, loop1 = extract_boundary_loops(mesh)
    return loop0, loop1


def test_cylinder_seam_is_the_lowest_index_generator(cylinder):
    """On the grid cylinder every vertical line is shortest; ties pick vertex 0 upward."""
    loop0, loop1 = _loops(cylinder)
    if loop0.vertex_indices.min() != 0:
        loop0, loop1 = loop1, loop0
    seam = shortest_seam(cylinder, loop0, loop1)
    np.testing.assert_array_equal(seam.vertices, 16 * np.arange(8))
    assert seam.length == pytest.approx(2.0)


def test_seam_length_matches_all_pairs_oracle(noisy_tube):
    """The seam is as short as the best loop-to-loop pair from Floyd-Warshall."""
    loop0, loop1 = _loops(noisy_tube)
    seam = shortest_seam(noisy_tube, loop0, loop1)
    dist = csgraph.floyd_warshall(_edge_length_graph(noisy_tube), directed=False)
    best = dist[np.ix_(loop0.vertex_indices, loop1.vertex_indices)].min()
    assert seam.length == pytest.approx(best, rel=1e-9)
    assert seam.vertices[0] in loop0.vertex_indices
    assert seam.vertices[-1] in loop1.vertex_indices
    # consecutive seam vertices share an edge
    for a, b in zip(seam.vertices[:-1], seam.vertices[1:]):
        assert noisy_tube.adjacency[a, b]
    # the start is the smallest loop0 vertex attaining the optimum
    starts = [v for v in loop0.vertex_indices if dist[v, loop1.vertex_indices].min() <= best * (1 + 1e-12)]
    assert seam.vertices[0] == min(starts)


def test_loops_sharing_vertices(cylinder):
    loop0, _ = _loops(cylinder)
    with pytest.raises(SeamError):
        shortest_seam(cylinder, loop0, loop0)


def test_cut_gives_a_disk(cylinder):
    """Cutting duplicates the seam vertices and leaves one boundary loop."""
    loop0, loop1 = _loops(cylinder)
    seam = shortest_seam(cylinder, loop0, loop1)
    cut = cut_along_seam(cylinder, seam)
    assert cut.mesh.n_vertices == cylinder.n_vertices + len(seam)
    assert cut.mesh.euler_characteristic == 1
    assert len(extract_boundary_loops(cut.mesh)) == 1
    assert len(set(cut.corners)) == 4
    np.testing.assert_array_equal(cut.original_index[cut.side0], seam.vertices)
    np.testing.assert_array_equal(cut.original_index[cut.side2pi], seam.vertices)
    assert len(cut.loop0) == len(loop0) - 1
    assert len(cut.loop1) == len(loop1) - 1


def test_glue_undoes_cut(noisy_tube):
    """Gluing the original index field returns the identity."""
    loop0, loop1 = _loops(noisy_tube)
    cut = cut_along_seam(noisy_tube, shortest_seam(noisy_tube, loop0, loop1))
    glued = glue(cut, cut.original_index.astype(float))
    np.testing.assert_array_equal(glued, np.arange(noisy_tube.n_vertices))


def test_glue_modulo_period(cylinder):
    """Twins that differ by a full period glue; values are reduced into [0, period)."""
    loop0, loop1 = _loops(cylinder)
    cut = cut_along_seam(cylinder, shortest_seam(cylinder, loop0, loop1))
    field = np.full(cut.mesh.n_vertices, 1.0)
    field[cut.side0] = 0.0
    field[cut.side2pi] = 2.0 * math.pi
    glued = glue(cut, field, period=2.0 * math.pi)
    assert np.all((glued >= 0.0) & (glued < 2.0 * math.pi))
    np.testing.assert_allclose(glued[cut.original_index[cut.side0]], 0.0, atol=1e-12)
    with pytest.raises(GlueError):
        glue(cut, field)


def test_glue_rejects_wrong_length(cylinder):
    loop0, loop1 = _loops(cylinder)
    cut = cut_along_seam(cylinder, shortest_seam(cylinder, loop0, loop1))
    with pytest.raises(GlueError):
        glue(cut, np.zeros(cylinder.n_vertices))


def _oracle_path(mesh, loop0, loop1):
    """Shortest loop-to-loop vertex path from Floyd-Warshall predecessors."""
    dist, pred = csgraph.floyd_warshall(_edge_length_graph(mesh), directed=False, return_predecessors=True)
    block = dist[np.ix_(loop0, loop1)]
    i, j = np.unravel_index(np.argmin(block), block.shape)
    a, b = int(loop0[i]), int(loop1[j])
    path = [b]
    while path[-1] != a:
        path.append(int(pred[a, path[-1]]))
    return path[::-1], float(block.min())


def _loop(vertices):
    vertices = np.asarray(vertices, dtype=np.int64)
    return BoundaryLoop(vertices, np.ones(len(vertices)))


@pytest.mark.parametrize("seed", range(5))
def test_seam_path_matches_all_pairs_oracle(seed):
    """Jittered 8 x 6 cylinders (48 vertices) have a unique shortest path; the seam is that path."""
    base = make_cylinder(n_u=8, n_z=6)
    rng = np.random.default_rng(seed)
    mesh = TriMesh(base.vertices + rng.uniform(-0.05, 0.05, base.vertices.shape), base.faces)
    loop0, loop1 = _loops(mesh)
    seam = shortest_seam(mesh, loop0, loop1)
    path, length = _oracle_path(mesh, loop0.vertex_indices, loop1.vertex_indices)
    assert seam.vertices.tolist() == path
    assert seam.length == pytest.approx(length, rel=1e-12)


def test_dumbbell_seam_is_the_bridge_edge():
    vertices = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 2.0, 0.0], [0.5, -2.0, 0.0]])
    mesh = TriMesh(vertices, np.array([[0, 1, 2], [1, 0, 3]]))
    seam = shortest_seam(mesh, _loop([0]), _loop([1]))
    np.testing.assert_array_equal(seam.vertices, [0, 1])
    assert seam.length == pytest.approx(1.0)


def test_seam_detours_around_a_raised_block():
    """A tall block in the middle of a 7 x 7 sheet forces the path around it."""
    base = make_square(n=7)
    vertices = base.vertices.copy()
    vertices[:, :2] += np.random.default_rng(3).uniform(-0.01, 0.01, (base.n_vertices, 2))
    block = [j * 7 + i for j in range(2, 5) for i in range(2, 5)]
    vertices[block, 2] = 2.0
    mesh = TriMesh(vertices, base.faces)
    bottom, top = [2, 3, 4], [44, 45, 46]
    seam = shortest_seam(mesh, _loop(bottom), _loop(top))
    path, length = _oracle_path(mesh, np.array(bottom), np.array(top))
    assert seam.vertices.tolist() == path
    assert seam.length == pytest.approx(length, rel=1e-12)
    assert not set(path) & set(block)
