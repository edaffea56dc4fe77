import numpy as np
import pytest

from tubemap.free_boundary import (
    ExtensionConfig,
    cycle_laplacian,
    extend_mesh,
    parameterize_free,
    raw_extend_ring,
    smooth_ring,
    stitch_band,
)
from tubemap.mesh_core import TriMesh, extract_boundary_loops


def _bottom_loop(mesh):
    return next(lp for lp in extract_boundary_loops(mesh) if 0 in lp.vertex_indices)


@pytest.mark.parametrize("kwargs", [{"K": 0}, {"K": 1.5}, {"tau": -0.1}, {"tau": 1.5}, {"omega": -1.0}])
def test_extension_config_validation(kwargs):
    with pytest.raises(ValueError):
        ExtensionConfig(**kwargs)


def test_raw_extension_of_cylinder_continues_the_wall(cylinder):
    """With tau = 0 the new ring continues the cylinder wall below the bottom loop."""
    loop = _bottom_loop(cylinder)
    new = raw_extend_ring(cylinder, loop, tau=0.0)
    assert new.shape == (len(loop), 3)
    np.testing.assert_allclose(np.hypot(new[:, 0], new[:, 1]), 1.0, atol=1e-12)
    assert np.all(new[:, 2] < 0.0)
    np.testing.assert_allclose(new[:, 2], new[0, 2])


def test_normal_blend_moves_ring_outward(cylinder):
    loop = _bottom_loop(cylinder)
    new = raw_extend_ring(cylinder, loop, tau=0.5)
    assert np.all(np.hypot(new[:, 0], new[:, 1]) > 1.0)


def test_cycle_laplacian():
    L = cycle_laplacian(6).toarray()
    np.testing.assert_array_equal(L, L.T)
    np.testing.assert_array_equal(L.sum(axis=1), 0.0)
    assert L[0, 5] == -1.0 and L[0, 1] == -1.0 and L[0, 0] == 2.0


def test_smooth_ring():
    """omega = 0 keeps the raw ring; omega > 0 keeps the centroid and damps roughness."""
    rng = np.random.default_rng(5)
    angle = np.linspace(0.0, 2.0 * np.pi, 20, endpoint=False)
    ring = np.column_stack([np.cos(angle), np.sin(angle), np.zeros(20)]) + 0.05 * rng.normal(size=(20, 3))
    same = smooth_ring(ring, 0.0)
    np.testing.assert_array_equal(same, ring)
    assert same is not ring
    smooth = smooth_ring(ring, 0.5)
    np.testing.assert_allclose(smooth.mean(axis=0), ring.mean(axis=0), atol=1e-12)
    rough = lambda x: np.linalg.norm(cycle_laplacian(20) @ x)
    assert rough(smooth) < rough(ring)
    with pytest.raises(ValueError):
        smooth_ring(ring[:2], 0.5)


def test_stitch_band():
    faces = stitch_band(np.array([0, 1, 2, 3]), np.array([4, 5, 6, 7]))
    assert faces.shape == (8, 3)
    np.testing.assert_array_equal(faces[:2], [[1, 0, 4], [1, 4, 5]])
    np.testing.assert_array_equal(faces[-2:], [[0, 3, 7], [0, 7, 4]])


@pytest.mark.parametrize("K", [1, 2])
def test_extend_mesh_keeps_annulus_topology(cylinder, K):
    """Each layer adds one ring per loop; original vertices stay a prefix."""
    record = extend_mesh(cylinder, ExtensionConfig(K=K, omega=0.5))
    ext = record.mesh
    assert isinstance(ext, TriMesh)
    assert ext.n_vertices == cylinder.n_vertices + 2 * K * 16
    assert ext.n_faces == cylinder.n_faces + 2 * K * 2 * 16
    assert ext.euler_characteristic == 0
    assert len(extract_boundary_loops(ext)) == 2
    np.testing.assert_array_equal(ext.vertices[: cylinder.n_vertices], cylinder.vertices)
    assert record.n_original == cylinder.n_vertices
    assert len(record.rings) == 2
    assert set(record.timings) == {"raw_extension", "ring_smoothing"}


def test_parameterize_free(cylinder):
    """The free-boundary result lives on the original vertices and reports its extension."""
    tube, diag = parameterize_free(cylinder, ExtensionConfig(K=1, omega=0.5))
    assert len(tube) == cylinder.n_vertices
    assert np.all((tube.z >= 0.0) & (tube.z <= tube.L_star))
    assert diag["extension_layers"] == 1
    assert diag["n_extended_vertices"] == cylinder.n_vertices + 32
    assert np.isfinite(diag["distortion_restricted"])
    assert {"raw_extension", "ring_smoothing", "restriction", "seam_correction"} <= set(diag["timings"])
    # the original loops no longer sit on z = 0 / z = L*
    bottom = _bottom_loop(cylinder).vertex_indices
    assert tube.z[bottom].min() > 0.0


def test_pure_normal_extension(cylinder):
    """tau = 1 steps straight along the outward normal, staying in the loop's plane."""
    new = raw_extend_ring(cylinder, _bottom_loop(cylinder), tau=1.0)
    np.testing.assert_allclose(new[:, 2], 0.0, atol=1e-12)
    radius = np.hypot(new[:, 0], new[:, 1])
    assert np.all(radius > 1.0)
    np.testing.assert_allclose(radius, radius[0])


def test_constant_ring_is_a_smoothing_fixed_point():
    ring = np.tile([0.3, -1.0, 2.0], (7, 1))
    np.testing.assert_allclose(smooth_ring(ring, 2.0), ring, atol=1e-12)
