import numpy as np
import pytest

from conftest import make_square
from tubemap.exceptions import ConstraintError, DegenerateFaceError, NonAdmissibleError
from tubemap.mesh_core import LinearConstraintSet, TriMesh, cotan_stiffness, solve_constrained
from tubemap.qc_solver import (
    PlanarEmbedding,
    admissible_mu,
    alpha_coefficients,
    beltrami_coefficient,
    compose_beltrami,
    face_flatten,
    lbs_solve,
    lbs_stiffness,
    map_differentials,
)


@pytest.fixture
def square():
    return make_square(n=7)


def _plane(mesh):
    return PlanarEmbedding(mesh.vertices[:, :2], mesh.faces)


def _boundary_pins(mesh, target):
    b = np.flatnonzero(mesh.boundary_vertex_mask)
    cx = LinearConstraintSet().pin_many(b, target[b, 0])
    cy = LinearConstraintSet().pin_many(b, target[b, 1])
    return cx, cy


# ── Beltrami coefficients ───────────────────────────────────────────────────────
def test_identity_and_similarity_have_zero_mu(square):
    src = _plane(square)
    rot = np.array([[0.6, -0.8], [0.8, 0.6]]) * 2.5
    for coords in (src.coords, src.coords @ rot.T + [3.0, -1.0]):
        mu = beltrami_coefficient(src, PlanarEmbedding(coords, square.faces))
        np.testing.assert_allclose(np.abs(mu.mu), 0.0, atol=1e-12)
        assert mu.admissible


def test_affine_map_mu(square):
    """z + mu0 * conj(z) has constant Beltrami coefficient mu0."""
    src = _plane(square)
    mu0 = 0.2 - 0.1j
    w = src.as_complex() + mu0 * np.conj(src.as_complex())
    mu = beltrami_coefficient(src, PlanarEmbedding.from_complex(w, square.faces))
    np.testing.assert_allclose(mu.mu, mu0, atol=1e-12)


def test_orientation_reversing_map_is_not_admissible(square):
    src = _plane(square)
    mirrored = src.coords * [1.0, -1.0]
    mu = beltrami_coefficient(src, PlanarEmbedding(mirrored, square.faces))
    assert not mu.admissible
    fz, fzbar = map_differentials(src, PlanarEmbedding(mirrored, square.faces))
    np.testing.assert_allclose(np.abs(fz), 0.0, atol=1e-12)
    np.testing.assert_allclose(np.abs(fzbar), 1.0)


def test_face_flatten_is_isometric(cylinder):
    frames = face_flatten(cylinder)
    v = cylinder.vertices[cylinder.faces]
    for a, b in ((0, 1), (1, 2), (2, 0)):
        np.testing.assert_allclose(
            np.linalg.norm(frames[:, a] - frames[:, b], axis=1), np.linalg.norm(v[:, a] - v[:, b], axis=1)
        )
    assert np.all(frames[:, 2, 1] > 0)


def test_degenerate_source_frame():
    frames = np.array([[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]])
    with pytest.raises(DegenerateFaceError):
        map_differentials(frames, frames)


def test_admissibility_rule():
    mu = np.array([0.5, 1.0, 2.0j])
    with pytest.raises(NonAdmissibleError):
        admissible_mu(mu, strict=True)
    clamped, n = admissible_mu(mu, strict=False)
    assert n == 2
    assert np.all(np.abs(clamped) < 1.0)
    assert clamped[2] / abs(clamped[2]) == pytest.approx(1j)
    with pytest.raises(NonAdmissibleError):
        admissible_mu(np.array([np.nan]), strict=False)


def test_alpha_matrix_has_unit_determinant():
    mu = np.random.default_rng(3).uniform(-0.6, 0.6, 50) + 1j * np.random.default_rng(4).uniform(-0.6, 0.6, 50)
    a1, a2, a3 = alpha_coefficients(mu)
    np.testing.assert_allclose(a1 * a3 - a2**2, 1.0, rtol=1e-12)
    assert np.all(a1 > 0) and np.all(a3 > 0)


def test_compose_beltrami():
    mu_f = np.array([0.3 + 0.1j])
    phase = np.array([np.exp(0.4j)])
    np.testing.assert_allclose(compose_beltrami(mu_f, phase, np.zeros(1)), mu_f)
    np.testing.assert_allclose(compose_beltrami(np.zeros(1), phase, mu_f), phase * mu_f)
    with pytest.raises(NonAdmissibleError):
        compose_beltrami(np.array([1.0]), phase, np.zeros(1))


# ── Linear Beltrami Solver ──────────────────────────────────────────────────────
def test_zero_mu_stiffness_is_cotan(square):
    """With mu = 0 the LBS operator is the (positive) cotangent stiffness."""
    K = lbs_stiffness(square.faces, face_flatten(square), np.zeros(square.n_faces), square.n_vertices)
    W = cotan_stiffness(square)
    assert abs(K + W).max() < 1e-10


def test_zero_mu_solve_is_harmonic(flat_disk):
    """LBS with mu = 0 reproduces the cotangent-harmonic extension."""
    b = np.flatnonzero(flat_disk.boundary_vertex_mask)
    x, y = flat_disk.vertices[:, 0], flat_disk.vertices[:, 1]
    target = np.column_stack([x**2 - y**2 + x * y, np.sin(x) + y])
    cx = LinearConstraintSet().pin_many(b, target[b, 0])
    cy = LinearConstraintSet().pin_many(b, target[b, 1])
    out = lbs_solve(flat_disk, face_flatten(flat_disk), np.zeros(flat_disk.n_faces), (cx, cy))
    K = -cotan_stiffness(flat_disk)
    zeros = np.zeros(flat_disk.n_vertices)
    np.testing.assert_allclose(out.coords[:, 0], solve_constrained(K, cx, zeros), atol=1e-10)
    np.testing.assert_allclose(out.coords[:, 1], solve_constrained(K, cy, zeros), atol=1e-10)


def test_affine_map_is_reproduced(square):
    """Constant mu = 1/3 with affine boundary values gives the affine map inside."""
    src = _plane(square)
    w = src.as_complex() + np.conj(src.as_complex()) / 3.0
    target = np.column_stack([w.real, w.imag])
    out = lbs_solve(square, src, np.full(square.n_faces, 1.0 / 3.0), _boundary_pins(square, target))
    np.testing.assert_allclose(out.coords, target, atol=1e-10)


def test_map_is_recovered_from_its_own_mu(square):
    """Solving with the coefficient of a map, pinned on the boundary, returns that map."""
    src = _plane(square)
    x, y = src.coords[:, 0], src.coords[:, 1]
    target = np.column_stack([x + 0.15 * np.sin(2.0 * y), y + 0.1 * x**2 + 0.05 * x * y])
    image = PlanarEmbedding(target, square.faces)
    mu = beltrami_coefficient(src, image)
    assert mu.admissible
    out = lbs_solve(square.faces, src, mu, _boundary_pins(square, target), n_vertices=square.n_vertices)
    np.testing.assert_allclose(out.coords, target, atol=1e-8)
    assert out.flipped_faces == 0


def test_unpinned_coordinate_is_rejected(square):
    src = _plane(square)
    cx = LinearConstraintSet().pin(0, 0.0)
    with pytest.raises(ConstraintError):
        lbs_solve(square, src, np.zeros(square.n_faces), (cx, LinearConstraintSet()))


def test_strict_solve_rejects_large_mu(square):
    src = _plane(square)
    cx, cy = _boundary_pins(square, src.coords)
    mu = np.zeros(square.n_faces, dtype=complex)
    mu[0] = 1.0
    with pytest.raises(NonAdmissibleError):
        lbs_solve(square, src, mu, (cx, cy), strict=True)


def test_composition_with_a_cancelling_map():
    """g undoing the distortion of f gives a conformal composition."""
    mu_f = np.array([0.4 + 0.2j])
    np.testing.assert_allclose(compose_beltrami(mu_f, np.ones(1), -mu_f), 0.0, atol=1e-15)


def test_face_flatten_of_a_345_triangle():
    frames = face_flatten(TriMesh(np.array([[0.0, 0, 0], [0, 3, 0], [0, 3, 4]]), np.array([[0, 1, 2]])))
    np.testing.assert_allclose(frames[0], [[0, 0], [3, 0], [3, 4]], atol=1e-12)
