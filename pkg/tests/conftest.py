"""Small procedural meshes shared by the test modules."""
from __future__ import annotations

import math

import numpy as np
import pytest

from tubemap.mesh_core import TriMesh


def make_cylinder(n_u: int = 16, n_z: int = 8, height: float = 2.0, radius: float = 1.0) -> TriMesh:
    """Open cylinder grid, vertex (i around, j along) at index j * n_u + i, normals outward."""
    angle = 2.0 * math.pi * np.arange(n_u) / n_u
    z = np.linspace(0.0, height, n_z)
    vertices = np.array([[radius * math.cos(a), radius * math.sin(a), h] for h in z for a in angle])
    faces = []
    for j in range(n_z - 1):
        for i in range(n_u):
            v00 = j * n_u + i
            v10 = j * n_u + (i + 1) % n_u
            faces += [(v00, v10, v10 + n_u), (v00, v10 + n_u, v00 + n_u)]
    return TriMesh(vertices, np.array(faces))


def make_square(n: int = 9, size: float = 1.0) -> TriMesh:
    """Flat n x n grid on [0, size]^2 in the z = 0 plane, normals +z."""
    xs = np.linspace(0.0, size, n)
    vertices = np.array([[x, y, 0.0] for y in xs for x in xs])
    faces = []
    for j in range(n - 1):
        for i in range(n - 1):
            v00 = j * n + i
            faces += [(v00, v00 + 1, v00 + n + 1), (v00, v00 + n + 1, v00 + n)]
    return TriMesh(vertices, np.array(faces))


def make_disk(n_rings: int = 4, n_around: int = 12) -> TriMesh:
    """Flat unit disk: centre vertex plus concentric rings of equal vertex count."""
    angle = 2.0 * math.pi * np.arange(n_around) / n_around
    vertices = [[0.0, 0.0, 0.0]]
    for k in range(1, n_rings + 1):
        r = k / n_rings
        vertices += [[r * math.cos(a), r * math.sin(a), 0.0] for a in angle]
    faces = []
    for i in range(n_around):
        faces.append((0, 1 + i, 1 + (i + 1) % n_around))
    for k in range(1, n_rings):
        inner = 1 + (k - 1) * n_around
        outer = 1 + k * n_around
        for i in range(n_around):
            a0, a1 = inner + i, inner + (i + 1) % n_around
            b0, b1 = outer + i, outer + (i + 1) % n_around
            faces += [(a0, b0, b1), (a0, b1, a1)]
    return TriMesh(np.array(vertices), np.array(faces))


@pytest.fixture
def cylinder() -> TriMesh:
    return make_cylinder()


@pytest.fixture
def flat_square() -> TriMesh:
    return make_square()


@pytest.fixture
def flat_disk() -> TriMesh:
    return make_disk()


@pytest.fixture
def tetrahedron() -> TriMesh:
    vertices = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    faces = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return TriMesh(vertices, faces)
