"""Discrete Beltrami coefficients and the Linear Beltrami Solver.

A piecewise-linear map is described per face: the affine map from a 2D source frame of the
face to its image triangle has partials (u_x, u_y, v_x, v_y), and

    f_z    = ((u_x + v_y) + i (v_x - u_y)) / 2
    f_zbar = ((u_x - v_y) + i (v_x + u_y)) / 2
    mu     = f_zbar / f_z

``lbs_solve`` goes the other way: given mu on every face (expressed in the same source
frames) and enough pinned values, it solves the two elliptic systems div(A grad u) = 0 and
div(A grad v) = 0 with the per-face coefficient matrix

    A = [[alpha1, alpha2], [alpha2, alpha3]],  det A = 1.

With mu = 0 the assembled operator is exactly the cotangent stiffness.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy import sparse

from tubemap import config
from tubemap.exceptions import ConstraintError, DegenerateFaceError, NonAdmissibleError
from tubemap.mesh_core import LinearConstraintSet, TriMesh, check_nondegenerate, solve_constrained

logger = logging.getLogger("tubemap.qc_solver")


@dataclass(frozen=True, eq=False)
class PlanarEmbedding:
    """Per-vertex 2D coordinates on a fixed face connectivity."""

    coords: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError(f"planar coordinates must have shape (n, 2), got {coords.shape}")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "faces", np.asarray(self.faces, dtype=np.int64))

    @classmethod
    def from_complex(cls, w: np.ndarray, faces: np.ndarray) -> "PlanarEmbedding":
        return cls(np.column_stack([np.real(w), np.imag(w)]), faces)

    @property
    def n_vertices(self) -> int:
        return len(self.coords)

    def as_complex(self) -> np.ndarray:
        return self.coords[:, 0] + 1j * self.coords[:, 1]

    def face_frames(self) -> np.ndarray:
        """Image triangles, shape (m, 3, 2)."""
        return self.coords[self.faces]

    @property
    def signed_areas(self) -> np.ndarray:
        t = self.face_frames()
        e1, e2 = t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def flipped_faces(self) -> int:
        """Number of faces with negative signed area."""
        return int((self.signed_areas < 0).sum())


@dataclass(frozen=True, eq=False)
class BeltramiField:
    """Per-face Beltrami coefficient together with the source frames it is expressed in."""

    mu: np.ndarray
    frames: np.ndarray

    @property
    def admissible(self) -> bool:
        return bool(np.all(np.isfinite(self.mu)) and np.all(np.abs(self.mu) < 1.0))

    @property
    def abs(self) -> np.ndarray:
        return np.abs(self.mu)


Frames = Union[np.ndarray, PlanarEmbedding, TriMesh]


def face_flatten(mesh: TriMesh) -> np.ndarray:
    """Isometric 2D frame per face: vertex 0 at the origin, vertex 1 on +x, vertex 2 above."""
    check_nondegenerate(mesh)
    v = mesh.vertices[mesh.faces]
    e1 = v[:, 1] - v[:, 0]
    e2 = v[:, 2] - v[:, 0]
    len1 = np.linalg.norm(e1, axis=1)
    xhat = e1 / len1[:, None]
    x2 = np.einsum("ij,ij->i", e2, xhat)
    y2 = np.linalg.norm(np.cross(xhat, e2), axis=1)
    frames = np.zeros((mesh.n_faces, 3, 2))
    frames[:, 1, 0] = len1
    frames[:, 2, 0] = x2
    frames[:, 2, 1] = y2
    return frames


def _as_frames(source: Frames) -> np.ndarray:
    if isinstance(source, TriMesh):
        return face_flatten(source)
    if isinstance(source, PlanarEmbedding):
        return source.face_frames()
    frames = np.asarray(source, dtype=np.float64)
    if frames.ndim != 3 or frames.shape[1:] != (3, 2):
        raise ValueError(f"face frames must have shape (m, 3, 2), got {frames.shape}")
    return frames


def _edge_matrices(frames: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Columns (p1 - p0, p2 - p0) per face, shape (m, 2, 2), and their determinants."""
    S = np.stack([frames[:, 1] - frames[:, 0], frames[:, 2] - frames[:, 0]], axis=2)
    return S, S[:, 0, 0] * S[:, 1, 1] - S[:, 0, 1] * S[:, 1, 0]


def map_differentials(source_frames: Frames, image: Frames) -> Tuple[np.ndarray, np.ndarray]:
    """Per-face (f_z, f_zbar) of the affine map from source frames onto image triangles."""
    src = _as_frames(source_frames)
    img = _as_frames(image)
    if src.shape != img.shape:
        raise ValueError(f"source has {len(src)} faces, image has {len(img)}")
    S, det = _edge_matrices(src)
    scale = np.abs(det).max() if len(det) else 1.0
    bad = np.flatnonzero(np.abs(det) <= config.DEGENERATE_AREA_RATIO * scale)
    if len(bad):
        raise DegenerateFaceError(f"degenerate source face {int(bad[0])}", int(bad[0]))
    T, _ = _edge_matrices(img)
    S_inv = np.empty_like(S)
    S_inv[:, 0, 0] = S[:, 1, 1]
    S_inv[:, 0, 1] = -S[:, 0, 1]
    S_inv[:, 1, 0] = -S[:, 1, 0]
    S_inv[:, 1, 1] = S[:, 0, 0]
    J = np.einsum("mij,mjk->mik", T, S_inv / det[:, None, None])
    ux, uy, vx, vy = J[:, 0, 0], J[:, 0, 1], J[:, 1, 0], J[:, 1, 1]
    fz = 0.5 * ((ux + vy) + 1j * (vx - uy))
    fzbar = 0.5 * ((ux - vy) + 1j * (vx + uy))
    return fz, fzbar


def beltrami_coefficient(source_frames: Frames, image: Frames) -> BeltramiField:
    """mu = f_zbar / f_z per face. Faces with f_z = 0 get mu = inf."""
    src = _as_frames(source_frames)
    fz, fzbar = map_differentials(src, image)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(fz != 0, fzbar / np.where(fz != 0, fz, 1.0), np.inf + 0j)
    field = BeltramiField(mu, src)
    if not field.admissible:
        logger.debug("beltrami field non-admissible on %d faces", int((~(np.abs(mu) < 1)).sum()))
    return field


def admissible_mu(mu: np.ndarray, strict: bool = True) -> Tuple[np.ndarray, int]:
    """Apply the admissibility rule; returns the (possibly clamped) field and the clamp count.

    Non-finite values are always rejected. Finite values with |mu| >= MU_CLAMP are rejected in
    strict mode, otherwise pulled back radially to modulus MU_CLAMP.
    """
    mu = np.asarray(mu, dtype=np.complex128)
    if not np.all(np.isfinite(mu)):
        face = int(np.flatnonzero(~np.isfinite(mu))[0])
        raise NonAdmissibleError(f"non-finite Beltrami coefficient on face {face}")
    modulus = np.abs(mu)
    over = modulus >= config.MU_CLAMP
    if not over.any():
        return mu, 0
    if strict:
        face = int(np.flatnonzero(over)[0])
        raise NonAdmissibleError(f"|mu| = {modulus[face]:.6g} >= 1 on face {face}")
    clamped = mu.copy()
    clamped[over] = mu[over] / modulus[over] * config.MU_CLAMP
    logger.warning("clamped |mu| on %d faces to %.8f", int(over.sum()), config.MU_CLAMP)
    return clamped, int(over.sum())


def alpha_coefficients(mu: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    mu = np.asarray(mu, dtype=np.complex128)
    re, im = mu.real, mu.imag
    denom = 1.0 - np.abs(mu) ** 2
    a1 = ((re - 1.0) ** 2 + im**2) / denom
    a2 = -2.0 * im / denom
    a3 = ((re + 1.0) ** 2 + im**2) / denom
    return a1, a2, a3


def lbs_stiffness(faces: np.ndarray, frames: np.ndarray, mu: np.ndarray, n_vertices: int) -> sparse.csr_matrix:
    """Generalised stiffness K_ij = sum over faces of area * grad(phi_i)^T A grad(phi_j)."""
    frames = _as_frames(frames)
    a1, a2, a3 = alpha_coefficients(mu)
    _, det = _edge_matrices(frames)
    area = 0.5 * np.abs(det)
    # rotated opposite edge: 2 * area * grad(phi_k), up to the orientation sign
    sign = np.sign(det)
    grads = []
    for k in range(3):
        e = frames[:, (k + 2) % 3] - frames[:, (k + 1) % 3]
        grads.append(sign[:, None] * np.column_stack([-e[:, 1], e[:, 0]]))
    rows, cols, vals = [], [], []
    for i in range(3):
        gi = grads[i]
        for j in range(3):
            gj = grads[j]
            quad = a1 * gi[:, 0] * gj[:, 0] + a2 * (gi[:, 0] * gj[:, 1] + gi[:, 1] * gj[:, 0]) + a3 * gi[:, 1] * gj[:, 1]
            rows.append(faces[:, i])
            cols.append(faces[:, j])
            vals.append(quad / (4.0 * area))
    K = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_vertices, n_vertices)
    )
    return K.tocsr()


def lbs_solve(
    mesh: Union[TriMesh, np.ndarray],
    frames: Frames,
    mu: Union[BeltramiField, np.ndarray],
    constraints: Tuple[LinearConstraintSet, LinearConstraintSet],
    strict: bool = True,
    n_vertices: Optional[int] = None,
) -> PlanarEmbedding:
    """Quasi-conformal map with Beltrami coefficient ``mu`` satisfying ``constraints``.

    ``mesh`` supplies the connectivity (a TriMesh or a face array with ``n_vertices``);
    ``frames`` are the per-face source frames ``mu`` is expressed in. ``constraints`` holds
    one LinearConstraintSet per output coordinate.
    """
    if isinstance(mesh, TriMesh):
        faces, n = mesh.faces, mesh.n_vertices
    else:
        faces = np.asarray(mesh, dtype=np.int64)
        n = int(n_vertices) if n_vertices is not None else int(faces.max()) + 1
    if isinstance(mu, BeltramiField):
        mu = mu.mu
    mu, _ = admissible_mu(mu, strict=strict)
    if len(mu) != len(faces):
        raise ValueError(f"mu has {len(mu)} values for {len(faces)} faces")
    cx, cy = constraints
    if not cx.pins or not cy.pins:
        raise ConstraintError("under-constrained system: each coordinate needs at least one pinned value")

    K = lbs_stiffness(faces, frames, mu, n)
    zeros = np.zeros(n)
    x = solve_constrained(K, cx, zeros)
    y = solve_constrained(K, cy, zeros)
    return PlanarEmbedding(np.column_stack([x, y]), faces)


def compose_beltrami(mu_f, fz_phase, mu_g_at_f):
    """Beltrami coefficient of g o f from mu_f, conj(f_z)/f_z and mu_g evaluated at f."""
    mu_f = np.asarray(mu_f, dtype=np.complex128)
    mu_g = np.asarray(mu_g_at_f, dtype=np.complex128)
    phase = np.asarray(fz_phase, dtype=np.complex128)
    if np.any(np.abs(mu_f) >= 1.0) or np.any(np.abs(mu_g) >= 1.0):
        raise NonAdmissibleError("composition needs |mu_f| < 1 and |mu_g| < 1")
    denom = 1.0 + phase * np.conj(mu_f) * mu_g
    if np.any(np.abs(denom) < 1e-14):
        raise NonAdmissibleError("composition denominator vanishes")
    result = (mu_f + phase * mu_g) / denom
    return complex(result) if result.ndim == 0 else result
