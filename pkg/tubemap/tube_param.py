"""Fixed-boundary tubular parameterization.

Pipeline run by ``parameterize_fixed``:

  ── seam_cut ──────────────────────────────────────────────────────────────
  shortest_seam -> cut_along_seam                               (tube -> disk mesh)
  ── initial_parameterization ──────────────────────────────────────────────
  disk_harmonic_map          boundary on the unit circle by arc length
  optimize_length            rectangle [0, 2pi] x [0, L] by LBS with mu of the inverse
                             disk map; L* minimises the area-weighted mean |mu|^2
  lift_to_tube               glue the seam twins, u = x mod 2pi, z = y
  ── seam_correction ───────────────────────────────────────────────────────
  tube_to_annulus            w = exp(z) * exp(i u)
  seam_correction            LBS on the strip |arg w| <= d*pi, strip boundary pinned,
                             solved in conj(w) so the chart keeps the surface orientation
  annulus_to_tube            back to (u, z) for the moved vertices only

Angular distortion is measured between the surface and the flat (u, z) chart with u
unwrapped per face.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from tubemap import config
from tubemap.exceptions import MeshError, NonAdmissibleError, TopologyError
from tubemap.mesh_core import (
    BoundaryLoop,
    LinearConstraintSet,
    TriMesh,
    compact_faces,
    cotan_stiffness,
    extract_boundary_loops,
    solve_constrained,
)
from tubemap.metrics import angular_distortion
from tubemap.qc_solver import (
    PlanarEmbedding,
    admissible_mu,
    beltrami_coefficient,
    face_flatten,
    lbs_solve,
    map_differentials,
)
from tubemap.seam_cut import CutMesh, cut_along_seam, glue, shortest_seam

logger = logging.getLogger("tubemap.tube_param")

TWO_PI = 2.0 * math.pi
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class TubeCoords:
    """Per-vertex tube coordinates: u in [0, 2pi), z in [0, L_star]."""

    u: np.ndarray
    z: np.ndarray
    L_star: float

    def __len__(self) -> int:
        return len(self.u)

    def positions(self) -> np.ndarray:
        """Points (cos u, sin u, z) on the unit-radius tube."""
        return np.column_stack([np.cos(self.u), np.sin(self.u), self.z])

    def face_frames(self, faces: np.ndarray) -> np.ndarray:
        """Per-face (u, z) triangles with u unwrapped relative to the first corner."""
        u = self.u[faces]
        du = u - u[:, :1]
        du = du - TWO_PI * np.round(du / TWO_PI)
        return np.stack([u[:, :1] + du, self.z[faces]], axis=2)

    def to_dict(self) -> Dict:
        return {"L_star": float(self.L_star), "u": self.u.tolist(), "z": self.z.tolist()}

    @classmethod
    def from_dict(cls, data: Dict) -> "TubeCoords":
        return cls(np.asarray(data["u"], dtype=np.float64), np.asarray(data["z"], dtype=np.float64), float(data["L_star"]))


@dataclass(frozen=True, eq=False)
class AnnulusEmbedding:
    """Per-vertex complex coordinate w with 1 <= |w| <= exp(L_star)."""

    w: np.ndarray
    L_star: float


# ── boundary and disk map ───────────────────────────────────────────────────────
def arc_length_boundary(loop: BoundaryLoop) -> np.ndarray:
    """theta_i = 2pi * (length up to vertex i) / (loop length), starting at 0."""
    lengths = np.asarray(loop.edge_lengths, dtype=np.float64)
    total = lengths.sum()
    if not total > 0:
        raise MeshError("boundary loop has zero total length")
    return TWO_PI * np.concatenate([[0.0], np.cumsum(lengths[:-1])]) / total


def disk_harmonic_map(cut: CutMesh) -> PlanarEmbedding:
    """Cotangent-harmonic map of the cut mesh onto the unit disk."""
    loop = cut.boundary.rotated_to(cut.p)
    theta = arc_length_boundary(loop)
    K = -cotan_stiffness(cut.mesh)
    zeros = np.zeros(cut.mesh.n_vertices)
    x = solve_constrained(K, LinearConstraintSet().pin_many(loop.vertex_indices, np.cos(theta)), zeros)
    y = solve_constrained(K, LinearConstraintSet().pin_many(loop.vertex_indices, np.sin(theta)), zeros)
    return PlanarEmbedding(np.column_stack([x, y]), cut.mesh.faces)


# ── rectangle map ───────────────────────────────────────────────────────────────
def rect_constraints(cut: CutMesh, L: float) -> Tuple[LinearConstraintSet, LinearConstraintSet]:
    """Corner pins, seam pins and ties, and loop heights for the rectangle [0, 2pi] x [0, L]."""
    cx, cy = LinearConstraintSet(), LinearConstraintSet()
    cx.pin_many(cut.side0, 0.0).pin_many(cut.side2pi, TWO_PI)
    cy.pin(cut.p, 0.0).pin(cut.p_prime, 0.0).pin(cut.q, L).pin(cut.q_prime, L)
    cy.pin_many(cut.loop0, 0.0).pin_many(cut.loop1, L)
    for a, b in zip(cut.side0[1:-1].tolist(), cut.side2pi[1:-1].tolist()):
        cy.tie(a, b)
    return cx, cy


def rect_map(disk: PlanarEmbedding, cut: CutMesh, L: float, strict: bool = False) -> PlanarEmbedding:
    """LBS map of the disk onto [0, 2pi] x [0, L] with the coefficient of the inverse disk map."""
    if not L > 0:
        raise ValueError(f"rectangle length must be positive, got {L}")
    mu = beltrami_coefficient(disk, cut.mesh)
    return lbs_solve(cut.mesh, disk, mu, rect_constraints(cut, L), strict=strict)


def rect_energy(cut: CutMesh, rect: PlanarEmbedding, surface_frames: Optional[np.ndarray] = None) -> float:
    """Face-area-weighted mean |mu|^2 of the surface -> rectangle map (non-finite mu counts as 1)."""
    frames = face_flatten(cut.mesh) if surface_frames is None else surface_frames
    fz, fzbar = map_differentials(frames, rect)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu_sq = np.abs(fzbar) ** 2 / np.abs(fz) ** 2
    mu_sq = np.where(np.isfinite(mu_sq), mu_sq, 1.0)
    areas = cut.mesh.face_areas
    return float(np.sum(areas * mu_sq) / np.sum(areas))


def _original_loop_lengths(cut: CutMesh) -> Tuple[float, float]:
    pts = cut.mesh.vertices
    bottom = np.concatenate([[cut.p], cut.loop0, [cut.p_prime]])
    top = np.concatenate([[cut.q_prime], cut.loop1, [cut.q]])
    return tuple(float(np.linalg.norm(np.diff(pts[c], axis=0), axis=1).sum()) for c in (bottom, top))


def length_bracket(cut: CutMesh) -> Tuple[float, float]:
    """[0.25 M, 4 M] around the module estimate M = 2pi * seam length / mean loop length."""
    loop_mean = float(np.mean(_original_loop_lengths(cut)))
    M = TWO_PI * cut.seam.length / loop_mean
    lo, hi = config.LENGTH_BRACKET
    return lo * M, hi * M


def optimize_length(
    disk: PlanarEmbedding,
    cut: CutMesh,
    strict: bool = False,
    rtol: float = config.LENGTH_SEARCH_RTOL,
) -> Tuple[float, PlanarEmbedding]:
    """Golden-section search for L* = argmin of ``rect_energy``.

    x does not depend on L and y scales linearly with it, so one LBS solve at L = 1 gives
    every candidate rectangle.
    """
    unit = rect_map(disk, cut, 1.0, strict=strict)
    x, y1 = unit.coords[:, 0], unit.coords[:, 1]
    frames = face_flatten(cut.mesh)

    def rect_at(L: float) -> PlanarEmbedding:
        return PlanarEmbedding(np.column_stack([x, L * y1]), cut.mesh.faces)

    def energy(L: float) -> float:
        return rect_energy(cut, rect_at(L), frames)

    lo, hi = length_bracket(cut)
    a, b = lo, hi
    c, d = b - _INV_PHI * (b - a), a + _INV_PHI * (b - a)
    fc, fd = energy(c), energy(d)
    iterations = 0
    while (b - a) > rtol * 0.5 * (a + b):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = energy(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = energy(d)
        iterations += 1
    L_star = 0.5 * (a + b)
    f_star = energy(L_star)
    f_lo, f_hi = energy(lo), energy(hi)
    if min(f_lo, f_hi) < f_star:
        L_star, f_star = (lo, f_lo) if f_lo <= f_hi else (hi, f_hi)
        logger.warning("no interior minimum in [%.4g, %.4g]; using endpoint L=%.6g", lo, hi, L_star)
    logger.debug("L*=%.8g energy=%.3e after %d golden-section steps", L_star, f_star, iterations)
    return L_star, rect_at(L_star)


# ── tube and annulus ────────────────────────────────────────────────────────────
def lift_to_tube(rect: PlanarEmbedding, L_star: float, cut: CutMesh) -> TubeCoords:
    """Glue the rectangle across the seam into tube coordinates on the original mesh."""
    u = glue(cut, rect.coords[:, 0], period=TWO_PI)
    z = glue(cut, rect.coords[:, 1])
    outside = (z < -config.TUBE_Z_TOL) | (z > L_star + config.TUBE_Z_TOL)
    if outside.any():
        logger.warning("clamped %d vertices with z outside [0, %.6g]", int(outside.sum()), L_star)
    return TubeCoords(u, np.clip(z, 0.0, L_star), float(L_star))


def tube_to_annulus(tube: TubeCoords) -> AnnulusEmbedding:
    return AnnulusEmbedding(np.exp(tube.z) * np.exp(1j * tube.u), tube.L_star)


def annulus_to_tube(ann: AnnulusEmbedding) -> TubeCoords:
    modulus = np.abs(ann.w)
    if np.any(modulus < 1.0 - config.TUBE_Z_TOL):
        raise NonAdmissibleError(f"annulus point inside the unit circle (|w| = {modulus.min():.12g})")
    u = np.mod(np.angle(ann.w), TWO_PI)
    u[u >= TWO_PI] = 0.0
    # log |w| of pinned loop vertices may round a few ulps past the ends
    z = np.clip(np.log(modulus), 0.0, max(ann.L_star, 0.0))
    return TubeCoords(u, z, ann.L_star)


# ── seam correction ─────────────────────────────────────────────────────────────
def strip_faces(w: np.ndarray, faces: np.ndarray, d: float) -> np.ndarray:
    """Indices of faces whose three corners satisfy |arg w| <= d * pi."""
    inside = np.abs(np.angle(w)) <= d * math.pi
    return np.flatnonzero(inside[faces].all(axis=1))


def _open_boundary_vertices(local_faces: np.ndarray, n_local: int) -> np.ndarray:
    he = local_faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    keys = he[:, 0] * n_local + he[:, 1]
    reverse = he[:, 1] * n_local + he[:, 0]
    return np.unique(he[~np.isin(reverse, keys)])


@dataclass(frozen=True, eq=False)
class SeamStrip:
    """Strip submesh around the seam, ready for the LBS solve.

    ``chart`` holds conj(w / phase) per strip vertex: w = exp(z + iu) reverses the
    orientation of the (u, z) chart, the conjugate restores it. ``mu`` is the coefficient of
    the chart -> surface map on each strip face.
    """

    faces: np.ndarray
    vertices: np.ndarray
    pinned: np.ndarray
    chart: PlanarEmbedding
    mu: np.ndarray
    phase: complex

    @property
    def free(self) -> np.ndarray:
        return np.setdiff1d(np.arange(len(self.vertices)), self.pinned)


def seam_strip(
    ann: AnnulusEmbedding, mesh: TriMesh, d: float, seam: Optional[np.ndarray] = None
) -> Optional[SeamStrip]:
    """Strip |arg(w / phase)| <= d*pi, phase putting the seam at angle 0; None if nothing can move."""
    w = np.asarray(ann.w)
    phase = 1.0 + 0j
    if seam is not None and len(seam):
        total = np.sum(w[seam] / np.abs(w[seam]))
        if abs(total) > 0:
            phase = total / abs(total)
    w_rot = w / phase

    faces_idx = strip_faces(w_rot, mesh.faces, d)
    if not len(faces_idx):
        logger.info("strip width %.3g holds no face: seam correction skipped", d)
        return None
    local_faces, global_index = compact_faces(mesh.faces[faces_idx])
    pinned = _open_boundary_vertices(local_faces, len(global_index))
    if len(pinned) == len(global_index):
        logger.info("strip has no free vertex: seam correction skipped")
        return None
    chart = PlanarEmbedding.from_complex(np.conj(w_rot[global_index]), local_faces)
    mu = beltrami_coefficient(chart, face_flatten(mesh)[faces_idx]).mu
    return SeamStrip(faces_idx, global_index, pinned, chart, mu, complex(phase))


def seam_correction(
    ann: AnnulusEmbedding,
    mesh: TriMesh,
    d: float,
    seam: Optional[np.ndarray] = None,
    strict: bool = False,
) -> AnnulusEmbedding:
    """Re-solve the annulus map on the strip |arg w| <= d*pi around the seam.

    The annulus is first rotated so the seam vertices (if given) sit at angle 0. Strip faces
    get the coefficient of the annulus -> surface map, the strip boundary stays pinned, and
    only free strip vertices move; every other value is returned unchanged.
    """
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"strip width must lie in [0, 1], got {d}")
    if d == 0.0:
        logger.info("strip width 0: seam correction skipped")
        return ann
    strip = seam_strip(ann, mesh, d, seam)
    if strip is None:
        return ann

    mu, n_clamped = admissible_mu(strip.mu, strict=strict)
    pinned, coords = strip.pinned, strip.chart.coords
    cx = LinearConstraintSet().pin_many(pinned, coords[pinned, 0])
    cy = LinearConstraintSet().pin_many(pinned, coords[pinned, 1])
    solved = lbs_solve(strip.chart.faces, strip.chart, mu, (cx, cy), strict=strict, n_vertices=len(strip.vertices))

    free = strip.free
    w_new = np.array(ann.w, copy=True)
    w_new[strip.vertices[free]] = np.conj(solved.as_complex()[free]) * strip.phase
    logger.debug(
        "seam strip d=%.3g: %d faces, %d free vertices, %d clamped", d, len(strip.faces), len(free), n_clamped
    )
    return AnnulusEmbedding(w_new, ann.L_star)


def correct_tube(
    tube: TubeCoords,
    mesh: TriMesh,
    d: float,
    seam: Optional[np.ndarray] = None,
    strict: bool = False,
) -> TubeCoords:
    """``seam_correction`` applied to tube coordinates.

    Only vertices the strip solve moved are converted back from the annulus; all others
    keep their input (u, z) exactly.
    """
    before = tube_to_annulus(tube)
    after = seam_correction(before, mesh, d, seam=seam, strict=strict)
    moved = np.flatnonzero(after.w != before.w)
    if not len(moved):
        return tube
    solved = annulus_to_tube(AnnulusEmbedding(after.w[moved], tube.L_star))
    u, z = tube.u.copy(), tube.z.copy()
    u[moved] = solved.u
    z[moved] = solved.z
    return TubeCoords(u, z, tube.L_star)


# ── full pipeline ───────────────────────────────────────────────────────────────
def two_loops(mesh: TriMesh) -> Tuple[BoundaryLoop, BoundaryLoop]:
    loops = extract_boundary_loops(mesh)
    if len(loops) != 2:
        raise TopologyError(f"expected exactly two boundary loops, found {len(loops)}")
    return loops[0], loops[1]


def tube_distortion(mesh: TriMesh, tube: TubeCoords, **labels):
    return angular_distortion(mesh, tube.face_frames(mesh.faces), **labels)


def parameterize_fixed(
    mesh: TriMesh,
    d: float = config.DEFAULT_STRIP_WIDTH,
    strict: bool = False,
) -> Tuple[TubeCoords, Dict]:
    """Conformal tube coordinates for a mesh with two boundary loops, plus diagnostics."""
    timings: Dict[str, float] = {}
    t0 = time.perf_counter()
    loop0, loop1 = two_loops(mesh)
    seam = shortest_seam(mesh, loop0, loop1)
    cut = cut_along_seam(mesh, seam)
    timings["seam_cut"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    disk = disk_harmonic_map(cut)
    L_star, rect = optimize_length(disk, cut, strict=strict)
    tube = lift_to_tube(rect, L_star, cut)
    timings["initial_parameterization"] = time.perf_counter() - t0
    before = tube_distortion(mesh, tube)

    t0 = time.perf_counter()
    corrected = correct_tube(tube, mesh, d, seam=seam.vertices, strict=strict)
    timings["seam_correction"] = time.perf_counter() - t0
    after = tube_distortion(mesh, corrected)

    logger.info(
        "L*=%.6g seam=%.6g distortion %.4f -> %.4f deg (d=%.3g)",
        L_star, seam.length, before.mean_deg, after.mean_deg, d,
    )
    diagnostics = {
        "L_star": float(L_star),
        "seam_length": float(seam.length),
        "distortion_init": float(before.mean_deg),
        "distortion_corrected": float(after.mean_deg),
        "flipped_faces": int(rect.flipped_faces),
        "strip_width": float(d),
        "timings": timings,
    }
    return corrected, diagnostics
