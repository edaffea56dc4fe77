"""Procedural tube meshes and boundary noise for the synthetic benchmark corpus.

Families (all an n_u x n_z grid around a centreline, parameter t in [0, 1] along it):
  straight  line, radius r0
  bent      circular-arc centreline turning by ``bend_angle`` radians over the height
  tapered   radius r0 (1 + (taper - 1) t)
  wavy      radius r0 (1 + A sin(2 pi f t))

Grid vertex (i around, j along) has index j * n_u + i; faces are oriented so normals point
outward. ``default_corpus`` lists the 42 documented specs (12 clean, 30 noisy).
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np

from tubemap.exceptions import MeshError, SpecError
from tubemap.mesh_core import TriMesh
from tubemap.mesh_io import write_obj

logger = logging.getLogger("tubemap.synth")

FAMILIES = ("straight", "bent", "tapered", "wavy")
NOISE_RETRIES = 5


@dataclass(frozen=True)
class TubeSpec:
    mesh_id: str
    family: str = "straight"
    n_u: int = 64
    n_z: int = 32
    height: float = 3.0
    radius: float = 1.0
    bend_angle: float = 0.0
    taper: float = 1.0
    wave_amplitude: float = 0.0
    wave_frequency: float = 1.0
    noise: float = 0.0  # fraction of the mean boundary edge length
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise SpecError(f"{self.mesh_id}: unknown family {self.family!r} (expected one of {FAMILIES})")
        if self.n_u < 8 or self.n_z < 4:
            raise SpecError(f"{self.mesh_id}: grid must be at least 8 x 4, got {self.n_u} x {self.n_z}")
        if not (self.radius > 0 and self.height > 0):
            raise SpecError(f"{self.mesh_id}: radius and height must be positive")
        if self.noise < 0:
            raise SpecError(f"{self.mesh_id}: noise must be >= 0, got {self.noise}")
        if self.taper <= 0:
            raise SpecError(f"{self.mesh_id}: taper ratio must be positive, got {self.taper}")
        if not abs(self.wave_amplitude) < 1:
            raise SpecError(f"{self.mesh_id}: wave amplitude must lie in (-1, 1)")
        if self.bend_angle < 0 or self.bend_angle * self.radius >= self.height:
            raise SpecError(f"{self.mesh_id}: bend angle must satisfy 0 <= angle < height / radius")

    @property
    def subset(self) -> str:
        return "noisy" if self.noise > 0 else "clean"

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, record: Dict) -> "TubeSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(record) - known
        if unknown:
            raise SpecError(f"{record.get('mesh_id', '?')}: unknown keys {sorted(unknown)}")
        return cls(**record)


def _grid_faces(n_u: int, n_z: int) -> np.ndarray:
    i = np.arange(n_u)
    j = np.arange(n_z - 1)[:, None]
    v00 = j * n_u + i
    v10 = j * n_u + (i + 1) % n_u
    v01 = v00 + n_u
    v11 = v10 + n_u
    lower = np.stack([v00, v10, v11], axis=-1).reshape(-1, 3)
    upper = np.stack([v00, v11, v01], axis=-1).reshape(-1, 3)
    return np.stack([lower, upper], axis=1).reshape(-1, 3)


def _radius_profile(spec: TubeSpec, t: np.ndarray) -> np.ndarray:
    if spec.family == "tapered":
        return spec.radius * (1.0 + (spec.taper - 1.0) * t)
    if spec.family == "wavy":
        return spec.radius * (1.0 + spec.wave_amplitude * np.sin(2.0 * math.pi * spec.wave_frequency * t))
    return np.full_like(t, spec.radius)


def generate_tube(spec: TubeSpec) -> TriMesh:
    """Grid tube for ``spec``, with boundary noise when ``spec.noise`` > 0."""
    angle = 2.0 * math.pi * np.arange(spec.n_u) / spec.n_u
    t = np.linspace(0.0, 1.0, spec.n_z)
    r = _radius_profile(spec, t)[:, None]
    ca, sa = np.cos(angle)[None, :], np.sin(angle)[None, :]

    if spec.family == "bent" and spec.bend_angle > 0:
        beta = spec.bend_angle
        arc = spec.height / beta
        bt = beta * t[:, None]
        # centreline (arc (1 - cos), 0, arc sin); section frame N1 = (cos, 0, -sin), N2 = y
        x = arc * (1.0 - np.cos(bt)) + r * ca * np.cos(bt)
        y = r * sa * np.ones_like(bt)
        z = arc * np.sin(bt) - r * ca * np.sin(bt)
    else:
        x = r * ca
        y = r * sa
        z = spec.height * t[:, None] * np.ones_like(ca)
    vertices = np.stack([x, y, z], axis=-1).reshape(-1, 3)
    mesh = TriMesh(vertices, _grid_faces(spec.n_u, spec.n_z))
    if spec.noise > 0:
        mesh = add_boundary_noise(mesh, spec.noise, spec.seed)
    return mesh


def add_boundary_noise(mesh: TriMesh, sigma: float, seed: int) -> TriMesh:
    """Move boundary vertices by a tangent-plane-projected random vector of length <= sigma * mean boundary edge.

    If a face flips, the displacement is halved and retried (up to NOISE_RETRIES times).
    """
    if sigma < 0:
        raise SpecError(f"noise amplitude must be >= 0, got {sigma}")
    if sigma == 0:
        return mesh
    rng = np.random.default_rng(seed)
    he = mesh.boundary_half_edges
    mean_edge = float(np.linalg.norm(mesh.vertices[he[:, 1]] - mesh.vertices[he[:, 0]], axis=1).mean())
    boundary = np.flatnonzero(mesh.boundary_vertex_mask)

    direction = rng.normal(size=(len(boundary), 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = rng.uniform(size=(len(boundary), 1)) ** (1.0 / 3.0)
    step = direction * radius * sigma * mean_edge
    normals = mesh.vertex_normals[boundary]
    step -= np.einsum("ij,ij->i", step, normals)[:, None] * normals

    touched = np.flatnonzero(mesh.boundary_vertex_mask[mesh.faces].any(axis=1))
    reference = mesh.face_cross[touched]
    scale = 1.0
    for attempt in range(NOISE_RETRIES + 1):
        vertices = mesh.vertices.copy()
        vertices[boundary] += scale * step
        v = vertices[mesh.faces[touched]]
        cross = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        if np.all(np.einsum("ij,ij->i", cross, reference) > 0):
            if attempt:
                logger.debug("boundary noise accepted at scale %.4g", scale)
            return mesh.with_vertices(vertices)
        scale *= 0.5
    raise MeshError(f"boundary noise sigma={sigma} flips faces after {NOISE_RETRIES} retries")


# ── corpus ──────────────────────────────────────────────────────────────────────
_VARIANTS = {
    "straight": [{"height": 2.0}, {"height": 3.0}, {"height": 4.0}],
    "bent": [{"bend_angle": math.pi / 6}, {"bend_angle": math.pi / 4}, {"bend_angle": math.pi / 3}],
    "tapered": [{"taper": 0.6}, {"taper": 0.75}, {"taper": 1.5}],
    "wavy": [
        {"wave_amplitude": 0.1, "wave_frequency": 1.0},
        {"wave_amplitude": 0.15, "wave_frequency": 2.0},
        {"wave_amplitude": 0.2, "wave_frequency": 1.5},
    ],
}
_NOISE_LEVELS = (0.1, 0.2, 0.3)


def default_corpus(n_u: int = 64, n_z: int = 32) -> List[TubeSpec]:
    """12 clean specs (3 per family) followed by 30 noisy ones, with fixed seeds."""
    specs = []
    for family in FAMILIES:
        for v, params in enumerate(_VARIANTS[family]):
            specs.append(TubeSpec(f"{family}_{v}_clean", family, n_u, n_z, **params))
    for k in range(30):
        family = FAMILIES[k % 4]
        params = _VARIANTS[family][(k // 4) % 3]
        specs.append(
            TubeSpec(
                f"{family}_{k:02d}_noisy", family, n_u, n_z,
                noise=_NOISE_LEVELS[k % 3], seed=1000 + k, **params,
            )
        )
    return specs


def write_manifest(specs: Sequence[TubeSpec], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(json.dumps([s.to_dict() for s in specs], indent=2) + "\n", encoding="utf-8")
    return path


def read_manifest(path: Union[str, Path]) -> List[TubeSpec]:
    records = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(records, list):
        raise SpecError(f"{path}: manifest must be a JSON list of tube specs")
    specs = []
    for i, record in enumerate(records):
        try:
            specs.append(TubeSpec.from_dict(record))
        except (TypeError, SpecError) as exc:
            raise SpecError(f"{path}: record {i}: {exc}") from exc
    return specs


def write_corpus(specs: Sequence[TubeSpec], out_dir: Union[str, Path]) -> List[Path]:
    """Generate every spec and write ``<mesh_id>.obj`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for spec in specs:
        mesh = generate_tube(spec)
        paths.append(write_obj(out_dir / f"{spec.mesh_id}.obj", mesh.vertices, mesh.faces, comment=spec.family))
    logger.info("wrote %d meshes to %s", len(paths), out_dir)
    return paths
