"""OBJ / OFF readers and writers.

Only ``v`` and ``f`` records of OBJ are read (texture / normal indices after ``/`` are ignored,
negative indices are resolved relative to the vertex count). Polygons with more than three
corners are fan-triangulated from their first corner. Vertices not referenced by any face are
dropped and faces re-indexed. Writers emit 9 significant digits.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from tubemap import config
from tubemap.exceptions import MeshFormatError
from tubemap.mesh_core import TriMesh, compact_faces

logger = logging.getLogger("tubemap.mesh_io")

PathLike = Union[str, Path]
FORMATS = ("obj", "off")


def _fan(polygon: Sequence[int]) -> List[Tuple[int, int, int]]:
    return [(polygon[0], polygon[k], polygon[k + 1]) for k in range(1, len(polygon) - 1)]


def _parse_obj(lines: List[str], path: PathLike) -> Tuple[np.ndarray, List[Tuple[int, int, int]]]:
    vertices: List[List[float]] = []
    faces: List[Tuple[int, int, int]] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "v":
                vertices.append([float(x) for x in parts[1:4]])
                if len(vertices[-1]) != 3:
                    raise ValueError("vertex needs three coordinates")
            elif parts[0] == "f":
                polygon = []
                for tok in parts[1:]:
                    idx = int(tok.split("/")[0])
                    polygon.append(idx - 1 if idx > 0 else len(vertices) + idx)
                if len(polygon) < 3:
                    raise ValueError("face needs at least three corners")
                faces.extend(_fan(polygon))
        except (ValueError, IndexError) as exc:
            raise MeshFormatError(f"{path}:{lineno}: cannot parse {raw.strip()!r} ({exc})") from exc
    return np.asarray(vertices, dtype=np.float64).reshape(-1, 3), faces


def _parse_off(lines: List[str], path: PathLike) -> Tuple[np.ndarray, List[Tuple[int, int, int]]]:
    tokens = [ln.split("#", 1)[0].strip() for ln in lines]
    tokens = [t for t in tokens if t]
    if not tokens or not tokens[0].startswith("OFF"):
        raise MeshFormatError(f"{path}: missing OFF header")
    header = tokens[0][3:].split()
    body = tokens[1:]
    if not header:
        header, body = body[0].split(), body[1:]
    try:
        n_v, n_f = int(header[0]), int(header[1])
        vertices = np.array([[float(x) for x in body[i].split()[:3]] for i in range(n_v)])
        faces: List[Tuple[int, int, int]] = []
        for i in range(n_v, n_v + n_f):
            vals = [int(x) for x in body[i].split()]
            count = vals[0]
            polygon = vals[1:1 + count]
            if count < 3 or len(polygon) != count:
                raise ValueError(f"bad face record {body[i]!r}")
            faces.extend(_fan(polygon))
    except (ValueError, IndexError) as exc:
        raise MeshFormatError(f"{path}: cannot parse OFF body ({exc})") from exc
    return vertices.reshape(-1, 3), faces


def load_mesh(path: PathLike, format: Optional[str] = None) -> TriMesh:
    """Read an OBJ or OFF file into a validated ``TriMesh``.

    ``format`` defaults to the file suffix. Raises ``MeshFormatError`` on parse failure or
    when the file holds no faces, ``NonManifoldError`` for non-manifold input.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt not in FORMATS:
        raise MeshFormatError(f"{path}: unsupported mesh format {fmt!r} (expected obj or off)")
    lines = path.read_text(encoding="utf-8", errors="replace").splitlines()
    vertices, faces = (_parse_obj if fmt == "obj" else _parse_off)(lines, path)
    if not faces:
        raise MeshFormatError(f"{path}: no faces")
    faces_arr = np.asarray(faces, dtype=np.int64)
    if faces_arr.min() < 0 or faces_arr.max() >= len(vertices):
        raise MeshFormatError(f"{path}: face index out of range (have {len(vertices)} vertices)")

    local_faces, used = compact_faces(faces_arr)
    dropped = len(vertices) - len(used)
    if dropped:
        logger.info("%s: dropped %d isolated vertices", path.name, dropped)
    mesh = TriMesh(vertices[used], local_faces)
    logger.debug("%s: loaded %d vertices, %d faces", path.name, mesh.n_vertices, mesh.n_faces)
    return mesh


def _fmt(values: np.ndarray) -> str:
    return " ".join(f"{v:.{config.FLOAT_DIGITS}g}" for v in values)


def write_obj(path: PathLike, vertices: np.ndarray, faces: np.ndarray, comment: str = "") -> Path:
    """Write positions (n, 3) and triangles as OBJ with 1-based indices."""
    path = Path(path)
    vertices = np.asarray(vertices, dtype=np.float64)
    lines = ["# tubemap"]
    if comment:
        lines.append(f"# {comment}")
    lines += [f"v {_fmt(v)}" for v in vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in np.asarray(faces).tolist()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_off(path: PathLike, vertices: np.ndarray, faces: np.ndarray) -> Path:
    path = Path(path)
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces)
    lines = ["OFF", f"{len(vertices)} {len(faces)} 0"]
    lines += [_fmt(v) for v in vertices]
    lines += [f"3 {a} {b} {c}" for a, b, c in faces.tolist()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def save_mesh(path: PathLike, mesh: TriMesh, vertices: Optional[np.ndarray] = None) -> Path:
    """Write ``mesh`` (or its connectivity with replacement ``vertices``) by file suffix."""
    path = Path(path)
    positions = mesh.vertices if vertices is None else vertices
    if path.suffix.lower() == ".off":
        return write_off(path, positions, mesh.faces)
    return write_obj(path, positions, mesh.faces)
