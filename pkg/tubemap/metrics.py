"""Angular distortion, Beltrami summaries and report files.

Per corner, distortion is |image angle - source angle| in degrees. The mesh mean and median
are taken over all corners of non-degenerate image faces. Batch tables aggregate per-mesh
means (mean and median over meshes), which is also how ``aggregate_reports`` builds the
ablation summaries.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from tubemap import config
from tubemap.mesh_core import TriMesh
from tubemap.qc_solver import BeltramiField, map_differentials

logger = logging.getLogger("tubemap.metrics")

REPORT_COLUMNS = [
    "mesh_id",
    "n_vertices",
    "n_faces",
    "mean_deg",
    "median_deg",
    "max_deg",
    "flipped_faces",
    "mu_mean_sq",
    "mu_max",
    "stage_label",
]


@dataclass
class DistortionReport:
    """Distortion of one map. ``corner_deg`` / ``face_deg`` are NaN on excluded faces."""

    corner_deg: np.ndarray = field(repr=False)
    face_deg: np.ndarray = field(repr=False)
    mean_deg: float
    median_deg: float
    max_deg: float
    flipped_faces: int
    degenerate_faces: int
    mu_mean_sq: float
    mu_max: float
    mesh_id: str = ""
    stage_label: str = ""
    n_vertices: int = 0
    n_faces: int = 0

    def to_row(self) -> Dict:
        row = asdict(self)
        row.pop("corner_deg")
        row.pop("face_deg")
        row.pop("degenerate_faces")
        return {k: row[k] for k in REPORT_COLUMNS}


def corner_angles(frames: np.ndarray) -> np.ndarray:
    """Unsigned corner angles (radians) of triangles given as (m, 3, d) arrays, d in {2, 3}."""
    out = np.empty(frames.shape[:2])
    for k in range(3):
        a = frames[:, (k + 1) % 3] - frames[:, k]
        b = frames[:, (k + 2) % 3] - frames[:, k]
        if frames.shape[2] == 2:
            cross = np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
        else:
            cross = np.linalg.norm(np.cross(a, b), axis=1)
        out[:, k] = np.arctan2(cross, np.einsum("ij,ij->i", a, b))
    return out


def _triangle_areas(frames: np.ndarray) -> np.ndarray:
    a = frames[:, 1] - frames[:, 0]
    b = frames[:, 2] - frames[:, 0]
    if frames.shape[2] == 2:
        return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    return 0.5 * np.linalg.norm(np.cross(a, b), axis=1)


def _flatten(frames: np.ndarray) -> np.ndarray:
    """Isometric per-face 2D frames of 3D triangles (orientation taken as positive)."""
    e1 = frames[:, 1] - frames[:, 0]
    e2 = frames[:, 2] - frames[:, 0]
    len1 = np.linalg.norm(e1, axis=1)
    safe = np.where(len1 > 0, len1, 1.0)
    xhat = e1 / safe[:, None]
    out = np.zeros(frames.shape[:2] + (2,))
    out[:, 1, 0] = len1
    out[:, 2, 0] = np.einsum("ij,ij->i", e2, xhat)
    out[:, 2, 1] = np.linalg.norm(np.cross(xhat, e2), axis=1)
    return out


def beltrami_summary(mu: Union[BeltramiField, np.ndarray], areas: np.ndarray) -> Tuple[float, float]:
    """(area-weighted mean of |mu|^2, max |mu|)."""
    values = mu.mu if isinstance(mu, BeltramiField) else np.asarray(mu)
    areas = np.asarray(areas, dtype=np.float64)
    modulus = np.abs(values)
    if not len(modulus):
        return 0.0, 0.0
    return float(np.sum(areas * modulus**2) / np.sum(areas)), float(modulus.max())


def angular_distortion(
    source: Union[TriMesh, np.ndarray],
    image: np.ndarray,
    mesh_id: str = "",
    stage_label: str = "",
) -> DistortionReport:
    """Corner-angle distortion of the map ``source`` -> ``image``.

    ``source`` is a TriMesh or per-face triangles (m, 3, d). ``image`` is per-vertex
    positions (n, 2) / (n, 3) on the source connectivity, or per-face triangles (m, 3, d).
    Image faces with near-zero area are excluded and counted; flipped faces are counted for
    2D images only.
    """
    if isinstance(source, TriMesh):
        src = source.vertices[source.faces]
        n_vertices = source.n_vertices
    else:
        src = np.asarray(source, dtype=np.float64)
        n_vertices = 0
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        if not isinstance(source, TriMesh):
            raise ValueError("per-vertex image positions need a TriMesh source")
        img = image[source.faces]
    else:
        img = image
    if img.shape[:2] != src.shape[:2]:
        raise ValueError(f"image has {img.shape[0]} faces, source has {src.shape[0]}")

    m = len(src)
    signed = _triangle_areas(img)
    area = np.abs(signed)
    degenerate = area <= config.DEGENERATE_AREA_RATIO * max(area.mean(), np.finfo(float).tiny)
    flipped = int((signed < 0).sum()) if img.shape[2] == 2 else 0

    corner = np.degrees(np.abs(corner_angles(img) - corner_angles(src)))
    corner[degenerate] = np.nan
    face = corner.mean(axis=1)
    valid = corner[~degenerate].ravel()

    src2 = src if src.shape[2] == 2 else _flatten(src)
    img2 = img if img.shape[2] == 2 else _flatten(img)
    keep = ~degenerate
    source_areas = np.abs(_triangle_areas(src))
    if keep.any():
        fz, fzbar = map_differentials(src2[keep], img2[keep])
        with np.errstate(divide="ignore", invalid="ignore"):
            mu = np.abs(fzbar) / np.abs(fz)
        mu = np.where(np.isfinite(mu), mu, 1.0)
        mu_mean_sq, mu_max = beltrami_summary(mu, source_areas[keep])
    else:
        mu_mean_sq, mu_max = 0.0, 0.0

    if degenerate.any():
        logger.warning("%s: %d degenerate image faces excluded", mesh_id or "map", int(degenerate.sum()))
    return DistortionReport(
        corner_deg=corner,
        face_deg=face,
        mean_deg=float(valid.mean()) if valid.size else 0.0,
        median_deg=float(np.median(valid)) if valid.size else 0.0,
        max_deg=float(valid.max()) if valid.size else 0.0,
        flipped_faces=flipped,
        degenerate_faces=int(degenerate.sum()),
        mu_mean_sq=mu_mean_sq,
        mu_max=mu_max,
        mesh_id=mesh_id,
        stage_label=stage_label,
        n_vertices=n_vertices,
        n_faces=m,
    )


# ── report files ────────────────────────────────────────────────────────────────
def _rows(reports) -> List[Dict]:
    if isinstance(reports, (DistortionReport, dict)):
        reports = [reports]
    return [r.to_row() if isinstance(r, DistortionReport) else dict(r) for r in reports]


def emit_report(
    reports: Union[DistortionReport, Dict, Sequence[Union[DistortionReport, Dict]]],
    path: Union[str, Path],
    format: str = "csv",
) -> Path:
    """Write one or more report rows as CSV (one row per report) or a JSON list."""
    path = Path(path)
    rows = _rows(reports)
    extra = [c for r in rows for c in r if c not in REPORT_COLUMNS]
    columns = REPORT_COLUMNS + list(dict.fromkeys(extra))
    df = pd.DataFrame(rows, columns=columns)
    if format == "csv":
        df.to_csv(path, index=False, float_format=f"%.{config.FLOAT_DIGITS}g")
    elif format == "json":
        df.to_json(path, orient="records", indent=2, double_precision=15)
    else:
        raise ValueError(f"unknown report format {format!r} (expected csv or json)")
    logger.debug("wrote %d report rows to %s", len(df), path)
    return path


def emit_face_field(values: np.ndarray, path: Union[str, Path], name: str = "distortion_deg") -> Path:
    """One scalar per face, for heat-map rendering."""
    path = Path(path)
    values = np.asarray(values, dtype=np.float64)
    pd.DataFrame({"face": np.arange(len(values)), name: values}).to_csv(
        path, index=False, float_format=f"%.{config.FLOAT_DIGITS}g"
    )
    return path


# ── batch aggregation ───────────────────────────────────────────────────────────
def aggregate_reports(
    rows: Union[pd.DataFrame, Iterable[Dict]],
    setting: str = "setting",
    value: str = "mean_deg",
    by: Sequence[str] = ("subset",),
    baseline: Optional[object] = None,
) -> pd.DataFrame:
    """Mean and median over meshes of the per-mesh ``value``, per setting.

    With ``baseline`` (a value of the ``setting`` column), ``improved`` counts meshes whose
    value is strictly lower than under the baseline. ``best`` counts meshes on which the
    setting attains the lowest value of all settings.
    """
    df = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows))
    df = df.dropna(subset=[value])
    keys = [k for k in by if k in df.columns]
    grouped = df.groupby(keys + [setting], sort=True)[value]
    out = grouped.agg(n="count", mean="mean", median="median").reset_index()

    best = best_counts(df, setting=setting, value=value, by=keys)
    out = out.merge(best, on=keys + [setting], how="left")
    out["best"] = out["best"].fillna(0).astype(int)

    if baseline is not None:
        base = df[df[setting] == baseline].set_index(keys + ["mesh_id"])[value]
        joined = df.join(base.rename("baseline_value"), on=keys + ["mesh_id"])
        joined["improved"] = joined[value] < joined["baseline_value"]
        improved = joined.groupby(keys + [setting])["improved"].sum().astype(int).reset_index()
        out = out.merge(improved, on=keys + [setting], how="left")
    return out


def best_counts(
    df: pd.DataFrame,
    setting: str = "setting",
    value: str = "mean_deg",
    by: Sequence[str] = (),
) -> pd.DataFrame:
    """Number of meshes for which each setting has the lowest ``value`` (ties count for all)."""
    keys = list(by)
    lowest = df.groupby(keys + ["mesh_id"])[value].transform("min")
    winners = df[df[value] <= lowest]
    counts = winners.groupby(keys + [setting]).size().rename("best").reset_index()
    return counts
