"""Closed-form conformal bending of tube coordinates onto a torus (minor radius 1).

Two wrapping modes:

  major   u runs around the major circle; z climbs the meridian with
          theta(z) = 2 atan(k tan(sqrt(R^2 - 1) z / 2)),  k = sqrt((R + 1) / (R - 1))
          conformal factor R + cos(theta); no overlap iff R < sqrt(1 + (2pi / dz)^2)
  minor   u runs once around the meridian, theta(u) = 2 atan(k tan(u / 2)); z runs along
          the major circle with phi = z / sqrt(R^2 - 1)
          conformal factor (R + cos(theta)) / sqrt(R^2 - 1); no overlap iff R > sqrt(1 + (dz / 2pi)^2)

The atan(tan) form jumps by 2pi at every pole of tan; ``continuous_theta`` adds the branch
offset so theta is continuous and increasing.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from tubemap.exceptions import RadiusError
from tubemap.metrics import DistortionReport, angular_distortion
from tubemap.mesh_core import TriMesh
from tubemap.tube_param import TubeCoords, tube_distortion

logger = logging.getLogger("tubemap.bending")

MODES = ("major", "minor")


def major_bound(delta_z: float) -> float:
    return math.sqrt(1.0 + (2.0 * math.pi / delta_z) ** 2)


def minor_bound(delta_z: float) -> float:
    return math.sqrt(1.0 + (delta_z / (2.0 * math.pi)) ** 2)


def _check_radius(mode: str, R: float, delta_z: float) -> None:
    if mode not in MODES:
        raise ValueError(f"unknown bending mode {mode!r} (expected major or minor)")
    if not R > 1.0:
        raise RadiusError(f"major radius must exceed 1, got {R}")
    if mode == "major" and delta_z > 0 and not R < major_bound(delta_z):
        raise RadiusError(f"R={R:.6g} overlaps in major mode (need R < {major_bound(delta_z):.6g})")
    if mode == "minor" and not R > minor_bound(delta_z):
        raise RadiusError(f"R={R:.6g} overlaps in minor mode (need R > {minor_bound(delta_z):.6g})")


@dataclass(frozen=True)
class TorusBend:
    mode: str
    R: float
    delta_z: float
    rho: Optional[float] = None

    def __post_init__(self):
        _check_radius(self.mode, self.R, self.delta_z)


def admissible_radius(mode: str, delta_z: float, rho: float) -> float:
    """R from the dimensionless control: major 1 + rho (bound - 1) with 0 < rho < 1,
    minor rho * bound with rho > 1."""
    if not delta_z > 0:
        raise RadiusError(f"axial extent must be positive, got {delta_z}")
    if mode == "major":
        if not 0.0 < rho < 1.0:
            raise RadiusError(f"rho_major must lie in (0, 1), got {rho}")
        return 1.0 + rho * (major_bound(delta_z) - 1.0)
    if mode == "minor":
        if not rho > 1.0:
            raise RadiusError(f"rho_minor must exceed 1, got {rho}")
        return rho * minor_bound(delta_z)
    raise ValueError(f"unknown bending mode {mode!r} (expected major or minor)")


def continuous_theta(s: np.ndarray, R: float) -> np.ndarray:
    """2 atan(k tan s) continued across the poles of tan, so theta(0) = 0 and theta is increasing."""
    s = np.asarray(s, dtype=np.float64)
    k = math.sqrt((R + 1.0) / (R - 1.0))
    m = np.floor((s + 0.5 * math.pi) / math.pi)
    r = s - m * math.pi
    return 2.0 * np.arctan(k * np.tan(r)) + 2.0 * math.pi * m


def theta_major(zhat: np.ndarray, R: float) -> np.ndarray:
    return continuous_theta(0.5 * math.sqrt(R * R - 1.0) * np.asarray(zhat), R)


def theta_minor(u: np.ndarray, R: float) -> np.ndarray:
    return continuous_theta(0.5 * np.asarray(u), R)


def _torus_point(theta, phi, R) -> np.ndarray:
    ring = R + np.cos(theta)
    return np.stack([ring * np.cos(phi), ring * np.sin(phi), np.sin(theta)], axis=-1)


def major_map(u, zhat, R: float) -> np.ndarray:
    return _torus_point(theta_major(zhat, R), np.asarray(u, dtype=np.float64), R)


def minor_map(u, zhat, R: float) -> np.ndarray:
    phi = np.asarray(zhat, dtype=np.float64) / math.sqrt(R * R - 1.0)
    return _torus_point(theta_minor(u, R), phi, R)


def conformal_factor(mode: str, R: float, u, zhat) -> np.ndarray:
    """lambda with pulled-back metric lambda^2 (du^2 + dz^2)."""
    if mode == "major":
        return R + np.cos(theta_major(zhat, R))
    if mode == "minor":
        return (R + np.cos(theta_minor(u, R))) / math.sqrt(R * R - 1.0)
    raise ValueError(f"unknown bending mode {mode!r} (expected major or minor)")


def _normalized(tube: TubeCoords) -> Tuple[np.ndarray, float]:
    zhat = tube.z - tube.z.min()
    return zhat, float(zhat.max())


def bend_major(tube: TubeCoords, R: float) -> np.ndarray:
    zhat, delta_z = _normalized(tube)
    _check_radius("major", R, delta_z)
    span = float(theta_major(delta_z, R))
    if not span < 2.0 * math.pi:
        raise RadiusError(f"meridian sweep {span:.6g} reaches 2pi")
    return major_map(tube.u, zhat, R)


def bend_minor(tube: TubeCoords, R: float) -> np.ndarray:
    zhat, delta_z = _normalized(tube)
    _check_radius("minor", R, delta_z)
    span = delta_z / math.sqrt(R * R - 1.0)
    if not span < 2.0 * math.pi:
        raise RadiusError(f"major-circle sweep {span:.6g} reaches 2pi")
    return minor_map(tube.u, zhat, R)


def bend(tube: TubeCoords, mode: str, R: Optional[float] = None, rho: Optional[float] = None) -> Tuple[np.ndarray, TorusBend]:
    """Bend with an explicit ``R`` or with ``R`` derived from ``rho``."""
    _, delta_z = _normalized(tube)
    if R is None:
        if rho is None:
            raise ValueError("bend needs R or rho")
        R = admissible_radius(mode, delta_z, rho)
    spec = TorusBend(mode, float(R), delta_z, rho)
    positions = bend_major(tube, R) if mode == "major" else bend_minor(tube, R)
    logger.debug("bent %d vertices (%s, R=%.6g, dz=%.6g)", len(tube), mode, R, delta_z)
    return positions, spec


def added_distortion(mesh: TriMesh, tube: TubeCoords, bent: np.ndarray, mesh_id: str = "") -> Tuple[float, DistortionReport]:
    """Mean distortion of surface -> bent torus minus that of surface -> flat tube chart."""
    bent_report = angular_distortion(mesh, bent, mesh_id=mesh_id, stage_label="bend")
    base = tube_distortion(mesh, tube)
    return bent_report.mean_deg - base.mean_deg, bent_report
