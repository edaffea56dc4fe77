"""Error types raised by tubemap.

Everything derives from ``TubemapError`` and from the matching builtin, so callers that
already catch ``ValueError`` / ``RuntimeError`` keep working.
"""
from __future__ import annotations

from typing import Optional


class TubemapError(Exception):
    """Base class for all tubemap failures."""


class MeshError(TubemapError, ValueError):
    """Invalid mesh input."""


class MeshFormatError(MeshError):
    """An OBJ/OFF file could not be parsed."""


class NonManifoldError(MeshError):
    """Edge- or vertex-manifoldness (or orientation consistency) is violated."""


class TopologyError(MeshError):
    """The mesh does not have the boundary structure a stage requires."""


class DegenerateFaceError(MeshError):
    """A face has (near) zero area."""

    def __init__(self, message: str, face: Optional[int] = None):
        super().__init__(message)
        self.face = face


class ConstraintError(TubemapError, ValueError):
    """Pins and ties that contradict each other, or a system left under-constrained."""


class SolverError(TubemapError, RuntimeError):
    """The reduced sparse system could not be solved to tolerance."""


class SeamError(TubemapError, ValueError):
    """No admissible seam between the two boundary loops."""


class GlueError(TubemapError, ValueError):
    """Twin vertices disagree when gluing a field back across the seam."""


class NonAdmissibleError(TubemapError, ValueError):
    """A Beltrami coefficient (or parameter) outside its admissible range."""


class RadiusError(NonAdmissibleError):
    """A torus radius or radius control outside the no-overlap range."""


class SpecError(TubemapError, ValueError):
    """Invalid synthetic tube specification."""
