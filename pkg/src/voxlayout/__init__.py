"""Exclusive voxel scene layout toolkit.

Subpackages cover the full pipeline: world grids and voxelization
(:mod:`voxlayout.grid`, :mod:`voxlayout.voxelize`), local blocks and
conditioning (:mod:`voxlayout.blocks`, :mod:`voxlayout.anchors`), the
latent codec and diffusion math (:mod:`voxlayout.codec`,
:mod:`voxlayout.diffusion`), scene assembly (:mod:`voxlayout.assembly`),
asset retrieval (:mod:`voxlayout.retrieval`), evaluation metrics
(:mod:`voxlayout.metrics`), and rendering/reporting.
"""

from .errors import (
    InvalidArgument,
    NumericDomainError,
    OutOfDomain,
    ParseError,
    VoxLayoutError,
)

__version__ = "0.1.0"

__all__ = [
    "InvalidArgument",
    "NumericDomainError",
    "OutOfDomain",
    "ParseError",
    "VoxLayoutError",
    "__version__",
]
