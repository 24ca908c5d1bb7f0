"""World-frame voxel grids with exclusive per-voxel instance ownership.

Axis convention throughout the package: index axis 0 is world x, axis 1 is
world y (up), axis 2 is world z. The floor plane is xz and all object
headings are yaw rotations about y.

Owner values in a :class:`GlobalGrid`: ``0`` marks free space, ``STRUCT``
(-1) marks architectural structure, positive integers are object instance
ids. Exclusivity is structural: one owner array means one owner per voxel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import binio
from .errors import InvalidArgument, ParseError

FREE = 0
STRUCT = -1

GRID_MAGIC = "VXG1"


@dataclass(frozen=True)
class GridSpec:
    """Geometry of a voxel grid: world origin, cubic voxel size, dimensions.

    ``origin`` is the world position of the minimum corner of voxel
    (0, 0, 0); the center of voxel ``(i, j, k)`` sits at
    ``origin + (i + 0.5, j + 0.5, k + 0.5) * voxel_size``.
    """

    origin: tuple[float, float, float]
    voxel_size: float
    dims: tuple[int, int, int]

    def __post_init__(self):
        if self.voxel_size <= 0:
            raise InvalidArgument(f"voxel_size must be > 0, got {self.voxel_size}")
        if any(d <= 0 for d in self.dims):
            raise InvalidArgument(f"dims must be positive, got {self.dims}")
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def origin_array(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=np.float64)

    def world_to_index(self, points: np.ndarray) -> np.ndarray:
        """Map world points to the indices of their containing voxels."""
        points = np.asarray(points, dtype=np.float64)
        return np.floor((points - self.origin_array) / self.voxel_size).astype(np.int64)

    def index_to_center(self, indices: np.ndarray) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.float64)
        return self.origin_array + (indices + 0.5) * self.voxel_size

    def in_bounds(self, indices: np.ndarray) -> np.ndarray:
        indices = np.asarray(indices)
        ok = np.ones(indices.shape[:-1], dtype=bool)
        for ax in range(3):
            ok &= (indices[..., ax] >= 0) & (indices[..., ax] < self.dims[ax])
        return ok


@dataclass
class Occupancy:
    """Sparse set of in-bounds voxel indices within one GridSpec."""

    spec: GridSpec
    indices: np.ndarray  # (N, 3) int64, unique rows

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1, 3)
        if idx.size and not self.spec.in_bounds(idx).all():
            raise InvalidArgument("occupancy indices out of grid bounds")
        self.indices = np.unique(idx, axis=0) if idx.size else idx

    def __len__(self) -> int:
        return self.indices.shape[0]

    def to_mask(self) -> np.ndarray:
        mask = np.zeros(self.spec.dims, dtype=bool)
        if len(self):
            mask[tuple(self.indices.T)] = True
        return mask

    @classmethod
    def from_mask(cls, mask: np.ndarray, spec: GridSpec) -> "Occupancy":
        return cls(spec, np.argwhere(mask))


@dataclass
class GlobalGrid:
    """Exclusive instance/semantic voxel grid over the world frame."""

    spec: GridSpec
    owner: np.ndarray  # int32, spec.dims
    semantic: np.ndarray  # int32, spec.dims; meaningful only where owner != FREE

    @classmethod
    def empty(cls, spec: GridSpec) -> "GlobalGrid":
        return cls(
            spec,
            np.zeros(spec.dims, dtype=np.int32),
            np.zeros(spec.dims, dtype=np.int32),
        )

    def copy(self) -> "GlobalGrid":
        return GlobalGrid(self.spec, self.owner.copy(), self.semantic.copy())

    def instance_ids(self) -> list[int]:
        ids = np.unique(self.owner)
        return [int(i) for i in ids if i > 0]

    def instance_indices(self, instance_id: int) -> np.ndarray:
        return np.argwhere(self.owner == instance_id)

    def object_voxel_sets(self) -> dict[int, np.ndarray]:
        """Per-instance voxel index arrays (structure excluded)."""
        return {i: self.instance_indices(i) for i in self.instance_ids()}

    def occupied_count(self) -> int:
        return int(np.count_nonzero(self.owner))


def resolve_conflicts(
    objects: list[tuple[Occupancy, float, int, int]],
) -> GlobalGrid:
    """Merge per-object occupancies into one exclusive grid.

    ``objects`` is a list of (occupancy, bounding_volume_m3, instance_id,
    category_index). A contested voxel goes to the object with the larger
    bounding volume; equal volumes fall back to the lower instance id.
    """
    if not objects:
        raise InvalidArgument("resolve_conflicts requires at least one object")
    spec = objects[0][0].spec
    ids = [obj[2] for obj in objects]
    if len(set(ids)) != len(ids):
        raise InvalidArgument(f"duplicate instance ids: {sorted(ids)}")
    for occ, _, oid, _ in objects:
        if occ.spec != spec:
            raise InvalidArgument("all occupancies must share one GridSpec")
        if oid <= 0:
            raise InvalidArgument(f"instance ids must be positive, got {oid}")

    grid = GlobalGrid.empty(spec)
    # Writing in priority order makes first-claim-wins equal to the
    # volume-then-id rule on contested voxels.
    ranked = sorted(objects, key=lambda o: (-o[1], o[2]))
    for occ, _, oid, cat in ranked:
        if not len(occ):
            continue
        ijk = tuple(occ.indices.T)
        free = grid.owner[ijk] == FREE
        sel = tuple(occ.indices[free].T)
        grid.owner[sel] = oid
        grid.semantic[sel] = cat
    return grid


def save_grid(grid: GlobalGrid, path: str) -> None:
    """Write a grid in the VXG1 format (RLE over flattened C order)."""
    with open(path, "wb") as fh:
        binio.write_magic(fh, GRID_MAGIC)
        binio.write_u32(fh, *grid.spec.dims)
        binio.write_f32(fh, grid.spec.origin)
        binio.write_f32(fh, [grid.spec.voxel_size])
        runs = binio.rle_encode_pairs(grid.owner.ravel(), grid.semantic.ravel())
        binio.write_rle_pairs(fh, runs)


def load_grid(path: str) -> GlobalGrid:
    with open(path, "rb") as fh:
        binio.read_magic(fh, GRID_MAGIC, path)
        dims = binio.read_u32(fh, 3)
        origin = tuple(float(v) for v in binio.read_f32(fh, 3))
        voxel_size = float(binio.read_f32(fh, 1)[0])
        runs = binio.read_rle_pairs(fh)
    spec = GridSpec(origin, voxel_size, dims)
    total = dims[0] * dims[1] * dims[2]
    owner = binio.rle_decode([(c, a) for c, a, _ in runs], np.int32)
    semantic = binio.rle_decode([(c, b) for c, _, b in runs], np.int32)
    if owner.size != total:
        raise ParseError(f"RLE payload covers {owner.size} voxels, grid has {total}", path)
    return GlobalGrid(spec, owner.reshape(dims), semantic.reshape(dims))
