"""Canonicalized local blocks: extraction, target SDF, and free-space writeback.

A local block is a K-cubed window over the global grid, centered near an
anchor and rotated by the inverse of the anchor heading so the target is
axis-aligned in block coordinates. Each block voxel carries a ternary
state tau: 0 free, 1 context (any other owner, structure included),
2 target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InvalidArgument, OutOfDomain
from .grid import FREE, GlobalGrid
from .meshio import yaw_matrix

TAU_FREE = 0
TAU_CONTEXT = 1
TAU_TARGET = 2

DEFAULT_SDF_TRUNCATION = 8.0


@dataclass(frozen=True)
class BlockFrame:
    """Pose of a local block: world center, yaw heading, voxel size."""

    center: tuple[float, float, float]
    heading: tuple[float, float]
    voxel_size: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        h = np.asarray(self.heading, dtype=np.float64).reshape(2)
        n = float(np.linalg.norm(h))
        if n < 1e-12:
            raise InvalidArgument("frame heading must be nonzero")
        object.__setattr__(self, "heading", (float(h[0] / n), float(h[1] / n)))
        if self.voxel_size <= 0:
            raise InvalidArgument("frame voxel_size must be > 0")

    def rotation(self) -> np.ndarray:
        return yaw_matrix(np.asarray(self.heading))

    def block_to_world(self, indices: np.ndarray, resolution: int) -> np.ndarray:
        """World positions of block voxel centers."""
        local = (np.asarray(indices, dtype=np.float64) + 0.5 - resolution / 2.0)
        local = local * self.voxel_size
        return np.asarray(self.center) + local @ self.rotation().T

    def world_to_block(self, points: np.ndarray, resolution: int) -> np.ndarray:
        """Block voxel indices containing the given world points."""
        rel = (np.asarray(points, dtype=np.float64) - np.asarray(self.center))
        local = rel @ self.rotation()
        return np.floor(local / self.voxel_size + resolution / 2.0).astype(np.int64)


@dataclass
class LocalBlock:
    frame: BlockFrame
    resolution: int
    state: np.ndarray  # (K, K, K) uint8, values in {0, 1, 2}
    context_semantic: np.ndarray  # (K, K, K) int32, valid where state == 1
    sdf: np.ndarray | None = None  # (K, K, K) float64 in [-1, 1] once computed

    def __post_init__(self):
        K = self.resolution
        if K <= 0:
            raise InvalidArgument(f"block resolution must be > 0, got {K}")
        if self.state.shape != (K, K, K):
            raise InvalidArgument("state shape does not match resolution")
        bad = ~np.isin(self.state, (TAU_FREE, TAU_CONTEXT, TAU_TARGET))
        if bad.any():
            raise InvalidArgument("state values must be in {0, 1, 2}")

    def target_indices(self) -> np.ndarray:
        return np.argwhere(self.state == TAU_TARGET)

    def copy(self) -> "LocalBlock":
        return LocalBlock(
            self.frame,
            self.resolution,
            self.state.copy(),
            self.context_semantic.copy(),
            None if self.sdf is None else self.sdf.copy(),
        )


def extract_local_block(
    grid: GlobalGrid,
    anchor,
    resolution: int,
    origin_shift=(0, 0, 0),
    target_id: int | None = None,
) -> LocalBlock:
    """Sample a K-cubed yaw-canonicalized window around an anchor.

    The block center is the anchor position offset by ``origin_shift``
    voxels along the canonical (rotated) axes. Every block voxel reads the
    nearest global voxel; reads outside the grid count as free, which
    keeps blocks near scene boundaries usable.
    """
    shift = np.asarray(origin_shift, dtype=np.int64).reshape(3)
    R = yaw_matrix(np.asarray(anchor.heading))
    center = np.asarray(anchor.position, dtype=np.float64)
    center = center + R @ (shift * grid.spec.voxel_size)
    frame = BlockFrame(tuple(center), tuple(np.asarray(anchor.heading, float)), grid.spec.voxel_size)

    K = resolution
    idx = np.indices((K, K, K)).reshape(3, -1).T
    world = frame.block_to_world(idx, K)
    gidx = grid.spec.world_to_index(world)
    inside = grid.spec.in_bounds(gidx)
    if not inside.any():
        raise OutOfDomain("local block lies entirely outside the grid")

    owner = np.zeros(len(gidx), dtype=np.int32)
    semantic = np.zeros(len(gidx), dtype=np.int32)
    sel = tuple(gidx[inside].T)
    owner[inside] = grid.owner[sel]
    semantic[inside] = grid.semantic[sel]

    state = np.zeros(len(gidx), dtype=np.uint8)
    state[owner != FREE] = TAU_CONTEXT
    if target_id is not None:
        state[owner == target_id] = TAU_TARGET
    ctx_sem = np.where(state == TAU_CONTEXT, semantic, 0).astype(np.int32)

    return LocalBlock(frame, K, state.reshape(K, K, K), ctx_sem.reshape(K, K, K))


def compute_target_sdf(block: LocalBlock, truncation: float = DEFAULT_SDF_TRUNCATION) -> LocalBlock:
    """Fill the block's truncated signed distance field of the target.

    Distances are center-to-center in voxel units with the surface placed
    half a voxel off the occupied centers: outside voxels carry
    (distance to nearest target center) - 0.5, inside voxels carry
    -(distance to nearest free center - 0.5). Values are clipped to
    +-truncation and scaled into [-1, 1]. A block with no target voxel is
    +1 everywhere.
    """
    if truncation <= 0:
        raise InvalidArgument(f"truncation must be > 0, got {truncation}")
    target = block.state == TAU_TARGET
    out = block.copy()
    if not target.any():
        out.sdf = np.ones(target.shape, dtype=np.float64)
        return out

    sdf = np.empty(target.shape, dtype=np.float64)
    outside_d = ndimage.distance_transform_edt(~target)
    sdf[~target] = outside_d[~target] - 0.5
    if target.all():
        sdf[target] = -truncation
    else:
        inside_d = ndimage.distance_transform_edt(target)
        sdf[target] = -(inside_d[target] - 0.5)
    np.clip(sdf, -truncation, truncation, out=sdf)
    out.sdf = sdf / truncation
    return out


def write_back(
    grid: GlobalGrid,
    block: LocalBlock,
    new_id: int,
    category: int,
) -> tuple[GlobalGrid, int]:
    """Copy the block's target voxels into the grid's free space.

    Returns the updated grid and the number of voxels written. Occupied
    voxels are never touched; a zero count is a warning condition for the
    caller, not an error. ``new_id`` must be unused in the grid.
    """
    if new_id <= 0:
        raise InvalidArgument(f"instance ids must be positive, got {new_id}")
    if (grid.owner == new_id).any():
        raise InvalidArgument(f"instance id {new_id} already present in grid")

    out = grid.copy()
    tgt = block.target_indices()
    if not len(tgt):
        return out, 0
    world = block.frame.block_to_world(tgt, block.resolution)
    gidx = grid.spec.world_to_index(world)
    inside = grid.spec.in_bounds(gidx)
    if not inside.any():
        return out, 0
    gidx = np.unique(gidx[inside], axis=0)
    sel = tuple(gidx.T)
    free = out.owner[sel] == FREE
    sel = tuple(gidx[free].T)
    out.owner[sel] = new_id
    out.semantic[sel] = category
    return out, int(free.sum())
