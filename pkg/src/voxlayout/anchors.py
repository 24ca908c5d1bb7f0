"""Anchors, condition-tensor rasterization, and the training policies.

All condition channels are binary. Semantic channel count N_C includes a
reserved structure channel at index N_C - 1, so architectural voxels can
appear in the generated-context tensor alongside object categories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import BlockFrame, LocalBlock, TAU_CONTEXT
from .errors import InvalidArgument
from .meshio import yaw_matrix

def structure_category_index(num_categories: int) -> int:
    """Reserved semantic index for architectural structure voxels."""
    return num_categories - 1


@dataclass(frozen=True)
class Anchor:
    """Spatial prior for one object: pose, full extents, category one-hot."""

    id: int
    position: tuple[float, float, float]
    heading: tuple[float, float]  # unit (cos, sin) of the yaw angle
    size: tuple[float, float, float]  # full extents, meters
    category: np.ndarray  # one-hot, length N_C

    def __post_init__(self):
        if self.id <= 0:
            raise InvalidArgument(f"anchor id must be positive, got {self.id}")
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        h = np.asarray(self.heading, dtype=np.float64).reshape(2)
        n = float(np.linalg.norm(h))
        if n < 1e-12:
            raise InvalidArgument(f"anchor {self.id}: heading must be nonzero")
        object.__setattr__(self, "heading", (float(h[0] / n), float(h[1] / n)))
        size = tuple(float(v) for v in self.size)
        if any(v <= 0 for v in size):
            raise InvalidArgument(f"anchor {self.id}: size must be positive, got {size}")
        object.__setattr__(self, "size", size)
        y = np.asarray(self.category, dtype=np.float64).reshape(-1)
        nz = np.flatnonzero(y)
        if len(nz) != 1 or y[nz[0]] != 1.0:
            raise InvalidArgument(f"anchor {self.id}: category must be one-hot")
        y.setflags(write=False)
        object.__setattr__(self, "category", y)

    @classmethod
    def create(cls, id, position, heading, size, category_index, num_categories) -> "Anchor":
        if not 0 <= category_index < num_categories:
            raise InvalidArgument(
                f"category index {category_index} outside vocabulary of {num_categories}"
            )
        y = np.zeros(num_categories)
        y[category_index] = 1.0
        return cls(id, tuple(position), tuple(heading), tuple(size), y)

    @property
    def category_index(self) -> int:
        return int(np.flatnonzero(self.category)[0])

    @property
    def num_categories(self) -> int:
        return len(self.category)

    def volume(self) -> float:
        return self.size[0] * self.size[1] * self.size[2]

    def heading_angle(self) -> float:
        return float(np.arctan2(self.heading[1], self.heading[0]))


@dataclass(frozen=True)
class ShiftPolicy:
    """Maximum per-axis anchor shift E; the kernel size follows as 2E + 1."""

    max_shift: tuple[int, int, int]

    def __post_init__(self):
        e = tuple(int(v) for v in self.max_shift)
        if any(v < 0 for v in e):
            raise InvalidArgument(f"max shift must be >= 0 per axis, got {e}")
        object.__setattr__(self, "max_shift", e)

    @property
    def kernel_size(self) -> tuple[int, int, int]:
        return tuple(2 * e + 1 for e in self.max_shift)

    def expansion(self, voxel_size: float) -> np.ndarray:
        """World-unit padding 2 E s_v added to OBB extents."""
        return 2.0 * np.asarray(self.max_shift, dtype=np.float64) * voxel_size

    def validate_shift(self, delta) -> np.ndarray:
        d = np.asarray(delta, dtype=np.int64).reshape(3)
        if (np.abs(d) > np.asarray(self.max_shift)).any():
            raise InvalidArgument(f"shift {tuple(d)} exceeds policy bound {self.max_shift}")
        return d


@dataclass
class ConditionTensors:
    """Binary condition channels for one generation step."""

    generated: np.ndarray  # (N_C, K, K, K) uint8
    pending: np.ndarray  # (N_C, K, K, K) uint8, multi-hot
    target_spatial: np.ndarray  # (2, K, K, K) uint8: OBB mask, anchor kernel
    target_semantic: np.ndarray  # (N_C,), broadcast by consumers


def rasterize_generated_context(block: LocalBlock, num_categories: int) -> np.ndarray:
    """One binary channel per category, set at tau=1 voxels of that label."""
    K = block.resolution
    out = np.zeros((num_categories, K, K, K), dtype=np.uint8)
    ctx = block.state == TAU_CONTEXT
    if ctx.any():
        sem = block.context_semantic[ctx]
        if sem.min() < 0 or sem.max() >= num_categories:
            raise InvalidArgument(
                f"context semantic index outside [0, {num_categories})"
            )
        ijk = np.argwhere(ctx)
        out[sem, ijk[:, 0], ijk[:, 1], ijk[:, 2]] = 1
    return out


def _obb_voxel_mask(
    frame: BlockFrame,
    resolution: int,
    box_center: np.ndarray,
    box_heading,
    half_extents: np.ndarray,
) -> np.ndarray:
    """Voxels of the block whose centers lie inside a closed world-space OBB."""
    K = resolution
    idx = np.indices((K, K, K)).reshape(3, -1).T
    world = frame.block_to_world(idx, K)
    local = (world - box_center) @ yaw_matrix(np.asarray(box_heading))
    inside = (np.abs(local) <= half_extents + 1e-12).all(axis=1)
    return inside.reshape(K, K, K)


def rasterize_pending(
    pending: list[Anchor],
    frame: BlockFrame,
    resolution: int,
    policy: ShiftPolicy,
    num_categories: int,
) -> np.ndarray:
    """Expanded pending OBBs, one channel per category, OR-merged."""
    K = resolution
    out = np.zeros((num_categories, K, K, K), dtype=np.uint8)
    pad = policy.expansion(frame.voxel_size)
    for anchor in pending:
        if anchor.num_categories != num_categories:
            raise InvalidArgument(f"anchor {anchor.id}: vocabulary size mismatch")
        half = (np.asarray(anchor.size) + pad) / 2.0
        mask = _obb_voxel_mask(
            frame, K, np.asarray(anchor.position), anchor.heading, half
        )
        out[anchor.category_index] |= mask
    return out


def rasterize_target(
    anchor: Anchor,
    delta,
    policy: ShiftPolicy,
    frame: BlockFrame,
    resolution: int,
    origin_shift=(0, 0, 0),
) -> np.ndarray:
    """Target conditions: expanded OBB mask and the shifted anchor kernel.

    Channel 0 marks the target OBB expanded to size + 2 E s_v at the
    unshifted anchor pose, so it contains the object under every
    admissible shift. Channel 1 is the solid kernel of size 2E + 1
    centered at the anchor center voxel translated by ``delta``.
    """
    K = resolution
    d = policy.validate_shift(delta)
    dl = np.asarray(origin_shift, dtype=np.int64).reshape(3)

    out = np.zeros((2, K, K, K), dtype=np.uint8)
    half = (np.asarray(anchor.size) + policy.expansion(frame.voxel_size)) / 2.0
    out[0] = _obb_voxel_mask(frame, K, np.asarray(anchor.position), anchor.heading, half)

    # The anchor center sits at block voxel K/2 - origin_shift; the kernel
    # follows the training-time translation delta on the canonical axes.
    center = K // 2 - dl + d
    e = np.asarray(policy.max_shift, dtype=np.int64)
    lo = np.maximum(center - e, 0)
    hi = np.minimum(center + e + 1, K)
    if (lo >= hi).any():
        raise InvalidArgument("anchor kernel lies entirely outside the block")
    out[1, lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]] = 1
    return out


def build_conditions(
    block: LocalBlock,
    target: Anchor,
    pending: list[Anchor],
    policy: ShiftPolicy,
    delta=(0, 0, 0),
    origin_shift=(0, 0, 0),
) -> ConditionTensors:
    n = target.num_categories
    return ConditionTensors(
        generated=rasterize_generated_context(block, n),
        pending=rasterize_pending(pending, block.frame, block.resolution, policy, n),
        target_spatial=rasterize_target(
            target, delta, policy, block.frame, block.resolution, origin_shift
        ),
        target_semantic=np.asarray(target.category, dtype=np.float64),
    )


def sample_shift(policy: ShiftPolicy, rng: np.random.Generator):
    """Draw independent uniform integer shifts (delta, delta_l) in [-E, E]."""
    e = np.asarray(policy.max_shift, dtype=np.int64)
    delta = rng.integers(-e, e + 1)
    delta_l = rng.integers(-e, e + 1)
    return delta, delta_l


def mask_context(objects: list, p: float, rng: np.random.Generator):
    """Partition objects into (generated, pending) by independent coin flips.

    Each object lands in the pending set with probability p.
    """
    if not 0.0 <= p <= 1.0:
        raise InvalidArgument(f"masking probability must be in [0, 1], got {p}")
    draws = rng.random(len(objects))
    generated = [obj for obj, u in zip(objects, draws) if u >= p]
    pending = [obj for obj, u in zip(objects, draws) if u < p]
    return generated, pending
