"""Sequential anchor-conditioned scene assembly.

Anchors are processed largest first; each step extracts the local block
around the anchor, rasterizes conditions from what is already placed and
what is still pending, asks a generator for target voxels, and writes them
back into free space only. Exclusivity is therefore structural: no step
can disturb earlier geometry.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .anchors import Anchor, ShiftPolicy, build_conditions, structure_category_index
from .blocks import TAU_FREE, TAU_TARGET, LocalBlock, compute_target_sdf, extract_local_block, write_back
from .codec import LatentGrid, pooling_decode, pooling_encode
from .diffusion import OracleDenoiser, Schedule, forward_sample, sample
from .errors import InvalidArgument
from .grid import STRUCT, GlobalGrid, GridSpec
from .meshio import Mesh
from .retrieval import AssetDatabase
from .voxelize import voxelize_surface


def plan_order(anchors: list[Anchor]) -> list[Anchor]:
    """Descending bounding volume, ties broken by ascending id."""
    if not anchors:
        raise InvalidArgument("plan_order needs at least one anchor")
    return sorted(anchors, key=lambda a: (-a.volume(), a.id))


@dataclass
class GenerationEntry:
    anchor_id: int
    category: int
    written: int
    skipped: bool
    seconds: float


@dataclass
class GenerationReport:
    entries: list[GenerationEntry] = field(default_factory=list)

    def skipped_ids(self) -> list[int]:
        return [e.anchor_id for e in self.entries if e.skipped]

    def as_text(self) -> str:
        lines = ["anchor\tcategory\twritten\tskipped\tseconds"]
        for e in self.entries:
            lines.append(
                f"{e.anchor_id}\t{e.category}\t{e.written}\t"
                f"{'yes' if e.skipped else 'no'}\t{e.seconds:.4f}"
            )
        return "\n".join(lines) + "\n"


class TemplateGenerator:
    """Asset-backed stand-in for the learned generator.

    Picks the database asset whose aspect best matches the anchor size
    (subject to the anisotropic gate), stamps it into the anchor's own
    OBB, and keeps only voxels the block reports as free.
    """

    def __init__(self, db: AssetDatabase, gate: float = 1.5):
        self.db = db
        self.gate = gate

    def __call__(self, block: LocalBlock, conditions, anchor: Anchor, rng=None) -> np.ndarray:
        candidates = self.db.candidates(anchor.category_index)
        size = np.asarray(anchor.size, dtype=np.float64)
        qn = size / size.max()
        best = None
        for rec in sorted(candidates, key=lambda r: r.id):
            ratio = float(np.maximum(qn / rec.extents, rec.extents / qn).max())
            if ratio > self.gate:
                continue
            if best is None or ratio < best[0]:
                best = (ratio, rec)
        if best is None:
            return np.empty((0, 3), dtype=np.int64)
        rec = best[1]

        K = block.resolution
        s_v = block.frame.voxel_size
        mask = np.zeros((self.db.resolution,) * 3, dtype=bool)
        mask[tuple(rec.occupancy.T)] = True

        # Anchor center in block coordinates; the block frame shares the
        # anchor heading, so the target OBB is axis-aligned here.
        idx = np.indices((K, K, K)).reshape(3, -1).T
        local = (idx + 0.5 - K / 2.0) * s_v
        rel = local - _anchor_local_offset(block, anchor)
        half = size / 2.0
        inside = (np.abs(rel) <= half).all(axis=1)
        if not inside.any():
            return np.empty((0, 3), dtype=np.int64)

        u = (rel[inside] + half) / size  # [0, 1]^3 inside the OBB
        cano = np.clip(
            np.floor(u * self.db.resolution).astype(np.int64),
            0,
            self.db.resolution - 1,
        )
        hit = mask[tuple(cano.T)]
        chosen = idx[inside][hit]
        free = block.state[tuple(chosen.T)] == TAU_FREE
        return chosen[free]


def _anchor_local_offset(block: LocalBlock, anchor: Anchor) -> np.ndarray:
    """Anchor position expressed in the block's canonical frame (meters)."""
    rel = np.asarray(anchor.position, np.float64) - np.asarray(block.frame.center)
    return rel @ block.frame.rotation()


class DiffusionGenerator:
    """Runs a proposal through the latent diffusion round trip.

    An inner generator supplies the clean target; the pooling codec maps
    it to latents, the reverse chain (default: oracle denoiser on the
    clean latent) reconstructs them, and the decoded target voxels are
    clipped back to the block's free space. With the oracle denoiser this
    exercises the full schedule while staying deterministic per seed.
    """

    def __init__(
        self,
        inner,
        sched: Schedule,
        denoiser_factory=None,
        mode: str = "deterministic",
    ):
        self.inner = inner
        self.sched = sched
        self.denoiser_factory = denoiser_factory or (lambda z0: OracleDenoiser(z0, sched))
        self.mode = mode

    def __call__(self, block: LocalBlock, conditions, anchor: Anchor, rng=None) -> np.ndarray:
        rng = rng or np.random.default_rng(0)
        proposal = self.inner(block, conditions, anchor, rng)
        if not len(proposal):
            return proposal
        clean = block.copy()
        clean.state[:] = TAU_FREE
        clean.state[tuple(proposal.T)] = TAU_TARGET
        clean = compute_target_sdf(clean)
        z0 = pooling_encode(clean).values

        eps = rng.standard_normal(z0.shape)
        z_T = forward_sample(z0, self.sched.num_steps, eps, self.sched)
        denoiser = self.denoiser_factory(z0)
        z_hat = sample(z_T, denoiser, conditions, self.sched, self.mode, rng)

        decoded = pooling_decode(LatentGrid(z_hat), block.frame, block.resolution)
        out = np.argwhere(decoded.state == TAU_TARGET)
        if not len(out):
            return out
        free = block.state[tuple(out.T)] == TAU_FREE
        obb = conditions.target_spatial[0][tuple(out.T)] == 1
        return out[free & obb]


def generate_scene(
    anchors: list[Anchor],
    structure: Mesh | None,
    generator,
    spec: GridSpec,
    seed: int = 0,
    resolution: int = 64,
    policy: ShiftPolicy | None = None,
) -> tuple[GlobalGrid, GenerationReport]:
    """Voxelize structure, then place every anchor in planned order."""
    ids = [a.id for a in anchors]
    if len(set(ids)) != len(ids):
        raise InvalidArgument(f"duplicate anchor ids: {sorted(ids)}")

    grid = GlobalGrid.empty(spec)
    if structure is not None:
        occ = voxelize_surface(structure, spec)
        if len(occ):
            sel = tuple(occ.indices.T)
            grid.owner[sel] = STRUCT
            if anchors:
                grid.semantic[sel] = structure_category_index(anchors[0].num_categories)

    report = GenerationReport()
    if not anchors:
        return grid, report

    policy = policy or ShiftPolicy((0, 0, 0))
    rng = np.random.default_rng(seed)
    ordered = plan_order(anchors)
    remaining = list(ordered)
    for anchor in ordered:
        t0 = time.perf_counter()
        remaining = [a for a in remaining if a.id != anchor.id]
        block = extract_local_block(grid, anchor, resolution)
        conditions = build_conditions(block, anchor, remaining, policy)
        produced = generator(block, conditions, anchor, rng)
        produced = np.asarray(produced, dtype=np.int64).reshape(-1, 3)
        written = 0
        if len(produced):
            staged = block.copy()
            staged.state[tuple(produced.T)] = TAU_TARGET
            grid, written = write_back(grid, staged, anchor.id, anchor.category_index)
        report.entries.append(
            GenerationEntry(
                anchor.id,
                anchor.category_index,
                written,
                written == 0,
                time.perf_counter() - t0,
            )
        )
    return grid, report
