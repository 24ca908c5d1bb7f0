"""Asset retrieval: canonical voxel database, Soft Chamfer scoring,
anisotropic scale gating, and style clustering.

Assets and queries are compared in a shared canonical space: the shape is
yaw-uncanonicalized, stretched per axis onto the unit cube, and sampled at
K_A^3. The Chamfer score therefore measures shape similarity modulo
anisotropic scale; how much of that scale freedom a placement may actually
use is limited separately by the aspect-ratio gate t_a.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import cKDTree

from . import binio
from .errors import InvalidArgument, ParseError
from .grid import GridSpec
from .meshio import Mesh, yaw_matrix
from .voxelize import voxelize_solid

DEFAULT_CANONICAL_RESOLUTION = 64
DEFAULT_SIGMA = 1.5
DEFAULT_SCALE_GATE = 1.5
DEFAULT_IOU_THRESHOLD = 0.3
DEFAULT_SIZE_RATIO = 1.1

DB_MAGIC = "ADB1"


@dataclass
class AssetRecord:
    id: int
    category: int  # vocabulary index
    occupancy: np.ndarray  # (N, 3) int32 canonical voxel indices
    extents: np.ndarray  # (3,) native extents normalized so max axis = 1

    def __post_init__(self):
        self.occupancy = np.asarray(self.occupancy, dtype=np.int32).reshape(-1, 3)
        if not len(self.occupancy):
            raise InvalidArgument(f"asset {self.id}: empty occupancy")
        self.extents = np.asarray(self.extents, dtype=np.float64).reshape(3)
        if (self.extents <= 0).any():
            raise InvalidArgument(f"asset {self.id}: extents must be positive")


@dataclass
class AssetDatabase:
    resolution: int
    records: list[AssetRecord]

    def __post_init__(self):
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise InvalidArgument("duplicate asset ids in database")
        self._by_category: dict[int, list[AssetRecord]] = {}
        for rec in self.records:
            self._by_category.setdefault(rec.category, []).append(rec)

    def categories(self) -> list[int]:
        return sorted(self._by_category)

    def candidates(self, category: int) -> list[AssetRecord]:
        if category not in self._by_category:
            raise InvalidArgument(f"category {category} not in asset database")
        return self._by_category[category]

    def get(self, asset_id: int) -> AssetRecord:
        for rec in self.records:
            if rec.id == asset_id:
                return rec
        raise InvalidArgument(f"asset id {asset_id} not in database")


def canonicalize_mesh(mesh: Mesh, resolution: int = DEFAULT_CANONICAL_RESOLUTION):
    """Voxelize a mesh stretched per axis onto the unit cube.

    Returns (occupancy indices, normalized extents). Solid voxelization:
    surface band plus hole fill.
    """
    lo, hi = mesh.bounds()
    native = hi - lo
    if (native <= 0).any():
        raise InvalidArgument("mesh is flat along an axis; cannot canonicalize")
    verts = (mesh.vertices - lo) / native
    unit = Mesh(verts, mesh.faces)
    spec = GridSpec((0.0, 0.0, 0.0), 1.0 / resolution, (resolution,) * 3)
    occ = voxelize_solid(unit, spec)
    return occ.indices.astype(np.int32), native / native.max()


def build_database(
    meshes: list[tuple[int, int, Mesh]],
    resolution: int = DEFAULT_CANONICAL_RESOLUTION,
) -> AssetDatabase:
    """Canonicalize (id, category, mesh) triples into an AssetDatabase."""
    records = []
    for asset_id, category, mesh in meshes:
        occ, extents = canonicalize_mesh(mesh, resolution)
        records.append(AssetRecord(asset_id, category, occ, extents))
    return AssetDatabase(resolution, records)


@dataclass
class CanonicalQuery:
    """A generated voxel set resampled into canonical space."""

    occupancy: np.ndarray  # (N, 3) int32 canonical indices
    world_extents: np.ndarray  # (3,) meters, in the canonical (yaw-free) frame
    local_min: np.ndarray  # (3,) canonical-frame lower corner, meters
    anchor_position: np.ndarray  # (3,) world meters
    heading: tuple[float, float]


def canonicalize_query(
    voxel_indices: np.ndarray,
    spec: GridSpec,
    anchor,
    resolution: int = DEFAULT_CANONICAL_RESOLUTION,
) -> CanonicalQuery:
    """Map generated world voxels into the K_A^3 canonical cube.

    Undoes the anchor yaw, then stretches the voxel bounding box (padded
    by the half-voxel the centers do not reach) onto the unit cube. Each
    source voxel lands in exactly one canonical cell; a single voxel maps
    to the single cell at the cube center.
    """
    vox = np.asarray(voxel_indices, dtype=np.int64).reshape(-1, 3)
    if not len(vox):
        raise InvalidArgument("cannot canonicalize an empty voxel set")
    centers = spec.index_to_center(vox)
    pos = np.asarray(anchor.position, dtype=np.float64)
    local = (centers - pos) @ yaw_matrix(np.asarray(anchor.heading))
    half = spec.voxel_size / 2.0
    lo = local.min(axis=0) - half
    hi = local.max(axis=0) + half
    extent = hi - lo
    idx = np.floor((local - lo) / extent * resolution).astype(np.int32)
    np.clip(idx, 0, resolution - 1, out=idx)
    occ = np.unique(idx, axis=0)
    return CanonicalQuery(occ, extent, lo, pos, tuple(anchor.heading))


def filter_by_scale(
    query_extents: np.ndarray,
    candidates: list[AssetRecord],
    gate: float = DEFAULT_SCALE_GATE,
) -> list[AssetRecord]:
    """Keep candidates whose normalized extents are within the gate.

    Both extents are normalized so the longest axis is 1; the per-axis
    ratio max(q/c, c/q) must stay <= gate (closed) on every axis. Uniform
    rescaling is free; the gate bounds anisotropic deformation only.
    """
    if gate < 1.0:
        raise InvalidArgument(f"scale gate must be >= 1, got {gate}")
    q = np.asarray(query_extents, dtype=np.float64).reshape(3)
    if (q <= 0).any():
        raise InvalidArgument("query extents must be positive")
    qn = q / q.max()
    kept = []
    for rec in candidates:
        ratio = np.maximum(qn / rec.extents, rec.extents / qn)
        if (ratio <= gate).all():
            kept.append(rec)
    return kept


def soft_chamfer(
    query: np.ndarray, candidate: np.ndarray, sigma: float = DEFAULT_SIGMA
) -> float:
    """Symmetric Gaussian-weighted nearest-neighbor similarity in (0, 1].

    S = (mean_q exp(-d(q, C)^2 / 2 sigma^2)
         + mean_c exp(-d(c, Q)^2 / 2 sigma^2)) / 2
    with exact nearest-neighbor distances.
    """
    if sigma <= 0:
        raise InvalidArgument(f"sigma must be > 0, got {sigma}")
    q = np.asarray(query, dtype=np.float64).reshape(-1, 3)
    c = np.asarray(candidate, dtype=np.float64).reshape(-1, 3)
    if not len(q) or not len(c):
        raise InvalidArgument("soft chamfer needs two nonempty sets")
    d_qc, _ = cKDTree(c).query(q)
    d_cq, _ = cKDTree(q).query(c)
    k = -0.5 / (sigma * sigma)
    return float(0.5 * (np.mean(np.exp(k * d_qc**2)) + np.mean(np.exp(k * d_cq**2))))


@dataclass
class RetrievalResult:
    instance_id: int
    asset_id: int
    score: float
    # Placement of the asset's canonical unit cube into the world:
    # x_world = position + R(heading) @ (offset + u * scale), u in [0,1]^3.
    scale: np.ndarray  # (3,) meters per canonical unit
    offset: np.ndarray  # (3,) canonical-frame corner of the placed box, meters
    position: np.ndarray  # (3,)
    heading: tuple[float, float]
    deform_ratio: np.ndarray  # (3,) per-axis gate ratios actually used


def retrieve(
    query: CanonicalQuery,
    db: AssetDatabase,
    category: int,
    instance_id: int = 0,
    gate: float = DEFAULT_SCALE_GATE,
    sigma: float = DEFAULT_SIGMA,
) -> RetrievalResult | None:
    """Top-1 Soft Chamfer retrieval among scale-gated same-category assets.

    Returns None when no candidate survives the gate. Score ties resolve
    to the lower asset id.
    """
    survivors = filter_by_scale(query.world_extents, db.candidates(category), gate)
    if not survivors:
        return None
    best = None
    qn = query.world_extents / query.world_extents.max()
    for rec in sorted(survivors, key=lambda r: r.id):
        score = soft_chamfer(query.occupancy, rec.occupancy, sigma)
        if best is None or score > best[0]:
            best = (score, rec)
    score, rec = best
    return RetrievalResult(
        instance_id=instance_id,
        asset_id=rec.id,
        score=score,
        scale=query.world_extents.copy(),
        offset=query.local_min.copy(),
        position=query.anchor_position.copy(),
        heading=query.heading,
        deform_ratio=np.maximum(qn / rec.extents, rec.extents / qn),
    )


@dataclass
class StyleCluster:
    members: list[int]  # instance ids
    representative: int | None = None
    asset_id: int | None = None


def _centered(occ: np.ndarray, resolution: int) -> np.ndarray:
    # half-up rounding keeps centering equivariant under integer
    # translation; round-half-to-even does not
    centroid = occ.mean(axis=0)
    shift = np.floor((resolution - 1) / 2.0 - centroid + 0.5).astype(np.int64)
    return occ + shift


def _iou(a: np.ndarray, b: np.ndarray) -> float:
    sa = {tuple(v) for v in a}
    sb = {tuple(v) for v in b}
    inter = len(sa & sb)
    union = len(sa | sb)
    return inter / union if union else 0.0


def cluster_styles(
    instances: list[tuple[int, np.ndarray, np.ndarray]],
    resolution: int = DEFAULT_CANONICAL_RESOLUTION,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    size_ratio: float = DEFAULT_SIZE_RATIO,
) -> list[StyleCluster]:
    """Connected components of same-category instances.

    ``instances`` holds (instance id, canonical occupancy, world extents).
    Two instances are linked when their centroid-centered occupancy IoU
    exceeds ``iou_threshold`` and the worst axis-wise world-size ratio is
    at most ``size_ratio``. Output order follows the smallest member id.
    """
    n = len(instances)
    centered = [_centered(np.asarray(occ, np.int64), resolution) for _, occ, _ in instances]
    extents = [np.asarray(e, np.float64) for _, _, e in instances]

    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            ratio = np.maximum(extents[i] / extents[j], extents[j] / extents[i])
            if ratio.max() > size_ratio:
                continue
            if _iou(centered[i], centered[j]) <= iou_threshold:
                continue
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)

    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(instances[i][0])
    clusters = [StyleCluster(sorted(m)) for m in groups.values()]
    clusters.sort(key=lambda c: c.members[0])
    return clusters


def apply_cluster_assignment(
    clusters: list[StyleCluster],
    results: dict[int, RetrievalResult],
) -> dict[int, RetrievalResult]:
    """Give every cluster member its representative's asset.

    The representative is the member with the highest retrieval score
    (ties to the lower instance id); members keep their own placement
    transforms and scales.
    """
    out: dict[int, RetrievalResult] = {}
    for cluster in clusters:
        missing = [m for m in cluster.members if m not in results]
        if missing:
            raise InvalidArgument(f"cluster members without retrieval results: {missing}")
        rep = min(cluster.members, key=lambda m: (-results[m].score, m))
        cluster.representative = rep
        cluster.asset_id = results[rep].asset_id
        for m in cluster.members:
            out[m] = replace(results[m], asset_id=results[rep].asset_id)
    return out


def save_database(db: AssetDatabase, path: str) -> None:
    with open(path, "wb") as fh:
        binio.write_magic(fh, DB_MAGIC)
        binio.write_u32(fh, db.resolution, len(db.records))
        for rec in db.records:
            binio.write_u32(fh, rec.id, rec.category)
            binio.write_f32(fh, rec.extents)
            mask = np.zeros((db.resolution,) * 3, dtype=np.int32)
            mask[tuple(rec.occupancy.T)] = 1
            runs = binio.rle_encode(mask.ravel())
            binio.write_rle_pairs(fh, [(c, v, 0) for c, v in runs])


def load_database(path: str) -> AssetDatabase:
    with open(path, "rb") as fh:
        binio.read_magic(fh, DB_MAGIC, path)
        resolution, count = binio.read_u32(fh, 2)
        records = []
        for _ in range(count):
            asset_id, category = binio.read_u32(fh, 2)
            extents = binio.read_f32(fh, 3).astype(np.float64)
            runs = binio.read_rle_pairs(fh)
            flat = binio.rle_decode([(c, v) for c, v, _ in runs], np.int32)
            if flat.size != resolution**3:
                raise ParseError(f"asset {asset_id}: occupancy size mismatch", path)
            occ = np.argwhere(flat.reshape((resolution,) * 3) == 1)
            records.append(AssetRecord(int(asset_id), int(category), occ, extents))
    return AssetDatabase(resolution, records)
