"""Physical-plausibility metrics for placed scenes.

Counting metrics (pairwise intersection, overlap ratio, floor and shelf
violations) operate on per-object solid voxel sets produced by
``eval_voxelize`` at the evaluation pitch, which is independent of the
generation grid. Geometric checks (shelf collision, floating) work on the
placed meshes directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, NumericDomainError
from .grid import GridSpec
from .meshio import Mesh
from .voxelize import voxelize_solid

ROOM_PITCH = 0.02
SHELF_PITCH = 0.012
DEFAULT_ETA = 0.02
DEFAULT_OPEN_MARGIN = 0.012
DEFAULT_SIDE_MARGIN = 0.036
DEFAULT_INTRUSION_MARGIN = 0.012
DEFAULT_FLOAT_TOLERANCE = 0.01
DEFAULT_OR_EPSILON = 1e-9


@dataclass
class EvalObject:
    id: int
    category: int
    mesh: Mesh


@dataclass
class EvalScene:
    objects: list[EvalObject]
    pitch: float
    floor_polygon: np.ndarray | None = None  # (M, 2) xz vertices, meters
    shelf_box: tuple[np.ndarray, np.ndarray] | None = None  # (min, max) corners
    opening: tuple[int, int] = (1, 1)  # (axis, sign): open face of the shelf
    structure: Mesh | None = None

    def __post_init__(self):
        if self.pitch <= 0:
            raise InvalidArgument(f"evaluation pitch must be > 0, got {self.pitch}")
        if self.floor_polygon is not None:
            poly = np.asarray(self.floor_polygon, dtype=np.float64).reshape(-1, 2)
            if len(poly) < 3:
                raise InvalidArgument("floor polygon needs at least 3 vertices")
            self.floor_polygon = poly
        if self.opening[0] not in (0, 1, 2) or self.opening[1] not in (-1, 1):
            raise InvalidArgument(f"opening must be (axis, +-1), got {self.opening}")


def eval_voxelize(scene: EvalScene) -> tuple[list[np.ndarray], GridSpec]:
    """Solid per-object voxel sets in one shared world-aligned grid.

    The grid origin derives from the scene bounds, so translating the
    whole scene translates the voxelization with it exactly.
    """
    if not scene.objects:
        return [], GridSpec((0.0, 0.0, 0.0), scene.pitch, (1, 1, 1))
    los, his = zip(*(o.mesh.bounds() for o in scene.objects))
    pad = 2.0 * scene.pitch
    lo = np.min(los, axis=0) - pad
    hi = np.max(his, axis=0) + pad
    dims = tuple(int(np.ceil(v)) for v in (hi - lo) / scene.pitch)
    spec = GridSpec(tuple(lo), scene.pitch, dims)
    return [voxelize_solid(o.mesh, spec).indices for o in scene.objects], spec


def _linearize(voxel_sets: list[np.ndarray]) -> list[np.ndarray]:
    """Sorted unique 1-D keys for set arithmetic on (N, 3) index arrays."""
    arrays = [np.asarray(v, dtype=np.int64).reshape(-1, 3) for v in voxel_sets]
    stacked = [a for a in arrays if len(a)]
    if not stacked:
        return [np.empty(0, dtype=np.int64) for _ in arrays]
    lo = np.min([a.min(axis=0) for a in stacked], axis=0)
    hi = np.max([a.max(axis=0) for a in stacked], axis=0)
    span = hi - lo + 1
    out = []
    for a in arrays:
        if not len(a):
            out.append(np.empty(0, dtype=np.int64))
            continue
        rel = a - lo
        keys = (rel[:, 0] * span[1] + rel[:, 1]) * span[2] + rel[:, 2]
        out.append(np.unique(keys))
    return out


def pairwise_intersection(voxel_sets: list[np.ndarray]) -> float:
    """Mean over pairs of max(|Vi n Vj| / |Vi|, |Vi n Vj| / |Vj|)."""
    keys = _linearize(voxel_sets)
    for i, k in enumerate(keys):
        if not len(k):
            raise InvalidArgument(f"object {i} has an empty voxel set")
    n = len(keys)
    if n < 2:
        return 0.0
    total = 0.0
    pairs = 0
    for i in range(n):
        for j in range(i + 1, n):
            inter = len(np.intersect1d(keys[i], keys[j], assume_unique=True))
            total += max(inter / len(keys[i]), inter / len(keys[j]))
            pairs += 1
    return total / pairs


def overlap_ratio(voxel_sets: list[np.ndarray], epsilon: float = DEFAULT_OR_EPSILON) -> float:
    """Sum of pairwise intersections over the non-overlapped volume."""
    keys = _linearize(voxel_sets)
    for i, k in enumerate(keys):
        if not len(k):
            raise InvalidArgument(f"object {i} has an empty voxel set")
    inter_sum = 0
    for i in range(len(keys)):
        for j in range(i + 1, len(keys)):
            inter_sum += len(np.intersect1d(keys[i], keys[j], assume_unique=True))
    size_sum = sum(len(k) for k in keys)
    return inter_sum / (size_sum - inter_sum + epsilon)


def polygon_signed_distance(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Signed distance in the plane: negative inside, positive outside."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    poly = np.asarray(polygon, dtype=np.float64).reshape(-1, 2)
    a = poly
    b = np.roll(poly, -1, axis=0)

    dist = np.full(len(p), np.inf)
    inside = np.zeros(len(p), dtype=bool)
    for av, bv in zip(a, b):
        e = bv - av
        ee = float(e @ e)
        rel = p - av
        t = np.clip(rel @ e / ee, 0.0, 1.0) if ee > 0 else np.zeros(len(p))
        diff = rel - t[:, None] * e
        dist = np.minimum(dist, np.einsum("ij,ij->i", diff, diff))
        # Even-odd crossing count against the horizontal ray through p.
        cond = (av[1] > p[:, 1]) != (bv[1] > p[:, 1])
        if ee > 0:
            xs = av[0] + (p[:, 1] - av[1]) / (bv[1] - av[1] + 1e-300) * e[0]
            inside ^= cond & (p[:, 0] < xs)
    dist = np.sqrt(dist)
    return np.where(inside, -dist, dist)


def floor_violations(
    voxel_sets: list[np.ndarray],
    spec: GridSpec,
    polygon: np.ndarray,
    eta: float = DEFAULT_ETA,
) -> tuple[float, float]:
    """(R_o, R_vo): objects with any out-of-floor voxel, and the voxel rate.

    A voxel is out when its center, projected to the floor plane, lies
    more than ``eta`` outside the polygon.
    """
    if not voxel_sets:
        return 0.0, 0.0
    out_objects = 0
    out_voxels = 0
    total_voxels = 0
    for vox in voxel_sets:
        vox = np.asarray(vox, dtype=np.int64).reshape(-1, 3)
        if not len(vox):
            raise InvalidArgument("empty voxel set in floor check")
        centers = spec.index_to_center(vox)
        sd = polygon_signed_distance(centers[:, [0, 2]], polygon)
        out = sd > eta
        out_objects += bool(out.any())
        out_voxels += int(out.sum())
        total_voxels += len(vox)
    return out_objects / len(voxel_sets), out_voxels / total_voxels


def shelf_out_of_bounds(
    voxel_sets: list[np.ndarray],
    spec: GridSpec,
    shelf_box: tuple[np.ndarray, np.ndarray],
    opening: tuple[int, int] = (1, 1),
    open_margin: float = DEFAULT_OPEN_MARGIN,
    side_margin: float = DEFAULT_SIDE_MARGIN,
) -> float:
    """Fraction of objects escaping the margin-tolerant shelf volume.

    Spill past the open face is benign when the spilling voxels project
    inside the physical aperture and the object violates no other face.
    """
    if not voxel_sets:
        return 0.0
    box_lo = np.asarray(shelf_box[0], dtype=np.float64)
    box_hi = np.asarray(shelf_box[1], dtype=np.float64)
    if (box_hi <= box_lo).any():
        raise InvalidArgument("shelf box must have positive extent on every axis")
    axis, sign = opening
    margin_lo = np.full(3, side_margin)
    margin_hi = np.full(3, side_margin)
    if sign > 0:
        margin_hi[axis] = open_margin
    else:
        margin_lo[axis] = open_margin
    lo = box_lo - margin_lo
    hi = box_hi + margin_hi

    others = [ax for ax in range(3) if ax != axis]
    out_objects = 0
    for vox in voxel_sets:
        vox = np.asarray(vox, dtype=np.int64).reshape(-1, 3)
        if not len(vox):
            raise InvalidArgument("empty voxel set in shelf check")
        c = spec.index_to_center(vox)
        violating = ((c < lo) | (c > hi)).any(axis=1)
        if not violating.any():
            continue
        v = c[violating]
        through_open = v[:, axis] > hi[axis] if sign > 0 else v[:, axis] < lo[axis]
        # The aperture is the unexpanded opening: spill over a wall edge is
        # not a pass through the opening even when side tolerances would
        # absorb its lateral position.
        proj_ok = np.ones(len(v), dtype=bool)
        for ax in others:
            proj_ok &= (v[:, ax] >= box_lo[ax]) & (v[:, ax] <= box_hi[ax])
        benign = through_open & proj_ok
        if (~benign).any():
            out_objects += 1
    return out_objects / len(voxel_sets)


def _triangle_box_overlap(tri: np.ndarray, center: np.ndarray, half: np.ndarray) -> bool:
    """Separating-axis test between a triangle and an axis-aligned box."""
    v = tri - center
    e = np.array([v[1] - v[0], v[2] - v[1], v[0] - v[2]])

    # Box face normals: the triangle's AABB against the box.
    if (v.max(axis=0) < -half).any() or (v.min(axis=0) > half).any():
        return False

    # Triangle plane.
    n = np.cross(e[0], e[1])
    d = float(n @ v[0])
    r = float(np.abs(n) @ half)
    if abs(d) > r:
        return False

    # Nine edge cross-product axes.
    for i in range(3):
        for ax in range(3):
            axis = np.zeros(3)
            axis[ax] = 1.0
            a = np.cross(e[i], axis)
            if not a.any():
                continue
            p = v @ a
            r = float(np.abs(a) @ half)
            if p.min() > r or p.max() < -r:
                return False
    return True


def shelf_collision(
    object_boxes: list[tuple[np.ndarray, np.ndarray]],
    shelf_triangles: np.ndarray,
    margin: float = DEFAULT_INTRUSION_MARGIN,
) -> float:
    """Fraction of objects whose margin-shrunk AABB meets a shelf triangle.

    A box that inverts under shrinking is treated as empty (no collision).
    """
    if margin < 0:
        raise InvalidArgument(f"intrusion margin must be >= 0, got {margin}")
    if not object_boxes:
        return 0.0
    tris = np.asarray(shelf_triangles, dtype=np.float64).reshape(-1, 3, 3)
    hits = 0
    for lo, hi in object_boxes:
        lo = np.asarray(lo, dtype=np.float64) + margin
        hi = np.asarray(hi, dtype=np.float64) - margin
        if (lo >= hi).any():
            continue
        center = (lo + hi) / 2.0
        half = (hi - lo) / 2.0
        if any(_triangle_box_overlap(t, center, half) for t in tris):
            hits += 1
    return hits / len(object_boxes)


def _support_height(point_xz: np.ndarray, y_cap: float, triangles: np.ndarray) -> float | None:
    """Highest surface height at (x, z) no higher than y_cap, or None."""
    best = None
    px, pz = point_xz
    for tri in triangles:
        x = tri[:, 0]
        z = tri[:, 2]
        d = (x[1] - x[0]) * (z[2] - z[0]) - (x[2] - x[0]) * (z[1] - z[0])
        if abs(d) < 1e-18:
            continue
        w1 = ((px - x[0]) * (z[2] - z[0]) - (pz - z[0]) * (x[2] - x[0])) / d
        w2 = ((pz - z[0]) * (x[1] - x[0]) - (px - x[0]) * (z[1] - z[0])) / d
        if w1 < -1e-12 or w2 < -1e-12 or w1 + w2 > 1 + 1e-12:
            continue
        y = tri[0, 1] + w1 * (tri[1, 1] - tri[0, 1]) + w2 * (tri[2, 1] - tri[0, 1])
        if y <= y_cap + 1e-9 and (best is None or y > best):
            best = float(y)
    return best


def floating_rate(
    objects: list[EvalObject],
    support: Mesh | None = None,
    tolerance: float = DEFAULT_FLOAT_TOLERANCE,
) -> float:
    """Fraction of objects hanging above any support by more than the
    tolerance.

    The probe is a vertical ray through the object's bottom center;
    support surfaces are the shelf/structure mesh plus all other objects.
    """
    if tolerance < 0:
        raise InvalidArgument(f"float tolerance must be >= 0, got {tolerance}")
    if not objects:
        return 0.0
    floating = 0
    for obj in objects:
        lo, hi = obj.mesh.bounds()
        probe = np.array([(lo[0] + hi[0]) / 2.0, (lo[2] + hi[2]) / 2.0])
        h_bottom = float(lo[1])
        tris = []
        if support is not None:
            tris.append(support.triangles())
        for other in objects:
            if other.id != obj.id:
                tris.append(other.mesh.triangles())
        h_sup = None
        if tris:
            h_sup = _support_height(probe, h_bottom, np.concatenate(tris))
        if h_sup is None or h_bottom - h_sup > tolerance:
            floating += 1
    return floating / len(objects)


def category_diversity(retrievals: list[tuple[int, int]]) -> float:
    """Share-weighted unique-asset utilization over (category, asset) pairs."""
    if not retrievals:
        raise InvalidArgument("category diversity needs at least one retrieval")
    per_cat: dict[int, list[int]] = {}
    for category, asset_id in retrievals:
        per_cat.setdefault(category, []).append(asset_id)
    unique_total = sum(len(set(v)) for v in per_cat.values())
    return unique_total / len(retrievals)


def frechet_distance(
    mu_r: np.ndarray, sigma_r: np.ndarray, mu_g: np.ndarray, sigma_g: np.ndarray
) -> float:
    """Frechet distance between two Gaussians from their statistics."""
    mu_r = np.asarray(mu_r, dtype=np.float64).reshape(-1)
    mu_g = np.asarray(mu_g, dtype=np.float64).reshape(-1)
    sigma_r = np.asarray(sigma_r, dtype=np.float64)
    sigma_g = np.asarray(sigma_g, dtype=np.float64)
    d = len(mu_r)
    if mu_g.shape != (d,) or sigma_r.shape != (d, d) or sigma_g.shape != (d, d):
        raise InvalidArgument("statistic dimensions do not match")
    if not np.allclose(sigma_r, sigma_r.T, atol=1e-8) or not np.allclose(
        sigma_g, sigma_g.T, atol=1e-8
    ):
        raise NumericDomainError("covariance matrices must be symmetric")

    def _psd_sqrt(m: np.ndarray) -> np.ndarray:
        w, u = np.linalg.eigh((m + m.T) / 2.0)
        if (w < -1e-8).any():
            raise NumericDomainError(f"covariance has negative eigenvalue {w.min():g}")
        return (u * np.sqrt(np.clip(w, 0.0, None))) @ u.T

    root_r = _psd_sqrt(sigma_r)
    # sqrt(S_r S_g) has the same spectrum as the symmetric sqrt(S_r) S_g sqrt(S_r).
    m = root_r @ sigma_g @ root_r
    w = np.linalg.eigvalsh((m + m.T) / 2.0)
    if (w < -1e-8).any():
        raise NumericDomainError(f"product matrix has negative eigenvalue {w.min():g}")
    trace_sqrt = np.sqrt(np.clip(w, 0.0, None)).sum()
    diff = mu_r - mu_g
    value = float(diff @ diff + np.trace(sigma_r) + np.trace(sigma_g) - 2.0 * trace_sqrt)
    return max(value, 0.0)


@dataclass
class SceneMetrics:
    name: str
    values: dict[str, float] = field(default_factory=dict)


@dataclass
class MetricsReport:
    config: dict[str, object]
    scenes: list[SceneMetrics] = field(default_factory=list)

    SCALED = ("I_p", "OR")  # reported x1000

    def aggregate(self) -> dict[str, float]:
        keys: list[str] = []
        for s in self.scenes:
            for k in s.values:
                if k not in keys:
                    keys.append(k)
        return {
            k: float(np.mean([s.values[k] for s in self.scenes if k in s.values]))
            for k in keys
        }

    def scaled(self, key: str, value: float) -> float:
        return value * 1000.0 if key in self.SCALED else value
