"""End-to-end acceptance checks for the voxlayout pipeline.

Each test prints a single [PASS]/[FAIL] verdict line with the measured
numbers (run with -s to see them on success) and then asserts. The checks
exercise the public API only: exclusive ownership under randomized
generation, writeback preservation, the diffusion identities and forward
moments, the Soft Chamfer closed forms, brute-force agreement of the
overlap metrics, the plausibility tolerance boundaries, the Frechet
closed forms, preset golden files, policy statistics, and a single-worker
runtime floor for a full shelf scene.
"""

import time
from pathlib import Path

import numpy as np
import scipy.stats

from voxlayout.anchors import Anchor, ShiftPolicy, mask_context, sample_shift
from voxlayout.assembly import TemplateGenerator, generate_scene
from voxlayout.blocks import TAU_TARGET, extract_local_block, write_back
from voxlayout.config import dump_config, preset
from voxlayout.diffusion import (
    OracleDenoiser,
    forward_sample,
    make_schedule,
    recover_z0,
    sample,
    velocity_target,
)
from voxlayout.grid import FREE, GlobalGrid, GridSpec
from voxlayout.meshio import box_mesh, open_box_mesh, yaw_matrix
from voxlayout.metrics import (
    floor_violations,
    frechet_distance,
    category_diversity,
    overlap_ratio,
    pairwise_intersection,
    shelf_collision,
    shelf_out_of_bounds,
    floating_rate,
    EvalObject,
)
from voxlayout.retrieval import build_database, canonicalize_query, retrieve, soft_chamfer

GOLDEN = Path(__file__).parent / "golden"


def _verdict(ok: bool, name: str, details: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {details}")
    assert ok, f"{name}: {details}"


def _asset_db(resolution):
    meshes = [
        (1, 0, box_mesh((1.0, 1.0, 1.0))),
        (2, 1, box_mesh((0.5, 1.0, 0.5))),
        (3, 2, box_mesh((1.0, 0.5, 0.7))),
        (4, 3, box_mesh((0.8, 0.8, 0.4))),
    ]
    return build_database(meshes, resolution=resolution)


def test_exclusive_ownership_randomized_scenes():
    db = _asset_db(16)
    spec = GridSpec((0.0, 0.0, 0.0), 0.075, (96, 32, 96))
    # anchor boxes follow their category's asset shape so the aspect gate
    # stays open and nearly every anchor actually stamps voxels
    shapes = {
        0: np.array([1.0, 1.0, 1.0]),
        1: np.array([0.5, 1.0, 0.5]),
        2: np.array([1.0, 0.5, 0.7]),
        3: np.array([0.8, 0.8, 0.4]),
    }
    rng = np.random.default_rng(11)
    started = time.perf_counter()
    bad_or = 0
    bad_pairs = 0
    placed = 0
    for scene in range(100):
        n = int(rng.integers(3, 13))
        anchors = []
        for i in range(n):
            cat = int(rng.integers(0, 4))
            base = rng.uniform(0.45, 0.9)
            size = shapes[cat] * base * rng.uniform(0.9, 1.1, 3)
            pos = np.array(
                [rng.uniform(0.8, 6.4), size[1] / 2 + 0.05, rng.uniform(0.8, 6.4)]
            )
            theta = rng.uniform(0.0, 2 * np.pi)
            anchors.append(
                Anchor.create(
                    i + 1, pos, (np.cos(theta), np.sin(theta)), size, cat, 5
                )
            )
        grid, report = generate_scene(
            anchors, None, TemplateGenerator(db), spec, seed=scene, resolution=32
        )
        sets = list(grid.object_voxel_sets().values())
        placed += sum(1 for v in sets if len(v))
        if sets and overlap_ratio(sets) != 0.0:
            bad_or += 1
        keys = [set(map(tuple, v)) for v in sets]
        for i in range(len(keys)):
            for j in range(i + 1, len(keys)):
                if keys[i] & keys[j]:
                    bad_pairs += 1
    elapsed = time.perf_counter() - started
    ok = bad_or == 0 and bad_pairs == 0 and elapsed < 60.0 and placed > 600
    _verdict(
        ok,
        "exclusivity",
        f"100 scenes, {placed} objects placed, OR!=0 in {bad_or}, "
        f"shared-voxel pairs {bad_pairs}, {elapsed:.1f}s",
    )


def test_writeback_preserves_existing_voxels():
    spec = GridSpec((0.0, 0.0, 0.0), 0.05, (24, 24, 24))
    rng = np.random.default_rng(7)
    violations = 0
    written_total = 0
    for _ in range(1000):
        grid = GlobalGrid.empty(spec)
        for oid in (1, 2, 3):
            lo = rng.integers(0, 16, 3)
            hi = lo + rng.integers(2, 8, 3)
            sel = tuple(slice(int(l), int(min(h, 24))) for l, h in zip(lo, hi))
            grid.owner[sel] = oid
            grid.semantic[sel] = oid
        grid.owner[rng.integers(0, 24, 3).reshape(1, 3)[0][0], :, 0] = -1
        before_owner = grid.owner.copy()
        before_sem = grid.semantic.copy()
        theta = rng.uniform(0.0, 2 * np.pi)
        anchor = Anchor.create(
            50,
            rng.uniform(0.2, 1.0, 3),
            (np.cos(theta), np.sin(theta)),
            (0.3, 0.3, 0.3),
            0,
            5,
        )
        block = extract_local_block(grid, anchor, 16)
        staged = block.copy()
        staged.state[rng.random((16, 16, 16)) < 0.08] = TAU_TARGET
        out, written = write_back(grid, staged, 7, 2)
        written_total += written
        occupied = before_owner != FREE
        if (out.owner[occupied] != before_owner[occupied]).any():
            violations += 1
        if (out.semantic[occupied] != before_sem[occupied]).any():
            violations += 1
        changed = out.owner != before_owner
        if changed.any() and not (
            (before_owner[changed] == FREE).all() and (out.owner[changed] == 7).all()
        ):
            violations += 1
        if int((out.owner == 7).sum()) != written:
            violations += 1
    ok = violations == 0 and written_total > 0
    _verdict(
        ok,
        "writeback-preservation",
        f"1000 writebacks, {written_total} voxels written, {violations} violations",
    )


def test_velocity_inversion_and_oracle_chain():
    sched = make_schedule(1000, "linear", 1e-4, 0.02)
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        t = int(rng.integers(1, 1001))
        z0 = rng.standard_normal(100)
        eps = rng.standard_normal(100)
        z_t = forward_sample(z0, t, eps, sched)
        u = velocity_target(z0, eps, t, sched)
        worst = max(worst, float(np.abs(recover_z0(z_t, u, t, sched) - z0).max()))

    z0 = rng.standard_normal(6)
    z_T = forward_sample(z0, 1000, rng.standard_normal(6), sched)
    out = sample(z_T, OracleDenoiser(z0, sched), None, sched, mode="deterministic")
    chain_err = float(np.abs(out - z0).max())
    ok = worst < 1e-10 and chain_err < 1e-5
    _verdict(
        ok,
        "diffusion-identities",
        f"round-trip max err {worst:.2e} over 10^4 tuples, "
        f"T=1000 oracle chain err {chain_err:.2e}",
    )


def test_forward_noising_moments():
    sched = make_schedule(1000, "linear", 1e-4, 0.02)
    rng = np.random.default_rng(26)
    z0 = np.array([-1.5, -0.25, 0.7, 2.0])
    n = 100_000
    worst_z = 0.0
    for t in (1, 500, 1000):
        ab = sched.alpha_bar(t)
        draws = forward_sample(z0, t, rng.standard_normal((n, 4)), sched)
        mean_err = np.abs(draws.mean(axis=0) - np.sqrt(ab) * z0)
        se_mean = np.sqrt((1.0 - ab) / n)
        var_err = np.abs(draws.var(axis=0, ddof=1) - (1.0 - ab))
        se_var = (1.0 - ab) * np.sqrt(2.0 / (n - 1))
        worst_z = max(
            worst_z, float((mean_err / se_mean).max()), float((var_err / se_var).max())
        )
    ok = worst_z < 3.0
    _verdict(
        ok,
        "forward-moments",
        f"10^5 draws at t in (1, 500, 1000), worst deviation {worst_z:.2f} SE (< 3)",
    )


def test_soft_chamfer_closed_forms():
    rng = np.random.default_rng(5)
    self_exact = all(
        soft_chamfer(pts, pts) == 1.0
        for pts in (rng.uniform(0, 12, (int(rng.integers(2, 40)), 3)) for _ in range(20))
    )
    sigma = 1.5
    single = soft_chamfer(
        np.array([[0.0, 0.0, 0.0]]), np.array([[sigma, 0.0, 0.0]]), sigma
    )
    single_err = abs(single - np.exp(-0.5))
    worst_asym = 0.0
    for _ in range(1000):
        a = rng.uniform(0, 12, (int(rng.integers(4, 50)), 3))
        b = rng.uniform(0, 12, (int(rng.integers(4, 50)), 3))
        worst_asym = max(worst_asym, abs(soft_chamfer(a, b) - soft_chamfer(b, a)))
    ok = self_exact and single_err <= 1e-12 and worst_asym <= 1e-12
    _verdict(
        ok,
        "soft-chamfer",
        f"S(Q,Q)=1 exact: {self_exact}, singleton |S-e^(-1/2)|={single_err:.1e}, "
        f"max asymmetry {worst_asym:.1e} over 1000 pairs",
    )


def _brute_pairwise(sets):
    keys = [set(map(tuple, v)) for v in sets]
    vals = []
    for i in range(len(keys)):
        for j in range(i + 1, len(keys)):
            inter = len(keys[i] & keys[j])
            vals.append(max(inter / len(keys[i]), inter / len(keys[j])))
    return sum(vals) / len(vals) if vals else 0.0


def _brute_overlap(sets):
    keys = [set(map(tuple, v)) for v in sets]
    inter = sum(
        len(keys[i] & keys[j])
        for i in range(len(keys))
        for j in range(i + 1, len(keys))
    )
    total = sum(len(k) for k in keys)
    return inter / (total - inter + 1e-9)


def _brute_floor(sets, spec, polygon, eta):
    # crossing-number point test plus exact distance to the nearest edge
    def signed(p):
        inside = False
        best = np.inf
        m = len(polygon)
        for i in range(m):
            a = np.asarray(polygon[i], dtype=np.float64)
            b = np.asarray(polygon[(i + 1) % m], dtype=np.float64)
            if (a[1] > p[1]) != (b[1] > p[1]):
                x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0])
                if p[0] < x:
                    inside = not inside
            seg = b - a
            t = np.clip(np.dot(p - a, seg) / np.dot(seg, seg), 0.0, 1.0)
            best = min(best, float(np.linalg.norm(p - (a + t * seg))))
        return -best if inside else best

    objs = 0
    voxels = 0
    total = 0
    for vox in sets:
        centers = spec.index_to_center(np.asarray(vox))
        out = np.array([signed(c[[0, 2]]) > eta for c in centers])
        objs += bool(out.any())
        voxels += int(out.sum())
        total += len(vox)
    return objs / len(sets), voxels / total


def test_overlap_metrics_match_brute_force():
    rng = np.random.default_rng(23)
    polygon = np.array([[0.1, 0.1], [0.7, 0.1], [0.7, 0.7], [0.1, 0.7]])
    spec = GridSpec((0.0, 0.0, 0.0), 0.05, (18, 18, 18))
    mismatches = 0
    for _ in range(50):
        sets = []
        for _obj in range(int(rng.integers(2, 7))):
            parts = []
            for _ in range(int(rng.integers(1, 4))):
                lo = rng.integers(0, 14, 3)
                shape = rng.integers(1, 5, 3)
                grid = np.mgrid[
                    lo[0] : lo[0] + shape[0],
                    lo[1] : lo[1] + shape[1],
                    lo[2] : lo[2] + shape[2],
                ]
                parts.append(grid.reshape(3, -1).T)
            sets.append(np.unique(np.vstack(parts), axis=0))
        if pairwise_intersection(sets) != _brute_pairwise(sets):
            mismatches += 1
        if overlap_ratio(sets) != _brute_overlap(sets):
            mismatches += 1
        r_o, r_vo = floor_violations(sets, spec, polygon)
        if (r_o, r_vo) != _brute_floor(sets, spec, polygon, 0.02):
            mismatches += 1

    a = np.array([[i, 0, 0] for i in range(100)])
    b = np.array([[i, 0, 0] for i in range(90, 190)])
    ip_scaled = pairwise_intersection([a, b]) * 1e3
    or_scaled = overlap_ratio([a, b]) * 1e3
    ok = mismatches == 0 and ip_scaled == 100.0 and abs(or_scaled - 52.63) <= 0.01
    _verdict(
        ok,
        "metric-oracle",
        f"50 random scenes, {mismatches} mismatches; worked example "
        f"I_p*10^3={ip_scaled}, OR*10^3={or_scaled:.4f}",
    )


def _one_voxel(center, pitch=0.004):
    origin = tuple(c - pitch / 2 for c in center)
    spec = GridSpec(origin, pitch, (1, 1, 1))
    return [np.array([[0, 0, 0]])], spec


def test_tolerance_boundaries_flip():
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    box = (np.zeros(3), np.array([1.0, 1.0, 1.0]))

    eta_in = floor_violations(*_one_voxel((1.018, 0.1, 0.5)), square)[0]
    eta_out = floor_violations(*_one_voxel((1.022, 0.1, 0.5)), square)[0]

    side_in = shelf_out_of_bounds(*_one_voxel((1.034, 0.5, 0.5)), box)
    side_out = shelf_out_of_bounds(*_one_voxel((1.038, 0.5, 0.5)), box)

    open_in = shelf_out_of_bounds(*_one_voxel((1.02, 1.011, 0.5)), box)
    open_out = shelf_out_of_bounds(*_one_voxel((1.02, 1.013, 0.5)), box)

    exempt = shelf_out_of_bounds(*_one_voxel((0.98, 1.05, 0.5)), box)
    counted = shelf_out_of_bounds(*_one_voxel((1.02, 1.05, 0.5)), box)

    tri = np.array([[[0.0, 0.5, 0.0], [2.0, 0.5, 0.0], [0.0, 0.5, 2.0]]])
    graze = shelf_collision([(np.array([0.2, 0.489, 0.2]), np.array([0.4, 0.7, 0.4]))], tri)
    hit = shelf_collision([(np.array([0.2, 0.487, 0.2]), np.array([0.4, 0.7, 0.4]))], tri)

    flips = {
        "eta": (eta_in, eta_out),
        "side": (side_in, side_out),
        "open": (open_in, open_out),
        "aperture": (exempt, counted),
        "intrusion": (graze, hit),
    }
    ok = all(a == 0.0 and b == 1.0 for a, b in flips.values())
    detail = ", ".join(f"{k} {a:g}->{b:g}" for k, (a, b) in flips.items())
    _verdict(ok, "tolerance-fidelity", detail)


def test_frechet_closed_forms():
    rng = np.random.default_rng(31)
    identical = 0.0
    for _ in range(10):
        d = int(rng.integers(2, 7))
        a = rng.standard_normal((d, d))
        sigma = a @ a.T + 0.5 * np.eye(d)
        mu = rng.standard_normal(d)
        identical = max(identical, frechet_distance(mu, sigma, mu.copy(), sigma.copy()))

    worst_1d = 0.0
    for _ in range(100):
        m1, m2 = rng.standard_normal(2) * 3
        s1, s2 = rng.uniform(0.1, 4.0, 2)
        got = frechet_distance([m1], [[s1]], [m2], [[s2]])
        want = (m1 - m2) ** 2 + s1 + s2 - 2 * np.sqrt(s1 * s2)
        worst_1d = max(worst_1d, abs(got - want))

    worst_diag = 0.0
    for _ in range(100):
        d = int(rng.integers(2, 9))
        mu1 = rng.standard_normal(d)
        mu2 = rng.standard_normal(d)
        a = rng.uniform(0.1, 4.0, d)
        b = rng.uniform(0.1, 4.0, d)
        got = frechet_distance(mu1, np.diag(a), mu2, np.diag(b))
        want = np.sum((mu1 - mu2) ** 2 + a + b - 2 * np.sqrt(a * b))
        worst_diag = max(worst_diag, abs(got - want))

    ok = identical <= 1e-8 and worst_1d < 1e-8 and worst_diag < 1e-8
    _verdict(
        ok,
        "frechet",
        f"identical stats residue {identical:.1e}, 1-D max err {worst_1d:.1e}, "
        f"diagonal max err {worst_diag:.1e} over 100 instances each",
    )


def test_preset_golden_files():
    room = preset("room")
    shelf = preset("shelf")
    room_match = dump_config(room) == (GOLDEN / "room.cfg").read_text()
    shelf_match = dump_config(shelf) == (GOLDEN / "shelf.cfg").read_text()
    constants = (
        room.voxel_size == 0.0375
        and shelf.voxel_size == 0.01
        and room.block_resolution == 64
        and shelf.block_resolution == 64
        and room.max_shift == (4, 0, 4)
        and shelf.max_shift == (6, 6, 6)
        and room.iou_threshold == 0.3
        and room.size_ratio == 1.1
        and room.eval_pitch == 0.02
        and shelf.eval_pitch == 0.012
    )
    ok = room_match and shelf_match and constants
    _verdict(
        ok,
        "preset-golden",
        f"room golden match {room_match}, shelf golden match {shelf_match}, "
        f"named constants {constants}",
    )


def test_shift_and_mask_statistics():
    rng = np.random.default_rng(41)
    policy = ShiftPolicy((1, 1, 1))
    n = 100_000
    counts = np.zeros(27, dtype=np.int64)
    for _ in range(n):
        delta, _ = sample_shift(policy, rng)
        d = np.asarray(delta) + 1
        counts[d[0] * 9 + d[1] * 3 + d[2]] += 1
    expected = n / 27
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    threshold = float(scipy.stats.chi2.ppf(0.99, 26))

    pending_total = 0
    for _ in range(1000):
        _, pending = mask_context(list(range(100)), 0.5, rng)
        pending_total += len(pending)
    frac = pending_total / 100_000
    ok = chi2 < threshold and abs(frac - 0.5) <= 0.01
    _verdict(
        ok,
        "policy-stats",
        f"shift chi2 {chi2:.1f} < {threshold:.1f} (27 cells, 10^5 draws), "
        f"pending fraction {frac:.4f}",
    )


def test_shelf_pipeline_runtime():
    meshes = [
        (1, 0, box_mesh((0.16, 0.2, 0.16))),
        (2, 1, box_mesh((0.12, 0.34, 0.12))),
        (3, 2, box_mesh((0.24, 0.16, 0.2))),
        (4, 3, box_mesh((0.2, 0.12, 0.2))),
    ]
    db = build_database(meshes, resolution=64)
    shelf = open_box_mesh((1.6, 0.8, 0.8), center=(0.8, 0.4, 0.4), open_axis=1)
    spec = GridSpec((-0.08, -0.08, -0.08), 0.01, (176, 96, 96))
    sizes = {0: (0.16, 0.2, 0.16), 1: (0.12, 0.34, 0.12), 2: (0.24, 0.16, 0.2), 3: (0.2, 0.12, 0.2)}
    anchors = []
    for i in range(8):
        cat = i % 4
        size = np.asarray(sizes[cat])
        x = 0.2 + (i % 4) * 0.4
        z = 0.25 if i < 4 else 0.55
        anchors.append(
            Anchor.create(i + 1, (x, size[1] / 2 + 0.012, z), (1.0, 0.0), size, cat, 5)
        )
    by_id = {a.id: a for a in anchors}

    started = time.perf_counter()
    grid, report = generate_scene(
        anchors, shelf, TemplateGenerator(db), spec, seed=1, resolution=64
    )
    sets = grid.object_voxel_sets()
    placements = []
    for oid, vox in sets.items():
        query = canonicalize_query(vox, spec, by_id[oid], resolution=64)
        result = retrieve(query, db, by_id[oid].category_index, instance_id=oid)
        assert result is not None
        placements.append(result)

    voxel_sets = list(sets.values())
    ip = pairwise_intersection(voxel_sets)
    orv = overlap_ratio(voxel_sets)
    r_s = shelf_out_of_bounds(
        voxel_sets, spec, (np.zeros(3), np.array([1.6, 0.8, 0.8])), opening=(1, 1)
    )
    half = spec.voxel_size / 2
    boxes = []
    for vox in voxel_sets:
        centers = spec.index_to_center(vox)
        boxes.append((centers.min(axis=0) - half, centers.max(axis=0) + half))
    r_col = shelf_collision(boxes, shelf.triangles())
    objs = [
        EvalObject(
            r.instance_id,
            str(by_id[r.instance_id].category_index),
            box_mesh(r.scale, center=np.asarray(r.position) + r.offset + r.scale / 2),
        )
        for r in placements
    ]
    r_f = floating_rate(objs, support=shelf)
    cd = category_diversity(
        [(by_id[r.instance_id].category_index, r.asset_id) for r in placements]
    )
    elapsed = time.perf_counter() - started

    placed = sum(1 for e in report.entries if e.written > 0)
    ok = elapsed < 5.0 and placed == 8 and len(placements) == 8 and ip == 0.0
    _verdict(
        ok,
        "runtime-floor",
        f"8-object shelf generate+retrieve+evaluate in {elapsed:.2f}s "
        f"(I_p={ip:g}, OR={orv:g}, R_s={r_s:g}, R_col={r_col:g}, R_f={r_f:g}, CD={cd:g})",
    )
