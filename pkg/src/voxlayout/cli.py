"""Command-line surface tying the pipeline together.

Exit codes: 0 success, 1 domain error (bad geometry, bad file contents),
2 usage error (argparse). All randomness flows from --seed, so repeated
invocations with the same inputs reproduce identical outputs.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import assembly, diffusion, metrics, render as render_mod, report as report_mod, retrieval, sceneio
from .anchors import ShiftPolicy
from .config import load_config
from .errors import InvalidArgument, ParseError, VoxLayoutError
from .grid import GridSpec, load_grid, save_grid
from .meshio import Mesh, load_obj, yaw_matrix
from .voxelize import voxelize_solid, voxelize_surface


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (VoxLayoutError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxlayout",
        description="Exclusive voxel scene layout: generation, retrieval, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-db", help="canonicalize meshes into an asset database")
    p.add_argument("--manifest", required=True, help="lines: mesh-file category-name")
    p.add_argument("--vocabulary", required=True, help="category names, one per line")
    p.add_argument("--out", required=True)
    p.add_argument("--resolution", type=int, default=retrieval.DEFAULT_CANONICAL_RESOLUTION)
    p.add_argument("--meshes", default=None, help="base directory for manifest paths")
    p.set_defaults(func=_cmd_build_db)

    p = sub.add_parser("voxelize", help="voxelize one mesh into a grid file")
    p.add_argument("--mesh", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("room", "shelf"), default="room")
    p.add_argument("--config", default=None)
    p.add_argument("--no-fill", action="store_true", help="skip interior hole filling")
    p.set_defaults(func=_cmd_voxelize)

    p = sub.add_parser("generate", help="run the anchor-conditioned generation loop")
    p.add_argument("--scene", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--out", required=True, help="output grid file")
    p.add_argument("--mode", choices=("room", "shelf"), default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--report", default=None, help="write per-anchor status here")
    p.add_argument(
        "--diffusion",
        action="store_true",
        help="route proposals through the latent diffusion round trip",
    )
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("retrieve", help="match generated instances to assets")
    p.add_argument("--scene", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--out", required=True, help="scene file with placements filled")
    p.add_argument("--mode", choices=("room", "shelf"), default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("evaluate", help="compute plausibility metrics and a report")
    p.add_argument("--scene", required=True)
    p.add_argument("--grid", default=None, help="generation grid for voxel metrics")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--mode", choices=("room", "shelf"), default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--stats-real", default=None, help="feature statistics file")
    p.add_argument("--stats-gen", default=None, help="feature statistics file")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("render", help="top-down semantic render of a grid")
    p.add_argument("--grid", required=True)
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--vocabulary", default=None)
    p.add_argument("--palette", default=None, help="lines: category-name = #RRGGBB")
    p.set_defaults(func=_cmd_render)
    return parser


def _resolve(base_file: str, path: str) -> str:
    if os.path.isabs(path):
        return path
    return os.path.join(os.path.dirname(os.path.abspath(base_file)), path)


def _cmd_build_db(args) -> int:
    vocabulary = sceneio.load_vocabulary(args.vocabulary)
    base = args.meshes or os.path.dirname(os.path.abspath(args.manifest))
    entries = []
    with open(args.manifest, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(
                    f"line {lineno}: expected mesh-file category-name", args.manifest
                )
            fname, category = parts
            if category not in vocabulary:
                raise ParseError(
                    f"line {lineno}: category {category!r} not in vocabulary",
                    args.manifest,
                )
            entries.append((fname, vocabulary.index(category)))
    if not entries:
        raise ParseError("manifest has no entries", args.manifest)
    meshes = [
        (i + 1, category, load_obj(os.path.join(base, fname)))
        for i, (fname, category) in enumerate(entries)
    ]
    db = retrieval.build_database(meshes, args.resolution)
    retrieval.save_database(db, args.out)
    print(f"wrote {len(db.records)} assets at {args.resolution}^3 to {args.out}")
    return 0


def _cmd_voxelize(args) -> int:
    cfg = load_config(args.config, args.mode)
    mesh = load_obj(args.mesh)
    lo, hi = mesh.bounds()
    pad = 2 * cfg.voxel_size
    dims = tuple(int(np.ceil(v)) for v in (hi - lo + 2 * pad) / cfg.voxel_size)
    spec = GridSpec(tuple(lo - pad), cfg.voxel_size, dims)
    occ = voxelize_surface(mesh, spec) if args.no_fill else voxelize_solid(mesh, spec)
    out = _single_object_grid(occ, spec)
    save_grid(out, args.out)
    print(f"voxelized {len(occ)} voxels into {dims} grid: {args.out}")
    return 0


def _single_object_grid(occ, spec):
    from .grid import GlobalGrid

    g = GlobalGrid.empty(spec)
    if len(occ):
        sel = tuple(occ.indices.T)
        g.owner[sel] = 1
    return g


def _scene_grid_spec(scene: sceneio.SceneLayout, structure: Mesh | None, cfg) -> GridSpec:
    points = []
    if structure is not None:
        lo, hi = structure.bounds()
        points.extend([lo, hi])
    for anchor in scene.anchors:
        # Conservative yaw-free halo around each anchor box.
        half_xz = float(np.hypot(anchor.size[0], anchor.size[2])) / 2.0
        half = np.array([half_xz, anchor.size[1] / 2.0, half_xz])
        pos = np.asarray(anchor.position)
        points.extend([pos - half, pos + half])
    if not points:
        raise InvalidArgument("scene has neither structure nor anchors")
    lo = np.min(points, axis=0) - 2 * cfg.voxel_size
    hi = np.max(points, axis=0) + 2 * cfg.voxel_size
    dims = tuple(int(np.ceil(v)) for v in (hi - lo) / cfg.voxel_size)
    return GridSpec(tuple(lo), cfg.voxel_size, dims)


def _cmd_generate(args) -> int:
    scene = sceneio.load_scene(args.scene)
    cfg = load_config(args.config, args.mode or scene.mode)
    db = retrieval.load_database(args.db)
    structure = None
    if scene.structure_mesh:
        structure = load_obj(_resolve(args.scene, scene.structure_mesh))
    spec = _scene_grid_spec(scene, structure, cfg)

    generator = assembly.TemplateGenerator(db, cfg.scale_gate)
    if args.diffusion:
        sched = diffusion.make_schedule(cfg.diffusion_steps, "linear", cfg.beta_min, cfg.beta_max)
        generator = assembly.DiffusionGenerator(generator, sched)
    seed = cfg.seed if args.seed is None else args.seed
    grid, rep = assembly.generate_scene(
        scene.anchors,
        structure,
        generator,
        spec,
        seed=seed,
        resolution=cfg.block_resolution,
        policy=ShiftPolicy(cfg.max_shift),
    )
    save_grid(grid, args.out)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(rep.as_text())
    skipped = rep.skipped_ids()
    object_voxels = sum(len(v) for v in grid.object_voxel_sets().values())
    print(
        f"generated {len(scene.anchors) - len(skipped)}/{len(scene.anchors)} objects "
        f"({object_voxels} object voxels) -> {args.out}"
    )
    if skipped:
        print(f"skipped anchors: {skipped}", file=sys.stderr)
    return 0


def _cmd_retrieve(args) -> int:
    scene = sceneio.load_scene(args.scene)
    cfg = load_config(args.config, args.mode or scene.mode)
    grid = load_grid(args.grid)
    db = retrieval.load_database(args.db)
    anchors = {a.id: a for a in scene.anchors}

    results = {}
    queries = {}
    for instance_id in grid.instance_ids():
        if instance_id not in anchors:
            raise InvalidArgument(f"grid instance {instance_id} missing from scene anchors")
        anchor = anchors[instance_id]
        query = retrieval.canonicalize_query(
            grid.instance_indices(instance_id), grid.spec, anchor, cfg.canonical_resolution
        )
        queries[instance_id] = query
        result = retrieval.retrieve(
            query, db, anchor.category_index, instance_id, cfg.scale_gate, cfg.sigma
        )
        if result is None:
            print(f"no asset within scale gate for instance {instance_id}", file=sys.stderr)
        else:
            results[instance_id] = result

    if cfg.style_clustering and results:
        by_category: dict[int, list[int]] = {}
        for iid in results:
            by_category.setdefault(anchors[iid].category_index, []).append(iid)
        merged = {}
        for ids in by_category.values():
            clusters = retrieval.cluster_styles(
                [(i, queries[i].occupancy, queries[i].world_extents) for i in sorted(ids)],
                cfg.canonical_resolution,
                cfg.iou_threshold,
                cfg.size_ratio,
            )
            merged.update(retrieval.apply_cluster_assignment(clusters, results))
        results = merged

    scene.placements = [
        sceneio.Placement.from_result(results[iid]) for iid in sorted(results)
    ]
    sceneio.save_scene(scene, args.out)
    print(f"retrieved {len(results)} placements -> {args.out}")
    return 0


def _placed_object(scene: sceneio.SceneLayout, scene_path: str, anchor) -> metrics.EvalObject:
    mesh = load_obj(_resolve(scene_path, scene.object_meshes[anchor.id]))
    lo, hi = mesh.bounds()
    native = hi - lo
    if (native <= 0).any():
        raise InvalidArgument(f"object mesh for instance {anchor.id} is flat")
    unit = (mesh.vertices - lo) / native - 0.5
    R = yaw_matrix(np.asarray(anchor.heading))
    verts = unit * np.asarray(anchor.size) @ R.T + np.asarray(anchor.position)
    return metrics.EvalObject(anchor.id, anchor.category_index, Mesh(verts, mesh.faces))


def _cmd_evaluate(args) -> int:
    scene = sceneio.load_scene(args.scene)
    cfg = load_config(args.config, args.mode or scene.mode)
    values: dict[str, float] = {}

    polygon = None
    if scene.floor_polygon is not None:
        polygon = np.asarray(scene.floor_polygon, dtype=np.float64)
    shelf_box = None
    opening = (1, 1)
    if scene.shelf_box is not None:
        shelf_box = (
            np.asarray(scene.shelf_box["min"], dtype=np.float64),
            np.asarray(scene.shelf_box["max"], dtype=np.float64),
        )
        opening = (scene.shelf_box["opening_axis"], scene.shelf_box["opening_sign"])

    voxel_sets = None
    spec = None
    structure = None
    if scene.structure_mesh:
        structure = load_obj(_resolve(args.scene, scene.structure_mesh))

    if scene.object_meshes:
        anchors = {a.id: a for a in scene.anchors}
        missing = sorted(set(scene.object_meshes) - set(anchors))
        if missing:
            raise InvalidArgument(f"object_meshes reference unknown instances {missing}")
        objects = [
            _placed_object(scene, args.scene, anchors[iid])
            for iid in sorted(scene.object_meshes)
        ]
        eval_scene = metrics.EvalScene(
            objects,
            cfg.eval_pitch,
            floor_polygon=polygon,
            shelf_box=shelf_box,
            opening=opening,
            structure=structure,
        )
        voxel_sets, spec = metrics.eval_voxelize(eval_scene)
        if structure is not None:
            values["R_s"] = metrics.shelf_collision(
                [o.mesh.bounds() for o in objects],
                structure.triangles(),
                cfg.intrusion_margin,
            )
        values["R_f"] = metrics.floating_rate(objects, structure, cfg.float_tolerance)
    elif args.grid:
        grid = load_grid(args.grid)
        spec = grid.spec
        sets = grid.object_voxel_sets()
        voxel_sets = [sets[i] for i in sorted(sets)]

    if voxel_sets is not None and len(voxel_sets) >= 1:
        nonempty = [v for v in voxel_sets if len(v)]
        if len(nonempty) == len(voxel_sets):
            values["I_p"] = metrics.pairwise_intersection(voxel_sets)
            values["OR"] = metrics.overlap_ratio(voxel_sets, cfg.or_epsilon)
            if polygon is not None:
                r_o, r_vo = metrics.floor_violations(
                    voxel_sets, spec, polygon, cfg.floor_tolerance
                )
                values["R_o"] = r_o
                values["R_vo"] = r_vo
            if shelf_box is not None:
                values["R_o"] = metrics.shelf_out_of_bounds(
                    voxel_sets, spec, shelf_box, opening, cfg.open_margin, cfg.side_margin
                )

    if scene.placements:
        anchors = {a.id: a for a in scene.anchors}
        pairs = [
            (anchors[p.instance].category_index, p.asset)
            for p in scene.placements
            if p.instance in anchors
        ]
        if pairs:
            values["CD"] = metrics.category_diversity(pairs)

    if args.stats_real and args.stats_gen:
        mu_r, sigma_r = report_mod.load_feature_stats(args.stats_real)
        mu_g, sigma_g = report_mod.load_feature_stats(args.stats_gen)
        values["FID"] = metrics.frechet_distance(mu_r, sigma_r, mu_g, sigma_g)

    if not values:
        raise InvalidArgument(
            "nothing to evaluate: pass --grid, object_meshes, placements, or statistics"
        )

    scene_name = os.path.splitext(os.path.basename(args.scene))[0]
    rep = metrics.MetricsReport(
        config=report_mod.config_echo(cfg),
        scenes=[metrics.SceneMetrics(scene_name, values)],
    )
    paths = report_mod.write_report(rep, args.out, figures=not args.no_figures)
    print("wrote " + ", ".join(paths))
    return 0


def _cmd_render(args) -> int:
    grid = load_grid(args.grid)
    vocabulary = None
    if args.vocabulary:
        vocabulary = sceneio.load_vocabulary(args.vocabulary)
    if args.palette:
        if vocabulary is None:
            raise InvalidArgument("--palette requires --vocabulary for name lookup")
        colors = {}
        with open(args.palette, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip() if "=" not in raw else raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ParseError(f"line {lineno}: expected name = #RRGGBB", args.palette)
                name, _, value = line.partition("=")
                colors[name.strip()] = value.strip()
        palette = render_mod.palette_from_names(vocabulary, colors)
    elif vocabulary is not None and all(n in render_mod.SHELF_PALETTE for n in vocabulary):
        palette = render_mod.palette_from_names(vocabulary, render_mod.SHELF_PALETTE)
    else:
        occupied = grid.owner != 0
        top = int(grid.semantic[occupied].max()) if occupied.any() else 0
        size = len(vocabulary) if vocabulary is not None else top + 1
        palette = render_mod.fallback_palette(max(size, top + 1))
    render_mod.save_render(grid, palette, args.out)
    print(f"rendered {args.out}")
    return 0
