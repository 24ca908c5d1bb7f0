"""Grid exclusivity, conflict resolution, and the VXG1 file format."""

import numpy as np
import pytest

from voxlayout.errors import InvalidArgument, ParseError
from voxlayout.grid import (
    FREE,
    STRUCT,
    GlobalGrid,
    GridSpec,
    Occupancy,
    load_grid,
    resolve_conflicts,
    save_grid,
)


def _brute_force_resolve(objects, spec):
    """Reference: per-voxel winner by (bounding volume, then lower id)."""
    claims = {}
    for occ, volume, oid, cat in objects:
        for idx in map(tuple, occ.indices):
            claims.setdefault(idx, []).append((volume, oid, cat))
    owner = np.zeros(spec.dims, np.int32)
    semantic = np.zeros(spec.dims, np.int32)
    for idx, entries in claims.items():
        entries.sort(key=lambda e: (-e[0], e[1]))
        owner[idx] = entries[0][1]
        semantic[idx] = entries[0][2]
    return owner, semantic


def test_spec_index_center_inverse():
    spec = GridSpec((-1.0, 0.5, 2.0), 0.25, (8, 4, 8))
    rng = np.random.default_rng(0)
    idx = np.stack(
        [rng.integers(0, d, size=100) for d in spec.dims], axis=1
    )
    centers = spec.index_to_center(idx)
    assert np.array_equal(spec.world_to_index(centers), idx)


def test_spec_world_to_index_floor_convention():
    spec = GridSpec((0.0, 0.0, 0.0), 1.0, (4, 4, 4))
    # exact voxel corner belongs to the voxel it starts
    assert spec.world_to_index(np.array([[1.0, 1.0, 1.0]])).tolist() == [[1, 1, 1]]
    assert spec.world_to_index(np.array([[0.999, 0.0, 0.0]])).tolist() == [[0, 0, 0]]


def test_spec_validation():
    with pytest.raises(InvalidArgument):
        GridSpec((0, 0, 0), 0.0, (4, 4, 4))
    with pytest.raises(InvalidArgument):
        GridSpec((0, 0, 0), 0.1, (4, 0, 4))


def test_occupancy_dedupes_and_bounds():
    spec = GridSpec((0, 0, 0), 1.0, (4, 4, 4))
    occ = Occupancy(spec, np.array([[1, 1, 1], [1, 1, 1], [2, 0, 3]]))
    assert len(occ) == 2
    with pytest.raises(InvalidArgument):
        Occupancy(spec, np.array([[4, 0, 0]]))
    with pytest.raises(InvalidArgument):
        Occupancy(spec, np.array([[-1, 0, 0]]))


def test_occupancy_mask_round_trip():
    spec = GridSpec((0, 0, 0), 1.0, (5, 5, 5))
    rng = np.random.default_rng(3)
    mask = rng.random(spec.dims) < 0.3
    occ = Occupancy.from_mask(mask, spec)
    assert np.array_equal(occ.to_mask(), mask)


def test_conflict_larger_volume_wins():
    spec = GridSpec((0, 0, 0), 1.0, (6, 6, 6))
    a = Occupancy(spec, np.array([[2, 2, 2], [3, 2, 2]]))
    b = Occupancy(spec, np.array([[2, 2, 2], [1, 2, 2]]))
    grid = resolve_conflicts([(a, 1.0, 1, 0), (b, 8.0, 2, 1)])
    assert grid.owner[2, 2, 2] == 2  # contested, b is bigger
    assert grid.owner[3, 2, 2] == 1
    assert grid.owner[1, 2, 2] == 2
    assert grid.semantic[2, 2, 2] == 1


def test_conflict_three_way_tie_lowest_id():
    spec = GridSpec((0, 0, 0), 1.0, (4, 4, 4))
    cell = np.array([[1, 1, 1]])
    objs = [
        (Occupancy(spec, cell), 2.0, 7, 0),
        (Occupancy(spec, cell), 2.0, 3, 1),
        (Occupancy(spec, cell), 2.0, 5, 2),
    ]
    grid = resolve_conflicts(objs)
    assert grid.owner[1, 1, 1] == 3
    assert grid.semantic[1, 1, 1] == 1


def test_conflict_duplicate_ids_rejected():
    spec = GridSpec((0, 0, 0), 1.0, (4, 4, 4))
    occ = Occupancy(spec, np.array([[0, 0, 0]]))
    with pytest.raises(InvalidArgument):
        resolve_conflicts([(occ, 1.0, 1, 0), (occ, 2.0, 1, 0)])


def test_conflict_nonpositive_id_rejected():
    spec = GridSpec((0, 0, 0), 1.0, (4, 4, 4))
    occ = Occupancy(spec, np.array([[0, 0, 0]]))
    with pytest.raises(InvalidArgument):
        resolve_conflicts([(occ, 1.0, 0, 0)])


def test_conflict_empty_list_rejected():
    with pytest.raises(InvalidArgument):
        resolve_conflicts([])


def test_conflicts_match_brute_force():
    spec = GridSpec((0, 0, 0), 0.5, (10, 10, 10))
    rng = np.random.default_rng(42)
    for _ in range(20):
        objects = []
        n = rng.integers(2, 6)
        for oid in range(1, n + 1):
            count = rng.integers(1, 40)
            idx = np.stack([rng.integers(0, 10, count) for _ in range(3)], axis=1)
            volume = float(rng.choice([1.0, 2.0, 4.0]))
            objects.append((Occupancy(spec, idx), volume, int(oid), int(oid % 3)))
        grid = resolve_conflicts(objects)
        owner, semantic = _brute_force_resolve(objects, spec)
        assert np.array_equal(grid.owner, owner)
        occupied = owner != FREE
        assert np.array_equal(grid.semantic[occupied], semantic[occupied])


def test_instance_queries():
    spec = GridSpec((0, 0, 0), 1.0, (4, 4, 4))
    grid = GlobalGrid.empty(spec)
    grid.owner[0, 0, 0] = 2
    grid.owner[1, 0, 0] = STRUCT
    assert grid.instance_ids() == [2]
    assert grid.occupied_count() == 2
    sets = grid.object_voxel_sets()
    assert list(sets) == [2]
    assert sets[2].tolist() == [[0, 0, 0]]


def test_grid_file_round_trip_bytes(tmp_path):
    spec = GridSpec((-0.5, 0.0, 1.25), 0.0375, (9, 5, 7))
    grid = GlobalGrid.empty(spec)
    rng = np.random.default_rng(9)
    grid.owner[:] = rng.integers(-1, 4, spec.dims)
    grid.semantic[:] = rng.integers(0, 3, spec.dims)
    p1 = tmp_path / "a.bin"
    p2 = tmp_path / "b.bin"
    save_grid(grid, str(p1))
    back = load_grid(str(p1))
    # header geometry travels at f32 width; 0.0375 is not f32-exact
    assert back.spec.dims == spec.dims
    assert back.spec.origin == tuple(float(np.float32(v)) for v in spec.origin)
    assert back.spec.voxel_size == float(np.float32(spec.voxel_size))
    assert np.array_equal(back.owner, grid.owner)
    assert np.array_equal(back.semantic, grid.semantic)
    save_grid(back, str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_grid_file_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOPE\x01" + b"\x00" * 64)
    with pytest.raises(ParseError):
        load_grid(str(path))


def test_grid_file_truncated_payload(tmp_path):
    spec = GridSpec((0, 0, 0), 1.0, (3, 3, 3))
    grid = GlobalGrid.empty(spec)
    path = tmp_path / "t.bin"
    save_grid(grid, str(path))
    data = bytearray(path.read_bytes())
    # shrink the declared run so it no longer covers the grid
    import struct

    n_off = 5 + 12 + 12 + 4  # magic+ver, dims, origin, voxel size
    count_off = n_off + 4
    struct.pack_into("<I", data, count_off, 5)
    path.write_bytes(bytes(data))
    with pytest.raises(ParseError):
        load_grid(str(path))
