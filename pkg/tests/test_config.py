"""Mode presets and the key = value override file format."""

import dataclasses

import pytest

from voxlayout.config import (
    MODES,
    PipelineConfig,
    dump_config,
    load_config,
    preset,
    room_preset,
    shelf_preset,
    validate,
)
from voxlayout.errors import ParseError


def test_room_preset_constants():
    cfg = room_preset()
    assert cfg.mode == "room"
    assert cfg.voxel_size == 0.0375
    assert cfg.block_resolution == 64
    assert cfg.canonical_resolution == 64
    assert cfg.max_shift == (4, 0, 4)
    assert cfg.mask_probability == 0.5
    assert cfg.iou_threshold == 0.3
    assert cfg.size_ratio == 1.1
    assert cfg.scale_gate == 1.5
    assert cfg.sigma == 1.5
    assert cfg.sdf_truncation == 8.0
    assert cfg.diffusion_steps == 1000
    assert cfg.beta_min == 1e-4
    assert cfg.beta_max == 0.02
    assert cfg.eval_pitch == 0.02
    assert cfg.floor_tolerance == 0.02
    assert cfg.open_margin == 0.012
    assert cfg.side_margin == 0.036
    assert cfg.intrusion_margin == 0.012
    assert cfg.float_tolerance == 0.01
    assert cfg.style_clustering is True


def test_shelf_preset_constants():
    cfg = shelf_preset()
    assert cfg.mode == "shelf"
    assert cfg.voxel_size == 0.01
    assert cfg.max_shift == (6, 6, 6)
    assert cfg.eval_pitch == 0.012
    assert cfg.block_resolution == 64
    assert cfg.iou_threshold == 0.3
    assert cfg.size_ratio == 1.1
    assert cfg.style_clustering is False


def test_preset_dispatch():
    assert preset("room") == room_preset()
    assert preset("shelf") == shelf_preset()
    assert MODES == ("room", "shelf")
    with pytest.raises(ParseError):
        preset("attic")


def test_load_without_file_is_preset():
    assert load_config(None, "room") == room_preset()
    assert load_config(None, "shelf") == shelf_preset()


def test_load_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# comment line\n"
        "\n"
        "voxel_size = 0.05  # trailing comment\n"
        "max_shift = 2, 1, 2\n"
        "style_clustering = off\n"
        "seed = 7\n"
        "palette = colors.txt\n"
    )
    cfg = load_config(str(path), "room")
    assert cfg.voxel_size == 0.05
    assert cfg.max_shift == (2, 1, 2)
    assert cfg.style_clustering is False
    assert cfg.seed == 7
    assert cfg.palette == "colors.txt"
    # Untouched keys keep the preset values.
    assert cfg.block_resolution == 64
    assert cfg.eval_pitch == 0.02


def test_bool_spellings(tmp_path):
    for raw, want in (("on", True), ("true", True), ("1", True), ("no", False)):
        path = tmp_path / "b.cfg"
        path.write_text(f"style_clustering = {raw}\n")
        assert load_config(str(path), "shelf").style_clustering is want


def test_unknown_key_named(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("voxel_pitch = 0.05\n")
    with pytest.raises(ParseError, match="voxel_pitch"):
        load_config(str(path), "room")


def test_mode_key_rejected(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("mode = shelf\n")
    with pytest.raises(ParseError, match="mode"):
        load_config(str(path), "room")


def test_malformed_line_reports_position(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed = 1\njust some words\n")
    with pytest.raises(ParseError, match="line 2"):
        load_config(str(path), "room")


def test_bad_values(tmp_path):
    cases = [
        ("voxel_size = fast", "voxel_size"),
        ("max_shift = 1,2", "max_shift"),
        ("max_shift = a,b,c", "max_shift"),
        ("style_clustering = maybe", "style_clustering"),
        ("seed = 1.5", "seed"),
    ]
    for text, key in cases:
        path = tmp_path / "bad.cfg"
        path.write_text(text + "\n")
        with pytest.raises(ParseError, match=key):
            load_config(str(path), "room")


def test_validation_rules(tmp_path):
    cases = [
        ("voxel_size = -1", "voxel_size"),
        ("block_resolution = 62", "block_resolution"),
        ("scale_gate = 0.8", "scale_gate"),
        ("size_ratio = 0.9", "size_ratio"),
        ("mask_probability = 1.5", "mask_probability"),
        ("max_shift = -1,0,0", "max_shift"),
        ("beta_min = 0.5\nbeta_max = 0.1", "beta_min"),
    ]
    for text, key in cases:
        path = tmp_path / "bad.cfg"
        path.write_text(text + "\n")
        with pytest.raises(ParseError, match=key):
            load_config(str(path), "room")


def test_validate_direct():
    cfg = room_preset()
    assert validate(cfg) is cfg
    broken = dataclasses.replace(cfg, mode="hallway")
    with pytest.raises(ParseError):
        validate(broken)


def test_dump_format():
    text = dump_config(room_preset())
    lines = text.splitlines()
    assert lines[0] == "mode = room"
    assert "voxel_size = 0.0375" in lines
    assert "max_shift = 4,0,4" in lines
    assert "style_clustering = on" in lines
    assert text.endswith("\n")
    field_names = [f.name for f in dataclasses.fields(PipelineConfig)]
    assert [ln.split(" = ")[0] for ln in lines] == field_names


def test_dump_load_round_trip(tmp_path):
    for mode in MODES:
        cfg = dataclasses.replace(
            preset(mode), voxel_size=0.033, max_shift=(3, 2, 1), seed=11
        )
        # The mode line is command-owned, so a reusable override file
        # carries every other key.
        body = "\n".join(dump_config(cfg).splitlines()[1:]) + "\n"
        path = tmp_path / f"{mode}.cfg"
        path.write_text(body)
        assert load_config(str(path), mode) == cfg
