"""Report rendering and the feature-statistics file."""

import csv

import numpy as np
import pytest
from PIL import Image

from voxlayout.config import room_preset
from voxlayout.errors import InvalidArgument, ParseError
from voxlayout.metrics import MetricsReport, SceneMetrics
from voxlayout.report import (
    config_echo,
    load_feature_stats,
    report_text,
    save_feature_stats,
    write_report,
)


def _report(n_scenes=2):
    scenes = [
        SceneMetrics(f"scene_{i}", {"I_p": 0.01 * (i + 1), "OR": 0.005, "R_o": float(i % 2)})
        for i in range(n_scenes)
    ]
    return MetricsReport(config={"mode": "room", "seed": "0"}, scenes=scenes)


def test_report_text_scaling():
    text = report_text(_report(1))
    lines = text.splitlines()
    assert lines[0] == "# configuration"
    assert "mode = room" in lines
    # I_p and OR are reported x1000; rates are not.
    assert "scene_0\tI_p\t10.000000" in lines
    assert "scene_0\tOR\t5.000000" in lines
    assert "scene_0\tR_o\t0.000000" in lines
    assert "all\tI_p\t10.000000" in lines
    assert text.endswith("\n")


def test_report_text_aggregate_is_mean():
    text = report_text(_report(2))
    assert "all\tI_p\t15.000000" in text.splitlines()
    assert "all\tR_o\t0.500000" in text.splitlines()


def test_write_report_files(tmp_path):
    out = tmp_path / "eval"
    paths = write_report(_report(2), str(out))
    names = [p.replace(str(out), "").lstrip("/") for p in paths]
    assert names == [
        "report.txt",
        "metrics.csv",
        "figures/aggregate.png",
        "figures/per_scene.png",
    ]
    for p in paths:
        assert (out / p.replace(str(out), "").lstrip("/")).exists()
    # The figures are real PNG images.
    img = Image.open(paths[2])
    assert img.size[0] > 100


def test_write_report_single_scene_has_no_per_scene_figure(tmp_path):
    paths = write_report(_report(1), str(tmp_path))
    assert [p for p in paths if p.endswith("per_scene.png")] == []
    assert any(p.endswith("aggregate.png") for p in paths)


def test_write_report_no_figures(tmp_path):
    paths = write_report(_report(2), str(tmp_path), figures=False)
    assert [p.rsplit("/", 1)[-1] for p in paths] == ["report.txt", "metrics.csv"]
    assert not (tmp_path / "figures").exists()


def test_metrics_csv_parses_back(tmp_path):
    write_report(_report(2), str(tmp_path), figures=False)
    with open(tmp_path / "metrics.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["scene", "metric", "value"]
    by_key = {(r[0], r[1]): float(r[2]) for r in rows[1:]}
    assert by_key[("scene_0", "I_p")] == 10.0
    assert by_key[("scene_1", "I_p")] == 20.0
    assert by_key[("all", "I_p")] == 15.0
    assert by_key[("all", "R_o")] == 0.5
    # aggregate rows follow the per-scene rows
    assert rows[-1][0] == "all"


def test_config_echo_order_matches_dump():
    echo = config_echo(room_preset())
    keys = list(echo)
    assert keys[0] == "mode"
    assert echo["mode"] == "room"
    assert echo["voxel_size"] == "0.0375"
    assert echo["max_shift"] == "4,0,4"
    assert echo["style_clustering"] == "on"


def test_feature_stats_round_trip(tmp_path):
    rng = np.random.default_rng(21)
    mu = rng.standard_normal(5)
    a = rng.standard_normal((5, 5))
    sigma = a @ a.T
    path = tmp_path / "stats.bin"
    save_feature_stats(mu, sigma, str(path))
    mu2, sigma2 = load_feature_stats(str(path))
    assert np.array_equal(mu, mu2)
    assert np.array_equal(sigma, sigma2)


def test_feature_stats_validation(tmp_path):
    path = tmp_path / "stats.bin"
    with pytest.raises(InvalidArgument):
        save_feature_stats(np.zeros(3), np.zeros((2, 2)), str(path))
    save_feature_stats(np.array([0.0, np.inf]), np.eye(2), str(path))
    with pytest.raises(ParseError, match="non-finite"):
        load_feature_stats(str(path))
    path.write_bytes(b"NOPE\x01" + b"\x00" * 16)
    with pytest.raises(ParseError):
        load_feature_stats(str(path))
