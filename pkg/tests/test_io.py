import json

import numpy as np
import pytest

from georef import io
from georef.association import SearchArea
from georef.geometry import FrameDetections, Polyline, Trajectory
from georef.pipeline import PipelineConfig


def _polys():
    return [Polyline(np.array([[0.1, 0.2], [1.0 / 3.0, 5.0]])),
            Polyline(np.array([[-1e-7, 2.0], [3.0, 4.0], [6.0, 7.5]]))]


def test_fmt_nine_digits():
    assert io.fmt(1.0 / 3.0) == "0.333333333"
    assert io.fmt(123456789012.0) == "1.23456789e+11"
    assert io.fmt(float("nan")) == "nan"
    assert io.fmt(float("-inf")) == "-inf"


def test_map_roundtrip_is_lossless(tmp_path):
    io.write_map(tmp_path / "m.json", _polys(), name="demo")
    polys, meta = io.read_map(tmp_path / "m.json")
    assert polys == _polys()
    assert meta["name"] == "demo"


def test_detections_roundtrip(tmp_path):
    frames = [FrameDetections(0, _polys()), FrameDetections(1), FrameDetections(2, _polys()[:1])]
    io.write_detections(tmp_path / "d.json", frames)
    back = io.read_detections(tmp_path / "d.json")
    assert [f.polylines for f in back] == [f.polylines for f in frames]


def test_detections_sequence_error(tmp_path):
    doc = {"format": io.DETECTIONS_FORMAT, "version": io.VERSION,
           "frames": [{"frame": 0, "polylines": []}, {"frame": 2, "polylines": []}]}
    (tmp_path / "d.json").write_text(json.dumps(doc))
    with pytest.raises(io.DataError, match="out of sequence"):
        io.read_detections(tmp_path / "d.json")


def test_map_errors(tmp_path):
    p = tmp_path / "m.json"
    p.write_text('{"format": "georef-map",\n "version": 1, "polylines": [[[0, 0]]')
    with pytest.raises(io.DataError) as err:
        io.read_map(p)
    assert err.value.line == 2
    p.write_text(json.dumps({"format": "other", "version": 1, "polylines": []}))
    with pytest.raises(io.DataError, match="format"):
        io.read_map(p)
    p.write_text(json.dumps({"format": io.MAP_FORMAT, "version": 1, "polylines": [[[0, 0]]]}))
    with pytest.raises(io.DataError, match="polylines"):
        io.read_map(p)
    with pytest.raises(io.DataError, match="cannot read"):
        io.read_map(tmp_path / "missing.json")


def test_trajectory_roundtrip_is_lossless(tmp_path):
    rng = np.random.default_rng(0)
    t = Trajectory(rng.normal(size=(20, 3)))
    io.write_trajectory(tmp_path / "t.csv", t)
    back = io.read_trajectory(tmp_path / "t.csv")
    assert np.array_equal(back.poses, t.poses)


def test_trajectory_errors_carry_location(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("index,x,y,theta\n0,1.0,2.0,0.0\n1,1.0,abc,0.0\n")
    with pytest.raises(io.DataError) as err:
        io.read_trajectory(p)
    assert (err.value.line, err.value.column) == (3, 7)
    assert ":3:7:" in str(err.value)
    p.write_text("index,x,y,theta\n0,1.0,2.0,0.0\n5,1.0,2.0,0.0\n")
    with pytest.raises(io.DataError, match="out of sequence"):
        io.read_trajectory(p)
    p.write_text("i,x,y\n")
    with pytest.raises(io.DataError, match="header"):
        io.read_trajectory(p)
    p.write_text("index,x,y,theta\n0,nan,0,0\n")
    with pytest.raises(io.DataError, match="non-finite"):
        io.read_trajectory(p)


def test_config_roundtrip(tmp_path):
    cfg = io.build_config({"mode": "baseline_dcs", "base_area": [6, 4, 0.1], "rng_seed": 7,
                           "opt_window": 20, "phi": 2.0})
    assert cfg.dcsac.base_area == SearchArea(6.0, 4.0, 0.1)
    assert cfg.dcsac.rng_seed == 7 and cfg.solver.phi == 2.0
    io.write_config(tmp_path / "c.yaml", cfg)
    assert io.read_config(tmp_path / "c.yaml") == cfg


def test_config_defaults_and_errors(tmp_path):
    assert io.build_config({}) == PipelineConfig()
    p = tmp_path / "c.yaml"
    p.write_text("mode: static_nn\n\nwindoww: 3\n")
    with pytest.raises(io.DataError) as err:
        io.read_config(p)
    assert (err.value.line, err.value.column) == (3, 1)
    p.write_text("opt_window: many\n")
    with pytest.raises(io.DataError):
        io.read_config(p)
    p.write_text("mode: [unclosed\n")
    with pytest.raises(io.DataError):
        io.read_config(p)
    p.write_text("mode: nonsense\n")
    with pytest.raises(io.DataError):
        io.read_config(p)


def test_config_keys_cover_nested():
    keys = io.config_keys()
    for k in ("mode", "n_hypotheses", "s_min", "robustifier", "cov_floor", "base_area"):
        assert k in keys


def test_noise_and_layout_readers(tmp_path):
    p = tmp_path / "n.yaml"
    p.write_text("detection_noise_sigma: 0.1\nprior_bias: [1, 2, 0]\n")
    n = io.read_noise(p)
    assert n.detection_noise_sigma == 0.1 and n.prior_bias == (1.0, 2.0, 0.0)
    p.write_text("sigma: 0.1\n")
    with pytest.raises(io.DataError):
        io.read_noise(p)
    lp = tmp_path / "l.json"
    lp.write_text("[]")
    with pytest.raises(io.DataError):
        io.read_layout(lp)


def test_metrics_table_and_trace(tmp_path):
    io.write_metrics_table(tmp_path / "m.csv", [
        {"mode": "a", "ate_m": 1.0 / 3.0, "rpe_trans_m": 0.1, "rpe_rot_deg": 0.2, "status": "ok"},
        {"mode": "b", "status": "failed"}])
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == ",".join(io.METRIC_COLUMNS)
    assert lines[1].startswith("a,0.333333333,")
    io.write_trace(tmp_path / "t.csv", [0.0, -1.5], {"rpe": [float("nan"), 0.25]})
    text = (tmp_path / "t.csv").read_text()
    assert "nan" in text and "-1.5" in text
