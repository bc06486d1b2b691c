import json

import pytest

from georef import cli, sim


@pytest.fixture(scope="module")
def scenario(tmp_path_factory):
    root = tmp_path_factory.mktemp("scn")
    layout = sim.urban_block_layout(100.0)
    layout["route"]["from"] = 35.0
    (root / "layout.json").write_text(json.dumps(layout))
    assert cli.main(["generate", "--layout", str(root / "layout.json"), "--seed", "2",
                     "--out", str(root / "s")]) == 0
    return root / "s"


def _run(scenario, out, *extra):
    return cli.main(["run", "--map", str(scenario / "map.json"), "--prior", str(scenario / "prior.csv"),
                     "--detections", str(scenario / "detections.json"),
                     "--truth", str(scenario / "truth.csv"), "--out", str(out), *extra])


def test_generate_writes_scenario(scenario):
    for name in ("map.json", "truth.csv", "prior.csv", "detections.json", "entropy.csv", "scenario.json"):
        assert (scenario / name).is_file()
    meta = json.loads((scenario / "scenario.json").read_text())
    assert meta["seed"] == 2 and meta["frames"] == 66


def test_run_outputs_and_determinism(scenario, tmp_path, capsys):
    assert _run(scenario, tmp_path / "a", "--plots") == 0
    assert "ATE" in capsys.readouterr().out
    assert _run(scenario, tmp_path / "b", "--workers", "3") == 0
    for name in ("trajectory.csv", "records.jsonl", "metrics.csv", "trace.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "a" / "trajectory.svg").is_file()
    rec = json.loads((tmp_path / "a" / "records.jsonl").read_text().splitlines()[0])
    assert rec["frame"] == 0


def test_plots_are_byte_stable(scenario, tmp_path):
    for d in ("a", "b"):
        assert _run(scenario, tmp_path / d, "--plots", "--mode", "static_nn") == 0
    for name in ("trajectory.svg", "traces.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_compare(scenario, tmp_path, capsys):
    code = cli.main(["compare", "--scenario", str(scenario), "--modes", "self_tuning_cov,static_nn",
                     "--no-plots", "--out", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "compare.csv").read_text().splitlines()
    assert [l.split(",")[0] for l in lines[1:]] == ["self_tuning_cov", "static_nn"]
    assert (tmp_path / "trajectory_static_nn.csv").is_file()
    assert "self_tuning_cov" in capsys.readouterr().out


def test_config_file(scenario, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("mode: static_nn\nopt_window: 10\n")
    assert _run(scenario, tmp_path / "o", "--config", str(cfg)) == 0
    assert "static_nn" in (tmp_path / "o" / "metrics.csv").read_text()


def test_usage_errors(scenario, tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", "--map", "x"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 1
    assert _run(scenario, tmp_path, "--window", "0") == 1
    code = cli.main(["compare", "--scenario", str(scenario), "--modes", "bogus", "--out", str(tmp_path)])
    assert code == 1


def test_data_errors(scenario, tmp_path):
    bad = tmp_path / "prior.csv"
    bad.write_text("index,x,y,theta\n0,1,2\n")
    code = cli.main(["run", "--map", str(scenario / "map.json"), "--prior", str(bad),
                     "--detections", str(scenario / "detections.json"), "--out", str(tmp_path / "o")])
    assert code == 2
    cfg = tmp_path / "c.yaml"
    cfg.write_text("no_such_key: 1\n")
    assert _run(scenario, tmp_path / "o", "--config", str(cfg)) == 2
    assert cli.main(["generate", "--layout", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2
