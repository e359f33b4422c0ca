import json

import pytest

from conftest import CACHE
from regrasp.bench.report import COLUMNS, read_csv
from regrasp.cli import main
from regrasp.geometry.mesh import write_stl_binary
from regrasp.geometry.shapes import extrude

BASE = ["--cache-dir", str(CACHE)]


@pytest.fixture(scope="module")
def prism(tmp_path_factory):
    path = tmp_path_factory.mktemp("mesh") / "prism.stl"
    write_stl_binary(extrude([(0.0, 0.0), (0.05, 0.0), (0.025, 0.043)], 0.03), path)
    return str(path)


def test_plan_grasps(tmp_path, prism):
    out = tmp_path / "g.json"
    assert main(BASE + ["plan-grasps", "--object", "lblock", "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["object"] == "lblock" and len(d["grasps"]) > 0
    q = [g["quality"] for g in d["grasps"]]
    assert all(a >= b - 1e-12 for a, b in zip(q, q[1:]))
    assert main(BASE + ["plan-grasps", "--object", prism, "--out", str(out)]) == 0
    assert json.loads(out.read_text())["object"] == "prism"


def test_plan_placements(tmp_path):
    out = tmp_path / "p.json"
    assert main(BASE + ["plan-placements", "--object", "box", "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert len(d["placements"]) == 6


def test_unknown_object_is_an_error(tmp_path, capsys):
    assert main(BASE + ["plan-grasps", "--object", "nope", "--out", str(tmp_path / "x")]) == 2
    assert "unknown object" in capsys.readouterr().err


def test_plan_regrasp(tmp_path):
    out, tr = tmp_path / "plan.json", tmp_path / "traj.json"
    rc = main(BASE + ["plan-regrasp", "--object", "lblock", "--initial", "0", "--goal", "1",
                      "--init-yaw", "0.3", "--goal-yaw", "2.3", "--mode", "dual",
                      "--out", str(out), "--trajectories", str(tr)])
    d = json.loads(out.read_text())
    assert rc == 0 and d["result"]["success"] == 1 and d["result"]["revalidated"] == 1
    assert d["plan"]["mode"] == "dual"
    segs = json.loads(tr.read_text())
    assert [s["label"] for s in segs] == [s["label"] for s in d["plan"]["segments"]]
    assert all(len(s["waypoints"][0]) == 6 for s in segs)


def test_plan_regrasp_failure_exit_code(tmp_path):
    # the object sits out of reach of both arms
    cfg = tmp_path / "far.yaml"
    cfg.write_text("scene:\n  anchor: [3.0, 0.0]\n")
    out = tmp_path / "plan.json"
    rc = main(BASE + ["--config", str(cfg), "plan-regrasp", "--object", "lblock", "--initial",
                      "0", "--goal", "1", "--init-yaw", "0.3", "--goal-yaw", "2.3",
                      "--out", str(out)])
    d = json.loads(out.read_text())
    assert rc == 1 and d["plan"] is None and d["result"]["failure_phase"]


def test_compare_tiny(tmp_path, prism):
    out = tmp_path / "cmp"
    rc = main(BASE + ["compare", "--object", prism, "--trials", "1", "--seed", "3",
                      "--modes", "single", "--out", str(out)])
    assert rc == 0
    for f in ("trials.csv", "summary.json", "success.svg", "time.svg", "run.json"):
        assert (out / f).exists()
    rows = read_csv(out / "trials.csv")
    header = (out / "trials.csv").read_text().splitlines()[0]
    assert header == ",".join(COLUMNS)
    s = json.loads((out / "summary.json").read_text())
    n = s["objects"]["prism"]["placements"]
    assert len(rows) == n * n and {r["mode"] for r in rows} == {"single"}
    run = json.loads((out / "run.json").read_text())
    assert run["trials_run"] == len(rows) and run["seed"] == 3 and run["wall_time_s"] > 0
    with pytest.raises(SystemExit):
        main(BASE + ["compare", "--trials", "1"])
    assert main(BASE + ["compare", "--object", "box", "--trials", "0",
                        "--out", str(tmp_path / "z")]) == 2
