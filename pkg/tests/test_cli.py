import csv
import json
import shutil
from pathlib import Path

import pytest

from disentangle3d.cli import main
from disentangle3d.evaluation import NuscBox
from disentangle3d.kitti_io import write_nusc_boxes

DATA = Path(__file__).parent / "data"


def test_ap_flaw_demo(capsys):
    assert main(["ap-flaw-demo", "--gt-count", "100"]) == 0
    out = capsys.readouterr().out
    assert out.count("AP|R11 = 0.090909") == 3
    assert out.count("AP|R40 = 0.000000") == 3


@pytest.fixture
def label_dir(tmp_path):
    gt = tmp_path / "gt"
    gt.mkdir()
    shutil.copy(DATA / "labels_50.txt", gt / "000000.txt")
    return gt


def test_eval_detections_equal_ground_truth(label_dir, tmp_path, capsys):
    det = tmp_path / "det"
    det.mkdir()
    rows = [l for l in (label_dir / "000000.txt").read_text().splitlines() if not l.startswith("DontCare")]
    (det / "000000.txt").write_text("".join(f"{r} 1.0\n" for r in rows))
    report = tmp_path / "report.json"
    assert main(["eval", "--gt", str(label_dir), "--det", str(det), "--class", "Car", "--out", str(report),
                 "--curves-dir", str(tmp_path / "curves")]) == 0
    results = json.loads(report.read_text())["results"]
    assert all(v == 1.0 for task in results.values() for d in task.values() for v in d.values())
    assert (tmp_path / "curves" / "3d_moderate_R40.csv").exists()
    assert "AP|R40" in capsys.readouterr().out


def test_eval_missing_directory(tmp_path, capsys):
    assert main(["eval", "--gt", str(tmp_path / "nope"), "--det", str(tmp_path)]) != 0
    assert "error" in capsys.readouterr().err


def test_eval_nusc(tmp_path, capsys):
    gts = [NuscBox(f"s{i}", (float(i), 0.0, 1.0), (1.9, 4.5, 1.6), 0.0) for i in range(5)]
    dets = [NuscBox(b.sample, b.center, b.size, b.yaw, 0.9) for b in gts]
    write_nusc_boxes(tmp_path / "gt.csv", gts)
    write_nusc_boxes(tmp_path / "det.csv", dets)
    assert main(["eval-nusc", "--gt", str(tmp_path / "gt.csv"), "--det", str(tmp_path / "det.csv"),
                 "--out", str(tmp_path / "r.json")]) == 0
    assert json.loads((tmp_path / "r.json").read_text())["mAP"] == pytest.approx(1.0)
    assert "ATE = 0.000000" in capsys.readouterr().out


def test_toy_writes_csvs_and_summary(tmp_path):
    assert main(["toy", "--iters", "40", "--out-dir", str(tmp_path)]) == 0
    for mode in ("entangled", "disentangled"):
        rows = list(csv.reader(open(tmp_path / f"trajectory_{mode}.csv")))
        assert len(rows) == 42
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert set(summary) == {"entangled", "disentangled", "deltas"}


def test_toy_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["toy", "--mode", "disentangled", "--iters", "25", "--out-dir", str(tmp_path / name)]) == 0
    a = (tmp_path / "a" / "trajectory_disentangled.csv").read_bytes()
    assert a == (tmp_path / "b" / "trajectory_disentangled.csv").read_bytes()


def test_preprocess_command(label_dir, tmp_path, capsys):
    out = tmp_path / "clean"
    assert main(["preprocess", "--labels", str(label_dir), "--out", str(out)]) == 0
    assert (out / "000000.txt").exists()
    assert "converted" in capsys.readouterr().out


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--trials", "5", "--seed", "3"]) == 0
    assert capsys.readouterr().out.count("PASS") == 2
    assert main(["gradcheck", "--trials", "2", "--tol", "1e-30"]) == 1
