import json

import numpy as np
import pytest

from monopmbm import io as mio
from monopmbm.cli import main
from monopmbm.gaussian import GaussianMixtureIntensity
from monopmbm.models import ModelParams, ObjectState
from monopmbm.sim import ScenarioConfig, simulate

SCENARIO = {"n_frames": 40, "n_objects": 3, "max_objects": 6, "p_D": 0.95, "lambda_clutter": 2.0, "birth_rate": 0.05}


@pytest.fixture
def sim_dir(tmp_path):
    cfg = tmp_path / "scenario.json"
    cfg.write_text(json.dumps(SCENARIO))
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(cfg), "--seed", "4", "--out", str(out)]) == 0
    return out


def test_simulate_outputs(sim_dir, tmp_path):
    assert sorted(p.name for p in sim_dir.iterdir()) == ["calib.txt", "detections.csv", "ground_truth.csv",
                                                          "scenario.json"]
    echo = json.loads((sim_dir / "scenario.json").read_text())
    assert echo["seed"] == 4 and echo["n_frames"] == 40 and echo["p_D"] == 0.95

    again = tmp_path / "again"
    main(["simulate", "--config", str(tmp_path / "scenario.json"), "--seed", "4", "--out", str(again)])
    for name in ("detections.csv", "ground_truth.csv", "calib.txt"):
        assert (again / name).read_bytes() == (sim_dir / name).read_bytes()


def test_simulate_rejects_zero_frames(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"n_frames": 0}')
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 1
    err = capsys.readouterr().err
    assert "n_frames" in err


def test_track_is_deterministic(sim_dir, tmp_path, capsys):
    args = ["track", "--detections", str(sim_dir / "detections.csv"), "--calib", str(sim_dir / "calib.txt"),
            "--n-frames", "40"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "tracks.csv").read_bytes() == (tmp_path / "b" / "tracks.csv").read_bytes()
    out = capsys.readouterr().out
    assert "mean_ms=" in out and "max_ms=" in out


def test_track_empty_detections(tmp_path):
    det = tmp_path / "empty.csv"
    det.write_text("")
    assert main(["track", "--detections", str(det), "--n-frames", "5", "--out", str(tmp_path / "t")]) == 0
    assert mio.parse_tracks(tmp_path / "t" / "tracks.csv") == []


def test_track_noiseless_single_object(tmp_path):
    obj = ObjectState(1.0, 0.8, 25.0, 0.5, 0.0, 2.0, 50.0, 40.0)
    p = ModelParams(p_D=1.0, p_S=1.0, lambda_clutter=0.0, Q=np.zeros((8, 8)), R=np.zeros((5, 5)),
                    birth_intensity=GaussianMixtureIntensity.empty(8))
    gt, dets = simulate(ScenarioConfig(p, n_frames=50, initial_objects=[obj]))
    mio.write_detections(tmp_path / "d.csv", dets)
    assert main(["track", "--detections", str(tmp_path / "d.csv"), "--out", str(tmp_path / "t")]) == 0
    frames = mio.parse_tracks(tmp_path / "t" / "tracks.csv", 50)
    # after confirmation the object keeps one identity to the end
    ids = [[r.track_id for r in f] for f in frames]
    first = next(k for k, f in enumerate(ids) if f)
    assert first <= 1
    assert all(f == ids[first] and len(f) == 1 for f in ids[first:])


def test_evaluate_perfect_and_both_criteria(sim_dir, tmp_path, capsys):
    gt = str(sim_dir / "ground_truth.csv")
    assert main(["evaluate", "--gt", gt, "--tracks", gt, "--out", str(tmp_path / "m.csv")]) == 0
    out = capsys.readouterr().out
    rows = [line for line in out.splitlines()[1:]]
    assert len(rows) == 2 and all("100.00%" in r.split()[2] for r in rows)
    csv_rows = (tmp_path / "m.csv").read_text().splitlines()
    assert [r.split(",")[1] for r in csv_rows[1:]] == ["2D", "3D"]


def test_evaluate_hand_fixture(tmp_path):
    def rec(frame, tid, x):
        return mio.TrackFileRecord(frame, tid, "Car", 0.0, 0.0, 10.0, 10.0, x, 0.0, 20.0, 0, 0, 0, 1.0)

    gt = [rec(0, 1, 0), rec(0, 2, 10), rec(1, 1, 0), rec(1, 2, 10), rec(2, 1, 0)]
    tr = [rec(0, 1, 0.1), rec(0, 2, 10.2), rec(1, 1, 0.3), rec(1, 3, 50), rec(2, 4, 0.4)]
    mio.write_track_records(tmp_path / "gt.csv", gt)
    mio.write_track_records(tmp_path / "tr.csv", tr)
    assert main(["evaluate", "--gt", str(tmp_path / "gt.csv"), "--tracks", str(tmp_path / "tr.csv"),
                 "--criterion", "3d", "--out", str(tmp_path)]) == 0
    row = (tmp_path / "metrics.csv").read_text().splitlines()[1].split(",")
    fields = dict(zip(("sequence", "criterion", "mota", "motp", "mt", "ml", "ids", "frag"), row))
    assert float(fields["mota"]) == pytest.approx(0.4)
    assert float(fields["motp"]) == pytest.approx(25.0)
    assert (fields["ids"], fields["frag"], fields["mt"], fields["ml"]) == ("1", "1", "0.5", "0.0")


def test_evaluate_frame_mismatch(tmp_path):
    def rec(frame):
        return mio.TrackFileRecord(frame, 1, "Car", 0.0, 0.0, 10.0, 10.0, 0.0, 0.0, 20.0, 0, 0, 0, 1.0)

    mio.write_track_records(tmp_path / "gt.csv", [rec(0)])
    mio.write_track_records(tmp_path / "tr.csv", [rec(0), rec(5)])
    assert main(["evaluate", "--gt", str(tmp_path / "gt.csv"), "--tracks", str(tmp_path / "tr.csv")]) == 1


def test_missing_input_is_an_error(tmp_path, capsys):
    assert main(["track", "--detections", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 1
    captured = capsys.readouterr()
    assert captured.out == "" and "nope.csv" in captured.err


def test_bad_file_reports_location(tmp_path, capsys):
    det = tmp_path / "d.csv"
    det.write_text("0,Car,1,1,2,3,4,10\n0,Car,1,1,2\n")
    assert main(["track", "--detections", str(det), "--out", str(tmp_path)]) == 1
    assert "d.csv:2" in capsys.readouterr().err


def test_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_bench_small(tmp_path, capsys):
    assert main(["bench", "--n-seeds", "1", "--n-frames", "20", "--lambdas", "1,2", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "bench.csv").read_text().splitlines()
    assert rows[0].startswith("seed,p_D,lambda") and len(rows) == 3
    assert "mean_ms=" in capsys.readouterr().out
