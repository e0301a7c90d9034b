"""Command-line front end: ``track``, ``simulate``, ``evaluate`` and ``bench``.

Diagnostics go to stderr through :mod:`logging`; tables and CSV data go to
stdout or to files under ``--out``. The exit status is 0 on success, 1 on
input, configuration or runtime errors and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import io as mio
from .bench import BENCH_FIELDS, make_scenario, result_row, run_case, run_tracker
from .evaluation import MatchCriterion, clear_mot, format_table, metrics_csv, pooled
from .models import CameraModel, ModelError, default_birth_intensity
from .pmbm import FilterConfig
from .sim import ScenarioConfig, sample_initial_objects, simulate

log = logging.getLogger("monopmbm")

_SCENARIO_KEYS = ("n_frames", "seed", "n_objects", "max_objects", "birth_rate", "min_depth", "max_distance",
                  "min_extent")


def _camera(args) -> CameraModel:
    return mio.parse_calibration(args.calib) if args.calib else CameraModel()


def _read_json(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise mio.FormatError(path, exc.lineno, exc.msg) from None
    if not isinstance(cfg, dict):
        raise mio.FormatError(path, 1, "configuration must be a JSON object")
    return cfg


# --- track --------------------------------------------------------------------

def cmd_track(args) -> int:
    cam = _camera(args)
    params, config = mio.load_config(args.config, cam) if args.config else mio.config_from_dict({}, cam)
    dets = mio.parse_detections(args.detections, args.n_frames, args.kitti_format,
                                args.classes.split(",") if args.classes else None)
    poses = mio.parse_poses(args.poses) if args.poses else None
    log.info("tracking %d frames from %s", len(dets), args.detections)
    run = run_tracker(params, config, dets)
    out = mio.ensure_dir(args.out)
    mio.write_tracks(out / "tracks.csv", run.estimates, cam, poses)
    n_est = sum(len(e) for e in run.estimates)
    log.info("wrote %d estimates to %s", n_est, out / "tracks.csv")
    print(f"frames={len(dets)} estimates={n_est} mean_ms={run.mean_ms:.3f} max_ms={run.max_ms:.3f}")
    return 0


# --- simulate -----------------------------------------------------------------

def scenario_from_dict(cfg: dict, camera: Optional[CameraModel] = None, seed: Optional[int] = None) -> ScenarioConfig:
    """Scenario from a JSON-style dictionary.

    Scenario keys are ``n_frames``, ``seed``, ``n_objects`` (initial objects
    drawn from the birth prior), ``max_objects``, ``birth_rate`` (total rate
    of the default birth grid), ``min_depth``, ``max_distance`` and
    ``min_extent``; every other key is a model parameter as accepted by
    :func:`monopmbm.io.config_from_dict`.
    """
    cam = camera or CameraModel()
    model_cfg = {k: v for k, v in cfg.items() if k not in _SCENARIO_KEYS}
    params, _ = mio.config_from_dict(model_cfg, cam)
    if "birth_rate" in cfg:
        if "birth" in cfg:
            raise ValueError("give either 'birth' or 'birth_rate', not both")
        params = replace(params, birth_intensity=default_birth_intensity(cam, total_rate=float(cfg["birth_rate"])))
    seed = int(cfg.get("seed", 0)) if seed is None else int(seed)
    sc = ScenarioConfig(params=params, n_frames=cfg.get("n_frames", 100), rng_seed=seed, camera=cam,
                        max_objects=cfg.get("max_objects"), min_depth=float(cfg.get("min_depth", 2.0)),
                        max_distance=float(cfg.get("max_distance", 100.0)),
                        min_extent=float(cfg.get("min_extent", 5.0)))
    n0 = int(cfg.get("n_objects", 0))
    if n0:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1D]))
        sc.initial_objects = sample_initial_objects(n0, sc, rng)
    return sc


def cmd_simulate(args) -> int:
    cfg = _read_json(args.config) if args.config else {}
    sc = scenario_from_dict(cfg, _camera(args), args.seed)
    gt, dets = simulate(sc)
    out = mio.ensure_dir(args.out)
    mio.write_detections(out / "detections.csv", dets)
    mio.write_ground_truth(out / "ground_truth.csv", gt, sc.camera)
    mio.write_calibration(out / "calib.txt", sc.camera)
    echo = dict(cfg, seed=sc.rng_seed, n_frames=sc.n_frames)
    (out / "scenario.json").write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n")
    log.info("simulated %d frames, %d objects, %d detections into %s", gt.n_frames, len(gt.birth_frame),
             sum(len(d) for d in dets), out)
    return 0


# --- evaluate -----------------------------------------------------------------

def _sequence_names(paths: Sequence[str]) -> list[str]:
    if len(paths) == 1:
        return ["seq0"]
    names = [Path(p).parent.name or Path(p).stem for p in paths]
    return names if len(set(names)) == len(names) else [f"seq{i}" for i in range(len(paths))]


def cmd_evaluate(args) -> int:
    if len(args.ground_truth) != len(args.tracks):
        raise ValueError(f"{len(args.ground_truth)} ground-truth files but {len(args.tracks)} track files")
    crits = [MatchCriterion.iou2d(), MatchCriterion.euclidean3d()] if args.criterion == "both" \
        else [MatchCriterion.from_name(args.criterion)]
    names = _sequence_names(args.ground_truth)
    per_crit: dict[str, list] = {c.label: [] for c in crits}
    rows = []
    for name, gt_path, tr_path in zip(names, args.ground_truth, args.tracks):
        gt = mio.parse_tracks(gt_path, args.n_frames)
        tr = mio.parse_tracks(tr_path, args.n_frames)
        if len(tr) > len(gt):
            raise ValueError(f"frame mismatch: {tr_path} has {len(tr)} frames, {gt_path} has {len(gt)}")
        tr = tr + [[] for _ in range(len(gt) - len(tr))]
        for c in crits:
            m = clear_mot(mio.track_frames(gt, c.mode), mio.track_frames(tr, c.mode), c)
            per_crit[c.label].append(m)
            rows.append((name, m))
    if len(names) > 1:
        rows.extend(("all", pooled(ms)) for ms in per_crit.values())
    print(format_table(rows))
    if args.out:
        path = Path(args.out)
        if path.suffix != ".csv":
            path = mio.ensure_dir(path) / "metrics.csv"
        path.write_text(metrics_csv(rows))
        log.info("wrote metrics to %s", path)
    return 0


# --- bench --------------------------------------------------------------------

_PRESETS = {
    # moderate scenes used for the quality sweep
    "default": dict(n_objects=5, max_objects=10, birth_rate=0.05),
    # dense scenes for timing: up to 20 objects and about 20 to 30 detections per frame
    "kitti": dict(n_objects=20, max_objects=20, birth_rate=0.3),
}


def _bench_case(job):
    seed, lam, pd, n_frames, preset, config = job
    sc = make_scenario(seed, n_frames, pd, lam, **_PRESETS[preset])
    return result_row(run_case(sc, config))


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_bench(args) -> int:
    config = mio.load_config(args.config)[1] if args.config else FilterConfig()
    jobs = [(args.seed + s, lam, pd, args.n_frames, args.preset, config)
            for lam in _floats(args.lambdas) for pd in _floats(args.pds) for s in range(args.n_seeds)]
    log.info("running %d cases", len(jobs))
    if args.workers > 1:
        log.warning("latencies are measured with %d concurrent workers", args.workers)
        with ProcessPoolExecutor(args.workers) as ex:
            rows = list(ex.map(_bench_case, jobs))
    else:
        rows = [_bench_case(j) for j in jobs]
    out = csv.DictWriter(sys.stdout, fieldnames=BENCH_FIELDS, lineterminator="\n")
    if args.out:
        path = Path(args.out)
        if path.suffix != ".csv":
            path = mio.ensure_dir(path) / "bench.csv"
        fh = open(path, "w", newline="")
        out = csv.DictWriter(fh, fieldnames=BENCH_FIELDS, lineterminator="\n")
    out.writeheader()
    out.writerows(rows)
    if args.out:
        fh.close()
    ms = np.array([r["mean_ms"] for r in rows])
    mx = max(r["max_ms"] for r in rows)
    summary = (f"cases={len(rows)} mean_ms={ms.mean():.3f} max_ms={mx:.3f} "
               f"mean_mota_3d={np.mean([r['mota_3d'] for r in rows]):.4f}")
    print(summary, file=sys.stdout if args.out else sys.stderr)
    return 0


# --- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="monopmbm", description="PMBM tracking of monocular 3D detections.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more log output on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("track", help="run the filter over a detection file")
    t.add_argument("--detections", required=True)
    t.add_argument("--calib", help="key=value camera calibration (default: KITTI-like camera)")
    t.add_argument("--config", help="JSON model and filter parameters")
    t.add_argument("--poses", help="ego poses; tracks are written in the world frame")
    t.add_argument("--kitti-format", action="store_true", help="read KITTI tracking label rows")
    t.add_argument("--classes", help="comma-separated classes to keep")
    t.add_argument("--n-frames", type=int, help="sequence length (default: last frame with a detection + 1)")
    t.add_argument("--out", required=True, help="output directory for tracks.csv")
    t.set_defaults(func=cmd_track)

    s = sub.add_parser("simulate", help="draw a synthetic scenario")
    s.add_argument("--config", help="JSON scenario and model parameters")
    s.add_argument("--calib")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("evaluate", help="CLEAR-MOT metrics of tracks against ground truth")
    e.add_argument("--ground-truth", "--gt", nargs="+", required=True)
    e.add_argument("--tracks", nargs="+", required=True)
    e.add_argument("--criterion", choices=("2d", "3d", "both"), default="both")
    e.add_argument("--n-frames", type=int)
    e.add_argument("--out", help="metrics CSV path or directory")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("bench", help="closed-loop sweep over clutter rate and detection probability")
    b.add_argument("--config", help="JSON filter parameters")
    b.add_argument("--lambdas", default="2")
    b.add_argument("--pds", default="0.95")
    b.add_argument("--seed", type=int, default=0, help="first scenario seed")
    b.add_argument("--n-seeds", type=int, default=5)
    b.add_argument("--n-frames", type=int, default=200)
    b.add_argument("--preset", choices=sorted(_PRESETS), default="default")
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--out", help="bench CSV path or directory (default: stdout)")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        return args.func(args)
    except (OSError, ValueError, ModelError, np.linalg.LinAlgError, RuntimeError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
