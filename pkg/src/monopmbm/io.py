"""Readers and writers for detections, tracks, calibration, poses and configs.

File layouts::

    detections.csv  frame,class,score,x_min,y_min,x_max,y_max,distance
    tracks.csv      frame,track_id,class,x_min,y_min,x_max,y_max,x,y,z,vx,vy,vz,existence
    calib.txt       f_u=..., f_v=..., c_u=..., c_v=..., frame_rate=... (one per line)
    poses.csv       frame,tx,ty,tz,qx,qy,qz,qw

Ground truth uses the tracks layout with the object id in ``track_id``.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .gaussian import GaussianDensity, GaussianMixtureIntensity, SigmaParams
from .models import (CameraModel, Detection, MeasurementRegion, ModelError, ModelParams, ObjectState,
                     cv_process_noise, default_birth_intensity, project_array)
from .pmbm import Estimate, FilterConfig

DETECTION_HEADER = ("frame", "class", "score", "x_min", "y_min", "x_max", "y_max", "distance")
TRACK_HEADER = ("frame", "track_id", "class", "x_min", "y_min", "x_max", "y_max",
                "x", "y", "z", "vx", "vy", "vz", "existence")
POSE_HEADER = ("frame", "tx", "ty", "tz", "qx", "qy", "qz", "qw")
CALIB_KEYS = ("f_u", "f_v", "c_u", "c_v", "frame_rate")
# guards against allocating per-frame lists for absurd indices
MAX_FRAME = 10_000_000


class FormatError(ValueError):
    """Malformed input file; carries the offending path and 1-based line."""

    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


def _read_lines(path) -> list[str]:
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = raw[:exc.start].count(b"\n") + 1
        raise FormatError(path, line, "not valid UTF-8 text") from None
    return text.splitlines()


def _floats(path, lineno: int, values: Sequence[str], names: Sequence[str]) -> list[float]:
    out = []
    for v, name in zip(values, names):
        try:
            x = float(v)
        except ValueError:
            raise FormatError(path, lineno, f"field {name!r} is not a number: {v!r}") from None
        if not math.isfinite(x):
            raise FormatError(path, lineno, f"field {name!r} is not finite: {v!r}")
        out.append(x)
    return out


def _int(path, lineno: int, v: str, name: str) -> int:
    try:
        x = int(v)
    except ValueError:
        raise FormatError(path, lineno, f"field {name!r} is not an integer: {v!r}") from None
    if name == "frame" and not 0 <= x <= MAX_FRAME:
        raise FormatError(path, lineno, f"frame index {x} outside [0, {MAX_FRAME}]")
    return x


def _group(records: list[tuple[int, object]], n_frames: Optional[int]) -> list[list]:
    last = max((f for f, _ in records), default=-1)
    n = last + 1 if n_frames is None else n_frames
    if last >= n:
        raise ValueError(f"record on frame {last} beyond requested {n} frames")
    out: list[list] = [[] for _ in range(n)]
    for f, rec in records:
        out[f].append(rec)
    return out


# --- detections -------------------------------------------------------------

def _detection(path, lineno, cls, score, box, d) -> Detection:
    if d <= 0:
        raise FormatError(path, lineno, f"distance must be positive, got {d}")
    if not 0.0 <= score <= 1.0:
        raise FormatError(path, lineno, f"score must lie in [0, 1], got {score}")
    try:
        return Detection(*box, d=d, score=score, class_label=cls)
    except ModelError as exc:
        raise FormatError(path, lineno, str(exc)) from None


def parse_detections(path, n_frames: Optional[int] = None, kitti_format: bool = False,
                     classes: Optional[Iterable[str]] = None) -> list[list[Detection]]:
    """Per-frame detection lists; frames without records are empty.

    With ``kitti_format`` the file is a KITTI tracking label/result file
    (space separated; box in columns 7-10, 1-based). The distance is taken
    from the 3D location column group: the norm of the box center, which
    lies half the box height above the labeled bottom-center point.
    ``DontCare`` rows are skipped.
    """
    keep = None if classes is None else set(classes)
    records: list[tuple[int, Detection]] = []
    last = -1
    lines = _read_lines(path)
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if kitti_format:
            parts = line.split()
            if len(parts) not in (17, 18):
                raise FormatError(path, lineno, f"expected 17 or 18 KITTI columns, got {len(parts)}")
            frame = _int(path, lineno, parts[0], "frame")
            last = max(last, frame)
            cls = parts[2]
            if cls == "DontCare":
                continue
            box = _floats(path, lineno, parts[6:10], ("left", "top", "right", "bottom"))
            h, _, _ = _floats(path, lineno, parts[10:13], ("height", "width", "length"))
            loc = np.array(_floats(path, lineno, parts[13:16], ("x", "y", "z")))
            score = _floats(path, lineno, parts[17:18], ("score",))[0] if len(parts) == 18 else 1.0
            score = min(max(score, 0.0), 1.0)
            d = float(np.linalg.norm(loc - np.array([0.0, h / 2, 0.0])))
        else:
            parts = [p.strip() for p in line.split(",")]
            if lineno == 1 and parts[0] == "frame":
                if tuple(parts) != DETECTION_HEADER:
                    raise FormatError(path, lineno, f"unexpected header {parts}")
                continue
            if len(parts) != len(DETECTION_HEADER):
                raise FormatError(path, lineno, f"expected {len(DETECTION_HEADER)} fields, got {len(parts)}")
            frame = _int(path, lineno, parts[0], "frame")
            cls = parts[1]
            score, *box, d = _floats(path, lineno, parts[2:], DETECTION_HEADER[2:])
        last = max(last, frame)
        if keep is not None and cls not in keep:
            continue
        records.append((frame, _detection(path, lineno, cls, score, box, d)))
    # filtered and DontCare rows still count towards the sequence length
    return _group(records, last + 1 if n_frames is None else n_frames)


def write_detections(path, frames: Sequence[Sequence[Detection]]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(DETECTION_HEADER) + "\n")
        for k, dets in enumerate(frames):
            for d in dets:
                fh.write(f"{k},{d.class_label},{d.score:.6f},{d.x_min!r},{d.y_min!r},{d.x_max!r},{d.y_max!r},"
                         f"{d.d:.6f}\n")


# --- tracks -----------------------------------------------------------------

@dataclass(frozen=True)
class TrackFileRecord:
    frame: int
    track_id: int
    class_label: str
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    x: float
    y: float
    z: float
    vx: float
    vy: float
    vz: float
    existence: float

    @property
    def box(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.x_max, self.y_max])

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class Pose:
    """Ego pose: world = rotation @ ego + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, p: np.ndarray) -> np.ndarray:
        return self.rotation @ p + self.translation


def track_record(frame: int, est: Estimate, cam: CameraModel, pose: Optional[Pose] = None,
                 class_label: str = "Car") -> TrackFileRecord:
    """Serialize one estimate; the box is reprojected from the ego-frame state."""
    s = est.state
    u, v, _, w, h = project_array(s.to_array(), cam)
    p, vel = s.position, s.velocity
    if pose is not None:
        p, vel = pose.apply(p), pose.rotation @ vel
    return TrackFileRecord(frame, int(est.track_id), class_label, u - w / 2, v - h / 2, u + w / 2, v + h / 2,
                           *(float(a) for a in p), *(float(a) for a in vel), float(est.existence))


def write_track_records(path, records: Iterable[TrackFileRecord]) -> None:
    rows = sorted(records, key=lambda r: (r.frame, r.track_id))
    with open(path, "w", newline="") as fh:
        fh.write(",".join(TRACK_HEADER) + "\n")
        for r in rows:
            vals = [repr(float(getattr(r, f.name))) for f in fields(r)[3:]]
            fh.write(f"{r.frame},{r.track_id},{r.class_label}," + ",".join(vals) + "\n")


def write_tracks(path, frames: Sequence[Sequence[Estimate]], camera: CameraModel,
                 poses: Optional[dict[int, Pose]] = None) -> None:
    """tracks.csv from per-frame estimates, ordered by frame then track id."""
    records = []
    for k, ests in enumerate(frames):
        pose = None if poses is None else poses.get(k)
        if poses is not None and pose is None:
            raise ValueError(f"no ego pose for frame {k}")
        records.extend(track_record(k, e, camera, pose) for e in ests)
    write_track_records(path, records)


def write_ground_truth(path, gt, camera: CameraModel) -> None:
    frames = [[Estimate(oid, s, 1.0) for oid, s in frame] for frame in gt.frames]
    write_tracks(path, frames, camera)


def parse_tracks(path, n_frames: Optional[int] = None) -> list[list[TrackFileRecord]]:
    records = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split(",")]
        if lineno == 1 and parts[0] == "frame":
            if tuple(parts) != TRACK_HEADER:
                raise FormatError(path, lineno, f"unexpected header {parts}")
            continue
        if len(parts) != len(TRACK_HEADER):
            raise FormatError(path, lineno, f"expected {len(TRACK_HEADER)} fields, got {len(parts)}")
        frame = _int(path, lineno, parts[0], "frame")
        tid = _int(path, lineno, parts[1], "track_id")
        vals = _floats(path, lineno, parts[3:], TRACK_HEADER[3:])
        if not (vals[0] < vals[2] and vals[1] < vals[3]):
            raise FormatError(path, lineno, "degenerate box")
        if not 0.0 <= vals[-1] <= 1.0:
            raise FormatError(path, lineno, f"existence must lie in [0, 1], got {vals[-1]}")
        records.append((frame, TrackFileRecord(frame, tid, parts[2], *vals)))
    return _group(records, n_frames)


def track_frames(frames: Sequence[Sequence[TrackFileRecord]], mode: str) -> list[dict[int, np.ndarray]]:
    """``id -> box`` (mode ``iou2d``) or ``id -> position`` (``euclidean3d``) per frame."""
    attr = "box" if mode == "iou2d" else "position"
    return [{r.track_id: getattr(r, attr) for r in frame} for frame in frames]


# --- calibration and poses --------------------------------------------------

def parse_calibration(path) -> CameraModel:
    values: dict[str, float] = {}
    allowed = set(CALIB_KEYS) | {"image_width", "image_height"}
    for lineno, line in enumerate(_read_lines(path), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(path, lineno, f"expected key=value, got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in allowed:
            raise FormatError(path, lineno, f"unknown calibration key {key!r}")
        values[key] = _floats(path, lineno, [val], [key])[0]
    missing = [k for k in CALIB_KEYS if k not in values]
    if missing:
        raise FormatError(path, 0, f"missing calibration keys {missing}")
    try:
        return CameraModel(**values)
    except ModelError as exc:
        raise FormatError(path, 0, str(exc)) from None


def write_calibration(path, cam: CameraModel) -> None:
    with open(path, "w") as fh:
        for k, v in asdict(cam).items():
            fh.write(f"{k}={v!r}\n")


def parse_poses(path) -> dict[int, Pose]:
    poses = {}
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split(",")]
        if lineno == 1 and parts[0] == "frame":
            continue
        if len(parts) != len(POSE_HEADER):
            raise FormatError(path, lineno, f"expected {len(POSE_HEADER)} fields, got {len(parts)}")
        frame = _int(path, lineno, parts[0], "frame")
        tx, ty, tz, qx, qy, qz, qw = _floats(path, lineno, parts[1:], POSE_HEADER[1:])
        q = np.array([qx, qy, qz, qw])
        if not np.linalg.norm(q) > 0:
            raise FormatError(path, lineno, "zero quaternion")
        poses[frame] = Pose(Rotation.from_quat(q).as_matrix(), np.array([tx, ty, tz]))
    return poses


# --- configuration ----------------------------------------------------------

def _matrix(value, n: int, name: str) -> np.ndarray:
    a = np.asarray(value, dtype=float)
    if a.shape == (n,):
        return np.diag(a)
    if a.shape == (n, n):
        return a
    raise ValueError(f"{name} must be a length-{n} diagonal or an {n}x{n} matrix, got shape {a.shape}")


def _mixture(spec, cam: CameraModel) -> GaussianMixtureIntensity:
    if isinstance(spec, dict):
        kw = dict(spec)
        if kw.pop("type", "grid") != "grid":
            raise ValueError("birth mixture object must be of type 'grid'")
        return default_birth_intensity(cam, **kw)
    comps = []
    for c in spec:
        mean = np.asarray(c["mean"], dtype=float)
        comps.append((math.log(float(c["weight"])), GaussianDensity(mean, _matrix(c["cov"], mean.size, "cov"))))
    return GaussianMixtureIntensity(comps, dim=8)


_MODEL_KEYS = {"p_D", "p_S", "lambda_clutter", "dt", "Q", "R", "birth", "clutter_region",
               "process_accel_std", "process_extent_std"}
_FILTER_KEYS = {f.name for f in fields(FilterConfig)}


def config_from_dict(cfg: dict, camera: Optional[CameraModel] = None) -> tuple[ModelParams, FilterConfig]:
    """Model parameters and filter tuning from a plain dictionary.

    Matrices may be given as a diagonal list or a full nested list; ``birth``
    is either a list of ``{weight, mean, cov}`` components or a grid spec
    ``{"type": "grid", ...}`` forwarded to ``default_birth_intensity``.
    """
    cam = camera or CameraModel()
    unknown = set(cfg) - _MODEL_KEYS - _FILTER_KEYS
    if unknown:
        raise ValueError(f"unknown configuration keys {sorted(unknown)}")
    dt = float(cfg.get("dt", cam.dt))
    if "Q" in cfg:
        Q = _matrix(cfg["Q"], 8, "Q")
    else:
        Q = cv_process_noise(dt, cfg.get("process_accel_std", (1.0, 0.2, 1.0)),
                             cfg.get("process_extent_std", (2.0, 2.0)))
    region = MeasurementRegion.for_camera(cam)
    if "clutter_region" in cfg:
        region = MeasurementRegion(**{k: tuple(v) for k, v in cfg["clutter_region"].items()})
    params = ModelParams(
        p_D=float(cfg.get("p_D", 0.9)), p_S=float(cfg.get("p_S", 0.99)),
        lambda_clutter=float(cfg.get("lambda_clutter", 5.0)), clutter_region=region, Q=Q,
        R=_matrix(cfg["R"], 5, "R") if "R" in cfg else None,
        birth_intensity=_mixture(cfg["birth"], cam) if "birth" in cfg else default_birth_intensity(cam),
        dt=dt, camera=cam)
    fkw = {k: cfg[k] for k in _FILTER_KEYS if k in cfg and k != "sigma"}
    if "sigma" in cfg:
        fkw["sigma"] = SigmaParams(**cfg["sigma"])
    return params, FilterConfig(**fkw)


def load_config(path, camera: Optional[CameraModel] = None) -> tuple[ModelParams, FilterConfig]:
    """JSON filter configuration; see ``config_from_dict`` for the keys."""
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(path, exc.lineno, exc.msg) from None
    if not isinstance(cfg, dict):
        raise FormatError(path, 1, "configuration must be a JSON object")
    return config_from_dict(cfg, camera)


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
