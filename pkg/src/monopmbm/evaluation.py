"""CLEAR-MOT evaluation with IoU (image plane) or Euclidean (3D) matching.

Frames are given as mappings ``id -> value`` where the value is a box
``(x_min, y_min, x_max, y_max)`` for 2D matching and a position ``(x, y, z)``
for 3D matching. ``frames_from_states`` converts simulator ground truth or
filter estimates into that form.

Counting conventions:

* matches from the previous frame are kept while still valid, the rest are
  matched by a maximum-cardinality, minimum-cost assignment;
* an identity switch is counted whenever a ground-truth object is matched to
  a different estimate id than at its last match, even across gaps;
* a fragmentation is counted whenever a ground-truth object that has been
  matched before becomes matched after being unmatched, or changes id;
* mostly tracked / mostly lost are trajectories matched in at least 80% /
  at most 20% of their frames.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .assignment import solve_lap
from .models import CameraModel, ModelError, ObjectState, project_array

IOU2D = "iou2d"
EUCLIDEAN3D = "euclidean3d"


@dataclass(frozen=True)
class MatchCriterion:
    mode: str = EUCLIDEAN3D
    threshold: float = 3.0

    def __post_init__(self):
        if self.mode not in (IOU2D, EUCLIDEAN3D):
            raise ValueError(f"unknown match mode {self.mode!r}")
        if not self.threshold > 0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")

    @classmethod
    def iou2d(cls, threshold: float = 0.5) -> "MatchCriterion":
        return cls(IOU2D, threshold)

    @classmethod
    def euclidean3d(cls, threshold: float = 3.0) -> "MatchCriterion":
        return cls(EUCLIDEAN3D, threshold)

    @classmethod
    def from_name(cls, name: str) -> "MatchCriterion":
        return {"2d": cls.iou2d, "3d": cls.euclidean3d}[name]()

    @property
    def label(self) -> str:
        return "2D" if self.mode == IOU2D else "3D"

    def score(self, gt, est) -> float:
        if self.mode == IOU2D:
            return iou(gt, est)
        return float(np.linalg.norm(np.asarray(gt, dtype=float) - np.asarray(est, dtype=float)))

    def valid(self, s: float) -> bool:
        return s >= self.threshold if self.mode == IOU2D else s <= self.threshold

    def cost(self, s: float) -> float:
        return 1.0 - s if self.mode == IOU2D else s


def iou(a, b) -> float:
    ax0, ay0, ax1, ay1 = (float(v) for v in a)
    bx0, by0, bx1, by1 = (float(v) for v in b)
    if not (ax0 < ax1 and ay0 < ay1 and bx0 < bx1 and by0 < by1):
        raise ModelError(f"degenerate box in iou({a}, {b})")
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / ((ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter)


def state_box(state: ObjectState, cam: CameraModel) -> np.ndarray:
    u, v, _, w, h = project_array(state.to_array(), cam)
    return np.array([u - w / 2, v - h / 2, u + w / 2, v + h / 2])


def frames_from_states(frames: Iterable[Iterable], criterion: MatchCriterion,
                       camera: Optional[CameraModel] = None) -> list[dict[int, np.ndarray]]:
    """Per-frame ``id -> box or position`` from sequences of ``(id, ObjectState, ...)``.

    Accepts ``GroundTruth.frames`` and lists of filter estimates alike.
    """
    if criterion.mode == IOU2D and camera is None:
        raise ValueError("2D matching of states needs a camera")
    out = []
    for frame in frames:
        d = {}
        for item in frame:
            tid, state = int(item[0]), item[1]
            d[tid] = state_box(state, camera) if criterion.mode == IOU2D else state.position
        out.append(d)
    return out


@dataclass
class MotMetrics:
    criterion: str
    mota: float
    motp: float
    mt: float
    ml: float
    ids: int
    frag: int
    f1: float
    precision: float
    recall: float
    far: float
    tp: int
    fp: int
    fn: int
    n_gt: int
    n_frames: int
    n_trajectories: int
    mt_count: int
    ml_count: int
    score_sum: float
    per_frame_tp: list[int] = field(default_factory=list, repr=False)
    per_frame_fp: list[int] = field(default_factory=list, repr=False)
    per_frame_fn: list[int] = field(default_factory=list, repr=False)


TABLE_COLUMNS = ("MOTA", "MOTP", "MT", "ML", "IDS", "FRAG", "F1", "Pre", "Rec", "FAR")
CSV_FIELDS = ("sequence", "criterion", "mota", "motp", "mt", "ml", "ids", "frag", "f1", "precision", "recall",
              "far", "tp", "fp", "fn", "n_gt", "n_frames", "n_trajectories")


def _finish(criterion: MatchCriterion, tp, fp, fn, ids, frag, n_frames, n_traj, mt_count, ml_count, score_sum,
            per_tp=(), per_fp=(), per_fn=()) -> MotMetrics:
    n_gt = tp + fn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / n_gt if n_gt else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    if tp:
        motp = score_sum / tp * (100.0 if criterion.mode == EUCLIDEAN3D else 1.0)
    else:
        motp = 0.0
    return MotMetrics(
        criterion=criterion.label,
        mota=1.0 - (fn + fp + ids) / max(n_gt, 1),
        motp=motp,
        mt=mt_count / n_traj if n_traj else 0.0,
        ml=ml_count / n_traj if n_traj else 0.0,
        ids=ids, frag=frag, f1=f1, precision=precision, recall=recall,
        far=fp / n_frames if n_frames else 0.0,
        tp=tp, fp=fp, fn=fn, n_gt=n_gt, n_frames=n_frames, n_trajectories=n_traj,
        mt_count=mt_count, ml_count=ml_count, score_sum=score_sum,
        per_frame_tp=list(per_tp), per_frame_fp=list(per_fp), per_frame_fn=list(per_fn))


def _match_frame(gt: Mapping[int, np.ndarray], est: Mapping[int, np.ndarray], prev: Mapping[int, int],
                 crit: MatchCriterion) -> dict[int, tuple[int, float]]:
    matches: dict[int, tuple[int, float]] = {}
    used = set()
    for g, e in prev.items():
        if g in gt and e in est and e not in used:
            s = crit.score(gt[g], est[e])
            if crit.valid(s):
                matches[g] = (e, s)
                used.add(e)
    g_left = [g for g in gt if g not in matches]
    e_left = [e for e in est if e not in used]
    if not g_left or not e_left:
        return matches
    scores = np.array([[crit.score(gt[g], est[e]) for e in e_left] for g in g_left])
    n_g, n_e = scores.shape
    # one dummy column per ground truth so that anything may stay unmatched;
    # the dummy cost dominates so the number of matches is maximized first
    cost = np.full((n_g, n_e + n_g), np.inf)
    for i in range(n_g):
        for j in range(n_e):
            if crit.valid(scores[i, j]):
                cost[i, j] = crit.cost(scores[i, j])
        cost[i, n_e + i] = 1e6
    sol = solve_lap(cost)
    for i, j in enumerate(sol.row_to_col):
        if j < n_e:
            matches[g_left[i]] = (e_left[j], float(scores[i, j]))
    return matches


def clear_mot(gt_frames: Sequence[Mapping[int, np.ndarray]], track_frames: Sequence[Mapping[int, np.ndarray]],
              crit: MatchCriterion = MatchCriterion()) -> MotMetrics:
    if len(gt_frames) != len(track_frames):
        raise ValueError(f"frame count mismatch: {len(gt_frames)} ground-truth vs {len(track_frames)} tracked")
    tp = fp = fn = ids = frag = 0
    score_sum = 0.0
    per_tp, per_fp, per_fn = [], [], []
    prev: dict[int, int] = {}
    last_id: dict[int, int] = {}
    prev_status: dict[int, Optional[int]] = {}  # id matched in the object's previous frame
    lifetime: dict[int, int] = {}
    tracked: dict[int, int] = {}

    for gt, est in zip(gt_frames, track_frames):
        matches = _match_frame(gt, est, prev, crit)
        n_tp = len(matches)
        tp += n_tp
        fp += len(est) - n_tp
        fn += len(gt) - n_tp
        per_tp.append(n_tp); per_fp.append(len(est) - n_tp); per_fn.append(len(gt) - n_tp)
        for g in gt:
            lifetime[g] = lifetime.get(g, 0) + 1
            cur = matches[g][0] if g in matches else None
            if cur is not None:
                tracked[g] = tracked.get(g, 0) + 1
                score_sum += matches[g][1]
                if g in last_id:
                    if last_id[g] != cur:
                        ids += 1
                    if prev_status.get(g) != cur:
                        frag += 1
                last_id[g] = cur
            prev_status[g] = cur
        prev = {g: e for g, (e, _) in matches.items()}

    ratios = [tracked.get(g, 0) / n for g, n in lifetime.items()]
    mt_count = sum(r >= 0.8 for r in ratios)
    ml_count = sum(r <= 0.2 for r in ratios)
    return _finish(crit, tp, fp, fn, ids, frag, len(gt_frames), len(lifetime), mt_count, ml_count, score_sum,
                   per_tp, per_fp, per_fn)


def pooled(metrics: Sequence[MotMetrics]) -> MotMetrics:
    """Aggregate over sequences by summing counts, then recomputing ratios."""
    if not metrics:
        raise ValueError("nothing to aggregate")
    labels = {m.criterion for m in metrics}
    if len(labels) != 1:
        raise ValueError(f"cannot pool different criteria {labels}")
    crit = MatchCriterion.iou2d() if labels.pop() == "2D" else MatchCriterion.euclidean3d()
    s = lambda name: sum(getattr(m, name) for m in metrics)  # noqa: E731
    return _finish(crit, s("tp"), s("fp"), s("fn"), s("ids"), s("frag"), s("n_frames"), s("n_trajectories"),
                   s("mt_count"), s("ml_count"), s("score_sum"))


def metrics_csv(rows: Sequence[tuple[str, MotMetrics]]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for name, m in rows:
        d = asdict(m)
        w.writerow({"sequence": name, **{k: d[k] for k in CSV_FIELDS[1:]}})
    return buf.getvalue()


def format_table(rows: Sequence[tuple[str, MotMetrics]]) -> str:
    """Fixed-width summary with the usual MOT benchmark columns."""
    head = f"{'sequence':<12}{'crit':>5}" + "".join(f"{c:>9}" for c in TABLE_COLUMNS)
    lines = [head]
    for name, m in rows:
        motp = f"{m.motp:.2f}cm" if m.criterion == "3D" else f"{100 * m.motp:.2f}%"
        cells = [f"{100 * m.mota:.2f}%", motp, f"{100 * m.mt:.2f}%", f"{100 * m.ml:.2f}%", str(m.ids),
                 str(m.frag), f"{100 * m.f1:.2f}%", f"{100 * m.precision:.2f}%", f"{100 * m.recall:.2f}%",
                 f"{100 * m.far:.2f}%"]
        lines.append(f"{name:<12}{m.criterion:>5}" + "".join(f"{c:>9}" for c in cells))
    return "\n".join(lines)
