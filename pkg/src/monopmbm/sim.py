"""Synthetic scenarios drawn from the standard motion and detection models."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .models import (CameraModel, Detection, MeasurementVector, ModelError, ModelParams, ObjectState,
                     project_array)

_PURPOSES = ("birth", "survival", "motion", "detection", "clutter")


@dataclass
class ScenarioConfig:
    """Scenario definition.

    Objects also leave the scene (outside the standard model) once their
    depth drops below ``min_depth``, their distance exceeds ``max_distance``
    or their box shrinks below ``min_extent`` pixels; ``max_objects`` caps
    the number alive by discarding surplus births.
    """

    params: ModelParams = field(default_factory=ModelParams)
    n_frames: int = 100
    rng_seed: int = 0
    camera: Optional[CameraModel] = None
    initial_objects: list[ObjectState] = field(default_factory=list)
    max_objects: Optional[int] = None
    min_depth: float = 2.0
    max_distance: float = 100.0
    min_extent: float = 5.0

    def __post_init__(self):
        if self.camera is None:
            self.camera = self.params.camera
        self.validate()

    def validate(self):
        if int(self.n_frames) != self.n_frames or self.n_frames < 1:
            raise ModelError(f"n_frames must be a positive integer, got {self.n_frames}")
        if not 0 <= int(self.rng_seed) < 2 ** 64:
            raise ModelError(f"rng_seed must be a 64-bit unsigned integer, got {self.rng_seed}")


@dataclass
class GroundTruth:
    frames: list[list[tuple[int, ObjectState]]]
    birth_frame: dict[int, int] = field(default_factory=dict)
    death_frame: dict[int, Optional[int]] = field(default_factory=dict)
    # object id behind each simulated detection, -1 for clutter
    detection_sources: list[list[int]] = field(default_factory=list)

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def frame_dict(self, k: int) -> dict[int, ObjectState]:
        return dict(self.frames[k])


def frame_generators(seed: int, n_frames: int) -> list[dict[str, np.random.Generator]]:
    """One generator per (frame, purpose), all spawned from a single seed."""
    root = np.random.SeedSequence(int(seed))
    out = []
    for frame_seq in root.spawn(n_frames):
        out.append({name: np.random.default_rng(s) for name, s in zip(_PURPOSES, frame_seq.spawn(len(_PURPOSES)))})
    return out


def _sample_births(rng: np.random.Generator, birth) -> np.ndarray:
    if len(birth) == 0:
        return np.zeros((0, birth.dim))
    w = np.exp(birth.log_weights)
    n = rng.poisson(w.sum())
    if n == 0:
        return np.zeros((0, birth.dim))
    comp = rng.choice(len(w), size=n, p=w / w.sum())
    return np.array([rng.multivariate_normal(birth.means[c], birth.covs[c], method="cholesky") for c in comp])


def _noise(rng: np.random.Generator, cov: np.ndarray, n: int) -> np.ndarray:
    if n == 0:
        return np.zeros((0, cov.shape[0]))
    return rng.multivariate_normal(np.zeros(cov.shape[0]), cov, size=n, method="eigh")


def sample_clutter(rng: np.random.Generator, params: ModelParams) -> np.ndarray:
    """Clutter measurements: Poisson count, uniform over the clutter region."""
    n = rng.poisson(params.lambda_clutter)
    lo, hi = np.array(params.clutter_region.bounds).T
    return lo + (hi - lo) * rng.random((n, lo.size))


def simulate(cfg: ScenarioConfig) -> tuple[GroundTruth, list[list[Detection]]]:
    params, cam = cfg.params, cfg.camera
    gens = frame_generators(cfg.rng_seed, cfg.n_frames)
    alive: dict[int, np.ndarray] = {}
    next_id = 0
    gt = GroundTruth(frames=[])
    detections: list[list[Detection]] = []

    def _spawn(x: np.ndarray, k: int):
        nonlocal next_id
        if cfg.max_objects is not None and len(alive) >= cfg.max_objects:
            next_id += 1
            return
        alive[next_id] = x
        gt.birth_frame[next_id] = k
        gt.death_frame[next_id] = None
        next_id += 1

    def _kill(oid: int, k: int):
        del alive[oid]
        if gt.birth_frame[oid] == k:
            # never visible in any frame
            del gt.birth_frame[oid], gt.death_frame[oid]
        else:
            gt.death_frame[oid] = k

    for k, g in enumerate(gens):
        if k == 0:
            for s in cfg.initial_objects:
                _spawn(s.to_array(), 0)
        else:
            ids = sorted(alive)
            survive = g["survival"].random(len(ids)) < params.p_S
            noise = _noise(g["motion"], params.Q, len(ids))
            motion = params.motion_fn()
            for oid, ok, q in zip(ids, survive, noise):
                if not ok:
                    _kill(oid, k)
                    continue
                alive[oid] = motion(alive[oid][None])[0] + q
        for x in _sample_births(g["birth"], params.birth_intensity):
            _spawn(x, k)
        for oid in sorted(alive):
            x = alive[oid]
            if (x[2] < cfg.min_depth or np.linalg.norm(x[:3]) > cfg.max_distance
                    or min(x[6], x[7]) < cfg.min_extent or min(x[6], x[7]) <= 0):
                _kill(oid, k)

        ids = sorted(alive)
        gt.frames.append([(oid, ObjectState.from_array(alive[oid])) for oid in ids])

        dets: list[Detection] = []
        sources: list[int] = []
        rng = g["detection"]
        detected = rng.random(len(ids)) < params.p_D
        noise = _noise(rng, params.R, len(ids))
        for oid, hit, r in zip(ids, detected, noise):
            if not hit:
                continue
            z = project_array(alive[oid], cam, min_depth=0.0) + r
            if z[2] <= 0 or z[3] <= 0 or z[4] <= 0:
                continue  # noise produced an invalid detection; counts as a miss
            dets.append(MeasurementVector.from_array(z).to_detection())
            sources.append(oid)
        for z in sample_clutter(g["clutter"], params):
            try:
                dets.append(MeasurementVector.from_array(z).to_detection())
            except ModelError:
                continue
            sources.append(-1)
        detections.append(dets)
        gt.detection_sources.append(sources)
    return gt, detections


def sample_initial_objects(n: int, cfg: ScenarioConfig, rng: np.random.Generator) -> list[ObjectState]:
    """``n`` states drawn from the normalized birth intensity, restricted to the valid region."""
    birth = cfg.params.birth_intensity
    if n and len(birth) == 0:
        raise ModelError("cannot sample initial objects from an empty birth intensity")
    w = np.exp(birth.log_weights - birth.log_weights.max())
    out: list[ObjectState] = []
    while len(out) < n:
        c = rng.choice(len(w), p=w / w.sum())
        x = rng.multivariate_normal(birth.means[c], birth.covs[c], method="cholesky")
        if x[2] >= cfg.min_depth and np.linalg.norm(x[:3]) <= cfg.max_distance and min(x[6], x[7]) >= cfg.min_extent:
            out.append(ObjectState.from_array(x))
    return out
