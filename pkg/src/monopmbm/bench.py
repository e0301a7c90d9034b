"""Closed-loop runs: simulate, track, evaluate, and time the tracker."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .evaluation import MatchCriterion, MotMetrics, clear_mot, frames_from_states
from .models import ModelParams, detections_to_array
from .pmbm import Estimate, FilterConfig, PmbmFilter
from .sim import GroundTruth, ScenarioConfig, sample_initial_objects, simulate


@dataclass
class TrackingRun:
    estimates: list[list[Estimate]]
    latencies: np.ndarray  # seconds per frame

    @property
    def mean_ms(self) -> float:
        return 1e3 * float(self.latencies.mean()) if self.latencies.size else 0.0

    @property
    def max_ms(self) -> float:
        return 1e3 * float(self.latencies.max()) if self.latencies.size else 0.0


def run_tracker(params: ModelParams, config: FilterConfig, detections: Sequence[Sequence]) -> TrackingRun:
    """Filter every frame in order, timing predict through extract."""
    filt = PmbmFilter(params, config)
    ests, lat = [], []
    for dets in detections:
        Z = detections_to_array(dets)
        t0 = time.perf_counter()
        ests.append(filt.step(Z))
        lat.append(time.perf_counter() - t0)
    return TrackingRun(ests, np.array(lat))


def make_scenario(seed: int, n_frames: int = 200, p_D: float = 0.95, lambda_clutter: float = 2.0,
                  n_objects: int = 5, max_objects: Optional[int] = 10, birth_rate: float = 0.05,
                  params: Optional[ModelParams] = None) -> ScenarioConfig:
    """Scenario with ``n_objects`` initial objects drawn from the birth prior."""
    from .models import default_birth_intensity
    base = params or ModelParams()
    birth = default_birth_intensity(base.camera, total_rate=birth_rate)
    p = replace(base, p_D=p_D, lambda_clutter=lambda_clutter, birth_intensity=birth)
    cfg = ScenarioConfig(params=p, n_frames=n_frames, rng_seed=seed, max_objects=max_objects)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x1D]))
    cfg.initial_objects = sample_initial_objects(n_objects, cfg, rng)
    return cfg


@dataclass
class CaseResult:
    seed: int
    p_D: float
    lambda_clutter: float
    metrics: dict[str, MotMetrics]
    mean_ms: float
    max_ms: float
    mean_objects: float
    mean_detections: float
    run: Optional[TrackingRun] = field(default=None, repr=False)
    ground_truth: Optional[GroundTruth] = field(default=None, repr=False)


def run_case(scenario: ScenarioConfig, config: FilterConfig = FilterConfig(),
             filter_params: Optional[ModelParams] = None, keep: bool = False) -> CaseResult:
    gt, dets = simulate(scenario)
    params = filter_params or scenario.params
    run = run_tracker(params, config, dets)
    metrics = {}
    for crit in (MatchCriterion.euclidean3d(), MatchCriterion.iou2d()):
        metrics[crit.label] = clear_mot(frames_from_states(gt.frames, crit, scenario.camera),
                                        frames_from_states(run.estimates, crit, scenario.camera), crit)
    return CaseResult(scenario.rng_seed, scenario.params.p_D, scenario.params.lambda_clutter, metrics,
                      run.mean_ms, run.max_ms, float(np.mean([len(f) for f in gt.frames])),
                      float(np.mean([len(d) for d in dets])), run if keep else None, gt if keep else None)


def sweep(lambdas: Iterable[float], pds: Iterable[float], seeds: Iterable[int], n_frames: int = 200,
          n_objects: int = 5, max_objects: Optional[int] = 10, config: FilterConfig = FilterConfig(),
          birth_rate: float = 0.05) -> list[CaseResult]:
    out = []
    for lam in lambdas:
        for pd in pds:
            for seed in seeds:
                sc = make_scenario(seed, n_frames, pd, lam, n_objects, max_objects, birth_rate)
                out.append(run_case(sc, config))
    return out


BENCH_FIELDS = ("seed", "p_D", "lambda", "mota_3d", "motp_3d_cm", "ids_3d", "mota_2d", "motp_2d",
                "mean_objects", "mean_detections", "mean_ms", "max_ms")


def result_row(r: CaseResult) -> dict:
    m3, m2 = r.metrics["3D"], r.metrics["2D"]
    return {"seed": r.seed, "p_D": r.p_D, "lambda": r.lambda_clutter, "mota_3d": m3.mota, "motp_3d_cm": m3.motp,
            "ids_3d": m3.ids, "mota_2d": m2.mota, "motp_2d": m2.motp, "mean_objects": r.mean_objects,
            "mean_detections": r.mean_detections, "mean_ms": r.mean_ms, "max_ms": r.max_ms}
