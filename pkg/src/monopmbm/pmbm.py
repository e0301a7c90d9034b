"""Poisson multi-Bernoulli mixture filter.

The density is a PPP for objects never detected (a log-weighted Gaussian
mixture) times a mixture of multi-Bernoulli components, one per global
association hypothesis. Bernoulli objects are immutable and shared between
hypotheses, so predictions and measurement updates are computed once per
distinct Bernoulli and reused by every hypothesis that holds it.
"""
from __future__ import annotations

import enum
import logging
import math
import sys
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.stats import chi2

from .assignment import murty_kbest
from .gaussian import (GaussianDensity, GaussianMixtureIntensity, MeasurementPrediction, SigmaParams,
                       covariance_is_valid, gm_reduce, log_sum_exp, moment_match, predict_batch)
from .models import (Detection, MeasurementVector, ModelParams, ObjectState, detections_to_array)

log = logging.getLogger(__name__)

# Stand-in for log(0) when ordering associations that force a detection.
_LOG_FLOOR = -1e4


@dataclass(eq=False)
class BernoulliComponent:
    r: float
    density: Optional[GaussianDensity]
    track_id: int

    def __post_init__(self):
        if not 0.0 <= self.r <= 1.0:
            raise ValueError(f"existence probability must lie in [0, 1], got {self.r}")


@dataclass
class GlobalHypothesis:
    """One multi-Bernoulli component of the mixture.

    ``association`` records, for each measurement of the update that created
    this hypothesis, the index of the prior Bernoulli it was assigned to, or
    -1 when it went to the background (clutter or new object).
    """

    log_weight: float
    bernoullis: list[BernoulliComponent] = field(default_factory=list)
    association: tuple[int, ...] = ()


@dataclass
class PmbmDensity:
    undetected: GaussianMixtureIntensity
    hypotheses: list[GlobalHypothesis]
    next_track_id: int = 0

    @classmethod
    def empty(cls, dim: int = 8) -> "PmbmDensity":
        return cls(GaussianMixtureIntensity.empty(dim), [GlobalHypothesis(0.0, [])])

    @property
    def log_weights(self) -> np.ndarray:
        return np.array([h.log_weight for h in self.hypotheses])

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def check(self, tol: float = 1e-9) -> None:
        """Raise AssertionError when an invariant of the density is broken."""
        assert self.hypotheses, "at least one hypothesis is required"
        lw = self.log_weights
        assert np.all(np.isfinite(lw)), "hypothesis log-weights must be finite"
        assert abs(math.expm1(log_sum_exp(lw))) <= tol, "hypothesis weights must sum to one"
        assert np.all(np.isfinite(self.undetected.means)) and np.all(np.isfinite(self.undetected.covs))
        for P in self.undetected.covs:
            assert covariance_is_valid(P), "PPP covariance not PSD"
        for h in self.hypotheses:
            ids = [b.track_id for b in h.bernoullis]
            assert len(ids) == len(set(ids)), "duplicate Bernoulli index in hypothesis"
            for b in h.bernoullis:
                assert 0.0 <= b.r <= 1.0
                assert np.all(np.isfinite(b.density.mean))
                assert covariance_is_valid(b.density.cov), "Bernoulli covariance not PSD"


class CellKind(enum.Enum):
    NEW = "new-or-clutter"
    MISSED = "missed"
    DETECTED = "detected"


@dataclass(frozen=True)
class AssociationCell:
    kind: CellKind
    object_index: Optional[int] = None
    measurement_index: Optional[int] = None

    def __post_init__(self):
        has_obj = self.object_index is not None
        has_meas = self.measurement_index is not None
        expected = {CellKind.NEW: (False, True), CellKind.MISSED: (True, False), CellKind.DETECTED: (True, True)}
        if (has_obj, has_meas) != expected[self.kind]:
            raise ValueError(f"{self.kind.value} cell has object={self.object_index}, "
                             f"measurement={self.measurement_index}")


def association_cells(association: Sequence[int], n_objects: int) -> list[AssociationCell]:
    """Partition of measurement and object indices described by an association."""
    cells = []
    detected = set()
    for m, i in enumerate(association):
        if i < 0:
            cells.append(AssociationCell(CellKind.NEW, measurement_index=m))
        else:
            detected.add(i)
            cells.append(AssociationCell(CellKind.DETECTED, object_index=i, measurement_index=m))
    cells.extend(AssociationCell(CellKind.MISSED, object_index=i) for i in range(n_objects) if i not in detected)
    return cells


@dataclass
class FilterConfig:
    """Tuning of the approximations layered on top of the exact recursion.

    ``k_max=None`` enumerates every association; ``gate_prob=1`` disables
    gating; ``w_min=0``, ``r_min=0``, large ``n_max`` disable pruning.
    """

    k_max: Optional[int] = 100
    gate_prob: float = 0.999
    tau: float = 0.5
    w_min: float = 1e-4
    n_max: int = 100
    r_min: float = 1e-3
    ppp_prune_log_weight: float = math.log(1e-5)
    ppp_merge_threshold: float = 4.0
    ppp_max_components: int = 100
    sigma: SigmaParams = field(default_factory=SigmaParams)

    def gate_threshold(self, dim: int) -> float:
        return gate_threshold(self.gate_prob, dim)


def gate_threshold(gate_prob: float, dim: int) -> float:
    if gate_prob >= 1.0:
        return math.inf
    return float(chi2.ppf(gate_prob, dim))


def _measurement_array(Z, dim: Optional[int] = None) -> np.ndarray:
    if isinstance(Z, np.ndarray):
        return Z.reshape(len(Z), -1).astype(float) if Z.size or dim is None else Z.reshape(0, dim)
    Z = list(Z)
    if not Z:
        return np.zeros((0, dim or 5))
    if isinstance(Z[0], Detection):
        return detections_to_array(Z)
    if isinstance(Z[0], MeasurementVector):
        return np.array([z.to_array() for z in Z])
    return np.asarray(Z, dtype=float).reshape(len(Z), -1)


def _safe_log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


# --- prediction -------------------------------------------------------------

def predict(p: PmbmDensity, params: ModelParams, sigma: SigmaParams = SigmaParams()) -> PmbmDensity:
    motion = params.motion_fn()
    log_ps = _safe_log(params.p_S)

    ppp = p.undetected
    if len(ppp) and log_ps > -math.inf:
        mu, P = predict_batch(ppp.means, ppp.covs, motion, params.Q, sigma)
        survived = GaussianMixtureIntensity.from_arrays(ppp.log_weights + log_ps, mu, P)
    else:
        survived = GaussianMixtureIntensity.empty(ppp.dim)
    undetected = survived.concat(params.birth_intensity)

    unique: dict[int, BernoulliComponent] = {}
    for h in p.hypotheses:
        for b in h.bernoullis:
            unique.setdefault(id(b), b)
    predicted: dict[int, BernoulliComponent] = {}
    if unique:
        blist = list(unique.values())
        mu, P = predict_batch(np.array([b.density.mean for b in blist]),
                              np.array([b.density.cov for b in blist]), motion, params.Q, sigma)
        for b, m, C in zip(blist, mu, P):
            predicted[id(b)] = BernoulliComponent(b.r * params.p_S, GaussianDensity(m, C), b.track_id)

    hyps = [GlobalHypothesis(h.log_weight, [predicted[id(b)] for b in h.bernoullis], h.association)
            for h in p.hypotheses]
    return PmbmDensity(undetected, hyps, p.next_track_id)


# --- gating -----------------------------------------------------------------

@dataclass
class GateResult:
    objects: np.ndarray  # (n_bernoullis, M) bool
    ppp: np.ndarray      # (n_ppp_components, M) bool


def gate(h: GlobalHypothesis, ppp: GaussianMixtureIntensity, Z, params: ModelParams,
         gate_prob: float = 0.999, sigma: SigmaParams = SigmaParams()) -> GateResult:
    """Chi-square validation gates of every Bernoulli and PPP component."""
    Z = _measurement_array(Z, params.R.shape[0])
    gamma = gate_threshold(gate_prob, params.R.shape[0])
    meas = params.measurement_fn()
    M = len(Z)

    def _gate(means, covs):
        if len(means) == 0 or M == 0:
            return np.zeros((len(means), M), dtype=bool)
        pred = MeasurementPrediction(means, covs, meas, params.R, sigma)
        return pred.mahalanobis2(Z) <= gamma

    objects = _gate(np.array([b.density.mean for b in h.bernoullis]).reshape(len(h.bernoullis), -1),
                    np.array([b.density.cov for b in h.bernoullis]).reshape(len(h.bernoullis), ppp.dim, ppp.dim))
    return GateResult(objects, _gate(ppp.means, ppp.covs))


# --- single-cell updates ----------------------------------------------------

class _NewObjectCells:
    """Background likelihoods and new-object Bernoullis for a measurement set."""

    def __init__(self, ppp: GaussianMixtureIntensity, Z: np.ndarray, params: ModelParams, gamma: float,
                 sigma: SigmaParams, first_track_id: int):
        M = len(Z)
        kappa = params.clutter_intensity
        self.log_kappa = _safe_log(kappa)
        self.log_detected_mass = np.full(M, -math.inf)  # log p_D <D_u, phi_z>
        self.bernoullis: list[Optional[BernoulliComponent]] = [None] * M
        self.next_track_id = first_track_id
        log_pd = _safe_log(params.p_D)
        if M and len(ppp) and log_pd > -math.inf:
            pred = MeasurementPrediction(ppp.means, ppp.covs, params.measurement_fn(), params.R, sigma)
            d2 = pred.mahalanobis2(Z)
            lw = ppp.log_weights[:, None] + pred.log_likelihood(Z, d2)
            lw[d2 > gamma] = -math.inf
            with np.errstate(divide="ignore"):
                self.log_detected_mass = log_pd + log_sum_exp(lw, axis=0)
            self.log_bg = np.logaddexp(self.log_kappa, self.log_detected_mass)
            post_means = pred.posterior_means(Z)
            for m in range(M):
                if self.log_detected_mass[m] == -math.inf:
                    continue
                sel = np.flatnonzero(lw[:, m] > -math.inf)
                r = math.exp(self.log_detected_mass[m] - self.log_bg[m])
                _, mean, cov = moment_match(lw[sel, m], post_means[sel, m], pred.post_covs[sel])
                self.bernoullis[m] = BernoulliComponent(min(r, 1.0), GaussianDensity(mean, cov),
                                                        self.next_track_id)
                self.next_track_id += 1
        else:
            self.log_bg = np.full(M, self.log_kappa)


def update_cell_new(ppp: GaussianMixtureIntensity, z, params: ModelParams, track_id: int = 0,
                    gate_prob: float = 1.0, sigma: SigmaParams = SigmaParams()):
    """Cell with one measurement and no prior object: clutter or a first detection.

    Returns ``(log L, Bernoulli)``. When no PPP component explains ``z`` the
    Bernoulli has ``r = 0`` and carries the moment-matched PPP as density.
    """
    Z = _measurement_array([z] if not isinstance(z, np.ndarray) or z.ndim == 1 else z)
    cells = _NewObjectCells(ppp, Z, params, gate_threshold(gate_prob, Z.shape[1]), sigma, track_id)
    b = cells.bernoullis[0]
    if b is None:
        density = None
        if len(ppp):
            _, mean, cov = moment_match(ppp.log_weights, ppp.means, ppp.covs)
            density = GaussianDensity(mean, cov)
        b = BernoulliComponent(0.0, density, track_id)
    return float(cells.log_bg[0]), b


def _missed(r: float, p_D: float) -> tuple[float, float]:
    """(log(1 - r p_D), r(1 - p_D) / (1 - r p_D)); r' = 0 when the likelihood is zero."""
    lik = 1.0 - r * p_D
    if lik <= 0.0:
        return -math.inf, 0.0
    return math.log(lik), min(r * (1.0 - p_D) / lik, 1.0)


def update_cell_missed(b: BernoulliComponent, params: ModelParams):
    log_lik, r = _missed(b.r, params.p_D)
    return log_lik, BernoulliComponent(r, b.density, b.track_id)


def update_cell_detected(b: BernoulliComponent, z, params: ModelParams, sigma: SigmaParams = SigmaParams()):
    Z = _measurement_array([z] if not isinstance(z, np.ndarray) or z.ndim == 1 else z)
    pred = MeasurementPrediction(b.density.mean[None], b.density.cov[None], params.measurement_fn(), params.R, sigma)
    log_lik = _safe_log(b.r) + _safe_log(params.p_D) + float(pred.log_likelihood(Z)[0, 0])
    post = GaussianDensity(pred.posterior_means(Z)[0, 0], pred.post_covs[0])
    return log_lik, BernoulliComponent(1.0, post, b.track_id)


# --- full update ------------------------------------------------------------

class _DetectedObjectCells:
    """Missed and detected cell likelihoods for every distinct prior Bernoulli."""

    def __init__(self, blist: list[BernoulliComponent], Z: np.ndarray, params: ModelParams, gamma: float,
                 sigma: SigmaParams):
        n, M = len(blist), len(Z)
        self.blist = blist
        r = np.array([b.r for b in blist])
        p_D = params.p_D
        with np.errstate(divide="ignore"):
            self.log_miss = np.log(np.maximum(1.0 - r * p_D, 0.0))
        self.log_det = np.full((n, M), -math.inf)
        self.pred = None
        if n and M and p_D > 0:
            self.pred = MeasurementPrediction(np.array([b.density.mean for b in blist]),
                                              np.array([b.density.cov for b in blist]),
                                              params.measurement_fn(), params.R, sigma)
            d2 = self.pred.mahalanobis2(Z)
            with np.errstate(divide="ignore"):
                ld = np.log(r)[:, None] + math.log(p_D) + self.pred.log_likelihood(Z, d2)
            ld[d2 > gamma] = -math.inf
            self.log_det = ld
            self._post_means = self.pred.posterior_means(Z)
        self._p_D = p_D
        self._missed: dict[int, BernoulliComponent] = {}
        self._detected: dict[tuple[int, int], BernoulliComponent] = {}

    def missed(self, u: int) -> BernoulliComponent:
        b = self._missed.get(u)
        if b is None:
            src = self.blist[u]
            b = BernoulliComponent(_missed(src.r, self._p_D)[1], src.density, src.track_id)
            self._missed[u] = b
        return b

    def detected(self, u: int, m: int) -> BernoulliComponent:
        b = self._detected.get((u, m))
        if b is None:
            b = BernoulliComponent(1.0, GaussianDensity(self._post_means[u, m], self.pred.post_covs[u]),
                                   self.blist[u].track_id)
            self._detected[(u, m)] = b
        return b


def _children(h: GlobalHypothesis, idx: np.ndarray, cells: _DetectedObjectCells, new: _NewObjectCells,
              k: int, floor: bool, min_log_weight: float = -math.inf) -> list[GlobalHypothesis]:
    log_det = cells.log_det[idx]
    log_miss = cells.log_miss[idx]
    log_bg = new.log_bg
    if floor:
        log_miss = np.maximum(log_miss, _LOG_FLOOR)
        log_bg = np.maximum(log_bg, _LOG_FLOOR)
    n, M = log_det.shape

    # Rows without any feasible object go to the background in every child,
    # objects without any feasible measurement are missed in every child.
    rows = np.flatnonzero(np.isfinite(log_det).any(axis=0)) if n else np.zeros(0, dtype=int)
    cols = np.flatnonzero(np.isfinite(log_det).any(axis=1)) if M else np.zeros(0, dtype=int)
    nr, nc = rows.size, cols.size
    cost = np.full((nr, nc + nr), np.inf)
    if nr:
        sub = log_det[np.ix_(cols, rows)].T
        cost[:, :nc] = -(sub - np.maximum(log_miss[cols], _LOG_FLOOR)[None, :])
        bg = log_bg[rows]
        cost[np.arange(nr), nc + np.arange(nr)] = np.where(np.isfinite(bg), -bg, np.inf)
    # Upper bound on a child's log weight is offset - cost, since the cost
    # uses floored miss terms; children below min_log_weight are not enumerated.
    max_cost = math.inf
    if min_log_weight > -math.inf:
        bg_fixed = np.delete(log_bg, rows)
        offset = h.log_weight + np.maximum(log_miss, _LOG_FLOOR).sum() + bg_fixed.sum()
        if not offset >= min_log_weight:
            return []
        max_cost = offset - min_log_weight
    try:
        assignments = murty_kbest(cost, k, max_cost)
    except ValueError:
        return []

    out = []
    for a in assignments:
        sol = np.asarray(a.row_to_col, dtype=int)
        hit = sol < nc
        m_det, i_det = rows[hit], cols[sol[hit]]
        assoc = np.full(M, -1)
        assoc[m_det] = i_det
        detected = np.zeros(n, dtype=bool)
        detected[i_det] = True
        lw = h.log_weight + log_det[i_det, m_det].sum() + log_bg[assoc < 0].sum() + log_miss[~detected].sum()
        if not lw > -math.inf:
            continue
        which = dict(zip(i_det.tolist(), m_det.tolist()))
        berns = [cells.detected(u, which[i]) if i in which else cells.missed(u) for i, u in enumerate(idx.tolist())]
        berns.extend(new.bernoullis[m] for m in np.flatnonzero(assoc < 0).tolist() if new.bernoullis[m] is not None)
        out.append(GlobalHypothesis(float(lw), berns, tuple(int(i) for i in assoc)))
    return out


def update(p: PmbmDensity, Z, params: ModelParams, k_max: Optional[int] = 100, gate_prob: float = 0.999,
           sigma: SigmaParams = SigmaParams(), w_min: float = 0.0) -> PmbmDensity:
    """Measurement update with k-best truncation of each hypothesis' associations.

    Hypothesis ``j`` spawns at most ``max(1, ceil(k_max * w_j))`` children
    (all of them when ``k_max`` is None), ranked by Murty's algorithm over
    the cost matrix of negative log cell likelihoods.

    With ``w_min > 0`` children whose weight is certainly below ``w_min``
    times the best child weight are never generated. This matches the
    relative pruning of :func:`reduce` and only saves work.
    """
    Z = _measurement_array(Z, params.R.shape[0])
    gamma = gate_threshold(gate_prob, params.R.shape[0])
    new = _NewObjectCells(p.undetected, Z, params, gamma, sigma, p.next_track_id)

    index: dict[int, int] = {}
    blist: list[BernoulliComponent] = []
    for h in p.hypotheses:
        for b in h.bernoullis:
            if id(b) not in index:
                index[id(b)] = len(blist)
                blist.append(b)
    cells = _DetectedObjectCells(blist, Z, params, gamma, sigma)

    weights = p.weights
    children: list[GlobalHypothesis] = []
    log_ratio = _safe_log(w_min)
    for floor in (False, True):
        # heaviest first so the running best child gives a tight bound early
        found: dict[int, list[GlobalHypothesis]] = {}
        best = -math.inf
        for j in np.argsort(-weights, kind="stable"):
            h = p.hypotheses[j]
            k = sys.maxsize if k_max is None else max(1, math.ceil(k_max * weights[j]))
            idx = np.array([index[id(b)] for b in h.bernoullis], dtype=int)
            found[j] = _children(h, idx, cells, new, k, floor, best + log_ratio)
            if found[j]:
                best = max(best, max(c.log_weight for c in found[j]))
        children = [c for j in sorted(found) for c in found[j]]
        if children:
            break
        log.warning("every association has zero likelihood; retrying with floored likelihoods")
    if not children:
        raise RuntimeError("measurement update produced no hypotheses")

    total = log_sum_exp([c.log_weight for c in children])
    for c in children:
        c.log_weight -= total
    undetected = p.undetected.scaled(_safe_log(1.0 - params.p_D))
    return PmbmDensity(undetected, children, new.next_track_id)


# --- reduction and extraction -----------------------------------------------

def _bernoulli_key(b: BernoulliComponent):
    return (b.track_id, round(b.r, 9), tuple(np.round(b.density.mean, 9)))


def reduce(p: PmbmDensity, config: FilterConfig = FilterConfig()) -> PmbmDensity:
    lw = p.log_weights
    keep = np.flatnonzero(lw - lw.max() >= _safe_log(config.w_min))
    keep = keep[np.argsort(-lw[keep], kind="stable")][:config.n_max]
    keep.sort()

    merged: dict[tuple, GlobalHypothesis] = {}
    for j in keep:
        h = p.hypotheses[j]
        berns = [b for b in h.bernoullis if b.r >= config.r_min]
        key = tuple(sorted(_bernoulli_key(b) for b in berns))
        if key in merged:
            prev = merged[key]
            prev.log_weight = float(np.logaddexp(prev.log_weight, h.log_weight))
        else:
            merged[key] = GlobalHypothesis(h.log_weight, berns, h.association)
    hyps = list(merged.values())
    total = log_sum_exp([h.log_weight for h in hyps])
    for h in hyps:
        h.log_weight -= total

    undetected = gm_reduce(p.undetected, config.ppp_prune_log_weight, config.ppp_merge_threshold,
                           config.ppp_max_components)
    return PmbmDensity(undetected, hyps, p.next_track_id)


class Estimate(NamedTuple):
    track_id: int
    state: ObjectState
    existence: float


def _to_state(mean: np.ndarray) -> ObjectState:
    mean = mean.copy()
    if mean.size >= 8:
        mean[6:8] = np.maximum(mean[6:8], 1e-3)
    return ObjectState.from_array(mean[:8])


def extract(p: PmbmDensity, tau: float = 0.5) -> list[Estimate]:
    """Means of the Bernoullis with ``r > tau`` in the most probable hypothesis.

    Ties in hypothesis weight go to the lower index.
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    best = p.hypotheses[int(np.argmax(p.log_weights))]
    out = [Estimate(b.track_id, _to_state(b.density.mean), b.r) for b in best.bernoullis if b.r > tau]
    return sorted(out, key=lambda e: e.track_id)


class PmbmFilter:
    """Stateful wrapper running predict, update, reduce and extract per frame."""

    def __init__(self, params: ModelParams, config: FilterConfig = FilterConfig()):
        self.params = params
        self.config = config
        self.density = PmbmDensity.empty(params.Q.shape[0])

    def step(self, Z) -> list[Estimate]:
        cfg = self.config
        d = predict(self.density, self.params, cfg.sigma)
        d = update(d, Z, self.params, cfg.k_max, cfg.gate_prob, cfg.sigma, cfg.w_min)
        self.density = reduce(d, cfg)
        return extract(self.density, cfg.tau)
