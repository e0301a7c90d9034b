"""Scenario builders shared by the unit and acceptance tests."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

import oracles
from monopmbm.gaussian import GaussianDensity, GaussianMixtureIntensity
from monopmbm.models import MeasurementRegion, ModelParams, cv_matrix
from monopmbm.pmbm import BernoulliComponent, GlobalHypothesis, PmbmDensity, predict, update

UNIT_REGION = MeasurementRegion(u=(0, 1), v=(0, 1), d=(0, 1), w=(0, 1), h=(0, 1))


def random_cov(rng, n, scale=1.0, floor=0.1):
    A = rng.normal(size=(n, n))
    return scale * (A @ A.T / n + floor * np.eye(n))


def linear_params(H, R, p_D, p_S, kappa, birth, Q, dt=0.1) -> ModelParams:
    """Model with a linear measurement stub ``z = H x`` and clutter intensity ``kappa``."""
    return ModelParams(p_D=p_D, p_S=p_S, lambda_clutter=kappa * UNIT_REGION.volume, clutter_region=UNIT_REGION,
                       Q=Q, R=R, birth_intensity=birth, dt=dt, measure=lambda X: X @ H.T)


@dataclass
class MicroScenario:
    params: ModelParams
    H: np.ndarray
    F: np.ndarray
    prior: PmbmDensity
    birth: list          # (weight, mean, cov)
    bernoullis: list     # (r, mean, cov) before prediction
    Z: np.ndarray


def micro_scenario(rng) -> MicroScenario:
    """At most 2 objects, 3 measurements and 2 birth components."""
    n, m = 8, 5
    H = rng.normal(size=(m, n))
    R = np.diag(rng.uniform(0.3, 2.0, m))
    Q = random_cov(rng, n, 0.1)
    dt = 0.1
    birth = [(rng.uniform(0.1, 1.0), rng.normal(size=n), random_cov(rng, n)) for _ in range(rng.integers(1, 3))]
    bern = [(rng.uniform(0.05, 1.0), rng.normal(size=n), random_cov(rng, n)) for _ in range(rng.integers(0, 3))]
    kappa = 10 ** rng.uniform(-5, -1)
    params = linear_params(H, R, rng.uniform(0.3, 0.99), rng.uniform(0.5, 1.0), kappa,
                           GaussianMixtureIntensity([(math.log(w), GaussianDensity(mu, P)) for w, mu, P in birth], n),
                           Q, dt)
    sources = [mu for _, mu, _ in bern + birth]
    Z = np.array([H @ sources[rng.integers(len(sources))] + rng.normal(size=m) for _ in range(rng.integers(0, 4))])
    Z = Z.reshape(-1, m)
    prior = PmbmDensity(GaussianMixtureIntensity.empty(n),
                        [GlobalHypothesis(0.0, [BernoulliComponent(r, GaussianDensity(mu, P), i)
                                                for i, (r, mu, P) in enumerate(bern)])], len(bern))
    return MicroScenario(params, H, cv_matrix(dt), prior, birth, bern, Z)


def exact_update_mismatch(sc: MicroScenario) -> float:
    """Largest relative deviation between the filter and the partition enumerator.

    Runs one predict and one untruncated, ungated update. Returns ``inf``
    when the two disagree on which associations have nonzero weight.
    """
    p = sc.params
    pred = predict(sc.prior, p)
    post = update(pred, sc.Z, p, k_max=None, gate_prob=1.0)

    bern = [(p.p_S * r, *oracles.kalman_predict(mu, P, sc.F, p.Q)) for r, mu, P in sc.bernoullis]
    hyps, ppp = oracles.pmbm_update(bern, sc.birth, sc.Z, sc.H, p.R, p.p_D, p.clutter_intensity)

    got = {h.association: h for h in post.hypotheses}
    if set(got) != set(hyps):
        return math.inf
    worst = 0.0

    def rel(a, b):
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1.0))) if a.size else 0.0

    for a, (w, blist) in hyps.items():
        h = got[a]
        worst = max(worst, abs(math.exp(h.log_weight) - w) / w)
        if len(h.bernoullis) != len(blist):
            return math.inf
        for b, (r, mu, P) in zip(h.bernoullis, blist):
            worst = max(worst, rel(b.r, r), rel(b.density.mean, mu), rel(b.density.cov, P))
    for (w, mu, P), lw, m_, C in zip(ppp, post.undetected.log_weights, post.undetected.means, post.undetected.covs):
        if w > 0:
            worst = max(worst, rel(math.exp(lw), w), rel(m_, mu), rel(C, P))
    return worst


def kalman_track(rng, n_frames=100):
    """Single-object linear run; returns (params, measurements, reference means, reference covs)."""
    n, m = 8, 5
    H = np.hstack([np.eye(m), rng.normal(scale=0.1, size=(m, n - m))])
    R = np.diag(rng.uniform(0.5, 1.5, m))
    Q = random_cov(rng, n, 0.01)
    dt = 0.1
    F = cv_matrix(dt)
    b_mean, b_cov = rng.normal(size=n), random_cov(rng, n, 4.0)
    birth = GaussianMixtureIntensity([(math.log(0.1), GaussianDensity(b_mean, b_cov))], n)
    params = linear_params(H, R, 1.0, 1.0, 0.0, birth, Q, dt)

    x = rng.multivariate_normal(b_mean, b_cov)
    Z, means, covs = [], [], []
    mu, P = b_mean, b_cov
    for k in range(n_frames):
        if k:
            x = F @ x + rng.multivariate_normal(np.zeros(n), Q)
            mu, P = oracles.kalman_predict(mu, P, F, Q)
        z = H @ x + rng.multivariate_normal(np.zeros(m), R)
        mu, P, _ = oracles.kalman_update(mu, P, z, H, R)
        Z.append(z[None])
        means.append(mu)
        covs.append(P)
    return params, Z, means, covs
