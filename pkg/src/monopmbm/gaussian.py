"""Gaussian densities, log-weighted Gaussian mixtures and the unscented transform.

Every routine has a batched core working on stacked means ``(k, n)`` and
covariances ``(k, n, n)``; the single-density functions are thin wrappers.
Mixture weights are always carried as natural logs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


class CovarianceError(np.linalg.LinAlgError):
    """A covariance could not be factorized even after jitter."""


class DegenerateUpdateError(CovarianceError):
    """The innovation covariance of an update is singular."""


@dataclass
class GaussianDensity:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        self.cov = np.asarray(self.cov, dtype=float).reshape(self.mean.size, self.mean.size)

    @property
    def dim(self) -> int:
        return self.mean.size

    def is_valid(self) -> bool:
        return covariance_is_valid(self.cov) and bool(np.all(np.isfinite(self.mean)))

    def validate(self) -> "GaussianDensity":
        if not self.is_valid():
            raise CovarianceError("covariance is not symmetric positive semi-definite")
        return self

    def logpdf(self, x) -> float:
        return float(gaussian_logpdf(np.asarray(x, dtype=float)[None], self.mean[None], self.cov[None])[0])

    def copy(self) -> "GaussianDensity":
        return GaussianDensity(self.mean.copy(), self.cov.copy())


def covariance_is_valid(C: np.ndarray) -> bool:
    """Symmetric to 1e-9 relative and no eigenvalue below -1e-9 * trace."""
    C = np.asarray(C, dtype=float)
    if not np.all(np.isfinite(C)):
        return False
    scale = np.abs(C).max() if C.size else 0.0
    if np.abs(C - C.T).max(initial=0.0) > 1e-9 * scale:
        return False
    tr = abs(np.trace(C))
    return bool(np.linalg.eigvalsh(0.5 * (C + C.T)).min(initial=0.0) >= -1e-9 * tr)


class GaussianMixtureIntensity:
    """Non-normalized Gaussian sum ``D(x) = sum_k exp(log_w_k) N(x; m_k, P_k)``."""

    def __init__(self, components: Iterable[tuple[float, GaussianDensity]] = (), dim: Optional[int] = None):
        comps = list(components)
        if comps:
            dim = comps[0][1].dim
            self.log_weights = np.array([float(lw) for lw, _ in comps])
            self.means = np.array([g.mean for _, g in comps])
            self.covs = np.array([g.cov for _, g in comps])
        else:
            if dim is None:
                raise ValueError("dim is required for an empty mixture")
            self.log_weights = np.zeros(0)
            self.means = np.zeros((0, dim))
            self.covs = np.zeros((0, dim, dim))
        if np.any(np.isnan(self.log_weights)) or np.any(self.log_weights == np.inf):
            raise ValueError("mixture log-weights must be finite or -inf")

    @classmethod
    def from_arrays(cls, log_weights, means, covs) -> "GaussianMixtureIntensity":
        out = cls.__new__(cls)
        out.log_weights = np.asarray(log_weights, dtype=float).reshape(-1)
        means = np.asarray(means, dtype=float)
        n = means.shape[-1] if means.ndim == 2 else int(round(means.size / max(out.log_weights.size, 1)))
        out.means = means.reshape(out.log_weights.size, n)
        out.covs = np.asarray(covs, dtype=float).reshape(out.log_weights.size, n, n)
        return out

    @classmethod
    def empty(cls, dim: int) -> "GaussianMixtureIntensity":
        return cls(dim=dim)

    def __len__(self) -> int:
        return self.log_weights.size

    def __repr__(self) -> str:
        return f"GaussianMixtureIntensity(n={len(self)}, mass={self.mass:.4g})"

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def components(self) -> list[tuple[float, GaussianDensity]]:
        return [(float(lw), GaussianDensity(m, P)) for lw, m, P in zip(self.log_weights, self.means, self.covs)]

    @property
    def log_mass(self) -> float:
        if len(self) == 0:
            return -np.inf
        return float(log_sum_exp(self.log_weights))

    @property
    def mass(self) -> float:
        """Expected number of points, ``<D, 1>``."""
        return math.exp(self.log_mass)

    def scaled(self, log_factor: float) -> "GaussianMixtureIntensity":
        if log_factor == -np.inf:
            return GaussianMixtureIntensity.empty(self.dim)
        return GaussianMixtureIntensity.from_arrays(self.log_weights + log_factor, self.means, self.covs)

    def concat(self, other: "GaussianMixtureIntensity") -> "GaussianMixtureIntensity":
        return GaussianMixtureIntensity.from_arrays(
            np.concatenate([self.log_weights, other.log_weights]),
            np.concatenate([self.means, other.means]),
            np.concatenate([self.covs, other.covs]))

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if len(self) == 0:
            return 0.0
        lp = gaussian_logpdf(np.broadcast_to(x, self.means.shape), self.means, self.covs)
        return float(np.exp(log_sum_exp(self.log_weights + lp)))


@dataclass(frozen=True)
class SigmaParams:
    alpha: float = 1.0
    beta: float = 2.0
    kappa: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")

    def scale(self, n: int) -> float:
        """``n + lambda`` with ``lambda = alpha^2 (n + kappa) - n``."""
        c = self.alpha ** 2 * (n + self.kappa)
        if not c > 0:
            raise ValueError(f"sigma-point scale n + lambda must be positive, got {c}")
        return c

    def weights(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        c = self.scale(n)
        lam = c - n
        wm = np.full(2 * n + 1, 0.5 / c)
        wc = wm.copy()
        wm[0] = lam / c
        wc[0] = lam / c + 1.0 - self.alpha ** 2 + self.beta
        return wm, wc


# --- linear algebra helpers -------------------------------------------------

def log_sum_exp(a, axis=None):
    """``log(sum(exp(a)))`` that returns -inf for empty or all -inf input."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.full(np.delete(a.shape, axis) if axis is not None else (), -np.inf)[()]
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis) if axis is not None else out.reshape(())[()]


def symmetrize(C: np.ndarray) -> np.ndarray:
    return 0.5 * (C + np.swapaxes(C, -1, -2))


def safe_cholesky(C: np.ndarray, retries: int = 3) -> np.ndarray:
    """Lower Cholesky factors of a stack of covariances.

    Items that fail get diagonal jitter of ``1e-12 * trace``, grown by 10x up
    to ``retries`` times; a factor that still fails raises CovarianceError.
    """
    C = np.asarray(C, dtype=float)
    try:
        return np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        pass
    batch = C.reshape((-1,) + C.shape[-2:])
    out = np.empty_like(batch)
    eye = np.eye(C.shape[-1])
    for k, M in enumerate(batch):
        try:
            out[k] = np.linalg.cholesky(M)
            continue
        except np.linalg.LinAlgError:
            pass
        jitter = 1e-12 * max(abs(np.trace(M)), 1e-300)
        for _ in range(retries + 1):
            try:
                out[k] = np.linalg.cholesky(M + jitter * eye)
                break
            except np.linalg.LinAlgError:
                jitter *= 10.0
        else:
            raise CovarianceError("covariance square root failed after jitter escalation")
    return out.reshape(C.shape)


def gaussian_logpdf(x: np.ndarray, means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """``log N(x_k; m_k, P_k)`` for stacked rows; all arguments broadcast on the leading axes."""
    L = safe_cholesky(covs)
    diff = np.asarray(x, dtype=float) - means
    L, diff = np.broadcast_arrays(L, diff[..., None])
    sol = np.linalg.solve(L, diff)[..., 0]
    n = means.shape[-1]
    logdet = 2.0 * np.log(np.diagonal(L, axis1=-2, axis2=-1)).sum(-1)
    return -0.5 * (n * LOG_2PI + logdet + (sol ** 2).sum(-1))


def moment_match(log_weights: np.ndarray, means: np.ndarray, covs: np.ndarray):
    """Collapse weighted Gaussians into one; returns (log total weight, mean, cov)."""
    log_weights = np.asarray(log_weights, dtype=float)
    total = log_sum_exp(log_weights)
    w = np.exp(log_weights - total)
    mean = w @ means
    diff = means - mean
    cov = np.einsum("k,kij->ij", w, covs) + np.einsum("k,ki,kj->ij", w, diff, diff)
    return float(total), mean, symmetrize(cov)


# --- unscented transform ----------------------------------------------------

def sigma_points(means: np.ndarray, covs: np.ndarray, params: SigmaParams) -> np.ndarray:
    """Stacked ``2n+1`` sigma points, shape ``(k, 2n+1, n)``."""
    n = means.shape[-1]
    L = safe_cholesky(covs) * math.sqrt(params.scale(n))
    cols = np.swapaxes(L, -1, -2)  # rows are the columns of L
    return np.concatenate([means[:, None, :], means[:, None, :] + cols, means[:, None, :] - cols], axis=1)


def unscented_batch(means: np.ndarray, covs: np.ndarray, fn: Callable[[np.ndarray], np.ndarray],
                    noise: Optional[np.ndarray], params: SigmaParams):
    """Unscented transform of k Gaussians through ``fn``.

    ``fn`` maps stacked points ``(N, n)`` to ``(N, m)``. Returns the output
    means ``(k, m)``, covariances ``(k, m, m)`` with additive ``noise``, and
    input-output cross-covariances ``(k, n, m)``.
    """
    means = np.asarray(means, dtype=float)
    covs = np.asarray(covs, dtype=float)
    k, n = means.shape
    wm, wc = params.weights(n)
    X = sigma_points(means, covs, params)
    Y = np.asarray(fn(X.reshape(k * (2 * n + 1), n)), dtype=float).reshape(k, 2 * n + 1, -1)
    mu = np.einsum("s,ksm->km", wm, Y)
    dY = Y - mu[:, None, :]
    dX = X - means[:, None, :]
    S = np.einsum("s,ksi,ksj->kij", wc, dY, dY)
    C = np.einsum("s,ksi,ksj->kij", wc, dX, dY)
    if noise is not None:
        S = S + noise
    return mu, symmetrize(S), C


def unscented_transform(g: GaussianDensity, fn: Callable[[np.ndarray], np.ndarray],
                        noise: Optional[np.ndarray] = None, params: SigmaParams = SigmaParams()):
    """Propagate ``g`` through ``fn``; returns (output density, cross-covariance)."""
    mu, S, C = unscented_batch(g.mean[None], g.cov[None], fn, noise, params)
    return GaussianDensity(mu[0], S[0]), C[0]


def ukf_predict(g: GaussianDensity, motion: Callable[[np.ndarray], np.ndarray], Q: np.ndarray,
                params: SigmaParams = SigmaParams()) -> GaussianDensity:
    out, _ = unscented_transform(g, motion, Q, params)
    return out


def predict_batch(means, covs, motion, Q, params: SigmaParams = SigmaParams()):
    mu, P, _ = unscented_batch(means, covs, motion, Q, params)
    return mu, P


class MeasurementPrediction:
    """Predicted measurement moments of k Gaussians plus what an update needs.

    Holds ``z_hat (k, m)``, ``S (k, m, m)``, the Kalman gains ``K (k, n, m)``
    and the posterior covariances ``P - K S K^T`` which do not depend on the
    measurement value.
    """

    def __init__(self, means, covs, meas, R, params: SigmaParams = SigmaParams()):
        self.means = np.asarray(means, dtype=float)
        self.covs = np.asarray(covs, dtype=float)
        self.z_hat, self.S, C = unscented_batch(self.means, self.covs, meas, R, params)
        try:
            self.L = np.linalg.cholesky(self.S)
        except np.linalg.LinAlgError:
            try:
                self.L = safe_cholesky(self.S)
            except CovarianceError as exc:
                raise DegenerateUpdateError("innovation covariance is singular") from exc
        m = self.S.shape[-1]
        self.logdet = 2.0 * np.log(np.diagonal(self.L, axis1=-2, axis2=-1)).sum(-1)
        # K = C S^-1 via the Cholesky factor of S
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            Linv = np.linalg.solve(self.L, np.broadcast_to(np.eye(m), self.S.shape))
            Sinv = np.swapaxes(Linv, -1, -2) @ Linv
            self.K = C @ Sinv
            self.post_covs = symmetrize(self.covs - self.K @ self.S @ np.swapaxes(self.K, -1, -2))
        if not (np.all(np.isfinite(self.logdet)) and np.all(np.isfinite(self.post_covs))):
            raise DegenerateUpdateError("innovation covariance is numerically singular")
        self._Linv = Linv

    def __len__(self) -> int:
        return self.z_hat.shape[0]

    def mahalanobis2(self, Z: np.ndarray) -> np.ndarray:
        """Squared innovation distances, shape ``(k, M)``."""
        nu = Z[None, :, :] - self.z_hat[:, None, :]
        w = np.einsum("kij,kmj->kmi", self._Linv, nu)
        return (w ** 2).sum(-1)

    def log_likelihood(self, Z: np.ndarray, d2: Optional[np.ndarray] = None) -> np.ndarray:
        """``log N(z_m; z_hat_k, S_k)``, shape ``(k, M)``."""
        if d2 is None:
            d2 = self.mahalanobis2(Z)
        m = self.S.shape[-1]
        return -0.5 * (m * LOG_2PI + self.logdet[:, None] + d2)

    def posterior_means(self, Z: np.ndarray) -> np.ndarray:
        """Updated means for every (component, measurement) pair, ``(k, M, n)``."""
        nu = Z[None, :, :] - self.z_hat[:, None, :]
        return self.means[:, None, :] + np.einsum("knm,kjm->kjn", self.K, nu)


def ukf_update(g: GaussianDensity, z, meas: Callable[[np.ndarray], np.ndarray], R: np.ndarray,
               params: SigmaParams = SigmaParams()) -> tuple[GaussianDensity, float]:
    """UKF update of ``g`` with measurement ``z``; returns (posterior, log N(z; z_hat, S))."""
    z = np.asarray(z.to_array() if hasattr(z, "to_array") else z, dtype=float).reshape(1, -1)
    pred = MeasurementPrediction(g.mean[None], g.cov[None], meas, R, params)
    mean = pred.posterior_means(z)[0, 0]
    return GaussianDensity(mean, pred.post_covs[0]), float(pred.log_likelihood(z)[0, 0])


# --- mixture reduction ------------------------------------------------------

def gm_reduce(m: GaussianMixtureIntensity, prune_log_threshold: float = math.log(1e-5),
              merge_mahalanobis_threshold: float = 4.0, max_components: int = 100) -> GaussianMixtureIntensity:
    """Prune, merge and cap a Gaussian mixture.

    Components with log-weight below ``prune_log_threshold`` are dropped.
    Then, heaviest first, every component within squared Mahalanobis
    distance ``merge_mahalanobis_threshold`` of the current leader (under the
    leader's covariance) is moment-matched into it. Finally at most
    ``max_components`` of the heaviest survive.
    """
    if max_components < 1:
        raise ValueError("max_components must be at least 1")
    keep = m.log_weights >= prune_log_threshold
    lw, mu, P = m.log_weights[keep], m.means[keep], m.covs[keep]
    if lw.size == 0:
        return GaussianMixtureIntensity.empty(m.dim)

    order = np.argsort(-lw, kind="stable")
    lw, mu, P = lw[order], mu[order], P[order]
    remaining = np.ones(lw.size, dtype=bool)
    out_lw, out_mu, out_P = [], [], []
    Ls = None
    for lead in range(lw.size):
        if not remaining[lead]:
            continue
        idx = np.flatnonzero(remaining)
        diff = mu[idx] - mu[lead]
        if Ls is None:
            Ls = safe_cholesky(P)
        sol = np.linalg.solve(Ls[lead], diff.T)
        close = idx[(sol ** 2).sum(0) <= merge_mahalanobis_threshold]
        if close.size == 1:
            out_lw.append(lw[lead]); out_mu.append(mu[lead]); out_P.append(P[lead])
        else:
            tw, tm, tP = moment_match(lw[close], mu[close], P[close])
            out_lw.append(tw); out_mu.append(tm); out_P.append(tP)
        remaining[close] = False

    out_lw = np.array(out_lw)
    order = np.argsort(-out_lw, kind="stable")[:max_components]
    return GaussianMixtureIntensity.from_arrays(out_lw[order], np.array(out_mu)[order], np.array(out_P)[order])
