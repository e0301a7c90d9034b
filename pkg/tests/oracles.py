"""Independent reference computations used by the tests.

Everything here is written directly from the textbook formulas with plain
numpy, without touching the package's Gaussian or assignment code.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def gauss_pdf(z, mean, cov) -> float:
    z, mean, cov = np.atleast_1d(z), np.atleast_1d(mean), np.atleast_2d(cov)
    diff = z - mean
    k = z.size
    return float(np.exp(-0.5 * diff @ np.linalg.inv(cov) @ diff) / np.sqrt((2 * np.pi) ** k * np.linalg.det(cov)))


def kalman_predict(m, P, F, Q):
    return F @ m, F @ P @ F.T + Q


def kalman_update(m, P, z, H, R):
    """Posterior mean, covariance and predictive density value N(z; Hm, HPH' + R)."""
    S = H @ P @ H.T + R
    K = P @ H.T @ np.linalg.inv(S)
    mean = m + K @ (z - H @ m)
    cov = (np.eye(len(m)) - K @ H) @ P @ (np.eye(len(m)) - K @ H).T + K @ R @ K.T
    return mean, cov, gauss_pdf(z, H @ m, S)


def associations(n_meas: int, n_obj: int):
    """Every map from measurements to objects or -1 that is injective on objects."""
    for a in itertools.product(range(-1, n_obj), repeat=n_meas):
        used = [i for i in a if i >= 0]
        if len(used) == len(set(used)):
            yield a


def pmbm_update(bernoullis, ppp, Z, H, R, p_D, kappa):
    """Exact PMBM update of one prior hypothesis by enumerating every partition.

    ``bernoullis`` is a list of ``(r, mean, cov)``; ``ppp`` a list of
    ``(weight, mean, cov)``. Returns ``(hyps, ppp_out)`` with hyps a dict
    ``association -> (weight, [(r, mean, cov), ...])`` over nonzero-weight
    associations, normalized, and ppp_out the undetected components.
    """
    n, M = len(bernoullis), len(Z)
    # one new-object (or clutter) cell per measurement
    new_cells = []
    for z in Z:
        parts = [(w, *kalman_update(m, P, z, H, R)) for w, m, P in ppp]
        mass = p_D * sum(w * lik for w, _, _, lik in parts)
        if mass > 0:
            cw = np.array([w * lik for w, _, _, lik in parts])
            cw = cw / cw.sum()
            mean = sum(c * mu for c, (_, mu, _, _) in zip(cw, parts))
            cov = sum(c * (C + np.outer(mu - mean, mu - mean)) for c, (_, mu, C, _) in zip(cw, parts))
            new_cells.append((kappa + mass, (mass / (kappa + mass), mean, cov)))
        else:
            new_cells.append((kappa, None))

    hyps = {}
    for a in associations(M, n):
        weight = 1.0
        out = []
        for i, (r, m, P) in enumerate(bernoullis):
            if i in a:
                z = Z[a.index(i)]
                mean, cov, lik = kalman_update(m, P, z, H, R)
                weight *= r * p_D * lik
                out.append((1.0, mean, cov))
            else:
                weight *= 1 - r * p_D
                out.append((r * (1 - p_D) / (1 - r * p_D) if r * p_D < 1 else 0.0, m, P))
        for mi, i in enumerate(a):
            if i < 0:
                lik, b = new_cells[mi]
                weight *= lik
                if b is not None:
                    out.append(b)
        if weight > 0:
            hyps[a] = (weight, out)
    total = sum(w for w, _ in hyps.values())
    hyps = {a: (w / total, b) for a, (w, b) in hyps.items()}
    ppp_out = [((1 - p_D) * w, m, P) for w, m, P in ppp]
    return hyps, ppp_out


def brute_force_assignments(c):
    """All finite-cost row-to-column assignments sorted by (cost, assignment)."""
    c = np.asarray(c, dtype=float)
    n_rows, n_cols = c.shape
    out = []
    for cols in itertools.permutations(range(n_cols), n_rows):
        total = float(sum(c[r, j] for r, j in enumerate(cols)))
        if math.isfinite(total):
            out.append((total, cols))
    return sorted(out)
