"""Closed-form proximity operators and projections.

Every prox takes the point first and the scaling ``gamma`` second, so they
share the signature ``prox(X, gamma)`` expected by :mod:`rhuidr.ppds`.
Projections ignore ``gamma``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

__all__ = [
    "prox_nonneg",
    "prox_l1",
    "prox_l12_rows",
    "prox_l12_cols",
    "project_fro_ball",
    "project_l1_ball",
    "project_l1_ball_sort",
    "l1_ball_threshold",
    "prox_zero_set",
    "prox_conjugate",
]

Prox = Callable[[np.ndarray, float], np.ndarray]

_SORT_BELOW = 256  # candidate count at which the pivot search finishes by sorting


def prox_nonneg(X, gamma=None):
    return np.maximum(X, 0.0)


def prox_l1(X, gamma):
    """Soft thresholding: ``sign(x) * max(|x| - gamma, 0)``."""
    return X - np.clip(X, -gamma, gamma)


def _group_shrink(X, gamma, axis):
    norms = np.sqrt(np.sum(X * X, axis=axis, keepdims=True))
    # scale is 0 for zero-norm groups; the prox of a norm at 0 is 0
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > gamma, 1.0 - gamma / norms, 0.0)
    return scale * X


def prox_l12_rows(X, gamma):
    """Group soft thresholding of the rows of ``X`` (the ``l_{1,2,r}`` norm)."""
    return _group_shrink(X, gamma, axis=1)


def prox_l12_cols(X, gamma):
    """Group soft thresholding of the columns of ``X`` (the ``l_{1,2,c}`` norm)."""
    return _group_shrink(X, gamma, axis=0)


def project_fro_ball(X, center, radius):
    """Project onto ``{Y : ||Y - center||_F <= radius}``."""
    if radius < 0:
        raise ValueError(f"radius must be nonnegative, got {radius}")
    R = X - center
    dist = np.linalg.norm(R)
    if dist <= radius:
        return X
    return center + (radius / dist) * R


def project_l1_ball_sort(X, radius):
    """Reference l1-ball projection by sorting, O(k log k).

    Kept as the oracle for :func:`project_l1_ball`.
    """
    X = np.asarray(X, dtype=np.float64)
    a = np.abs(X).ravel()
    if a.sum() <= radius:
        return X.copy()
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    rho = np.nonzero(u * k > css - radius)[0][-1]
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.sign(X) * np.maximum(np.abs(X) - theta, 0.0)


def l1_ball_threshold(a, radius, rng=None):
    """Soft-threshold level projecting nonnegative ``a`` onto the l1 ball.

    Randomized pivot search in expected linear time: keeps a candidate set,
    splits it at a random pivot, and decides from the partial sums which
    side holds the last active entry. Small candidate sets are finished by
    sorting.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    # theta >= (sum(a) - radius) / len(a), so entries at or below that bound
    # are inactive; a couple of these sweeps shrink the candidate set cheaply
    cand = a
    for _ in range(2):
        lower = (cand.sum() - radius) / cand.size
        cand = cand[cand > lower]
    total = 0.0  # sum of entries known to be active
    count = 0    # number of entries known to be active
    while cand.size:
        if cand.size <= _SORT_BELOW:
            # every candidate lies below the known-active entries, so the
            # active ones form a prefix of the descending order
            u = np.sort(cand)[::-1]
            css = total + np.cumsum(u)
            cnt = count + np.arange(1, u.size + 1)
            hit = np.nonzero(u * cnt > css - radius)[0]
            if hit.size:
                total, count = css[hit[-1]], cnt[hit[-1]]
            break
        pivot = cand[rng.integers(cand.size)]
        upper = cand[cand >= pivot]
        s = total + upper.sum()
        c = count + upper.size
        if s - c * pivot < radius:
            # pivot and everything above it stay active
            total, count = s, c
            cand = cand[cand < pivot]
        else:
            # the threshold lies above the pivot; drop the pivot and below
            cand = upper[upper > pivot]
    return (total - radius) / count


def project_l1_ball(X, radius, rng=None):
    """Euclidean projection onto ``{Y : ||Y||_1 <= radius}``."""
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    X = np.asarray(X, dtype=np.float64)
    a = np.abs(X)
    if a.sum() <= radius:
        return X
    theta = l1_ball_threshold(a.ravel(), radius, rng)
    return np.sign(X) * np.maximum(a - theta, 0.0)


def prox_zero_set(X, gamma=None):
    return np.zeros_like(X)


def prox_conjugate(ztilde, gamma, prox_of_g: Prox):
    """Moreau step ``z - gamma * prox_{g/gamma}(z/gamma)``.

    Equals ``gamma * prox_{g*/gamma}(z / gamma)``, the dual update of the
    primal-dual iteration, evaluated through the prox of ``g`` itself.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return ztilde - gamma * prox_of_g(ztilde / gamma, 1.0 / gamma)
