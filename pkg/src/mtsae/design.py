"""Informative sampling design: size measures, inclusion probabilities,
systematic PPS draws, weight scaling, and the Horvitz-Thompson comparator.

All sampling is driven by an explicit ``numpy.random.Generator`` so replicates
can run in parallel with independent seeds and still reproduce exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm


@dataclass(frozen=True)
class DesignSample:
    """One fixed-size PPS sample: population indices with their design data."""

    indices: np.ndarray
    pi: np.ndarray
    weights: np.ndarray
    scaled_weights: np.ndarray

    def __post_init__(self):
        n = self.indices.size
        total = self.scaled_weights.sum()
        if not np.isclose(total, n, rtol=1e-10, atol=0.0):
            raise ValueError(f"scaled weights sum to {total}, expected {n}")
        if self.pi.size and (self.pi.min() <= 0 or self.pi.max() > 1 + 1e-12):
            raise ValueError("inclusion probabilities must lie in (0, 1]")


def size_measure(pwgtp, poor, multiplier: float = 5.0) -> np.ndarray:
    """PPS size M_i = pwgtp_i * (1 + multiplier * poor_i).

    With the default multiplier a poor unit carries six times the size of a
    non-poor unit with equal base weight, making the design informative.
    """
    pwgtp = np.asarray(pwgtp, float)
    poor = np.asarray(poor, float)
    if pwgtp.shape != poor.shape:
        raise ValueError("pwgtp and poor must have equal length")
    return pwgtp * (1.0 + multiplier * poor)


def inclusion_probabilities(M, n: int) -> np.ndarray:
    """First-order probabilities pi_i = n M_i / sum(M), clamped iteratively.

    Units whose raw probability exceeds one become take-all units (pi = 1)
    and the remaining sample size is redistributed over the rest until every
    pi_i <= 1 and the probabilities sum to n.
    """
    M = np.asarray(M, float)
    if n > M.size:
        raise ValueError(f"sample size {n} exceeds population size {M.size}")
    if M.size and M.min() <= 0:
        raise ValueError("size measures must be positive")
    pi = np.zeros(M.size)
    free = np.ones(M.size, dtype=bool)
    n_free = n
    while True:
        pi[free] = n_free * M[free] / M[free].sum()
        over = free & (pi >= 1.0)
        if not (pi[free] > 1.0).any():
            break
        pi[over] = 1.0
        n_free -= int(over.sum())
        free &= ~over
        if n_free <= 0:
            pi[free] = 0.0
            break
    return pi


def systematic_pps_sample(pi, rng: np.random.Generator, shuffle: bool = False) -> np.ndarray:
    """Fixed-size systematic PPS draw from cumulated probabilities.

    One uniform start u is taken on [0, 1) and the units covering the points
    u, u+1, ..., u+n-1 on the cumulated pi scale are selected; because every
    pi_i <= 1 each unit is hit at most once, so the draw has exactly n
    distinct indices. Population order is kept as given unless ``shuffle``.
    """
    pi = np.asarray(pi, float)
    total = pi.sum()
    n = int(round(total))
    if abs(total - n) > 1e-9:
        raise ValueError(f"inclusion probabilities sum to {total}, not an integer")
    order = rng.permutation(pi.size) if shuffle else np.arange(pi.size)
    cumulative = np.cumsum(pi[order])
    points = rng.random() + np.arange(n)
    picked = np.searchsorted(cumulative, points, side="left")
    picked = np.minimum(picked, pi.size - 1)  # guard the last float boundary
    return np.sort(order[picked])


def scale_weights(w) -> np.ndarray:
    """Rescale design weights to sum to the sample size: w~_i = n w_i / sum(w)."""
    w = np.asarray(w, float)
    if w.size == 0:
        raise ValueError("cannot scale an empty weight vector")
    if w.min() <= 0:
        raise ValueError("design weights must be positive")
    return w.size * w / w.sum()


def draw_design_sample(M, n: int, rng: np.random.Generator, shuffle: bool = False) -> DesignSample:
    """Compose probabilities, a systematic draw, and weight scaling."""
    pi = inclusion_probabilities(M, n)
    indices = systematic_pps_sample(pi, rng, shuffle=shuffle)
    weights = 1.0 / pi[indices]
    return DesignSample(
        indices=indices,
        pi=pi[indices],
        weights=weights,
        scaled_weights=scale_weights(weights),
    )


def ht_area_estimates(y, weights, area_index, n_areas: int):
    """Hajek per-area estimates sum(w y) / sum(w) over the sampled units.

    Returns ``(estimates, observed)``; areas with no sampled units get NaN
    with ``observed`` False rather than raising.
    """
    y = np.asarray(y, float)
    weights = np.asarray(weights, float)
    area_index = np.asarray(area_index)
    wsum = np.bincount(area_index, weights=weights, minlength=n_areas)
    wysum = np.bincount(area_index, weights=weights * y, minlength=n_areas)
    observed = wsum > 0
    estimates = np.full(n_areas, np.nan)
    estimates[observed] = wysum[observed] / wsum[observed]
    return estimates, observed


def ht_interval(y, weights, area_index, n_areas: int, alpha: float = 0.05):
    """Normal-approximation interval for the Hajek estimate per area.

    The variance is the standard weighted-ratio linearization
    n_k/(n_k - 1) * sum_i [w_i (y_i - est)]^2 / (sum_i w_i)^2; areas with
    fewer than two sampled units are flagged rather than raised.
    """
    y = np.asarray(y, float)
    weights = np.asarray(weights, float)
    area_index = np.asarray(area_index)
    estimates, observed = ht_area_estimates(y, weights, area_index, n_areas)
    counts = np.bincount(area_index, minlength=n_areas)
    ok = observed & (counts >= 2)

    centered = y - np.where(observed[area_index], estimates[area_index], 0.0)
    score = weights * centered
    ssq = np.bincount(area_index, weights=score * score, minlength=n_areas)
    wsum = np.bincount(area_index, weights=weights, minlength=n_areas)
    variance = np.full(n_areas, np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        variance[ok] = counts[ok] / (counts[ok] - 1.0) * ssq[ok] / wsum[ok] ** 2
    z = norm.ppf(1.0 - alpha / 2.0)
    half = z * np.sqrt(variance)
    return estimates - half, estimates + half, ok
