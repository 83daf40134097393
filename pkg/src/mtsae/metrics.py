"""Design-based evaluation: interval score, MSE, coverage, ratio to HT.

Per-area metrics are computed over simulation replicates, then averaged
(unweighted) across areas into one report row per (method, response).
Replicate/area pairs in which any requested method is missing (e.g. an HT
domain with fewer than two sampled units) are excluded pairwise so every
method is scored on the same cases; the exclusion count is reported.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def interval_score(lower, upper, theta, alpha: float):
    """Width plus (2 / alpha)-scaled penalties for missing the target."""
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    theta = np.asarray(theta, float)
    if np.any(lower > upper):
        raise ValueError("interval lower bound exceeds upper bound")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    score = (upper - lower)
    score = score + (2.0 / alpha) * (lower - theta) * (theta < lower)
    score = score + (2.0 / alpha) * (theta - upper) * (theta > upper)
    if score.ndim == 0:
        return float(score)
    return score


def area_mse(estimates, truth: float) -> float:
    """Mean over replicates of the squared estimation error."""
    est = np.asarray(estimates, float)
    if est.size == 0:
        raise ValueError("no replicate estimates supplied")
    return float(((est - truth) ** 2).mean())


def coverage_rate(intervals, truth: float) -> float:
    """Fraction of replicate intervals containing the truth."""
    arr = np.asarray(intervals, float).reshape(-1, 2)
    return float(((arr[:, 0] <= truth) & (truth <= arr[:, 1])).mean())


def ratio_to_ht(model_mse, ht_mse) -> float:
    """Average over areas of the per-area MSE ratio against HT."""
    model_mse = np.asarray(model_mse, float)
    ht_mse = np.asarray(ht_mse, float)
    if model_mse.shape != ht_mse.shape:
        raise ValueError("area sets are not aligned")
    if (ht_mse <= 0).any():
        raise ValueError("HT MSE is zero in at least one area")
    return float((model_mse / ht_mse).mean())


@dataclass(frozen=True)
class ReportRow:
    method: str
    response: str
    mse: float
    ratio_to_ht: float
    interval_score: float
    coverage: float
    n_excluded: int


@dataclass(frozen=True)
class SimulationReport:
    rows: tuple

    def row(self, method: str, response: str) -> ReportRow:
        for r in self.rows:
            if r.method == method and r.response == response:
                return r
        raise KeyError(f"no report row for ({method}, {response})")

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("method,response,mse,ratio_to_ht,interval_score,coverage,n_excluded\n")
            for r in self.rows:
                fh.write(f"{r.method},{r.response},{r.mse!r},{r.ratio_to_ht!r},"
                         f"{r.interval_score!r},{r.coverage!r},{r.n_excluded}\n")


def per_area_metrics(means, lowers, uppers, valid, truths, alpha: float):
    """Per-area MSE / IS / CR over replicates, honoring a validity mask.

    ``means``/``lowers``/``uppers``/``valid`` are (replicates, areas) arrays;
    areas with no valid replicate get NaN metrics.
    """
    means = np.asarray(means, float)
    n_valid = valid.sum(axis=0)
    mse = np.full(means.shape[1], np.nan)
    iscore = np.full(means.shape[1], np.nan)
    cover = np.full(means.shape[1], np.nan)
    for k in range(means.shape[1]):
        rows = valid[:, k]
        if not rows.any():
            continue
        mse[k] = area_mse(means[rows, k], truths[k])
        iscore[k] = interval_score(lowers[rows, k], uppers[rows, k], truths[k], alpha).mean()
        cover[k] = coverage_rate(np.column_stack([lowers[rows, k], uppers[rows, k]]), truths[k])
    return mse, iscore, cover, n_valid


def aggregate_report(estimates, truths, alpha: float = 0.05,
                     ht_method: str = "ht") -> SimulationReport:
    """Build the report from replicate-level estimates.

    ``estimates`` maps (method, response) to a dict of (replicates, areas)
    arrays with keys mean/lower/upper/valid; ``truths`` maps response to a
    length-r truth vector. A shared validity mask per response (the AND over
    methods) drops incomparable replicate/area pairs from every method.
    """
    responses = sorted({resp for (_, resp) in estimates})
    rows = []
    for resp in responses:
        methods = sorted({m for (m, r) in estimates if r == resp})
        shared = None
        for m in methods:
            v = estimates[(m, resp)]["valid"]
            shared = v if shared is None else (shared & v)
        n_excluded = int((~shared).sum())
        per_area = {}
        for m in methods:
            block = estimates[(m, resp)]
            per_area[m] = per_area_metrics(block["mean"], block["lower"],
                                           block["upper"], shared,
                                           np.asarray(truths[resp], float), alpha)
        ht_mse = per_area.get(ht_method, (None,))[0]
        for m in methods:
            mse, iscore, cover, _ = per_area[m]
            scored = ~np.isnan(mse)
            ratio = np.nan
            if ht_mse is not None:
                ratio = ratio_to_ht(mse[scored], ht_mse[scored])
            rows.append(ReportRow(
                method=m,
                response=resp,
                mse=float(mse[scored].mean()),
                ratio_to_ht=float(ratio),
                interval_score=float(iscore[scored].mean()),
                coverage=float(cover[scored].mean()),
                n_excluded=n_excluded,
            ))
    return SimulationReport(rows=tuple(rows))
