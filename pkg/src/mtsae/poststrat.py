"""Poststratification of posterior draws to area-level estimands.

Cell-level posterior predictions are aggregated with known population cell
counts N_kj. The Gaussian estimand has two algebraically equivalent routes:
per-cell draws m_kj ~ N(theta_kj, sigma2 / N_kj) combined with weights
q_kj = N_kj / N_k, or a single draw from the aggregate normal
N(sum N theta / sum N, sigma2 / sum N). Both are provided; the second is
cheaper and is used to cross-check the first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import expit

from .data_model import AreaSet, PoststratCell, covariate_matrix
from .gibbs import ModelChain
from .spatial_basis import BasisMatrix


@dataclass(frozen=True)
class AreaDraws:
    """Posterior draws of one area-level estimand (one value per iteration)."""

    area_id: object
    draws: np.ndarray


@dataclass(frozen=True)
class AreaEstimate:
    """Posterior mean, variance, and central credible interval for one area."""

    area_id: object
    mean: float
    variance: float
    ci_lower: float
    ci_upper: float

    def __post_init__(self):
        if self.ci_lower > self.ci_upper:
            raise ValueError("interval endpoints are out of order")


class _CellLayout:
    """Cells resolved to arrays, grouped by area in AreaSet order."""

    def __init__(self, cells, areas: AreaSet, basis):
        if not cells:
            raise ValueError("no poststratification cells supplied")
        self.X1 = np.vstack([np.asarray(c.x1, float) for c in cells])
        self.X2 = np.vstack([np.asarray(c.x2, float) for c in cells])
        self.counts = np.array([c.count for c in cells], dtype=float)
        self.area_idx = areas.index_of([c.area_id for c in cells])
        B = basis.B if isinstance(basis, BasisMatrix) else np.asarray(basis, float)
        self.phi = B[self.area_idx, :]

        present = np.unique(self.area_idx)
        self.area_ids = [areas.labels[k] for k in present]
        self.area_totals = np.bincount(self.area_idx, weights=self.counts,
                                       minlength=areas.r)[present]
        if (self.area_totals <= 0).any():
            raise ValueError("every area must have a positive total cell count")
        # J x K matrix of q_kj weights; one matmul aggregates all areas.
        pos = {k: i for i, k in enumerate(present)}
        self.weight_mat = np.zeros((len(cells), present.size))
        cols = np.array([pos[k] for k in self.area_idx])
        self.weight_mat[np.arange(len(cells)), cols] = self.counts / self.area_totals[cols]
        self.indicator = (self.weight_mat > 0).astype(float)


def _gaussian_cell_means(chain: ModelChain, layout: _CellLayout):
    """theta_kj per draw: (T, J) matrix of cell-level Gaussian means."""
    if chain.model_kind == "multitype":
        theta = chain.params["beta1"] @ layout.X1.T
        theta += chain.params["tau1"][:, None] * (chain.params["eta"] @ layout.phi.T)
    elif chain.model_kind == "gaussian":
        theta = chain.params["beta"] @ layout.X1.T
        u = chain.params.get("u")
        if u is not None and u.size:
            theta += u @ layout.phi.T
    else:
        raise ValueError(f"chain kind {chain.model_kind!r} has no Gaussian block")
    return theta, chain.params["sigma2"]


def _binomial_cell_logits(chain: ModelChain, layout: _CellLayout):
    if chain.model_kind == "multitype":
        psi = chain.params["beta2"] @ layout.X2.T
        psi += (chain.params["eta"] + chain.params["zeta"]) @ layout.phi.T
    elif chain.model_kind == "binomial":
        psi = chain.params["beta"] @ layout.X2.T
        u = chain.params.get("u")
        if u is not None and u.size:
            psi += u @ layout.phi.T
    else:
        raise ValueError(f"chain kind {chain.model_kind!r} has no binomial block")
    return psi


def gaussian_poststrat(chain: ModelChain, cells, areas: AreaSet, basis,
                       rng: np.random.Generator):
    """Cell-draw route: m_kj ~ N(theta_kj, sigma2 / N_kj), then weighted sum."""
    layout = _CellLayout(cells, areas, basis)
    theta, sigma2 = _gaussian_cell_means(chain, layout)
    scale = np.sqrt(sigma2[:, None] / layout.counts[None, :])
    cell_draws = theta + scale * rng.standard_normal(theta.shape)
    area_draws = cell_draws @ layout.weight_mat
    return [AreaDraws(a, area_draws[:, i]) for i, a in enumerate(layout.area_ids)]


def gaussian_poststrat_aggregate(chain: ModelChain, cells, areas: AreaSet, basis,
                                 rng: np.random.Generator):
    """Aggregate-normal route: one draw per area from
    N(sum N theta / sum N, sigma2 / sum N); equivalent in law to the
    cell-draw route."""
    layout = _CellLayout(cells, areas, basis)
    theta, sigma2 = _gaussian_cell_means(chain, layout)
    mean = theta @ layout.weight_mat
    scale = np.sqrt(sigma2[:, None] / layout.area_totals[None, :])
    area_draws = mean + scale * rng.standard_normal(mean.shape)
    return [AreaDraws(a, area_draws[:, i]) for i, a in enumerate(layout.area_ids)]


def binomial_poststrat(chain: ModelChain, cells, areas: AreaSet, basis,
                       rng: np.random.Generator):
    """Binomial route: y_kj ~ Bin(N_kj, p_kj), area rate = sum y / sum N."""
    layout = _CellLayout(cells, areas, basis)
    probs = expit(_binomial_cell_logits(chain, layout))
    counts = layout.counts.astype(np.int64)
    successes = rng.binomial(counts[None, :], probs)
    rates = (successes @ layout.indicator) / layout.area_totals[None, :]
    return [AreaDraws(a, rates[:, i]) for i, a in enumerate(layout.area_ids)]


def summarize(area_draws: AreaDraws, alpha: float = 0.05) -> AreaEstimate:
    """Mean, sample variance, and central (1 - alpha) interval of the draws.

    Interval endpoints interpolate order statistics linearly (position
    (T - 1) p + 1), matching numpy's default quantile rule.
    """
    draws = np.asarray(area_draws.draws, float)
    if draws.size < 2:
        raise ValueError("need at least two draws to summarize")
    lower, upper = np.quantile(draws, [alpha / 2.0, 1.0 - alpha / 2.0])
    return AreaEstimate(
        area_id=area_draws.area_id,
        mean=float(draws.mean()),
        variance=float(draws.var(ddof=1)),
        ci_lower=float(lower),
        ci_upper=float(upper),
    )


def load_cells(path, covariates=("sex", "edu"), area_column: str = "area",
               count_column: str = "count"):
    """Read cells from delimiter-separated text: area, covariates, count."""
    df = pd.read_csv(path, float_precision="round_trip")
    needed = [area_column, *covariates, count_column]
    missing = [c for c in needed if c not in df.columns]
    if missing:
        raise ValueError(f"cells file is missing column(s): {', '.join(missing)}")
    X = covariate_matrix(df[covariates[0]].to_numpy(float),
                         df[covariates[1]].to_numpy(float))
    return [
        PoststratCell(area_id=a, x1=x, x2=x.copy(), count=int(n))
        for a, x, n in zip(df[area_column].to_numpy(), X, df[count_column].to_numpy())
    ]


def write_estimates(path, estimates_by_estimand: dict):
    """Write per-area estimates: area_id, estimand, mean, variance, lower, upper."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("area_id,estimand,mean,variance,lower,upper\n")
        for estimand, estimates in estimates_by_estimand.items():
            for est in estimates:
                fh.write(f"{est.area_id},{estimand},{est.mean!r},{est.variance!r},"
                         f"{est.ci_lower!r},{est.ci_upper!r}\n")
