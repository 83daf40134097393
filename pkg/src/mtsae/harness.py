"""End-to-end orchestration: configuration, synthetic populations, and the
design-based simulation loop.

A simulation draws repeated informative PPS samples from a fixed finite
population, fits the requested models on each sample, poststratifies to
area-level estimands, and scores everything against the finite-population
truths. Replicates are embarrassingly parallel; every random stream is
derived from (master seed, replicate, stream id), so results are identical
whether replicates run serially or on a worker pool.
"""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import expit, ndtr, ndtri
from scipy.stats import norm

from .data_model import (
    AreaSet,
    EmptyPopulationError,
    PopulationFrame,
    PoststratCell,
    SchemaError,
    TransformMeta,
    covariate_matrix,
    ingest_population,
)
from .design import draw_design_sample, ht_area_estimates, ht_interval, size_measure
from .gibbs import Priors, fit_binomial_univariate, fit_gaussian_univariate, fit_multitype
from .metrics import SimulationReport, aggregate_report
from .poststrat import binomial_poststrat, gaussian_poststrat, load_cells, summarize
from .spatial_basis import adjacency_eigenbasis

METHODS = ("ht", "univariate", "multitype")

# Stream ids for seed derivation; never reorder (it would change results).
_STREAM_SYNTH = 0
_STREAM_DESIGN = 1
_STREAM_FIT_GAUSS = 2
_STREAM_FIT_BINOM = 3
_STREAM_FIT_MULTI = 4
_STREAM_PS = 5

# Fixed generator coefficients (intercept, sex, edu) for the two responses.
_GAUSS_COEFS = (0.55, -0.05, 0.12)
_LOGIT_COEFS = (-1.0, 0.25, -0.8)
_WEIGHT_SHAPE = 20.0
_EFFECT_BOUND = 1.4


def _fmt(x) -> str:
    """Shortest round-trip decimal for a float (CSV cells must be stable)."""
    return repr(float(x))


def derive_seed(master_seed: int, *key: int) -> int:
    """Stable integer seed for the stream identified by (master, *key)."""
    ss = np.random.SeedSequence([int(master_seed), *[int(k) for k in key]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class SyntheticSpec:
    """Desk-scale stand-in for a census-style population on a grid of areas."""

    N: int = 20_000
    rows: int = 4
    cols: int = 5
    area_scale: float = 0.06
    corr_strength: float = 20.0
    sex_prevalence: float = 0.5
    edu_prevalence: float = 0.4
    noise_scale: float = 0.3

    def __post_init__(self):
        if self.N < self.rows * self.cols:
            raise ValueError("population must have at least one unit per area")

    @property
    def r(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs; every field maps to a dotted config key."""

    population_path: str | None = None
    adjacency_path: str | None = None
    cells_path: str | None = None
    out_dir: str | None = None
    n: int = 1000
    multiplier: float = 5.0
    shuffle: bool = False
    n_iter: int = 2000
    n_burn: int = 1000
    seed: int = 0
    replicates: int = 100
    methods: tuple = METHODS
    threads: int = 1
    alpha: float = 0.05
    save_chains: bool = False
    edu_threshold: int = 21
    priors: Priors = field(default_factory=Priors)
    synth: SyntheticSpec = field(default_factory=SyntheticSpec)

    def __post_init__(self):
        if not 0 <= self.n_burn < self.n_iter:
            raise ValueError("need 0 <= n_burn < n_iter")
        if self.replicates < 1:
            raise ValueError("need at least one replicate")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown method(s): {sorted(unknown)}")


def _parse_bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_methods(text):
    if isinstance(text, (tuple, list)):
        return tuple(text)
    return tuple(m.strip() for m in str(text).split(",") if m.strip())


# dotted key -> (section, field, converter); section None targets RunConfig.
_CONFIG_KEYS = {
    "paths.population": (None, "population_path", str),
    "paths.adjacency": (None, "adjacency_path", str),
    "paths.cells": (None, "cells_path", str),
    "paths.out": (None, "out_dir", str),
    "design.n": (None, "n", int),
    "design.multiplier": (None, "multiplier", float),
    "design.shuffle": (None, "shuffle", _parse_bool),
    "mcmc.n_iter": (None, "n_iter", int),
    "mcmc.n_burn": (None, "n_burn", int),
    "mcmc.seed": (None, "seed", int),
    "run.replicates": (None, "replicates", int),
    "run.methods": (None, "methods", _parse_methods),
    "run.threads": (None, "threads", int),
    "run.alpha": (None, "alpha", float),
    "run.save_chains": (None, "save_chains", _parse_bool),
    "data.edu_threshold": (None, "edu_threshold", int),
    "priors.sigma_beta": ("priors", "sigma_beta", float),
    "priors.a_eps": ("priors", "a_eps", float),
    "priors.b_eps": ("priors", "b_eps", float),
    "priors.a_eta": ("priors", "a_eta", float),
    "priors.b_eta": ("priors", "b_eta", float),
    "priors.a_zeta": ("priors", "a_zeta", float),
    "priors.b_zeta": ("priors", "b_zeta", float),
    "priors.a_u": ("priors", "a_u", float),
    "priors.b_u": ("priors", "b_u", float),
    "priors.sigma_tau2": ("priors", "sigma_tau2", float),
    "synth.n": ("synth", "N", int),
    "synth.rows": ("synth", "rows", int),
    "synth.cols": ("synth", "cols", int),
    "synth.area_scale": ("synth", "area_scale", float),
    "synth.corr_strength": ("synth", "corr_strength", float),
    "synth.sex_prevalence": ("synth", "sex_prevalence", float),
    "synth.edu_prevalence": ("synth", "edu_prevalence", float),
    "synth.noise_scale": ("synth", "noise_scale", float),
}


def parse_config_file(path) -> dict:
    """Read flat ``key = value`` lines; '#' starts a comment."""
    mapping = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            mapping[key] = value
    return mapping


def build_config(mapping: dict) -> RunConfig:
    """Turn a dotted-key mapping into a RunConfig."""
    top: dict = {}
    nested: dict = {"priors": {}, "synth": {}}
    for key, raw in mapping.items():
        if key not in _CONFIG_KEYS:
            raise ValueError(f"unknown config key {key!r}")
        section, name, convert = _CONFIG_KEYS[key]
        value = convert(raw)
        if section is None:
            top[name] = value
        else:
            nested[section][name] = value
    if nested["priors"]:
        top["priors"] = Priors(**nested["priors"])
    if nested["synth"]:
        top["synth"] = SyntheticSpec(**nested["synth"])
    return RunConfig(**top)


def grid_adjacency(rows: int, cols: int) -> np.ndarray:
    """Rook adjacency of a rows x cols grid of areas."""
    r = rows * cols
    A = np.zeros((r, r))
    for i in range(rows):
        for j in range(cols):
            k = i * cols + j
            if j + 1 < cols:
                A[k, k + 1] = A[k + 1, k] = 1.0
            if i + 1 < rows:
                A[k, k + cols] = A[k + cols, k] = 1.0
    return A


def synthesize_population(spec: SyntheticSpec, seed: int):
    """Generate (frame, areas, cells) with cross-correlated responses.

    Both responses share one smooth area effect (a random vector in the span
    of the adjacency basis): the Gaussian mean adds it directly, the logit
    adds it scaled by ``corr_strength``. Heterogeneous positive base weights
    make the poverty-inflated PPS design informative.
    """
    rng = np.random.default_rng(seed)
    r = spec.r
    adjacency = grid_adjacency(spec.rows, spec.cols)
    areas = AreaSet(labels=tuple(range(r)), adjacency=adjacency)
    basis = adjacency_eigenbasis(adjacency)

    # Truncated-normal basis coefficients keep any single area from landing
    # far in the tail, which would make fixed-truth coverage erratic.
    bound = _EFFECT_BOUND
    u = rng.random(basis.q)
    coef = ndtri(ndtr(-bound) + u * (ndtr(bound) - ndtr(-bound)))
    effect = basis.B @ coef
    rms = float(np.sqrt((effect**2).mean()))
    effect = spec.area_scale * effect / rms if rms > 1e-12 else np.zeros(r)

    # One unit pinned to each area so no area is empty, remainder at random.
    area_idx = np.concatenate([np.arange(r), rng.integers(0, r, size=spec.N - r)])
    sex = (rng.random(spec.N) < spec.sex_prevalence).astype(float)
    edu = (rng.random(spec.N) < spec.edu_prevalence).astype(float)

    g0, gs, ge = _GAUSS_COEFS
    z1 = g0 + gs * sex + ge * edu + effect[area_idx]
    z1 = z1 + spec.noise_scale * rng.standard_normal(spec.N)
    c0, cs, ce = _LOGIT_COEFS
    psi = c0 + cs * sex + ce * edu + spec.corr_strength * effect[area_idx]
    z2 = (rng.random(spec.N) < expit(psi)).astype(np.int64)
    pwgtp = rng.gamma(_WEIGHT_SHAPE, 12.0, size=spec.N) + 1.0

    frame = PopulationFrame(
        unit_ids=np.arange(spec.N),
        area_ids=area_idx,
        X1=covariate_matrix(sex, edu),
        X2=covariate_matrix(sex, edu),
        z1=z1,
        z2=z2,
        trials=np.ones(spec.N, dtype=np.int64),
        weights=pwgtp,
        transform_meta=TransformMeta(0.0, 1.0),
    )

    cells = []
    for k, s_val, e_val in itertools.product(range(r), (0.0, 1.0), (0.0, 1.0)):
        mask = (area_idx == k) & (sex == s_val) & (edu == e_val)
        count = int(mask.sum())
        if count:
            x = np.array([1.0, s_val, e_val])
            cells.append(PoststratCell(area_id=k, x1=x, x2=x.copy(), count=count))
    return frame, areas, cells


def compute_truths(frame: PopulationFrame, areas: AreaSet):
    """Finite-population per-area means: transformed income and poverty rate."""
    idx = areas.index_of(frame.area_ids)
    counts = np.bincount(idx, minlength=areas.r).astype(float)
    if (counts == 0).any():
        raise ValueError("every area needs at least one population unit")
    gaussian = np.bincount(idx, weights=frame.z1, minlength=areas.r) / counts
    trials = np.bincount(idx, weights=frame.trials.astype(float), minlength=areas.r)
    rate = np.bincount(idx, weights=frame.z2.astype(float), minlength=areas.r) / trials
    return gaussian, rate


# ---------------------------------------------------------------------------
# Replicate execution

_CTX = None


@dataclass
class _SimContext:
    config: RunConfig
    frame: PopulationFrame
    areas: AreaSet
    basis: object
    cells: list


def _init_worker(ctx):
    global _CTX
    _CTX = ctx


def _summaries_to_arrays(draws_list, areas: AreaSet, alpha: float):
    r = areas.r
    block = {
        "mean": np.full(r, np.nan),
        "variance": np.full(r, np.nan),
        "lower": np.full(r, np.nan),
        "upper": np.full(r, np.nan),
        "valid": np.zeros(r, dtype=bool),
    }
    for ad in draws_list:
        est = summarize(ad, alpha)
        k = int(areas.index_of([ad.area_id])[0])
        block["mean"][k] = est.mean
        block["variance"][k] = est.variance
        block["lower"][k] = est.ci_lower
        block["upper"][k] = est.ci_upper
        block["valid"][k] = True
    return block


def _run_replicate(rep: int):
    ctx = _CTX
    cfg = ctx.config
    frame, areas, basis, cells = ctx.frame, ctx.areas, ctx.basis, ctx.cells
    r = areas.r

    rng_design = np.random.default_rng(derive_seed(cfg.seed, rep, _STREAM_DESIGN))
    poor = (frame.z2 > 0).astype(float)
    M = size_measure(frame.weights, poor, cfg.multiplier)
    sample = draw_design_sample(M, cfg.n, rng_design, shuffle=cfg.shuffle)
    sub = frame.subset(sample.indices, weights=sample.weights)
    a_idx = areas.index_of(sub.area_ids)
    phi = basis.B[a_idx, :]
    w_tilde = sample.scaled_weights

    results = {}
    if "ht" in cfg.methods:
        rate_y = sub.z2 / sub.trials
        for resp, y in (("gaussian", sub.z1), ("bernoulli", rate_y)):
            est, _ = ht_area_estimates(y, sample.weights, a_idx, r)
            lo, hi, ok = ht_interval(y, sample.weights, a_idx, r, cfg.alpha)
            # invert the normal half-width back to the variance scale
            var = ((hi - lo) / 2.0 / norm.ppf(1.0 - cfg.alpha / 2.0)) ** 2
            results[("ht", resp)] = {
                "mean": est, "variance": var, "lower": lo, "upper": hi, "valid": ok,
            }

    chains = {}
    if "univariate" in cfg.methods:
        cg = fit_gaussian_univariate(
            sub.z1, sub.X1, phi, w_tilde, cfg.priors, cfg.n_iter, cfg.n_burn,
            seed=derive_seed(cfg.seed, rep, _STREAM_FIT_GAUSS))
        cb = fit_binomial_univariate(
            sub.z2, sub.trials, sub.X2, phi, w_tilde, cfg.priors, cfg.n_iter,
            cfg.n_burn, seed=derive_seed(cfg.seed, rep, _STREAM_FIT_BINOM))
        chains["univariate_gaussian"] = cg
        chains["univariate_bernoulli"] = cb
        dg = gaussian_poststrat(cg, cells, areas, basis,
                                np.random.default_rng(derive_seed(cfg.seed, rep, _STREAM_PS, 0)))
        db = binomial_poststrat(cb, cells, areas, basis,
                                np.random.default_rng(derive_seed(cfg.seed, rep, _STREAM_PS, 1)))
        results[("univariate", "gaussian")] = _summaries_to_arrays(dg, areas, cfg.alpha)
        results[("univariate", "bernoulli")] = _summaries_to_arrays(db, areas, cfg.alpha)

    if "multitype" in cfg.methods:
        cm = fit_multitype(
            sub.z1, sub.z2, sub.trials, sub.X1, sub.X2, phi, w_tilde, cfg.priors,
            cfg.n_iter, cfg.n_burn, seed=derive_seed(cfg.seed, rep, _STREAM_FIT_MULTI))
        chains["multitype"] = cm
        dg = gaussian_poststrat(cm, cells, areas, basis,
                                np.random.default_rng(derive_seed(cfg.seed, rep, _STREAM_PS, 2)))
        db = binomial_poststrat(cm, cells, areas, basis,
                                np.random.default_rng(derive_seed(cfg.seed, rep, _STREAM_PS, 3)))
        results[("multitype", "gaussian")] = _summaries_to_arrays(dg, areas, cfg.alpha)
        results[("multitype", "bernoulli")] = _summaries_to_arrays(db, areas, cfg.alpha)

    if cfg.save_chains and cfg.out_dir:
        chain_dir = os.path.join(cfg.out_dir, "chains")
        os.makedirs(chain_dir, exist_ok=True)
        for name, chain in chains.items():
            chain.save(os.path.join(chain_dir, f"rep{rep:04d}_{name}.csv"))
    return rep, results


def run_simulation(config: RunConfig, inputs=None) -> SimulationReport:
    """Run the full replicate loop and (optionally) write report files.

    ``inputs`` may carry a prebuilt (frame, areas, cells) tuple; otherwise
    they come from config paths or, failing that, the synthetic generator.
    """
    if inputs is None:
        inputs = load_inputs(config)
    frame, areas, cells = inputs
    basis = adjacency_eigenbasis(areas.adjacency)
    gaussian_truth, rate_truth = compute_truths(frame, areas)
    truths = {"gaussian": gaussian_truth, "bernoulli": rate_truth}
    ctx = _SimContext(config=config, frame=frame, areas=areas, basis=basis,
                      cells=cells)

    reps = range(config.replicates)
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads,
                                 initializer=_init_worker, initargs=(ctx,)) as pool:
            rep_results = list(pool.map(_run_replicate, reps))
    else:
        _init_worker(ctx)
        rep_results = [_run_replicate(rep) for rep in reps]
    rep_results.sort(key=lambda pair: pair[0])

    keys = rep_results[0][1].keys()
    estimates = {}
    for key in keys:
        estimates[key] = {
            name: np.vstack([res[key][name] for _, res in rep_results])
            for name in ("mean", "variance", "lower", "upper", "valid")
        }
    report = aggregate_report(
        {k: {n: v for n, v in block.items() if n != "variance"}
         for k, block in estimates.items()},
        truths, alpha=config.alpha)

    if config.out_dir:
        write_outputs(config.out_dir, report, estimates, truths, areas)
    return report


def load_inputs(config: RunConfig):
    """Resolve the population, areas, and cells from config paths or synth."""
    if config.population_path:
        frame = load_population_file(config.population_path, config)
        if not config.adjacency_path:
            raise ValueError("an adjacency edge-list file is required with a population file")
        areas = load_adjacency(config.adjacency_path, extra_labels=frame.area_ids)
        if config.cells_path:
            cells = load_cells(config.cells_path)
        else:
            cells = derive_cells_from_population(frame, areas)
        return frame, areas, cells
    synth_seed = derive_seed(config.seed, _STREAM_SYNTH)
    return synthesize_population(config.synth, synth_seed)


def load_population_file(path, config: RunConfig | None = None) -> PopulationFrame:
    """Load microdata, auto-detecting raw survey columns vs analysis columns."""
    header = pd.read_csv(path, nrows=0).columns
    if "PINCP" in header:
        frame, _ = ingest_population(
            path, edu_threshold=config.edu_threshold if config else 21)
        return frame
    if {"z1", "z2"}.issubset(header):
        return load_frame(path)
    raise SchemaError("population file has neither raw survey nor analysis columns")


def load_frame(path) -> PopulationFrame:
    """Analysis-ready population: area, sex, edu, z1, z2, pwgtp [, trials]."""
    df = pd.read_csv(path, float_precision="round_trip")
    needed = ["area", "sex", "edu", "z1", "z2", "pwgtp"]
    missing = [c for c in needed if c not in df.columns]
    if missing:
        raise SchemaError(f"missing required column(s): {', '.join(missing)}")
    n = len(df)
    if n == 0:
        raise EmptyPopulationError("population file has no rows")
    trials = df["trials"].to_numpy(np.int64) if "trials" in df.columns else np.ones(n, np.int64)
    X = covariate_matrix(df["sex"].to_numpy(float), df["edu"].to_numpy(float))
    return PopulationFrame(
        unit_ids=df["unit_id"].to_numpy() if "unit_id" in df.columns else np.arange(n),
        area_ids=df["area"].to_numpy(),
        X1=X,
        X2=X.copy(),
        z1=df["z1"].to_numpy(float),
        z2=df["z2"].to_numpy(np.int64),
        trials=trials,
        weights=df["pwgtp"].to_numpy(float),
        transform_meta=TransformMeta(0.0, 1.0),
    )


def save_frame(frame: PopulationFrame, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("unit_id,area,sex,edu,z1,z2,pwgtp,trials\n")
        for i in range(len(frame)):
            fh.write(f"{frame.unit_ids[i]},{frame.area_ids[i]},"
                     f"{frame.X1[i, 1]:g},{frame.X1[i, 2]:g},"
                     f"{_fmt(frame.z1[i])},{frame.z2[i]},{_fmt(frame.weights[i])},"
                     f"{frame.trials[i]}\n")


def load_adjacency(path, extra_labels=()) -> AreaSet:
    """Edge-list text (two labels per line) into an AreaSet.

    Labels are the sorted union of edge endpoints and ``extra_labels`` so
    isolated areas referenced by the population are retained.
    """
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two area labels")
            edges.append(tuple(parts))
    labels = {lab for edge in edges for lab in edge}
    labels |= {str(lab) for lab in np.asarray(extra_labels).ravel()}
    try:
        ordered = tuple(sorted(labels, key=int))
        cast = int
    except ValueError:
        ordered = tuple(sorted(labels))
        cast = str
    ordered = tuple(cast(lab) for lab in ordered)
    index = {lab: i for i, lab in enumerate(ordered)}
    A = np.zeros((len(ordered), len(ordered)))
    for a, b in edges:
        i, j = index[cast(a)], index[cast(b)]
        if i != j:
            A[i, j] = A[j, i] = 1.0
    return AreaSet(labels=ordered, adjacency=A)


def save_adjacency(areas: AreaSet, path):
    A = areas.adjacency
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(areas.r):
            for j in range(i + 1, areas.r):
                if A[i, j]:
                    fh.write(f"{areas.labels[i]} {areas.labels[j]}\n")


def derive_cells_from_population(frame: PopulationFrame, areas: AreaSet):
    """Poststratification cells tabulated directly from a census-style frame."""
    idx = areas.index_of(frame.area_ids)
    sex = frame.X1[:, 1]
    edu = frame.X1[:, 2]
    cells = []
    for k in range(areas.r):
        in_area = idx == k
        for s_val in np.unique(sex[in_area]):
            for e_val in np.unique(edu[in_area & (sex == s_val)]):
                count = int((in_area & (sex == s_val) & (edu == e_val)).sum())
                x = np.array([1.0, s_val, e_val])
                cells.append(PoststratCell(area_id=areas.labels[k], x1=x, x2=x.copy(),
                                           count=count))
    return cells


def save_cells(cells, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("area,sex,edu,count\n")
        for c in cells:
            fh.write(f"{c.area_id},{c.x1[1]:g},{c.x1[2]:g},{c.count}\n")


def save_truths(truths: dict, areas: AreaSet, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("area_id,gaussian,bernoulli\n")
        for k, label in enumerate(areas.labels):
            fh.write(f"{label},{_fmt(truths['gaussian'][k])},{_fmt(truths['bernoulli'][k])}\n")


def load_truths(path):
    df = pd.read_csv(path, float_precision="round_trip")
    return (list(df["area_id"]),
            {"gaussian": df["gaussian"].to_numpy(float),
             "bernoulli": df["bernoulli"].to_numpy(float)})


def save_estimates(estimates: dict, areas: AreaSet, path):
    """Replicate-level estimate dump scoreable by the metrics command."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("replicate,method,response,area_id,mean,variance,lower,upper,valid\n")
        for (method, resp), block in sorted(estimates.items()):
            n_rep = block["mean"].shape[0]
            for rep in range(n_rep):
                for k, label in enumerate(areas.labels):
                    fh.write(f"{rep},{method},{resp},{label},"
                             f"{_fmt(block['mean'][rep, k])},{_fmt(block['variance'][rep, k])},"
                             f"{_fmt(block['lower'][rep, k])},{_fmt(block['upper'][rep, k])},"
                             f"{int(block['valid'][rep, k])}\n")


def load_estimates(path, area_order):
    df = pd.read_csv(path, float_precision="round_trip")
    pos = {label: k for k, label in enumerate(area_order)}
    estimates: dict = {}
    for (method, resp), group in df.groupby(["method", "response"], sort=True):
        n_rep = int(group["replicate"].max()) + 1
        block = {name: np.full((n_rep, len(area_order)), np.nan)
                 for name in ("mean", "variance", "lower", "upper")}
        block["valid"] = np.zeros((n_rep, len(area_order)), dtype=bool)
        rows = group["replicate"].to_numpy(int)
        cols = np.array([pos[a] for a in group["area_id"]])
        for name in ("mean", "variance", "lower", "upper"):
            block[name][rows, cols] = group[name].to_numpy(float)
        block["valid"][rows, cols] = group["valid"].to_numpy(int).astype(bool)
        estimates[(method, resp)] = block
    return estimates


def write_outputs(out_dir, report: SimulationReport, estimates, truths, areas: AreaSet):
    os.makedirs(out_dir, exist_ok=True)
    report.write(os.path.join(out_dir, "report.csv"))
    save_truths(truths, areas, os.path.join(out_dir, "truths.csv"))
    save_estimates(estimates, areas, os.path.join(out_dir, "estimates.csv"))
    for (method, resp), block in sorted(estimates.items()):
        path = os.path.join(out_dir, f"areas_{method}_{resp}.csv")
        valid = block["valid"]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("area_id,truth,mean,variance,lower,upper,mse,n_valid\n")
            for k, label in enumerate(areas.labels):
                rows = valid[:, k]
                n_valid = int(rows.sum())
                truth = truths[resp][k]
                if n_valid:
                    mean = block["mean"][rows, k].mean()
                    var = block["variance"][rows, k].mean()
                    lo = block["lower"][rows, k].mean()
                    hi = block["upper"][rows, k].mean()
                    mse = float(((block["mean"][rows, k] - truth) ** 2).mean())
                    fh.write(f"{label},{_fmt(truth)},{_fmt(mean)},{_fmt(var)},"
                             f"{_fmt(lo)},{_fmt(hi)},{_fmt(mse)},{n_valid}\n")
                else:
                    fh.write(f"{label},{_fmt(truth)},nan,nan,nan,nan,nan,0\n")
