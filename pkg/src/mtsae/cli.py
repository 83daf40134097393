"""Command-line entry point.

Subcommands: ``synth`` (emit a synthetic population), ``simulate`` (full
replicate loop), ``fit`` (one dataset, one model, emit a chain),
``poststratify`` (chain + cells to area estimates), and ``metrics`` (score
estimate files against truth files). Any config key can be set on the
command line as ``--<dotted.key> value``; named flags like ``--seed`` are
shorthands for their dotted keys.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import harness
from .design import scale_weights
from .gibbs import ModelChain, fit_binomial_univariate, fit_gaussian_univariate, fit_multitype
from .metrics import aggregate_report
from .poststrat import binomial_poststrat, gaussian_poststrat, load_cells, summarize, write_estimates
from .spatial_basis import adjacency_eigenbasis

# named flag -> dotted config key
_FLAG_KEYS = {
    "seed": "mcmc.seed",
    "out": "paths.out",
    "methods": "run.methods",
    "replicates": "run.replicates",
    "threads": "run.threads",
}


def _build_parser():
    parser = argparse.ArgumentParser(prog="mtsae",
                                     description="Multi-type small-area estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int, help="master random seed")
        p.add_argument("--out", help="output directory or file")
        p.add_argument("--threads", type=int, help="worker processes for replicates")

    p = sub.add_parser("synth", help="emit synthetic population, adjacency, cells")
    common(p)

    p = sub.add_parser("simulate", help="run the design-based simulation")
    common(p)
    p.add_argument("--methods", help="comma list from ht,univariate,multitype")
    p.add_argument("--replicates", type=int, help="number of replicates")

    p = sub.add_parser("fit", help="fit one model to one dataset and emit the chain")
    common(p)
    p.add_argument("--data", required=True, help="sampled units with design weights")
    p.add_argument("--adjacency", required=True, help="area edge-list file")
    p.add_argument("--model", required=True, choices=("gaussian", "binomial", "multitype"))

    p = sub.add_parser("poststratify", help="aggregate a chain to area estimates")
    common(p)
    p.add_argument("--chain", required=True)
    p.add_argument("--cells", required=True)
    p.add_argument("--adjacency", required=True)
    p.add_argument("--alpha", type=float, default=0.05)

    p = sub.add_parser("metrics", help="score estimate files against truth files")
    common(p)
    p.add_argument("--estimates", required=True)
    p.add_argument("--truths", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    return parser


def _collect_config(args, extras) -> harness.RunConfig:
    mapping = {}
    if args.config:
        mapping.update(harness.parse_config_file(args.config))
    mapping.update(_parse_dotted(extras))
    for flag, key in _FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            mapping[key] = value
    return harness.build_config(mapping)


def _parse_dotted(extras):
    mapping = {}
    i = 0
    while i < len(extras):
        token = extras[i]
        if not token.startswith("--"):
            raise ValueError(f"unexpected argument {token!r}")
        body = token[2:]
        if "=" in body:
            key, value = body.split("=", 1)
            i += 1
        else:
            key = body
            if i + 1 >= len(extras):
                raise ValueError(f"flag --{key} is missing a value")
            value = extras[i + 1]
            i += 2
        if "." not in key:
            raise ValueError(f"unknown flag --{key}")
        mapping[key] = value
    return mapping


def _resolve_out(out, default_name):
    """Interpret --out as a directory when it is one (or ends with a slash)."""
    if out is None:
        return default_name
    if os.path.isdir(out) or out.endswith(("/", os.sep)):
        os.makedirs(out, exist_ok=True)
        return os.path.join(out, default_name)
    return out


def _cmd_synth(config: harness.RunConfig) -> int:
    out = config.out_dir or "."
    os.makedirs(out, exist_ok=True)
    seed = harness.derive_seed(config.seed, harness._STREAM_SYNTH)
    frame, areas, cells = harness.synthesize_population(config.synth, seed)
    gaussian, rate = harness.compute_truths(frame, areas)
    harness.save_frame(frame, os.path.join(out, "population.csv"))
    harness.save_adjacency(areas, os.path.join(out, "adjacency.txt"))
    harness.save_cells(cells, os.path.join(out, "cells.csv"))
    harness.save_truths({"gaussian": gaussian, "bernoulli": rate}, areas,
                        os.path.join(out, "truths.csv"))
    print(f"wrote population of {len(frame)} units across {areas.r} areas to {out}")
    return 0


def _cmd_simulate(config: harness.RunConfig) -> int:
    report = harness.run_simulation(config)
    for row in report.rows:
        print(f"{row.method:11s} {row.response:9s} mse={row.mse:.6g} "
              f"ratio={row.ratio_to_ht:.4g} is={row.interval_score:.6g} "
              f"cr={row.coverage:.4g}")
    if config.out_dir:
        print(f"report written to {os.path.join(config.out_dir, 'report.csv')}")
    return 0


def _cmd_fit(args, config: harness.RunConfig) -> int:
    frame = harness.load_population_file(args.data, config)
    areas = harness.load_adjacency(args.adjacency, extra_labels=frame.area_ids)
    basis = adjacency_eigenbasis(areas.adjacency)
    phi = basis.B[areas.index_of(frame.area_ids), :]
    weights = scale_weights(frame.weights)
    seed = config.seed
    if args.model == "gaussian":
        chain = fit_gaussian_univariate(frame.z1, frame.X1, phi, weights, config.priors,
                                        config.n_iter, config.n_burn, seed)
    elif args.model == "binomial":
        chain = fit_binomial_univariate(frame.z2, frame.trials, frame.X2, phi, weights,
                                        config.priors, config.n_iter, config.n_burn, seed)
    else:
        chain = fit_multitype(frame.z1, frame.z2, frame.trials, frame.X1, frame.X2, phi,
                              weights, config.priors, config.n_iter, config.n_burn, seed)
    out = _resolve_out(config.out_dir, f"chain_{args.model}.csv")
    chain.save(out)
    print(f"chain with {chain.n_draws} retained draws written to {out}")
    return 0


def _cmd_poststratify(args, config: harness.RunConfig) -> int:
    chain = ModelChain.load(args.chain)
    cells = load_cells(args.cells)
    areas = harness.load_adjacency(args.adjacency,
                                   extra_labels=[c.area_id for c in cells])
    basis = adjacency_eigenbasis(areas.adjacency)
    rng = np.random.default_rng(harness.derive_seed(config.seed, harness._STREAM_PS))
    estimands = {}
    if chain.model_kind in ("gaussian", "multitype"):
        draws = gaussian_poststrat(chain, cells, areas, basis, rng)
        estimands["gaussian"] = [summarize(d, args.alpha) for d in draws]
    if chain.model_kind in ("binomial", "multitype"):
        draws = binomial_poststrat(chain, cells, areas, basis, rng)
        estimands["bernoulli"] = [summarize(d, args.alpha) for d in draws]
    out = _resolve_out(config.out_dir, "estimates_areas.csv")
    write_estimates(out, estimands)
    print(f"area estimates written to {out}")
    return 0


def _cmd_metrics(args, config: harness.RunConfig) -> int:
    area_order, truths = harness.load_truths(args.truths)
    estimates = harness.load_estimates(args.estimates, area_order)
    report = aggregate_report(
        {k: {n: v for n, v in block.items() if n != "variance"}
         for k, block in estimates.items()},
        truths, alpha=args.alpha)
    out = _resolve_out(config.out_dir, "report.csv")
    report.write(out)
    for row in report.rows:
        print(f"{row.method:11s} {row.response:9s} mse={row.mse:.6g} "
              f"ratio={row.ratio_to_ht:.4g} is={row.interval_score:.6g} "
              f"cr={row.coverage:.4g}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args, extras = parser.parse_known_args(argv)
    try:
        config = _collect_config(args, extras)
        if args.command == "synth":
            return _cmd_synth(config)
        if args.command == "simulate":
            return _cmd_simulate(config)
        if args.command == "fit":
            return _cmd_fit(args, config)
        if args.command == "poststratify":
            return _cmd_poststratify(args, config)
        if args.command == "metrics":
            return _cmd_metrics(args, config)
        raise ValueError(f"unknown command {args.command!r}")
    except Exception as err:  # one-line diagnostic, nonzero exit
        print(f"mtsae {args.command}: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
