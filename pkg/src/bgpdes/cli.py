"""Command-line entry point: ``simulate``, ``partition`` and ``gen-glp``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import fields
from pathlib import Path
from typing import List, Optional

from .experiments import ConfigError, ExperimentConfig, load_config, run_experiment
from .partition import (BipartitionProblem, InfeasibleError, Objective, SolverCapError,
                        bipartition, recursive_bisect)
from .topology import (PartitionAssignment, TopologyError, generate_glp, load_edge_list,
                       load_weights, partition_text)

log = logging.getLogger("bgpdes")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    # every config key doubles as a flag; explicit flags win over the file
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        p.add_argument(flag, dest=f.name, default=None, metavar=f.name.upper())


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bgpdes", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario, optionally partitioned")
    sim.add_argument("--config", type=Path, help="flat key = value file")
    sim.add_argument("--out", type=Path, help="directory for results.csv and summary.json")
    _add_config_flags(sim)

    part = sub.add_parser("partition", help="bipartition a weighted graph")
    part.add_argument("--graph", type=Path, required=True)
    part.add_argument("--weights", type=Path)
    part.add_argument("--objective", choices=[o.value for o in Objective], default="mip1")
    part.add_argument("--epsilon", type=float)
    part.add_argument("--solver", choices=["exact", "heuristic"], default="exact")
    part.add_argument("--parts", type=int, default=2, help="power of two")
    part.add_argument("--seed", type=int, default=0)
    part.add_argument("--out", type=Path)

    glp = sub.add_parser("gen-glp", help="write a GLP topology as an edge list")
    glp.add_argument("--n", type=int, required=True)
    glp.add_argument("--seed", type=int, default=0)
    glp.add_argument("--m", type=float, default=1.13)
    glp.add_argument("--p", type=float, default=0.4695)
    glp.add_argument("--beta", type=float, default=0.6447)
    glp.add_argument("--out", type=Path)
    return ap


def _emit(text: str, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def cmd_simulate(args) -> int:
    values = {}
    if args.config is not None:
        base = load_config(args.config.read_text())
        values = {f.name: getattr(base, f.name) for f in fields(ExperimentConfig)}
    for f in fields(ExperimentConfig):
        v = getattr(args, f.name)
        if v is not None:
            values[f.name] = v
    cfg = ExperimentConfig.from_mapping(values)
    out = run_experiment(cfg)
    if args.out is not None:
        out.write(args.out)
        log.info("wrote %s", args.out)
    else:
        sys.stdout.write(out.csv_text())
    for err in out.summary.get("errors", []):
        print(f"error in stage {err['stage']}: {err['error']}", file=sys.stderr)
    return out.status


def cmd_partition(args) -> int:
    g = load_edge_list(args.graph.read_text())
    weights = load_weights(args.weights.read_text()) if args.weights else None
    k = args.parts
    if k < 2 or k & (k - 1):
        raise ConfigError(f"--parts must be a power of two >= 2, got {k}")
    objective = Objective(args.objective)
    if k == 2:
        sol = bipartition(BipartitionProblem(g, weights, args.epsilon, objective),
                          args.solver, seed=args.seed)
        pa = PartitionAssignment.from_blocks([sol.S, sol.S_bar])
        header = (f"# objective {objective.value} = {sol.objective_value:g} "
                  f"({'optimal' if sol.optimal else 'heuristic'})\n")
    else:
        pa = recursive_bisect(g, weights, int(math.log2(k)), args.epsilon, args.solver,
                              objective, seed=args.seed)
        header = f"# {k} blocks by recursive bisection ({objective.value}, {args.solver})\n"
    _emit(header + partition_text(pa), args.out)
    return 0


def cmd_gen_glp(args) -> int:
    g = generate_glp(args.n, args.m, args.p, args.beta, seed=args.seed)
    _emit(g.edge_list_text(), args.out)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"simulate": cmd_simulate, "partition": cmd_partition,
               "gen-glp": cmd_gen_glp}[args.command]
    try:
        return handler(args)
    except (ConfigError, TopologyError, InfeasibleError, SolverCapError,
            OSError, ValueError) as exc:
        print(f"bgpdes {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
