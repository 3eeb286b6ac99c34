"""Experiment orchestration: configuration, Scenarios 1-3, and the
reference-run -> weights -> bipartition -> distributed-run workflow."""

from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .bgp import DelayModel, Network
from .engine import DEFAULT_EVENT_LIMIT, SimulationReport, gc_paused
from .metrics import (DEFAULT_LATENCY_MS, MetricsLedger, overhead_time, solA_external_comm,
                      solB_internal_comm, solB_memory_overhead, table_stats)
from .partition import Objective, recursive_bisect, weights_from_ledger
from .pdes import DistributedSimulation, NullPolicy, Solution
from .topology import (Graph, PartitionAssignment, boundary, generate_glp, load_edge_list,
                       load_partition)

log = logging.getLogger(__name__)

CSV_COLUMNS = ["scenario", "n", "edges", "K", "solution", "partitioner", "optimal", "seed",
               "updates", "entries", "size_integers", "cross_messages", "cross_entries",
               "cross_fraction", "ghost_sync_entries", "solA_formula", "solB_formula",
               "memB_formula", "esize_avg", "overhead_seconds", "sim_events", "wall_ms"]

SCENARIO2_DELAY = (1, 100)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    topology: str = "glp"  # "glp" or a path to an edge-list file
    n: int = 200
    m: float = 1.13
    p: float = 0.4695
    beta: float = 0.6447
    scenario: int = 1
    mrai: int = 0
    delay: str = ""  # "fixed:T" or "uniform:LO,HI"; empty = scenario default
    partitions: int = 1
    solution: str = "none"  # A, B or none
    partitioner: str = "exact"  # exact, heuristic or file:PATH
    exact_limit: int = 24  # largest block the "exact" partitioner solves exactly
    epsilon: Optional[float] = None
    seed: int = 0
    per_entry_latency_ms: float = DEFAULT_LATENCY_MS
    limit: int = DEFAULT_EVENT_LIMIT
    workers: int = 1
    null_policy: str = NullPolicy.ON_DEMAND.value
    restarts: int = 8

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.scenario not in (1, 2, 3):
            raise ConfigError(f"scenario must be 1, 2 or 3, got {self.scenario}")
        if self.mrai < 0:
            raise ConfigError(f"mrai must be >= 0, got {self.mrai}")
        k = self.partitions
        if k < 1 or k & (k - 1):
            raise ConfigError(f"partitions must be a power of two, got {k}")
        if self.solution not in ("A", "B", "none"):
            raise ConfigError(f"solution must be A, B or none, got {self.solution!r}")
        if k > 1 and self.solution == "none":
            raise ConfigError("a partitioned run needs solution A or B")
        if not (self.partitioner in ("exact", "heuristic") or self.partitioner.startswith("file:")):
            raise ConfigError(f"unknown partitioner {self.partitioner!r}")
        delay = self.delay_model()
        if self.scenario == 2 and not delay.is_random:
            raise ConfigError("scenario 2 needs a uniform delay model with min < max")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        NullPolicy(self.null_policy)

    def delay_model(self) -> DelayModel:
        spec = self.delay.strip()
        if not spec:
            if self.scenario == 2:
                return DelayModel(*SCENARIO2_DELAY, seed=self.seed)
            return DelayModel.fixed(1)
        kind, _, args = spec.partition(":")
        try:
            vals = [int(x) for x in args.split(",")]
            if kind == "fixed" and len(vals) == 1:
                return DelayModel.fixed(vals[0])
            if kind == "uniform" and len(vals) == 2:
                return DelayModel(vals[0], vals[1], seed=self.seed)
        except ValueError as exc:
            raise ConfigError(f"bad delay {spec!r}: {exc}") from None
        raise ConfigError(f"bad delay {spec!r}; use fixed:T or uniform:LO,HI")

    @classmethod
    def from_mapping(cls, values: Dict[str, str]) -> "ExperimentConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, raw in values.items():
            key = key.strip().replace("-", "_")
            if key not in kinds:
                raise ConfigError(f"unknown config key {key!r}")
            kw[key] = _coerce(key, kinds[key], raw)
        return cls(**kw)

    def replace(self, **changes) -> "ExperimentConfig":
        return ExperimentConfig(**{**asdict(self), **changes})


def _coerce(key: str, kind: str, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "Optional[float]":
            return None if raw.lower() in ("", "none", "default") else float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None
    return raw


def load_config(text: str) -> ExperimentConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string("[experiment]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    return ExperimentConfig.from_mapping(dict(cp["experiment"]))


def build_graph(cfg: ExperimentConfig) -> Graph:
    if cfg.topology == "glp":
        return generate_glp(cfg.n, cfg.m, cfg.p, cfg.beta, seed=cfg.seed)
    return load_edge_list(Path(cfg.topology).read_text())


# ---------------------------------------------------------------- scenarios

def _scenario3(sim) -> SimulationReport:
    g = sim.graph
    report = sim.run()
    active = set()
    for v in g.vertices:
        for u in g.adj[v]:
            if u in active:
                sim.schedule_session((u, v), sim.now + 1)
                report = sim.run()
        active.add(v)
    return report


def drive_scenario(sim, scenario: int) -> SimulationReport:
    """Run one scenario on a freshly built sequential or distributed simulation.

    Scenarios 1 and 2 differ only in the delay model the simulation was built
    with: all sessions come up silently at t=0, then every router announces
    itself. Scenario 3 activates routers by increasing id and brings up each
    session to an already active neighbour separately, running to quiescence
    in between.
    """
    if scenario in (1, 2):
        sim.establish_all_silently()
        sim.originate_all(0)
        return sim.run()
    if scenario == 3:
        # hundreds of short phases; keep the collector off across all of them
        with gc_paused():
            return _scenario3(sim)
    raise ValueError(f"unknown scenario {scenario}")


@dataclass
class RunResult:
    report: SimulationReport
    ledger: MetricsLedger
    ribs: list
    wall_ms: float
    pa: Optional[PartitionAssignment] = None
    solution: str = "none"


def run_sequential(g: Graph, cfg: ExperimentConfig) -> RunResult:
    t0 = time.perf_counter()
    net = Network(g, cfg.mrai, cfg.delay_model(), cfg.limit)
    rep = drive_scenario(net, cfg.scenario)
    return RunResult(rep, net.ledger, net.ribs(), (time.perf_counter() - t0) * 1000)


def run_partitioned(g: Graph, pa: PartitionAssignment, cfg: ExperimentConfig,
                    solution: str) -> RunResult:
    t0 = time.perf_counter()
    sim = DistributedSimulation(g, pa, Solution(solution), cfg.mrai, cfg.delay_model(),
                                NullPolicy(cfg.null_policy), cfg.workers, cfg.limit)
    rep = drive_scenario(sim, cfg.scenario)
    return RunResult(rep, sim.ledger, sim.ribs(), (time.perf_counter() - t0) * 1000,
                     pa, solution)


def csv_row(g: Graph, cfg: ExperimentConfig, res: RunResult, partitioner: str = "",
            optimal: Optional[bool] = None) -> Dict[str, object]:
    led = res.ledger
    tot = led.totals
    esize = led.esize
    row = {"scenario": cfg.scenario, "n": g.n, "edges": g.m, "seed": cfg.seed,
           "updates": tot["messages"], "entries": tot["entries"],
           "size_integers": tot["size_integers"], "esize_avg": round(esize, 6),
           "sim_events": res.report.events, "wall_ms": round(res.wall_ms, 3)}
    if res.pa is None or res.pa.K == 1:
        row.update(K=1, solution="none", partitioner="", optimal="",
                   cross_messages=0, cross_entries=0, cross_fraction=0.0,
                   ghost_sync_entries=0, solA_formula=0, solB_formula=0, memB_formula=0,
                   overhead_seconds=0.0)
        return row
    bnd = boundary(g, res.pa)
    cross_total = cross_entries(led, res.solution)
    row.update(K=res.pa.K, solution=res.solution, partitioner=partitioner,
               optimal="" if optimal is None else int(bool(optimal)),
               cross_messages=led.cross_partition[0], cross_entries=led.cross_partition[1],
               cross_fraction=round(cross_total / tot["entries"], 6) if tot["entries"] else 0.0,
               ghost_sync_entries=led.ghost_sync[1],
               solA_formula=solA_external_comm(led.emissions, bnd),
               solB_formula=solB_internal_comm(led.emissions, bnd),
               memB_formula=round(solB_memory_overhead(g, res.pa, esize), 6),
               overhead_seconds=round(
                   overhead_time(cross_total, cfg.per_entry_latency_ms).total_seconds, 6))
    return row


def cross_entries(ledger: MetricsLedger, solution: str) -> int:
    """Entries that had to cross partitions: update payloads for A,
    ghost-coherence payloads for B."""
    if solution == "B":
        return ledger.ghost_sync[1] + ledger.cross_partition[1]
    return ledger.cross_partition[1]


@dataclass
class RunOutput:
    csv_rows: List[Dict[str, object]] = field(default_factory=list)
    summary: Dict[str, object] = field(default_factory=dict)
    status: int = 0

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in self.csv_rows:
            w.writerow(row)
        return buf.getvalue()

    def summary_text(self) -> str:
        return json.dumps(self.summary, indent=2, sort_keys=True, default=str) + "\n"

    def write(self, out_dir: Path) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "results.csv").write_text(self.csv_text())
        (out_dir / "summary.json").write_text(self.summary_text())


def _sequential_output(cfg: ExperimentConfig) -> RunOutput:
    out = RunOutput(summary={"config": asdict(cfg)})
    try:
        g = build_graph(cfg)
    except Exception as exc:
        return _fail(out, "topology", exc)
    try:
        res = run_sequential(g, cfg)
    except Exception as exc:
        return _fail(out, "simulation", exc)
    out.csv_rows.append(csv_row(g, cfg, res))
    out.summary.update(totals=res.ledger.summary(), report=res.report.as_dict(),
                       tables={k: v for k, v in table_stats(res.ribs).items()
                               if k != "entries_per_router"})
    return out


def _fail(out: RunOutput, stage: str, exc: Exception) -> RunOutput:
    log.error("stage %s failed: %s", stage, exc)
    out.status = 1
    out.summary.setdefault("errors", []).append({"stage": stage, "error": f"{type(exc).__name__}: {exc}"})
    return out


def run_experiment(cfg: ExperimentConfig) -> RunOutput:
    if cfg.partitions > 1:
        return partition_workflow(cfg)
    return _sequential_output(cfg)


def scenario1(cfg: ExperimentConfig) -> RunOutput:
    return run_experiment(cfg.replace(scenario=1))


def scenario2(cfg: ExperimentConfig) -> RunOutput:
    return run_experiment(cfg.replace(scenario=2))


def scenario3(cfg: ExperimentConfig) -> RunOutput:
    return run_experiment(cfg.replace(scenario=3))


def choose_partition(g: Graph, cfg: ExperimentConfig, ref: MetricsLedger,
                     objective: Objective) -> Tuple[PartitionAssignment, str, bool]:
    """Returns (assignment, partitioner label, certified optimal)."""
    if cfg.partitioner.startswith("file:"):
        pa = load_partition(Path(cfg.partitioner[5:]).read_text())
        pa.check_covers(g)
        return pa, "file", False
    weights = weights_from_ledger(ref, g)
    q = int(math.log2(cfg.partitions))
    largest = g.n  # first level bisects the whole graph
    exact = cfg.partitioner == "exact" and largest <= cfg.exact_limit
    solver = "exact" if exact else "heuristic"
    if cfg.partitioner == "exact" and not exact:
        log.warning("n=%d exceeds the exact limit %d; using the heuristic", g.n, cfg.exact_limit)
    pa = recursive_bisect(g, weights, q, cfg.epsilon, solver, objective, seed=cfg.seed,
                          restarts=cfg.restarts)
    return pa, solver, exact


def partition_workflow(cfg: ExperimentConfig) -> RunOutput:
    """Reference run, ledger weights, bipartition(s), partitioned run, CSV row."""
    out = RunOutput(summary={"config": asdict(cfg)})
    if cfg.partitions < 2:
        return _fail(out, "config", ConfigError("the partition workflow needs partitions >= 2"))
    try:
        g = build_graph(cfg)
    except Exception as exc:
        return _fail(out, "topology", exc)
    try:
        ref = run_sequential(g, cfg)
    except Exception as exc:
        return _fail(out, "reference", exc)
    out.csv_rows.append(csv_row(g, cfg, ref))
    out.summary["reference"] = ref.ledger.summary()
    objective = Objective.EDGE_CUT if cfg.solution == "A" else Objective.VERTEX_EXPOSURE
    try:
        pa, label, optimal = choose_partition(g, cfg, ref.ledger, objective)
    except Exception as exc:
        return _fail(out, "partition", exc)
    out.summary["partition"] = {"objective": objective.value, "partitioner": label,
                                "optimal": optimal, "blocks": [len(b) for b in pa.blocks()]}
    try:
        res = run_partitioned(g, pa, cfg, cfg.solution)
    except Exception as exc:
        return _fail(out, "distributed", exc)
    row = csv_row(g, cfg, res, label, optimal)
    out.csv_rows.append(row)
    out.summary["distributed"] = res.ledger.summary()
    out.summary["ribs_match_reference"] = res.ribs == ref.ribs
    out.summary["overhead"] = {"cross_entries": cross_entries(res.ledger, cfg.solution),
                               "per_entry_latency_ms": cfg.per_entry_latency_ms,
                               "seconds": row["overhead_seconds"]}
    if res.ribs != ref.ribs:
        return _fail(out, "verify", AssertionError("distributed RIBs differ from the reference"))
    return out
