"""
Splitting a BGP simulation across logical processes
====================================================

"""

# a topology and a sequential reference run
from bgpdes.topology import generate_glp, boundary
from bgpdes.experiments import ExperimentConfig, run_sequential, run_partitioned
g = generate_glp(120, seed=11)
cfg = ExperimentConfig(n=g.n, scenario=1)
ref = run_sequential(g, cfg)
print(f"sequential: {ref.report.events} events, {ref.ledger.totals['entries']} entries")

# weight links by the traffic they carried, routers by how often they changed
from bgpdes.partition import weights_from_ledger, recursive_bisect, Objective
w = weights_from_ledger(ref.ledger, g)

# two bisection levels give four blocks; minimise the weighted cut
pa = recursive_bisect(g, w, 2, solver="heuristic", objective=Objective.EDGE_CUT)
bnd = boundary(g, pa)
print("block sizes:", [len(b) for b in pa.blocks()])
print(f"{len(bnd.cut_edges)} of {len(g.edges)} links cross blocks")

# solution A ships whole updates across; solution B ships ids plus ghost syncs
runs = {sol: run_partitioned(g, pa, cfg, sol) for sol in ("A", "B")}
for sol, res in runs.items():
    same = res.ribs == ref.ribs
    print(f"solution {sol}: tables match sequential: {same}, "
          f"{res.ledger.nulls} null messages")

# what crossed the partition boundary in each case
from bgpdes.experiments import cross_entries
for sol, res in runs.items():
    print(f"solution {sol}: {cross_entries(res.ledger, sol)} entries crossed")

# the closed-form estimates reproduce those counts from the emission trace
from bgpdes.metrics import solA_external_comm, solB_internal_comm, solB_memory_overhead
trace = ref.ledger.emissions
print("formula A:", solA_external_comm(trace, bnd))
print("formula B:", solB_internal_comm(trace, bnd))
print("ghost storage (integers):", solB_memory_overhead(g, pa))
