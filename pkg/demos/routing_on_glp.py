"""
Route propagation on a generated AS-like topology
==================================================

"""

# generate a small GLP graph; the seed makes it reproducible
from bgpdes.topology import generate_glp, shortest_path_matrix
g = generate_glp(150, seed=3)
print(f"{g.n} routers, {len(g.edges)} links, {len(g.edges) / g.n:.2f} links per router")

# a few routers hold most of the links
degrees = sorted((len(g.adj[v]) for v in g.vertices), reverse=True)
print("largest degrees:", degrees[:8])

# scenario 1: all sessions up, every router announces itself at time 0
from bgpdes.bgp import Network
net = Network(g)
net.establish_all_silently()
net.originate_all()
report = net.run()
print(f"converged at tick {report.clock} after {report.events} events")

# the ledger counts what went over the wire
t = net.ledger.totals
print(f"{t['messages']} update messages carrying {t['entries']} entries")
print(f"entries / (2 |E| n) = {t['entries'] / (2 * len(g.edges) * g.n):.3f}")

# with equal delays the chosen paths are shortest paths
from bgpdes.metrics import stretch, table_stats
ribs = net.ribs()
s = stretch(shortest_path_matrix(g), ribs)
print(f"max stretch {s.multiplicative_max}, unreachable pairs {s.unreachable}")
stats = table_stats(ribs)
print(f"{stats['entries_total']} table entries in total, n^2 = {g.n ** 2}")

# look at one route: the path router 150 uses to reach router 1
print("150 -> 1 via", ribs[150][1])

# scenario 2: random per-message delays explore more transient paths
from bgpdes.bgp import DelayModel
noisy = Network(g, delay=DelayModel(1, 20, seed=5))
noisy.establish_all_silently()
noisy.originate_all()
noisy.run()
print(f"random delays: {noisy.ledger.totals['entries']} entries "
      f"({noisy.ledger.totals['entries'] / t['entries']:.2f}x scenario 1)")
