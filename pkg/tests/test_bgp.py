import pytest
from hypothesis import given, settings, strategies as st

from bgpdes.bgp import (DelayModel, Fabric, Network, Router, UnreachableError, UpdateMessage,
                        better, convergence_lower_bound, decision, useful_entries)
from bgpdes.engine import EventKind
from bgpdes.experiments import drive_scenario
from bgpdes.topology import Graph, TopologyError, generate_glp, shortest_path_matrix

from conftest import cycle_graph, path_graph


class Capture(Fabric):
    def __init__(self):
        self.events = []
        self.drops = 0

    def post(self, e):
        self.events.append(e)

    def emitted(self, router, modified, t):
        pass

    def dropped(self, router, msg):
        self.drops += 1

    def deliveries(self):
        return [e for e in self.events if e.kind == EventKind.UPDATE_DELIVERY]


def router(rid=1, n=5, nbrs=(2, 3), mrai=0):
    r = Router(rid, n, nbrs, mrai, DelayModel.fixed(1), Capture())
    for p in nbrs:
        r.open_silently(p)
    return r


def fixed_point_oracle(g):
    """Expected next hop: lowest-id neighbour one hop closer to the destination."""
    d = shortest_path_matrix(g)
    return d, {(u, v): min(w for w in g.adj[u] if d[w, v] == d[u, v] - 1)
               for u in g.vertices for v in g.vertices if u != v}


# --- decision rule

def test_decision_takes_candidate_when_empty():
    assert decision(None, [2, 4], 1) == [2, 4]


def test_decision_rejects_loop():
    assert decision([3, 4], [2, 1, 4], 1) == [3, 4]
    assert decision(None, [2, 1], 1) is None


def test_decision_tie_breaks_on_next_hop():
    assert decision([3, 4], [2, 4], 1) == [2, 4]
    assert decision([2, 4], [3, 4], 1) == [2, 4]
    assert decision([2, 5, 4], [3, 4], 1) == [3, 4]


def test_better_is_strict():
    assert not better((2, 4), (2, 4))
    assert better((), (2,))


# --- useful entries

def bits(*xs):
    return sum(1 << x for x in xs)


def test_useful_entries_examples():
    assert useful_entries(bits(1, 3, 4), bits(3, 4), ()) == {1}
    assert useful_entries(bits(1, 3, 4), bits(1, 3, 4), ()) == set()
    assert useful_entries(bits(1, 3, 4), bits(*range(10)), {3, 4}) == {3, 4}


@given(st.sets(st.integers(0, 30)), st.sets(st.integers(0, 30)), st.sets(st.integers(0, 30)))
def test_useful_entries_matches_set_algebra(local, peer, mod):
    got = useful_entries(bits(*local), bits(*peer), mod)
    assert got == {d for d in local if d not in peer or d in mod}


# --- update processing

def test_process_announcement_installs_prefixed_path():
    r = router()
    msg = UpdateMessage.build(2, 1, [(4, (4,))])
    assert r.process_update(msg) == {4}
    assert r.rib[4] == (2, 4)
    assert r.forwarding_lookup(4) == 2
    r.check_invariants()


def test_process_withdrawal_removes_route():
    r = router()
    r.process_update(UpdateMessage.build(2, 1, [(4, (4,))]))
    assert r.process_update(UpdateMessage.build(2, 1, withdrawals=[4])) == {4}
    assert r.rib[4] is None
    with pytest.raises(UnreachableError):
        r.forwarding_lookup(4)
    r.check_invariants()


def test_process_looped_announcement_rejected():
    r = router()
    assert r.process_update(UpdateMessage.build(2, 1, [(4, (1, 4))])) == set()
    assert r.rib[4] is None


def test_forwarding_lookup_self():
    assert router().forwarding_lookup(1) == 1


def test_update_on_idle_session_dropped():
    r = Router(1, 3, (2,), 0, DelayModel.fixed(1), Capture())
    r.receive_update(UpdateMessage.build(2, 1, [(2, ())]), 0)
    assert r.rib[2] is None and r.fabric.drops == 1


def test_message_size_counts_installed_path():
    msg = UpdateMessage.build(2, 1, [(2, ()), (4, (3, 4))], [5])
    assert msg.entry_count == 3
    assert msg.size_integers == 1 + 3 + 1


# --- emission and MRAI

def test_emit_mrai_zero_one_message_per_peer():
    r = router(nbrs=(2, 3))
    for d, path in ((4, (4,)), (5, (5,))):
        r.process_update(UpdateMessage.build(2, 1, [(d, path)]))
    r.emit_updates([1, 4, 5], 0)
    dl = r.fabric.deliveries()
    assert sorted(e.target for e in dl) == [2, 3]
    assert all(e.payload.entry_count == 3 and e.timestamp == 1 for e in dl)


def test_emit_nothing_for_empty_batch():
    r = router()
    r.emit_updates([], 0)
    assert r.fabric.events == []


def test_mrai_defers_second_change_to_flush():
    r = router(nbrs=(2,), mrai=30000)
    r.emit_updates([1], 0)
    r.emit_updates([1], 10)
    assert len(r.fabric.deliveries()) == 1
    flushes = [e for e in r.fabric.events if e.kind == EventKind.MRAI_FLUSH]
    assert [e.timestamp for e in flushes] == [30000]
    r.flush(2, 30000)
    dl = r.fabric.deliveries()
    assert len(dl) == 2 and dl[1].timestamp == 30001


def test_convergence_lower_bound():
    assert convergence_lower_bound(3, 500) == 0
    assert convergence_lower_bound(10, 30000) == 210000
    assert convergence_lower_bound(50, 0) == 0
    with pytest.raises(ValueError):
        convergence_lower_bound(2, 10)


def test_delay_model_hash_in_range_and_stable():
    dm = DelayModel(1, 100, seed=3)
    xs = [dm(1, 2, s) for s in range(500)]
    assert min(xs) >= 1 and max(xs) <= 100 and len(set(xs)) > 50
    assert xs == [DelayModel(1, 100, seed=3)(1, 2, s) for s in range(500)]
    assert DelayModel.fixed(5).min_delay == 5


# --- whole-network behaviour

def test_two_node_session_establish():
    net = Network(Graph(2, [(1, 2)]))
    net.schedule_session((1, 2), 0)
    net.run()
    # one self-route each way, then each echoes the learned route back
    # (rejected as a loop); no split horizon
    assert net.ledger.totals["messages"] == 4 and net.ledger.totals["entries"] == 4
    assert net.ledger.dropped_events == 0
    assert net.routers[1].rib[2] == (2,) and net.routers[2].rib[1] == (1,)


def test_reestablish_is_noop():
    net = Network(Graph(2, [(1, 2)]))
    net.schedule_session((1, 2), 0)
    net.run()
    before = net.ledger.totals["messages"]
    net.schedule_session((1, 2), net.now + 1)
    net.run()
    assert net.ledger.totals["messages"] == before


def test_session_over_non_edge_rejected():
    net = Network(path_graph(3))
    with pytest.raises(TopologyError):
        net.schedule_session((1, 3), 0)


def test_three_node_path_relays():
    net = Network(path_graph(3))
    drive_scenario(net, 1)
    assert net.routers[1].rib[3] == (2, 3)
    assert net.routers[2].rib[1] == (1,) and net.routers[2].rib[3] == (3,)


@pytest.mark.parametrize("scenario", [1, 2, 3])
def test_fixed_point_matches_oracle(glp100, scenario):
    delay = DelayModel(1, 100, seed=1) if scenario == 2 else None
    net = Network(glp100, delay=delay)
    drive_scenario(net, scenario)
    d, nh = fixed_point_oracle(glp100)
    for u in glp100.vertices:
        r = net.routers[u]
        r.check_invariants()
        for v in glp100.vertices:
            if u != v:
                assert len(r.rib[v]) == d[u, v]
                assert r.forwarding_lookup(v) == nh[(u, v)]


def test_hop_by_hop_walk_reaches_destination(glp100):
    net = Network(glp100)
    drive_scenario(net, 1)
    d = shortest_path_matrix(glp100)
    for u in (1, 17, 50, 99):
        for v in glp100.vertices:
            at, hops = u, 0
            while at != v:
                at = net.routers[at].forwarding_lookup(v)
                hops += 1
            assert hops == d[u, v]


@settings(max_examples=15, deadline=None)
@given(st.integers(5, 40), st.integers(0, 1000))
def test_scenario_one_entries_closed_form(n, seed):
    g = generate_glp(n, seed=seed)
    net = Network(g)
    drive_scenario(net, 1)
    assert net.ledger.totals["entries"] == 2 * g.m * g.n


@settings(max_examples=10, deadline=None)
@given(st.integers(5, 30), st.integers(0, 1000))
def test_scenarios_reach_same_ribs(n, seed):
    g = generate_glp(n, seed=seed)
    ribs = []
    for sc, delay in ((1, None), (2, DelayModel(1, 100, seed)), (3, None)):
        net = Network(g, delay=delay)
        drive_scenario(net, sc)
        ribs.append(net.ribs())
    assert ribs[0] == ribs[1] == ribs[2]


def test_fail_only_edge_drops_destinations():
    net = Network(Graph(2, [(1, 2)]))
    drive_scenario(net, 1)
    net.schedule_link_failure((1, 2), net.now + 1)
    net.run()
    assert net.routers[1].rib[2] is None and net.routers[2].rib[1] is None


def test_fail_cycle_edge_keeps_reachability_longer_paths():
    g = cycle_graph(4)
    net = Network(g)
    drive_scenario(net, 1)
    net.schedule_link_failure((1, 2), net.now + 1)
    net.run()
    assert net.routers[1].rib[2] == (4, 3, 2)
    for u in g.vertices:
        for v in g.vertices:
            r = net.routers[u].rib[v]
            assert r is not None
            hops = (u,) + r
            assert all({a, b} != {1, 2} for a, b in zip(hops, hops[1:]))


def test_fail_then_repair_restores_ribs(glp100):
    ref = Network(glp100)
    drive_scenario(ref, 1)
    net = Network(glp100)
    drive_scenario(net, 1)
    edge = glp100.edges[5]
    net.schedule_link_failure(edge, net.now + 1)
    net.run()
    net.schedule_link_repair(edge, net.now + 1)
    net.run()
    assert net.ribs() == ref.ribs()


def test_unknown_edge_failure_rejected():
    net = Network(path_graph(3))
    with pytest.raises(TopologyError):
        net.schedule_link_failure((1, 3), 0)


def test_negative_mrai_rejected():
    with pytest.raises(ValueError):
        Network(path_graph(3), mrai=-1)
