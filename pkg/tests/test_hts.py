from collections import Counter

import numpy as np
import pytest

from tsrt.clockmodel import LocalClock
from tsrt.engine import Message, MessageKind, SimConfig, Simulator
from tsrt.hts import CorrectionMode, HtsProtocol, Phase, simulate_tsrt
from tsrt.topology import CONTROL_CHANNEL, NetworkGraph, linear_network, random_connected, star_network
from tsrt.treebuild import TreeState, build_tree


def star_setup(k=4, offsets=None, mode="corrected", **cfg):
    g = star_network(k)
    offsets = offsets if offsets is not None else [0.0] + [1e-3 * i for i in range(1, k + 1)]
    sim = Simulator(g, SimConfig(**cfg), clocks=[LocalClock(o) for o in offsets])
    tree = TreeState.from_parents([None] + [0] * k)
    return sim, HtsProtocol(sim, tree, mode=mode)


def test_leaf_reference_is_noop():
    sim = Simulator(linear_network(0))
    proto = HtsProtocol(sim, TreeState.from_parents([None]))
    proto.start_sync(0)
    assert sim.trace.sends() == []
    assert "no children" in sim.trace.of_kind("note")[0].detail


def test_one_beacon_broadcast_recorded_by_all():
    sim, proto = star_setup()
    proto.round = 0
    proto.start_sync(0)
    assert len(sim.trace.sends(MessageKind.SYN_BEGIN)) == 1
    assert sim.listening[0] == sim.channels.of(0)
    sim.run_until(0.0101)
    for child in range(1, 5):
        assert proto.state[child].recorded_t2prime is not None


def test_designated_child_uniform():
    sim, proto = star_setup()
    proto.round = 0
    picks = Counter()
    for _ in range(10_000):
        proto.start_sync(0)
        picks[proto.state[0].designated_child] += 1
    for child in range(1, 5):
        assert abs(picks[child] / 10_000 - 0.25) <= 0.02


def test_non_designated_sends_nothing():
    sim, proto = star_setup()
    proto.round = 0
    proto.start_sync(0)
    chosen = proto.state[0].designated_child
    sim.run()
    senders = {r.node for r in sim.trace.sends()}
    assert senders == {0, chosen}


def test_designated_t2_matches_siblings_up_to_offsets():
    offsets = [0.0, 2e-3, -1e-3, 4e-3, 7e-3]
    sim, proto = star_setup(offsets=offsets)
    proto.start_round()
    sim.run()
    reply = sim.trace.sends(MessageKind.REPLY)[0].message
    c = reply.src
    t2 = reply.stamps["t2"]
    # all children heard the beacon at the same true instant
    for child in range(1, 5):
        assert proto.state[child].t2prime[1] - offsets[child] == pytest.approx(t2 - offsets[c], abs=1e-15)


def test_reply_lost_timer_aborts_round():
    sim, proto = star_setup()
    sim.on(MessageKind.REPLY, lambda node, msg: None)
    proto.start_round()
    sim.run()
    assert len(sim.trace.of_kind("timer")) == 1
    assert sim.listening[0] == CONTROL_CHANNEL
    assert sim.trace.sends(MessageKind.OFFSET_BCAST) == []
    assert any("aborted" in r.detail for r in sim.trace.of_kind("note"))
    assert all(proto.state[u].phase is not Phase.SYNCHRONIZED for u in range(1, 5))


def test_reply_after_timer_ignored():
    sim, proto = star_setup()
    proto.round = 0
    proto.start_sync(0)
    st = proto.state[0]
    sim.cancel_timer(st.timer)
    proto._on_timeout(0)
    late = Message(MessageKind.REPLY, st.designated_child, sim.channels.of(0),
                   {"t1": 0.0, "t2": 0.0, "t3": 0.0}, dest=0, round=0, beacon=1)
    proto.handle_reply(0, late)
    assert sim.trace.sends(MessageKind.OFFSET_BCAST) == []


def test_reply_substitution_example():
    # RN clock reads 25 at true time 0, so t4 = 25
    g = star_network(1)
    sim = Simulator(g, clocks=[LocalClock(25.0), LocalClock()])
    proto = HtsProtocol(sim, TreeState.from_parents([None, 0]))
    proto.round = 0
    st = proto.state[0]
    st.designated_child = 1
    st.beacon = 1
    st.t1 = {1: 0.0}
    st.phase = Phase.AWAITING_REPLY
    st.timer = sim.set_timer(0, 1.0)
    proto.handle_reply(0, Message(MessageKind.REPLY, 1, sim.channels.of(0),
                                  {"t1": 0.0, "t2": 15.0, "t3": 20.0}, dest=0, round=0, beacon=1))
    bcast = sim.trace.sends(MessageKind.OFFSET_BCAST)[0].message
    assert bcast.stamps == {"t2": 15.0, "delta": 5.0, "d": 10.0}


@pytest.mark.parametrize("mode", list(CorrectionMode))
def test_offset_broadcast_null_correction(mode):
    sim, proto = star_setup(offsets=[0.0] * 5, mode=mode)
    proto.round = 0
    st = proto.state[2]
    st.round = 0
    st.phase = Phase.AWAITING_OFFSET
    st.t2prime = {1: 3.0}
    before = sim.clocks[2]
    msg = Message(MessageKind.OFFSET_BCAST, 0, stamps={"t2": 3.0, "delta": 0.0, "d": 0.0},
                  designated=1, round=0, beacons=(1,))
    proto.handle_offset_bcast(2, msg)
    assert sim.local_now(2) == pytest.approx(0.0)
    assert sim.clocks[2].offset == before.offset


def test_offset_without_t2prime_ignored():
    sim, proto = star_setup()
    proto.round = 0
    msg = Message(MessageKind.OFFSET_BCAST, 0, stamps={"t2": 3.0, "delta": 0.0, "d": 0.0},
                  designated=1, round=0, beacons=(1,))
    proto.handle_offset_bcast(3, msg)
    assert sim.trace.of_kind("correct") == []


def test_star_corrected_exact():
    offsets = [1e-3, -4e-3, 2e-3, 9e-3, 3e-3]
    sim, proto = star_setup(offsets=offsets)
    report = proto.run_network_sync()
    assert report.max_abs_error < 1e-9
    assert report.all_synchronized


def test_star_literal_mode_bias():
    offsets = [1e-3, -4e-3, 2e-3, 9e-3, 3e-3]
    sim, proto = star_setup(offsets=offsets, mode="paper")
    report = proto.run_network_sync()
    c = proto.domains[0].designated
    # symbolic: delta = o_c - o_rn, residual = d + delta for every child
    expected = 10e-3 + (offsets[c] - offsets[0])
    for e in report.nodes:
        assert e.error == pytest.approx(expected, abs=1e-12)


def test_single_node_network_empty_report():
    report, _, _ = simulate_tsrt(linear_network(0))
    assert len(report) == 0


def test_linear_corrected_exact_every_level():
    rng = np.random.default_rng(1)
    clocks = [LocalClock(float(o)) for o in rng.normal(0, 5e-3, 6)]
    report, _, _ = simulate_tsrt(linear_network(5), clocks=clocks)
    for level, entries in report.by_level().items():
        assert max(e.abs_error for e in entries) < 1e-9


def test_linear_literal_mode_hop_residual():
    rng = np.random.default_rng(2)
    offsets = rng.normal(0, 5e-3, 6)
    d = 10e-3
    report, sim, tree = simulate_tsrt(linear_network(5, d), clocks=[LocalClock(float(o)) for o in offsets],
                                      mode="paper")
    corrected = [offsets[0]]
    for k in range(1, 6):
        delta_k = offsets[k] - corrected[k - 1]
        corrected.append(corrected[k - 1] + delta_k + d)
    for e in report.nodes:
        assert e.error == pytest.approx(corrected[e.node] - offsets[0], abs=1e-12)


def test_error_accumulates_with_depth():
    stds = []
    per_level = {k: [] for k in range(1, 6)}
    for seed in range(200):
        rng = np.random.default_rng(seed + 10_000)
        clocks = [LocalClock(float(o)) for o in rng.normal(0, 5e-3, 6)]
        report, _, _ = simulate_tsrt(linear_network(5), SimConfig(seed=seed, jitter_std=1e-4), clocks=clocks)
        for e in report.nodes:
            per_level[e.level].append(e.error)
    stds = [np.std(per_level[k]) for k in range(1, 6)]
    assert all(b >= a for a, b in zip(stds, stds[1:])), stds


@pytest.mark.parametrize("k", range(1, 21))
def test_three_messages_per_domain(k):
    sim, proto = star_setup(k, offsets=[0.0] * (k + 1))
    report = proto.run_network_sync()
    assert report.protocol_messages == 3
    assert report.message_counts == {"syn_begin": 1, "reply": 1, "offset_bcast": 1}


def test_common_instant():
    g = star_network(8)
    sim = Simulator(g, clocks=[LocalClock(1e-3 * i) for i in range(9)])
    proto = HtsProtocol(sim, TreeState.from_parents([None] + [0] * 8))
    proto.run_network_sync()
    arrivals = [r.time for r in sim.trace.of_kind("deliver") if r.message.kind is MessageKind.SYN_BEGIN]
    assert len(arrivals) == 8 and max(arrivals) - min(arrivals) == 0.0


def test_only_designated_uses_clock_channel_and_levels_ordered():
    for seed in range(15):
        g = random_connected(20, seed, extra_edge_prob=0.2)
        rng = np.random.default_rng(seed)
        clocks = [LocalClock(float(o)) for o in rng.normal(0, 1e-3, 20)]
        report, sim, tree = simulate_tsrt(g, SimConfig(seed=seed, backoff_max=2e-3, jitter_std=1e-5),
                                          clocks=clocks, n_beacons=2)
        designated = {(r.message.src, r.message.designated) for r in sim.trace.sends(MessageKind.SYN_BEGIN)}
        for r in sim.trace.sends():
            if r.message.channel != CONTROL_CHANNEL:
                assert r.message.kind is MessageKind.REPLY
                assert (r.message.dest, r.node) in designated
        synced = {}
        for r in sim.trace.of_kind("note"):
            if r.detail == "synchronized":
                synced.setdefault(r.node, r.time)
        for u, t in synced.items():
            parent = tree[u].parent
            if parent != tree.root:
                assert t >= synced[parent]
        assert report.all_synchronized


def test_multi_beacon_message_count():
    g = star_network(5)
    sim = Simulator(g)
    proto = HtsProtocol(sim, build_tree(g), n_beacons=4)
    report = proto.run_network_sync()
    assert report.message_counts == {"syn_begin": 4, "reply": 4, "offset_bcast": 1}


def test_multi_beacon_averaging_reduces_error():
    def spread(n):
        errs = []
        for seed in range(120):
            rng = np.random.default_rng(seed)
            clocks = [LocalClock(float(o)) for o in rng.normal(0, 1e-3, 5)]
            report, _, _ = simulate_tsrt(star_network(4), SimConfig(seed=seed, jitter_std=1e-4),
                                         clocks=clocks, n_beacons=n, spacing=0.01)
            errs += [e.error for e in report.nodes]
        return np.std(errs)

    assert spread(8) < 0.6 * spread(1)


def test_repeated_rounds_stay_synchronized():
    clocks = [LocalClock(0.0, 0.0)] + [LocalClock(1e-3 * i, 1e-6 * i) for i in range(1, 6)]
    report, sim, _ = simulate_tsrt(linear_network(5), clocks=clocks, rounds=3)
    assert report.all_synchronized
    # residual is drift accumulated since each node's last correction
    assert report.max_abs_error < 5e-6 * 1.0


def test_unequal_delays_measured_not_hidden():
    g = NetworkGraph.from_edges(3, [(0, 1, 10e-3), (0, 2, 30e-3)])
    sim = Simulator(g)
    proto = HtsProtocol(sim, TreeState.from_parents([None, 0, 0]))
    report = proto.run_network_sync()
    errs = sorted(e.abs_error for e in report.nodes)
    assert errs[0] < 1e-12 and errs[1] == pytest.approx(20e-3, abs=1e-9)
