"""Packet pool accounting, holder estimation, XOR plan detection and codec."""
import random

import pytest

from nobcr.coding import (
    PacketPool,
    PlanItem,
    QueuedLike,
    ReceptionTable,
    TtlSet,
    decode,
    detect_coding,
    encode,
    mark_gratis,
    receivers_of,
)
from nobcr.model import ConstituentHeader, NeighborView, PacketId, bit, card, from_ids, members


def pid(sn, source=0):
    return PacketId(source, sn)


def header(p, forwarders=0, gratis=False):
    return ConstituentHeader(pid=p, forwarders=forwarders, gratis=gratis, origin_time=0.0)


# --------------------------------------------------------------------------
# PacketPool
# --------------------------------------------------------------------------


def test_first_copy_requires_payload():
    pool = PacketPool(lifetime=2.0)
    with pytest.raises(ValueError):
        pool.record_copy(pid(1), prev_hop=3, now=0.0)
    entry, was_new = pool.record_copy(pid(1), 3, 0.0, payload=0xAB, payload_len=4)
    assert was_new and entry.first_hop == 3 and entry.prev_hops == bit(3)
    assert pid(1) in pool and len(pool) == 1


def test_duplicates_grow_hop_set_once():
    pool = PacketPool(lifetime=2.0)
    pool.record_copy(pid(1), 3, 0.0, payload=1, payload_len=4)
    entry, was_new = pool.record_copy(pid(1), 5, 0.1)
    assert not was_new and entry.prev_hops == from_ids({3, 5})
    assert pool.items == 2
    pool.record_copy(pid(1), 5, 0.2)  # same hop again
    assert pool.items == 2


def test_own_packet_has_no_hops():
    pool = PacketPool(lifetime=2.0)
    entry, was_new = pool.record_copy(pid(1), None, 0.0, payload=9, payload_len=4)
    assert was_new and entry.first_hop is None and entry.prev_hops == 0
    assert pool.items == 0


def test_evict_honours_token():
    pool = PacketPool(lifetime=2.0)
    entry, _ = pool.record_copy(pid(1), 3, 0.0, payload=1, payload_len=4)
    assert not pool.evict(pid(1), token=entry.token + 1)
    assert pid(1) in pool
    assert pool.evict(pid(1), entry.token)
    assert pid(1) not in pool and pool.items == 0
    assert not pool.evict(pid(1), entry.token)  # already gone


def test_items_tracks_total_hop_count():
    rng = random.Random(4)
    pool = PacketPool(lifetime=2.0)
    tokens = {}
    for step in range(3000):
        p = pid(rng.randint(1, 40), source=rng.randint(0, 3))
        if p in pool and rng.random() < 0.2:
            pool.evict(p, tokens[p])
        else:
            entry, _ = pool.record_copy(
                p, rng.randint(0, 30), step * 0.01, payload=1, payload_len=4
            )
            tokens[p] = entry.token
        assert pool.items == sum(card(e.prev_hops) for e in pool.entries.values())


# --------------------------------------------------------------------------
# Holder estimation
# --------------------------------------------------------------------------


def test_receivers_union_advertised_neighbourhoods():
    v = NeighborView(owner=0)
    v.note_hello(1, from_ids({0, 2}), now=0.0, horizon=10.0)
    v.note_hello(3, from_ids({0, 4}), now=0.0, horizon=10.0)
    pool = PacketPool(lifetime=2.0)
    entry, _ = pool.record_copy(pid(1), 1, 0.0, payload=1, payload_len=4)
    assert receivers_of(entry, v) == from_ids({0, 2})
    pool.record_copy(pid(1), 3, 0.1)
    assert receivers_of(entry, v) == from_ids({0, 2, 4})


def test_unknown_hop_counts_only_itself():
    v = NeighborView(owner=0)
    pool = PacketPool(lifetime=2.0)
    entry, _ = pool.record_copy(pid(1), 7, 0.0, payload=1, payload_len=4)
    assert receivers_of(entry, v) == bit(7)


def test_own_relay_adds_own_neighbourhood():
    # after this node itself relays a packet it becomes one of its hops, and
    # its estimate must then include its own current neighbour set
    v = NeighborView(owner=0)
    v.note_hello(1, 0, now=0.0, horizon=10.0)
    v.note_hello(2, 0, now=0.0, horizon=10.0)
    pool = PacketPool(lifetime=2.0)
    entry, _ = pool.record_copy(pid(1), None, 0.0, payload=1, payload_len=4)
    pool.record_copy(pid(1), 0, 0.1)  # own transmission recorded as a hop
    assert receivers_of(entry, v) == from_ids({0, 1, 2})


# --------------------------------------------------------------------------
# TtlSet and ReceptionTable
# --------------------------------------------------------------------------


def test_ttl_set_expires_entries():
    s = TtlSet(ttl=2.0)
    s.add(pid(1), now=0.0)
    assert s.contains(pid(1), now=1.9)
    assert not s.contains(pid(1), now=2.1)
    assert not s.contains(pid(1), now=0.5)  # expired entries are dropped


def test_ttl_set_rejects_bare_membership():
    s = TtlSet(ttl=2.0)
    with pytest.raises(TypeError):
        pid(1) in s


def test_reception_table_marks_and_expires():
    t = ReceptionTable(ttl=5.0)
    t.mark(pid(1), from_ids({2, 3}), now=0.0)
    assert t.holders(pid(1), now=4.0) == from_ids({2, 3})
    t.mark(pid(1), bit(3), now=2.0)  # refresh one holder
    assert t.holders(pid(1), now=5.5) == bit(3)
    assert t.holders(pid(2), now=0.0) == 0
    assert t.item_count(now=5.5) == 1
    t.prune(now=7.5)
    assert t.item_count(now=7.5) == 0


# --------------------------------------------------------------------------
# Codec
# --------------------------------------------------------------------------


def test_encode_validates_inputs():
    with pytest.raises(ValueError):
        encode([], [], [], tx_node=0)
    with pytest.raises(ValueError):
        encode([header(pid(1)), header(pid(2))], [1, 2], [4, 8], tx_node=0)


def test_encode_xors_payloads():
    pkt = encode([header(pid(1)), header(pid(2))], [0b1100, 0b1010], [4, 4], tx_node=7)
    assert pkt.payload == 0b0110 and pkt.encoded and pkt.tx_node == 7


def test_decode_recovers_single_missing_constituent():
    rng = random.Random(8)
    for _ in range(200):
        k = rng.randint(1, 6)
        pids = [pid(i + 1, source=rng.randint(0, 2) * 3) for i in range(k)]
        payloads = [rng.getrandbits(128) for _ in range(k)]
        pkt = encode([header(p) for p in pids], payloads, [16] * k, tx_node=0)
        missing_i = rng.randrange(k)
        pool = PacketPool(lifetime=5.0)
        for i, (p, pay) in enumerate(zip(pids, payloads)):
            if i != missing_i:
                pool.record_copy(p, 1, 0.0, payload=pay, payload_len=16)
        res = decode(pkt, pool)
        assert res.ok
        assert res.recovered_pid == pids[missing_i]
        assert res.recovered_payload == payloads[missing_i]


def test_decode_with_nothing_missing_is_trivial():
    pool = PacketPool(lifetime=5.0)
    pool.record_copy(pid(1), 1, 0.0, payload=3, payload_len=4)
    pkt = encode([header(pid(1))], [3], [4], tx_node=0)
    res = decode(pkt, pool)
    assert res.ok and res.recovered_pid is None


def test_decode_fails_with_two_unknowns():
    pool = PacketPool(lifetime=5.0)
    pool.record_copy(pid(1), 1, 0.0, payload=3, payload_len=4)
    pkt = encode(
        [header(pid(1)), header(pid(2)), header(pid(3))], [3, 5, 9], [4] * 3, tx_node=0
    )
    res = decode(pkt, pool)
    assert not res.ok
    assert set(res.missing) == {pid(2), pid(3)}


# --------------------------------------------------------------------------
# Opportunity detection
# --------------------------------------------------------------------------


def _detect(one_hop, known, seed_pid, queue, include_gratis=True, allow_pair=False):
    v = NeighborView(owner=99)
    for u in one_hop:
        v.note_hello(u, 0, now=0.0, horizon=10.0)
    return detect_coding(
        PlanItem(seed_pid, False),
        queue,
        v,
        lambda p: known[p],
        include_gratis,
        allow_pair,
    )


def test_detect_admits_complementary_pair():
    known = {pid(1): bit(1), pid(2): bit(2)}
    queue = [QueuedLike(pid(2), deadline=1.0, seq=0, gratis=False)]
    plan = _detect({1, 2}, known, pid(1), queue)
    assert [i.pid for i in plan] == [pid(1), pid(2)]


def test_detect_rejects_when_someone_misses_two():
    known = {pid(1): bit(1), pid(2): bit(1)}  # node 2 misses both
    queue = [QueuedLike(pid(2), deadline=1.0, seq=0, gratis=False)]
    plan = _detect({1, 2}, known, pid(1), queue)
    assert len(plan) == 1


def test_detect_scans_by_deadline_then_seq():
    # both candidates pair with the seed but not with each other; the one
    # expiring first must win the slot
    known = {pid(1): bit(1), pid(2): bit(2), pid(3): bit(2)}
    queue = [
        QueuedLike(pid(3), deadline=2.0, seq=5, gratis=False),
        QueuedLike(pid(2), deadline=1.0, seq=9, gratis=False),
    ]
    plan = _detect({1, 2}, known, pid(1), queue)
    assert [i.pid for i in plan] == [pid(1), pid(2)]


def test_detect_skips_seed_duplicate_in_queue():
    known = {pid(1): bit(1)}
    queue = [QueuedLike(pid(1), deadline=1.0, seq=0, gratis=False)]
    plan = _detect({1, 2}, known, pid(1), queue)
    assert len(plan) == 1


def test_gratis_joins_only_established_plans():
    known = {pid(1): bit(1), pid(2): bit(2)}
    queue = [QueuedLike(pid(2), deadline=1.0, seq=0, gratis=True)]
    plan = _detect({1, 2}, known, pid(1), queue)
    assert len(plan) == 1  # a lone native cannot pair with gratis by default
    plan = _detect({1, 2}, known, pid(1), queue, allow_pair=True)
    assert [(i.pid, i.gratis) for i in plan] == [(pid(1), False), (pid(2), True)]


def test_gratis_skipped_once_everyone_holds_it():
    known = {pid(1): bit(1), pid(2): bit(2), pid(3): from_ids({1, 2})}
    queue = [
        QueuedLike(pid(2), deadline=1.0, seq=0, gratis=False),
        QueuedLike(pid(3), deadline=2.0, seq=1, gratis=True),
    ]
    plan = _detect({1, 2}, known, pid(1), queue)
    # pid(3) is estimated at every neighbour: coding it adds risk, no gain
    assert [i.pid for i in plan] == [pid(1), pid(2)]


def test_native_scan_runs_before_gratis_scan():
    known = {
        pid(1): from_ids({1, 3}),
        pid(2): from_ids({2, 3}),
        pid(3): from_ids({1, 2}),
        pid(4): bit(2),
    }
    queue = [
        QueuedLike(pid(4), deadline=0.5, seq=0, gratis=True),
        QueuedLike(pid(2), deadline=1.0, seq=1, gratis=False),
        QueuedLike(pid(3), deadline=2.0, seq=2, gratis=True),
    ]
    plan = _detect({1, 2, 3}, known, pid(1), queue)
    # the native join happens first even though a gratis member expires
    # sooner, and that gratis member then no longer fits the grown plan
    assert [(i.pid, i.gratis) for i in plan] == [
        (pid(1), False),
        (pid(2), False),
        (pid(3), True),
    ]


def test_detected_plans_always_decodable_everywhere():
    """Whatever the queue looks like, an admitted plan leaves every current
    neighbour at most one constituent short."""
    rng = random.Random(21)
    for _ in range(2000):
        n_nbr = rng.randint(0, 6)
        one_hop = set(rng.sample(range(1, 9), n_nbr))
        n_pkts = rng.randint(1, 10)
        pids = [pid(i + 1, source=i % 3) for i in range(n_pkts)]
        known = {p: from_ids(s for s in one_hop if rng.random() < 0.6) for p in pids}
        queue = [
            QueuedLike(p, rng.uniform(0, 3), seq, rng.random() < 0.3)
            for seq, p in enumerate(pids[1:], start=1)
        ]
        include_gratis = rng.random() < 0.7
        plan = _detect(
            one_hop, known, pids[0], queue, include_gratis, rng.random() < 0.5
        )
        assert plan[0].pid == pids[0]
        assert len({i.pid for i in plan}) == len(plan)
        if not include_gratis:
            assert all(not i.gratis for i in plan[1:])
        for nbr in one_hop:
            short = sum(1 for i in plan if not known[i.pid] & bit(nbr))
            assert short <= 1


# --------------------------------------------------------------------------
# Gratis marking
# --------------------------------------------------------------------------


def test_mark_gratis_rules():
    v = NeighborView(owner=0)
    v.note_hello(1, 0, now=0.0, horizon=10.0)
    v.note_hello(2, 0, now=0.0, horizon=10.0)
    pool = PacketPool(lifetime=2.0)
    entry, _ = pool.record_copy(pid(1), 1, 0.0, payload=1, payload_len=4)
    assert mark_gratis(entry, v, is_forwarder=False)  # node 2 not estimated
    assert not mark_gratis(entry, v, is_forwarder=True)
    # two mutually-neighbouring hops: their advertisements cover each other,
    # so every current neighbour is estimated to hold the packet
    v2 = NeighborView(owner=0)
    v2.note_hello(1, from_ids({0, 2}), now=0.0, horizon=10.0)
    v2.note_hello(2, from_ids({0, 1}), now=0.0, horizon=10.0)
    pool2 = PacketPool(2.0)
    entry2, _ = pool2.record_copy(pid(2), 1, 0.0, payload=1, payload_len=4)
    pool2.record_copy(pid(2), 2, 0.1)
    assert not mark_gratis(entry2, v2, is_forwarder=False)
