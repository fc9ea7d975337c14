"""Per-node protocol logic, kept free of event-loop concerns.

The engine feeds receptions, timer expiries and generation events into a
Node; the node answers with a list of actions (transmit now, schedule a
timer).  All protocol state lives here: neighbour view, termination state,
packet pool, reception table, output queue.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable

from . import coding
from .coding import PacketPool, PlanItem, QueuedLike, ReceptionTable, TtlSet
from .config import Coding, ScenarioConfig, Termination
from .forwarding import elect_forwarders, elect_source_forwarders
from .model import ConstituentHeader, NeighborView, Packet, PacketId, bit
from .termination import Decision, TerminationState


@dataclass(slots=True)
class Transmit:
    packet: Packet


@dataclass(slots=True)
class ScheduleRad:
    pid: PacketId
    token: int
    at: float


@dataclass(slots=True)
class SchedulePoolEvict:
    pid: PacketId
    token: int
    at: float


Action = Transmit | ScheduleRad | SchedulePoolEvict


@dataclass(slots=True)
class OutEntry:
    pid: PacketId
    deadline: float
    gratis: bool
    seq: int
    token: int


@dataclass(slots=True)
class BankedPacket:
    """An encoded reception held back because >=2 constituents are unknown.

    The XOR payload stays useful for as long as the decode context could
    still arrive, so the packet is retried whenever the pool gains an entry
    and only written off as a decode failure when this deadline passes.
    """

    constituents: tuple[ConstituentHeader, ...]
    payload: int
    tx_node: int
    expiry: float


def make_payload(pid: PacketId) -> int:
    digest = hashlib.sha256(f"payload:{pid.source}:{pid.sn}".encode()).digest()
    return int.from_bytes(digest, "big")


class Node:
    def __init__(
        self,
        node_id: int,
        config: ScenarioConfig,
        rad_delay: Callable[[PacketId], float],
        metrics,
        log=None,
    ):
        self.id = node_id
        self.config = config
        self.rad_delay = rad_delay
        self.metrics = metrics
        self.log = log
        self.view = NeighborView(owner=node_id)
        self.pool = PacketPool(config.pool_lifetime)
        self.table = ReceptionTable(config.table_expiry) if config.coding is Coding.TABLE else None
        self.term = TerminationState(
            mode=config.termination,
            mcu_window=config.mcu_window,
            mark_expiry=config.mark_expiry,
        )
        self.gratis_seen = TtlSet(config.pool_lifetime)
        self.queue: dict[PacketId, OutEntry] = {}
        self.bank: list[BankedPacket] = []
        self._seq = 0
        self._next_token = 0
        self._cr = config.coded_redundancy and config.coding is not Coding.NONE

    # -- helpers -----------------------------------------------------------

    def _logev(self, now: float, kind: str, detail: str = "") -> None:
        if self.log is not None:
            self.log.add(now, self.id, kind, detail)

    def _known_of(self, now: float) -> Callable[[PacketId], int]:
        if self.table is not None:
            table = self.table
            return lambda pid: table.holders(pid, now)
        pool, view = self.pool, self.view

        def known(pid: PacketId) -> int:
            entry = pool.get(pid)
            return coding.receivers_of(entry, view) if entry is not None else 0

        return known

    def _detect(self, seed: PlanItem, now: float, allow_gratis_pair: bool) -> list[PlanItem]:
        queue = [QueuedLike(e.pid, e.deadline, e.seq, e.gratis) for e in self.queue.values()]
        return coding.detect_coding(
            seed,
            queue,
            self.view,
            self._known_of(now),
            include_gratis=self._cr,
            allow_gratis_pair=allow_gratis_pair,
        )

    def _buffer(self, pid: PacketId, now: float, gratis: bool, actions: list[Action]) -> None:
        delay = self.rad_delay(pid)
        self._seq += 1
        self._next_token += 1
        entry = OutEntry(pid, now + delay, gratis, self._seq, self._next_token)
        self.queue[pid] = entry
        actions.append(ScheduleRad(pid, entry.token, entry.deadline))
        self._logev(now, "buffer-gratis" if gratis else "buffer", f"{pid} until {entry.deadline:.3f}")

    def _transmit_plan(self, plan: list[PlanItem], now: float, actions: list[Action]) -> None:
        headers = []
        payloads = []
        lens = []
        any_gratis = False
        for item in plan:
            entry = self.pool.get(item.pid)
            assert entry is not None, "plan member must be pooled"
            # this node is now itself a previous hop of the packet, so its
            # own neighbourhood joins the holder estimate
            self.pool.record_copy(item.pid, self.id, now)
            self.queue.pop(item.pid, None)
            if item.gratis:
                fwd = 0
                any_gratis = True
            else:
                if entry.first_hop is None:
                    fwd, _ = elect_source_forwarders(self.view)
                else:
                    fwd, _ = elect_forwarders(
                        self.view, entry.prev_hops, self.config.pruning, entry.first_hop
                    )
                self.term.note_forwarded(item.pid)
            headers.append(ConstituentHeader(item.pid, fwd, item.gratis, entry.origin_time))
            payloads.append(entry.payload)
            lens.append(entry.payload_len)
        pkt = coding.encode(headers, payloads, lens, self.id)
        if self.table is not None:
            # own transmission: every current neighbour is about to hold these
            for item in plan:
                self.table.mark(item.pid, self.view.one_hop, now)
        self.metrics.on_data_tx(n_constituents=len(plan), with_gratis=any_gratis)
        self._logev(now, "tx", " ".join(f"{h.pid}{'*' if h.gratis else ''}" for h in headers))
        actions.append(Transmit(pkt))

    # -- events ------------------------------------------------------------

    def on_receive(self, pkt: Packet, now: float) -> list[Action]:
        actions: list[Action] = []
        if self.config.hello_enabled:
            self.view.prune(now, self._hello_horizon())
        if self.table is not None:
            tx = pkt.tx_node
            holders = (self.view.neighbors_of(tx) & self.view.one_hop) | bit(tx)
            for c in pkt.constituents:
                self.table.mark(c.pid, holders, now)
        if not pkt.encoded:
            c = pkt.constituents[0]
            self._process_constituent(c, pkt.payload, pkt.tx_node, now, actions)
            self._resolve_bank(now, actions)
            return actions

        result = coding.decode(pkt, self.pool)
        if not result.ok:
            self._logev(now, "decode-defer", " ".join(str(p) for p in result.missing))
            for c in pkt.constituents:
                if c.pid in self.pool:
                    self.pool.record_copy(c.pid, pkt.tx_node, now)
                    if not c.gratis and self.config.termination is Termination.MU:
                        self.term.observe_transmitter(pkt.tx_node, c.pid, now)
            self.bank.append(
                BankedPacket(pkt.constituents, pkt.payload, pkt.tx_node, now + self.pool.lifetime)
            )
            return actions
        for c in pkt.constituents:
            if c.pid == result.recovered_pid:
                payload = result.recovered_payload
            else:
                entry = self.pool.get(c.pid)
                assert entry is not None
                payload = entry.payload
            self._process_constituent(c, payload, pkt.tx_node, now, actions)
        self._resolve_bank(now, actions)
        return actions

    def _process_constituent(
        self,
        c: ConstituentHeader,
        payload: int,
        tx_node: int,
        now: float,
        actions: list[Action],
    ) -> None:
        entry, was_new = self.pool.record_copy(
            c.pid,
            tx_node,
            now,
            payload=payload,
            payload_len=self.config.pkt_size,
            origin_time=c.origin_time,
            gratis=c.gratis,
        )
        if was_new:
            actions.append(SchedulePoolEvict(c.pid, entry.token, now + self.pool.lifetime))
            if c.pid.source != self.id:
                self.metrics.on_delivery(self.id, c.pid, now - c.origin_time)
        if not c.gratis and self.config.termination is Termination.MU:
            self.term.observe_transmitter(tx_node, c.pid, now)

        if c.gratis and not self.config.gratis_rule_off:
            self._on_gratis_arrival(c.pid, entry, was_new, now, actions)
            return

        # native handling (also applies to gratis arrivals when the receiving
        # rule is disabled for comparison runs; their empty forwarder set then
        # walks into the termination structures like any other copy)
        # No extra once-only guard here: MC/U, C/U and R/U state already
        # suppress re-relays, and M/U is allowed to relay a packet again once
        # its neighbour marks have expired (its known weakness under load).
        decision = self.term.check(c.pid, now, self.view)
        if decision is Decision.DROP:
            self._logev(now, "drop-term", str(c.pid))
            return
        is_forwarder = self.config.blind_flood or bool((c.forwarders >> self.id) & 1)
        if is_forwarder:
            queued = self.queue.get(c.pid)
            if queued is not None and not queued.gratis:
                self._logev(now, "dup-queued", str(c.pid))
                return
            if self.config.coding is not Coding.NONE:
                plan = self._detect(PlanItem(c.pid, False), now, allow_gratis_pair=False)
                if len(plan) >= 2:
                    self._transmit_plan(plan, now, actions)
                    return
            # buffer natively; an existing gratis entry is promoted
            self._buffer(c.pid, now, gratis=False, actions=actions)
            if queued is not None:
                self._logev(now, "promote", str(c.pid))
        elif self._cr:
            if c.pid in self.queue:
                self._logev(now, "gratis-already-queued", str(c.pid))
                return
            if coding.mark_gratis(entry, self.view, is_forwarder=False):
                self.metrics.gratis_buffered += 1
                self._buffer(c.pid, now, gratis=True, actions=actions)
            else:
                self._logev(now, "gratis-nomark", str(c.pid))
        else:
            self._logev(now, "drop-notfwd", str(c.pid))

    def _on_gratis_arrival(
        self, pid: PacketId, entry, was_new: bool, now: float, actions: list[Action]
    ) -> None:
        """Gratis receiving rule: a gratis copy never touches termination
        state, so a later native copy still gets a fresh relay decision."""
        if not was_new or self.gratis_seen.contains(pid, now):
            self._logev(now, "gratis-dup", str(pid))
            return
        self.gratis_seen.add(pid, now)
        if not self._cr:
            self._logev(now, "gratis-ignored", str(pid))
            return
        if pid in self.queue:
            return
        if coding.mark_gratis(entry, self.view, is_forwarder=False):
            self.metrics.gratis_buffered += 1
            self._buffer(pid, now, gratis=True, actions=actions)
        else:
            self._logev(now, "gratis-nomark", str(pid))

    def _resolve_bank(self, now: float, actions: list[Action]) -> None:
        """Retry banked encoded packets against the current pool.

        A successful retry feeds the recovered constituent through the normal
        reception pipeline, which can unlock further banked packets, so the
        scan restarts until no entry makes progress.
        """
        progress = True
        while progress:
            progress = False
            for i, banked in enumerate(self.bank):
                if banked.expiry <= now:
                    continue
                missing = [c for c in banked.constituents if c.pid not in self.pool]
                if len(missing) > 1:
                    continue
                self.bank.pop(i)
                progress = True
                # constituents that arrived after the packet was banked still
                # owe its transmitter a previous-hop credit
                for c in banked.constituents:
                    if c.pid in self.pool:
                        self.pool.record_copy(c.pid, banked.tx_node, now)
                if missing:
                    payload = banked.payload
                    for c in banked.constituents:
                        if c.pid != missing[0].pid:
                            entry = self.pool.get(c.pid)
                            assert entry is not None
                            payload ^= entry.payload
                    self._logev(now, "decode-late", str(missing[0].pid))
                    self.metrics.decode_late += 1
                    self._process_constituent(missing[0], payload, banked.tx_node, now, actions)
                break

    def flush_bank(self, now: float) -> None:
        """Write off banked packets whose decode window has closed."""
        kept = []
        for banked in self.bank:
            if banked.expiry <= now:
                self.metrics.decode_failures += 1
                self._logev(
                    now, "decode-fail", " ".join(str(c.pid) for c in banked.constituents)
                )
            else:
                kept.append(banked)
        self.bank = kept

    def on_rad_expiry(self, pid: PacketId, token: int, now: float) -> list[Action]:
        entry = self.queue.get(pid)
        if entry is None or entry.token != token:
            return []
        del self.queue[pid]
        actions: list[Action] = []
        if entry.gratis:
            plan = self._detect(PlanItem(pid, True), now, allow_gratis_pair=False)
            if len(plan) >= 2 and any(not item.gratis for item in plan):
                self._transmit_plan(plan, now, actions)
            else:
                self.metrics.gratis_dropped += 1
                self._logev(now, "gratis-expire-drop", str(pid))
            return actions
        if self.config.termination is Termination.MU:
            # marks may have accumulated while the packet sat in the buffer
            if self.term.check(pid, now, self.view) is Decision.DROP:
                self._logev(now, "drop-term-late", str(pid))
                return actions
        elif self.term.stale_at_expiry(pid):
            # a newer sequence number overtook this packet during assessment
            self._logev(now, "drop-term-late", str(pid))
            return actions
        if self.config.coding is Coding.NONE:
            plan = [PlanItem(pid, False)]
        else:
            plan = self._detect(PlanItem(pid, False), now, allow_gratis_pair=True)
        self._transmit_plan(plan, now, actions)
        return actions

    def on_generate(self, sn: int, now: float) -> list[Action]:
        pid = PacketId(self.id, sn)
        entry, was_new = self.pool.record_copy(
            pid,
            None,
            now,
            payload=make_payload(pid),
            payload_len=self.config.pkt_size,
            origin_time=now,
        )
        assert was_new, "source sequence numbers must not repeat"
        actions: list[Action] = [SchedulePoolEvict(pid, entry.token, now + self.pool.lifetime)]
        if self.config.termination in (Termination.MCU, Termination.CU):
            self.term.check(pid, now, self.view)  # register own packet
        self.metrics.on_generated()
        self._logev(now, "gen", str(pid))
        self._transmit_plan([PlanItem(pid, False)], now, actions)
        return actions

    def on_pool_evict(self, pid: PacketId, token: int, now: float) -> None:
        if self.pool.evict(pid, token):
            dropped = self.queue.pop(pid, None)
            if dropped is not None:
                self._logev(now, "evict-queued", str(pid))
                if dropped.gratis:
                    self.metrics.gratis_dropped += 1

    def on_hello(self, sender: int, advertised: int, now: float) -> None:
        self.view.note_hello(sender, advertised, now, self._hello_horizon())

    def make_hello_size(self) -> int:
        return 8 + 4 * (1 + self.view.one_hop.bit_count())

    def periodic(self, now: float) -> None:
        """Housekeeping on a coarse timer: expire soft state."""
        if self.config.hello_enabled:
            self.view.prune(now, self._hello_horizon())
        self.flush_bank(now)
        self.gratis_seen.prune(now)
        if self.table is not None:
            self.table.prune(now)
        if self.term.marks is not None:
            self.term.marks.prune(now)

    def _hello_horizon(self) -> float:
        return self.config.hello_interval * self.config.hello_expiry_factor
