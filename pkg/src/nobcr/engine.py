"""Deterministic discrete-event simulation driving Node instances.

Determinism: one event heap ordered by (time, insertion seq); every random
draw comes from a purpose-and-node keyed substream derived from the run seed,
so outcomes are reproducible bit for bit regardless of host or process count.
"""
from __future__ import annotations

import hashlib
import heapq
import math
import random
from typing import Callable, Iterable, Sequence

from .config import ScenarioConfig
from .metrics import Metrics, SimLog
from .model import PacketId, bit, members
from .node import Node, ScheduleRad, SchedulePoolEvict, Transmit

RX, RAD, HELLO, GEN, EVICT, SAMPLE = range(6)


def substream(seed: int, name: str, index: int = 0) -> random.Random:
    digest = hashlib.sha256(f"{seed}:{name}:{index}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


class Waypoint:
    """Random-waypoint trajectory, evaluated analytically per movement leg.

    Legs are generated lazily from a warmup start so that position queries at
    t >= 0 see a process that has already been moving for a while.
    """

    __slots__ = ("rng", "side", "speed_min", "speed_max", "pause", "_legs", "_idx")

    def __init__(self, rng, side, speed_min, speed_max, pause, t0):
        self.rng = rng
        self.side = side
        self.speed_min = speed_min
        self.speed_max = speed_max
        self.pause = pause
        x = rng.uniform(0, side)
        y = rng.uniform(0, side)
        # legs: (t_start, t_end, x0, y0, vx, vy)
        self._legs = [(t0, t0, x, y, 0.0, 0.0)]
        self._idx = 0

    def _extend(self) -> None:
        t_start, t_end, x0, y0, vx, vy = self._legs[-1]
        x = x0 + vx * (t_end - t_start)
        y = y0 + vy * (t_end - t_start)
        dest_x = self.rng.uniform(0, self.side)
        dest_y = self.rng.uniform(0, self.side)
        speed = self.rng.uniform(self.speed_min, self.speed_max)
        dist = math.hypot(dest_x - x, dest_y - y)
        travel = dist / speed if speed > 0 else 0.0
        if travel > 0:
            self._legs.append(
                (t_end, t_end + travel, x, y, (dest_x - x) / travel, (dest_y - y) / travel)
            )
        if self.pause > 0:
            t_arrive = t_end + travel
            self._legs.append((t_arrive, t_arrive + self.pause, dest_x, dest_y, 0.0, 0.0))

    def position(self, t: float) -> tuple[float, float]:
        while t > self._legs[-1][1]:
            self._extend()
        idx = self._idx
        legs = self._legs
        if t < legs[idx][0]:
            idx = 0
        while idx + 1 < len(legs) and legs[idx][1] < t:
            idx += 1
        self._idx = idx
        t0, t1, x0, y0, vx, vy = legs[idx]
        dt = min(t, t1) - t0
        return x0 + vx * dt, y0 + vy * dt


class Simulation:
    def __init__(
        self,
        config: ScenarioConfig,
        adjacency: Sequence[int] | None = None,
        positions: Sequence[tuple[float, float]] | None = None,
        injections: Iterable[tuple[float, int, int]] | None = None,
        rad_override: Callable[[int, PacketId], float | None] | None = None,
        log: SimLog | None = None,
    ):
        config.validate()
        self.config = config
        self.log = log if log is not None else (SimLog() if config.log_events else None)
        self.metrics = Metrics(config.n_nodes)
        self._heap: list = []
        self._seq = 0
        self._active_rx: list[list] = [[] for _ in range(config.n_nodes)]

        n = config.n_nodes
        seed = config.seed
        self._rad_rngs = [substream(seed, "rad", i) for i in range(n)]
        self._mac_rngs = [substream(seed, "mac", i) for i in range(n)]
        self._hello_rngs = [substream(seed, "hello", i) for i in range(n)]
        self._rad_override = rad_override

        self.adjacency: list[int] | None = None
        self.trajectories: list[Waypoint] | None = None
        self.positions: list[tuple[float, float]] | None = None
        if adjacency is not None:
            self.adjacency = list(adjacency)
        elif config.speed_max > 0:
            self.trajectories = [
                Waypoint(
                    substream(seed, "mob", i),
                    config.area_side,
                    config.speed_min,
                    config.speed_max,
                    config.pause_time,
                    -config.mobility_warmup,
                )
                for i in range(n)
            ]
        else:
            if positions is not None:
                self.positions = [tuple(p) for p in positions]
            else:
                self.positions = []
                for i in range(n):
                    rng = substream(seed, "mob", i)
                    self.positions.append((rng.uniform(0, config.area_side), rng.uniform(0, config.area_side)))
            self.adjacency = self._static_adjacency(self.positions, config.tx_range)

        self.nodes = [
            Node(i, config, self._make_rad_fn(i), self.metrics, self.log) for i in range(n)
        ]
        if config.preconverged_views or adjacency is not None:
            self._preconverge()

        if injections is not None:
            for t, source, sn in injections:
                self._push(t, GEN, (source, sn, False))
        else:
            self._schedule_traffic()
        if config.hello_enabled:
            for i in range(n):
                self._push(self._hello_rngs[i].uniform(0, config.hello_interval), HELLO, i)
        if config.sample_storage:
            self._push(config.sample_interval, SAMPLE, None)

    # -- setup ---------------------------------------------------------------

    @staticmethod
    def _static_adjacency(positions, tx_range) -> list[int]:
        n = len(positions)
        adj = [0] * n
        r2 = tx_range * tx_range
        for i in range(n):
            xi, yi = positions[i]
            for j in range(i + 1, n):
                xj, yj = positions[j]
                dx, dy = xi - xj, yi - yj
                if dx * dx + dy * dy <= r2:
                    adj[i] |= 1 << j
                    adj[j] |= 1 << i
        return adj

    def _preconverge(self) -> None:
        adj = self.adjacency
        if adj is None:
            adj = self._current_adjacency(0.0)
        for node in self.nodes:
            view = node.view
            view.one_hop = adj[node.id]
            for u in members(adj[node.id]):
                view.neigh_of[u] = adj[u]

    def _make_rad_fn(self, node_id: int):
        rng = self._rad_rngs[node_id]
        override = self._rad_override
        rad_max = self.config.rad_max

        def draw(pid: PacketId) -> float:
            if override is not None:
                forced = override(node_id, pid)
                if forced is not None:
                    return forced
            return rng.uniform(0, rad_max) if rad_max > 0 else 0.0

        return draw

    def _schedule_traffic(self) -> None:
        cfg = self.config
        rng = substream(cfg.seed, "traffic")
        sources = sorted(rng.sample(range(cfg.n_nodes), cfg.n_sources))
        period = 1.0 / cfg.pkt_rate
        for s in sources:
            start = cfg.traffic_delay + rng.uniform(0, period)
            self._push(start, GEN, (s, 1, True))

    # -- event plumbing --------------------------------------------------------

    def _push(self, t: float, kind: int, data) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, kind, data))

    def _apply(self, node_id: int, actions, now: float) -> None:
        for a in actions:
            if type(a) is Transmit:
                self._transmit_data(node_id, a.packet, now)
            elif type(a) is ScheduleRad:
                self._push(a.at, RAD, (node_id, a.pid, a.token))
            elif type(a) is SchedulePoolEvict:
                self._push(a.at, EVICT, (node_id, a.pid, a.token))
            else:
                raise TypeError(f"unknown action {a!r}")

    # -- radio -----------------------------------------------------------------

    def _current_adjacency(self, t: float) -> list[int]:
        assert self.trajectories is not None
        positions = [traj.position(t) for traj in self.trajectories]
        return self._static_adjacency(positions, self.config.tx_range)

    def _receiver_mask(self, sender: int, t: float) -> int:
        if self.adjacency is not None:
            return self.adjacency[sender]
        assert self.trajectories is not None
        xs, ys = self.trajectories[sender].position(t)
        r2 = self.config.tx_range ** 2
        mask = 0
        for j, traj in enumerate(self.trajectories):
            if j == sender:
                continue
            xj, yj = traj.position(t)
            dx, dy = xs - xj, ys - yj
            if dx * dx + dy * dy <= r2:
                mask |= 1 << j
        return mask

    def _broadcast(self, sender: int, nbytes: int, payload, is_hello: bool, now: float) -> None:
        cfg = self.config
        jitter = self._mac_rngs[sender].uniform(0, cfg.mac_jitter) if cfg.mac_jitter > 0 else 0.0
        t0 = now + jitter
        t1 = t0 + nbytes * 8.0 / cfg.bandwidth_bps
        for r in members(self._receiver_mask(sender, t0)):
            box = [False]  # collision flag, private to this receiver
            active = self._active_rx[r]
            if active:
                live = [e for e in active if e[1] > t0]
                for e in live:
                    if e[0] < t1:  # strict interval overlap
                        e[2][0] = True
                        box[0] = True
                live.append((t0, t1, box))
                self._active_rx[r] = live
            else:
                active.append((t0, t1, box))
            self._push(t1, RX, (r, payload, box, is_hello))

    def _transmit_data(self, sender: int, packet, now: float) -> None:
        nbytes = packet.payload_len + 16 * len(packet.constituents)
        self._broadcast(sender, nbytes, packet, is_hello=False, now=now)

    def _transmit_hello(self, sender: int, now: float) -> None:
        node = self.nodes[sender]
        self.metrics.hello_tx += 1
        self._broadcast(sender, node.make_hello_size(), (sender, node.view.one_hop), True, now)

    # -- main loop ---------------------------------------------------------------

    def run(self) -> Metrics:
        cfg = self.config
        duration = cfg.sim_duration
        heap = self._heap
        while heap:
            t, _, kind, data = heapq.heappop(heap)
            if t > duration:
                break
            if kind == RX:
                receiver, payload, box, is_hello = data
                if box[0] and cfg.collisions:
                    self.metrics.collision_losses += 1
                    if self.log is not None:
                        self.log.add(t, receiver, "rx-collision")
                    continue
                node = self.nodes[receiver]
                if is_hello:
                    sender, mask = payload
                    node.on_hello(sender, mask, t)
                else:
                    self._apply(receiver, node.on_receive(payload, t), t)
            elif kind == RAD:
                node_id, pid, token = data
                self._apply(node_id, self.nodes[node_id].on_rad_expiry(pid, token, t), t)
            elif kind == GEN:
                source, sn, recurring = data
                self._apply(source, self.nodes[source].on_generate(sn, t), t)
                if recurring:
                    t_next = t + 1.0 / cfg.pkt_rate
                    if t_next <= duration - cfg.traffic_cutoff:
                        self._push(t_next, GEN, (source, sn + 1, True))
            elif kind == EVICT:
                node_id, pid, token = data
                self.nodes[node_id].on_pool_evict(pid, token, t)
            elif kind == HELLO:
                node_id = data
                self.nodes[node_id].periodic(t)
                self._transmit_hello(node_id, t)
                self._push(
                    t + cfg.hello_interval * self._hello_rngs[node_id].uniform(0.9, 1.1),
                    HELLO,
                    node_id,
                )
            elif kind == SAMPLE:
                for node in self.nodes:
                    self.metrics.on_storage_sample(
                        node.pool.items,
                        node.table.item_count(t) if node.table is not None else 0,
                        len(node.pool),
                    )
                self._push(t + cfg.sample_interval, SAMPLE, None)
        for node in self.nodes:
            node.flush_bank(duration)
        return self.metrics


def run_config(config: ScenarioConfig) -> Metrics:
    return Simulation(config).run()
