"""Shared-medium models: CAN buses and point-to-point Ethernet links.

A CAN bus is broadcast with bitwise priority arbitration: at every idle
instant the queued frame with the lowest numeric priority wins.  The
contest itself is resolved instantaneously (the comparison outcome is
identical to bit-level arbitration for 11-bit fields).  Two distinct
stations contending with the same priority at the same instant cannot be
resolved by CAN at all; the model records a clash and discards both
frames, surfacing what is a configuration fault.

Ethernet links are full duplex: one independent FIFO and occupancy per
direction.  Multidrop Ethernet is not modeled.

All state is owned by the simulation engine and mutated in event order.
"""

from __future__ import annotations

import heapq
from collections import deque

from . import timing
from .frames import CanXlFrame, ClassicCanFrame, EthernetFrame
from .timing import CanXlTimingParams, EthernetTimingParams, to_ns


class Station:
    """Attachment point of a node or switch port to one medium."""

    def __init__(self, name: str, owner, medium):
        self.name = name
        self.owner = owner
        self.medium = medium
        self.queue = deque() if isinstance(medium, EthernetLink) else []

    def __repr__(self):
        return f"<Station {self.name}>"


def frame_priority(frame) -> int:
    if isinstance(frame, CanXlFrame):
        return frame.priority
    if isinstance(frame, ClassicCanFrame):
        return frame.id
    raise TypeError(f"{type(frame).__name__} cannot contend on a CAN bus")


class PriorityClash(Exception):
    """Two distinct stations offered the same priority at the same
    arbitration instant; carries the tied contenders."""

    def __init__(self, tied):
        self.tied = tied
        super().__init__(f"{len(tied)} stations tied at priority "
                         f"{frame_priority(tied[0][1]):#x}")


def arbitrate(contenders):
    """Pick the winner among (station, frame) pairs: lowest priority value
    (dominant-bit semantics).  Raises PriorityClash on a tie between
    distinct stations."""
    if not contenders:
        raise ValueError("arbitration needs at least one contender")
    best = min(frame_priority(frame) for _, frame in contenders)
    tied = [(st, frame) for st, frame in contenders if frame_priority(frame) == best]
    if len(tied) > 1:
        raise PriorityClash(tied)
    return tied[0]


class CanBus:
    def __init__(self, name: str, params: CanXlTimingParams):
        self.name = name
        self.kind = "can-bus"
        self.params = params
        self.stations: list[Station] = []
        self.busy_until = 0
        self.kick_pending = False
        self.clashes = 0
        self.busy_ns = 0

    def attach(self, station: Station) -> None:
        self.stations.append(station)

    def frame_duration_ns(self, frame) -> int:
        if isinstance(frame, ClassicCanFrame):
            return to_ns(timing.classic_can_duration(frame, self.params.arb_bitrate))
        return to_ns(timing.canxl_duration(len(frame.data), self.params))

    def enqueue(self, sim, station: Station, frame, now: int) -> None:
        heapq.heappush(station.queue, (frame_priority(frame), sim.next_seq(), frame))
        self.request_kick(sim, now)

    def request_kick(self, sim, now: int) -> None:
        if not self.kick_pending:
            self.kick_pending = True
            sim.schedule(now, "timer", {"timer": "medium-kick", "medium": self})

    def kick(self, sim, now: int) -> None:
        """Arbitrate and start one transmission if the bus is idle."""
        self.kick_pending = False
        if self.busy_until > now:
            return
        while True:
            heads = [(st, st.queue[0][2]) for st in self.stations if st.queue]
            if not heads:
                return
            try:
                station, frame = arbitrate(heads)
            except PriorityClash as clash:
                # Unresolvable: drop the tied frames and re-arbitrate the
                # remaining contenders at this same instant.
                self.clashes += 1
                dropped = [(st, heapq.heappop(st.queue)[2]) for st, _ in clash.tied]
                sim.on_clash(self, dropped, now)
                continue
            heapq.heappop(station.queue)
            duration = self.frame_duration_ns(frame)
            self.busy_until = now + duration
            self.busy_ns += duration
            sim.on_tx_start(self, station, frame, now, duration)
            sim.schedule(now + duration, "tx-complete",
                         {"medium": self, "sender": station, "frame": frame})
            return

    def receivers(self, sender: Station) -> list[Station]:
        # CAN broadcast: everyone but the transmitter.
        return [st for st in self.stations if st is not sender]

    def on_complete(self, sim, now: int, sender: Station | None = None) -> None:
        self.request_kick(sim, now)

    def report(self, t_end_ns: int) -> dict:
        return {
            "kind": self.kind,
            "utilization": self.busy_ns / t_end_ns if t_end_ns else 0.0,
            "clashes": self.clashes,
        }


class EthernetLink:
    def __init__(self, name: str, params: EthernetTimingParams):
        self.name = name
        self.kind = "ethernet-link"
        self.params = params
        self.endpoints: list[Station] = []
        self.busy_until = [0, 0]
        self.kick_pending = [False, False]
        self.busy_ns = [0, 0]

    def attach(self, station: Station) -> None:
        if len(self.endpoints) >= 2:
            raise ValueError(f"link {self.name} already has two endpoints")
        self.endpoints.append(station)

    def _direction(self, station: Station) -> int:
        for i, st in enumerate(self.endpoints):
            if st is station:
                return i
        raise ValueError(f"{station.name} is not attached to link {self.name}")

    def frame_duration_ns(self, frame: EthernetFrame) -> int:
        return to_ns(timing.ethernet_duration(len(frame.payload), self.params))

    def enqueue(self, sim, station: Station, frame, now: int) -> None:
        if not isinstance(frame, EthernetFrame):
            raise TypeError(f"{type(frame).__name__} cannot travel on an Ethernet link")
        station.queue.append(frame)
        self.request_kick(sim, now, self._direction(station))

    def request_kick(self, sim, now: int, direction: int) -> None:
        if not self.kick_pending[direction]:
            self.kick_pending[direction] = True
            sim.schedule(now, "timer",
                         {"timer": "medium-kick", "medium": self, "direction": direction})

    def kick(self, sim, now: int, direction: int = 0) -> None:
        self.kick_pending[direction] = False
        if self.busy_until[direction] > now:
            return
        station = self.endpoints[direction]
        if not station.queue:
            return
        frame = station.queue.popleft()
        duration = self.frame_duration_ns(frame)
        self.busy_until[direction] = now + duration
        self.busy_ns[direction] += duration
        sim.on_tx_start(self, station, frame, now, duration)
        sim.schedule(now + duration, "tx-complete",
                     {"medium": self, "sender": station, "frame": frame})

    def receivers(self, sender: Station) -> list[Station]:
        return [st for st in self.endpoints if st is not sender]

    def on_complete(self, sim, now: int, sender: Station | None = None) -> None:
        if sender is not None:
            self.request_kick(sim, now, self._direction(sender))

    def report(self, t_end_ns: int) -> dict:
        names = [st.name for st in self.endpoints]
        util = {
            f"{names[i]}->{names[1 - i]}": self.busy_ns[i] / t_end_ns if t_end_ns else 0.0
            for i in range(len(self.endpoints))
        }
        return {"kind": self.kind, "utilization": util, "clashes": 0}
