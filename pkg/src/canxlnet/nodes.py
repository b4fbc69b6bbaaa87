"""End-device models.

Three IP-capable kinds exist.  An Ethernet host is a conventional
station.  A tunnel node has a CAN XL interface and a thin layer that
emulates Ethernet in software, so the regular ARP/IPv4 stack runs on top
unchanged; receive filtering is two-staged (hardware acceptance field
match, then the full embedded DA).  A streamlined node is a tunnel node
that sends plain IPv4 as compact-header CAN XL frames whenever they fit,
falling back to the tunnel for oversized datagrams and, periodically, to
refresh the switches' address knowledge.  ARP itself always travels as
(tunneled) Ethernet.

Classic CAN nodes exist only to drive the static relay path: no MAC, no
IP, identifier-based reception.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import frames
from .frames import (
    ETHERTYPE_ARP,
    ETHERTYPE_BPDU,
    ETHERTYPE_IPV4,
    ETHERTYPE_RAW_DATA,
    STP_GROUP_MAC,
    ZERO_MAC,
    ArpMessage,
    ArpOp,
    CanXlFrame,
    ClassicCanFrame,
    EthernetFrame,
    Ipv4Address,
    Ipv4Datagram,
    IocDatagram,
    MacAddress,
)

ARP_RETRY_NS = 1_000_000_000  # one retry after 1 s, then give up
DEFAULT_EOC_REFRESH_S = 60.0
FLOW_PROTOCOL = 253  # RFC 3692 experimental protocol number


@dataclass
class ArpEntry:
    mac: MacAddress
    static: bool


class Node:
    kind = "ethernet-host"

    def __init__(self, name: str, mac: MacAddress, ip: Ipv4Address | None = None,
                 start_time: float = 0.0,
                 static_arp: dict[Ipv4Address, MacAddress] | None = None):
        self.name = name
        self.mac = mac
        self.ip = ip
        self.start_time = start_time
        self.arp_table = {k: ArpEntry(v, static=True) for k, v in (static_arp or {}).items()}
        self.has_static_arp = bool(static_arp)
        self.pending_arp: dict[Ipv4Address, list] = {}
        self.arp_attempts: dict[Ipv4Address, int] = {}
        self.station = None  # wired by the topology
        self.counters = {
            "delivered": 0,
            "af_false_positive": 0,
            "arp_unresolved": 0,
            "ipv4_errors": 0,
        }

    # -- transmit ----------------------------------------------------------

    def _transmit(self, sim, now: int, frame) -> None:
        self.station.medium.enqueue(sim, self.station, frame, now)

    def _emit_eth(self, sim, now: int, eth: EthernetFrame) -> None:
        self._transmit(sim, now, eth)

    def startup(self, sim, now: int) -> None:
        """Announce the node's own binding so switches can snoop it.

        Nodes with static ARP entries never trigger request/reply
        exchanges, so without this announcement no switch would ever
        learn their addresses."""
        if not sim.options.startup_gratuitous_arp:
            return
        if self.ip is None or not (self.has_static_arp or self.kind == "ioc"):
            return
        msg = ArpMessage(ArpOp.GRATUITOUS_REPLY, self.mac, self.ip, ZERO_MAC, self.ip)
        self._emit_eth(sim, now, frames.arp_serialize(msg))

    def app_send(self, sim, now: int, flow, seq: int, payload: bytes) -> None:
        if flow.transport == "raw-ethernet":
            eth = EthernetFrame(flow.dst_mac, self.mac, ETHERTYPE_RAW_DATA, payload)
            self._emit_eth(sim, now, eth)
        elif flow.transport == "ipv4":
            self.send_ip(sim, now, flow.dst_ip, payload, flow, seq)
        else:
            raise ValueError(f"{self.name} cannot send transport {flow.transport!r}")

    def send_ip(self, sim, now: int, dst_ip: Ipv4Address, payload: bytes, flow, seq: int) -> None:
        entry = self.arp_table.get(dst_ip)
        if entry is not None:
            self._send_datagram(sim, now, entry.mac, dst_ip, payload)
            return
        self.pending_arp.setdefault(dst_ip, []).append((dst_ip, payload, flow, seq))
        if dst_ip not in self.arp_attempts:
            self.arp_attempts[dst_ip] = 1
            self._send_arp_request(sim, now, dst_ip)
            sim.schedule(now + ARP_RETRY_NS, "timer",
                         {"timer": "arp-retry", "node": self, "ip": dst_ip})

    def _send_arp_request(self, sim, now: int, dst_ip: Ipv4Address) -> None:
        msg = ArpMessage(ArpOp.REQUEST, self.mac, self.ip, ZERO_MAC, dst_ip)
        self._emit_eth(sim, now, frames.arp_serialize(msg))

    def _send_datagram(self, sim, now: int, dst_mac: MacAddress,
                       dst_ip: Ipv4Address, payload: bytes) -> None:
        dgram = Ipv4Datagram(self.ip, dst_ip, payload, protocol=FLOW_PROTOCOL)
        self._emit_eth(sim, now, EthernetFrame(dst_mac, self.mac, ETHERTYPE_IPV4, dgram.to_bytes()))

    def arp_retry(self, sim, now: int, dst_ip: Ipv4Address) -> None:
        if dst_ip not in self.arp_attempts:
            return  # resolved in the meantime
        if self.arp_attempts[dst_ip] >= 2:
            for _dst, _payload, flow, seq in self.pending_arp.pop(dst_ip, []):
                self.counters["arp_unresolved"] += 1
                sim.flow_drop(flow, seq, "arp_unresolved", self.name, now)
            del self.arp_attempts[dst_ip]
            return
        self.arp_attempts[dst_ip] += 1
        self._send_arp_request(sim, now, dst_ip)
        sim.schedule(now + ARP_RETRY_NS, "timer",
                     {"timer": "arp-retry", "node": self, "ip": dst_ip})

    # -- receive -----------------------------------------------------------

    def on_receive(self, sim, now: int, frame) -> None:
        if isinstance(frame, EthernetFrame) and \
                (frame.da == self.mac or frame.da.is_group()):
            self._dispatch_eth(sim, now, frame)

    def _dispatch_eth(self, sim, now: int, eth: EthernetFrame) -> None:
        if eth.da == STP_GROUP_MAC or eth.ethertype == ETHERTYPE_BPDU:
            return
        if eth.ethertype == ETHERTYPE_ARP:
            try:
                msg = frames.arp_parse(eth)
            except frames.Malformed:
                return
            self._handle_arp(sim, now, msg)
        elif eth.ethertype == ETHERTYPE_IPV4:
            try:
                dgram = Ipv4Datagram.from_bytes(eth.payload)
            except frames.Malformed:
                self.counters["ipv4_errors"] += 1
                return
            if self.ip is not None and dgram.dst_ip == self.ip:
                self._deliver(sim, now, dgram.payload)
        elif eth.ethertype == ETHERTYPE_RAW_DATA:
            self._deliver(sim, now, eth.payload)

    def _deliver(self, sim, now: int, payload: bytes) -> None:
        self.counters["delivered"] += 1
        sim.on_app_delivery(self, payload, now)

    def _handle_arp(self, sim, now: int, msg: ArpMessage) -> None:
        entry = self.arp_table.get(msg.spa)
        if entry is not None:
            if not entry.static:
                entry.mac = msg.sha
        elif self.ip is not None and msg.tpa == self.ip:
            self.arp_table[msg.spa] = ArpEntry(msg.sha, static=False)

        if msg.spa in self.arp_table and msg.spa in self.pending_arp:
            mac = self.arp_table[msg.spa].mac
            for dst_ip, payload, _flow, _seq in self.pending_arp.pop(msg.spa):
                self._send_datagram(sim, now, mac, dst_ip, payload)
            self.arp_attempts.pop(msg.spa, None)

        if msg.op == ArpOp.REQUEST and self.ip is not None and msg.tpa == self.ip:
            reply = ArpMessage(ArpOp.REPLY, self.mac, self.ip, msg.sha, msg.spa)
            self._emit_eth(sim, now, frames.arp_serialize(reply))


class EthernetHost(Node):
    kind = "ethernet-host"


class EocNode(Node):
    kind = "eoc"

    def __init__(self, name, mac, ip=None, start_time=0.0, static_arp=None,
                 can_priority: int = 0x100, vcid: int = 0):
        super().__init__(name, mac, ip, start_time, static_arp)
        self.can_priority = can_priority
        self.vcid = vcid

    def _emit_eth(self, sim, now: int, eth: EthernetFrame) -> None:
        self._transmit(sim, now, frames.eoc_encapsulate(eth, self.can_priority, self.vcid))

    def on_receive(self, sim, now: int, frame) -> None:
        if not isinstance(frame, CanXlFrame):
            return
        if frame.sdt == frames.SDT_ETHERNET:
            # Hardware stage: acceptance-field match.
            if not frames.af_filter_match(frame.af, self.mac):
                return
            eth = frames.eoc_decapsulate(frame)
            # Software stage: the full DA breaks acceptance-field ties.
            if not (eth.da == self.mac or eth.da.is_group()):
                self.counters["af_false_positive"] += 1
                return
            self._dispatch_eth(sim, now, eth)
        else:
            self._on_other_sdt(sim, now, frame)

    def _on_other_sdt(self, sim, now: int, frame: CanXlFrame) -> None:
        pass


class IocNode(EocNode):
    kind = "ioc"

    def __init__(self, name, mac, ip=None, start_time=0.0, static_arp=None,
                 can_priority: int = 0x100, vcid: int = 0,
                 eoc_refresh_interval: float | None = None):
        super().__init__(name, mac, ip, start_time, static_arp, can_priority, vcid)
        self.eoc_refresh_interval_ns = (
            None if eoc_refresh_interval is None else round(eoc_refresh_interval * 1e9))
        self.next_refresh_ns: int | None = None

    def startup(self, sim, now: int) -> None:
        if self.eoc_refresh_interval_ns is not None:
            self.next_refresh_ns = now + self.eoc_refresh_interval_ns
        super().startup(sim, now)

    def _send_datagram(self, sim, now: int, dst_mac, dst_ip, payload) -> None:
        if self.next_refresh_ns is not None and now >= self.next_refresh_ns:
            # Time to refresh the switches' joint MAC+IP knowledge: this
            # one datagram travels tunneled.
            self.next_refresh_ns = now + self.eoc_refresh_interval_ns
            super()._send_datagram(sim, now, dst_mac, dst_ip, payload)
            return
        dgram = IocDatagram(self.ip, dst_ip, payload, protocol=FLOW_PROTOCOL)
        if frames.IOC_HEADER_LEN + len(payload) <= frames.CANXL_MAX_DATA:
            self._transmit(sim, now, frames.ioc_encode(dgram, self.can_priority, self.vcid))
        else:
            super()._send_datagram(sim, now, dst_mac, dst_ip, payload)

    def _on_other_sdt(self, sim, now: int, frame: CanXlFrame) -> None:
        if frame.sdt == frames.SDT_IPV4 and self.ip is not None \
                and frame.af == self.ip.to_u32():
            dgram = frames.ioc_decapsulate(frame)
            self._deliver(sim, now, dgram.payload)


class ClassicCanNode:
    kind = "classic-can"

    def __init__(self, name: str, rx_ids: list[int] | None = None, start_time: float = 0.0):
        self.name = name
        self.mac = None
        self.ip = None
        self.rx_ids = set(rx_ids or [])
        self.start_time = start_time
        self.station = None
        self.counters = {"delivered": 0}

    def startup(self, sim, now: int) -> None:
        pass

    def app_send(self, sim, now: int, flow, seq: int, payload: bytes) -> None:
        if flow.transport != "classic-can":
            raise ValueError(f"{self.name} only sends classic CAN frames")
        self.station.medium.enqueue(
            sim, self.station, ClassicCanFrame(flow.can_id, payload), now)

    def on_receive(self, sim, now: int, frame) -> None:
        if isinstance(frame, ClassicCanFrame) and frame.id in self.rx_ids:
            self.counters["delivered"] += 1
            sim.on_app_delivery(self, frame.data, now)
