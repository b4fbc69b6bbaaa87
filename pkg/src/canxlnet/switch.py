"""Composite switch: an Ethernet forwarding core with CAN XL tunneller ports.

A C-switch is a multiport learning bridge.  Ethernet ports hand frames to
the core directly; CAN ports pass through a tunneller that decapsulates
tunneled Ethernet on ingress and re-encapsulates on egress.  Streamlined
IPv4 frames carry no MAC addresses, so the filtering database is extended
with an IP index (the TARP cache) populated by snooping ARP messages and
plain IPv4 traffic; with it the switch can rebuild full Ethernet frames
for streamlined datagrams that must leave on an Ethernet port.

Loop prevention uses a reduced spanning tree: 64-bit bridge ids, hello
BPDUs every 2 s, lowest root id wins, per-port roles root/designated/
blocked, and no topology-change machinery (topologies are static after
t=0).  BPDUs travel tunneled on CAN ports, addressed to the standard STP
group MAC.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from . import frames
from .frames import (
    ETHERTYPE_ARP,
    ETHERTYPE_BPDU,
    ETHERTYPE_IPV4,
    STP_GROUP_MAC,
    CanXlFrame,
    ClassicCanFrame,
    EthernetFrame,
    Ipv4Address,
    Ipv4Datagram,
    IocDatagram,
    MacAddress,
    NotPlainIpv4,
)

ETH = "ethernet"
CAN_XL = "can-xl"

EGRESS_EOC = "eoc"
EGRESS_IOC_PREFERRED = "ioc-preferred"

ROLE_ROOT = "root"
ROLE_DESIGNATED = "designated"
ROLE_BLOCKED = "blocked"

HELLO_INTERVAL_S = 2.0
DEFAULT_AGEING_S = 300.0

BPDU_MAGIC = b"XBPD"
BPDU_LEN = 24  # magic + root id (8) + cost (4) + sender id (8)


@dataclass(frozen=True)
class PortConfig:
    index: int
    kind: str
    egress_mode: str = EGRESS_EOC
    egress_priority_base: int = 0x700
    vcid: int = 0

    def __post_init__(self):
        if self.kind not in (ETH, CAN_XL):
            raise ValueError(f"unknown port kind {self.kind!r}")
        if self.egress_mode not in (EGRESS_EOC, EGRESS_IOC_PREFERRED):
            raise ValueError(f"unknown egress mode {self.egress_mode!r}")
        if not 0 <= self.egress_priority_base < 2048:
            raise ValueError("egress priority must fit in 11 bits")


@dataclass(frozen=True)
class LegacyRelayRule:
    """Static classic-CAN relay: match an identifier on one port, emit it
    (possibly remapped) on others.  No learning, no flooding."""
    ingress_port: int
    match_id: int
    egress: tuple[tuple[int, int], ...]  # (port, remapped id)

    def __post_init__(self):
        for port, remapped in self.egress:
            if not 0 <= remapped < 2048:
                raise ValueError("remapped identifier must fit in 11 bits")
            if port == self.ingress_port:
                raise ValueError("relay egress must differ from ingress")


@dataclass
class EfdbEntry:
    mac: MacAddress | None
    ip: Ipv4Address | None
    port: int
    last_seen: int  # ns

    def __post_init__(self):
        if self.mac is None and self.ip is None:
            raise ValueError("entry needs a MAC or an IP")


class Efdb:
    """Filtering database plus TARP cache (the IP index).

    Both indices may share one entry when MAC and IP of a node are known
    jointly.  Entries older than the ageing time behave as misses.
    """

    def __init__(self, ageing_s: float = DEFAULT_AGEING_S):
        self.ageing_ns = round(ageing_s * 1e9)
        self.by_mac: dict[MacAddress, EfdbEntry] = {}
        self.by_ip: dict[Ipv4Address, EfdbEntry] = {}

    def _fresh(self, entry: EfdbEntry | None, now: int) -> EfdbEntry | None:
        if entry is None or now - entry.last_seen > self.ageing_ns:
            return None
        return entry

    def lookup_mac(self, mac: MacAddress, now: int) -> EfdbEntry | None:
        return self._fresh(self.by_mac.get(mac), now)

    def lookup_ip(self, ip: Ipv4Address, now: int) -> EfdbEntry | None:
        return self._fresh(self.by_ip.get(ip), now)

    def learn_mac(self, mac: MacAddress, port: int, now: int) -> None:
        entry = self.by_mac.get(mac)
        if entry is None:
            self.by_mac[mac] = EfdbEntry(mac, None, port, now)
        else:
            entry.port, entry.last_seen = port, now

    def learn_joint(self, mac: MacAddress, ip: Ipv4Address, port: int, now: int) -> None:
        entry = self.by_mac.get(mac)
        if entry is None:
            entry = EfdbEntry(mac, ip, port, now)
            self.by_mac[mac] = entry
        else:
            if entry.ip is not None and entry.ip != ip and self.by_ip.get(entry.ip) is entry:
                del self.by_ip[entry.ip]
            entry.ip, entry.port, entry.last_seen = ip, port, now
        old = self.by_ip.get(ip)
        if old is not None and old is not entry:
            # Later learning overwrites: the address moved to another entry.
            old.ip = None
        self.by_ip[ip] = entry

    def learn_ip(self, ip: Ipv4Address, port: int, now: int) -> None:
        # Streamlined frames carry no MAC; refresh the IP index without
        # ever erasing a MAC learned earlier for this address.
        entry = self.by_ip.get(ip)
        if entry is None:
            self.by_ip[ip] = EfdbEntry(None, ip, port, now)
        else:
            entry.port, entry.last_seen = port, now

    def age_out(self, now: int) -> None:
        for index in (self.by_mac, self.by_ip):
            stale = [key for key, e in index.items() if now - e.last_seen > self.ageing_ns]
            for key in stale:
                del index[key]

    def entries(self) -> list[EfdbEntry]:
        seen: list[EfdbEntry] = []
        for entry in list(self.by_mac.values()) + list(self.by_ip.values()):
            if not any(entry is e for e in seen):
                seen.append(entry)
        return seen


def encode_bpdu(root_id: int, cost: int, sender_id: int, sender_mac: MacAddress) -> EthernetFrame:
    body = BPDU_MAGIC + struct.pack(">QIQ", root_id, cost, sender_id)
    return EthernetFrame(STP_GROUP_MAC, sender_mac, ETHERTYPE_BPDU, body)


def decode_bpdu(eth: EthernetFrame) -> tuple[int, int, int]:
    if eth.payload[:4] != BPDU_MAGIC:
        raise frames.Malformed("bad BPDU magic")
    root_id, cost, sender_id = struct.unpack(">QIQ", eth.payload[4:BPDU_LEN])
    return root_id, cost, sender_id


@dataclass
class _PortState:
    role: str = ROLE_DESIGNATED
    last_bpdu: tuple[int, int, int] | None = None

    @property
    def forwarding(self) -> bool:
        return self.role != ROLE_BLOCKED


class CSwitch:
    """Forwarding state machine.  The owner (simulation engine) feeds it
    one ingress frame at a time and transmits whatever it returns."""

    def __init__(self, name: str, bridge_id: int,
                 ports: list[PortConfig],
                 legacy_rules: list[LegacyRelayRule] | None = None,
                 ageing_s: float = DEFAULT_AGEING_S):
        if len({p.index for p in ports}) != len(ports):
            raise ValueError(f"switch {name}: duplicate port indices")
        self.name = name
        self.bridge_id = bridge_id
        self.ports = {p.index: p for p in sorted(ports, key=lambda p: p.index)}
        self.legacy_rules = list(legacy_rules or [])
        self.efdb = Efdb(ageing_s)
        # Bridge MAC, synthesized from the bridge id (locally administered).
        self.mac = MacAddress(b"\x0a\xb1" + (bridge_id & 0xFFFFFFFF).to_bytes(4, "big"))
        self.port_state = {p.index: _PortState() for p in ports}
        self.root_id = bridge_id
        self.root_cost = 0
        self.root_port: int | None = None
        self.counters = {
            "forwarded": 0,
            "flooded": 0,
            "no_route_self": 0,
            "reconstruction_failure": 0,
            "stp_blocked": 0,
            "bpdu_malformed": 0,
        }
        # Optional callback (reason, normalized frame) fired on every
        # counted drop; the simulation uses it for per-flow accounting.
        self.drop_hook = None

    def _drop(self, reason: str, frame) -> None:
        self.counters[reason] += 1
        if self.drop_hook is not None:
            self.drop_hook(reason, frame)

    # -- ingress ----------------------------------------------------------

    def on_ingress(self, port: int, frame, now: int) -> list[tuple[int, object]]:
        """Process one received frame; returns (egress port, frame) pairs."""
        if isinstance(frame, ClassicCanFrame):
            return self.relay_legacy(port, frame)

        normalized = self._normalize(port, frame)
        if normalized is None:
            return []
        if isinstance(normalized, EthernetFrame) and self._is_bpdu(normalized):
            return self._encode_all(self.stp_step(port, normalized), now)
        if not self.port_state[port].forwarding:
            self._drop("stp_blocked", normalized)
            return []
        self.learn(port, normalized, now)
        return self._encode_all(self._forward(port, normalized, now), now)

    def _normalize(self, port: int, frame):
        kind = self.ports[port].kind
        if kind == ETH:
            return frame if isinstance(frame, EthernetFrame) else None
        if not isinstance(frame, CanXlFrame):
            return None
        if frame.sdt == frames.SDT_ETHERNET:
            # The tunneller does no AF filtering of its own: selective
            # forwarding belongs to the core.
            return frames.eoc_decapsulate(frame)
        if frame.sdt == frames.SDT_IPV4:
            return frames.ioc_decapsulate(frame)
        return None

    @staticmethod
    def _is_bpdu(eth: EthernetFrame) -> bool:
        return eth.da == STP_GROUP_MAC

    # -- learning ---------------------------------------------------------

    def learn(self, port: int, frame, now: int) -> None:
        """Backward learning plus ARP/IPv4 snooping into the TARP cache."""
        if isinstance(frame, IocDatagram):
            self.efdb.learn_ip(frame.src_ip, port, now)
            return
        self.efdb.learn_mac(frame.sa, port, now)
        if frame.ethertype == ETHERTYPE_ARP:
            try:
                msg = frames.arp_parse(frame)
            except frames.Malformed:
                return
            self.efdb.learn_joint(msg.sha, msg.spa, port, now)
        elif frame.ethertype == ETHERTYPE_IPV4:
            try:
                dgram = Ipv4Datagram.from_bytes(frame.payload)
            except frames.Malformed:
                return
            self.efdb.learn_joint(frame.sa, dgram.src_ip, port, now)

    # -- forwarding -------------------------------------------------------

    def _forwarding_ports(self, exclude: int) -> list[int]:
        return [i for i, p in self.ports.items()
                if i != exclude and self.port_state[i].forwarding]

    def _forward(self, ingress: int, frame, now: int) -> list[tuple[int, object]]:
        if isinstance(frame, EthernetFrame):
            if frame.da.is_group():
                ports = self._forwarding_ports(ingress)
                self.counters["flooded"] += 1
                return [(p, frame) for p in ports]
            entry = self.efdb.lookup_mac(frame.da, now)
        else:
            entry = self.efdb.lookup_ip(frame.dst_ip, now)

        if entry is not None:
            if entry.port == ingress:
                # Destination lives on the ingress segment: confine it.
                self._drop("no_route_self", frame)
                return []
            if self.port_state[entry.port].forwarding:
                self.counters["forwarded"] += 1
                return [(entry.port, frame)]
            self._drop("stp_blocked", frame)
            return []
        self.counters["flooded"] += 1
        return [(p, frame) for p in self._forwarding_ports(ingress)]

    def _encode_all(self, pairs: list[tuple[int, object]], now: int) -> list[tuple[int, object]]:
        out = []
        for port, frame in pairs:
            encoded = self._encode_for_port(port, frame, self.ports[port], now)
            if encoded is not None:
                out.append((port, encoded))
        return out

    def _encode_for_port(self, port: int, frame, cfg: PortConfig, now: int):
        """Re-encode a normalized frame for one egress port.

        Streamlined datagrams leaving on Ethernet (or on a CAN port in
        tunnel mode) need both MAC addresses from the EFDB; without them
        the frame is dropped and counted, never fabricated.
        """
        if isinstance(frame, EthernetFrame):
            if cfg.kind == ETH:
                return frame
            if cfg.egress_mode == EGRESS_IOC_PREFERRED and frame.ethertype == ETHERTYPE_IPV4:
                try:
                    return frames.ioc_encode(
                        frames.ethernet_to_ioc(frame),
                        cfg.egress_priority_base, cfg.vcid)
                except (NotPlainIpv4, frames.TooLarge):
                    pass
            return frames.eoc_encapsulate(frame, cfg.egress_priority_base, cfg.vcid)

        # IocDatagram
        if cfg.kind == CAN_XL and cfg.egress_mode == EGRESS_IOC_PREFERRED:
            return frames.ioc_encode(frame, cfg.egress_priority_base, cfg.vcid)
        eth = self._reconstruct_ethernet(frame, now)
        if eth is None:
            self._drop("reconstruction_failure", frame)
            return None
        if cfg.kind == ETH:
            return eth
        return frames.eoc_encapsulate(eth, cfg.egress_priority_base, cfg.vcid)

    def _reconstruct_ethernet(self, dgram: IocDatagram, now: int) -> EthernetFrame | None:
        dst = self.efdb.lookup_ip(dgram.dst_ip, now)
        src = self.efdb.lookup_ip(dgram.src_ip, now)
        if dst is None or dst.mac is None or src is None or src.mac is None:
            return None
        return frames.ioc_to_ethernet(dgram, dst.mac, src.mac)

    # -- legacy classic-CAN relay ------------------------------------------

    def relay_legacy(self, ingress: int, frame: ClassicCanFrame) -> list[tuple[int, ClassicCanFrame]]:
        out = []
        for rule in self.legacy_rules:
            if rule.ingress_port == ingress and rule.match_id == frame.id:
                for port, remapped in rule.egress:
                    out.append((port, ClassicCanFrame(remapped, frame.data)))
        if not out and self.drop_hook is not None:
            # Silent by design (strict confinement): no counter, but the
            # simulation still accounts the frame to its flow.
            self.drop_hook("legacy_unmatched", frame)
        return out

    # -- spanning tree ------------------------------------------------------

    def stp_step(self, port: int | None, bpdu_frame: EthernetFrame | None) -> list[tuple[int, EthernetFrame]]:
        """Consume one BPDU (or a hello tick when both args are None-ish)
        and return the BPDUs to transmit, as (port, frame) pairs."""
        if bpdu_frame is None:
            # Hello tick: the root (or a bridge still believing it is the
            # root) refreshes the tree.
            if self.root_id == self.bridge_id:
                return self._emit_bpdus()
            return []
        try:
            if bpdu_frame.ethertype != ETHERTYPE_BPDU:
                raise frames.Malformed("unexpected ethertype on STP group address")
            root_id, cost, sender_id = decode_bpdu(bpdu_frame)
        except frames.Malformed:
            self.counters["bpdu_malformed"] += 1
            return []
        self.port_state[port].last_bpdu = (root_id, cost, sender_id)
        changed = self._recompute_roles()
        if changed or port == self.root_port:
            return self._emit_bpdus()
        return []

    def hello(self) -> list[tuple[int, object]]:
        """Hello tick; returns wire-ready BPDU frames per port."""
        return self._encode_all(self.stp_step(None, None), 0)

    def _recompute_roles(self) -> bool:
        candidates = [(self.bridge_id, 0, self.bridge_id, -1)]
        for i, st in self.port_state.items():
            if st.last_bpdu is not None:
                root, cost, sender = st.last_bpdu
                candidates.append((root, cost + 1, sender, i))
        root_id, cost, _sender, root_port = min(candidates)
        changed = (root_id, cost) != (self.root_id, self.root_cost) or \
            (root_port if root_port >= 0 else None) != self.root_port
        self.root_id, self.root_cost = root_id, cost
        self.root_port = root_port if root_port >= 0 else None

        my_claim = (self.root_id, self.root_cost, self.bridge_id)
        for i, st in self.port_state.items():
            if i == self.root_port:
                role = ROLE_ROOT
            elif st.last_bpdu is not None and \
                    (st.last_bpdu[0], st.last_bpdu[1], st.last_bpdu[2]) < my_claim:
                # The neighbor advertises a better claim on this segment:
                # it is the designated bridge there, we stand aside.
                role = ROLE_BLOCKED
            else:
                role = ROLE_DESIGNATED
            if st.role != role:
                changed = True
                st.role = role
        return changed

    def _emit_bpdus(self) -> list[tuple[int, EthernetFrame]]:
        eth = encode_bpdu(self.root_id, self.root_cost, self.bridge_id, self.mac)
        return [(i, eth) for i, st in self.port_state.items()
                if st.role == ROLE_DESIGNATED]

    # -- reporting -----------------------------------------------------------

    def report(self) -> dict:
        return {
            "counters": dict(self.counters),
            "stp": {
                "root_id": self.root_id,
                "root_cost": self.root_cost,
                "ports": {str(i): st.role for i, st in self.port_state.items()},
            },
            "efdb": sorted(
                (
                    {
                        "mac": str(e.mac) if e.mac else None,
                        "ip": str(e.ip) if e.ip else None,
                        "port": e.port,
                        "last_seen_ns": e.last_seen,
                    }
                    for e in self.efdb.entries()
                ),
                key=lambda d: (d["mac"] or "", d["ip"] or ""),
            ),
        }
