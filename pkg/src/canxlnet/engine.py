"""Deterministic discrete-event engine.

Time is integer nanoseconds; events execute in (time, sequence) order
with sequence numbers assigned deterministically at insertion, so two
runs over the same inputs produce byte-identical traces.  Event kinds:
application sends, transmission completions, timers (medium arbitration
kicks, STP hellos, node startup, ARP retry), and deliveries.

Frames are never tagged with bookkeeping objects: each flow embeds an
8-byte (flow, sequence) tag at the start of its payload, and the engine
recovers the flow from the application payload at any delivery or drop
point, across any chain of tunnel/streamlined/Ethernet re-encodings.
That also gives the end-to-end byte-identity check for free.

The trace is one JSON record per line; the report is a JSON document of
per-flow, per-medium, per-switch, and per-node aggregates.
"""

from __future__ import annotations

import heapq
import json
import struct
from dataclasses import dataclass

from . import frames
from .frames import (
    CanXlFrame,
    ClassicCanFrame,
    EthernetFrame,
    Ipv4Address,
    IocDatagram,
    MacAddress,
)
from .media import CanBus, EthernetLink, Station
from .switch import CAN_XL, ETH, CSwitch, HELLO_INTERVAL_S
from .timing import CanXlTimingParams, EthernetTimingParams

FLOW_TAG_LEN = 8
MAX_IPV4_PAYLOAD = 1480  # what fits an Ethernet frame with a 20-byte header


class ConfigError(Exception):
    def __init__(self, location: str, message: str):
        self.location = location
        self.reason = message
        super().__init__(f"{location}: {message}")


@dataclass
class Flow:
    name: str
    source: str
    transport: str  # raw-ethernet | ipv4 | classic-can
    payload_size: int
    send_times_ns: list[int]
    dst_ip: Ipv4Address | None = None
    dst_mac: MacAddress | None = None
    can_id: int | None = None


@dataclass
class RunOptions:
    t_end: float = 1.0
    seed: int = 0
    startup_gratuitous_arp: bool = True
    trace_path: str | None = None
    report_path: str | None = None


@dataclass
class SwitchPortRef:
    switch: CSwitch
    port: int


class Topology:
    """Nodes, media, and switches wired together, plus the flow set."""

    def __init__(self, options: RunOptions | None = None):
        self.nodes: dict[str, object] = {}
        self.media: dict[str, object] = {}
        self.switches: dict[str, CSwitch] = {}
        self.flows: list[Flow] = []
        self.options = options or RunOptions()
        self.port_station: dict[tuple[str, int], Station] = {}

    def add_node(self, node) -> object:
        if node.name in self.nodes or node.name in self.switches:
            raise ConfigError(f"nodes.{node.name}", "duplicate name")
        self.nodes[node.name] = node
        return node

    def add_switch(self, sw: CSwitch) -> CSwitch:
        if sw.name in self.switches or sw.name in self.nodes:
            raise ConfigError(f"switches.{sw.name}", "duplicate name")
        self.switches[sw.name] = sw
        return sw

    def add_bus(self, name: str, params: CanXlTimingParams) -> CanBus:
        return self._add_medium(CanBus(name, params))

    def add_link(self, name: str, params: EthernetTimingParams) -> EthernetLink:
        return self._add_medium(EthernetLink(name, params))

    def _add_medium(self, medium):
        if medium.name in self.media:
            raise ConfigError(f"media.{medium.name}", "duplicate name")
        self.media[medium.name] = medium
        return medium

    def attach_node(self, node_name: str, medium_name: str) -> Station:
        node = self.nodes[node_name]
        medium = self.media[medium_name]
        if node.station is not None:
            raise ConfigError(f"nodes.{node_name}", "attached to more than one medium")
        station = Station(node_name, node, medium)
        medium.attach(station)
        node.station = station
        return station

    def attach_switch_port(self, switch_name: str, port: int, medium_name: str) -> Station:
        sw = self.switches[switch_name]
        medium = self.media[medium_name]
        if port not in sw.ports:
            raise ConfigError(f"switches.{switch_name}", f"no port {port}")
        key = (switch_name, port)
        if key in self.port_station:
            raise ConfigError(f"switches.{switch_name}.ports.{port}",
                              "attached to more than one medium")
        station = Station(f"{switch_name}.p{port}", SwitchPortRef(sw, port), medium)
        medium.attach(station)
        self.port_station[key] = station
        return station

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        self._validate_addresses()
        self._validate_wiring()
        self._validate_flows()
        if self.options.t_end < 0:
            raise ConfigError("run.t_end", "must be non-negative")

    def _validate_addresses(self) -> None:
        macs: dict[MacAddress, str] = {}
        ips: dict[Ipv4Address, str] = {}
        for name, node in self.nodes.items():
            if node.mac is not None:
                if node.mac in macs:
                    raise ConfigError(f"nodes.{name}",
                                      f"MAC {node.mac} already used by {macs[node.mac]}")
                macs[node.mac] = name
            if node.ip is not None:
                if node.ip in ips:
                    raise ConfigError(f"nodes.{name}",
                                      f"IP {node.ip} already used by {ips[node.ip]}")
                ips[node.ip] = name
        for name, sw in self.switches.items():
            if sw.mac in macs:
                raise ConfigError(f"switches.{name}",
                                  f"bridge MAC {sw.mac} already used by {macs[sw.mac]}")
            macs[sw.mac] = name

    def _validate_wiring(self) -> None:
        for name, node in self.nodes.items():
            if node.station is None:
                raise ConfigError(f"nodes.{name}", "not attached to any medium")
            on_bus = isinstance(node.station.medium, CanBus)
            if node.kind == "ethernet-host" and on_bus:
                raise ConfigError(f"nodes.{name}", "Ethernet hosts attach to links")
            if node.kind != "ethernet-host" and not on_bus:
                raise ConfigError(f"nodes.{name}", "CAN nodes attach to buses")
        for name, sw in self.switches.items():
            for idx, cfg in sw.ports.items():
                station = self.port_station.get((name, idx))
                if station is None:
                    raise ConfigError(f"switches.{name}.ports.{idx}", "not attached")
                on_bus = isinstance(station.medium, CanBus)
                if cfg.kind == CAN_XL and not on_bus:
                    raise ConfigError(f"switches.{name}.ports.{idx}",
                                      "CAN port wired to an Ethernet link")
                if cfg.kind == ETH and on_bus:
                    raise ConfigError(f"switches.{name}.ports.{idx}",
                                      "Ethernet port wired to a CAN bus")
            for rn, rule in enumerate(sw.legacy_rules):
                for port, _ in ((rule.ingress_port, None),) + tuple(rule.egress):
                    if port not in sw.ports:
                        raise ConfigError(f"switches.{name}.legacy_rules.{rn}",
                                          f"no port {port}")
                for port, _ in rule.egress:
                    if sw.ports[port].kind != CAN_XL:
                        raise ConfigError(f"switches.{name}.legacy_rules.{rn}",
                                          "legacy relay egress must be a CAN port")
        for name, medium in self.media.items():
            if isinstance(medium, EthernetLink) and len(medium.endpoints) != 2:
                raise ConfigError(f"media.{name}", "a link needs exactly two endpoints")

    def _validate_flows(self) -> None:
        for flow in self.flows:
            loc = f"flows.{flow.name}"
            node = self.nodes.get(flow.source)
            if node is None:
                raise ConfigError(loc, f"unknown source node {flow.source!r}")
            if flow.payload_size < FLOW_TAG_LEN:
                raise ConfigError(loc, f"payload_size below the {FLOW_TAG_LEN}-byte flow tag")
            if flow.transport == "classic-can":
                if node.kind != "classic-can":
                    raise ConfigError(loc, "classic-can flows need a classic-can source")
                if flow.can_id is None:
                    raise ConfigError(loc, "classic-can flows need can_id")
                if flow.payload_size != 8:
                    raise ConfigError(loc, "classic-can flow payload is the 8-byte tag")
            elif flow.transport == "ipv4":
                if node.kind == "classic-can" or node.ip is None:
                    raise ConfigError(loc, "ipv4 flows need a source with an IP address")
                if flow.dst_ip is None:
                    raise ConfigError(loc, "ipv4 flows need dst_ip")
                if flow.payload_size > MAX_IPV4_PAYLOAD:
                    raise ConfigError(loc, f"payload_size above {MAX_IPV4_PAYLOAD}")
            elif flow.transport == "raw-ethernet":
                if node.kind == "classic-can":
                    raise ConfigError(loc, "raw-ethernet flows need a MAC-capable source")
                if flow.dst_mac is None:
                    raise ConfigError(loc, "raw-ethernet flows need dst_mac")
                if flow.payload_size > frames.ETH_MTU:
                    raise ConfigError(loc, f"payload_size above {frames.ETH_MTU}")
            else:
                raise ConfigError(loc, f"unknown transport {flow.transport!r}")


def make_payload(flow_index: int, seq: int, size: int) -> bytes:
    tag = struct.pack(">II", flow_index, seq)
    filler = bytes((37 * i + 11 * flow_index + 7 * seq) & 0xFF for i in range(size - FLOW_TAG_LEN))
    return tag + filler


def frame_summary(frame) -> dict:
    if isinstance(frame, CanXlFrame):
        d = {
            "kind": "canxl",
            "sdt": frames.SDT_NAMES.get(frame.sdt, f"0x{frame.sdt:02x}"),
            "priority": frame.priority,
            "af": f"0x{frame.af:08x}",
            "len": len(frame.data),
        }
        if frame.sdt == frames.SDT_ETHERNET:
            inner = frames.eoc_decapsulate(frame)
            d["inner"] = {"da": str(inner.da), "sa": str(inner.sa),
                          "ethertype": f"0x{inner.ethertype:04x}"}
        return d
    if isinstance(frame, EthernetFrame):
        return {"kind": "eth", "da": str(frame.da), "sa": str(frame.sa),
                "ethertype": f"0x{frame.ethertype:04x}", "len": len(frame.payload)}
    if isinstance(frame, ClassicCanFrame):
        return {"kind": "classic", "id": f"0x{frame.id:03x}", "len": len(frame.data)}
    if isinstance(frame, IocDatagram):
        return {"kind": "ioc", "src": str(frame.src_ip), "dst": str(frame.dst_ip),
                "len": len(frame.payload)}
    return {"kind": type(frame).__name__}


class Simulation:
    def __init__(self, topo: Topology):
        topo.validate()
        self.topo = topo
        self.options = topo.options
        self.t_end_ns = round(topo.options.t_end * 1e9)
        self.now = 0
        self._seq = 0
        self.heap: list = []
        self.trace_lines: list[str] = []
        self.flow_index = {flow.name: i for i, flow in enumerate(topo.flows)}
        self.flow_stats = {
            flow.name: {
                "sent": 0,
                "delivered": 0,
                "delivered_seqs": set(),
                "payload_mismatches": 0,
                "latencies": [],
                "drops": {},
            }
            for flow in topo.flows
        }
        # (flow index, seq) tag -> (flow, seq, expected payload, send time)
        self.registry: dict[bytes, tuple[Flow, int, bytes, int]] = {}
        for sw in topo.switches.values():
            sw.drop_hook = self._make_switch_drop_hook(sw)

    # -- plumbing -----------------------------------------------------------

    def next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def schedule(self, t_ns: int, kind: str, data: dict) -> None:
        heapq.heappush(self.heap, (t_ns, self.next_seq(), kind, data))

    def trace(self, event: str, location: str, frame=None, flow: str | None = None,
              seq: int | None = None, reason: str | None = None, **extra) -> None:
        rec: dict = {"t_ns": self.now, "event": event, "location": location}
        if frame is not None:
            rec["frame"] = frame_summary(frame)
        if flow is not None:
            rec["flow"] = flow
        if seq is not None:
            rec["seq"] = seq
        if reason is not None:
            rec["reason"] = reason
        rec.update(extra)
        self.trace_lines.append(json.dumps(rec, sort_keys=True, separators=(",", ":")))

    # -- flow attribution ----------------------------------------------------

    def _app_payload(self, frame) -> bytes | None:
        if isinstance(frame, CanXlFrame):
            if frame.sdt == frames.SDT_ETHERNET:
                return self._app_payload(frames.eoc_decapsulate(frame))
            if frame.sdt == frames.SDT_IPV4:
                return frame.data[frames.IOC_HEADER_LEN:]
            return None
        if isinstance(frame, EthernetFrame):
            if frame.ethertype == frames.ETHERTYPE_IPV4 and len(frame.payload) >= 20:
                ihl = (frame.payload[0] & 0x0F) * 4
                total = int.from_bytes(frame.payload[2:4], "big")
                return frame.payload[ihl:total]
            if frame.ethertype == frames.ETHERTYPE_RAW_DATA:
                return frame.payload
            return None
        if isinstance(frame, ClassicCanFrame):
            return frame.data
        if isinstance(frame, IocDatagram):
            return frame.payload
        return None

    def flow_of(self, frame) -> tuple[Flow, int] | None:
        payload = self._app_payload(frame)
        if payload is None or len(payload) < FLOW_TAG_LEN:
            return None
        entry = self.registry.get(bytes(payload[:FLOW_TAG_LEN]))
        if entry is None:
            return None
        return entry[0], entry[1]

    # -- engine callbacks ------------------------------------------------------

    def on_tx_start(self, medium, station: Station, frame, now: int, duration_ns: int) -> None:
        fl = self.flow_of(frame)
        self.trace("tx_start", medium.name, frame=frame,
                   flow=fl[0].name if fl else None, seq=fl[1] if fl else None,
                   source=station.name, duration_ns=duration_ns)

    def on_clash(self, bus, dropped: list[tuple[Station, object]], now: int) -> None:
        self.trace("clash", bus.name, stations=[st.name for st, _ in dropped])
        for station, frame in dropped:
            fl = self.flow_of(frame)
            if fl is not None:
                self.flow_drop(fl[0], fl[1], "priority_clash", bus.name, now)
            else:
                self.trace("drop", bus.name, frame=frame, reason="priority_clash")

    def _make_switch_drop_hook(self, sw: CSwitch):
        def hook(reason: str, frame) -> None:
            fl = self.flow_of(frame) if frame is not None else None
            if fl is not None:
                self.flow_drop(fl[0], fl[1], reason, sw.name, self.now)
            else:
                self.trace("drop", sw.name,
                           frame=frame if frame is not None else None, reason=reason)
        return hook

    def flow_drop(self, flow: Flow, seq: int, reason: str, location: str, now: int) -> None:
        drops = self.flow_stats[flow.name]["drops"]
        drops[reason] = drops.get(reason, 0) + 1
        self.trace("drop", location, flow=flow.name, seq=seq, reason=reason)

    def on_app_delivery(self, node, payload: bytes, now: int) -> None:
        entry = None
        if len(payload) >= FLOW_TAG_LEN:
            entry = self.registry.get(bytes(payload[:FLOW_TAG_LEN]))
        if entry is None:
            self.trace("app_deliver", node.name, reason="untracked")
            return
        flow, seq, expected, sent_at = entry
        stats = self.flow_stats[flow.name]
        stats["delivered"] += 1
        stats["delivered_seqs"].add(seq)
        ok = payload[:len(expected)] == expected and \
            not any(payload[len(expected):])
        if not ok:
            stats["payload_mismatches"] += 1
        stats["latencies"].append(now - sent_at)
        self.trace("app_deliver", node.name, flow=flow.name, seq=seq,
                   latency_ns=now - sent_at)

    # -- event handlers ---------------------------------------------------------

    def run(self) -> tuple[str, dict]:
        for name in self.topo.switches:
            self.schedule(0, "timer", {"timer": "stp-hello", "switch": self.topo.switches[name]})
        for node in self.topo.nodes.values():
            self.schedule(round(node.start_time * 1e9), "timer",
                          {"timer": "node-startup", "node": node})
        for flow in self.topo.flows:
            for seq, t in enumerate(flow.send_times_ns):
                self.schedule(t, "app-send", {"flow": flow, "seq": seq})

        while self.heap:
            t, _seq, kind, data = heapq.heappop(self.heap)
            if t > self.t_end_ns:
                break
            self.now = t
            getattr(self, f"_on_{kind.replace('-', '_')}")(data)

        return "\n".join(self.trace_lines) + ("\n" if self.trace_lines else ""), self.report()

    def _on_app_send(self, data: dict) -> None:
        flow: Flow = data["flow"]
        seq: int = data["seq"]
        payload = make_payload(self.flow_index[flow.name], seq, flow.payload_size)
        self.registry[payload[:FLOW_TAG_LEN]] = (flow, seq, payload, self.now)
        self.flow_stats[flow.name]["sent"] += 1
        self.trace("app_send", flow.source, flow=flow.name, seq=seq)
        self.topo.nodes[flow.source].app_send(self, self.now, flow, seq, payload)

    def _on_tx_complete(self, data: dict) -> None:
        medium, sender, frame = data["medium"], data["sender"], data["frame"]
        fl = self.flow_of(frame)
        self.trace("tx_complete", medium.name, frame=frame,
                   flow=fl[0].name if fl else None, seq=fl[1] if fl else None,
                   source=sender.name)
        for station in medium.receivers(sender):
            self.schedule(self.now, "deliver", {"station": station, "frame": frame})
        medium.on_complete(self, self.now, sender)

    def _on_deliver(self, data: dict) -> None:
        station: Station = data["station"]
        frame = data["frame"]
        self.trace("deliver", station.name, frame=frame)
        owner = station.owner
        if isinstance(owner, SwitchPortRef):
            emissions = owner.switch.on_ingress(owner.port, frame, self.now)
            for port, out_frame in emissions:
                out_station = self.topo.port_station[(owner.switch.name, port)]
                out_station.medium.enqueue(self, out_station, out_frame, self.now)
        else:
            owner.on_receive(self, self.now, frame)

    def _on_timer(self, data: dict) -> None:
        timer = data["timer"]
        if timer == "medium-kick":
            medium = data["medium"]
            if "direction" in data:
                medium.kick(self, self.now, data["direction"])
            else:
                medium.kick(self, self.now)
        elif timer == "stp-hello":
            sw: CSwitch = data["switch"]
            self.trace("timer", sw.name, reason="stp-hello")
            for port, out_frame in sw.hello():
                station = self.topo.port_station[(sw.name, port)]
                station.medium.enqueue(self, station, out_frame, self.now)
            self.schedule(self.now + round(HELLO_INTERVAL_S * 1e9), "timer", data)
        elif timer == "node-startup":
            # Not traced: an announcement shows up as tx_start anyway.
            data["node"].startup(self, self.now)
        elif timer == "arp-retry":
            node = data["node"]
            self.trace("timer", node.name, reason="arp-retry")
            node.arp_retry(self, self.now, data["ip"])

    # -- report ---------------------------------------------------------------

    def report(self) -> dict:
        flows = {}
        for flow in self.topo.flows:
            st = self.flow_stats[flow.name]
            lat = st["latencies"]
            flows[flow.name] = {
                "sent": st["sent"],
                "delivered": st["delivered"],
                "delivered_unique": len(st["delivered_seqs"]),
                "payload_mismatches": st["payload_mismatches"],
                "drops": dict(sorted(st["drops"].items())),
                "latency_ns": {
                    "min": min(lat), "mean": sum(lat) / len(lat), "max": max(lat),
                } if lat else None,
            }
        return {
            "t_end_ns": self.t_end_ns,
            "seed": self.options.seed,
            "flows": flows,
            "media": {name: m.report(self.t_end_ns) for name, m in self.topo.media.items()},
            "switches": {name: sw.report() for name, sw in self.topo.switches.items()},
            "nodes": {name: dict(n.counters) for name, n in self.topo.nodes.items()},
        }


def run(topo: Topology) -> tuple[str, dict]:
    """Build and run one simulation; returns (trace text, report dict)."""
    return Simulation(topo).run()
