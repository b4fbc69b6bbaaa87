"""Declarative topology configuration (YAML).

Schema (unknown keys are rejected; every error names its location):

    nodes:
      - name: n1
        kind: eoc                 # ethernet-host | eoc | ioc | classic-can
        mac: "02:00:00:00:00:01"
        ip: "10.0.0.1"            # optional
        start_time: 0.0           # seconds, optional
        static_arp: {"10.0.0.2": "02:00:00:00:00:02"}   # optional
        can_priority: 0x100       # CAN node kinds, optional
        vcid: 0                   # CAN node kinds, optional
        eoc_refresh_interval: 60  # ioc kind, optional (seconds)
        rx_ids: [0x200]           # classic-can kind
    buses:
      - name: bus1
        arb_bitrate: 500000
        data_bitrate: 16000000
        arb_overhead_bits: 34     # optional calibration overrides
        data_overhead_bits: 168
        stuff_ratio: 0.1
        stations: [n1, sw1.p0]    # node names or <switch>.p<index>
    links:
      - name: link1
        bitrate: 10000000
        endpoints: [h1, sw1.p1]
    switches:
      - name: sw1
        bridge_id: 1
        ageing_time: 300          # optional (seconds)
        ports:
          - {index: 0, kind: can, egress_mode: eoc, egress_priority_base: 0x700, vcid: 0}
          - {index: 1, kind: ethernet}
        legacy_rules:             # optional
          - {ingress_port: 0, match_id: 0x100, egress: [{port: 1, id: 0x200}]}
    flows:
      - name: f1
        source: n1
        transport: ipv4           # raw-ethernet | ipv4 | classic-can
        payload_size: 44
        dst_ip: "10.0.0.2"        # / dst_mac / can_id per transport
        schedule: {at: 0.001}     # or {start: 0, period: 0.01, count: 5}
    run:
      t_end: 0.1                  # seconds
      seed: 0                     # optional, recorded in the report
      startup_gratuitous_arp: true
      trace: out/trace.jsonl      # optional default output paths
      report: out/report.json
"""

from __future__ import annotations

import yaml

from .engine import ConfigError, Flow, RunOptions, Topology
from .frames import Ipv4Address, MacAddress
from .nodes import (
    DEFAULT_EOC_REFRESH_S,
    ClassicCanNode,
    EocNode,
    EthernetHost,
    IocNode,
)
from .switch import (
    CAN_XL,
    EGRESS_EOC,
    EGRESS_IOC_PREFERRED,
    ETH,
    CSwitch,
    DEFAULT_AGEING_S,
    LegacyRelayRule,
    PortConfig,
)
from .timing import CanXlTimingParams, EthernetTimingParams

_PORT_KINDS = {"can": CAN_XL, "ethernet": ETH}
_EGRESS_MODES = {"eoc": EGRESS_EOC, "ioc-preferred": EGRESS_IOC_PREFERRED}


def _section(doc: dict, key: str, default=None):
    value = doc.get(key, default)
    return value


def _check_keys(mapping: dict, loc: str, required: set, optional: set) -> None:
    if not isinstance(mapping, dict):
        raise ConfigError(loc, "expected a mapping")
    unknown = set(mapping) - required - optional
    if unknown:
        raise ConfigError(loc, f"unknown keys: {', '.join(sorted(unknown))}")
    missing = required - set(mapping)
    if missing:
        raise ConfigError(loc, f"missing keys: {', '.join(sorted(missing))}")


def _parse(loc: str, parser, value):
    try:
        return parser(value)
    except (ValueError, TypeError) as exc:
        raise ConfigError(loc, str(exc)) from exc


def load_config(path: str) -> Topology:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    return build_topology(doc if doc is not None else {})


def build_topology(doc: dict) -> Topology:
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "expected a mapping")
    _check_keys(doc, "<root>", set(),
                {"nodes", "buses", "links", "switches", "flows", "run"})

    topo = Topology(options=_build_run(doc.get("run", {})))
    for spec in _section(doc, "nodes", []) or []:
        topo.add_node(_build_node(spec))
    for spec in _section(doc, "switches", []) or []:
        topo.add_switch(_build_switch(spec))
    for spec in _section(doc, "buses", []) or []:
        _build_bus(topo, spec)
    for spec in _section(doc, "links", []) or []:
        _build_link(topo, spec)
    for i, spec in enumerate(_section(doc, "flows", []) or []):
        topo.flows.append(_build_flow(spec, i))
    topo.validate()
    return topo


def _build_run(spec: dict) -> RunOptions:
    _check_keys(spec, "run", {"t_end"},
                {"seed", "startup_gratuitous_arp", "trace", "report"})
    return RunOptions(
        t_end=_parse("run.t_end", float, spec["t_end"]),
        seed=_parse("run.seed", int, spec.get("seed", 0)),
        startup_gratuitous_arp=bool(spec.get("startup_gratuitous_arp", True)),
        trace_path=spec.get("trace"),
        report_path=spec.get("report"),
    )


def _build_node(spec: dict):
    loc = f"nodes.{spec.get('name', '?')}"
    kind = spec.get("kind")
    common = {"name", "kind", "start_time"}
    if kind == "classic-can":
        _check_keys(spec, loc, {"name", "kind"}, {"rx_ids", "start_time"})
        return ClassicCanNode(
            name=spec["name"],
            rx_ids=[_parse(f"{loc}.rx_ids", int, v) for v in spec.get("rx_ids", [])],
            start_time=_parse(loc, float, spec.get("start_time", 0.0)),
        )
    addressed = common | {"mac", "ip", "static_arp"}
    can_extra = {"can_priority", "vcid"}
    if kind == "ethernet-host":
        _check_keys(spec, loc, {"name", "kind", "mac"}, addressed)
        cls, extra = EthernetHost, {}
    elif kind == "eoc":
        _check_keys(spec, loc, {"name", "kind", "mac"}, addressed | can_extra)
        cls, extra = EocNode, _can_args(spec, loc)
    elif kind == "ioc":
        _check_keys(spec, loc, {"name", "kind", "mac"},
                    addressed | can_extra | {"eoc_refresh_interval"})
        cls, extra = IocNode, _can_args(spec, loc)
        if "eoc_refresh_interval" in spec:
            # present-but-null enables the refresh at the stock interval
            value = spec["eoc_refresh_interval"]
            extra["eoc_refresh_interval"] = (
                DEFAULT_EOC_REFRESH_S if value is None
                else _parse(f"{loc}.eoc_refresh_interval", float, value))
    else:
        raise ConfigError(loc, f"unknown node kind {kind!r}")
    static_arp = {}
    for ip_text, mac_text in (spec.get("static_arp") or {}).items():
        static_arp[_parse(f"{loc}.static_arp", Ipv4Address.parse, ip_text)] = \
            _parse(f"{loc}.static_arp", MacAddress.parse, mac_text)
    return cls(
        name=spec["name"],
        mac=_parse(f"{loc}.mac", MacAddress.parse, spec["mac"]),
        ip=_parse(f"{loc}.ip", Ipv4Address.parse, spec["ip"]) if "ip" in spec else None,
        start_time=_parse(loc, float, spec.get("start_time", 0.0)),
        static_arp=static_arp,
        **extra,
    )


def _can_args(spec: dict, loc: str) -> dict:
    return {
        "can_priority": _parse(f"{loc}.can_priority", int, spec.get("can_priority", 0x100)),
        "vcid": _parse(f"{loc}.vcid", int, spec.get("vcid", 0)),
    }


def _build_switch(spec: dict) -> CSwitch:
    loc = f"switches.{spec.get('name', '?')}"
    _check_keys(spec, loc, {"name", "bridge_id", "ports"}, {"legacy_rules", "ageing_time"})
    ports = []
    for pspec in spec["ports"]:
        ploc = f"{loc}.ports.{pspec.get('index', '?')}"
        _check_keys(pspec, ploc, {"index", "kind"},
                    {"egress_mode", "egress_priority_base", "vcid"})
        if pspec["kind"] not in _PORT_KINDS:
            raise ConfigError(ploc, f"unknown port kind {pspec['kind']!r}")
        mode = pspec.get("egress_mode", "eoc")
        if mode not in _EGRESS_MODES:
            raise ConfigError(ploc, f"unknown egress mode {mode!r}")
        ports.append(_parse(ploc, lambda _: PortConfig(
            index=int(pspec["index"]),
            kind=_PORT_KINDS[pspec["kind"]],
            egress_mode=_EGRESS_MODES[mode],
            egress_priority_base=int(pspec.get("egress_priority_base", 0x700)),
            vcid=int(pspec.get("vcid", 0)),
        ), None))
    rules = []
    for rn, rspec in enumerate(spec.get("legacy_rules") or []):
        rloc = f"{loc}.legacy_rules.{rn}"
        _check_keys(rspec, rloc, {"ingress_port", "match_id", "egress"}, set())
        egress = []
        for espec in rspec["egress"]:
            _check_keys(espec, rloc, {"port", "id"}, set())
            egress.append((int(espec["port"]), int(espec["id"])))
        rules.append(_parse(rloc, lambda _: LegacyRelayRule(
            ingress_port=int(rspec["ingress_port"]),
            match_id=int(rspec["match_id"]),
            egress=tuple(egress),
        ), None))
    return _parse(loc, lambda _: CSwitch(
        name=spec["name"],
        bridge_id=int(spec["bridge_id"]),
        ports=ports,
        legacy_rules=rules,
        ageing_s=float(spec.get("ageing_time", DEFAULT_AGEING_S)),
    ), None)


def _attach(topo: Topology, medium_name: str, ref: str, loc: str) -> None:
    if "." in ref and ref.split(".", 1)[0] in topo.switches:
        sw_name, port_ref = ref.split(".", 1)
        if not port_ref.startswith("p") or not port_ref[1:].isdigit():
            raise ConfigError(loc, f"bad switch port reference {ref!r}")
        topo.attach_switch_port(sw_name, int(port_ref[1:]), medium_name)
    elif ref in topo.nodes:
        topo.attach_node(ref, medium_name)
    else:
        raise ConfigError(loc, f"unknown station {ref!r}")


def _build_bus(topo: Topology, spec: dict) -> None:
    loc = f"buses.{spec.get('name', '?')}"
    _check_keys(spec, loc, {"name", "arb_bitrate", "data_bitrate", "stations"},
                {"arb_overhead_bits", "data_overhead_bits", "stuff_ratio"})
    params = _parse(loc, lambda _: CanXlTimingParams(
        arb_bitrate=float(spec["arb_bitrate"]),
        data_bitrate=float(spec["data_bitrate"]),
        arb_overhead_bits=int(spec.get("arb_overhead_bits", 34)),
        data_overhead_bits=int(spec.get("data_overhead_bits", 168)),
        stuff_ratio=float(spec.get("stuff_ratio", 0.1)),
    ), None)
    topo.add_bus(spec["name"], params)
    for ref in spec["stations"]:
        _attach(topo, spec["name"], ref, f"{loc}.stations")


def _build_link(topo: Topology, spec: dict) -> None:
    loc = f"links.{spec.get('name', '?')}"
    _check_keys(spec, loc, {"name", "bitrate", "endpoints"}, set())
    params = _parse(loc, lambda _: EthernetTimingParams(bitrate=float(spec["bitrate"])), None)
    topo.add_link(spec["name"], params)
    if len(spec["endpoints"]) != 2:
        raise ConfigError(f"{loc}.endpoints", "a link needs exactly two endpoints")
    for ref in spec["endpoints"]:
        _attach(topo, spec["name"], ref, f"{loc}.endpoints")


def _build_flow(spec: dict, index: int) -> Flow:
    loc = f"flows.{spec.get('name', index)}"
    _check_keys(spec, loc, {"name", "source", "transport", "payload_size", "schedule"},
                {"dst_ip", "dst_mac", "can_id"})
    sched = spec["schedule"]
    _check_keys(sched, f"{loc}.schedule", set(), {"at", "start", "period", "count"})
    if "at" in sched:
        times = [round(float(sched["at"]) * 1e9)]
    elif "period" in sched and "count" in sched:
        start = float(sched.get("start", 0.0))
        period = float(sched["period"])
        times = [round((start + k * period) * 1e9) for k in range(int(sched["count"]))]
    else:
        raise ConfigError(f"{loc}.schedule", "need either 'at' or 'period'+'count'")
    return Flow(
        name=spec["name"],
        source=spec["source"],
        transport=spec["transport"],
        payload_size=_parse(f"{loc}.payload_size", int, spec["payload_size"]),
        send_times_ns=times,
        dst_ip=_parse(f"{loc}.dst_ip", Ipv4Address.parse, spec["dst_ip"])
        if "dst_ip" in spec else None,
        dst_mac=_parse(f"{loc}.dst_mac", MacAddress.parse, spec["dst_mac"])
        if "dst_mac" in spec else None,
        can_id=_parse(f"{loc}.can_id", int, spec["can_id"]) if "can_id" in spec else None,
    )
