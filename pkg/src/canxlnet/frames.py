"""Frame formats and pure encode/decode operations.

Everything on a wire in this library is one of three frame kinds:

  EthernetFrame   DA(6) SA(6) EtherType(2) payload(46..1500, zero padded)
  CanXlFrame      priority(11b) SEC SDT(1) VCID(1) AF(4) data(1..2048)
  ClassicCanFrame id(11b) data(0..8)

CAN XL frames multiplex their content through the SDU type (SDT) octet.
Two encapsulations are implemented:

  Ethernet tunnel ("EoC"): data = the serialized Ethernet frame, without
  preamble and FCS (the CAN XL CRC-32 protects the embedding); AF carries
  the leading four octets of the embedded DA so receivers can filter in
  hardware (the I/G bit lives in octet 0 and is therefore included).

  Streamlined IPv4 ("IoC"): AF carries the destination IPv4 address and
  data starts with an 8-byte compact header:

      0               1               2               3
      +-------+-------+---------------+---------------+--------------+
      |ver=4  | pad=0 |   DSCP/ECN    |      TTL      |   protocol   |
      +-------+-------+---------------+---------------+--------------+
      |                      source IPv4 address                     |
      +--------------------------------------------------------------+

  Total length, header checksum, identification and all fragmentation
  fields of the standard IPv4 header are omitted (length comes from the
  MAC, integrity from the CAN XL CRCs, and fragmented traffic falls back
  to the Ethernet tunnel).  The encoding is 26 bytes smaller than the
  tunneled Ethernet/IPv4 form of the same datagram.

All types are immutable values and all operations are pure functions.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_ARP = 0x0806
# Local-experimental EtherTypes used for simulator control/data traffic.
ETHERTYPE_BPDU = 0x88B5
ETHERTYPE_RAW_DATA = 0x88B6

ETH_MIN_PAYLOAD = 46
ETH_MTU = 1500
ETH_HEADER_LEN = 14

CANXL_MAX_DATA = 2048
IOC_HEADER_LEN = 8

# SDU type assignments.  The values are configuration constants of this
# library (one octet each, all distinct); deployments following other
# assignments can remap them here.
SDT_CLASSIC_CAN = 0x01
SDT_CAN_FD = 0x02
SDT_ETHERNET = 0x03
SDT_IPV4 = 0x05

SDT_NAMES = {
    SDT_CLASSIC_CAN: "classic-can",
    SDT_CAN_FD: "can-fd",
    SDT_ETHERNET: "ethernet",
    SDT_IPV4: "ipv4",
}

IPV4_DF = 0b010
IPV4_MF = 0b001


class FrameError(Exception):
    """Base class for codec failures."""


class Malformed(FrameError):
    pass


class WrongSdt(FrameError):
    pass


class TooLarge(FrameError):
    pass


class NotPlainIpv4(FrameError):
    """Datagram cannot use the streamlined encoding (options, fragments,
    or not IPv4 at all); callers fall back to the Ethernet tunnel."""


@dataclass(frozen=True)
class MacAddress:
    octets: bytes

    def __post_init__(self):
        if len(self.octets) != 6:
            raise ValueError("MAC address needs exactly 6 octets")

    @classmethod
    def parse(cls, text: str) -> "MacAddress":
        parts = text.split(":")
        if len(parts) != 6:
            raise ValueError(f"bad MAC address {text!r}")
        return cls(bytes(int(p, 16) for p in parts))

    def is_group(self) -> bool:
        # I/G bit: least-significant bit of octet 0.
        return bool(self.octets[0] & 0x01)

    def __str__(self) -> str:
        return ":".join(f"{b:02x}" for b in self.octets)


BROADCAST_MAC = MacAddress(b"\xff" * 6)
ZERO_MAC = MacAddress(b"\x00" * 6)
STP_GROUP_MAC = MacAddress(bytes.fromhex("0180c2000000"))


@dataclass(frozen=True)
class Ipv4Address:
    octets: bytes

    def __post_init__(self):
        if len(self.octets) != 4:
            raise ValueError("IPv4 address needs exactly 4 octets")

    @classmethod
    def parse(cls, text: str) -> "Ipv4Address":
        parts = text.split(".")
        if len(parts) != 4:
            raise ValueError(f"bad IPv4 address {text!r}")
        return cls(bytes(int(p, 10) for p in parts))

    @classmethod
    def from_u32(cls, value: int) -> "Ipv4Address":
        return cls(value.to_bytes(4, "big"))

    def to_u32(self) -> int:
        return int.from_bytes(self.octets, "big")

    def __str__(self) -> str:
        return ".".join(str(b) for b in self.octets)


@dataclass(frozen=True)
class EthernetFrame:
    """IEEE 802.3 MAC frame, modeled without preamble and FCS.

    Construction zero-pads the payload up to the 46-byte minimum; the
    pre-pad length is kept in `payload_len` for bookkeeping but does not
    take part in equality (it is not recoverable from the wire).
    """

    da: MacAddress
    sa: MacAddress
    ethertype: int
    payload: bytes
    payload_len: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if not 0 <= self.ethertype <= 0xFFFF:
            raise ValueError("ethertype out of range")
        if self.payload_len is None:
            object.__setattr__(self, "payload_len", len(self.payload))
        if len(self.payload) < ETH_MIN_PAYLOAD:
            object.__setattr__(
                self, "payload",
                self.payload + bytes(ETH_MIN_PAYLOAD - len(self.payload)))
        if len(self.payload) > ETH_MTU:
            raise ValueError(f"payload {len(self.payload)} exceeds MTU {ETH_MTU}")

    def to_bytes(self) -> bytes:
        return self.da.octets + self.sa.octets + struct.pack(">H", self.ethertype) + self.payload

    @classmethod
    def from_bytes(cls, buf: bytes) -> "EthernetFrame":
        if len(buf) < ETH_HEADER_LEN + ETH_MIN_PAYLOAD:
            raise Malformed(f"Ethernet frame too short ({len(buf)} bytes)")
        da = MacAddress(buf[0:6])
        sa = MacAddress(buf[6:12])
        (ethertype,) = struct.unpack(">H", buf[12:14])
        return cls(da, sa, ethertype, buf[14:])


@dataclass(frozen=True)
class CanXlFrame:
    """CAN XL MAC frame, modeled above the bit-stuffing layer.

    Only 11-bit priorities exist (no 29-bit form) and SEC=1 side paths
    (extended LLC) are out of scope: the codecs here never set SEC and
    refuse to decode it.
    """

    priority: int
    sdt: int
    vcid: int
    af: int
    data: bytes
    sec: bool = False

    def __post_init__(self):
        if not 0 <= self.priority < 2048:
            raise ValueError("priority must fit in 11 bits")
        if not 0 <= self.sdt <= 0xFF:
            raise ValueError("sdt is one octet")
        if not 0 <= self.vcid <= 0xFF:
            raise ValueError("vcid is one octet")
        if not 0 <= self.af <= 0xFFFFFFFF:
            raise ValueError("af is 32 bits")
        if not 1 <= len(self.data) <= CANXL_MAX_DATA:
            raise ValueError(f"data length {len(self.data)} outside [1, {CANXL_MAX_DATA}]")

    def to_bytes(self) -> bytes:
        # Canonical byte serialization for traces and the codec CLI; the
        # real on-bus bit layout (stuffing, CRCs) is below this model.
        flags = 0x01 if self.sec else 0x00
        return struct.pack(">HBBBI", self.priority, flags, self.sdt, self.vcid, self.af) + self.data

    @classmethod
    def from_bytes(cls, buf: bytes) -> "CanXlFrame":
        if len(buf) < 10:
            raise Malformed(f"CAN XL frame too short ({len(buf)} bytes)")
        priority, flags, sdt, vcid, af = struct.unpack(">HBBBI", buf[:9])
        return cls(priority, sdt, vcid, af, buf[9:], sec=bool(flags & 0x01))


@dataclass(frozen=True)
class ClassicCanFrame:
    id: int
    data: bytes

    def __post_init__(self):
        if not 0 <= self.id < 2048:
            raise ValueError("identifier must fit in 11 bits")
        if len(self.data) > 8:
            raise ValueError("classic CAN carries at most 8 data bytes")


@dataclass(frozen=True)
class Ipv4Datagram:
    """Full RFC 791 datagram (header fields plus payload).

    `options` holds the raw option bytes when IHL > 5; the streamlined
    codecs reject such datagrams.
    """

    src_ip: Ipv4Address
    dst_ip: Ipv4Address
    payload: bytes
    dscp_ecn: int = 0
    identification: int = 0
    flags: int = 0
    fragment_offset: int = 0
    ttl: int = 64
    protocol: int = 253
    options: bytes = b""

    def __post_init__(self):
        if len(self.options) % 4:
            raise ValueError("options must be a whole number of 32-bit words")
        if self.fragment_offset >> 13 or self.flags >> 3:
            raise ValueError("flags/fragment offset out of range")

    @property
    def ihl(self) -> int:
        return 5 + len(self.options) // 4

    @property
    def total_length(self) -> int:
        return self.ihl * 4 + len(self.payload)

    def to_bytes(self) -> bytes:
        header = bytearray(struct.pack(
            ">BBHHHBBH4s4s",
            (4 << 4) | self.ihl,
            self.dscp_ecn,
            self.total_length,
            self.identification,
            (self.flags << 13) | self.fragment_offset,
            self.ttl,
            self.protocol,
            0,
            self.src_ip.octets,
            self.dst_ip.octets,
        )) + self.options
        struct.pack_into(">H", header, 10, ipv4_checksum(bytes(header)))
        return bytes(header) + self.payload

    @classmethod
    def from_bytes(cls, buf: bytes) -> "Ipv4Datagram":
        if len(buf) < 20:
            raise Malformed("IPv4 header truncated")
        ver_ihl, dscp_ecn, total, ident, frag, ttl, proto, _cksum, src, dst = \
            struct.unpack(">BBHHHBBH4s4s", buf[:20])
        if ver_ihl >> 4 != 4:
            raise Malformed(f"IP version {ver_ihl >> 4} is not 4")
        ihl = ver_ihl & 0x0F
        if ihl < 5 or len(buf) < ihl * 4:
            raise Malformed("bad IHL")
        if total < ihl * 4 or total > len(buf):
            raise Malformed("bad total length")
        if ipv4_checksum(buf[:ihl * 4]) != 0:
            raise Malformed("bad IPv4 header checksum")
        return cls(
            src_ip=Ipv4Address(src),
            dst_ip=Ipv4Address(dst),
            payload=buf[ihl * 4:total],
            dscp_ecn=dscp_ecn,
            identification=ident,
            flags=frag >> 13,
            fragment_offset=frag & 0x1FFF,
            ttl=ttl,
            protocol=proto,
            options=buf[20:ihl * 4],
        )


@dataclass(frozen=True)
class IocDatagram:
    """The streamlined IPv4 view: compact-header fields plus payload.

    On the wire the destination address rides in the CAN XL AF, not in
    the data field.
    """

    src_ip: Ipv4Address
    dst_ip: Ipv4Address
    payload: bytes
    dscp_ecn: int = 0
    ttl: int = 64
    protocol: int = 253
    version: int = 4

    @property
    def total_length(self) -> int:
        # Length of the equivalent standard datagram.
        return 20 + len(self.payload)

    def to_ipv4(self) -> Ipv4Datagram:
        # IoC forbids fragments, so the rebuilt header pins DF and a zero
        # identification; nothing downstream may fragment it meaningfully.
        return Ipv4Datagram(
            src_ip=self.src_ip,
            dst_ip=self.dst_ip,
            payload=self.payload,
            dscp_ecn=self.dscp_ecn,
            flags=IPV4_DF,
            ttl=self.ttl,
            protocol=self.protocol,
        )

    @classmethod
    def from_ipv4(cls, dgram: Ipv4Datagram) -> "IocDatagram":
        if dgram.options:
            raise NotPlainIpv4("IP options cannot be carried")
        if dgram.fragment_offset or dgram.flags & IPV4_MF:
            raise NotPlainIpv4("fragmented datagrams must travel as EoC")
        return cls(
            src_ip=dgram.src_ip,
            dst_ip=dgram.dst_ip,
            payload=dgram.payload,
            dscp_ecn=dgram.dscp_ecn,
            ttl=dgram.ttl,
            protocol=dgram.protocol,
        )


class ArpOp:
    REQUEST = "request"
    REPLY = "reply"
    GRATUITOUS_REPLY = "gratuitous-reply"


@dataclass(frozen=True)
class ArpMessage:
    op: str
    sha: MacAddress
    spa: Ipv4Address
    tha: MacAddress
    tpa: Ipv4Address

    def __post_init__(self):
        if self.op == ArpOp.GRATUITOUS_REPLY and self.spa != self.tpa:
            raise ValueError("gratuitous reply announces its own binding (spa == tpa)")
        if self.op == ArpOp.REPLY and self.spa == self.tpa:
            raise ValueError("a reply with spa == tpa is gratuitous")
        if self.op == ArpOp.REQUEST and self.tha != ZERO_MAC:
            raise ValueError("request leaves tha zero")


def ipv4_checksum(header: bytes) -> int:
    """RFC 791 header checksum (ones' complement of the 16-bit sum)."""
    if len(header) % 2:
        header += b"\x00"
    total = sum(struct.unpack(f">{len(header) // 2}H", header))
    while total > 0xFFFF:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def make_af_from_da(da: MacAddress) -> int:
    """Pack DA octets 0..3 big-endian into the acceptance field.

    Copying the leading four octets keeps the I/G bit (octet 0, bit 0)
    inside the AF, so group frames remain recognizable to the hardware
    filter."""
    return int.from_bytes(da.octets[:4], "big")


def af_filter_match(af: int, own_da: MacAddress) -> bool:
    """Hardware acceptance filter of an EoC node.

    Passes frames whose AF equals the node's own AF image and every
    group-addressed frame.  Octets 4..5 of the DA are not represented, so
    false positives are possible; `eoc_accept` adds the software
    tie-break on the full embedded DA."""
    if af & (0x01 << 24):
        return True
    return af == make_af_from_da(own_da)


def eoc_encapsulate(eth: EthernetFrame, priority: int, vcid: int) -> CanXlFrame:
    """Embed an Ethernet frame in a CAN XL frame (preamble/FCS excluded)."""
    return CanXlFrame(
        priority=priority,
        sdt=SDT_ETHERNET,
        vcid=vcid,
        af=make_af_from_da(eth.da),
        data=eth.to_bytes(),
    )


def eoc_decapsulate(frame: CanXlFrame) -> EthernetFrame:
    """Extract the embedded Ethernet frame."""
    if frame.sdt != SDT_ETHERNET:
        raise WrongSdt(f"sdt 0x{frame.sdt:02x} does not carry Ethernet")
    if frame.sec:
        raise Malformed("extended LLC content not supported")
    if len(frame.data) < ETH_HEADER_LEN + ETH_MIN_PAYLOAD:
        raise Malformed(f"embedded frame too short ({len(frame.data)} bytes)")
    return EthernetFrame.from_bytes(frame.data)


def eoc_accept(frame: CanXlFrame, own_da: MacAddress) -> bool:
    """Two-stage receive filter of an EoC node.

    Stage 1 is the hardware AF match; stage 2 decapsulates and compares
    the full embedded DA, breaking the (rare) AF ties."""
    if frame.sdt != SDT_ETHERNET:
        raise WrongSdt(f"sdt 0x{frame.sdt:02x} does not carry Ethernet")
    if not af_filter_match(frame.af, own_da):
        return False
    eth = eoc_decapsulate(frame)
    return eth.da == own_da or eth.da.is_group()


def ioc_encode(dgram: IocDatagram, priority: int, vcid: int) -> CanXlFrame:
    """Pack the compact header + payload; destination address goes to AF."""
    if dgram.version != 4:
        raise NotPlainIpv4(f"version {dgram.version} is not IPv4")
    data = struct.pack(
        ">BBBB4s",
        (dgram.version << 4),
        dgram.dscp_ecn,
        dgram.ttl,
        dgram.protocol,
        dgram.src_ip.octets,
    ) + dgram.payload
    if len(data) > CANXL_MAX_DATA:
        raise TooLarge(f"{len(data)} bytes exceed the {CANXL_MAX_DATA} B data field")
    return CanXlFrame(
        priority=priority,
        sdt=SDT_IPV4,
        vcid=vcid,
        af=dgram.dst_ip.to_u32(),
        data=data,
    )


def ioc_encapsulate(dgram: Ipv4Datagram, priority: int, vcid: int) -> CanXlFrame:
    """Streamline a full IPv4 datagram into a CAN XL frame."""
    return ioc_encode(IocDatagram.from_ipv4(dgram), priority, vcid)


def ioc_decapsulate(frame: CanXlFrame) -> IocDatagram:
    """Rebuild the streamlined view; dst comes from AF, length from the MAC."""
    if frame.sdt != SDT_IPV4:
        raise WrongSdt(f"sdt 0x{frame.sdt:02x} does not carry streamlined IPv4")
    if frame.sec:
        raise Malformed("extended LLC content not supported")
    if len(frame.data) < IOC_HEADER_LEN:
        raise Malformed(f"compact header truncated ({len(frame.data)} bytes)")
    ver_pad, dscp_ecn, ttl, protocol, src = struct.unpack(">BBBB4s", frame.data[:8])
    return IocDatagram(
        src_ip=Ipv4Address(src),
        dst_ip=Ipv4Address.from_u32(frame.af),
        payload=frame.data[8:],
        dscp_ecn=dscp_ecn,
        ttl=ttl,
        protocol=protocol,
        version=ver_pad >> 4,
    )


def ioc_to_ethernet(dgram: IocDatagram, da: MacAddress, sa: MacAddress) -> EthernetFrame:
    """Rebuild a well-formed Ethernet/IPv4 frame from the streamlined view.

    Both MAC addresses must be supplied by the caller (a C-switch takes
    them from its extended filtering database)."""
    return EthernetFrame(da, sa, ETHERTYPE_IPV4, dgram.to_ipv4().to_bytes())


def ethernet_to_ioc(eth: EthernetFrame) -> IocDatagram:
    """Strip the Ethernet header and compact the IPv4 header.

    The IP total length drops any Ethernet minimum-frame padding."""
    if eth.ethertype != ETHERTYPE_IPV4:
        raise NotPlainIpv4(f"ethertype 0x{eth.ethertype:04x} is not IPv4")
    try:
        dgram = Ipv4Datagram.from_bytes(eth.payload)
    except Malformed as exc:
        raise NotPlainIpv4(str(exc)) from exc
    return IocDatagram.from_ipv4(dgram)


def arp_serialize(msg: ArpMessage) -> EthernetFrame:
    """Map an ARP message onto an Ethernet frame (RFC 826 layout)."""
    body = struct.pack(
        ">HHBBH6s4s6s4s",
        1,              # hardware type: Ethernet
        ETHERTYPE_IPV4,
        6, 4,
        1 if msg.op == ArpOp.REQUEST else 2,
        msg.sha.octets, msg.spa.octets,
        msg.tha.octets, msg.tpa.octets,
    )
    da = msg.tha if msg.op == ArpOp.REPLY else BROADCAST_MAC
    return EthernetFrame(da, msg.sha, ETHERTYPE_ARP, body)


def arp_parse(eth: EthernetFrame) -> ArpMessage:
    if eth.ethertype != ETHERTYPE_ARP:
        raise Malformed(f"ethertype 0x{eth.ethertype:04x} is not ARP")
    if len(eth.payload) < 28:
        raise Malformed("ARP body truncated")
    htype, ptype, hlen, plen, oper, sha, spa, tha, tpa = \
        struct.unpack(">HHBBH6s4s6s4s", eth.payload[:28])
    if (htype, ptype, hlen, plen) != (1, ETHERTYPE_IPV4, 6, 4):
        raise Malformed("not an IPv4-over-Ethernet ARP message")
    if oper == 1:
        op = ArpOp.REQUEST
    elif oper == 2:
        op = ArpOp.GRATUITOUS_REPLY if spa == tpa else ArpOp.REPLY
    else:
        raise Malformed(f"unknown ARP operation {oper}")
    return ArpMessage(op, MacAddress(sha), Ipv4Address(spa), MacAddress(tha), Ipv4Address(tpa))
