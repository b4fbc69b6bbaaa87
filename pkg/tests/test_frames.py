import pytest
from hypothesis import given, strategies as st

from canxlnet import frames
from canxlnet.frames import (
    ArpMessage,
    ArpOp,
    BROADCAST_MAC,
    CanXlFrame,
    EthernetFrame,
    Ipv4Address,
    Ipv4Datagram,
    IocDatagram,
    MacAddress,
    ZERO_MAC,
    af_filter_match,
    arp_parse,
    arp_serialize,
    eoc_accept,
    eoc_decapsulate,
    eoc_encapsulate,
    ethernet_to_ioc,
    ioc_decapsulate,
    ioc_encapsulate,
    ioc_encode,
    ioc_to_ethernet,
    ipv4_checksum,
    make_af_from_da,
)


def reference_checksum(header: bytes) -> int:
    # Independent ones'-complement reference: byte-pair loop with end-around
    # carry after every addition.
    total = 0
    padded = header + b"\x00" if len(header) % 2 else header
    for i in range(0, len(padded), 2):
        total += (padded[i] << 8) | padded[i + 1]
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


macs = st.binary(min_size=6, max_size=6).map(MacAddress)
unicast_macs = macs.map(lambda m: MacAddress(bytes([m.octets[0] & 0xFE]) + m.octets[1:]))
ips = st.binary(min_size=4, max_size=4).map(Ipv4Address)

M1 = MacAddress.parse("aa:bb:cc:dd:ee:0f")
M2 = MacAddress.parse("02:00:00:00:00:01")
IP1 = Ipv4Address.parse("10.0.0.1")
IP2 = Ipv4Address.parse("10.0.0.2")


class TestAcceptanceField:
    def test_copies_leading_octets(self):
        assert make_af_from_da(M1) == 0xAABBCCDD

    def test_zero(self):
        assert make_af_from_da(ZERO_MAC) == 0x00000000

    def test_group_bit_lands_in_bit_24(self):
        af = make_af_from_da(MacAddress.parse("01:00:5e:00:00:01"))
        assert af == 0x01005E00
        assert af & (1 << 24)

    def test_exact_match_passes(self):
        assert af_filter_match(make_af_from_da(M1), M1)

    def test_group_always_passes(self):
        assert af_filter_match(make_af_from_da(BROADCAST_MAC), M2)
        assert af_filter_match(0x01000000, M2)

    def test_false_positive_by_construction(self):
        victim = MacAddress.parse("aa:bb:cc:dd:00:00")
        assert victim != M1
        assert af_filter_match(make_af_from_da(M1), victim)

    def test_false_positives_exist_by_search(self):
        # Brute force: every address sharing the leading four octets clashes.
        base = MacAddress.parse("aa:bb:cc:dd:00:00")
        clashes = 0
        for last in range(8):
            other = MacAddress(base.octets[:5] + bytes([last]))
            if other != base and af_filter_match(make_af_from_da(base), other):
                clashes += 1
        assert clashes == 7

    @given(macs)
    def test_no_false_negatives(self, mac):
        assert af_filter_match(make_af_from_da(mac), mac)


class TestEoc:
    def test_minimal_frame(self):
        eth = EthernetFrame(M1, M2, 0x0800, bytes(46))
        frame = eoc_encapsulate(eth, 0x100, 0)
        assert frame.sdt == frames.SDT_ETHERNET
        assert frame.af == 0xAABBCCDD
        assert len(frame.data) == 60
        assert frame.sec is False

    def test_64_byte_datagram(self):
        eth = EthernetFrame(M1, M2, 0x0800, bytes(64))
        assert len(eoc_encapsulate(eth, 0, 0).data) == 78

    def test_broadcast_af(self):
        eth = EthernetFrame(BROADCAST_MAC, M2, 0x0806, bytes(46))
        frame = eoc_encapsulate(eth, 0, 0)
        assert frame.af == 0xFFFFFFFF
        assert frame.af & (1 << 24)

    def test_round_trip(self):
        eth = EthernetFrame(M1, M2, 0x0800, bytes(range(46)))
        assert eoc_decapsulate(eoc_encapsulate(eth, 5, 7)) == eth

    def test_wrong_sdt(self):
        frame = CanXlFrame(1, frames.SDT_IPV4, 0, 0, bytes(60))
        with pytest.raises(frames.WrongSdt):
            eoc_decapsulate(frame)

    def test_short_data(self):
        frame = CanXlFrame(1, frames.SDT_ETHERNET, 0, 0, bytes(10))
        with pytest.raises(frames.Malformed):
            eoc_decapsulate(frame)

    @given(unicast_macs, unicast_macs, st.integers(0, 0xFFFF),
           st.binary(max_size=1500), st.integers(0, 2047), st.integers(0, 255))
    def test_round_trip_property(self, da, sa, ethertype, payload, prio, vcid):
        eth = EthernetFrame(da, sa, ethertype, payload)
        frame = eoc_encapsulate(eth, prio, vcid)
        assert eoc_decapsulate(frame) == eth
        assert frame.af == make_af_from_da(eth.da)
        assert 1 <= len(frame.data) <= 2048


class TestEocAccept:
    def test_own_frame(self):
        frame = eoc_encapsulate(EthernetFrame(M1, M2, 0x0800, bytes(46)), 0, 0)
        assert eoc_accept(frame, M1)

    def test_af_tie_broken_in_software(self):
        near_miss = MacAddress.parse("aa:bb:cc:dd:ee:00")
        frame = eoc_encapsulate(EthernetFrame(near_miss, M2, 0x0800, bytes(46)), 0, 0)
        assert af_filter_match(frame.af, M1)  # hardware stage clashes
        assert not eoc_accept(frame, M1)      # software stage rejects

    def test_broadcast(self):
        frame = eoc_encapsulate(EthernetFrame(BROADCAST_MAC, M2, 0x0806, bytes(46)), 0, 0)
        assert eoc_accept(frame, M1)

    def test_hardware_stage_mismatch(self):
        frame = eoc_encapsulate(EthernetFrame(M2, M1, 0x0800, bytes(46)), 0, 0)
        assert not eoc_accept(frame, M1)


def make_dgram(payload: bytes, src=IP1, dst=IP2, **kw) -> Ipv4Datagram:
    return Ipv4Datagram(src, dst, payload, **kw)


class TestIoc:
    def test_64_byte_datagram(self):
        frame = ioc_encapsulate(make_dgram(bytes(44)), 0x100, 0)
        assert len(frame.data) == 52
        assert frame.af == IP2.to_u32()
        assert frame.sdt == frames.SDT_IPV4

    def test_af_is_destination(self):
        frame = ioc_encapsulate(make_dgram(bytes(44), dst=Ipv4Address.parse("10.0.0.2")), 0, 0)
        assert frame.af == 0x0A000002

    def test_fragment_rejected(self):
        with pytest.raises(frames.NotPlainIpv4):
            ioc_encapsulate(make_dgram(bytes(44), fragment_offset=7), 0, 0)
        with pytest.raises(frames.NotPlainIpv4):
            ioc_encapsulate(make_dgram(bytes(44), flags=frames.IPV4_MF), 0, 0)

    def test_options_rejected(self):
        with pytest.raises(frames.NotPlainIpv4):
            ioc_encapsulate(make_dgram(bytes(44), options=bytes(4)), 0, 0)

    def test_too_large(self):
        with pytest.raises(frames.TooLarge):
            ioc_encapsulate(make_dgram(bytes(2041)), 0, 0)

    def test_round_trip_and_total_length(self):
        dgram = make_dgram(bytes(44))
        back = ioc_decapsulate(ioc_encapsulate(dgram, 9, 3))
        assert back == IocDatagram.from_ipv4(dgram)
        assert back.total_length == 64

    def test_wrong_sdt(self):
        frame = CanXlFrame(1, frames.SDT_ETHERNET, 0, 0, bytes(60))
        with pytest.raises(frames.WrongSdt):
            ioc_decapsulate(frame)

    def test_empty_payload_boundary(self):
        frame = ioc_encode(IocDatagram(IP1, IP2, b""), 0, 0)
        assert len(frame.data) == 8
        assert ioc_decapsulate(frame).payload == b""

    def test_eoc_minus_ioc_is_26(self):
        dgram = make_dgram(bytes(44))
        eoc = eoc_encapsulate(EthernetFrame(M1, M2, 0x0800, dgram.to_bytes()), 0, 0)
        ioc = ioc_encapsulate(dgram, 0, 0)
        assert len(eoc.data) - len(ioc.data) == 26

    @given(ips, ips, st.binary(min_size=26, max_size=1480),
           st.integers(0, 255), st.integers(1, 255), st.integers(0, 255))
    def test_size_delta_property(self, src, dst, payload, dscp, ttl, proto):
        # Below 26 B of payload the Ethernet minimum-frame padding inflates
        # the tunneled form and the fixed 26-byte delta no longer applies.
        dgram = Ipv4Datagram(src, dst, payload, dscp_ecn=dscp, ttl=ttl, protocol=proto)
        eoc = eoc_encapsulate(EthernetFrame(M1, M2, 0x0800, dgram.to_bytes()), 0, 0)
        ioc = ioc_encapsulate(dgram, 0, 0)
        assert len(eoc.data) - len(ioc.data) == 26

    @given(ips, ips, st.binary(max_size=2040), st.integers(0, 255),
           st.integers(1, 255), st.integers(0, 255))
    def test_round_trip_property(self, src, dst, payload, dscp, ttl, proto):
        dgram = IocDatagram(src, dst, payload, dscp_ecn=dscp, ttl=ttl, protocol=proto)
        assert ioc_decapsulate(ioc_encode(dgram, 11, 0)) == dgram


class TestIpv4Rebuild:
    def test_checksum_against_reference(self):
        dgram = IocDatagram(IP1, IP2, bytes(44))
        eth = ioc_to_ethernet(dgram, M1, M2)
        header = eth.payload[:20]
        assert reference_checksum(header) == 0  # checksum over full header sums to zero
        assert ipv4_checksum(header) == 0
        # and the stored value equals the reference computed over the rest
        zeroed = header[:10] + b"\x00\x00" + header[12:]
        stored = int.from_bytes(header[10:12], "big")
        assert stored == reference_checksum(zeroed)

    def test_rebuilt_header_fields(self):
        eth = ioc_to_ethernet(IocDatagram(IP1, IP2, bytes(44)), M1, M2)
        assert eth.ethertype == 0x0800
        assert len(eth.payload) == 64
        dgram = Ipv4Datagram.from_bytes(eth.payload)
        assert dgram.identification == 0
        assert dgram.flags == frames.IPV4_DF
        assert dgram.fragment_offset == 0
        assert dgram.total_length == 64

    def test_small_payload_padding(self):
        eth = ioc_to_ethernet(IocDatagram(IP1, IP2, bytes(10)), M1, M2)
        assert len(eth.payload) == 46  # padded to the Ethernet minimum
        dgram = Ipv4Datagram.from_bytes(eth.payload)
        assert dgram.total_length == 30
        assert len(dgram.payload) == 10  # total length drops the padding

    def test_round_trip(self):
        d = IocDatagram(IP1, IP2, bytes(range(44)), dscp_ecn=7, ttl=12, protocol=17)
        assert ethernet_to_ioc(ioc_to_ethernet(d, M1, M2)) == d

    def test_arp_is_not_plain_ipv4(self):
        eth = arp_serialize(ArpMessage(ArpOp.REQUEST, M2, IP1, ZERO_MAC, IP2))
        with pytest.raises(frames.NotPlainIpv4):
            ethernet_to_ioc(eth)

    def test_fragmented_falls_back(self):
        dgram = make_dgram(bytes(44), fragment_offset=2)
        eth = EthernetFrame(M1, M2, 0x0800, dgram.to_bytes())
        with pytest.raises(frames.NotPlainIpv4):
            ethernet_to_ioc(eth)

    @given(ips, ips, st.binary(max_size=1400), st.integers(0, 255),
           st.integers(1, 255), st.integers(0, 255), unicast_macs, unicast_macs)
    def test_round_trip_property(self, src, dst, payload, dscp, ttl, proto, da, sa):
        d = IocDatagram(src, dst, payload, dscp_ecn=dscp, ttl=ttl, protocol=proto)
        assert ethernet_to_ioc(ioc_to_ethernet(d, da, sa)) == d


class TestArp:
    def test_request_is_broadcast(self):
        eth = arp_serialize(ArpMessage(ArpOp.REQUEST, M2, IP1, ZERO_MAC, IP2))
        assert eth.da == BROADCAST_MAC
        assert eth.ethertype == 0x0806

    def test_reply_is_unicast(self):
        eth = arp_serialize(ArpMessage(ArpOp.REPLY, M1, IP2, M2, IP1))
        assert eth.da == M2

    def test_gratuitous(self):
        msg = ArpMessage(ArpOp.GRATUITOUS_REPLY, M1, IP1, ZERO_MAC, IP1)
        eth = arp_serialize(msg)
        assert eth.da == BROADCAST_MAC
        parsed = arp_parse(eth)
        assert parsed.op == ArpOp.GRATUITOUS_REPLY
        assert parsed.spa == parsed.tpa

    def test_gratuitous_requires_matching_addresses(self):
        with pytest.raises(ValueError):
            ArpMessage(ArpOp.GRATUITOUS_REPLY, M1, IP1, ZERO_MAC, IP2)

    def test_round_trip_all_kinds(self):
        for msg in (
            ArpMessage(ArpOp.REQUEST, M2, IP1, ZERO_MAC, IP2),
            ArpMessage(ArpOp.REPLY, M1, IP2, M2, IP1),
            ArpMessage(ArpOp.GRATUITOUS_REPLY, M1, IP1, ZERO_MAC, IP1),
        ):
            assert arp_parse(arp_serialize(msg)) == msg

    def test_malformed(self):
        eth = EthernetFrame(BROADCAST_MAC, M2, 0x0806, b"\x00\x07" + bytes(44))
        with pytest.raises(frames.Malformed):
            arp_parse(eth)

    @given(unicast_macs, ips, unicast_macs, ips)
    def test_round_trip_property(self, sha, spa, tha, tpa):
        for msg in (
            ArpMessage(ArpOp.REQUEST, sha, spa, ZERO_MAC, tpa),
            ArpMessage(ArpOp.GRATUITOUS_REPLY, sha, spa, tha, spa),
        ):
            assert arp_parse(arp_serialize(msg)) == msg
        if spa != tpa:
            msg = ArpMessage(ArpOp.REPLY, sha, spa, tha, tpa)
            assert arp_parse(arp_serialize(msg)) == msg


class TestWireTypes:
    def test_mac_group_bit(self):
        assert BROADCAST_MAC.is_group()
        assert not M2.is_group()
        assert MacAddress.parse("01:80:c2:00:00:00").is_group()

    def test_priority_range(self):
        with pytest.raises(ValueError):
            CanXlFrame(2048, frames.SDT_ETHERNET, 0, 0, b"\x00")

    def test_data_bounds(self):
        with pytest.raises(ValueError):
            CanXlFrame(0, frames.SDT_ETHERNET, 0, 0, b"")
        with pytest.raises(ValueError):
            CanXlFrame(0, frames.SDT_ETHERNET, 0, 0, bytes(2049))

    def test_canxl_byte_round_trip(self):
        frame = CanXlFrame(0x123, frames.SDT_IPV4, 9, 0xDEADBEEF, bytes(16))
        assert CanXlFrame.from_bytes(frame.to_bytes()) == frame

    def test_sdt_values_distinct(self):
        values = list(frames.SDT_NAMES)
        assert len(values) == len(set(values))
        assert all(0 <= v <= 0xFF for v in values)

    def test_ethernet_padding_records_pre_pad_length(self):
        eth = EthernetFrame(M1, M2, 0x88B6, bytes(10))
        assert len(eth.payload) == 46
        assert eth.payload_len == 10

    def test_classic_bounds(self):
        with pytest.raises(ValueError):
            frames.ClassicCanFrame(0x800, b"")
        with pytest.raises(ValueError):
            frames.ClassicCanFrame(0x100, bytes(9))

    @given(st.binary(max_size=60))
    def test_ipv4_serialize_parse(self, payload):
        dgram = make_dgram(payload)
        assert Ipv4Datagram.from_bytes(dgram.to_bytes()) == dgram

    def test_ipv4_bad_checksum_rejected(self):
        raw = bytearray(make_dgram(bytes(26)).to_bytes())
        raw[10] ^= 0xFF
        with pytest.raises(frames.Malformed):
            Ipv4Datagram.from_bytes(bytes(raw))
