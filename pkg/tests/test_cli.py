import json

import pytest
import yaml

from canxlnet.cli import main
from canxlnet.frames import (
    EthernetFrame,
    Ipv4Address,
    Ipv4Datagram,
    MacAddress,
)


def test_simulate_eoc_baseline(tmp_path, scenario_path, capsys):
    trace = tmp_path / "t.jsonl"
    report = tmp_path / "r.json"
    rc = main(["simulate", scenario_path("eoc_baseline"),
               "--trace", str(trace), "--report", str(report)])
    assert rc == 0
    doc = json.loads(report.read_text())
    assert doc["flows"]["f1"]["delivered"] == 1
    assert trace.read_text().splitlines()
    assert "1 delivered" in capsys.readouterr().out


def test_simulate_duplicate_ip_exits_2(tmp_path, scenario_path, capsys):
    doc = yaml.safe_load(open(scenario_path("eoc_baseline")))
    doc["nodes"][1]["ip"] = doc["nodes"][0]["ip"]
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump(doc))
    rc = main(["simulate", str(bad)])
    assert rc == 2
    err = capsys.readouterr().err
    assert "n1" in err and "h1" in err


def test_simulate_missing_file_exits_2(capsys):
    assert main(["simulate", "no-such-file.yaml"]) == 2


def test_simulate_t_end_zero(tmp_path, scenario_path):
    trace = tmp_path / "t.jsonl"
    report = tmp_path / "r.json"
    rc = main(["simulate", scenario_path("eoc_baseline"), "--t-end", "0",
               "--trace", str(trace), "--report", str(report)])
    assert rc == 0
    for line in trace.read_text().splitlines():
        assert json.loads(line)["t_ns"] == 0


def test_timing_table(capsys):
    assert main(["timing", "--table"]) == 0
    out = capsys.readouterr().out
    assert "EoC 64 B datagram @ 500 kb/s" in out
    assert "122.45" in out
    assert "+14.0%" in out and "+20.0%" in out
    assert out.count("\n") == 10  # header + 7 rows + 2 gain lines


def test_timing_single_payload(capsys):
    rc = main(["timing", "--payload", "2048",
               "--arb-rate", "500000", "--data-rate", "16000000"])
    assert rc == 0
    assert "1205.95 us" in capsys.readouterr().out


def test_timing_invalid_payload_exits_2(capsys):
    assert main(["timing", "--payload", "0"]) == 2


def test_timing_without_arguments_exits_2(capsys):
    assert main(["timing"]) == 2


def test_codec_eoc_round_trip(tmp_path, capsys):
    eth = EthernetFrame(
        MacAddress.parse("aa:bb:cc:dd:ee:0f"),
        MacAddress.parse("02:00:00:00:00:01"),
        0x0800, bytes(46))
    src = tmp_path / "eth.hex"
    src.write_text(eth.to_bytes().hex())
    assert main(["codec", "--encode", "eoc", str(src)]) == 0
    out = capsys.readouterr().out
    assert "af         0xaabbccdd" in out
    assert "sdt        ethernet" in out
    encoded_hex = out.strip().splitlines()[-1]

    back = tmp_path / "frame.hex"
    back.write_text(encoded_hex)
    assert main(["codec", "--decode", str(back)]) == 0
    out2 = capsys.readouterr().out
    assert "da         aa:bb:cc:dd:ee:0f" in out2
    assert out2.strip().splitlines()[-1] == eth.to_bytes().hex()


def test_codec_ioc_round_trip(tmp_path, capsys):
    dgram = Ipv4Datagram(Ipv4Address.parse("10.0.0.1"),
                         Ipv4Address.parse("10.0.0.2"), bytes(44))
    src = tmp_path / "ip.hex"
    src.write_text(dgram.to_bytes().hex())
    assert main(["codec", "--encode", "ioc", str(src)]) == 0
    out = capsys.readouterr().out
    assert "af         0x0a000002" in out
    encoded_hex = out.strip().splitlines()[-1]

    back = tmp_path / "frame.hex"
    back.write_text(encoded_hex)
    assert main(["codec", "--decode", str(back)]) == 0
    out2 = capsys.readouterr().out
    assert "dst        10.0.0.2" in out2
    assert "total_len  64" in out2


def test_codec_truncated_exits_2(tmp_path, capsys):
    src = tmp_path / "short.hex"
    src.write_text("0102")
    assert main(["codec", "--decode", str(src)]) == 2


def test_codec_bad_hex_exits_2(tmp_path, capsys):
    src = tmp_path / "bad.hex"
    src.write_text("zz")
    assert main(["codec", "--decode", str(src)]) == 2
