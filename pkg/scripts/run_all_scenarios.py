#!/usr/bin/env python3
"""Run every bundled scenario and write traces/reports to out/."""

import json
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from canxlnet.config import load_config
from canxlnet.engine import Simulation

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main() -> int:
    out_dir = ROOT / "out"
    out_dir.mkdir(exist_ok=True)
    for path in sorted((ROOT / "scenarios").glob("*.yaml")):
        trace, report = Simulation(load_config(str(path))).run()
        (out_dir / f"{path.stem}.trace.jsonl").write_text(trace)
        (out_dir / f"{path.stem}.report.json").write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n")
        sent = sum(f["sent"] for f in report["flows"].values())
        delivered = sum(f["delivered"] for f in report["flows"].values())
        drops = sum(sum(f["drops"].values()) for f in report["flows"].values())
        clashes = sum(m.get("clashes", 0) for m in report["media"].values())
        print(f"{path.stem:28} sent={sent:2d} delivered={delivered:2d} "
              f"drops={drops:2d} clashes={clashes}")
    print(f"\nwrote traces and reports to {out_dir}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
