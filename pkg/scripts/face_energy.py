"""Face-authentication pipeline energy with and without the filter blocks.

Runs the shipped frame sequence twice through ``incam face`` and then tabulates
the accelerator cycle count and per-inference energy over PE counts and
datapath widths.

    python3 scripts/face_energy.py --out out/face
"""

import argparse
import csv
from pathlib import Path

from incam import nnauth as nn
from incam.cli import main as incam


def summary(path):
    with open(path, newline="") as fh:
        return {r["metric"]: r["value"] for r in csv.DictReader(fh)}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/face")
    args = ap.parse_args()
    out = Path(args.out)

    for name, extra in (("filters", []), ("no_filters", ["--no-filters"])):
        code = incam(["face", "--out", str(out / name), *extra])
        if code:
            raise SystemExit(code)
        s = summary(out / name / "face_summary.csv")
        print(f"{name:>10}: {float(s['measured_energy_per_frame']):9.3f} per frame, "
              f"NN ran {s['nn_invocations']}/{s['frames']} frames, {s['authenticated']} authenticated")
    s = summary(out / "filters" / "face_summary.csv")
    print(f"pass rates: motion {float(s['pass_rate_motion']):.3f}, detect {float(s['pass_rate_detect']):.3f}")

    topo = (400, 8, 1)
    print(f"\n{'PEs':>4} {'cycles':>7} {'util':>6} " + " ".join(f"{f'E{b}b':>8}" for b in sorted(nn.FORMATS)))
    for pes in (1, 2, 4, 8, 16, 32):
        geom = nn.AcceleratorGeometry(pes)
        cyc = nn.systolic_cycles(topo, geom)
        energies = " ".join(f"{nn.energy_estimate(cyc, geom, fmt):8.3f}" for _, fmt in sorted(nn.FORMATS.items()))
        print(f"{pes:>4} {cyc:>7} {nn.pe_utilization(topo, geom):>6.3f} {energies}")


if __name__ == "__main__":
    main()
