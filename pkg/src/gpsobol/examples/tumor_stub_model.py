"""Stand-in for an expensive tumour simulation.

Reads a CSV of parameter rows (header first) and writes one output per row.
The response is a smooth made-up function of the six inputs, dominated by
vessel permeability and lymphatic drainage; it has no physical meaning.

Usage: python tumor_stub_model.py INPUT.csv OUTPUT.txt
"""

import csv
import math
import sys

RANGES = {
    "Lp_v": (7.8e-8, 125e-8),
    "P_v": (3.2e-5, 128e-5),
    "D_NP_l": (0.26, 30.83),
    "LpSV_ly": (0.0, 5.2e-4),
    "gamma_kill_t": (5e-4, 10e-4),
    "gamma_kill_h": (2e-4, 7e-4),
}


def response(row):
    u = {k: (float(row[k]) - lo) / (hi - lo) for k, (lo, hi) in RANGES.items()}
    uptake = 1.0 - math.exp(-3.0 * u["P_v"])
    drainage = 0.6 * u["LpSV_ly"] * (1.0 + 0.5 * u["Lp_v"])
    spread = 0.15 * math.sqrt(u["D_NP_l"])
    kill = 0.05 * (u["gamma_kill_t"] - u["gamma_kill_h"])
    return uptake - drainage + spread + kill


def main(src, dst):
    with open(src, newline="") as fh:
        rows = list(csv.DictReader(fh))
    with open(dst, "w") as fh:
        fh.writelines(f"{response(r)!r}\n" for r in rows)


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
