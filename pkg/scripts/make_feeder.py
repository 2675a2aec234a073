"""Regenerate the bundled feeder files (src/p2pgrid/data/feeder.csv, households.csv).

Topology: a 40-span trunk with two laterals of 30 spans and a CES
connection at trunk node 20. One household per trunk/lateral node.
Impedances are single-phase-equivalent values chosen so that the feeder is
voltage-limited under high PV export and stays inside the statutory band
under evening demand.
"""

import argparse
from pathlib import Path

TRUNK = 40
LATERAL_A = (12, 30)  # (branching trunk node, spans)
LATERAL_B = (24, 30)
CES_AT = 20

# ohm per span and kVA ratings
HEAD = (0.0040, 0.0080, 400.0)
TRUNK_SPAN = (0.00130, 0.00055, 300.0)
LATERAL_SPAN = (0.00105, 0.00045, 150.0)
CES_CABLE = (0.0010, 0.0004, 60.0)


def build():
    rows = [(0, 1, *HEAD)]
    for k in range(1, TRUNK):
        rows.append((k, k + 1, *TRUNK_SPAN))
    node = TRUNK
    for at, spans in (LATERAL_A, LATERAL_B):
        prev = at
        for _ in range(spans):
            node += 1
            rows.append((prev, node, *LATERAL_SPAN))
            prev = node
    houses = [(f"h{n:03d}", n) for n in range(1, node + 1)]
    node += 1
    rows.append((CES_AT, node, *CES_CABLE))
    return rows, houses, node


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=Path(__file__).resolve().parents[1] / "src/p2pgrid/data")
    args = ap.parse_args()
    out = Path(args.out)
    rows, houses, ces_node = build()
    with (out / "feeder.csv").open("w") as fh:
        fh.write("# bundled 100-household LV feeder (single-phase equivalent)\n")
        fh.write(f"# CES connection node: {ces_node}\n")
        fh.write("base_kva = 100\nbase_v = 230\nslack_pu = 1.02\n")
        fh.write("from,to,r_ohm,x_ohm,capacity_kva\n")
        for r in rows:
            fh.write(",".join(str(v) for v in r) + "\n")
    with (out / "households.csv").open("w") as fh:
        fh.write("household_id,node\n")
        for hid, n in houses:
            fh.write(f"{hid},{n}\n")
        fh.write(f"CES,{ces_node}\n")


if __name__ == "__main__":
    main()
