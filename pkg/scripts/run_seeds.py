"""Multi-seed comparison of the P2P scheme against the curtailment benchmarks.

Writes one row per (seed, scheme) with supplied energy, prosumer income,
spill and the farthest prosumer's spill fraction, plus a per-scheme summary
on stdout.

    python scripts/run_seeds.py --seeds 0:20 --out runs/seeds.csv
"""

import argparse
import csv
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from p2pgrid.feeders import bundled_feeder
from p2pgrid.permission import PermissionConfig
from p2pgrid.scenario import SCHEMES, ScenarioConfig, run_scenario_I, run_scenario_II


def parse_seeds(text: str) -> list[int]:
    if ":" in text:
        a, b = text.split(":")
        return list(range(int(a), int(b)))
    return [int(s) for s in text.split(",")]


def one_seed(seed: int, scenario: str, guard_v: float) -> list[dict]:
    perm = PermissionConfig(guard_v=guard_v)
    if scenario == "I":
        results = {"p2p": run_scenario_I(ScenarioConfig(seed=seed, permission=perm))}
    else:
        results = run_scenario_II(ScenarioConfig(seed=seed, scenario="II", permission=perm))
    net = bundled_feeder()
    rows = []
    for scheme, res in results.items():
        tot = res.totals()
        far = res.farthest_prosumer(net)
        frac = [L.spill_fraction for h, L in res.ledgers.items() if res.households[h].is_prosumer]
        rows.append({
            "seed": seed, "scheme": scheme,
            "supplied_kwh": tot["prosumer_supplied_kwh"], "prosumer_income": tot["prosumer_income"],
            "spilled_kwh": tot["prosumer_spilled_kwh"], "market_benefit": tot["market_benefit"],
            "v_max": tot["v_max"], "max_loading": tot["max_loading"],
            "farthest_spill_fraction": res.ledgers[far].spill_fraction,
            "farthest_spills_most": res.ledgers[far].spill_fraction >= max(frac),
        })
    return rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", default="0:10", help="a:b range or comma list")
    ap.add_argument("--scenario", choices=("I", "II"), default="II")
    ap.add_argument("--guard-v", type=float, default=PermissionConfig().guard_v)
    ap.add_argument("--parallel", type=int, default=1)
    ap.add_argument("--out", default="runs/seeds.csv")
    args = ap.parse_args()

    seeds = parse_seeds(args.seeds)
    t0 = time.perf_counter()
    jobs = [(s, args.scenario, args.guard_v) for s in seeds]
    if args.parallel > 1:
        with ProcessPoolExecutor(args.parallel) as pool:
            chunks = list(pool.map(one_seed, *zip(*jobs)))
    else:
        chunks = [one_seed(*j) for j in jobs]
    rows = [r for c in chunks for r in c]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)

    schemes = [s for s in SCHEMES if any(r["scheme"] == s for r in rows)]
    print(f"{len(seeds)} seeds in {time.perf_counter() - t0:.1f} s -> {out}")
    print(f"{'scheme':10s} {'supplied':>10s} {'income':>10s} {'spilled':>10s} {'v_max':>7s}")
    for s in schemes:
        sub = [r for r in rows if r["scheme"] == s]
        mean = {k: np.mean([r[k] for r in sub]) for k in ("supplied_kwh", "prosumer_income",
                                                          "spilled_kwh", "v_max")}
        print(f"{s:10s} {mean['supplied_kwh']:10.1f} {mean['prosumer_income']:10.1f} "
              f"{mean['spilled_kwh']:10.1f} {mean['v_max']:7.4f}")
    if args.scenario == "II":
        by_seed = {}
        for r in rows:
            by_seed.setdefault(r["seed"], {})[r["scheme"]] = r
        wins = sum(all(d["p2p"]["supplied_kwh"] >= d[s]["supplied_kwh"] for s in schemes if s != "p2p")
                   for d in by_seed.values())
        far = sum(d["tripping"]["farthest_spills_most"] for d in by_seed.values())
        print(f"p2p supplies the most in {wins}/{len(by_seed)} seeds; "
              f"farthest prosumer spills most under tripping in {far}/{len(by_seed)}")


if __name__ == "__main__":
    main()
