"""Sweep the voltage guard band and compare P2P supply with Tripping.

The permission check tightens V_max by the guard band; Tripping only acts
above V_max. This script shows how much supply the band costs.

    python scripts/guard_band_sweep.py --seeds 0:5 --bands 0,0.001,0.0025,0.005
"""

import argparse
import dataclasses

from p2pgrid.permission import PermissionConfig
from p2pgrid.scenario import ScenarioConfig, build_inputs, run_day


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", default="0:3")
    ap.add_argument("--bands", default="0,0.001,0.0025,0.005")
    args = ap.parse_args()
    a, b = (int(x) for x in args.seeds.split(":"))
    bands = [float(x) for x in args.bands.split(",")]
    print("seed,guard_v,p2p_supplied_kwh,tripping_supplied_kwh,p2p_v_max,p2p_ahead")
    for seed in range(a, b):
        base = ScenarioConfig(seed=seed, scenario="II")
        inputs = build_inputs(base)
        trip = run_day(inputs, dataclasses.replace(base, scheme="tripping")).totals()
        for g in bands:
            cfg = dataclasses.replace(base, permission=PermissionConfig(guard_v=g))
            p2p = run_day(inputs, cfg).totals()
            print(f"{seed},{g},{p2p['prosumer_supplied_kwh']:.2f},"
                  f"{trip['prosumer_supplied_kwh']:.2f},{p2p['v_max']:.4f},"
                  f"{p2p['prosumer_supplied_kwh'] >= trip['prosumer_supplied_kwh']}")


if __name__ == "__main__":
    main()
