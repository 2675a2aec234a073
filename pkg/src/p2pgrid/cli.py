"""Command line: ``p2pgrid run | sensitivity | gen-profiles``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .agents import AgentError, CONSUMER, PROSUMER1, PROSUMER2
from .config import ConfigError, digest_bytes, load_config, make_manifest
from .feeders import bundled_feeder, five_node
from .network import NetworkError, build_matrices, load_network
from .powerflow import PowerFlowDiverged, solve_power_flow
from .profiles import (
    DataFileError, default_tariffs, generate_profiles, load_injections, write_profiles,
    write_tariffs,
)
from .scenario import (
    SCHEMES, ScenarioConfig, ScenarioError, build_inputs, run_day, write_report,
)
from .sensitivity import (
    SensitivityError, bec, compute_bundle, dump_bundle, finite_difference_check,
    predict_voltage_change, ptdf,
)

log = logging.getLogger("p2pgrid")

EXIT_INPUT = 2
EXIT_NUMERIC = 3


def _run_one(config: ScenarioConfig, out_dir: str) -> str:
    inputs = build_inputs(config)
    result = run_day(inputs, config)
    write_report(result, out_dir, inputs.net)
    return config.scheme


def _collect(out: Path) -> dict[str, str]:
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name not in ("manifest.json", "run.log"))
    return {str(p.relative_to(out)): digest_bytes(p.read_bytes()) for p in files}


def cmd_run(args) -> int:
    config = load_config(args.config) if args.config else ScenarioConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.scenario is not None:
        overrides["scenario"] = args.scenario
    scenario = overrides.get("scenario", config.scenario)
    scheme = args.scheme or ("p2p" if scenario == "I" else config.scheme)
    if scenario == "I" and scheme not in ("p2p",):
        raise ScenarioError("scenario I only runs the p2p scheme")
    schemes = list(SCHEMES) if scheme == "all" else [scheme]
    if args.scheme is None and args.config and args.config.endswith(".json"):
        schemes = _manifest_schemes(args.config) or schemes
    config = dataclasses.replace(config, **overrides, scheme=schemes[0])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.addHandler(handler)
    try:
        t0 = time.perf_counter()
        build_inputs(config)  # validate inputs before spending time on runs
        jobs = [(dataclasses.replace(config, scheme=s), str(out / s if len(schemes) > 1 else out))
                for s in schemes]
        log.info("scenario %s, schemes %s, seed %d", scenario, ",".join(schemes), config.seed)
        if args.parallel > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=args.parallel) as pool:
                list(pool.map(_run_one, *zip(*jobs)))
        else:
            for cfg, d in jobs:
                _run_one(cfg, d)
                log.info("finished %s", cfg.scheme)
        if len(schemes) > 1:
            _write_comparison_from_dirs(out, schemes)
        manifest = make_manifest(config, schemes, _collect(out), time.perf_counter() - t0)
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        log.info("wrote %s", out)
    finally:
        log.removeHandler(handler)
        handler.close()
    print(f"wrote {out}")
    return 0


def _manifest_schemes(path: str) -> list[str] | None:
    """Schemes recorded in a run manifest, so that re-running it repeats every run."""
    schemes = json.loads(Path(path).read_text()).get("schemes")
    if schemes is None:
        return None
    if not isinstance(schemes, list) or not all(s in SCHEMES for s in schemes):
        raise ConfigError(f"{path}: 'schemes' must list known schemes")
    return schemes


def _write_comparison_from_dirs(out: Path, schemes: list[str]) -> None:
    rows = []
    for s in schemes:
        summary = json.loads((out / s / "summary.json").read_text())
        rows.append((s, summary["prosumer_supplied_kwh"], summary["prosumer_income"],
                     summary["prosumer_spilled_kwh"], summary["v_max"], summary["max_loading"]))
    from .scenario import _write_csv

    _write_csv(out / "comparison.csv", ("scheme", "supplied_kwh", "prosumer_income",
                                        "spilled_kwh", "v_max", "max_loading"), rows)


def _resolve_network(spec: str | None, households: str | None):
    if spec in (None, "bundled"):
        return bundled_feeder()
    if spec == "five-node":
        return five_node()
    return load_network(spec, households)


def _parse_trade(text: str, base_kva: float) -> tuple[int, int, float]:
    try:
        i, j, size = text.split(":")
        size = size.strip().lower()
        if size.endswith("kw"):
            p = float(size[:-2]) / base_kva
        elif size.endswith("pu"):
            p = float(size[:-2])
        else:
            p = float(size) / base_kva
        return int(i), int(j), p
    except ValueError:
        raise ConfigError(f"--trade expects seller:buyer:size (e.g. 3:4:2kW), got {text!r}") from None


def cmd_sensitivity(args) -> int:
    net = _resolve_network(args.network, args.households)
    inj = (load_injections(args.injections, net.n_nodes, net.base_kva)
           if args.injections else np.zeros(net.n_nodes, dtype=complex))
    mats = build_matrices(net)
    op = solve_power_flow(net, inj)
    bundle = compute_bundle(mats, op, inj)
    if args.out:
        for p in dump_bundle(bundle, net, args.out):
            print(f"wrote {p}")
    if args.check:
        rep = finite_difference_check(net, inj)
        print(f"finite-difference check: max relative error {rep.max_rel_error:.3e} "
              f"(vsc {rep.max_rel_error_vsc:.3e}, lsf {rep.max_rel_error_lsf:.3e}, "
              f"{rep.n_compared} entries)")
    if args.trade:
        i, j, p = _parse_trade(args.trade, net.base_kva)
        for node in (i, j):
            if not 0 <= node < net.n_nodes:
                raise ConfigError(f"--trade: node {node} not in the network")
        dv = predict_voltage_change(bundle, i, j, p, inj)
        print(f"trade {i} -> {j}, {p:.6g} pu")
        print("node,v_pu,dv_pu")
        for m in range(net.n_nodes):
            print(f"{m},{abs(op.V[m]):.6f},{dv[m]:.6e}")
        print("line,from,to,ptdf")
        for k, (ln, f) in enumerate(zip(net.lines, ptdf(bundle.isf, i, j))):
            print(f"{k},{ln.from_node},{ln.to_node},{f:+.6f}")
        print(f"bec,{bec(bundle.dPloss_dP, i, j):.6e}")
    return 0


def cmd_gen_profiles(args) -> int:
    counts = [int(x) for x in args.census.split(",")]
    if len(counts) != 3 or min(counts) < 0:
        raise ConfigError("--census expects consumers,prosumer1,prosumer2")
    kinds = [CONSUMER] * counts[0] + [PROSUMER1] * counts[1] + [PROSUMER2] * counts[2]
    rng = np.random.default_rng(args.seed)
    kinds = [kinds[k] for k in rng.permutation(len(kinds))]
    ids = [f"h{n + 1:03d}" for n in range(len(kinds))]
    with_pv = {h for h, k in zip(ids, kinds) if k != CONSUMER}
    profiles = generate_profiles(ids, with_pv, args.seed, args.slots, args.slot_hours, args.pv_kwp)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_profiles(profiles, out / "profiles.csv")
    write_tariffs(default_tariffs(args.slots, args.slot_hours), out / "tariffs.csv")
    with (out / "households.csv").open("w") as fh:
        fh.write("household_id,node,type\n")
        for n, (h, k) in enumerate(zip(ids, kinds), start=1):
            fh.write(f"{h},{n},{k}\n")
        if args.ces_node:
            fh.write(f"CES,{args.ces_node},ces\n")
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="p2pgrid", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a day and write reports")
    r.add_argument("--config", help="TOML config or JSON run manifest")
    r.add_argument("--scenario", choices=("I", "II"))
    r.add_argument("--scheme", choices=(*SCHEMES, "all"))
    r.add_argument("--seed", type=int)
    r.add_argument("--out", default="runs/latest")
    r.add_argument("--parallel", type=int, default=1, metavar="N")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sensitivity", help="dump VSC/ISF/LSF tables")
    s.add_argument("--network", help="feeder file, or 'bundled' / 'five-node'")
    s.add_argument("--households")
    s.add_argument("--injections", help="CSV node,p_kw,q_kvar (generation positive)")
    s.add_argument("--out")
    s.add_argument("--check", action="store_true", help="compare with finite differences")
    s.add_argument("--trade", help="seller:buyer:size, e.g. 3:4:2kW")
    s.set_defaults(func=cmd_sensitivity)

    g = sub.add_parser("gen-profiles", help="write seeded synthetic profiles")
    g.add_argument("--census", default="50,40,10", help="consumers,prosumer1,prosumer2")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--slots", type=int, default=96)
    g.add_argument("--slot-hours", type=float, default=0.25)
    g.add_argument("--pv-kwp", type=float, default=5.0)
    g.add_argument("--ces-node", type=int, default=101,
                   help="node of the CES in households.csv (0 to omit)")
    g.add_argument("--out", default="profiles")
    g.set_defaults(func=cmd_gen_profiles)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    log.setLevel(logging.INFO)
    log.propagate = args.verbose
    try:
        return args.func(args)
    except (ConfigError, DataFileError, NetworkError, ScenarioError, AgentError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (PowerFlowDiverged, SensitivityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
