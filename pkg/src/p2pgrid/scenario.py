"""Full-day simulations: the P2P market with network permission and the
curtailment benchmarks it is compared against.

Scenario I runs the market with a local-balance rule (prosumer supply is
capped at the community's demand, CES included). Scenario II lets
prosumers export whatever the network accepts and compares four schemes on
identical inputs: ``p2p``, ``redcap`` (static export cap), ``tripping``
(inverter overvoltage protection) and ``apcolp`` (droop-based curtailment).
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .agents import (
    CES, CONSUMER, PROSUMER1, PROSUMER2, BatterySpec, CesConfig, HouseholdProfile, TariffSchedule,
    ces_policy, hems_schedule, make_trader,
)
from .feeders import bundled_feeder_text, bundled_households_path
from .market import ZipParams, ZipPopulation, run_trading_window
from .network import Network, build_matrices, load_households, parse_network
from .permission import PermissionConfig, PermissionState, settle_retailer_residuals
from .powerflow import PowerFlowSolver, line_flows
from .profiles import DataFileError, default_tariffs, generate_profiles, load_profiles, load_tariffs
from .sensitivity import compute_bundle, injection_shift_factors

SCHEMES = ("p2p", "redcap", "tripping", "apcolp")


class ScenarioError(ValueError):
    pass


# ------------------------------------------------------------------ config

@dataclass(frozen=True)
class Census:
    consumers: int = 50
    prosumer1: int = 40
    prosumer2: int = 10

    @property
    def total(self) -> int:
        return self.consumers + self.prosumer1 + self.prosumer2


@dataclass(frozen=True)
class MarketConfig:
    activations_per_trader: float = 10.0  # expected activations per trader per window
    window: tuple[float, float] = (0.0, 1.0)  # logical trading window [t_st, t_end)
    zip: ZipParams = ZipParams()


@dataclass(frozen=True)
class BenchmarkConfig:
    redcap_kw: float = 3.0
    v_cri: float = 1.06
    droop_damping: float = 0.5
    droop_tol: float = 1e-7  # kWh
    droop_max_iter: int = 500


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    scenario: str = "I"  # "I" | "II"
    scheme: str = "p2p"
    network: str | None = None  # None selects the bundled feeder
    households: str | None = None
    profiles: str | None = None  # None generates seeded synthetic profiles
    tariffs: str | None = None  # None selects the default ToU/FiT schedule
    n_slots: int = 96
    slot_hours: float = 0.25
    census: Census = Census()
    pv_kwp: float = 5.0
    battery: BatterySpec = BatterySpec(3.0, 10.0, efficiency=0.95)
    ces_enabled: bool = True  # the CES trades only through the market (p2p scheme)
    ces: CesConfig = CesConfig()
    market: MarketConfig = MarketConfig()
    permission: PermissionConfig = PermissionConfig()
    benchmark: BenchmarkConfig = BenchmarkConfig()

    def __post_init__(self):
        if self.scenario not in ("I", "II"):
            raise ScenarioError(f"unknown scenario {self.scenario!r}")
        if self.scheme not in SCHEMES:
            raise ScenarioError(f"unknown scheme {self.scheme!r}")
        if self.scenario == "I" and self.scheme != "p2p":
            raise ScenarioError("scenario I only runs the p2p scheme")
        if self.n_slots <= 0 or self.slot_hours <= 0:
            raise ScenarioError("horizon must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


# ------------------------------------------------------------------ inputs

@dataclass(frozen=True)
class ScenarioInputs:
    net: Network
    households: tuple[HouseholdProfile, ...]  # excludes the CES
    tariffs: TariffSchedule
    ces_node: int | None

    def by_kind(self, kind: str) -> list[HouseholdProfile]:
        return [h for h in self.households if h.kind == kind]


def _seed_streams(seed: int, n_slots: int):
    root = np.random.SeedSequence(seed)
    census_ss, profile_ss, market_ss = root.spawn(3)
    return census_ss, profile_ss, market_ss.spawn(n_slots)


def build_inputs(config: ScenarioConfig) -> ScenarioInputs:
    """Resolve network, census, profiles and tariffs (deterministic in the seed)."""
    if config.network is None:
        text, source = bundled_feeder_text(), "feeder.csv"
    else:
        text, source = Path(config.network).read_text(), str(config.network)
    if config.households is None:
        hh_path = bundled_households_path()
        binding, types = load_households(hh_path)  # type: ignore[arg-type]
    else:
        binding, types = load_households(config.households)
    net = parse_network(text, source=source, households=binding)

    ces_ids = [h for h, k in types.items() if k == CES] or [h for h in binding if h.upper() == "CES"]
    ces_node = binding[ces_ids[0]] if ces_ids else None
    ids = [h for h in binding if h not in ces_ids]
    census_ss, profile_ss, _ = _seed_streams(config.seed, config.n_slots)
    if types and all(h in types for h in ids):
        kinds = {h: types[h] for h in ids}
    else:
        c = config.census
        if c.total != len(ids):
            raise ScenarioError(f"census of {c.total} households but {len(ids)} bound to the network")
        order = np.random.default_rng(census_ss).permutation(len(ids))
        labels = [CONSUMER] * c.consumers + [PROSUMER1] * c.prosumer1 + [PROSUMER2] * c.prosumer2
        kinds = {ids[int(order[k])]: labels[k] for k in range(len(ids))}

    if config.profiles is None:
        with_pv = {h for h, k in kinds.items() if k in (PROSUMER1, PROSUMER2)}
        seed = int(profile_ss.generate_state(1)[0])
        raw = generate_profiles(ids, with_pv, seed, config.n_slots, config.slot_hours, config.pv_kwp)
    else:
        raw = load_profiles(config.profiles, config.n_slots)
        missing = [h for h in ids if h not in raw]
        if missing:
            raise DataFileError(f"{config.profiles}: no profile for households {missing[:5]}")
    if config.tariffs is None:
        tariffs = default_tariffs(config.n_slots, config.slot_hours)
    else:
        tariffs = load_tariffs(config.tariffs)
        if tariffs.n_slots != config.n_slots:
            raise DataFileError(f"{config.tariffs}: {tariffs.n_slots} slots, expected {config.n_slots}")
    profiles = tuple(
        HouseholdProfile(h, kinds[h], binding[h], raw[h].demand, raw[h].pv) for h in ids
    )
    return ScenarioInputs(net, profiles, tariffs, ces_node)


# ------------------------------------------------------------------ results

@dataclass
class Ledger:
    """Per-household cash and energy flows over the day (kWh, currency)."""

    p2p_bought: float = 0.0
    p2p_paid: float = 0.0  # clearing price plus buyer share of network charges
    p2p_sold: float = 0.0
    p2p_received: float = 0.0  # clearing price minus seller share of network charges
    imported: float = 0.0
    import_cost: float = 0.0
    exported: float = 0.0
    export_income: float = 0.0
    spilled: float = 0.0
    surplus: float = 0.0
    expenses_without: float = 0.0
    incomes_without: float = 0.0

    @property
    def expenses(self) -> float:
        return self.p2p_paid + self.import_cost

    @property
    def incomes(self) -> float:
        return self.p2p_received + self.export_income

    @property
    def supplied(self) -> float:
        return self.p2p_sold + self.exported

    @property
    def spill_fraction(self) -> float:
        return self.spilled / self.surplus if self.surplus > 0 else 0.0


@dataclass
class DayResult:
    scheme: str
    scenario: str
    seed: int
    slot_hours: float
    households: dict[str, HouseholdProfile]
    ledgers: dict[str, Ledger]
    trades: list[list]  # per slot, market Trade objects
    verdicts: list[dict]
    blocking: list[tuple[int, str, int]]  # (slot, household, blocked activations)
    injections: np.ndarray  # (T, n_nodes) final committed complex injections, pu
    vmag: np.ndarray  # (T, n_nodes) AC voltage magnitudes of the final state
    loading: np.ndarray  # (T, n_lines) line loading (fraction of capacity)
    p2p_kwh: np.ndarray  # (T,)
    import_kwh: np.ndarray
    export_kwh: np.ndarray
    spilled_kwh: np.ndarray
    ces_soc: np.ndarray | None = None
    ces_ledger: Ledger | None = None

    # -- metrics
    def atp(self) -> list[float | None]:
        return [average_transaction_price(tr) for tr in self.trades]

    def totals(self) -> dict:
        led = self.ledgers.values()
        pros = [self.ledgers[h] for h, p in self.households.items() if p.is_prosumer]
        exp_with = sum(x.expenses for x in led)
        inc_with = sum(x.incomes for x in led)
        exp_without = sum(x.expenses_without for x in led)
        inc_without = sum(x.incomes_without for x in led)
        return {
            "expenses_with": exp_with, "expenses_without": exp_without,
            "incomes_with": inc_with, "incomes_without": inc_without,
            "market_benefit": market_benefit(exp_without, exp_with, inc_with, inc_without),
            "prosumer_supplied_kwh": sum(x.supplied for x in pros),
            "prosumer_income": sum(x.incomes for x in pros),
            "prosumer_spilled_kwh": sum(x.spilled for x in pros),
            "p2p_kwh": float(self.p2p_kwh.sum()), "import_kwh": float(self.import_kwh.sum()),
            "export_kwh": float(self.export_kwh.sum()),
            "network_charges": sum(float(t.network_charge) for slot in self.trades for t in slot),
            "v_min": float(self.vmag[:, 1:].min()), "v_max": float(self.vmag[:, 1:].max()),
            "max_loading": float(self.loading.max()) if self.loading.size else 0.0,
        }

    def farthest_prosumer(self, net: Network) -> str:
        r = net.path_resistance()
        pros = [h for h, p in self.households.items() if p.is_prosumer]
        return max(pros, key=lambda h: (r[self.households[h].node], h))


def average_transaction_price(trades) -> float | None:
    """Quantity-weighted mean clearing price; None for a slot without trades."""
    q = sum(t.quantity for t in trades)
    if q <= 0:
        return None
    return sum(t.price * t.quantity for t in trades) / q


def market_benefit(expenses_without: float, expenses_with: float,
                   incomes_with: float, incomes_without: float) -> float:
    return (expenses_without - expenses_with) + (incomes_with - incomes_without)


def voltage_histogram(vmag: np.ndarray, width: float = 0.005) -> tuple[np.ndarray, np.ndarray]:
    """Counts of voltage magnitudes on a grid of ``width``-wide bins aligned to multiples of width."""
    v = np.asarray(vmag, dtype=float).ravel()
    lo = np.floor(v.min() / width + 1e-9) * width
    n_bins = max(int(np.ceil((v.max() - lo) / width - 1e-9)), 1)
    edges = np.round(lo + width * np.arange(n_bins + 1), 12)
    idx = np.clip(np.floor((v - lo) / width + 1e-9).astype(int), 0, n_bins - 1)
    return edges, np.bincount(idx, minlength=n_bins)


# ------------------------------------------------------------------ engine

class _Grid:
    """Network artefacts shared by every slot of a run."""

    def __init__(self, net: Network, config: ScenarioConfig):
        self.net = net
        self.mats = build_matrices(net)
        self.isf = injection_shift_factors(self.mats)
        p = config.permission
        self.solver = PowerFlowSolver(net, self.mats, tol=p.pf_tol, max_iter=p.pf_max_iter)
        self.capacity = np.array([ln.capacity_pu for ln in net.lines])

    def solve(self, injections):
        op = self.solver.solve(injections)
        return op, line_flows(self.net, op).loading


def _hems(inputs: ScenarioInputs, config: ScenarioConfig):
    """HEMS schedules of type-2 prosumers and the net load of every household
    (kWh per slot, positive = import before trading)."""
    schedules, net_load = {}, {}
    for h in inputs.households:
        if h.kind == PROSUMER2:
            sch = hems_schedule(h.demand, h.pv, config.battery, inputs.tariffs, config.slot_hours)
            schedules[h.household_id] = sch
            net_load[h.household_id] = sch.net_load
        elif h.kind == CONSUMER:
            net_load[h.household_id] = h.demand.copy()
        else:
            net_load[h.household_id] = h.demand - h.pv
    return schedules, net_load


def run_day(inputs: ScenarioInputs, config: ScenarioConfig) -> DayResult:
    if config.scheme == "p2p":
        return _run_p2p(inputs, config)
    return _run_benchmark(inputs, config)


def _empty_result(inputs: ScenarioInputs, config: ScenarioConfig) -> DayResult:
    T = config.n_slots
    net = inputs.net
    return DayResult(
        scheme=config.scheme, scenario=config.scenario, seed=config.seed,
        slot_hours=config.slot_hours,
        households={h.household_id: h for h in inputs.households},
        ledgers={h.household_id: Ledger() for h in inputs.households},
        trades=[[] for _ in range(T)], verdicts=[], blocking=[],
        injections=np.zeros((T, net.n_nodes), dtype=complex),
        vmag=np.zeros((T, net.n_nodes)), loading=np.zeros((T, net.n_lines)),
        p2p_kwh=np.zeros(T), import_kwh=np.zeros(T), export_kwh=np.zeros(T), spilled_kwh=np.zeros(T),
    )


def _run_p2p(inputs: ScenarioInputs, config: ScenarioConfig) -> DayResult:
    T, dt = config.n_slots, config.slot_hours
    net = inputs.net
    grid = _Grid(net, config)
    tariffs = inputs.tariffs
    schedules, net_load = _hems(inputs, config)
    res = _empty_result(inputs, config)
    led = res.ledgers
    _, _, slot_seeds = _seed_streams(config.seed, T)
    use_ces = config.ces_enabled and inputs.ces_node is not None
    ces_id = "CES"
    soc = config.ces.battery.initial_soc if use_ces else 0.0
    if use_ces:
        res.ces_soc = np.zeros(T + 1)
        res.ces_soc[0] = soc
        res.ces_ledger = Ledger()
    node_of = {h.household_id: h.node for h in inputs.households}
    if use_ces:
        node_of[ces_id] = inputs.ces_node

    for t in range(T):
        s_plus, s_minus = float(tariffs.import_price[t]), float(tariffs.export_price[t])
        intents = []
        deficits: list[tuple[str, int, float]] = []
        for h in inputs.households:
            hid = h.household_id
            nl = float(net_load[hid][t])
            if h.is_prosumer:
                led[hid].surplus += max(-nl, 0.0)
                if nl > 0:
                    deficits.append((hid, h.node, nl))
                if -nl > 1e-12:
                    intents.append(make_trader(h, tariffs, t, schedules.get(hid)))
            else:
                it = make_trader(h, tariffs, t)
                if it is not None:
                    intents.append(it)
        if use_ces:
            it = ces_policy(config.ces, tariffs, t, soc, dt, ces_id, inputs.ces_node)
            if it is not None:
                intents.append(it)

        state = PermissionState(net, np.zeros(net.n_nodes, dtype=complex), config.permission,
                                slot_hours=dt, loss_price=s_plus, mats=grid.mats, isf=grid.isf,
                                solver=grid.solver)
        rng = np.random.default_rng(slot_seeds[t])
        ids = [it.household_id for it in intents]
        is_buyer = np.array([it.side == "bid" for it in intents], dtype=bool)
        nodes = np.array([it.node for it in intents], dtype=int)
        pop = ZipPopulation(ids, is_buyer, [it.lmin for it in intents], [it.lmax for it in intents],
                            [it.quantity for it in intents], rng, config.market.zip, nodes=nodes)
        sellers = ~is_buyer

        def blocking_flags():
            flags = np.zeros(len(ids), dtype=bool)
            if sellers.any():
                flags[sellers] = state.update_blocking(nodes[sellers])
            return flags

        def validator(trade):
            v = state.validate_trade(node_of[trade.seller], node_of[trade.buyer], trade.quantity)
            if v.approved:
                c = v.costs
                trade.loss_charge = c.loss_charge
                trade.congestion_charge = c.congestion_charge
                trade.buyer_charge = c.buyer_charge
                trade.seller_charge = c.seller_charge
            return v

        blocked_count = np.zeros(len(ids), dtype=int)

        def after_trade(_trade):
            flags = blocking_flags()
            blocked_count[:] += flags
            return flags

        if len(ids):
            pop.blocked = blocking_flags()
            blocked_count += pop.blocked
        window = run_trading_window(pop, t, rng, config.market.window,
                                    config.market.activations_per_trader,
                                    validator=validator, after_trade=after_trade)
        for k in np.flatnonzero(blocked_count):
            res.blocking.append((t, ids[k], int(blocked_count[k])))

        # market cash flows
        for tr in window.trades:
            gross = tr.price * tr.quantity
            for who, bought in ((tr.buyer, True), (tr.seller, False)):
                target = res.ces_ledger if who == ces_id else led[who]
                if bought:
                    target.p2p_bought += tr.quantity
                    target.p2p_paid += gross + tr.buyer_charge
                else:
                    target.p2p_sold += tr.quantity
                    target.p2p_received += gross - tr.seller_charge
            if tr.buyer == ces_id:
                soc += tr.quantity * config.ces.battery.efficiency
            elif tr.seller == ces_id:
                soc -= tr.quantity
        res.trades[t] = window.trades
        res.p2p_kwh[t] = sum(tr.quantity for tr in window.trades)
        for v in state.verdicts:
            rec = v.record()
            rec["slot"] = t
            res.verdicts.append(rec)

        # retailer residuals; the CES only deals in the market
        unfilled_buys = list(deficits)
        unfilled_sells = []
        for k, hid in enumerate(ids):
            if hid == ces_id:
                continue
            q = window.remaining[hid]
            if q <= 1e-12:
                continue
            if is_buyer[k]:
                unfilled_buys.append((hid, int(nodes[k]), q))
            else:
                unfilled_sells.append((hid, int(nodes[k]), q, bool(pop.blocked[k])))
        cap = sum(q for _, _, q in unfilled_buys) if config.scenario == "I" else None
        n_before = len(state.verdicts)
        settled = settle_retailer_residuals(state, unfilled_buys, unfilled_sells, s_plus, s_minus,
                                            export_cap=cap)
        for v in state.verdicts[n_before:]:
            rec = v.record()
            rec["slot"] = t
            rec["export"] = True
            res.verdicts.append(rec)
        for hid, s in settled.items():
            L = led[hid]
            L.imported += s.imported
            L.import_cost += s.import_cost
            L.exported += s.exported
            L.export_income += s.export_income
            L.spilled += s.spilled
            res.import_kwh[t] += s.imported
            res.export_kwh[t] += s.exported
            res.spilled_kwh[t] += s.spilled

        res.injections[t] = state.injections
        op, loading = grid.solve(state.injections)
        res.vmag[t] = np.abs(op.V)
        res.loading[t] = loading
        if use_ces:
            soc = min(max(soc, 0.0), config.ces.battery.capacity_kwh)
            res.ces_soc[t + 1] = soc
        _counterfactual_slot(res, t, s_plus, s_minus, window.trades, settled, ces_id)
    return res


def _counterfactual_slot(res: DayResult, t: int, s_plus: float, s_minus: float,
                         trades, settled, ces_id: str) -> None:
    """Price this slot's delivered quantities at ToU (buys) and FiT (sales)."""
    led = res.ledgers
    for tr in trades:
        if tr.buyer != ces_id:
            led[tr.buyer].expenses_without += tr.quantity * s_plus
        if tr.seller != ces_id:
            led[tr.seller].incomes_without += tr.quantity * s_minus
    for hid, s in settled.items():
        led[hid].expenses_without += s.imported * s_plus
        led[hid].incomes_without += s.exported * s_minus


def _run_benchmark(inputs: ScenarioInputs, config: ScenarioConfig) -> DayResult:
    """Retailer-only operation with inverter-side curtailment."""
    T, dt = config.n_slots, config.slot_hours
    net = inputs.net
    grid = _Grid(net, config)
    bench = config.benchmark
    p = config.permission
    _, net_load = _hems(inputs, config)
    res = _empty_result(inputs, config)
    led = res.ledgers
    hh = list(inputs.households)
    nodes = np.array([h.node for h in hh], dtype=int)
    pros = np.array([h.is_prosumer for h in hh], dtype=bool)
    to_pu = 1.0 / (dt * net.base_kva)

    slopes = None
    if config.scheme == "apcolp":
        op0 = grid.solver.solve(np.zeros(net.n_nodes, dtype=complex))
        b0 = compute_bundle(grid.mats, op0, np.zeros(net.n_nodes, dtype=complex), isf=grid.isf)
        own = np.array([b0.dVmag_dP[n - 1, n - 1] for n in nodes])
        slopes = np.where(pros, own[pros].max() / np.maximum(own, 1e-12), 0.0)

    for t in range(T):
        s_plus = float(inputs.tariffs.import_price[t])
        s_minus = float(inputs.tariffs.export_price[t])
        nl = np.array([net_load[h.household_id][t] for h in hh])
        load = np.maximum(nl, 0.0)
        surplus = np.where(pros, np.maximum(-nl, 0.0), 0.0)

        def injections(export):
            inj = np.zeros(net.n_nodes, dtype=complex)
            np.add.at(inj, nodes, (export - load) * to_pu)
            return inj

        if config.scheme == "redcap":
            export = np.minimum(surplus, bench.redcap_kw * dt)
            op, loading = grid.solve(injections(export))
        elif config.scheme == "tripping":
            export = surplus.copy()
            op, loading = grid.solve(injections(export))
            while True:
                vm = np.abs(op.V)[nodes]
                over = (export > 0) & (vm > p.v_max)
                if not over.any():
                    break
                k = int(np.argmax(np.where(over, vm, -np.inf)))
                export[k] = 0.0
                op, loading = grid.solve(injections(export))
        else:  # apcolp
            export = surplus.copy()
            op, loading = grid.solve(injections(export))
            span = p.v_max - bench.v_cri
            for _ in range(bench.droop_max_iter):
                vm = np.abs(op.V)[nodes]
                frac = np.clip(slopes * (vm - bench.v_cri) / span, 0.0, 1.0)
                target = surplus * (1.0 - frac)
                new = (1.0 - bench.droop_damping) * export + bench.droop_damping * target
                done = np.max(np.abs(new - export), initial=0.0) < bench.droop_tol
                export = new
                op, loading = grid.solve(injections(export))
                if done:
                    break

        for k, h in enumerate(hh):
            L = led[h.household_id]
            L.imported += load[k]
            L.import_cost += load[k] * s_plus
            L.expenses_without += load[k] * s_plus
            if pros[k]:
                L.surplus += surplus[k]
                L.exported += export[k]
                L.export_income += export[k] * s_minus
                L.incomes_without += export[k] * s_minus
                L.spilled += surplus[k] - export[k]
        res.import_kwh[t] = load.sum()
        res.export_kwh[t] = export.sum()
        res.spilled_kwh[t] = (surplus - export).sum()
        res.injections[t] = injections(export)
        res.vmag[t] = np.abs(op.V)
        res.loading[t] = loading
    return res


# ------------------------------------------------------------------ reports

def run_scenario_I(config: ScenarioConfig, inputs: ScenarioInputs | None = None) -> DayResult:
    if config.scenario != "I" or config.scheme != "p2p":
        raise ScenarioError("scenario I needs scenario='I' and scheme='p2p'")
    return run_day(inputs if inputs is not None else build_inputs(config), config)


def run_scenario_II(config: ScenarioConfig, schemes=SCHEMES,
                    inputs: ScenarioInputs | None = None) -> dict[str, DayResult]:
    """Run every scheme on the same resolved inputs."""
    from dataclasses import replace

    base = replace(config, scenario="II", scheme="p2p")
    inputs = inputs if inputs is not None else build_inputs(base)
    return {s: run_day(inputs, replace(base, scheme=s)) for s in schemes}


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_report(result: DayResult, out_dir: str | Path, net: Network | None = None) -> list[Path]:
    """Emit the summary and per-figure tables of one run. Output is deterministic."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    summary = {"scheme": result.scheme, "scenario": result.scenario, "seed": result.seed,
               **result.totals()}
    if net is not None:
        far = result.farthest_prosumer(net)
        summary["farthest_prosumer"] = far
        summary["farthest_spill_fraction"] = result.ledgers[far].spill_fraction
    p = out / "summary.json"
    p.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    paths.append(p)

    p = out / "energy.csv"
    _write_csv(p, ("slot", "atp", "p2p_kwh", "grid_import_kwh", "export_kwh", "spilled_kwh"),
               ((t, a, result.p2p_kwh[t], result.import_kwh[t], result.export_kwh[t],
                 result.spilled_kwh[t]) for t, a in enumerate(result.atp())))
    paths.append(p)

    p = out / "households.csv"
    _write_csv(p, ("household_id", "kind", "node", "expenses", "incomes", "expenses_without",
                   "incomes_without", "p2p_bought_kwh", "p2p_sold_kwh", "imported_kwh",
                   "exported_kwh", "surplus_kwh", "spilled_kwh", "spill_fraction"),
               ((hid, h.kind, h.node, L.expenses, L.incomes, L.expenses_without, L.incomes_without,
                 L.p2p_bought, L.p2p_sold, L.imported, L.exported, L.surplus, L.spilled,
                 L.spill_fraction)
                for hid, h in result.households.items() for L in [result.ledgers[hid]]))
    paths.append(p)

    edges, counts = voltage_histogram(result.vmag[:, 1:])
    p = out / "voltage_histogram.csv"
    _write_csv(p, ("v_lo", "v_hi", "count"),
               ((round(edges[k], 6), round(edges[k + 1], 6), int(c)) for k, c in enumerate(counts)))
    paths.append(p)

    if result.scheme == "p2p":
        p = out / "trades.jsonl"
        with p.open("w") as fh:
            for slot in result.trades:
                for tr in slot:
                    fh.write(json.dumps(tr.record(), sort_keys=True) + "\n")
        paths.append(p)
        p = out / "verdicts.jsonl"
        with p.open("w") as fh:
            for rec in result.verdicts:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        paths.append(p)
        p = out / "blocking.csv"
        _write_csv(p, ("slot", "household_id", "blocked_checks"), result.blocking)
        paths.append(p)
    return paths


def comparison_rows(results: dict[str, DayResult]) -> list[tuple]:
    rows = []
    for scheme, r in results.items():
        tot = r.totals()
        rows.append((scheme, tot["prosumer_supplied_kwh"], tot["prosumer_income"],
                     tot["prosumer_spilled_kwh"], tot["v_max"], tot["max_loading"]))
    return rows


def write_comparison(results: dict[str, DayResult], out_dir: str | Path) -> Path:
    p = Path(out_dir) / "comparison.csv"
    _write_csv(p, ("scheme", "supplied_kwh", "prosumer_income", "spilled_kwh", "v_max",
                   "max_loading"), comparison_rows(results))
    return p
