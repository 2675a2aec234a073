import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import sweep_power_flow
from p2pgrid.agents import CONSUMER, PROSUMER1, PROSUMER2, HouseholdProfile, TariffSchedule
from p2pgrid.feeders import five_node
from p2pgrid.market import Trade
from p2pgrid.permission import PermissionConfig
from p2pgrid.scenario import (
    BenchmarkConfig, Census, ScenarioConfig, ScenarioError, ScenarioInputs, average_transaction_price,
    build_inputs, market_benefit, run_day, run_scenario_II, voltage_histogram, write_report,
)

T = 8


def _inputs(kinds, pv_kw=0.0, demand_kw=0.5, ces_node=None, seed=0):
    """Households h2, h3, h4 on the five-node net (nodes 2, 3, 4)."""
    rng = np.random.default_rng(seed)
    net = five_node()
    tar = TariffSchedule(np.full(T, 15.0), np.full(T, 6.0))
    hh = []
    for node, kind in zip((2, 3, 4), kinds):
        d = demand_kw * 0.25 * rng.uniform(0.5, 1.5, T)
        pv = np.full(T, pv_kw * 0.25) if kind != CONSUMER else np.zeros(T)
        hh.append(HouseholdProfile(f"h{node}", kind, node, d, pv))
    return ScenarioInputs(net, tuple(hh), tar, ces_node)


def _config(**kw):
    return ScenarioConfig(n_slots=T, census=Census(1, 1, 1), **kw)


def _trade(price, qty):
    return Trade("b", "s", price, qty, 0, 0.0, 0, 1, "bid")


def test_atp_examples():
    assert average_transaction_price([_trade(10, 1), _trade(20, 1)]) == 15
    assert average_transaction_price([_trade(10, 1), _trade(20, 3)]) == 17.5
    assert average_transaction_price([]) is None


def test_market_benefit_identity():
    assert market_benefit(241.98, 198.50, 64.81, 32.37) == pytest.approx(75.92, abs=1e-9)


@given(st.lists(st.floats(0.9, 1.12), min_size=1, max_size=200))
def test_histogram_counts_everything(v):
    edges, counts = voltage_histogram(np.array(v))
    assert counts.sum() == len(v)
    assert edges[0] <= min(v) and edges[-1] >= max(v) - 1e-12
    np.testing.assert_allclose(np.diff(edges), 0.005)
    np.testing.assert_allclose(edges / 0.005, np.round(edges / 0.005), atol=1e-6)


def test_no_prosumers_means_plain_retail():
    inputs = _inputs([CONSUMER] * 3)
    res = run_day(inputs, _config())
    tot = res.totals()
    assert tot["p2p_kwh"] == 0 and tot["export_kwh"] == 0
    assert tot["market_benefit"] == pytest.approx(0.0)
    demand = sum(h.demand.sum() for h in inputs.households)
    assert tot["import_kwh"] == pytest.approx(demand)


@pytest.mark.parametrize("scenario", ["I", "II"])
def test_p2p_ledgers_close(scenario):
    inputs = _inputs([CONSUMER, PROSUMER1, PROSUMER2], pv_kw=2.0)
    res = run_day(inputs, _config(scenario=scenario))
    for hid, h in res.households.items():
        L = res.ledgers[hid]
        if h.kind == CONSUMER:
            assert L.p2p_bought + L.imported == pytest.approx(h.demand.sum())
        else:
            assert L.p2p_sold + L.exported + L.spilled == pytest.approx(L.surplus)
    bought = sum(L.p2p_bought for L in res.ledgers.values())
    sold = sum(L.p2p_sold for L in res.ledgers.values())
    assert bought == pytest.approx(sold) == pytest.approx(res.p2p_kwh.sum())
    for slot in res.trades:
        for tr in slot:
            assert 6.0 <= tr.price <= 15.0


def test_scenario_I_exports_capped_by_unfilled_buys():
    inputs = _inputs([CONSUMER, PROSUMER1, PROSUMER1], pv_kw=4.0, demand_kw=0.3)
    res = run_day(inputs, _config(scenario="I"))
    assert np.all(res.export_kwh <= res.import_kwh + 1e-9)
    res2 = run_day(inputs, _config(scenario="II"))
    assert res2.export_kwh.sum() > res.export_kwh.sum()


def test_p2p_keeps_voltage_in_band():
    inputs = _inputs([PROSUMER1] * 3, pv_kw=110.0, demand_kw=0.1)
    res = run_day(inputs, _config(scenario="II"))
    for t in range(T):
        V, _ = sweep_power_flow(inputs.net, res.injections[t])
        assert np.abs(V).max() <= 1.10 + 1e-9
    assert res.spilled_kwh.sum() > 0


def test_redcap_not_binding_below_cap():
    inputs = _inputs([CONSUMER, PROSUMER1, PROSUMER1], pv_kw=2.0)
    res = run_day(inputs, _config(scenario="II", scheme="redcap"))
    for hid in ("h3", "h4"):
        L = res.ledgers[hid]
        assert L.spilled == pytest.approx(0.0) and L.exported == pytest.approx(L.surplus)


def test_redcap_clamps_at_cap():
    inputs = _inputs([CONSUMER, PROSUMER1, PROSUMER1], pv_kw=8.0, demand_kw=0.0001)
    res = run_day(inputs, _config(scenario="II", scheme="redcap"))
    assert res.ledgers["h3"].exported == pytest.approx(3.0 * 0.25 * T)


def test_tripping_trips_the_highest_voltage_first():
    inputs = _inputs([PROSUMER1] * 3, pv_kw=110.0, demand_kw=0.0001)
    cfg = _config(scenario="II", scheme="tripping")
    res = run_day(inputs, cfg)
    # node 3 sits at the end of the longest branch, so its inverter trips first
    assert res.ledgers["h3"].spill_fraction == pytest.approx(1.0)
    assert res.ledgers["h2"].spilled < res.ledgers["h3"].spilled
    assert res.vmag[:, 1:].max() <= cfg.permission.v_max
    assert res.farthest_prosumer(inputs.net) == "h3"


def test_apcolp_curtails_only_above_v_cri():
    inputs = _inputs([PROSUMER1] * 3, pv_kw=2.0, demand_kw=0.0001)
    res = run_day(inputs, _config(scenario="II", scheme="apcolp"))
    assert res.vmag.max() < 1.06
    assert res.spilled_kwh.sum() == pytest.approx(0.0)
    hot = _inputs([PROSUMER1] * 3, pv_kw=110.0, demand_kw=0.0001)
    res = run_day(hot, _config(scenario="II", scheme="apcolp"))
    assert res.spilled_kwh.sum() > 0
    free = run_day(hot, _config(scenario="II", scheme="redcap",
                                benchmark=BenchmarkConfig(redcap_kw=1e6)))
    assert res.vmag.max() < free.vmag.max()


def test_schemes_share_inputs_and_are_reproducible():
    inputs = _inputs([CONSUMER, PROSUMER1, PROSUMER2], pv_kw=3.0)
    a = run_scenario_II(_config(scenario="II"), inputs=inputs)
    b = run_scenario_II(_config(scenario="II"), inputs=inputs)
    assert set(a) == {"p2p", "redcap", "tripping", "apcolp"}
    for s in a:
        assert a[s].totals() == b[s].totals()
        assert {h: a[s].ledgers[h].surplus for h in a[s].ledgers} == pytest.approx(
            {h: a["redcap"].ledgers[h].surplus for h in a[s].ledgers})


def test_ces_trades_only_in_the_market():
    inputs = _inputs([CONSUMER, PROSUMER1, PROSUMER1], pv_kw=3.0, ces_node=1)
    cfg = dataclasses.replace(_config(scenario="II"), slot_hours=2.0)  # slots cover the day
    tar = TariffSchedule(np.full(T, 15.0), np.full(T, 6.0))
    res = run_day(dataclasses.replace(inputs, tariffs=tar), cfg)
    assert res.ces_ledger is not None
    soc_change = res.ces_soc[-1] - res.ces_soc[0]
    assert soc_change == pytest.approx(res.ces_ledger.p2p_bought - res.ces_ledger.p2p_sold)
    assert "CES" not in res.ledgers


def test_config_validation():
    with pytest.raises(ScenarioError):
        ScenarioConfig(scenario="III")
    with pytest.raises(ScenarioError):
        ScenarioConfig(scenario="I", scheme="redcap")
    with pytest.raises(ScenarioError):
        ScenarioConfig(n_slots=0)


def test_build_inputs_census_and_determinism():
    cfg = ScenarioConfig(seed=3)
    a, b = build_inputs(cfg), build_inputs(cfg)
    kinds = [h.kind for h in a.households]
    assert (kinds.count(CONSUMER), kinds.count(PROSUMER1), kinds.count(PROSUMER2)) == (50, 40, 10)
    assert a.ces_node == 101
    for x, y in zip(a.households, b.households):
        assert x.kind == y.kind and np.array_equal(x.demand, y.demand)
    c = build_inputs(dataclasses.replace(cfg, seed=4))
    assert [h.kind for h in c.households] != kinds
    with pytest.raises(ScenarioError):
        build_inputs(dataclasses.replace(cfg, census=Census(10, 10, 10)))


def test_report_files(tmp_path):
    inputs = _inputs([CONSUMER, PROSUMER1, PROSUMER2], pv_kw=3.0)
    res = run_day(inputs, _config(scenario="II"))
    names = {p.name for p in write_report(res, tmp_path, inputs.net)}
    assert names == {"summary.json", "energy.csv", "households.csv", "voltage_histogram.csv",
                     "trades.jsonl", "verdicts.jsonl", "blocking.csv"}
    energy = (tmp_path / "energy.csv").read_text().splitlines()
    assert energy[0].startswith("slot,atp") and len(energy) == T + 1
