import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import brute_force_dispatch
from p2pgrid.agents import (
    CONSUMER, PROSUMER1, PROSUMER2, AgentError, BatterySpec, CesConfig, HouseholdProfile,
    TariffSchedule, ces_policy, dispatch_cost, hems_schedule, make_trader,
)
from p2pgrid.profiles import default_tariffs


def _tariffs(T, rng):
    exp = rng.uniform(2, 8, T)
    return TariffSchedule(exp + rng.uniform(0, 20, T), exp)


@given(st.integers(0, 10_000))
def test_hems_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    T = 4
    demand = rng.uniform(0, 1, T)
    pv = rng.uniform(0, 1.5, T)
    tar = _tariffs(T, rng)
    bat = BatterySpec(power_kw=2.0, capacity_kwh=1.0, efficiency=float(rng.choice([1.0, 0.9])))
    sch = hems_schedule(demand, pv, bat, tar, slot_hours=0.25, soc_step=0.25)
    best = brute_force_dispatch(demand, pv, 2.0, 1.0, bat.efficiency, tar.import_price,
                                tar.export_price, 0.25, 0.25)
    assert sch.cost == pytest.approx(best, abs=1e-9)


@given(st.integers(0, 10_000))
def test_hems_schedule_is_feasible(seed):
    rng = np.random.default_rng(seed)
    T = 24
    demand, pv = rng.uniform(0, 1, T), rng.uniform(0, 2, T)
    tar = _tariffs(T, rng)
    bat = BatterySpec(3.0, 5.0, 0.95)
    s = hems_schedule(demand, pv, bat, tar, slot_hours=0.5)
    assert np.all(s.soc >= -1e-12) and np.all(s.soc <= bat.capacity_kwh + 1e-12)
    assert np.all(s.charge <= 1.5 + 1e-9) and np.all(s.discharge <= 1.5 + 1e-9)
    assert np.all((s.charge == 0) | (s.discharge == 0))
    np.testing.assert_allclose(np.diff(s.soc), s.charge * 0.95 - s.discharge, atol=1e-12)
    np.testing.assert_allclose(s.net_load, demand - pv + s.charge - s.discharge)
    assert s.cost == pytest.approx(dispatch_cost(s.net_load, tar))
    assert s.cost <= dispatch_cost(demand - pv, tar) + 1e-9


def test_hems_idles_under_flat_tariff():
    tar = TariffSchedule(np.full(8, 10.0), np.full(8, 10.0))
    s = hems_schedule(np.ones(8), np.zeros(8), BatterySpec(3, 10, 0.9), tar)
    assert s.charge.sum() == 0 and s.discharge.sum() == 0


def test_hems_stores_midday_surplus_for_evening():
    tar = default_tariffs(96)
    pv = np.zeros(96)
    pv[40:56] = 0.8
    demand = np.full(96, 0.1)
    s = hems_schedule(demand, pv, BatterySpec(3, 10, 0.95), tar)
    assert s.charge[40:56].sum() > 0
    assert s.discharge[64:80].sum() > 0


def _profile(kind, demand, pv, node=1):
    return HouseholdProfile("h", kind, node, np.asarray(demand, float), np.asarray(pv, float))


def test_traders():
    tar = TariffSchedule(np.array([15.0, 15.0]), np.array([6.0, 6.0]))
    c = make_trader(_profile(CONSUMER, [1.0, 0.0], [0, 0]), tar, 0)
    assert (c.side, c.quantity, c.lmin, c.lmax) == ("bid", 1.0, 6.0, 15.0)
    assert make_trader(_profile(CONSUMER, [1.0, 0.0], [0, 0]), tar, 1) is None
    p = make_trader(_profile(PROSUMER1, [0.2, 0.5], [1.0, 0.1]), tar, 0)
    assert p.side == "ask" and p.quantity == pytest.approx(0.8)
    assert make_trader(_profile(PROSUMER1, [0.2, 0.5], [1.0, 0.1]), tar, 1) is None
    with pytest.raises(AgentError):
        make_trader(_profile(PROSUMER2, [0, 0], [1, 1]), tar, 0)
    with pytest.raises(AgentError):
        make_trader(_profile(CONSUMER, [1, 1], [0, 0]), tar, 5)


def test_profile_validation():
    with pytest.raises(AgentError):
        _profile("robot", [1], [0])
    with pytest.raises(AgentError):
        _profile(CONSUMER, [-1], [0])
    with pytest.raises(AgentError):
        TariffSchedule(np.array([5.0]), np.array([6.0]))
    with pytest.raises(AgentError):
        BatterySpec(1, 1, efficiency=0)


def test_ces_policy_windows():
    tar = default_tariffs(96)
    ces = CesConfig()
    buy = ces_policy(ces, tar, 44, soc=0.0)  # 11:00
    assert buy.side == "bid" and buy.quantity == pytest.approx(25 * 0.25)
    assert ces_policy(ces, tar, 44, soc=50.0) is None
    sell = ces_policy(ces, tar, 72, soc=3.0)  # 18:00
    assert sell.side == "ask" and sell.quantity == pytest.approx(3.0)
    assert ces_policy(ces, tar, 4, soc=10.0) is None
