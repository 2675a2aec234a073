"""Household agents: consumers, PV prosumers, PV+battery prosumers with a
HEMS, and the retailer's community storage (CES)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CONSUMER = "consumer"
PROSUMER1 = "prosumer1"
PROSUMER2 = "prosumer2"
CES = "ces"
KINDS = (CONSUMER, PROSUMER1, PROSUMER2, CES)


class AgentError(ValueError):
    pass


@dataclass(frozen=True)
class HouseholdProfile:
    household_id: str
    kind: str
    node: int
    demand: np.ndarray  # kWh per slot
    pv: np.ndarray  # kWh per slot

    def __post_init__(self):
        if self.kind not in KINDS:
            raise AgentError(f"unknown household type {self.kind!r}")
        if self.demand.shape != self.pv.shape:
            raise AgentError(f"{self.household_id}: demand and pv horizons differ")
        if np.any(self.demand < 0) or np.any(self.pv < 0):
            raise AgentError(f"{self.household_id}: negative demand or generation")

    @property
    def n_slots(self) -> int:
        return self.demand.size

    @property
    def is_prosumer(self) -> bool:
        return self.kind in (PROSUMER1, PROSUMER2)


@dataclass(frozen=True)
class TariffSchedule:
    import_price: np.ndarray  # ToU, currency per kWh
    export_price: np.ndarray  # FiT

    def __post_init__(self):
        if self.import_price.shape != self.export_price.shape:
            raise AgentError("import and export tariff horizons differ")
        if np.any(self.export_price < 0):
            raise AgentError("negative export price")
        if np.any(self.import_price < self.export_price):
            raise AgentError("import price below export price in some slot")

    @property
    def n_slots(self) -> int:
        return self.import_price.size


@dataclass(frozen=True)
class BatterySpec:
    power_kw: float
    capacity_kwh: float
    efficiency: float = 0.95  # round trip, applied on charging
    initial_soc: float = 0.0

    def __post_init__(self):
        if self.power_kw < 0 or self.capacity_kwh < 0:
            raise AgentError("battery power and capacity must be non-negative")
        if not 0 < self.efficiency <= 1:
            raise AgentError("battery efficiency must be in (0, 1]")
        if not 0 <= self.initial_soc <= self.capacity_kwh:
            raise AgentError("initial state of charge outside [0, capacity]")


@dataclass(frozen=True)
class HemsSchedule:
    charge: np.ndarray  # energy drawn into the battery (kWh, before losses)
    discharge: np.ndarray  # energy delivered by the battery (kWh)
    soc: np.ndarray  # length n_slots + 1
    net_load: np.ndarray  # demand - pv + charge - discharge
    cost: float

    @property
    def imports(self) -> np.ndarray:
        return np.maximum(self.net_load, 0.0)

    @property
    def exports(self) -> np.ndarray:
        return np.maximum(-self.net_load, 0.0)


def dispatch_cost(net_load: np.ndarray, tariffs: TariffSchedule) -> float:
    return float(np.sum(tariffs.import_price * np.maximum(net_load, 0.0)
                        - tariffs.export_price * np.maximum(-net_load, 0.0)))


def hems_schedule(demand: np.ndarray, pv: np.ndarray, battery: BatterySpec,
                  tariffs: TariffSchedule, slot_hours: float = 0.25,
                  soc_step: float = 0.1) -> HemsSchedule:
    """Cost-minimising battery dispatch by dynamic programming over an SoC grid.

    Each slot the battery moves between grid states; a move of ``+k`` steps
    draws ``k * soc_step / efficiency`` kWh, a move of ``-k`` steps delivers
    ``k * soc_step`` kWh, both bounded by ``power_kw * slot_hours``. Ties
    prefer the smallest move, so the battery idles unless cycling pays.
    """
    demand = np.asarray(demand, dtype=float)
    pv = np.asarray(pv, dtype=float)
    if demand.shape != pv.shape or demand.size != tariffs.n_slots:
        raise AgentError("profile and tariff horizons differ")
    if soc_step <= 0:
        raise AgentError("soc_step must be positive")
    T = demand.size
    n_states = int(np.floor(battery.capacity_kwh / soc_step + 1e-9)) + 1
    e_max = battery.power_kw * slot_hours
    k_up = int(np.floor(e_max * battery.efficiency / soc_step + 1e-9))
    k_dn = int(np.floor(e_max / soc_step + 1e-9))
    moves = [0]
    for k in range(1, max(k_up, k_dn) + 1):
        if k <= k_up:
            moves.append(k)
        if k <= k_dn:
            moves.append(-k)
    moves = np.array(moves)
    charge_e = np.where(moves > 0, moves * soc_step / battery.efficiency, 0.0)
    discharge_e = np.where(moves < 0, -moves * soc_step, 0.0)

    states = np.arange(n_states)
    nxt = states[:, None] + moves[None, :]
    feasible = (nxt >= 0) & (nxt < n_states)
    nxt_c = np.clip(nxt, 0, n_states - 1)

    value = np.zeros(n_states)
    policy = np.zeros((T, n_states), dtype=int)
    for t in range(T - 1, -1, -1):
        net = demand[t] - pv[t] + charge_e - discharge_e
        step_cost = (tariffs.import_price[t] * np.maximum(net, 0.0)
                     - tariffs.export_price[t] * np.maximum(-net, 0.0))
        total = step_cost[None, :] + value[nxt_c]
        total = np.where(feasible, total, np.inf)
        # round to kill float noise so ties resolve to the idle move
        best = np.argmin(np.round(total, 10), axis=1)
        policy[t] = best
        value = total[states, best]

    s = int(round(battery.initial_soc / soc_step))
    s = min(s, n_states - 1)
    soc = np.zeros(T + 1)
    soc[0] = s * soc_step
    charge = np.zeros(T)
    discharge = np.zeros(T)
    for t in range(T):
        m = policy[t, s]
        charge[t] = charge_e[m]
        discharge[t] = discharge_e[m]
        s += int(moves[m])
        soc[t + 1] = s * soc_step
    net_load = demand - pv + charge - discharge
    return HemsSchedule(charge, discharge, soc, net_load, dispatch_cost(net_load, tariffs))


@dataclass(frozen=True)
class TraderIntent:
    household_id: str
    node: int
    side: str  # "bid" | "ask"
    quantity: float  # kWh
    lmin: float
    lmax: float


def make_trader(profile: HouseholdProfile, tariffs: TariffSchedule, slot: int,
                schedule: HemsSchedule | None = None) -> TraderIntent | None:
    """Order intent of one household for ``slot``, or None if it does not trade.

    Consumers bid for their whole demand; prosumers offer their surplus.
    Budget bounds are the retailer tariffs: no one pays more than ToU or
    sells below FiT.
    """
    if not 0 <= slot < tariffs.n_slots:
        raise AgentError(f"slot {slot} outside the horizon")
    lmin = float(tariffs.export_price[slot])
    lmax = float(tariffs.import_price[slot])
    if profile.kind == CONSUMER:
        q = float(profile.demand[slot])
        if q <= 0:
            return None
        return TraderIntent(profile.household_id, profile.node, "bid", q, lmin, lmax)
    if profile.kind == PROSUMER1:
        surplus = float(profile.pv[slot] - profile.demand[slot])
    elif profile.kind == PROSUMER2:
        if schedule is None:
            raise AgentError(f"{profile.household_id}: type-2 prosumer needs a HEMS schedule")
        surplus = float(-schedule.net_load[slot])
    else:
        raise AgentError("CES intents come from ces_policy")
    if surplus <= 1e-12:
        return None
    return TraderIntent(profile.household_id, profile.node, "ask", surplus, lmin, lmax)


@dataclass(frozen=True)
class CesConfig:
    battery: BatterySpec = BatterySpec(25.0, 50.0, efficiency=1.0)
    buy_window: tuple[float, float] = (10.0, 14.0)  # hours of day, [start, end)
    sell_window: tuple[float, float] = (17.0, 20.0)


def ces_policy(ces: CesConfig, tariffs: TariffSchedule, slot: int, soc: float,
               slot_hours: float = 0.25, household_id: str = "CES", node: int = 0
               ) -> TraderIntent | None:
    """Buy around midday up to power/SoC limits, resell during the evening peak."""
    hour = slot * slot_hours
    b = ces.battery
    lmin = float(tariffs.export_price[slot])
    lmax = float(tariffs.import_price[slot])
    if ces.buy_window[0] <= hour < ces.buy_window[1]:
        q = min(b.power_kw * slot_hours, (b.capacity_kwh - soc) / b.efficiency)
        side = "bid"
    elif ces.sell_window[0] <= hour < ces.sell_window[1]:
        q = min(b.power_kw * slot_hours, soc)
        side = "ask"
    else:
        return None
    if q <= 1e-12:
        return None
    return TraderIntent(household_id, node, side, float(q), lmin, lmax)
