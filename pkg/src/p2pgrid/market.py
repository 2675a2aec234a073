"""Continuous double auction with ZIP (zero-intelligence-plus) traders.

The order book keeps bids by (price desc, time asc) and asks by
(price asc, time asc). An incoming order that crosses the best opposite
order trades at the standing order's price (clipped into both traders'
limit bounds when they differ), repeatedly, until it is
exhausted or no cross remains. Every provisional trade can be vetoed by a
validator (the network permission structure); a vetoed pair is skipped and
the incoming residual is handed back to its trader if it would otherwise
rest crossed against an order it could not trade with.
"""

from __future__ import annotations

import bisect
import itertools
import json
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Iterable

import numpy as np

BID = "bid"
ASK = "ask"
EPS_QTY = 1e-9


class MarketError(RuntimeError):
    pass


class MarketClosed(MarketError):
    pass


class BlockedTrader(MarketError):
    pass


class PriceOutOfBounds(MarketError):
    pass


@dataclass
class Order:
    trader_id: str
    side: str
    price: float
    quantity: float
    timestamp: float
    slot: int = 0
    order_id: int = -1
    remaining: float = field(default=-1.0)
    lmin: float = -np.inf  # trader's limit bounds, set on submission
    lmax: float = np.inf

    def __post_init__(self):
        if self.side not in (BID, ASK):
            raise ValueError(f"unknown side {self.side!r}")
        if not self.quantity > 0:
            raise ValueError("order quantity must be positive")
        if self.remaining < 0:
            self.remaining = self.quantity


@dataclass
class Trade:
    buyer: str
    seller: str
    price: float
    quantity: float
    slot: int
    time: float
    bid_id: int
    ask_id: int
    aggressor: str  # side of the incoming order
    accepted: bool = True
    loss_charge: float = 0.0
    congestion_charge: float = 0.0
    buyer_charge: float = 0.0
    seller_charge: float = 0.0
    verdict: Any = None

    @property
    def network_charge(self) -> float:
        return self.loss_charge + self.congestion_charge

    def record(self) -> dict:
        rec = {k: v for k, v in asdict(self).items() if k != "verdict"}
        rec["event"] = "trade"
        if self.verdict is not None and hasattr(self.verdict, "record"):
            rec["permission"] = self.verdict.record()
        return rec


@dataclass
class MatchOutcome:
    trades: list[Trade]
    rejected: list[Trade]
    rested: bool
    returned: float  # residual handed back to the trader instead of resting


Validator = Callable[[Trade], Any]


def _approved(verdict) -> bool:
    return bool(getattr(verdict, "approved", verdict))


class OrderBook:
    def __init__(self, slot: int = 0):
        self.slot = slot
        self.is_open = True
        self._bids: list[tuple[tuple, Order]] = []
        self._asks: list[tuple[tuple, Order]] = []
        self._ids = itertools.count()
        self.trades: list[Trade] = []
        self.submitted: dict[str, float] = {}
        self.filled: dict[str, float] = {}

    # -- queries
    @property
    def bids(self) -> list[Order]:
        return [o for _, o in self._bids]

    @property
    def asks(self) -> list[Order]:
        return [o for _, o in self._asks]

    def best_bid(self) -> Order | None:
        return self._bids[0][1] if self._bids else None

    def best_ask(self) -> Order | None:
        return self._asks[0][1] if self._asks else None

    def is_crossed(self) -> bool:
        b, a = self.best_bid(), self.best_ask()
        return b is not None and a is not None and b.price >= a.price

    # -- mutation
    def close(self) -> list[Order]:
        """Close the market; every resting order expires and is returned."""
        self.is_open = False
        expired = self.bids + self.asks
        self._bids.clear()
        self._asks.clear()
        return expired

    def withdraw(self, trader_id: str) -> list[Order]:
        out = []
        for queue in (self._bids, self._asks):
            keep = [(k, o) for k, o in queue if o.trader_id != trader_id]
            out.extend(o for _, o in queue if o.trader_id == trader_id)
            queue[:] = keep
        return out

    def _key(self, order: Order) -> tuple:
        if order.side == BID:
            return (-order.price, order.timestamp, order.order_id)
        return (order.price, order.timestamp, order.order_id)

    def _rest(self, order: Order) -> None:
        queue = self._bids if order.side == BID else self._asks
        bisect.insort(queue, (self._key(order), order))  # keys are unique

    def submit(self, order: Order, bounds: tuple[float, float] | None = None,
               blocked: bool = False, validator: Validator | None = None) -> MatchOutcome:
        if not self.is_open:
            raise MarketClosed("market is closed for this slot")
        if blocked and order.side == ASK:
            raise BlockedTrader(f"trader {order.trader_id} is blocked from injecting")
        if bounds is not None and not (bounds[0] - 1e-12 <= order.price <= bounds[1] + 1e-12):
            raise PriceOutOfBounds(
                f"price {order.price} outside [{bounds[0]}, {bounds[1]}] for {order.trader_id}"
            )
        order.order_id = next(self._ids)
        order.slot = self.slot
        if bounds is not None:
            order.lmin, order.lmax = bounds
        self.submitted[order.trader_id] = self.submitted.get(order.trader_id, 0.0) + order.quantity

        opposite = self._asks if order.side == BID else self._bids
        trades: list[Trade] = []
        rejected: list[Trade] = []
        skipped: set[int] = set()

        def window(resting: Order) -> tuple[float, float]:
            # prices acceptable to both orders and inside both traders' bounds
            bid, ask = (order, resting) if order.side == BID else (resting, order)
            return (max(ask.price, bid.lmin, ask.lmin), min(bid.price, bid.lmax, ask.lmax))

        def crosses(resting: Order) -> bool:
            lo, hi = window(resting)
            return lo <= hi

        while order.remaining > EPS_QTY:
            pos = next(
                (n for n, (_, o) in enumerate(opposite)
                 if o.order_id not in skipped and crosses(o)),
                None,
            )
            if pos is None:
                break
            resting = opposite[pos][1]
            qty = min(order.remaining, resting.remaining)
            bid, ask = (order, resting) if order.side == BID else (resting, order)
            lo, hi = window(resting)
            trade = Trade(
                buyer=bid.trader_id, seller=ask.trader_id,
                price=float(min(max(resting.price, lo), hi)), quantity=qty,
                slot=self.slot, time=order.timestamp, bid_id=bid.order_id, ask_id=ask.order_id,
                aggressor=order.side,
            )
            if validator is not None:
                verdict = validator(trade)
                trade.verdict = verdict
                if not _approved(verdict):
                    trade.accepted = False
                    rejected.append(trade)
                    skipped.add(resting.order_id)
                    continue
            order.remaining -= qty
            resting.remaining -= qty
            for o in (bid, ask):
                self.filled[o.trader_id] = self.filled.get(o.trader_id, 0.0) + qty
            if resting.remaining <= EPS_QTY:
                resting.remaining = 0.0
                opposite.pop(pos)
            trades.append(trade)
            self.trades.append(trade)

        if order.remaining <= EPS_QTY:
            order.remaining = 0.0
            return MatchOutcome(trades, rejected, rested=False, returned=0.0)
        def price_crossed(resting: Order) -> bool:
            if order.side == BID:
                return order.price >= resting.price
            return order.price <= resting.price

        if any(price_crossed(o) for _, o in opposite):
            # resting would leave a crossed book behind a vetoed or bound-incompatible pair
            return MatchOutcome(trades, rejected, rested=False, returned=order.remaining)
        self._rest(order)
        return MatchOutcome(trades, rejected, rested=True, returned=0.0)


# ------------------------------------------------------------------- ZIP


@dataclass(frozen=True)
class ZipParams:
    beta_range: tuple[float, float] = (0.1, 0.5)
    gamma_range: tuple[float, float] = (0.0, 0.1)
    raise_factor: tuple[float, float] = (1.0, 1.05)
    lower_factor: tuple[float, float] = (0.95, 1.0)
    jitter: float = 0.05


class ZipPopulation:
    """Vectorised state of all ZIP traders in one trading window.

    Prices are stored directly; the profit margin is ``price / limit - 1``
    (buyers' limit is ``lmax``, sellers' limit is ``lmin``). Keeping the
    price as state avoids a degenerate margin when a limit is zero.
    """

    def __init__(self, ids: list[str], is_buyer, lmin, lmax, quantity, rng: np.random.Generator,
                 params: ZipParams = ZipParams(), initial_price=None, nodes=None):
        self.ids = list(ids)
        n = len(self.ids)
        self.is_buyer = np.asarray(is_buyer, dtype=bool).reshape(n)
        self.lmin = np.asarray(lmin, dtype=float).reshape(n)
        self.lmax = np.asarray(lmax, dtype=float).reshape(n)
        if np.any(self.lmax < self.lmin):
            raise ValueError("trader with L_max < L_min")
        self.quantity = np.asarray(quantity, dtype=float).reshape(n)
        self.remaining = self.quantity.copy()
        self.nodes = np.zeros(n, dtype=int) if nodes is None else np.asarray(nodes, dtype=int)
        self.blocked = np.zeros(n, dtype=bool)
        self.params = params
        self.beta = rng.uniform(*params.beta_range, size=n)
        self.gamma = rng.uniform(*params.gamma_range, size=n)
        self.momentum = np.zeros(n)
        if initial_price is None:
            initial_price = rng.uniform(self.lmin, self.lmax)
        self.price = np.clip(np.asarray(initial_price, dtype=float), self.lmin, self.lmax)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def limit(self) -> np.ndarray:
        return np.where(self.is_buyer, self.lmax, self.lmin)

    @property
    def margin(self) -> np.ndarray:
        lim = self.limit
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(lim > 0, self.price / np.where(lim > 0, lim, 1.0) - 1.0, 0.0)

    def active(self) -> np.ndarray:
        return self.remaining > EPS_QTY

    def bounds(self, idx: int) -> tuple[float, float]:
        return float(self.lmin[idx]), float(self.lmax[idx])


@dataclass(frozen=True)
class ShoutEvent:
    side: str  # side of the last order
    price: float  # price of the last order
    matched: bool
    trade_price: float | None = None

    @property
    def reference(self) -> float:
        return self.trade_price if self.matched and self.trade_price is not None else self.price


def zip_update_all(pop: ZipPopulation, event: ShoutEvent, rng: np.random.Generator) -> None:
    """Apply the four ZIP margin-adaptation rules to every active trader."""
    q = event.reference
    p = pop.price
    act = pop.active()
    buyers = act & pop.is_buyer
    sellers = act & ~pop.is_buyer & ~pop.blocked

    up = np.zeros(len(pop), dtype=bool)  # move price up toward a higher target
    down = np.zeros(len(pop), dtype=bool)
    if event.matched:
        down |= buyers & (p >= q)  # buyers raise margin
        up |= sellers & (p <= q)  # sellers raise margin
        if event.side == ASK:
            up |= buyers & (p <= q)  # buyers lower margin
        else:
            down |= sellers & (p >= q)  # sellers lower margin
    elif event.side == BID:
        up |= buyers & (p <= q)
    else:
        down |= sellers & (p >= q)

    # a trader priced exactly at q lands in both sets; the raise-margin rule wins
    both = up & down
    up &= ~(both & pop.is_buyer)
    down &= ~(both & ~pop.is_buyer)
    moving = up | down
    if not moving.any():
        return
    prm = pop.params
    n = len(pop)
    r_up = rng.uniform(*prm.raise_factor, size=n)
    r_dn = rng.uniform(*prm.lower_factor, size=n)
    jit = rng.uniform(0.0, prm.jitter, size=n)
    target = np.where(up, r_up * q + jit, r_dn * q - jit)
    delta = pop.beta * (target - p)
    mom = pop.gamma * pop.momentum + (1.0 - pop.gamma) * delta
    pop.momentum = np.where(moving, mom, pop.momentum)
    new_price = np.clip(p + mom, pop.lmin, pop.lmax)
    # buyers never bid above their limit, sellers never ask below theirs
    pop.price = np.where(moving, new_price, p)


# ------------------------------------------------------------- trading window


@dataclass
class WindowResult:
    slot: int
    trades: list[Trade]
    rejected: list[Trade]
    remaining: dict[str, float]
    events: list[dict]
    n_events: int


def run_trading_window(pop: ZipPopulation, slot: int, rng: np.random.Generator | int,
                       window: tuple[float, float] = (0.0, 1.0),
                       activations_per_trader: float = 10.0,
                       validator: Validator | None = None,
                       after_trade: Callable[[Trade], Iterable[bool] | None] | None = None,
                       log_events: bool = False) -> WindowResult:
    """Run one trading window of the CDA for slot ``slot``.

    Activation times follow a Poisson process with rate
    ``activations_per_trader * len(pop) / (t_end - t_start)``; each activation
    picks a trader uniformly at random who shouts one order at its current ZIP
    price for its whole remaining quantity (replacing any resting order).
    ``after_trade`` is called after every accepted trade and may return fresh
    blocking flags for all traders.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    book = OrderBook(slot)
    events: list[dict] = []
    trades: list[Trade] = []
    rejected: list[Trade] = []
    index = {tid: n for n, tid in enumerate(pop.ids)}
    t_start, t_end = window
    n = len(pop)
    n_events = 0
    if n == 0:
        book.close()
        return WindowResult(slot, [], [], {}, events, 0)
    rate = activations_per_trader * n / (t_end - t_start)
    t = t_start

    def tradable() -> bool:
        act = pop.active()
        return bool((act & pop.is_buyer).any() and (act & ~pop.is_buyer & ~pop.blocked).any())

    while True:
        t += rng.exponential(1.0 / rate)
        if t >= t_end or not tradable():
            break
        idx = int(rng.integers(n))
        n_events += 1
        if pop.remaining[idx] <= EPS_QTY or (not pop.is_buyer[idx] and pop.blocked[idx]):
            continue
        tid = pop.ids[idx]
        side = BID if pop.is_buyer[idx] else ASK
        book.withdraw(tid)
        order = Order(tid, side, float(pop.price[idx]), float(pop.remaining[idx]), t, slot)
        outcome = book.submit(order, bounds=pop.bounds(idx), validator=validator)
        if log_events:
            events.append({
                "event": "order", "slot": slot, "time": t, "trader": tid, "side": side,
                "price": order.price, "quantity": order.quantity, "order_id": order.order_id,
                "rested": outcome.rested, "returned": outcome.returned,
            })
        rejected.extend(outcome.rejected)
        for tr in outcome.trades:
            pop.remaining[index[tr.buyer]] -= tr.quantity
            pop.remaining[index[tr.seller]] -= tr.quantity
            trades.append(tr)
            if after_trade is not None:
                flags = after_trade(tr)
                if flags is not None:
                    newly = np.asarray(flags, dtype=bool) & ~pop.blocked
                    pop.blocked = np.asarray(flags, dtype=bool).copy()
                    for k in np.flatnonzero(newly & ~pop.is_buyer):
                        book.withdraw(pop.ids[k])
        np.maximum(pop.remaining, 0.0, out=pop.remaining)
        pop.remaining[pop.remaining <= EPS_QTY] = 0.0
        matched = bool(outcome.trades)
        ev = ShoutEvent(side, order.price, matched,
                        outcome.trades[-1].price if matched else None)
        zip_update_all(pop, ev, rng)

    book.close()
    remaining = {tid: float(pop.remaining[k]) for k, tid in enumerate(pop.ids)}
    return WindowResult(slot, trades, rejected, remaining, events, n_events)


def write_jsonl(records: Iterable[dict], path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
