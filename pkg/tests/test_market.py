import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import cda_stream_violations
from p2pgrid.market import (
    ASK, BID, BlockedTrader, MarketClosed, Order, OrderBook, PriceOutOfBounds, ShoutEvent,
    ZipParams, ZipPopulation, run_trading_window, zip_update_all,
)


def test_price_time_priority():
    book = OrderBook()
    book.submit(Order("s1", ASK, 10, 1, 0))
    book.submit(Order("s2", ASK, 9, 1, 1))
    book.submit(Order("s3", ASK, 9, 1, 2))
    out = book.submit(Order("b", BID, 12, 2.5, 3))
    assert [(t.seller, t.price, t.quantity) for t in out.trades] == [
        ("s2", 9, 1), ("s3", 9, 1), ("s1", 10, 0.5)]
    assert book.best_ask().remaining == pytest.approx(0.5)
    assert not book.is_crossed()


def test_partial_fill_rests_residual():
    book = OrderBook()
    book.submit(Order("s", ASK, 5, 1, 0))
    out = book.submit(Order("b", BID, 6, 3, 1))
    assert out.rested and out.trades[0].price == 5
    assert book.best_bid().remaining == pytest.approx(2)


def test_veto_returns_crossed_residual():
    book = OrderBook()
    book.submit(Order("b", BID, 8, 1, 0))
    out = book.submit(Order("s", ASK, 7, 1, 1), validator=lambda t: False)
    assert out.returned == 1 and not out.rested
    assert len(out.rejected) == 1 and not out.rejected[0].accepted
    assert book.asks == []


def test_veto_skips_to_next_order():
    book = OrderBook()
    book.submit(Order("s1", ASK, 5, 1, 0))
    book.submit(Order("s2", ASK, 6, 1, 1))
    out = book.submit(Order("b", BID, 7, 1, 2), validator=lambda t: t.seller != "s1")
    assert [t.seller for t in out.trades] == ["s2"]
    assert [t.seller for t in out.rejected] == ["s1"]


def test_price_clipped_into_common_bounds():
    book = OrderBook()
    book.submit(Order("b", BID, 9, 1, 0), bounds=(2, 10))
    out = book.submit(Order("s", ASK, 4, 1, 1), bounds=(3, 6))
    assert out.trades[0].price == 6


def test_incompatible_bounds_do_not_rest_crossed():
    book = OrderBook()
    book.submit(Order("b", BID, 9, 1, 0), bounds=(8, 10))
    out = book.submit(Order("s", ASK, 5, 1, 1), bounds=(2, 6))
    assert not out.trades and out.returned == 1
    assert not book.is_crossed()


def test_guards():
    book = OrderBook()
    with pytest.raises(PriceOutOfBounds):
        book.submit(Order("b", BID, 20, 1, 0), bounds=(0, 10))
    with pytest.raises(BlockedTrader):
        book.submit(Order("s", ASK, 5, 1, 0), blocked=True)
    book.submit(Order("s", ASK, 5, 1, 0))
    assert [o.trader_id for o in book.close()] == ["s"]
    with pytest.raises(MarketClosed):
        book.submit(Order("b", BID, 5, 1, 1))
    with pytest.raises(ValueError):
        Order("x", BID, 1, 0, 0)


@given(st.integers(0, 2**32 - 1))
def test_random_streams_keep_invariants(seed):
    assert cda_stream_violations(seed) == 0


def _population(seed, n=20, lmin=6.0, lmax=15.0):
    rng = np.random.default_rng(seed)
    is_buyer = rng.random(n) < 0.5
    return ZipPopulation([f"t{k}" for k in range(n)], is_buyer, np.full(n, lmin), np.full(n, lmax),
                         rng.uniform(0.1, 1.0, n), rng), rng


@given(st.integers(0, 10_000), st.sampled_from([BID, ASK]), st.booleans(), st.floats(0, 25))
def test_zip_prices_stay_within_limits(seed, side, matched, q):
    pop, rng = _population(seed)
    for _ in range(20):
        zip_update_all(pop, ShoutEvent(side, q, matched, q if matched else None), rng)
    assert np.all(pop.price >= pop.lmin) and np.all(pop.price <= pop.lmax)


def test_zip_sellers_raise_after_high_trade():
    pop, rng = _population(1)
    pop.price[:] = 8.0
    before = pop.price.copy()
    zip_update_all(pop, ShoutEvent(BID, 12.0, True, 12.0), rng)
    sellers = ~pop.is_buyer
    assert np.all(pop.price[sellers] > before[sellers])
    assert np.all(pop.price[pop.is_buyer] >= before[pop.is_buyer])


@given(st.integers(0, 10_000))
def test_window_conserves_quantity(seed):
    pop, _ = _population(seed)
    q0 = pop.quantity.copy()
    res = run_trading_window(pop, 3, seed)
    bought = {tid: 0.0 for tid in pop.ids}
    for t in res.trades:
        bought[t.buyer] += t.quantity
        bought[t.seller] += t.quantity
        assert 6.0 <= t.price <= 15.0
    for k, tid in enumerate(pop.ids):
        assert bought[tid] + res.remaining[tid] == pytest.approx(q0[k], abs=1e-9)


def test_window_is_deterministic():
    a = run_trading_window(_population(5)[0], 0, 11, log_events=True)
    b = run_trading_window(_population(5)[0], 0, 11, log_events=True)
    assert [t.record() for t in a.trades] == [t.record() for t in b.trades]
    assert a.events == b.events


def test_blocked_sellers_never_trade():
    pop, _ = _population(2)
    pop.blocked[:] = ~pop.is_buyer
    res = run_trading_window(pop, 0, 2)
    assert res.trades == []
