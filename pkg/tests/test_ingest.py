"""Tests for tick parsing, trade signing, and minute-bar construction."""

import gzip
import logging
import math
from datetime import datetime
from pathlib import Path

import numpy as np
import pytest

from liqimpact.ingest import (
    BAR_HEADER,
    MinuteBar,
    ParseError,
    TICK_HEADER,
    TickRecord,
    build_bars,
    flow_descriptives,
    read_bars_csv,
    read_ticks,
    sign_trade,
    write_bars_csv,
)

DATA = Path(__file__).parent / "data"


def _ts(s: str) -> datetime:
    return datetime.strptime(s, "%Y-%m-%d %H:%M:%S")


def trade(ts, price, size):
    return TickRecord(timestamp=_ts(ts), kind="T", price=price, size=size)


def quote(ts, bid, ask, bid_size=1.0, ask_size=1.0):
    return TickRecord(timestamp=_ts(ts), kind="Q", bid=bid, ask=ask,
                      bid_size=bid_size, ask_size=ask_size)


# ---------------------------------------------------------------------------
# trade signing


def test_sign_trade_basic_cases():
    assert sign_trade(100.02, 99.98, 100.02) == 1      # at the ask
    assert sign_trade(99.98, 99.98, 100.02) == -1      # at the bid
    assert sign_trade(100.00, 99.98, 100.02) == 0      # exactly at midpoint
    assert sign_trade(100.05, 99.98, 100.02) == 1      # above the ask
    assert sign_trade(99.90, 99.98, 100.02) == -1      # below the bid
    assert sign_trade(100.01, 99.98, 100.02) == 1      # above mid, inside spread
    assert sign_trade(99.99, 99.98, 100.02) == -1      # below mid, inside spread


def test_sign_trade_no_quote_state():
    assert sign_trade(100.0, None, None) == 0
    assert sign_trade(100.0, 99.98, None) == 0
    assert sign_trade(100.0, None, 100.02) == 0


def test_sign_trade_rounds_to_tick_grid():
    # 100.01 is not representable in binary; comparisons must happen on the
    # integer tick grid so float fuzz cannot flip a midpoint into a side.
    bid, ask = 100.00, 100.02
    mid_fuzzed = (bid + ask) / 2.0  # 100.00999999999999
    assert sign_trade(mid_fuzzed, bid, ask) == 0
    assert sign_trade(100.0099999999, bid, ask) == 0
    assert sign_trade(100.0100000001, bid, ask) == 0
    # A genuine one-tick step away from mid is still resolved.
    assert sign_trade(100.02, bid, ask) == 1
    assert sign_trade(100.00, bid, ask) == -1


def test_sign_trade_coarse_tick():
    assert sign_trade(1025.0, 1000.0, 1050.0, tick_size=25.0) == 0
    assert sign_trade(1050.0, 1000.0, 1050.0, tick_size=25.0) == 1


def test_sign_trade_crossed_quote_rejected():
    with pytest.raises(ValueError):
        sign_trade(100.0, 100.02, 99.98)


# ---------------------------------------------------------------------------
# golden fixture


def test_golden_fixture_fields():
    ticks = read_ticks(DATA / "golden_ticks.csv")
    assert len(ticks) == 20
    days = build_bars(ticks, session_start="09:00", session_end="09:05", bar_seconds=60)
    assert list(days) == ["2024-03-15"]
    bars = days["2024-03-15"]
    assert [b.order_flow for b in bars] == [4.0, 4.0, -1.0, 0.0, 7.0]
    assert [b.last_price for b in bars] == [99.99, 100.04, 100.01, 100.01, 100.08]
    assert bars[0].log_return is None
    assert bars[1].log_return == pytest.approx(math.log(100.04 / 99.99), rel=1e-14)
    assert bars[3].log_return == 0.0  # no trades: price carried, flat return
    assert [b.signed_count for b in bars] == [2, 2, 3, 0, 2]
    assert [b.unsigned_count for b in bars] == [0, 1, 0, 0, 0]
    # Bar-open quote sizes come from the freshest quote strictly before the
    # bar opens, including the pre-session state for the first bar.
    assert [(b.open_bid_size, b.open_ask_size) for b in bars] == [
        (60.0, 30.0), (30.0, 25.0), (20.0, 35.0), (15.0, 45.0), (10.0, 55.0),
    ]


def test_golden_fixture_round_trips_through_csv(tmp_path):
    days = build_bars(read_ticks(DATA / "golden_ticks.csv"),
                      session_start="09:00", session_end="09:05", bar_seconds=60)
    dest = tmp_path / "bars.csv"
    write_bars_csv(days, dest)
    back = read_bars_csv(dest)
    assert list(back) == list(days)
    for a, b in zip(days["2024-03-15"], back["2024-03-15"]):
        assert a.day == b.day and a.bar_index == b.bar_index
        assert a.order_flow == b.order_flow
        assert a.last_price == b.last_price
        assert a.log_return == b.log_return
        assert a.open_bid_size == b.open_bid_size
        assert a.open_ask_size == b.open_ask_size


# ---------------------------------------------------------------------------
# bar construction conventions


def test_flows_conserve_signed_sizes():
    """Sum of bar flows equals the sum of signed sizes from a direct replay."""
    rng = np.random.default_rng(71)
    for _ in range(50):
        ticks, expected = _random_stream(rng)
        days = build_bars(ticks, session_start="09:00", session_end="09:30", bar_seconds=60)
        total = sum(b.order_flow for bars in days.values() for b in bars)
        assert total == pytest.approx(expected, abs=1e-9)


def _random_stream(rng):
    """Random in-session quote/trade stream plus an independent signed-size sum.

    The expectation replays sign_trade by hand while tracking the freshest
    quote, which is the same convention build_bars is supposed to apply.
    """
    ticks = []
    bid, ask = None, None
    expected = 0.0
    t = _ts("2024-05-06 09:00:00")
    n = int(rng.integers(10, 40))
    for _ in range(n):
        t = datetime.fromtimestamp(t.timestamp() + float(rng.integers(1, 50)))
        if t >= _ts("2024-05-06 09:30:00"):
            break
        if rng.random() < 0.4 or bid is None:
            mid = round(float(rng.uniform(99.0, 101.0)), 2)
            bid, ask = round(mid - 0.01, 2), round(mid + 0.01, 2)
            ticks.append(TickRecord(timestamp=t, kind="Q", bid=bid, ask=ask,
                                    bid_size=10.0, ask_size=10.0))
        else:
            price = [bid, round((bid + ask) / 2, 3), ask][int(rng.integers(0, 3))]
            size = float(rng.integers(1, 20))
            ticks.append(TickRecord(timestamp=t, kind="T", price=price, size=size))
            expected += sign_trade(price, bid, ask) * size
    return ticks, expected


def test_quote_at_bar_open_instant_not_in_snapshot():
    # The open snapshot is the state strictly before the bar-open instant;
    # a quote stamped exactly at the open belongs to the new bar.
    ticks = [
        quote("2024-05-06 08:59:00", 99.99, 100.01, 5.0, 6.0),
        trade("2024-05-06 09:00:10", 100.01, 1.0),
        quote("2024-05-06 09:01:00", 99.98, 100.02, 70.0, 80.0),
        trade("2024-05-06 09:01:30", 100.02, 2.0),
    ]
    days = build_bars(ticks, session_start="09:00", session_end="09:02", bar_seconds=60)
    bars = days["2024-05-06"]
    assert (bars[0].open_bid_size, bars[0].open_ask_size) == (5.0, 6.0)
    assert (bars[1].open_bid_size, bars[1].open_ask_size) == (5.0, 6.0)


def test_session_boundary_trades():
    # Trades before the open or at/after the close never reach a bar; the
    # close itself is exclusive.
    ticks = [
        quote("2024-05-06 08:59:00", 99.99, 100.01),
        trade("2024-05-06 08:59:30", 100.01, 5.0),   # pre-open: dropped
        trade("2024-05-06 09:00:00", 100.01, 1.0),   # first in-session instant
        trade("2024-05-06 09:01:59", 100.01, 2.0),   # last in-session second
        trade("2024-05-06 09:02:00", 100.01, 4.0),   # at the close: dropped
    ]
    days = build_bars(ticks, session_start="09:00", session_end="09:02", bar_seconds=60)
    bars = days["2024-05-06"]
    assert [b.order_flow for b in bars] == [1.0, 2.0]


def test_zero_trade_day_warns_and_yields_empty(caplog):
    ticks = [
        quote("2024-05-06 09:10:00", 99.99, 100.01),
        trade("2024-05-06 16:00:00", 100.01, 5.0),  # after close
    ]
    with caplog.at_level(logging.WARNING, logger="liqimpact.ingest"):
        days = build_bars(ticks, session_start="09:00", session_end="10:00", bar_seconds=60)
    assert days["2024-05-06"] == []
    assert any("no in-session trades" in rec.message for rec in caplog.records)


def test_multi_day_state_reset():
    # Day two starts with no quote state: its first trade is unsigned even
    # though day one ended with a live quote.
    ticks = [
        quote("2024-05-06 09:00:10", 99.99, 100.01),
        trade("2024-05-06 09:00:30", 100.01, 5.0),
        trade("2024-05-07 09:00:30", 100.01, 7.0),
    ]
    days = build_bars(ticks, session_start="09:00", session_end="09:01", bar_seconds=60)
    assert days["2024-05-06"][0].order_flow == 5.0
    d2 = days["2024-05-07"][0]
    assert d2.order_flow == 0.0
    assert d2.unsigned_count == 1
    assert d2.open_bid_size is None and d2.open_ask_size is None


def test_out_of_order_ticks_rejected():
    ticks = [
        trade("2024-05-06 09:00:30", 100.01, 5.0),
        trade("2024-05-06 09:00:10", 100.01, 5.0),
    ]
    with pytest.raises(ParseError, match="precedes"):
        build_bars(ticks, session_start="09:00", session_end="09:01", bar_seconds=60)


def test_bar_width_must_divide_session():
    ticks = [trade("2024-05-06 09:00:30", 100.01, 5.0)]
    with pytest.raises(ValueError):
        build_bars(ticks, session_start="09:00", session_end="09:05", bar_seconds=90)
    with pytest.raises(ValueError):
        build_bars(ticks, session_start="10:00", session_end="09:00", bar_seconds=60)


# ---------------------------------------------------------------------------
# tick file parsing


def _write_tick_file(tmp_path, rows, header=None):
    path = tmp_path / "ticks.csv"
    lines = [",".join(header or TICK_HEADER)] + rows
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_read_ticks_parses_both_kinds(tmp_path):
    path = _write_tick_file(tmp_path, [
        "2024-05-06 09:00:00,Q,,,99.99,100.01,10.0,12.0",
        "2024-05-06 09:00:05,T,100.01,3.0,,,,",
    ])
    ticks = read_ticks(path)
    assert ticks[0].kind == "Q" and ticks[0].bid == 99.99 and ticks[0].ask_size == 12.0
    assert ticks[1].kind == "T" and ticks[1].price == 100.01 and ticks[1].size == 3.0
    assert ticks[1].lineno == 3


def test_read_ticks_gzip(tmp_path):
    raw = (DATA / "golden_ticks.csv").read_bytes()
    gz = tmp_path / "ticks.csv.gz"
    gz.write_bytes(gzip.compress(raw))
    assert read_ticks(gz) == read_ticks(DATA / "golden_ticks.csv")


def test_read_ticks_error_carries_location(tmp_path):
    path = _write_tick_file(tmp_path, [
        "2024-05-06 09:00:00,Q,,,99.99,100.01,10.0,12.0",
        "2024-05-06 09:00:05,T,,3.0,,,,",  # trade without a price
    ])
    with pytest.raises(ParseError, match=r"ticks\.csv:3"):
        read_ticks(path)


def test_read_ticks_rejects_bad_header(tmp_path):
    path = _write_tick_file(tmp_path, ["2024-05-06 09:00:05,T,100.0,3.0,,,,"],
                            header=["time", "what", "px", "sz", "b", "a", "bs", "as"])
    with pytest.raises(ParseError, match="header"):
        read_ticks(path)


def test_read_ticks_rejects_bad_values(tmp_path):
    for row, hint in [
        ("2024-05-06 09:00:05,X,100.0,3.0,,,,", "kind"),
        ("2024-05-06 09:00:05,T,100.0,-3.0,,,,", "size"),
        ("2024-05-06 09:00:05,T,-1.0,3.0,,,,", "price"),
        ("2024-05-06 09:00:05,Q,,,100.01,99.99,1.0,1.0", "crossed"),
        ("not-a-time,T,100.0,3.0,,,,", "timestamp"),
    ]:
        path = _write_tick_file(tmp_path, [row])
        with pytest.raises(ParseError, match=hint):
            read_ticks(path)


# ---------------------------------------------------------------------------
# flow descriptives


def test_flow_descriptives_alternating_flows():
    bars = []
    n = 30
    for i in range(n):
        bars.append(MinuteBar(day="d1", bar_index=i, order_flow=1.0 if i % 2 == 0 else -1.0,
                              last_price=100.0, log_return=None))
    desc = flow_descriptives(bars)
    assert desc.n_bars == n
    assert desc.mean_flow == pytest.approx(0.0, abs=1e-15)
    assert desc.sd_flow == pytest.approx(math.sqrt(n / (n - 1)), rel=1e-12)
    # Daily aggregates are the (absolute) sums of each flow leg.
    assert desc.daily_positive == {"d1": 15.0}
    assert desc.daily_negative == {"d1": 15.0}
    assert desc.unsigned_pct == 0.0


def test_flow_descriptives_unsigned_share():
    bars = [
        MinuteBar(day="d1", bar_index=0, order_flow=2.0, last_price=100.0,
                  log_return=None, signed_count=3, unsigned_count=1),
        MinuteBar(day="d1", bar_index=1, order_flow=0.0, last_price=100.0,
                  log_return=0.0, signed_count=0, unsigned_count=4),
    ]
    desc = flow_descriptives(bars)
    assert desc.unsigned_pct == pytest.approx(100.0 * 5.0 / 8.0, rel=1e-12)


def test_flow_descriptives_accepts_day_dict():
    days = build_bars(read_ticks(DATA / "golden_ticks.csv"),
                      session_start="09:00", session_end="09:05", bar_seconds=60)
    desc = flow_descriptives(days)
    flows = [b.order_flow for b in days["2024-03-15"]]
    assert desc.mean_flow == pytest.approx(np.mean(flows), rel=1e-14)
    assert desc.sd_flow == pytest.approx(np.std(flows, ddof=1), rel=1e-14)
    assert desc.daily_positive == {"2024-03-15": 15.0}
    assert desc.daily_negative == {"2024-03-15": 1.0}
