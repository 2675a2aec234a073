import numpy as np
import pytest
from hypothesis import given, strategies as st

from p2pgrid.feeders import bundled_feeder, five_node, random_radial
from p2pgrid.network import (
    Line, Network, NetworkError, TopologyError, build_matrices, format_network, load_households,
    parse_network,
)

TEXT = """\
base_kva = 100
base_v = 230
slack_pu = 1.0
from,to,r_ohm,x_ohm,capacity_kva
0,1,0.0529,0.0529,100
1,2,0.0529,0.0264,50
"""


def test_parse_converts_to_per_unit():
    net = parse_network(TEXT)
    assert net.n_nodes == 3
    assert net.z_base == pytest.approx(0.529)
    assert net.lines[0].r_pu == pytest.approx(0.1)
    assert net.lines[1].capacity_pu == pytest.approx(0.5)


def test_format_round_trip():
    net = bundled_feeder()
    text = format_network(net)
    again = parse_network(text, households=net.households)
    assert format_network(again) == text
    assert again.n_nodes == net.n_nodes


@given(st.integers(2, 40), st.integers(0, 10_000))
def test_random_round_trip(n, seed):
    net = random_radial(n, seed)
    text = format_network(net)
    again = parse_network(text)
    assert format_network(again) == text
    for a, b in zip(again.lines, net.lines):
        assert (a.from_node, a.to_node) == (b.from_node, b.to_node)
        assert a.z == pytest.approx(b.z, rel=1e-12)


@pytest.mark.parametrize("bad, msg", [
    ("0,1,0.05,0.05\n", ":5: expected 5 fields"),
    ("0,1,abc,0.05,100\n", ":5: malformed"),
    ("0,1,-0.1,0.05,100\n", ":5: negative resistance"),
    ("0,1,0,0,100\n", ":5: zero impedance"),
    ("0,1,0.05,0.05,0\n", ":5: capacity"),
])
def test_malformed_rows_name_the_line(bad, msg):
    text = "base_kva = 100\nbase_v = 230\nslack_pu = 1\nfrom,to,r_ohm,x_ohm,capacity_kva\n" + bad
    with pytest.raises(NetworkError, match=msg):
        parse_network(text, source="f.csv")


def test_unknown_header_key():
    with pytest.raises(NetworkError, match="unknown header key"):
        parse_network("foo = 1\n" + TEXT)


def test_disconnected_and_meshed_rejected():
    with pytest.raises(TopologyError):
        Network(4, (Line(0, 1, 0.1, 0.1, 1), Line(2, 3, 0.1, 0.1, 1)))
    with pytest.raises(TopologyError):
        Network(3, (Line(0, 1, .1, .1, 1), Line(1, 2, .1, .1, 1), Line(0, 2, .1, .1, 1)))


def test_household_on_slack_rejected():
    with pytest.raises(NetworkError, match="slack"):
        Network(2, (Line(0, 1, .1, .1, 1),), households={"h": 0})


def test_bad_household_file(tmp_path):
    p = tmp_path / "hh.csv"
    p.write_text("household_id,node\nh1,1\nh1,2\n")
    with pytest.raises(NetworkError, match=":3: duplicate"):
        load_households(p)


@given(st.integers(2, 30), st.integers(0, 10_000))
def test_admittance_properties(n, seed):
    net = random_radial(n, seed)
    m = build_matrices(net)
    np.testing.assert_allclose(m.Y, m.Y.T)
    np.testing.assert_allclose(m.Y.sum(axis=1), 0, atol=1e-9)
    assert np.all(np.abs(m.A).sum(axis=1) == 2)
    np.testing.assert_allclose(m.A.sum(axis=1), 0)
    # Y = A' diag(y) A
    y = np.array([1 / ln.z for ln in net.lines])
    np.testing.assert_allclose(m.A.T @ np.diag(y) @ m.A, m.Y, atol=1e-9)


def test_tree_queries(five):
    assert list(five.parents()) == [-1, 0, 1, 2, 1]
    assert five.path_to_root(3) == [2, 1, 0]
    r = five.path_resistance()
    assert r[3] == pytest.approx(0.02 + 0.03 + 0.03)
    assert r[4] == pytest.approx(0.02 + 0.04)


def test_bundled_feeder_shape():
    net = bundled_feeder()
    assert len(net.households) == 101
    assert net.households["CES"] == 101
    assert abs(net.slack_voltage) == pytest.approx(1.02)
