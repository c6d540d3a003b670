import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from routetime.network import (NetworkFormatError, Route, RouteError, Segment,
                               dump_network, load_network, random_walk_route, random_walks,
                               route_length_m)
from routetime.synth import SynthConfig, generate_network

CHAIN_TEXT = "A\t100\tB\nB\t200\tC\nC\t300\t\n"


def test_load_chain():
    net = load_network(CHAIN_TEXT)
    assert len(net) == 3
    assert net.check_route(["A", "B", "C"]).k == 3
    assert net.successors("A") == ("B",)
    assert route_length_m(net, ["A", "B", "C"]) == 600


def test_dangling_successor_reports_line():
    with pytest.raises(NetworkFormatError) as err:
        load_network("A\t100\tB\nB\t200\tZ\n")
    assert err.value.line == 2
    assert "Z" in str(err.value)


@pytest.mark.parametrize("text, line", [
    ("A\t-5\t\n", 1),
    ("A\t0\t\n", 1),
    ("A\tabc\t\n", 1),
    ("A\t10\t\nA\t20\t\n", 2),
    ("# c\nA 10\n", 2),
])
def test_format_errors(text, line):
    with pytest.raises(NetworkFormatError) as err:
        load_network(text)
    assert err.value.line == line


def test_comments_and_marked_route():
    net = load_network("#segments\n#route\tmain\tA,B\n" + CHAIN_TEXT)
    assert net.marked_routes["main"] == Route(("A", "B"))
    with pytest.raises(NetworkFormatError):
        load_network("#route\tbad\tA,C\n" + CHAIN_TEXT)


def test_route_connectivity(chain):
    with pytest.raises(RouteError):
        chain.check_route(["A", "C"])
    with pytest.raises(RouteError):
        chain.check_route(["A", "X"])
    with pytest.raises(RouteError):
        Route(())


def test_route_length_single_and_permuted(ring):
    assert route_length_m(ring, ["C"]) == 200
    assert route_length_m(ring, ["A", "B", "C", "D"]) == route_length_m(ring, ["C", "D", "A", "B"])


def test_synthetic_network_roundtrip():
    net = generate_network(SynthConfig(), np.random.default_rng(0))
    text = dump_network(net)
    back = load_network(text)
    assert len(back) == 106
    assert back == net
    assert dump_network(back) == text


def test_walk_on_chain(chain, rng):
    assert random_walk_route(chain, 3, rng) == Route(("A", "B", "C"))
    with pytest.raises(RouteError):
        random_walk_route(chain, 4, rng, max_attempts=50)


def test_walk_determinism(ring):
    a = random_walk_route(ring, 6, np.random.default_rng(5))
    b = random_walk_route(ring, 6, np.random.default_rng(5))
    assert a == b


def test_walk_start_uniform(ring):
    rng = np.random.default_rng(1)
    counts = np.zeros(4)
    for _ in range(10_000):
        counts[ring.index[random_walk_route(ring, 1, rng).segments[0]]] += 1
    chi2 = ((counts - 2500) ** 2 / 2500).sum()
    assert chi2 < 16.27  # 3 dof, p = 0.001


def test_vectorised_walks_are_valid():
    net = generate_network(SynthConfig(n_segments=30, main_road_len=10), np.random.default_rng(2))
    ks = np.random.default_rng(3).integers(1, 25, size=500)
    walks = random_walks(net, ks, np.random.default_rng(4))
    for k, w in zip(ks, walks):
        assert w.size == k
        net.check_route([net.ids[i] for i in w])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_walk_replays(k, seed):
    net = generate_network(SynthConfig(n_segments=25, main_road_len=5), np.random.default_rng(9))
    route = random_walk_route(net, k, np.random.default_rng(seed))
    assert route.k == k
    net.check_route(route)


def test_segment_validation():
    with pytest.raises(ValueError):
        Segment("A", 0.0)
    with pytest.raises(NetworkFormatError):
        load_network(io.StringIO("A\t10\tA,\n\tx\n"))
