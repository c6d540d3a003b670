import numpy as np
import pytest

from routetime import RoadNetwork, Segment
from routetime.trips import Traversal, Trip, TripTable

# columns of the three-segment appendix example; rows are joint outcomes
R1 = [1, 3, 5, 10, 20]
R2 = [7, 3, 2, 9, 11]
R3 = [8, 11, 17, 6, 3]


@pytest.fixture
def appendix_lists():
    return [R1, R2, R3]


@pytest.fixture
def chain():
    return RoadNetwork.from_segments([
        Segment("A", 100.0, ("B",)),
        Segment("B", 200.0, ("C",)),
        Segment("C", 300.0, ()),
    ])


@pytest.fixture
def ring():
    """Four segments in a cycle with one shortcut."""
    return RoadNetwork.from_segments([
        Segment("A", 100.0, ("B", "C")),
        Segment("B", 150.0, ("C",)),
        Segment("C", 200.0, ("D",)),
        Segment("D", 250.0, ("A",)),
    ])


def make_trip(trip_id, start, pairs):
    return Trip(trip_id, start, tuple(Traversal(s, float(t)) for s, t in pairs))


def table_of(net, trips):
    return TripTable.from_trips(trips, net)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
