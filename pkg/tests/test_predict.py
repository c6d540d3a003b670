import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from routetime.network import RoadNetwork, Route, RouteError, Segment
from routetime.oracles import verify_prop3
from routetime.predict import (AdditiveRoutePredictor, MedInfeasible, RouteHistory,
                               additive_predictions, choose_route, predict_com, predict_med,
                               predict_smd, predict_smn)
from routetime.stats import NoDataError, accumulate
from routetime.trips import TimeGrid
from routetime.weights import WeightFunction

from conftest import R1, R2, R3, make_trip, table_of


def single_window_store(net, columns):
    """Store whose window 0 holds ``columns[sid]`` for each segment."""
    trips = []
    for sid, values in columns.items():
        trips += [make_trip(f"{sid}{i}", 0, [(sid, v)]) for i, v in enumerate(values)]
    return accumulate(table_of(net, trips), TimeGrid(60, 0), net)


@pytest.fixture
def abc():
    return RoadNetwork.from_segments([Segment("a", 100.0, ("b",)), Segment("b", 100.0, ("c",)),
                                      Segment("c", 100.0, ())])


@pytest.fixture
def appendix_store(abc):
    return single_window_store(abc, {"a": R1, "b": R2, "c": R3})


def test_smd_smn_appendix(appendix_store):
    smd = predict_smd(["a", "b", "c"], appendix_store, 0)
    smn = predict_smn(["a", "b", "c"], appendix_store, 0)
    assert smd.predicted_time == 20
    assert smn.predicted_time == pytest.approx(23.2)
    row_sums = np.array([R1, R2, R3]).sum(axis=0)
    assert smn.predicted_time == pytest.approx(row_sums.mean())
    assert smd.provenance == {"fresh": 3, "stale": 0, "historical": 0}


def test_single_segment_examples(abc):
    store = single_window_store(abc, {"a": [10, 20, 60], "b": [15], "c": [15]})
    assert predict_smd(["a"], store, 0).predicted_time == 20
    assert predict_smn(["a"], store, 0).predicted_time == 30
    assert predict_smd(["b", "c"], store, 0).predicted_time == 30
    with pytest.raises(RouteError):
        predict_smd([], store, 0)


def test_com_endpoints_and_clamp(appendix_store):
    route = ["a", "b", "c"]
    assert predict_com(route, appendix_store, 0, 0.0).predicted_time == 20
    assert predict_com(route, appendix_store, 0, 1.0).predicted_time == pytest.approx(23.2)
    # the appendix route needs w = 1.25 to hit its median of 24; clamping keeps COM at SMN
    w_needed = (24 - 20) / (23.2 - 20)
    assert w_needed == pytest.approx(1.25)
    pred = predict_com(route, appendix_store, 0, w_needed)
    assert pred.clamped and pred.weight == 1.0
    assert pred.predicted_time == pytest.approx(23.2)
    wf = WeightFunction((0.0, 0.5))
    mid = predict_com(route, appendix_store, 0, wf)
    assert mid.weight == 0.5 and not mid.clamped
    assert mid.predicted_time == pytest.approx(21.6)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.lists(st.floats(0.1, 1e3), min_size=1, max_size=7), min_size=3, max_size=3),
       st.floats(-0.5, 1.5))
def test_com_convex(columns, w):
    net = RoadNetwork.from_segments([Segment("a", 1.0, ("b",)), Segment("b", 1.0, ("c",)),
                                     Segment("c", 1.0, ())])
    store = single_window_store(net, dict(zip("abc", columns)))
    smd = predict_smd("abc", store, 0).predicted_time
    smn = predict_smn("abc", store, 0).predicted_time
    com = predict_com("abc", store, 0, w).predicted_time
    tol = 1e-9 * max(smd, smn)
    assert min(smd, smn) - tol <= com <= max(smd, smn) + tol


def test_constant_data_all_methods_agree(abc):
    c = 7.0
    trips = [make_trip(f"t{i}", 0, [("a", c), ("b", c), ("c", c)]) for i in range(5)]
    table = table_of(abc, trips)
    store = accumulate(table, TimeGrid(60, 0), abc)
    hist = RouteHistory.from_trips(table, TimeGrid(60, 0), abc)
    route = ["a", "b", "c"]
    values = {predict_smd(route, store, 0).predicted_time, predict_smn(route, store, 0).predicted_time,
              predict_com(route, store, 0, 0.4).predicted_time, predict_med(route, hist, 0).predicted_time}
    assert values == {3 * c}


def test_med_examples(abc):
    grid = TimeGrid(60, 0)
    sums = np.array([R1, R2, R3]).sum(axis=0)
    trips = [make_trip(f"t{i}", 0, [("a", x), ("b", y), ("c", z)]) for i, (x, y, z) in enumerate(zip(R1, R2, R3))]
    trips.append(make_trip("solo", 0, [("b", 30)]))
    hist = RouteHistory.from_trips(table_of(abc, trips), grid, abc)
    assert sorted(sums.tolist()) == [16, 17, 24, 25, 34]
    assert predict_med(["a", "b", "c"], hist, 0).predicted_time == 24
    assert predict_med(["b"], hist, 0).predicted_time == 30
    with pytest.raises(MedInfeasible):
        predict_med(["a", "b"], hist, 0)


def test_additivity(appendix_store):
    whole = predict_smd(["a", "b", "c"], appendix_store, 0).predicted_time
    parts = sum(predict_smd([s], appendix_store, 0).predicted_time for s in "abc")
    assert whole == parts
    whole = predict_smn(["a", "b", "c"], appendix_store, 0).predicted_time
    parts = sum(predict_smn([s], appendix_store, 0).predicted_time for s in "abc")
    assert whole == pytest.approx(parts)


def test_choose_route_table2():
    # two routes of 12 km, each with a fast and a slow outcome of equal probability (minutes)
    net = RoadNetwork.from_segments([Segment("A", 12000.0), Segment("B", 12000.0)])
    store = single_window_store(net, {"A": [12, 24], "B": [10, 40]})
    speeds = {r: np.mean([12 / (t / 60) for t in v]) for r, v in {"A": [12, 24], "B": [10, 40]}.items()}
    assert speeds["A"] == speeds["B"] == 45
    assert predict_smn(["A"], store, 0).predicted_time == 18
    assert predict_smn(["B"], store, 0).predicted_time == 25
    by_mean = choose_route([Route(("B",)), Route(("A",))], lambda r: predict_smn(r, store, 0))
    by_median = choose_route([Route(("B",)), Route(("A",))], lambda r: predict_smd(r, store, 0))
    assert by_mean == by_median == Route(("A",))


def test_choose_route_ties_and_failures(abc, appendix_store):
    same = [Route(("a",)), Route(("a",))]
    assert choose_route(same, lambda r: 5.0) is same[0]
    pick = choose_route([("x",), ("a",)], lambda r: predict_smd(r, appendix_store, 0))
    assert pick == Route(("a",))
    with pytest.raises(NoDataError):
        choose_route([("x",)], lambda r: predict_smd(r, appendix_store, 0))
    with pytest.raises(ValueError):
        choose_route([], lambda r: 0)


def test_choose_route_follows_probability_side():
    rng = np.random.default_rng(8)
    agree = total = 0
    for _ in range(30):
        (ma, mb), (sa, sb) = rng.uniform(0, 2, 2), rng.uniform(0.2, 1.5, 2)
        check = verify_prop3((ma, sa), (mb, sb), "exp", 20_000, rng)
        if check.inconclusive:
            continue
        total += 1
        chosen = choose_route([Route(("A",)), Route(("B",))],
                              lambda r: check.median_a if r.segments == ("A",) else check.median_b)
        agree += (chosen.segments == ("A",)) == (check.p_a_greater < 0.5)
    assert total > 0 and agree == total


def test_vectorised_matches_scalar(ring):
    rng = np.random.default_rng(2)
    routes = [("A", "B", "C"), ("C", "D"), ("D", "A", "C"), ("B",)]
    trips = []
    for i in range(300):
        r = routes[i % 4]
        trips.append(make_trip(f"t{i}", int(rng.integers(0, 86400)), [(s, rng.lognormal(1, 0.7)) for s in r]))
    table = table_of(ring, trips)
    store = accumulate(table, TimeGrid(30, 0), ring, lookback=2)
    pred = additive_predictions(store, table)
    grid = store.grid
    for i, trip in enumerate(trips):
        w = grid.window_of(trip.start_ts) - 1
        w = w if w >= 0 else None
        assert pred.smd[i] == pytest.approx(predict_smd(trip.route, store, w).predicted_time)
        prov = predict_smn(trip.route, store, w).provenance
        assert pred.flag_counts[i].tolist() == [prov["fresh"], prov["stale"], prov["historical"]]
        assert pred.smn[i] == pytest.approx(predict_smn(trip.route, store, w).predicted_time)
    pre = additive_predictions(store, table, prefix=1)
    assert pre.k.max() == 1


def test_estimator_api(ring):
    rng = np.random.default_rng(4)
    trips = [make_trip(f"t{i}", i * 300, [("A", rng.lognormal(2, 0.5)), ("B", rng.lognormal(2, 0.5))])
             for i in range(200)]
    table = table_of(ring, trips)
    est = AdditiveRoutePredictor(ring, weights=WeightFunction((0.0, 0.5)), delta=30)
    assert est.get_params()["delta"] == 30
    est.fit(table)
    com = est.predict(table)
    smd = est.set_params(method="SMD").predict(table)
    smn = est.set_params(method="SMN").predict(table)
    assert np.allclose(com, (smd + smn) / 2)
    assert est.score(table) <= 0
    assert est.predict_route(["A", "B"], 200 * 300).method == "SMN"
    with pytest.raises(RouteError):
        est.predict_route(["A", "D"], 0)
    with pytest.raises(ValueError):
        AdditiveRoutePredictor(ring, method="COM").fit(table)
    with pytest.raises(ValueError):
        AdditiveRoutePredictor(ring, method="XYZ", weights=0.5).fit(table)
