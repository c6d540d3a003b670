"""Route travel-time predictors: SMD, SMN, COM and MED, plus route choice."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_trip_table, check_method, check_positive_int
from .network import RoadNetwork, Route, RouteError
from .stats import (DEFAULT_LOOKBACK, FLAG_NAMES, NO_WINDOW, NoDataError,
                    SegmentStatsStore, _build, accumulate)
from .trips import TimeGrid, TripTable
from .weights import WeightFunction, eval_weight


class MedInfeasible(NoDataError):
    """No complete trip over exactly this route is available."""


@dataclass(frozen=True)
class RoutePrediction:
    route: Route
    k: int
    method: str
    predicted_time: float
    provenance: dict = field(default_factory=dict)
    windows: tuple = ()
    weight: float | None = None
    clamped: bool = False

    @property
    def provenance_label(self) -> str:
        return ",".join(f"{name}={self.provenance.get(name, 0)}" for name in FLAG_NAMES)


def _segment_estimates(route, store: SegmentStatsStore, window: int | None):
    route = route if isinstance(route, Route) else Route(tuple(route))
    idx = np.array([store.segment_index(s) for s in route.segments], dtype=np.int64)
    target = np.full(idx.size, -1 if window is None else window, dtype=np.int64)
    mean, median, flag, source = store.lookup(idx, target)
    if np.isnan(mean).any():
        missing = route.segments[int(np.flatnonzero(np.isnan(mean))[0])]
        raise NoDataError(f"no observations for segment {missing!r}")
    provenance = {name: int((flag == i).sum()) for i, name in enumerate(FLAG_NAMES)}
    windows = tuple(None if s == NO_WINDOW else int(s) for s in source)
    return route, mean, median, provenance, windows


def predict_smd(route, store: SegmentStatsStore, window: int | None) -> RoutePrediction:
    """Sum of per-segment medians."""
    route, _, median, prov, wins = _segment_estimates(route, store, window)
    return RoutePrediction(route, route.k, "SMD", float(median.sum()), prov, wins)


def predict_smn(route, store: SegmentStatsStore, window: int | None) -> RoutePrediction:
    """Sum of per-segment means."""
    route, mean, _, prov, wins = _segment_estimates(route, store, window)
    return RoutePrediction(route, route.k, "SMN", float(mean.sum()), prov, wins)


def combine(smd, smn, w):
    return (1.0 - w) * smd + w * smn


def predict_com(route, store: SegmentStatsStore, window: int | None,
                wf: WeightFunction | float | Callable[[int], float]) -> RoutePrediction:
    """``(1 - w_k) * SMD + w_k * SMN``.

    ``wf`` may be a fitted WeightFunction, a callable of ``k`` or a fixed
    number; the weight is clamped to ``[0, 1]`` so the result always lies
    between SMD and SMN.
    """
    route, mean, median, prov, wins = _segment_estimates(route, store, window)
    if isinstance(wf, WeightFunction):
        raw = eval_weight(wf, route.k)
    elif callable(wf):
        raw = float(wf(route.k))
    else:
        raw = float(wf)
    w = min(max(raw, 0.0), 1.0)
    smd, smn = float(median.sum()), float(mean.sum())
    return RoutePrediction(route, route.k, "COM", combine(smd, smn, w), prov, wins, w, w != raw)


class RouteHistory:
    """Whole-trip times grouped by exact segment sequence, windowed like segment stats."""

    def __init__(self, store: SegmentStatsStore):
        self.store = store

    @staticmethod
    def key(route) -> str:
        segs = route.segments if isinstance(route, Route) else tuple(route)
        return ",".join(segs)

    @classmethod
    def from_trips(cls, trips: TripTable, grid: TimeGrid, net: RoadNetwork,
                   history: TripTable | None = None,
                   lookback: int = DEFAULT_LOOKBACK) -> "RouteHistory":
        ids = net.ids

        def keys(table):
            return [",".join(ids[s] for s in table.route_segments(i)) for i in range(len(table))]

        history = trips if history is None else history
        tkeys, hkeys = keys(trips), keys(history)
        names = list(dict.fromkeys(tkeys + hkeys))
        index = {name: i for i, name in enumerate(names)}
        store = _build(names, grid,
                       np.array([index[k] for k in tkeys], dtype=np.int64),
                       grid.window_of(trips.end_ts) if len(trips) else np.zeros(0, np.int64),
                       trips.totals,
                       np.array([index[k] for k in hkeys], dtype=np.int64), history.totals,
                       float(history.end_ts.max()) if len(history) else -np.inf, lookback, False)
        return cls(store)


def predict_med(route, history: RouteHistory, window: int | None) -> RoutePrediction:
    """Median whole-trip time of trips that followed exactly ``route``."""
    route = route if isinstance(route, Route) else Route(tuple(route))
    key = RouteHistory.key(route)
    try:
        est = history.store.estimate(key, window)
    except NoDataError:
        raise MedInfeasible(f"no recorded trips over route {key!r}") from None
    prov = {name: int(name == est.flag) for name in FLAG_NAMES}
    return RoutePrediction(route, route.k, "MED", est.median, prov, (est.window,))


def choose_route(candidates: Sequence, predictor: Callable) -> Route:
    """Candidate with the lowest predicted time; ties resolve to the first listed.

    ``predictor`` maps a route to a number or a RoutePrediction. Candidates
    whose prediction fails are skipped; if all fail the last error is raised.
    """
    if not candidates:
        raise ValueError("no candidate routes")
    best, best_time, last_error = None, np.inf, None
    for cand in candidates:
        try:
            res = predictor(cand)
        except (NoDataError, RouteError) as exc:
            last_error = exc
            continue
        t = res.predicted_time if isinstance(res, RoutePrediction) else float(res)
        if best is None or t < best_time:
            best, best_time = cand, t
    if best is None:
        raise last_error
    return best if isinstance(best, Route) else Route(tuple(best))


# -- vectorised additive prediction ---------------------------------------------

class AdditivePredictions(NamedTuple):
    smd: np.ndarray
    smn: np.ndarray
    k: np.ndarray
    target_window: np.ndarray  # -1 when there is no prior window
    flag_counts: np.ndarray  # (n_trips, 3): fresh / stale / historical
    latest_source: np.ndarray  # newest window consulted per trip, NO_WINDOW if none

    def com(self, wf: WeightFunction | Callable | float) -> np.ndarray:
        if isinstance(wf, WeightFunction):
            w = eval_weight(wf, self.k)
        elif callable(wf):
            w = np.array([wf(int(k)) for k in self.k], dtype=float)
        else:
            w = np.full(self.k.size, float(wf))
        return combine(self.smd, self.smn, np.clip(w, 0.0, 1.0))


def additive_predictions(store: SegmentStatsStore, trips: TripTable, depth: int = 1,
                         prefix: int | None = None) -> AdditivePredictions:
    """SMD and SMN for every trip, using only windows before its start window.

    With ``prefix`` only the first ``prefix`` traversals of each trip count.
    """
    start_win = store.grid.window_of(trips.start_ts) if len(trips) else np.zeros(0, np.int64)
    target = start_win - depth
    target = np.where(target >= 0, target, -1)
    k = trips.k if prefix is None else np.minimum(trips.k, prefix)
    if prefix is None:
        seg, offsets = trips.seg, trips.offsets
    else:
        offsets = np.zeros(len(trips) + 1, dtype=np.int64)
        np.cumsum(k, out=offsets[1:])
        take = np.repeat(trips.offsets[:-1] - offsets[:-1], k) + np.arange(offsets[-1])
        seg = trips.seg[take]
    trip_of = np.repeat(np.arange(len(trips)), k)
    mean, median, flag, source = store.lookup(seg, target[trip_of])
    if np.isnan(mean).any():
        bad = int(seg[np.flatnonzero(np.isnan(mean))[0]])
        raise NoDataError(f"no observations for segment {store.segment_ids[bad]!r}")
    starts = offsets[:-1]
    smd = np.add.reduceat(median, starts) if len(trips) else np.zeros(0)
    smn = np.add.reduceat(mean, starts) if len(trips) else np.zeros(0)
    counts = np.zeros((len(trips), 3), dtype=np.int64)
    np.add.at(counts, (trip_of, flag.astype(np.int64)), 1)
    latest = np.full(len(trips), NO_WINDOW, dtype=np.int64)
    np.maximum.at(latest, trip_of, source)
    return AdditivePredictions(smd, smn, k, target, counts, latest)


class AdditiveRoutePredictor(BaseEstimator):
    """Estimator interface to additive prediction.

    ``fit`` accumulates window statistics from finished trips; ``predict``
    returns one travel time per trip, computed from the statistics window
    preceding each trip's start.

    Parameters
    ----------
    network : RoadNetwork
    weights : WeightFunction or float, optional
        Required for ``method="COM"``.
    method : {"COM", "SMD", "SMN"}
    delta : int
        Window width in minutes.
    origin : int
        Epoch seconds aligning window boundaries.
    lookback : int
        Stale-window budget of the fallback ladder.
    depth : int
        How many windows before the start window the statistics come from.
    history_until : float, optional
        Only trips ending before this timestamp feed the historical fallback.
    """

    def __init__(self, network=None, weights=None, method="COM", delta=60, origin=0,
                 lookback=DEFAULT_LOOKBACK, depth=1, history_until=None):
        self.network = network
        self.weights = weights
        self.method = method
        self.delta = delta
        self.origin = origin
        self.lookback = lookback
        self.depth = depth
        self.history_until = history_until

    def fit(self, X, y=None):
        if self.network is None:
            raise ValueError("AdditiveRoutePredictor needs a network")
        method = check_method(self.method, ("SMD", "SMN", "COM"))
        if method == "COM" and self.weights is None:
            raise ValueError("method 'COM' needs weights")
        check_positive_int(self.depth, "depth")
        check_positive_int(self.lookback, "lookback", allow_zero=True)
        trips = as_trip_table(X, self.network)
        history = trips
        if self.history_until is not None:
            history = trips.select(trips.end_ts < self.history_until)
        self.grid_ = TimeGrid(self.delta, self.origin)
        self.store_ = accumulate(trips, self.grid_, self.network, history, self.lookback)
        return self

    def _predict_all(self, X):
        check_is_fitted(self, "store_")
        trips = as_trip_table(X, self.network)
        return trips, additive_predictions(self.store_, trips, self.depth)

    def predict(self, X):
        _, preds = self._predict_all(X)
        method = check_method(self.method, ("SMD", "SMN", "COM"))
        if method == "SMD":
            return preds.smd
        if method == "SMN":
            return preds.smn
        return preds.com(self.weights)

    def predict_route(self, route, at: int) -> RoutePrediction:
        """Prediction for an ad-hoc route departing at epoch second ``at``."""
        check_is_fitted(self, "store_")
        route = self.network.check_route(route)
        window = self.grid_.window_of(at) - self.depth
        window = window if window >= 0 else None
        method = check_method(self.method, ("SMD", "SMN", "COM"))
        if method == "SMD":
            return predict_smd(route, self.store_, window)
        if method == "SMN":
            return predict_smn(route, self.store_, window)
        return predict_com(route, self.store_, window, self.weights)

    def score(self, X, y=None):
        """Negative mean absolute error against the trips' recorded durations."""
        trips, _ = self._predict_all(X)
        actual = trips.totals if y is None else np.asarray(y, dtype=float)
        return -float(np.mean(np.abs(self.predict(trips) - actual)))
