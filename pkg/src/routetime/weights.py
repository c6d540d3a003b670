"""Learning the route-length dependent combination weight ``w_k``.

Data points come from semi-synthetic routes: a random walk of ``k`` segments
is drawn on the network, ``h`` synthetic trips are formed by resampling one
historical observation per segment, and the weight whose mean/median
combination lands closest to the median of those trips is found by grid
search. A look-up table (optionally smoothed) is then fitted over ``k``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_trip_table, check_grid_step, check_positive_int
from .network import MAX_WALK_ATTEMPTS, RoadNetwork, Route, random_walk_route
from .stats import group_summaries
from .trips import TripTable


@dataclass(frozen=True, eq=False)
class HistoricalSamples:
    """All observed travel times per segment, flattened and grouped by segment."""

    values: np.ndarray
    offsets: np.ndarray  # per segment index, start into ``values``
    counts: np.ndarray
    median: np.ndarray
    mean: np.ndarray

    @classmethod
    def from_trips(cls, trips: TripTable, net: RoadNetwork,
                   hours: tuple[int, int] | None = None) -> "HistoricalSamples":
        """Collect training observations, optionally only from trips starting in ``[h0, h1)`` UTC hours."""
        seg, times = trips.seg, trips.times
        if hours is not None:
            hour = (trips.start_ts // 3600) % 24
            h0, h1 = hours
            keep = (hour >= h0) & (hour < h1) if h0 <= h1 else (hour >= h0) | (hour < h1)
            keep = np.repeat(keep, trips.k)
            seg, times = seg[keep], times[keep]
        return cls.from_arrays(seg, times, len(net))

    @classmethod
    def from_arrays(cls, seg: np.ndarray, times: np.ndarray, n_segments: int) -> "HistoricalSamples":
        keys, count, mean, median, values, starts = group_summaries(
            np.asarray(seg, dtype=np.int64), np.asarray(times, dtype=np.float64))
        counts = np.zeros(n_segments, dtype=np.int64)
        offsets = np.zeros(n_segments, dtype=np.int64)
        med = np.full(n_segments, np.nan)
        mu = np.full(n_segments, np.nan)
        counts[keys], offsets[keys], med[keys], mu[keys] = count, starts, median, mean
        return cls(values, offsets, counts, med, mu)

    @classmethod
    def from_lists(cls, lists: Sequence[Sequence[float]]) -> "HistoricalSamples":
        seg = np.repeat(np.arange(len(lists)), [len(x) for x in lists])
        return cls.from_arrays(seg, np.concatenate([np.asarray(x, float) for x in lists]), len(lists))

    def draw_sums(self, route_idx: np.ndarray, h: int, rng: np.random.Generator) -> np.ndarray:
        """``h`` synthetic trip times, one uniform draw (with replacement) per segment each."""
        c = self.counts[route_idx]
        pick = (rng.random((h, route_idx.size)) * c).astype(np.int64)
        return self.values[self.offsets[route_idx] + pick].sum(axis=1)


def weight_grid(grid_step: float) -> np.ndarray:
    n = check_grid_step(grid_step)
    return np.arange(n + 1) / n


def grid_search_weight(smd: float, smn: float, target: float, grid_step: float = 0.01) -> float:
    """Grid value of ``w`` minimising ``|(1-w)*smd + w*smn - target|``; ties go to the smaller ``w``."""
    grid = weight_grid(grid_step)
    dev = np.abs((1.0 - grid) * smd + grid * smn - target)
    return float(grid[np.argmin(dev)])


@dataclass(frozen=True)
class WeightDataPoint:
    k: int
    w_opt: float
    route: Route
    true_median: float
    smd: float
    smn: float


def generate_datapoint(net: RoadNetwork, samples: HistoricalSamples, k_max: int, h: int,
                       grid_step: float, rng: np.random.Generator, k: int | None = None,
                       max_attempts: int = MAX_WALK_ATTEMPTS) -> WeightDataPoint:
    """One semi-synthetic (k, w_opt) observation.

    ``k`` is uniform on ``[1, k_max]`` unless given. Routes touching a
    segment without historical observations are redrawn.
    """
    if k is None:
        k = int(rng.integers(1, k_max + 1))
    for _ in range(max_attempts):
        route = random_walk_route(net, k, rng)
        idx = net.route_indices(route)
        if (samples.counts[idx] > 0).all():
            break
    else:
        raise ValueError(f"no route of length {k} with historical data on every segment")
    sums = samples.draw_sums(idx, h, rng)
    true_median = float(np.median(sums))
    smd = float(samples.median[idx].sum())
    smn = float(samples.mean[idx].sum())
    w = grid_search_weight(smd, smn, true_median, grid_step)
    return WeightDataPoint(k, w, route, true_median, smd, smn)


def generate_datapoints(net: RoadNetwork, samples: HistoricalSamples, n_points: int, k_max: int,
                        h: int, grid_step: float, rng: np.random.Generator) -> list[WeightDataPoint]:
    return [generate_datapoint(net, samples, k_max, h, grid_step, rng) for _ in range(n_points)]


# -- weight function -----------------------------------------------------------

@dataclass(frozen=True)
class WeightFunction:
    """``w_k`` for ``k = 1..k_max`` (``table[0]`` is ``w_1``); constant beyond ``k_max``."""

    table: tuple[float, ...]
    mode: str = "table"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.table:
            raise ValueError("empty weight table")
        arr = np.asarray(self.table, dtype=float)
        if np.isnan(arr).any() or arr.min() < 0 or arr.max() > 1:
            raise ValueError("weights must lie in [0, 1]")
        if arr[0] != 0.0:
            raise ValueError("w_1 must be exactly 0")

    @property
    def k_max(self) -> int:
        return len(self.table)

    def __call__(self, k):
        return eval_weight(self, k)

    @classmethod
    def constant(cls, w: float, k_max: int = 1) -> "WeightFunction":
        """Weight ``w`` for every ``k >= 2`` (``w_1`` stays 0)."""
        return cls((0.0,) + (float(w),) * (k_max - 1), mode="table")


def eval_weight(wf: WeightFunction, k):
    """Weight for route length ``k`` (scalar or array); ``k > k_max`` uses ``w_{k_max}``."""
    table = np.asarray(wf.table)
    karr = np.asarray(k)
    if (karr < 1).any():
        raise ValueError("k must be >= 1")
    w = np.clip(table[np.minimum(karr, wf.k_max) - 1], 0.0, 1.0)
    return float(w) if np.ndim(w) == 0 else w


def local_average(values: np.ndarray, bandwidth: int) -> np.ndarray:
    """Uniform moving average over ``|k' - k| <= bandwidth``, ignoring NaN gaps.

    Windows are truncated at the ends. Positions whose whole neighbourhood is
    empty are linearly interpolated from the nearest smoothed values.
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    present = ~np.isnan(values)
    v = np.where(present, values, 0.0)
    csum = np.r_[0.0, np.cumsum(v)]
    cnt = np.r_[0, np.cumsum(present)]
    lo = np.clip(np.arange(n) - bandwidth, 0, n)
    hi = np.clip(np.arange(n) + bandwidth + 1, 0, n)
    num = csum[hi] - csum[lo]
    den = cnt[hi] - cnt[lo]
    out = np.full(n, np.nan)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    if not ok.all():
        x = np.flatnonzero(ok)
        out[~ok] = np.interp(np.flatnonzero(~ok), x, out[ok])
    return out


def table_means(points: Iterable[WeightDataPoint]) -> tuple[np.ndarray, np.ndarray]:
    """Per-k mean of ``w_opt`` (NaN for k without points) and per-k point counts."""
    ks = np.array([p.k for p in points], dtype=np.int64)
    ws = np.array([p.w_opt for p in points], dtype=float)
    if ks.size == 0:
        raise ValueError("no weight data points")
    k_max = int(ks.max())
    counts = np.bincount(ks, minlength=k_max + 1)[1:]
    sums = np.bincount(ks, weights=ws, minlength=k_max + 1)[1:]
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return means, counts


def fit_weight_function(points: Sequence[WeightDataPoint], mode: str = "table",
                        bandwidth: int = 3, meta: dict | None = None) -> WeightFunction:
    """Look-up table of mean ``w_opt`` per ``k``, optionally locally averaged.

    ``table`` mode refuses gaps (k values without any point, except k=1);
    ``smoothed`` mode fills them from the neighbourhood.
    """
    points = list(points)
    means, counts = table_means(points)
    means[0] = 0.0
    if mode == "table":
        gaps = [k + 1 for k in np.flatnonzero(np.isnan(means))]
        if gaps:
            raise ValueError(f"no data points for k = {gaps}; use smoothed mode or more points")
        table = means
    elif mode == "smoothed":
        table = local_average(np.clip(means, 0.0, 1.0), check_positive_int(bandwidth, "bandwidth", allow_zero=True))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    table = np.clip(table, 0.0, 1.0)
    table[0] = 0.0
    info = {"mode": mode, "n_points": len(points)}
    if mode == "smoothed":
        info["bandwidth"] = bandwidth
    info.update(meta or {})
    return WeightFunction(tuple(float(x) for x in table), mode, info)


def save_weight_function(wf: WeightFunction, out: TextIO | None = None) -> str:
    buf = io.StringIO()
    meta = {"mode": wf.mode, **wf.meta}
    buf.write("# " + " ".join(f"{k}={str(v).replace(' ', '')}" for k, v in meta.items()) + "\n")
    buf.write("#k\tw_k\n")
    for k, w in enumerate(wf.table, start=1):
        buf.write(f"{k}\t{w!r}\n")
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text


def load_weight_function(source: TextIO | str) -> WeightFunction:
    if isinstance(source, str):
        source = io.StringIO(source)
    meta: dict[str, str] = {}
    rows = []
    for raw in source:
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    key, _, val = tok.partition("=")
                    meta[key] = val
            continue
        k, w = line.split("\t")
        rows.append((int(k), float(w)))
    rows.sort()
    if [k for k, _ in rows] != list(range(1, len(rows) + 1)):
        raise ValueError("weight file must list k = 1..k_max without gaps")
    mode = meta.pop("mode", "table")
    return WeightFunction(tuple(w for _, w in rows), mode, meta)


class WeightLearner(BaseEstimator):
    """Estimator wrapper: ``fit`` on training trips, ``predict`` weights for route lengths.

    Parameters
    ----------
    network : RoadNetwork
        Network the random walks run on.
    k_max : int
        Largest route length sampled.
    h : int
        Synthetic trips per data point.
    n_points : int
        Number of data points ``N``.
    grid_step : float
        Resolution of the weight grid search.
    mode : {"table", "smoothed"}
    bandwidth : int
        Half-width of the local-average smoother (smoothed mode).
    hours : tuple of int, optional
        Restrict historical samples to trips starting in these UTC hours.
    random_state : int, optional
    """

    def __init__(self, network=None, k_max=30, h=1000, n_points=10_000, grid_step=0.01,
                 mode="smoothed", bandwidth=3, hours=None, random_state=None):
        self.network = network
        self.k_max = k_max
        self.h = h
        self.n_points = n_points
        self.grid_step = grid_step
        self.mode = mode
        self.bandwidth = bandwidth
        self.hours = hours
        self.random_state = random_state

    def fit(self, X, y=None):
        if self.network is None:
            raise ValueError("WeightLearner needs a network")
        k_max = check_positive_int(self.k_max, "k_max")
        h = check_positive_int(self.h, "h")
        n_points = check_positive_int(self.n_points, "n_points")
        check_grid_step(self.grid_step)
        trips = as_trip_table(X, self.network)
        if len(trips) == 0:
            raise ValueError("no training trips")
        samples = HistoricalSamples.from_trips(trips, self.network, self.hours)
        rng = np.random.default_rng(self.random_state)
        self.datapoints_ = generate_datapoints(self.network, samples, n_points, k_max, h,
                                               self.grid_step, rng)
        meta = {"h": h, "n_points": n_points, "grid_step": self.grid_step, "k_max": k_max,
                "seed": self.random_state,
                "data_range": f"{int(trips.start_ts.min())}-{int(trips.end_ts.max())}"}
        self.table_, self.counts_ = table_means(self.datapoints_)
        self.weight_function_ = fit_weight_function(self.datapoints_, self.mode, self.bandwidth, meta)
        return self

    def predict(self, X):
        check_is_fitted(self, "weight_function_")
        return eval_weight(self.weight_function_, np.asarray(X, dtype=np.int64))
