"""Error metrics and the train/test evaluation protocol."""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Sequence

import numpy as np

from ._validation import check_lengths_match, check_method
from .network import RoadNetwork, Route
from .predict import additive_predictions, combine
from .stats import DEFAULT_LOOKBACK, _build, accumulate
from .trips import TimeGrid, TripTable
from .weights import WeightFunction, WeightLearner, eval_weight, weight_grid

log = logging.getLogger(__name__)

METHODS = ("SMN", "SMD", "MED", "COM")


@dataclass(frozen=True)
class MetricReport:
    method: str
    mae: float
    mae_star: float  # sum of |err| / L_km over trips
    mae_star_identity: float  # m * MAE / sum(L_km)
    relative_mae: float
    mse: float
    rmse: float
    m: int
    group: tuple = ()


def compute_metrics(predicted, actual, length_m, baseline=None, method: str = "",
                    group: tuple = ()) -> MetricReport:
    """MAE, both MAE* variants, MSE/RMSE and MAE relative to ``baseline`` predictions.

    Without ``baseline`` the method is its own baseline (relative MAE 1, or
    NaN when the MAE is zero).
    """
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    length_km = np.asarray(length_m, dtype=float) / 1000.0
    check_lengths_match(predicted, actual, length_km)
    if predicted.size == 0:
        raise ValueError("no predictions to evaluate")
    if (length_km <= 0).any():
        raise ValueError("trip lengths must be positive")
    err = np.abs(predicted - actual)
    m = err.size
    mae = math.fsum(err) / m
    if baseline is None:
        base_mae = mae
    else:
        baseline = np.asarray(baseline, dtype=float)
        check_lengths_match(predicted, baseline)
        base_mae = math.fsum(np.abs(baseline - actual)) / m
    if base_mae > 0:
        rel = mae / base_mae
    else:
        rel = 1.0 if mae == 0 and baseline is None else (0.0 if mae == 0 else math.inf)
    mse = math.fsum(err * err) / m
    return MetricReport(method, mae, math.fsum(err / length_km), m * mae / math.fsum(length_km),
                        rel, mse, math.sqrt(mse), m, tuple(group))


def best_constant(actual, candidates) -> float:
    """Candidate constant prediction with the lowest MAE (first one on ties)."""
    actual = np.sort(np.asarray(actual, dtype=float))
    candidates = np.asarray(candidates, dtype=float)
    # sum |c - x| via prefix sums over the sorted sample
    csum = np.r_[0.0, np.cumsum(actual)]
    pos = np.searchsorted(actual, candidates)
    n = actual.size
    total = candidates * pos - csum[pos] + (csum[n] - csum[pos]) - candidates * (n - pos)
    return float(candidates[np.argmin(total)])


def fit_route_weights(smd: np.ndarray, smn: np.ndarray, actual: np.ndarray, k: np.ndarray,
                      k_max: int, grid_step: float = 0.01) -> WeightFunction:
    """Per-k weight minimising the MAE of the combination on observed trips.

    This is the fixed-route variant: each ``k`` gets the grid value with the
    smallest mean absolute error over the trips of that length (ties to the
    smaller weight). ``w_1`` stays 0 and missing ``k`` reuse the previous one.
    """
    grid = weight_grid(grid_step)
    table = np.zeros(k_max)
    for kk in range(2, k_max + 1):
        sel = k == kk
        if not sel.any():
            table[kk - 1] = table[kk - 2]
            continue
        est = combine(smd[sel][:, None], smn[sel][:, None], grid[None, :])
        mae = np.abs(est - actual[sel][:, None]).mean(axis=0)
        table[kk - 1] = grid[np.argmin(mae)]
    return WeightFunction(tuple(float(x) for x in table), "route",
                          {"fit": "route-mae", "grid_step": grid_step})


# -- protocol --------------------------------------------------------------------

def utc_ts(text: str) -> int:
    """Parse an ISO-8601 date/datetime (UTC when no offset is given) to epoch seconds."""
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def month_key(ts) -> np.ndarray:
    """``YYYYMM`` integer per epoch timestamp (UTC)."""
    ts = np.asarray(ts, dtype="datetime64[s]")
    months = ts.astype("datetime64[M]").astype(np.int64)
    return (1970 + months // 12) * 100 + months % 12 + 1


@dataclass
class ProtocolConfig:
    train_range: tuple[int, int]
    test_range: tuple[int, int]
    deltas: Sequence[int] = (10, 20, 30, 40, 50, 60)
    methods: Sequence[str] = ("SMN", "SMD", "COM")
    weights: WeightFunction | None = None
    fixed_route: str | None = None
    fixed_route_deltas: Sequence[int] | None = None
    route_weights: str = "route"  # "route": per-route MAE fit, "network": shared weights
    lookback: int = DEFAULT_LOOKBACK
    depth: int = 1
    k_max: int = 30
    h: int = 1000
    n_points: int = 10_000
    grid_step: float = 0.01
    mode: str = "smoothed"
    bandwidth: int = 3
    seed: int = 0


@dataclass
class ProtocolResult:
    month_reports: dict = field(default_factory=dict)  # (delta, month) -> {method: MetricReport}
    k_reports: dict = field(default_factory=dict)  # (delta, k) -> {method: MetricReport}
    weights: WeightFunction | None = None
    route_weights: dict = field(default_factory=dict)  # delta -> WeightFunction
    notes: list = field(default_factory=list)
    audit: dict = field(default_factory=dict)


def _method_reports(preds: dict, actual, lengths, methods, group) -> dict:
    base = preds["SMN"]
    return {m: compute_metrics(preds[m], actual, lengths, base, m, group) for m in methods}


def run_protocol(trips: TripTable, net: RoadNetwork, config: ProtocolConfig) -> ProtocolResult:
    """Train on one date range, evaluate on another.

    Weights are learned from training trips only. Window statistics come
    from every trip inside the two ranges, but each test trip only sees
    windows that closed before it started; the historical fallback uses
    training trips only. Reports are grouped by (delta, month) and, for a
    fixed route, by (delta, prefix length k).
    """
    methods = [check_method(m) for m in config.methods]
    if "SMN" not in methods:
        methods.insert(0, "SMN")
    (tr0, tr1), (te0, te1) = config.train_range, config.test_range
    if not (tr0 < tr1 and te0 < te1):
        raise ValueError("empty date range")
    if tr0 < te1 and te0 < tr1:
        raise ValueError("training and test ranges overlap")
    in_range = ((trips.start_ts >= tr0) & (trips.start_ts < tr1)) | \
               ((trips.start_ts >= te0) & (trips.start_ts < te1))
    used = trips.select(in_range)
    train = used.between(tr0, tr1)
    test = used.between(te0, te1)
    # the historical fallback may only see trips that finished inside the training range
    history = train.select(train.end_ts < tr1)
    result = ProtocolResult()
    result.audit = {"read": len(used), "skipped_out_of_range": int((~in_range).sum()),
                    "train": len(train), "test": len(test),
                    "train_range": (tr0, tr1), "test_range": (te0, te1)}
    log.info("trips in range: %d train [%d, %d), %d test [%d, %d); %d outside ranges ignored",
             len(train), tr0, tr1, len(test), te0, te1, result.audit["skipped_out_of_range"])
    if len(train) == 0:
        raise ValueError("no trips in the training range")

    wf = config.weights
    if wf is None and "COM" in methods and (config.deltas or config.route_weights == "network"):
        learner = WeightLearner(net, config.k_max, config.h, config.n_points, config.grid_step,
                                config.mode, config.bandwidth, random_state=config.seed)
        wf = learner.fit(train).weight_function_
    result.weights = wf

    month_of = month_key(test.start_ts)
    lengths = test.lengths_m(net)
    actual = test.totals
    for delta in config.deltas:
        grid = TimeGrid(int(delta), tr0)
        store = accumulate(used, grid, net, history=history, lookback=config.lookback)
        pred = additive_predictions(store, test, config.depth)
        _check_no_leakage(pred, grid, test, store.history_end)
        by_method = {"SMN": pred.smn, "SMD": pred.smd}
        if "COM" in methods:
            by_method["COM"] = pred.com(wf)
        cols = [m for m in methods if m != "MED"]
        for month in np.unique(month_of):
            sel = month_of == month
            if not sel.any():
                continue
            result.month_reports[(int(delta), int(month))] = _method_reports(
                {m: v[sel] for m, v in by_method.items()}, actual[sel], lengths[sel], cols,
                (int(delta), int(month)))
        if len(test) == 0:
            result.notes.append(f"delta={delta}: no test trips")

    if config.fixed_route is not None:
        _fixed_route_study(used, train, history, test, net, config, methods, wf, result)
    return result


def _check_no_leakage(pred, grid: TimeGrid, test: TripTable, history_end: float) -> None:
    start_win = grid.window_of(test.start_ts) if len(test) else np.zeros(0, np.int64)
    if (pred.latest_source >= start_win).any():
        raise AssertionError("prediction consulted a window at or after the trip start")
    hist = pred.flag_counts[:, 2] > 0
    if hist.any() and (history_end > test.start_ts[hist]).any():
        raise AssertionError("historical fallback includes trips ending after a test trip start")


def _fixed_route_study(used, train, history, test, net, config, methods, wf, result):
    name = config.fixed_route
    if name not in net.marked_routes:
        raise KeyError(f"network has no marked route {name!r}")
    route: Route = net.marked_routes[name]
    ridx = net.route_indices(route)
    K = route.k
    on_route = used.select(used.matching_route(ridx))
    r_train = train.select(train.matching_route(ridx))
    r_test = test.select(test.matching_route(ridx))
    r_hist = history.select(history.matching_route(ridx))
    if len(r_test) == 0:
        result.notes.append(f"fixed route {name!r}: no test trips")
        return
    # prefix sums of each route trip: column k-1 is the time over segments 1..k
    def prefix_sums(tab):
        return np.cumsum(tab.times.reshape(len(tab), K), axis=1)

    all_pref, train_pref, test_pref = prefix_sums(on_route), prefix_sums(r_train), prefix_sums(r_test)
    hist_pref = prefix_sums(r_hist)
    lengths = np.cumsum(net.lengths[ridx])
    tr0 = config.train_range[0]
    deltas = config.fixed_route_deltas or config.deltas
    for delta in deltas:
        grid = TimeGrid(int(delta), tr0)
        store = accumulate(used, grid, net, history=history, lookback=config.lookback)
        smd_te = np.empty((len(r_test), K))
        smn_te = np.empty((len(r_test), K))
        smd_tr = np.empty((len(r_train), K))
        smn_tr = np.empty((len(r_train), K))
        for k in range(1, K + 1):
            p = additive_predictions(store, r_test, config.depth, prefix=k)
            _check_no_leakage(p, grid, r_test, store.history_end)
            smd_te[:, k - 1], smn_te[:, k - 1] = p.smd, p.smn
            if len(r_train):
                q = additive_predictions(store, r_train, config.depth, prefix=k)
                smd_tr[:, k - 1], smn_tr[:, k - 1] = q.smd, q.smn
        if config.route_weights == "route":
            if len(r_train) == 0:
                raise ValueError(f"no training trips on route {name!r} to fit route weights")
            kk = np.repeat(np.arange(1, K + 1)[None, :], len(r_train), axis=0).ravel()
            rwf = fit_route_weights(smd_tr.ravel(), smn_tr.ravel(), train_pref.ravel(), kk, K,
                                    config.grid_step)
            result.route_weights[int(delta)] = rwf
        else:
            rwf = wf
        end_win = grid.window_of(on_route.end_ts)
        target = grid.window_of(r_test.start_ts) - config.depth
        target = np.where(target >= 0, target, -1)
        for k in range(1, K + 1):
            preds = {"SMN": smn_te[:, k - 1], "SMD": smd_te[:, k - 1]}
            if "COM" in methods:
                preds["COM"] = combine(preds["SMD"], preds["SMN"], eval_weight(rwf, k))
            cols = [m for m in methods if m != "MED"]
            if "MED" in methods:
                med_store = _build(["route"], grid, np.zeros(len(on_route), np.int64), end_win,
                                   all_pref[:, k - 1], np.zeros(len(r_hist), np.int64),
                                   hist_pref[:, k - 1], float(r_hist.end_ts.max()) if len(r_hist) else -np.inf,
                                   config.lookback, False)
                _, med, _, src = med_store.lookup(np.zeros(len(r_test), np.int64), target)
                if np.isnan(med).any():
                    result.notes.append(f"delta={delta} k={k}: MED infeasible for some trips")
                else:
                    if (src >= target + config.depth).any():
                        raise AssertionError("MED consulted a window at or after the trip start")
                    preds["MED"] = med
                    cols = [m for m in methods]
            result.k_reports[(int(delta), k)] = _method_reports(
                preds, test_pref[:, k - 1], np.full(len(r_test), lengths[k - 1]), cols, (int(delta), k))


# -- report files ----------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.6f}"


def month_table(result: ProtocolResult, delta: int, columns=("SMN", "SMD", "COM")) -> str:
    lines = ["mn\t" + "\t".join(columns)]
    months = sorted(m for d, m in result.month_reports if d == delta)
    multi_year = len({m // 100 for m in months}) > 1
    for month in months:
        rep = result.month_reports[(delta, month)]
        label = month if multi_year else month % 100
        lines.append(f"{label}\t" + "\t".join(_fmt(rep[c].relative_mae) if c in rep else "nan"
                                              for c in columns))
    return "\n".join(lines) + "\n"


def k_table(result: ProtocolResult, delta: int, columns=("SMN", "SMD", "MED", "COM")) -> str:
    lines = ["kk\t" + "\t".join(columns)]
    for k in sorted(k for d, k in result.k_reports if d == delta):
        rep = result.k_reports[(delta, k)]
        lines.append(f"{k}\t" + "\t".join(_fmt(rep[c].relative_mae) if c in rep else "nan"
                                          for c in columns))
    return "\n".join(lines) + "\n"


def full_report(result: ProtocolResult) -> str:
    lines = ["kind\tdelta\tgroup\tmethod\tm\tmae\tmae_star\tmae_star_identity\trelative_mae\tmse\trmse"]
    for kind, reports in (("month", result.month_reports), ("k", result.k_reports)):
        for (delta, g), reps in sorted(reports.items()):
            for r in reps.values():
                lines.append(f"{kind}\t{delta}\t{g}\t{r.method}\t{r.m}\t{r.mae:.6f}\t{r.mae_star:.6f}\t"
                             f"{r.mae_star_identity:.6f}\t{r.relative_mae:.6f}\t{r.mse:.6f}\t{r.rmse:.6f}")
    return "\n".join(lines) + "\n"


def write_reports(result: ProtocolResult, out_dir: str, methods=("SMN", "SMD", "COM")) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    month_cols = [m for m in ("SMN", "SMD", "COM") if m in methods or m == "SMN"]
    for delta in sorted({d for d, _ in result.month_reports}):
        path = os.path.join(out_dir, f"months_delta{delta}.dat")
        with open(path, "w") as fh:
            fh.write(month_table(result, delta, month_cols))
        written.append(path)
    k_cols = [m for m in ("SMN", "SMD", "MED", "COM") if m in methods or m == "SMN"]
    for delta in sorted({d for d, _ in result.k_reports}):
        path = os.path.join(out_dir, f"route_k_delta{delta}.dat")
        with open(path, "w") as fh:
            fh.write(k_table(result, delta, k_cols))
        written.append(path)
    path = os.path.join(out_dir, "report.tsv")
    with open(path, "w") as fh:
        fh.write(full_report(result))
    written.append(path)
    for delta, rwf in result.route_weights.items():
        from .weights import save_weight_function
        p = os.path.join(out_dir, f"route_weights_delta{delta}.tsv")
        with open(p, "w") as fh:
            save_weight_function(rwf, fh)
        written.append(p)
    if result.notes:
        p = os.path.join(out_dir, "notes.txt")
        with open(p, "w") as fh:
            fh.write("\n".join(result.notes) + "\n")
        written.append(p)
    return written
