"""Per-segment, per-window sample summaries with a fallback policy for empty windows."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import NamedTuple, TextIO

import numpy as np

from .network import RoadNetwork
from .trips import TimeGrid, TripTable

FRESH, STALE, HISTORICAL = 0, 1, 2
FLAG_NAMES = ("fresh", "stale", "historical")
DEFAULT_LOOKBACK = 6
NO_WINDOW = np.iinfo(np.int64).min

_WIN_OFFSET = 1 << 31


class NoDataError(LookupError):
    pass


class Estimate(NamedTuple):
    mean: float
    median: float
    flag: str
    window: int | None  # source window, None for the historical aggregate


def _composite(seg, win):
    return (np.asarray(seg, dtype=np.int64) << 32) | (np.asarray(win, dtype=np.int64) + _WIN_OFFSET)


def group_summaries(keys: np.ndarray, values: np.ndarray):
    """Exact count/mean/median of ``values`` grouped by integer ``keys``.

    Returns ``(unique_keys, count, mean, median, sorted_values, starts)``.
    Values are sorted within each group, which makes the output independent
    of input order.
    """
    order = np.lexsort((values, keys))
    k = keys[order]
    v = values[order]
    if k.size == 0:
        empty = np.zeros(0)
        return k, np.zeros(0, dtype=np.int64), empty, empty, v, np.zeros(0, dtype=np.int64)
    starts = np.flatnonzero(np.r_[True, k[1:] != k[:-1]])
    count = np.diff(np.r_[starts, k.size])
    mean = np.add.reduceat(v, starts) / count
    lo = starts + (count - 1) // 2
    hi = starts + count // 2
    median = (v[lo] + v[hi]) / 2.0
    return k[starts], count, mean, median, v, starts


@dataclass(eq=False)
class SegmentStatsStore:
    """Window statistics keyed by (segment index, window index).

    Rows are sorted by segment then window. ``hist_*`` arrays hold the
    all-history aggregate per segment (NaN / 0 where never observed).
    """

    segment_ids: list[str]
    grid: TimeGrid
    seg: np.ndarray
    window: np.ndarray
    count: np.ndarray
    mean: np.ndarray
    median: np.ndarray
    hist_count: np.ndarray
    hist_mean: np.ndarray
    hist_median: np.ndarray
    lookback: int = DEFAULT_LOOKBACK
    history_end: float = -np.inf
    samples: np.ndarray | None = None
    sample_starts: np.ndarray | None = None

    def __post_init__(self):
        self._keys = _composite(self.seg, self.window)
        self._index = {sid: i for i, sid in enumerate(self.segment_ids)}

    def __len__(self):
        return self.seg.size

    @property
    def total_count(self) -> int:
        return int(self.count.sum())

    def segment_index(self, segment_id: str) -> int:
        try:
            return self._index[segment_id]
        except KeyError:
            raise NoDataError(f"unknown segment {segment_id!r}") from None

    def window_samples(self, segment_id: str, window: int) -> np.ndarray:
        if self.samples is None:
            raise ValueError("store was built without retained samples")
        key = _composite(self.segment_index(segment_id), window)
        pos = np.searchsorted(self._keys, key)
        if pos == self._keys.size or self._keys[pos] != key:
            return np.zeros(0)
        start = self.sample_starts[pos]
        return self.samples[start:start + self.count[pos]]

    def lookup(self, seg: np.ndarray, target: np.ndarray):
        """Vectorised fallback ladder.

        ``target`` is the requested window per query; negative values mean
        "no prior window" and go straight to the historical aggregate.
        Returns ``(mean, median, flag, source_window)``; queries that cannot
        be answered at all have NaN estimates.
        """
        seg = np.asarray(seg, dtype=np.int64)
        target = np.asarray(target, dtype=np.int64)
        n = seg.size
        mean = np.full(n, np.nan)
        median = np.full(n, np.nan)
        flag = np.full(n, HISTORICAL, dtype=np.int8)
        source = np.full(n, NO_WINDOW, dtype=np.int64)
        has_prior = target >= 0
        if self._keys.size and has_prior.any():
            q = np.flatnonzero(has_prior)
            pos = np.searchsorted(self._keys, _composite(seg[q], target[q]), side="right") - 1
            ok = pos >= 0
            posc = np.where(ok, pos, 0)
            ok &= (self.seg[posc] == seg[q]) & (self.window[posc] >= target[q] - self.lookback)
            hit = q[ok]
            p = posc[ok]
            mean[hit] = self.mean[p]
            median[hit] = self.median[p]
            source[hit] = self.window[p]
            flag[hit] = np.where(self.window[p] == target[hit], FRESH, STALE)
        miss = flag == HISTORICAL
        mean[miss] = self.hist_mean[seg[miss]]
        median[miss] = self.hist_median[seg[miss]]
        return mean, median, flag, source

    def estimate(self, segment_id: str, window: int | None) -> Estimate:
        """Mean and median for one segment at the requested window.

        Falls back to the latest populated window within ``lookback`` steps
        (flag ``stale``), then to the all-history aggregate (``historical``).
        """
        idx = self.segment_index(segment_id)
        target = -1 if window is None else window
        mean, median, flag, source = self.lookup(np.array([idx]), np.array([target]))
        if np.isnan(mean[0]):
            raise NoDataError(f"no observations for segment {segment_id!r}")
        src = None if source[0] == NO_WINDOW else int(source[0])
        return Estimate(float(mean[0]), float(median[0]), FLAG_NAMES[flag[0]], src)

    def merge(self, other: "SegmentStatsStore") -> "SegmentStatsStore":
        """Combine two partial stores built on the same grid; both need retained samples."""
        if self.samples is None or other.samples is None:
            raise ValueError("merge needs stores built with keep_samples=True")
        if self.grid != other.grid or self.segment_ids != other.segment_ids:
            raise ValueError("stores use different grids or segment sets")
        seg = np.concatenate([np.repeat(s.seg, s.count) for s in (self, other)])
        win = np.concatenate([np.repeat(s.window, s.count) for s in (self, other)])
        vals = np.concatenate([self.samples, other.samples])
        hist_seg = np.concatenate([self._hist_seg, other._hist_seg])
        hist_vals = np.concatenate([self._hist_vals, other._hist_vals])
        return _build(self.segment_ids, self.grid, seg, win, vals, hist_seg, hist_vals,
                      max(self.history_end, other.history_end), self.lookback, True)

    # -- audit export ----------------------------------------------------------

    def export(self, out: TextIO | None = None) -> str:
        buf = io.StringIO()
        buf.write(f"# delta={self.grid.delta} origin={self.grid.origin} lookback={self.lookback}"
                  f" history_end={float(self.history_end)!r}\n")
        buf.write("#segment_id\twindow\tcount\tmean\tmedian\n")
        ids = self.segment_ids
        for s, w, c, mu, md in zip(self.seg.tolist(), self.window.tolist(), self.count.tolist(),
                                   self.mean.tolist(), self.median.tolist()):
            buf.write(f"{ids[s]}\t{w}\t{c}\t{mu!r}\t{md!r}\n")
        hc, hm, hd = self.hist_count.tolist(), self.hist_mean.tolist(), self.hist_median.tolist()
        for s in np.flatnonzero(self.hist_count > 0).tolist():
            buf.write(f"{ids[s]}\thist\t{hc[s]}\t{hm[s]!r}\t{hd[s]!r}\n")
        text = buf.getvalue()
        if out is not None:
            out.write(text)
        return text


def accumulate(trips: TripTable, grid: TimeGrid, net: RoadNetwork,
               history: TripTable | None = None, lookback: int = DEFAULT_LOOKBACK,
               keep_samples: bool = False) -> SegmentStatsStore:
    """Build a store from finished trips.

    Every traversal of a trip lands in the window containing the trip's end
    time. The historical aggregate is computed from ``history`` (defaults to
    ``trips``); pass only training trips there to keep it leakage-free.
    """
    if history is None:
        history = trips
    win = np.repeat(grid.window_of(trips.end_ts), trips.k)
    history_end = float(history.end_ts.max()) if len(history) else -np.inf
    return _build(list(net.ids), grid, trips.seg, win, trips.times, history.seg, history.times,
                  history_end, lookback, keep_samples)


def _build(segment_ids, grid, seg, win, vals, hist_seg, hist_vals, history_end, lookback,
           keep_samples) -> SegmentStatsStore:
    keys, count, mean, median, sorted_vals, starts = group_summaries(_composite(seg, win), vals)
    n = len(segment_ids)
    hkeys, hcount, hmean, hmedian, _, _ = group_summaries(np.asarray(hist_seg, dtype=np.int64),
                                                          np.asarray(hist_vals, dtype=np.float64))
    hist_count = np.zeros(n, dtype=np.int64)
    hist_mean = np.full(n, np.nan)
    hist_median = np.full(n, np.nan)
    hist_count[hkeys] = hcount
    hist_mean[hkeys] = hmean
    hist_median[hkeys] = hmedian
    store = SegmentStatsStore(
        segment_ids, grid, keys >> 32, (keys & 0xFFFFFFFF) - _WIN_OFFSET, count, mean, median,
        hist_count, hist_mean, hist_median, lookback, history_end,
        sorted_vals if keep_samples else None, starts if keep_samples else None)
    if keep_samples:
        store._hist_seg = np.asarray(hist_seg, dtype=np.int64)
        store._hist_vals = np.asarray(hist_vals, dtype=np.float64)
    return store


def load_store(source: TextIO | str, segment_ids: list[str] | None = None) -> SegmentStatsStore:
    """Read a store back from its tab-separated export (without retained samples)."""
    if isinstance(source, str):
        source = io.StringIO(source)
    meta: dict[str, str] = {}
    rows, hist = [], []
    for raw in source:
        line = raw.rstrip("\n")
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    key, _, val = tok.partition("=")
                    meta[key] = val
            continue
        sid, w, c, mu, md = line.split("\t")
        (hist if w == "hist" else rows).append((sid, w, int(c), float(mu), float(md)))
    if "delta" not in meta:
        raise ValueError("store file lacks the '# delta=... origin=...' header")
    if segment_ids is None:
        segment_ids = list(dict.fromkeys([r[0] for r in rows] + [r[0] for r in hist]))
    index = {s: i for i, s in enumerate(segment_ids)}
    n = len(segment_ids)
    rows.sort(key=lambda r: (index[r[0]], int(r[1])))
    hist_count = np.zeros(n, dtype=np.int64)
    hist_mean = np.full(n, np.nan)
    hist_median = np.full(n, np.nan)
    for sid, _, c, mu, md in hist:
        i = index[sid]
        hist_count[i], hist_mean[i], hist_median[i] = c, mu, md
    grid = TimeGrid(int(meta["delta"]), int(meta.get("origin", 0)))
    return SegmentStatsStore(
        segment_ids, grid,
        np.array([index[r[0]] for r in rows], dtype=np.int64),
        np.array([int(r[1]) for r in rows], dtype=np.int64),
        np.array([r[2] for r in rows], dtype=np.int64),
        np.array([r[3] for r in rows], dtype=np.float64),
        np.array([r[4] for r in rows], dtype=np.float64),
        hist_count, hist_mean, hist_median,
        int(meta.get("lookback", DEFAULT_LOOKBACK)),
        float(meta.get("history_end", "-inf")))
