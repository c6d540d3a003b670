"""Trip model, trip-file ingestion and assignment of trips to time windows."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence, TextIO

import numpy as np

from .network import RoadNetwork, Route

DURATION_TOLERANCE_S = 1.0


@dataclass(frozen=True, slots=True)
class Traversal:
    segment_id: str
    travel_time: float

    def __post_init__(self):
        if not self.travel_time > 0:
            raise ValueError(f"travel time must be positive, got {self.travel_time}")


@dataclass(frozen=True)
class Trip:
    trip_id: str
    start_ts: int
    traversals: tuple[Traversal, ...]
    end_ts: float | None = None

    def __post_init__(self):
        if not self.traversals:
            raise ValueError(f"trip {self.trip_id!r} has no traversals")
        total = self.duration
        if self.end_ts is None:
            object.__setattr__(self, "end_ts", self.start_ts + total)
        elif self.end_ts < self.start_ts:
            raise ValueError(f"trip {self.trip_id!r} ends before it starts")
        elif abs((self.end_ts - self.start_ts) - total) > DURATION_TOLERANCE_S:
            raise ValueError(
                f"trip {self.trip_id!r}: segment times sum to {total:.3f}s but "
                f"end_ts - start_ts is {self.end_ts - self.start_ts:.3f}s")

    @property
    def k(self) -> int:
        return len(self.traversals)

    @property
    def duration(self) -> float:
        return math.fsum(t.travel_time for t in self.traversals)

    @property
    def route(self) -> Route:
        return Route(tuple(t.segment_id for t in self.traversals))


@dataclass(frozen=True)
class TimeGrid:
    """Half-open windows ``[origin + j*delta, origin + (j+1)*delta)``."""

    delta: int  # minutes
    origin: int = 0  # epoch seconds

    def __post_init__(self):
        if int(self.delta) != self.delta or self.delta <= 0:
            raise ValueError(f"delta must be a positive integer number of minutes, got {self.delta}")

    @property
    def width_s(self) -> int:
        return int(self.delta) * 60

    def window_of(self, ts):
        """Window index containing timestamp(s) ``ts``; works on scalars and arrays."""
        if np.ndim(ts):
            return np.floor_divide(np.asarray(ts, dtype=np.float64) - self.origin,
                                   self.width_s).astype(np.int64)
        return int((ts - self.origin) // self.width_s)

    def bounds(self, j: int) -> tuple[int, int]:
        start = self.origin + j * self.width_s
        return start, start + self.width_s


def estimation_window(grid: TimeGrid, trip: Trip) -> int:
    """Window a finished trip contributes to: the one containing its end time."""
    return grid.window_of(trip.end_ts)


def prediction_window(grid: TimeGrid, trip: Trip | int, depth: int = 1) -> int | None:
    """Statistics window used to predict a trip starting at ``trip.start_ts``.

    Returns the window ``depth`` steps before the one containing the start,
    or None when that would precede the first grid window.
    """
    start = trip.start_ts if isinstance(trip, Trip) else trip
    j = grid.window_of(start) - depth
    return j if j >= 0 else None


# -- columnar storage ----------------------------------------------------------

@dataclass(eq=False)
class TripTable:
    """Column-oriented trips, with traversals flattened in CSR layout.

    ``seg`` holds network segment indices; traversals of trip ``i`` occupy
    ``offsets[i]:offsets[i+1]``.
    """

    trip_ids: np.ndarray
    start_ts: np.ndarray
    offsets: np.ndarray
    seg: np.ndarray
    times: np.ndarray
    end_ts: np.ndarray = field(default=None)

    def __post_init__(self):
        self.trip_ids = np.asarray(self.trip_ids, dtype=object)
        self.start_ts = np.asarray(self.start_ts, dtype=np.int64)
        self.offsets = np.asarray(self.offsets, dtype=np.int64)
        self.seg = np.asarray(self.seg, dtype=np.int64)
        self.times = np.asarray(self.times, dtype=np.float64)
        if self.end_ts is None:
            self.end_ts = self.start_ts + self.totals
        else:
            self.end_ts = np.asarray(self.end_ts, dtype=np.float64)

    def __len__(self):
        return self.start_ts.size

    @property
    def k(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def totals(self) -> np.ndarray:
        if self.times.size == 0:
            return np.zeros(len(self))
        sums = np.add.reduceat(self.times, self.offsets[:-1]) if len(self) else np.zeros(0)
        return sums

    @property
    def trip_of(self) -> np.ndarray:
        """Trip row for every traversal."""
        return np.repeat(np.arange(len(self)), self.k)

    def lengths_m(self, net: RoadNetwork) -> np.ndarray:
        return np.add.reduceat(net.lengths[self.seg], self.offsets[:-1])

    def route_segments(self, i: int) -> np.ndarray:
        return self.seg[self.offsets[i]:self.offsets[i + 1]]

    def select(self, rows) -> "TripTable":
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        k = self.k[rows]
        offsets = np.zeros(rows.size + 1, dtype=np.int64)
        np.cumsum(k, out=offsets[1:])
        take = np.repeat(self.offsets[rows] - offsets[:-1], k) + np.arange(offsets[-1])
        return TripTable(self.trip_ids[rows], self.start_ts[rows], offsets,
                         self.seg[take], self.times[take], self.end_ts[rows])

    def between(self, start: float | None, stop: float | None, on: str = "start") -> "TripTable":
        """Trips whose ``on`` timestamp falls in ``[start, stop)``."""
        ts = self.start_ts if on == "start" else self.end_ts
        mask = np.ones(len(self), dtype=bool)
        if start is not None:
            mask &= ts >= start
        if stop is not None:
            mask &= ts < stop
        return self.select(mask)

    def matching_route(self, route_idx: Sequence[int]) -> np.ndarray:
        """Boolean mask of trips following exactly the given segment sequence."""
        route_idx = np.asarray(route_idx, dtype=np.int64)
        k = route_idx.size
        cand = np.flatnonzero(self.k == k)
        if cand.size == 0:
            return np.zeros(len(self), dtype=bool)
        block = self.seg[self.offsets[cand][:, None] + np.arange(k)]
        mask = np.zeros(len(self), dtype=bool)
        mask[cand[(block == route_idx).all(axis=1)]] = True
        return mask

    @classmethod
    def from_trips(cls, trips: Iterable[Trip], net: RoadNetwork) -> "TripTable":
        ids, starts, ends, ks, segs, times = [], [], [], [], [], []
        index = net.index
        for trip in trips:
            ids.append(trip.trip_id)
            starts.append(trip.start_ts)
            ends.append(trip.end_ts)
            ks.append(len(trip.traversals))
            for tr in trip.traversals:
                segs.append(index[tr.segment_id])
                times.append(tr.travel_time)
        offsets = np.zeros(len(ks) + 1, dtype=np.int64)
        np.cumsum(ks, out=offsets[1:])
        return cls(np.array(ids, dtype=object), np.array(starts, dtype=np.int64), offsets,
                   np.array(segs, dtype=np.int64), np.array(times, dtype=np.float64),
                   np.array(ends, dtype=np.float64))

    @classmethod
    def concat(cls, tables: Sequence["TripTable"]) -> "TripTable":
        offsets = [np.zeros(1, dtype=np.int64)]
        base = 0
        for t in tables:
            offsets.append(t.offsets[1:] + base)
            base += t.offsets[-1]
        return cls(np.concatenate([t.trip_ids for t in tables]),
                   np.concatenate([t.start_ts for t in tables]),
                   np.concatenate(offsets),
                   np.concatenate([t.seg for t in tables]),
                   np.concatenate([t.times for t in tables]),
                   np.concatenate([t.end_ts for t in tables]))

    def sort_by_start(self) -> "TripTable":
        order = np.lexsort((self.trip_ids.astype(str), self.start_ts))
        return self.select(order)

    def to_trips(self, net: RoadNetwork) -> Iterator[Trip]:
        ids = net.ids
        for i in range(len(self)):
            lo, hi = self.offsets[i], self.offsets[i + 1]
            yield Trip(str(self.trip_ids[i]), int(self.start_ts[i]),
                       tuple(Traversal(ids[s], float(t))
                             for s, t in zip(self.seg[lo:hi], self.times[lo:hi])))


# -- trip file -----------------------------------------------------------------

@dataclass(frozen=True)
class Rejection:
    line: int
    trip_id: str | None
    reason: str
    detail: str = ""


def _reject(rejects, line, trip_id, reason, detail=""):
    if rejects is not None:
        rejects.append(Rejection(line, trip_id, reason, detail))


def parse_trips(source: TextIO | str, net: RoadNetwork,
                rejects: list[Rejection] | None = None) -> Iterator[Trip]:
    """Yield valid trips from a JSON-lines trip file in file order.

    Invalid records are skipped; pass a list as ``rejects`` to collect a
    :class:`Rejection` for each (reasons: ``json``, ``schema``,
    ``unknown_segment``, ``connectivity``, ``non_positive_time``).
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    segments = net.segments
    for lineno, raw in enumerate(source, start=1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            _reject(rejects, lineno, None, "json", str(exc))
            continue
        trip_id = rec.get("trip_id") if isinstance(rec, dict) else None
        try:
            start = rec["start_ts"]
            segs = rec["segments"]
            if not isinstance(start, int) or isinstance(start, bool) or not isinstance(segs, list) or not segs:
                raise TypeError
            pairs = [(s["id"], float(s["t"])) for s in segs]
        except (KeyError, TypeError, ValueError):
            _reject(rejects, lineno, trip_id, "schema", "need trip_id, integer start_ts, non-empty segments")
            continue
        if trip_id is None:
            _reject(rejects, lineno, None, "schema", "missing trip_id")
            continue
        trip_id = str(trip_id)
        unknown = [sid for sid, _ in pairs if sid not in segments]
        if unknown:
            _reject(rejects, lineno, trip_id, "unknown_segment", unknown[0])
            continue
        broken = next(((a, b) for (a, _), (b, _) in zip(pairs, pairs[1:])
                       if b not in segments[a].successors), None)
        if broken:
            _reject(rejects, lineno, trip_id, "connectivity", f"{broken[0]} -> {broken[1]}")
            continue
        if any(not (t > 0) or not math.isfinite(t) for _, t in pairs):
            _reject(rejects, lineno, trip_id, "non_positive_time")
            continue
        yield Trip(trip_id, start, tuple(Traversal(sid, t) for sid, t in pairs))


def format_trip(trip: Trip) -> str:
    return json.dumps({"trip_id": trip.trip_id, "start_ts": int(trip.start_ts),
                       "segments": [{"id": t.segment_id, "t": t.travel_time} for t in trip.traversals]},
                      separators=(",", ":"))


def write_trips(trips: Iterable[Trip], out: TextIO) -> int:
    n = 0
    for trip in trips:
        out.write(format_trip(trip))
        out.write("\n")
        n += 1
    return n


def write_trip_table(table: TripTable, net: RoadNetwork, out: TextIO, decimals: int = 3) -> int:
    """Fast writer for a TripTable; times are rounded to ``decimals`` places."""
    ids = net.ids
    times = np.round(table.times, decimals)
    for i in range(len(table)):
        lo, hi = table.offsets[i], table.offsets[i + 1]
        segs = ",".join(f'{{"id":"{ids[s]}","t":{t!r}}}' for s, t in
                        zip(table.seg[lo:hi].tolist(), times[lo:hi].tolist()))
        out.write(f'{{"trip_id":{json.dumps(str(table.trip_ids[i]))},'
                  f'"start_ts":{int(table.start_ts[i])},"segments":[{segs}]}}\n')
    return len(table)


def write_rejects(rejects: Sequence[Rejection], out: TextIO) -> None:
    out.write("#line\ttrip_id\treason\tdetail\n")
    for r in rejects:
        out.write(f"{r.line}\t{r.trip_id or ''}\t{r.reason}\t{r.detail}\n")


def read_trip_table(path, net: RoadNetwork, rejects_path=None) -> tuple[TripTable, list[Rejection]]:
    """Parse a trip file into a TripTable and write the ``.rejects`` sibling if needed."""
    rejects: list[Rejection] = []
    with open(path, encoding="utf-8") as fh:
        table = TripTable.from_trips(parse_trips(fh, net, rejects), net)
    if rejects:
        target = rejects_path or f"{path}.rejects"
        with open(target, "w", encoding="utf-8") as fh:
            write_rejects(rejects, fh)
    return table, rejects
