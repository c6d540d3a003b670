"""Segmented road network and route construction."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

MAX_WALK_ATTEMPTS = 1000


class NetworkFormatError(ValueError):
    """Raised for a malformed network file; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class RouteError(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    id: str
    length: float
    successors: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"segment {self.id!r}: length must be positive, got {self.length}")


@dataclass(frozen=True)
class Route:
    segments: tuple[str, ...]

    def __post_init__(self):
        if len(self.segments) < 1:
            raise RouteError("a route needs at least one segment")

    @property
    def k(self) -> int:
        return len(self.segments)

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    def prefix(self, k: int) -> "Route":
        return Route(self.segments[:k])


@dataclass(frozen=True, eq=False)
class RoadNetwork:
    """Immutable directed graph of one-way segments.

    Besides the id-keyed ``segments`` mapping, the network keeps an integer
    index per segment, a length array and a CSR successor table so that
    vectorised code (random walks, statistics) can work on plain arrays.
    """

    segments: dict[str, Segment]
    marked_routes: dict[str, Route] = field(default_factory=dict)

    def __post_init__(self):
        ids = list(self.segments)
        index = {sid: i for i, sid in enumerate(ids)}
        for seg in self.segments.values():
            for succ in seg.successors:
                if succ not in index:
                    raise NetworkFormatError(f"segment {seg.id!r} references unknown successor {succ!r}")
        indptr = np.zeros(len(ids) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(self.segments[s].successors) for s in ids])
        succ_idx = np.array(
            [index[t] for s in ids for t in self.segments[s].successors], dtype=np.int64
        )
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "lengths", np.array([self.segments[s].length for s in ids]))
        object.__setattr__(self, "succ_indptr", indptr)
        object.__setattr__(self, "succ_indices", succ_idx)
        for name, route in self.marked_routes.items():
            self.check_route(route)

    @classmethod
    def from_segments(cls, segments: Iterable[Segment], marked_routes=None) -> "RoadNetwork":
        table: dict[str, Segment] = {}
        for seg in segments:
            if seg.id in table:
                raise NetworkFormatError(f"duplicate segment id {seg.id!r}")
            table[seg.id] = seg
        return cls(table, dict(marked_routes or {}))

    def __len__(self):
        return len(self.segments)

    def __contains__(self, sid):
        return sid in self.segments

    def __eq__(self, other):
        if not isinstance(other, RoadNetwork):
            return NotImplemented
        return (list(self.segments.items()) == list(other.segments.items())
                and self.marked_routes == other.marked_routes)

    @property
    def total_length(self) -> float:
        return float(self.lengths.sum())

    def successors(self, sid: str) -> tuple[str, ...]:
        return self.segments[sid].successors

    def out_degree(self) -> np.ndarray:
        return np.diff(self.succ_indptr)

    def check_route(self, route: Route | Sequence[str]) -> Route:
        """Return ``route`` as a Route, raising RouteError on unknown ids or broken links."""
        if not isinstance(route, Route):
            route = Route(tuple(route))
        for sid in route.segments:
            if sid not in self.segments:
                raise RouteError(f"unknown segment {sid!r}")
        for a, b in zip(route.segments, route.segments[1:]):
            if b not in self.segments[a].successors:
                raise RouteError(f"segments {a!r} -> {b!r} are not connected")
        return route

    def route_indices(self, route: Route | Sequence[str]) -> np.ndarray:
        segs = route.segments if isinstance(route, Route) else route
        try:
            return np.array([self.index[s] for s in segs], dtype=np.int64)
        except KeyError as exc:
            raise RouteError(f"unknown segment {exc.args[0]!r}") from None


def route_length_m(net: RoadNetwork, route: Route | Sequence[str]) -> float:
    return float(net.lengths[net.route_indices(route)].sum())


# -- file format -------------------------------------------------------------

def load_network(source: TextIO | str) -> RoadNetwork:
    """Read the tab-separated network format.

    One segment per line: ``segment_id<TAB>length_m<TAB>succ1,succ2,...``.
    Lines starting with ``#`` are comments; ``#route<TAB>name<TAB>s1,s2,...``
    comment lines declare marked routes (e.g. the main road).
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    segments: dict[str, Segment] = {}
    lines: dict[str, int] = {}
    marked: dict[str, tuple[str, ...]] = {}
    for lineno, raw in enumerate(source, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        if line.startswith("#"):
            parts = line.split("\t")
            if parts[0] == "#route" and len(parts) == 3:
                marked[parts[1]] = tuple(s for s in parts[2].split(",") if s)
            continue
        parts = line.split("\t")
        if len(parts) == 2:
            parts.append("")
        if len(parts) != 3 or not parts[0]:
            raise NetworkFormatError("expected 'segment_id<TAB>length_m<TAB>successors'", lineno)
        sid, length_s, succ_s = parts
        try:
            length = float(length_s)
        except ValueError:
            raise NetworkFormatError(f"bad length {length_s!r}", lineno) from None
        if not length > 0 or not np.isfinite(length):
            raise NetworkFormatError(f"non-positive length {length_s!r} for {sid!r}", lineno)
        if sid in segments:
            raise NetworkFormatError(f"duplicate segment id {sid!r}", lineno)
        succs = tuple(s.strip() for s in succ_s.split(",") if s.strip())
        segments[sid] = Segment(sid, length, succs)
        lines[sid] = lineno
    for sid, seg in segments.items():
        for succ in seg.successors:
            if succ not in segments:
                raise NetworkFormatError(
                    f"segment {sid!r} references undefined successor {succ!r}", lines[sid])
    routes = {}
    for name, segs in marked.items():
        try:
            routes[name] = Route(segs)
        except RouteError as exc:
            raise NetworkFormatError(f"marked route {name!r}: {exc}") from None
    try:
        return RoadNetwork(segments, routes)
    except RouteError as exc:
        raise NetworkFormatError(f"marked route: {exc}") from None


def dump_network(net: RoadNetwork, out: TextIO | None = None) -> str:
    buf = io.StringIO()
    buf.write("#segments\n")
    for name, route in net.marked_routes.items():
        buf.write(f"#route\t{name}\t{','.join(route.segments)}\n")
    for seg in net.segments.values():
        buf.write(f"{seg.id}\t{seg.length!r}\t{','.join(seg.successors)}\n")
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text


# -- random walks ------------------------------------------------------------

def random_walk_route(net: RoadNetwork, k: int, rng: np.random.Generator,
                      max_attempts: int = MAX_WALK_ATTEMPTS) -> Route:
    """Uniform random walk of exactly ``k`` segments.

    The start is uniform over all segments and each step picks a successor
    uniformly. Hitting a dead end restarts the whole walk from a fresh start.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(net) == 0:
        raise RouteError("empty network")
    indptr, indices = net.succ_indptr, net.succ_indices
    n = len(net)
    for _ in range(max_attempts):
        cur = int(rng.integers(n))
        walk = [cur]
        while len(walk) < k:
            lo, hi = indptr[cur], indptr[cur + 1]
            if hi == lo:
                break
            cur = int(indices[lo + rng.integers(hi - lo)])
            walk.append(cur)
        if len(walk) == k:
            return Route(tuple(net.ids[i] for i in walk))
    raise RouteError(f"no walk of length {k} found after {max_attempts} attempts")


def random_walks(net: RoadNetwork, ks: Sequence[int] | np.ndarray, rng: np.random.Generator,
                 max_attempts: int = MAX_WALK_ATTEMPTS) -> list[np.ndarray]:
    """Vectorised counterpart of :func:`random_walk_route` returning index arrays.

    All walks advance in lock-step; walks that hit a dead end are restarted
    from a new uniform start, each with its own attempt budget.
    """
    ks = np.asarray(ks, dtype=np.int64)
    if ks.size and ks.min() < 1:
        raise ValueError("every k must be >= 1")
    n = len(net)
    m = ks.size
    out = np.full((m, int(ks.max()) if m else 0), -1, dtype=np.int64)
    if m == 0:
        return []
    indptr, indices = net.succ_indptr, net.succ_indices
    deg = np.diff(indptr)
    attempts = np.ones(m, dtype=np.int64)
    out[:, 0] = rng.integers(n, size=m)
    pos = np.ones(m, dtype=np.int64)
    active = np.flatnonzero(pos < ks)
    while active.size:
        cur = out[active, pos[active] - 1]
        d = deg[cur]
        dead = d == 0
        if dead.any():
            restart = active[dead]
            attempts[restart] += 1
            if attempts.max() > max_attempts:
                bad = int(ks[restart[attempts[restart] > max_attempts][0]])
                raise RouteError(f"no walk of length {bad} found after {max_attempts} attempts")
            out[restart, 0] = rng.integers(n, size=restart.size)
            pos[restart] = 1
        go = active[~dead]
        cur = cur[~dead]
        step = (rng.random(go.size) * deg[cur]).astype(np.int64)
        out[go, pos[go]] = indices[indptr[cur] + step]
        pos[go] += 1
        active = np.flatnonzero(pos < ks)
    return [out[i, :ks[i]] for i in range(m)]
