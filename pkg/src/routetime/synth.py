"""Synthetic road networks and floating-car trip datasets with log-normal travel times."""

from __future__ import annotations

import dataclasses
import io
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .network import RoadNetwork, Route, Segment, random_walks
from .trips import TripTable

# relative trip intensity per UTC hour for profile="daily"
DAILY_PROFILE = np.array([0.2, 0.1, 0.1, 0.1, 0.2, 0.5, 1.0, 1.6, 1.8, 1.4, 1.1, 1.1,
                          1.2, 1.2, 1.1, 1.3, 1.6, 1.8, 1.6, 1.2, 0.9, 0.7, 0.5, 0.3])


class SynthConfigError(ValueError):
    pass


@dataclass
class SynthConfig:
    n_segments: int = 106
    chain: bool = False
    degree_probs: str = "1:0.35,2:0.45,3:0.2"
    length_min: float = 50.0
    length_max: float = 400.0
    time_model: str = "time"  # "time": lnN travel time, "speed": lnN speed and t = l / v
    speed_median: float = 8.0  # m/s
    sigma_min: float = 0.8
    sigma_max: float = 1.3
    shared_mu: float = 0.0
    shared_sigma: float = 0.0  # > 0: every segment uses lnN(shared_mu, shared_sigma)
    rush_hours: str = "7-10,16-19"
    rush_shift: float = 0.0  # added to mu for trips starting in rush hours
    trips_per_hour: float = 12.0
    profile: str = "flat"  # "flat" or "daily"
    start: str = "2012-01-01"
    days: int = 366
    route_len_median: float = 6.0
    route_len_sigma: float = 0.8
    k_max: int = 70
    main_road_len: int = 44
    main_road_share: float = 0.06
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.n_segments < 1:
            raise SynthConfigError("n_segments must be >= 1")
        if self.time_model not in ("time", "speed"):
            raise SynthConfigError(f"time_model must be 'time' or 'speed', got {self.time_model!r}")
        if self.profile not in ("flat", "daily"):
            raise SynthConfigError(f"profile must be 'flat' or 'daily', got {self.profile!r}")
        if not (0 < self.sigma_min <= self.sigma_max):
            raise SynthConfigError("need 0 < sigma_min <= sigma_max")
        if self.shared_sigma < 0:
            raise SynthConfigError("shared_sigma must be >= 0")
        if not (0 < self.length_min <= self.length_max):
            raise SynthConfigError("need 0 < length_min <= length_max")
        if not 0 <= self.main_road_share <= 1:
            raise SynthConfigError("main_road_share must be in [0, 1]")
        if self.main_road_share > 0 and not self.chain and not 1 <= self.main_road_len <= self.n_segments:
            raise SynthConfigError("main road longer than the network")
        if self.trips_per_hour < 0 or self.days < 0:
            raise SynthConfigError("trips_per_hour and days must be non-negative")
        degrees, probs = self.degrees()
        if abs(probs.sum() - 1) > 1e-9 or (probs < 0).any():
            raise SynthConfigError("degree probabilities must be non-negative and sum to 1")
        if degrees.min() < 1:
            raise SynthConfigError("out-degrees must be >= 1")
        self.rush_mask()

    def degrees(self) -> tuple[np.ndarray, np.ndarray]:
        try:
            pairs = [p.split(":") for p in self.degree_probs.split(",") if p.strip()]
            degrees = np.array([int(d) for d, _ in pairs])
            probs = np.array([float(p) for _, p in pairs])
        except ValueError:
            raise SynthConfigError(f"bad degree_probs {self.degree_probs!r}") from None
        return degrees, probs

    def rush_mask(self) -> np.ndarray:
        mask = np.zeros(24, dtype=bool)
        for part in filter(None, (p.strip() for p in self.rush_hours.split(","))):
            try:
                a, b = (int(x) for x in part.split("-"))
            except ValueError:
                raise SynthConfigError(f"bad rush_hours entry {part!r}") from None
            mask[a:b] = True
        return mask

    @property
    def main_road_name(self) -> str:
        return f"main{self.main_road_len}"

    def to_text(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in dataclasses.fields(self))


def load_config(source: TextIO | str, **overrides) -> SynthConfig:
    """Parse a flat ``key=value`` file; unknown keys are an error."""
    if isinstance(source, str):
        source = io.StringIO(source)
    types = {f.name: f.type for f in dataclasses.fields(SynthConfig)}
    values = {}
    for lineno, raw in enumerate(source, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = (s.strip() for s in line.partition("="))
        if not sep:
            raise SynthConfigError(f"line {lineno}: expected key=value")
        if key not in types:
            raise SynthConfigError(f"line {lineno}: unknown config key {key!r}")
        kind = types[key]
        try:
            if kind == "bool":
                if val.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError
                values[key] = val.lower() in ("true", "1", "yes")
            elif kind == "int":
                values[key] = int(val)
            elif kind == "float":
                values[key] = float(val)
            else:
                values[key] = val
        except ValueError:
            raise SynthConfigError(f"line {lineno}: bad value {val!r} for {key}") from None
    values.update(overrides)
    return SynthConfig(**values)


def segment_ids(n: int) -> list[str]:
    width = max(3, len(str(n - 1)))
    return [f"s{i:0{width}d}" for i in range(n)]


def generate_network(cfg: SynthConfig, rng: np.random.Generator) -> RoadNetwork:
    """Random strongly connected network, or a simple chain with ``chain=True``.

    A Hamiltonian cycle guarantees every segment has a successor and every
    segment is reachable; extra successors are added up to a sampled
    out-degree. With a main road configured, its segments are the first
    ``main_road_len`` ids, linked in order along the cycle.
    """
    n = cfg.n_segments
    ids = segment_ids(n)
    lengths = np.round(rng.uniform(cfg.length_min, cfg.length_max, size=n), 1)
    if cfg.chain:
        segs = [Segment(ids[i], float(lengths[i]), (ids[i + 1],) if i + 1 < n else ()) for i in range(n)]
        return RoadNetwork.from_segments(segs, {"chain": Route(tuple(ids))})
    degrees, probs = cfg.degrees()
    if degrees.max() > max(n - 1, 1):
        raise SynthConfigError(f"out-degree {degrees.max()} infeasible with {n} segments")
    main = cfg.main_road_len if cfg.main_road_share > 0 else 0
    order = np.r_[np.arange(main), main + rng.permutation(n - main)]
    succ = {int(order[i]): [int(order[(i + 1) % n])] for i in range(n)}
    target = rng.choice(degrees, size=n, p=probs)
    for i in range(n):
        want = int(target[i])
        if len(succ[i]) >= want:
            continue
        pool = np.setdiff1d(np.arange(n), [i] + succ[i])
        succ[i] += sorted(int(x) for x in rng.choice(pool, size=want - len(succ[i]), replace=False))
    segs = [Segment(ids[i], float(lengths[i]), tuple(ids[j] for j in succ[i]) if n > 1 else ())
            for i in range(n)]
    marked = {cfg.main_road_name: Route(tuple(ids[:main]))} if main else {}
    return RoadNetwork.from_segments(segs, marked)


def segment_params(net: RoadNetwork, cfg: SynthConfig, rng: np.random.Generator):
    """Per-segment log-normal (mu, sigma) of travel time (or of speed for the speed model)."""
    n = len(net)
    if cfg.shared_sigma > 0:
        return np.full(n, cfg.shared_mu), np.full(n, cfg.shared_sigma)
    sigma = rng.uniform(cfg.sigma_min, cfg.sigma_max, size=n)
    if cfg.time_model == "speed":
        mu = np.full(n, np.log(cfg.speed_median))
    else:
        mu = np.log(net.lengths / cfg.speed_median)
    return mu, sigma


def start_epoch(cfg: SynthConfig) -> int:
    return int(np.datetime64(cfg.start, "s").astype(np.int64))


def generate_trips(net: RoadNetwork, cfg: SynthConfig, rng: np.random.Generator) -> TripTable:
    """Poisson trip arrivals over ``cfg.days`` days with independent log-normal segment times.

    Each day is generated from its own child seed, so days are independent
    and could be produced in parallel; the result is ordered by start time.
    """
    mu, sigma = segment_params(net, cfg, rng)
    profile = DAILY_PROFILE / DAILY_PROFILE.mean() if cfg.profile == "daily" else np.ones(24)
    rush = cfg.rush_mask()
    main_route = net.marked_routes.get(cfg.main_road_name) if cfg.main_road_share > 0 and not cfg.chain else None
    main_idx = net.route_indices(main_route) if main_route is not None else None
    t0 = start_epoch(cfg)
    children = np.random.SeedSequence(int(rng.integers(2**63))).spawn(cfg.days)
    tables = []
    for day, seq in enumerate(children):
        tables.append(_generate_day(net, cfg, np.random.default_rng(seq), t0 + day * 86400,
                                    profile, rush, mu, sigma, main_idx))
    table = TripTable.concat(tables) if tables else TripTable.concat([_empty()])
    width = len(str(max(len(table) - 1, 0)))
    table.trip_ids = np.array([f"t{i:0{width}d}" for i in range(len(table))], dtype=object)
    return table


def _empty() -> TripTable:
    return TripTable(np.zeros(0, dtype=object), np.zeros(0, np.int64), np.zeros(1, np.int64),
                     np.zeros(0, np.int64), np.zeros(0))


def _generate_day(net, cfg, rng, day_start, profile, rush, mu, sigma, main_idx) -> TripTable:
    counts = rng.poisson(cfg.trips_per_hour * profile)
    m = int(counts.sum())
    if m == 0:
        return _empty()
    hour = np.repeat(np.arange(24), counts)
    start = day_start + hour * 3600 + rng.integers(0, 3600, size=m)
    order = np.argsort(start, kind="stable")
    start, hour = start[order], hour[order]
    on_main = rng.random(m) < cfg.main_road_share if main_idx is not None else np.zeros(m, bool)
    k = np.clip(np.rint(rng.lognormal(np.log(cfg.route_len_median), cfg.route_len_sigma, size=m)),
                1, cfg.k_max).astype(np.int64)
    k[on_main] = main_idx.size if main_idx is not None else 0
    walks = random_walks(net, k[~on_main], rng)
    routes = [None] * m
    for i, w in zip(np.flatnonzero(~on_main), walks):
        routes[i] = w
    for i in np.flatnonzero(on_main):
        routes[i] = main_idx
    seg = np.concatenate(routes)
    offsets = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(k, out=offsets[1:])
    shift = np.repeat(np.where(rush[hour], cfg.rush_shift, 0.0), k)
    z = rng.standard_normal(seg.size)
    if cfg.time_model == "speed":
        speed = np.exp(mu[seg] - shift + sigma[seg] * z)
        times = net.lengths[seg] / speed
    else:
        times = np.exp(mu[seg] + shift + sigma[seg] * z)
    return TripTable(np.zeros(m, dtype=object), start, offsets, seg, times)


def generate_dataset(cfg: SynthConfig) -> tuple[RoadNetwork, TripTable]:
    rng = np.random.default_rng(cfg.seed)
    net = generate_network(cfg, rng)
    return net, generate_trips(net, cfg, rng)
