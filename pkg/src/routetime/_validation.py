"""Input validation helpers shared by the estimators and the CLI."""

from __future__ import annotations

import numbers

import numpy as np

from .trips import Trip, TripTable


def check_positive_int(value, name: str, allow_zero: bool = False) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        raise ValueError(f"{name} must be {'>= 0' if allow_zero else '>= 1'}, got {value}")
    return int(value)


def check_grid_step(step: float) -> int:
    """Number of grid intervals for ``step``; the step must divide 1 evenly."""
    if not 0 < step <= 1:
        raise ValueError(f"grid_step must be in (0, 1], got {step}")
    n = round(1.0 / step)
    if abs(n * step - 1.0) > 1e-9:
        raise ValueError(f"grid_step {step} does not divide 1 evenly")
    return n


def check_method(method: str, allowed=("SMD", "SMN", "COM", "MED")) -> str:
    m = method.upper()
    if m not in allowed:
        raise ValueError(f"unknown method {method!r}; expected one of {', '.join(allowed)}")
    return m


def as_trip_table(X, net) -> TripTable:
    """Accept a TripTable or any iterable of Trip objects."""
    if isinstance(X, TripTable):
        return X
    if isinstance(X, Trip):
        X = [X]
    trips = list(X)
    bad = next((t for t in trips if not isinstance(t, Trip)), None)
    if bad is not None:
        raise TypeError(f"expected Trip objects, got {type(bad).__name__}")
    for trip in trips:
        net.check_route(trip.route)
    return TripTable.from_trips(trips, net)


def check_lengths_match(*arrays) -> None:
    sizes = {np.asarray(a).shape[0] for a in arrays}
    if len(sizes) > 1:
        raise ValueError(f"inputs have mismatched lengths {sorted(sizes)}")
