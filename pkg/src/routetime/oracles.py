"""Brute-force and Monte-Carlo oracles for medians of sums and route ordering."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

ENUMERATION_BUDGET = 10**7


class BudgetExceeded(ValueError):
    pass


def sample_median(values) -> float:
    """Middle order statistic, or the midpoint of the two middle ones for even sizes."""
    v = np.sort(np.asarray(values, dtype=float))
    n = v.size
    if n == 0:
        raise ValueError("median of an empty sample")
    return float((v[(n - 1) // 2] + v[n // 2]) / 2.0)


def median_of_sum_exhaustive(lists: Sequence[Sequence[float]],
                             budget: int = ENUMERATION_BUDGET) -> float:
    """Exact median over every one-pick-per-list combination of sums."""
    if not lists:
        raise ValueError("need at least one list")
    size = math.prod(len(x) for x in lists)
    if size == 0:
        raise ValueError("empty list")
    if size > budget:
        raise BudgetExceeded(f"{size} combinations exceed the enumeration budget {budget}")
    sums = np.zeros(1)
    for values in lists:
        sums = np.add.outer(sums, np.asarray(values, dtype=float)).ravel()
    return sample_median(sums)


def median_of_sum_rows(rows: Sequence[Sequence[float]]) -> float:
    """Median of row sums, for tables whose rows are joint outcomes."""
    return sample_median(np.asarray(rows, dtype=float).sum(axis=1))


def median_of_sum_mc(lists: Sequence[Sequence[float]], n_draws: int,
                     rng: np.random.Generator) -> tuple[float, float]:
    """Monte-Carlo median of the sum and its standard error.

    The standard error is read off the sorted draws as half the spread
    between the order statistics at ``n/2 +- sqrt(n)/2`` (a distribution
    free approximation).
    """
    total = np.zeros(n_draws)
    for values in lists:
        values = np.asarray(values, dtype=float)
        total += values[rng.integers(values.size, size=n_draws)]
    total.sort()
    med = float((total[(n_draws - 1) // 2] + total[n_draws // 2]) / 2.0)
    half = math.sqrt(n_draws) / 2.0
    lo = total[max(int(math.floor(n_draws / 2 - half)), 0)]
    hi = total[min(int(math.ceil(n_draws / 2 + half)), n_draws - 1)]
    return med, float(hi - lo) / 2.0


@dataclass(frozen=True)
class Prop2Check:
    w: float | None  # None when indeterminate
    in_range: bool | None
    median_of_sum: float
    sum_of_medians: float
    sum_of_means: float

    @property
    def indeterminate(self) -> bool:
        return self.w is None


def implied_weight(lists: Sequence[Sequence[float]], median_of_sum: float,
                   rtol: float = 1e-12) -> Prop2Check:
    """Weight that makes the mean/median combination hit ``median_of_sum`` exactly."""
    smd = math.fsum(sample_median(x) for x in lists)
    smn = math.fsum(math.fsum(x) / len(x) for x in lists)
    denom = smn - smd
    if abs(denom) <= rtol * max(abs(smn), abs(smd), 1.0):
        return Prop2Check(None, None, median_of_sum, smd, smn)
    w = (median_of_sum - smd) / denom
    return Prop2Check(w, 0.0 <= w <= 1.0, median_of_sum, smd, smn)


def verify_prop2(lists: Sequence[Sequence[float]], joint: str = "cross",
                 rng: np.random.Generator | None = None, n_draws: int = 200_000,
                 budget: int = ENUMERATION_BUDGET) -> Prop2Check:
    """Implied combination weight for per-segment samples.

    ``joint`` selects how the sum is formed: ``"rows"`` treats aligned
    positions as joint outcomes, ``"cross"`` enumerates the full cross
    product (falling back to Monte Carlo above ``budget``), ``"mc"`` always
    samples.
    """
    if joint == "rows":
        med = median_of_sum_rows(np.column_stack([np.asarray(x, float) for x in lists]))
    elif joint == "cross" and math.prod(len(x) for x in lists) <= budget:
        med = median_of_sum_exhaustive(lists, budget)
    elif joint in ("cross", "mc"):
        med, _ = median_of_sum_mc(lists, n_draws, rng if rng is not None else np.random.default_rng())
    else:
        raise ValueError(f"unknown joint mode {joint!r}")
    return implied_weight(lists, med)


# -- route ordering under monotone transforms --------------------------------------

TRANSFORMS = {
    "identity": lambda x: x,
    "exp": np.exp,
    "cube": lambda x: x ** 3,
    "affine": lambda x: 3.0 - 2.0 * x,  # decreasing on purpose
}


@dataclass(frozen=True)
class Prop3Check:
    p_a_greater: float
    median_a: float
    median_b: float
    inconclusive: bool
    agreement: bool | None


def verify_prop3(dist_a: tuple[float, float], dist_b: tuple[float, float], transform: str,
                 trials: int, rng: np.random.Generator, deadband_se: float = 3.0) -> Prop3Check:
    """Empirical check that ``P(T_A > T_B) > 1/2`` iff ``median(T_A) > median(T_B)``.

    ``T = F(N(mu, sigma^2))`` for a transform ``F`` from :data:`TRANSFORMS`.
    When ``|P - 1/2|`` is within ``deadband_se`` binomial standard errors the
    result is inconclusive rather than a verdict.
    """
    if trials < 10_000:
        raise ValueError("use at least 10^4 trials")
    f = TRANSFORMS[transform]
    ta = f(rng.normal(dist_a[0], dist_a[1], size=trials))
    tb = f(rng.normal(dist_b[0], dist_b[1], size=trials))
    p = float(np.mean(ta > tb))
    med_a, med_b = sample_median(ta), sample_median(tb)
    if abs(p - 0.5) < deadband_se * math.sqrt(0.25 / trials):
        return Prop3Check(p, med_a, med_b, True, None)
    return Prop3Check(p, med_a, med_b, False, (p > 0.5) == (med_a > med_b))
