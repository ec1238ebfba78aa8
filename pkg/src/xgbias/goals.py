"""Exact goal-count distributions (Poisson binomial over per-shot xG) and
shot filters for facet-wise finishing analysis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

METERS_PER_YARD = 0.9144


@dataclass(frozen=True)
class GoalDistribution:
    """Exact PMF over goal counts 0..N for a set of independent shots."""

    pmf: np.ndarray
    n_shots: int
    total_xg: float

    def mean(self) -> float:
        return float(np.arange(self.n_shots + 1) @ self.pmf)

    def variance(self) -> float:
        k = np.arange(self.n_shots + 1)
        return float((k - self.mean()) ** 2 @ self.pmf)


def poisson_binomial(xgs) -> GoalDistribution:
    """Exact distribution of the number of goals from shots with the given
    success probabilities.

    Uses the convolution recurrence: fold each shot into the PMF one at a
    time. O(N^2) but exact and stable for the few thousand shots a player
    accumulates.
    """
    xgs = np.asarray(list(xgs), dtype=float)
    bad = np.where((xgs < 0.0) | (xgs > 1.0) | ~np.isfinite(xgs))[0]
    if bad.size:
        raise ValueError(f"xG out of [0,1] at index {bad[0]}: {xgs[bad[0]]}")
    pmf = np.array([1.0])
    for p in xgs:
        nxt = np.zeros(pmf.size + 1)
        nxt[:-1] = pmf * (1.0 - p)
        nxt[1:] += pmf * p
        pmf = nxt
    return GoalDistribution(pmf=pmf, n_shots=int(xgs.size),
                            total_xg=float(np.sum(xgs)))


def tail_probabilities(dist: GoalDistribution, observed: int) -> dict:
    """One-sided tail masses around an observed goal count.

    Both tails include the observed count itself, so
    p_at_most + p_at_least = 1 + pmf[observed].
    """
    if not 0 <= observed <= dist.n_shots:
        raise ValueError(
            f"observed goals {observed} outside 0..{dist.n_shots}")
    return {
        "p_at_most": float(np.sum(dist.pmf[:observed + 1])),
        "p_at_least": float(np.sum(dist.pmf[observed:])),
    }


@dataclass(frozen=True)
class ShotFilter:
    """Criteria for restricting a shot set before goal-distribution analysis.

    distance_band is (lo, hi, unit) with unit "m" or "yd"; the band is
    half-open [lo, hi) and compared against the shot's distance in meters.
    """

    exclude_deflected: bool = False
    body_parts: frozenset[str] | None = None
    distance_band: tuple[float, float, str] | None = None
    predicate: object = None  # optional callable(shot) -> bool
    predicate_label: str = ""

    def band_in_meters(self) -> tuple[float, float] | None:
        if self.distance_band is None:
            return None
        lo, hi, unit = self.distance_band
        if lo >= hi:
            raise ValueError(f"distance band lo >= hi: [{lo}, {hi})")
        if unit == "m":
            return float(lo), float(hi)
        if unit == "yd":
            return lo * METERS_PER_YARD, hi * METERS_PER_YARD
        raise ValueError(f"unknown distance unit {unit!r}")


@dataclass
class FilterReport:
    kept: list = field(default_factory=list)
    removed_deflected: int = 0
    removed_body_part: int = 0
    removed_distance: int = 0
    removed_predicate: int = 0


def filter_shots(shots_with_xg, shot_filter: ShotFilter,
                 distances=None) -> FilterReport:
    """Apply all active criteria to (shot, xg) pairs.

    `distances` supplies the per-shot distance in meters when a distance
    band is active (same order as the input). Removal counts are tallied
    per criterion; a shot failing several criteria counts once, against
    the first failing check.
    """
    band = shot_filter.band_in_meters()
    shots_with_xg = list(shots_with_xg)
    if band is not None and distances is None:
        raise ValueError("distance band requires per-shot distances")
    report = FilterReport()
    for i, (shot, xg) in enumerate(shots_with_xg):
        if shot_filter.exclude_deflected and shot.is_deflected:
            report.removed_deflected += 1
            continue
        if (shot_filter.body_parts is not None
                and shot.body_part not in shot_filter.body_parts):
            report.removed_body_part += 1
            continue
        if band is not None and not (band[0] <= distances[i] < band[1]):
            report.removed_distance += 1
            continue
        if shot_filter.predicate is not None and not shot_filter.predicate(shot):
            report.removed_predicate += 1
            continue
        report.kept.append((shot, xg))
    return report
