"""Proxy subgroups for finishing skill (shot volume, position, team
strength), smoothed shot volumes, calibration curves, and conversion rates
by distance band."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import PlayerProfile, TeamRating

POSITION_PRIORS = {"attacker": 2.1, "midfielder": 1.1, "defender": 0.4}
PRIOR_WEIGHT_MINUTES = 270.0  # three full games
VOLUME_LOW_THRESHOLD = 0.875   # 20th percentile of smoothed volumes
VOLUME_HIGH_THRESHOLD = 2.526  # 80th percentile
VOLUME_TIERS = ("low", "mid", "high")

DISTANCE_BANDS_M = ((0.0, 5.0), (5.0, 11.0), (11.0, 16.0), (16.0, 25.0),
                    (25.0, math.inf))


@dataclass(frozen=True)
class SubgroupKey:
    volume_tier: str
    position: str
    team_tier: str

    def matches(self, other: "SubgroupKey") -> bool:
        """Wildcard comparison; None fields on self match anything."""
        return all(
            mine is None or mine == theirs
            for mine, theirs in (
                (self.volume_tier, other.volume_tier),
                (self.position, other.position),
                (self.team_tier, other.team_tier),
            ))


def smoothed_shot_volume(profile: PlayerProfile,
                         position_priors: dict | None = None) -> float:
    """Shots per 90 with a positional prior worth 270 minutes:
    90 * (shots + 3 * prior) / (minutes + 270).

    With no playing time this returns the prior itself; with many minutes
    it approaches the raw per-90 rate.
    """
    priors = position_priors or POSITION_PRIORS
    prior = priors[profile.primary_position]
    if profile.total_shots < 0 or profile.total_minutes < 0:
        raise ValueError("negative shot or minute totals")
    return (90.0 * (profile.total_shots + 3.0 * prior)
            / (profile.total_minutes + PRIOR_WEIGHT_MINUTES))


def volume_tier(theta: float,
                low: float = VOLUME_LOW_THRESHOLD,
                high: float = VOLUME_HIGH_THRESHOLD) -> str:
    """Strict thresholds: boundary values land in the middle tier."""
    if theta < low:
        return "low"
    if theta > high:
        return "high"
    return "mid"


def assign_groups(profile: PlayerProfile, rating: TeamRating,
                  low: float = VOLUME_LOW_THRESHOLD,
                  high: float = VOLUME_HIGH_THRESHOLD,
                  position_priors: dict | None = None) -> SubgroupKey:
    """Subgroup key for one shooter/team combination."""
    theta = smoothed_shot_volume(profile, position_priors)
    return SubgroupKey(
        volume_tier=volume_tier(theta, low, high),
        position=profile.primary_position,
        team_tier=rating.tier,
    )


def volume_thresholds_from_profiles(profiles,
                                    position_priors: dict | None = None,
                                    ) -> tuple[float, float]:
    """Recompute the 20th/80th percentile volume cuts from a player pool."""
    thetas = np.array([smoothed_shot_volume(p, position_priors)
                       for p in profiles])
    if thetas.size == 0:
        raise ValueError("no profiles to derive thresholds from")
    return (float(np.percentile(thetas, 20)),
            float(np.percentile(thetas, 80)))


def shot_volume_tiers(dataset,
                      low: float = VOLUME_LOW_THRESHOLD,
                      high: float = VOLUME_HIGH_THRESHOLD,
                      position_priors: dict | None = None) -> dict:
    """Volume tier per player id for every player known to the dataset.

    Players appearing only through shots (no profile) get a zero-activity
    midfielder profile, i.e. the pure positional prior.
    """
    tiers = {}
    for pid, profile in dataset.players.items():
        theta = smoothed_shot_volume(profile, position_priors)
        tiers[pid] = volume_tier(theta, low, high)
    for shot in dataset.shots:
        if shot.player_id not in tiers:
            fallback = PlayerProfile(shot.player_id, 0, 0.0, "midfielder")
            theta = smoothed_shot_volume(fallback, position_priors)
            tiers[shot.player_id] = volume_tier(theta, low, high)
    return tiers


# ---------------------------------------------------------------------------
# Calibration curves

N_CURVE_BINS = 100
DEFAULT_MIN_BIN_N = 100
DEFAULT_BANDWIDTH = 0.02


@dataclass(frozen=True)
class CalibrationCurve:
    """Per-bin calibration statistics plus a kernel-smoothed curve.

    Bins are [i/100, (i+1)/100), the last closed. Bins with fewer than
    min_bin_n shots are masked and excluded from the smoothing support.
    smoothed_x/smoothed_y sample the smoothed curve at unmasked bin centers.
    """

    bin_edges: np.ndarray
    n: np.ndarray
    mean_predicted: np.ndarray
    conversion_rate: np.ndarray
    masked: np.ndarray
    smoothed_x: np.ndarray
    smoothed_y: np.ndarray
    min_bin_n: int
    bandwidth: float


def calibration_curve(predictions, outcomes,
                      min_bin_n: int = DEFAULT_MIN_BIN_N,
                      bandwidth: float = DEFAULT_BANDWIDTH,
                      ) -> CalibrationCurve:
    """Reliability statistics in 1%-wide probability bins with a
    count-weighted Gaussian (Nadaraya-Watson) smoother over unmasked bins."""
    p = np.asarray(predictions, dtype=float)
    y = np.asarray(outcomes, dtype=float)
    if p.size == 0:
        raise ValueError("empty prediction list")
    if p.shape != y.shape:
        raise ValueError("predictions and outcomes differ in length")
    if np.any((p < 0) | (p > 1)):
        raise ValueError("predictions must lie in [0, 1]")

    idx = np.minimum((p * N_CURVE_BINS).astype(int), N_CURVE_BINS - 1)
    n = np.bincount(idx, minlength=N_CURVE_BINS).astype(float)
    sum_p = np.bincount(idx, weights=p, minlength=N_CURVE_BINS)
    sum_y = np.bincount(idx, weights=y, minlength=N_CURVE_BINS)
    with np.errstate(invalid="ignore"):
        mean_pred = np.where(n > 0, sum_p / np.maximum(n, 1), np.nan)
        conv = np.where(n > 0, sum_y / np.maximum(n, 1), np.nan)
    masked = n < min_bin_n

    support = ~masked
    centers = (np.arange(N_CURVE_BINS) + 0.5) / N_CURVE_BINS
    if np.any(support):
        xs = mean_pred[support]
        ys = conv[support]
        ws = n[support]
        qs = centers[support]
        kern = np.exp(-0.5 * ((qs[:, None] - xs[None, :]) / bandwidth) ** 2)
        kern *= ws[None, :]
        smoothed_y = kern @ ys / kern.sum(axis=1)
        smoothed_x = qs
    else:
        smoothed_x = np.empty(0)
        smoothed_y = np.empty(0)

    return CalibrationCurve(
        bin_edges=np.linspace(0.0, 1.0, N_CURVE_BINS + 1),
        n=n.astype(int),
        mean_predicted=mean_pred,
        conversion_rate=conv,
        masked=masked,
        smoothed_x=smoothed_x,
        smoothed_y=smoothed_y,
        min_bin_n=min_bin_n,
        bandwidth=bandwidth,
    )


# ---------------------------------------------------------------------------
# Conversion by distance band

@dataclass(frozen=True)
class ConversionTable:
    """Goals/shots per (volume tier, body part, distance band) cell.

    Covers footed shots and headers only. Empty cells carry rate None
    rather than zero.
    """

    cells: dict  # (volume_tier, body_part, band_index) -> (n, rate | None)
    bands: tuple = DISTANCE_BANDS_M

    def rate(self, tier: str, body_part: str, band_index: int):
        return self.cells[(tier, body_part, band_index)][1]

    def count(self, tier: str, body_part: str, band_index: int) -> int:
        return self.cells[(tier, body_part, band_index)][0]


def band_index(distance_m: float) -> int:
    """Half-open bands: a 5.0 m shot falls in [5, 11)."""
    for i, (lo, hi) in enumerate(DISTANCE_BANDS_M):
        if lo <= distance_m < hi:
            return i
    raise ValueError(f"distance {distance_m} outside all bands")


def conversion_by_distance(entries) -> ConversionTable:
    """Tabulate conversion rates from (volume_tier, body_part, distance_m,
    is_goal) rows. Shots with body part `other` are ignored."""
    counts: dict[tuple, list] = {}
    for tier in VOLUME_TIERS:
        for bp in ("foot", "head"):
            for b in range(len(DISTANCE_BANDS_M)):
                counts[(tier, bp, b)] = [0, 0]
    for tier, body_part, distance_m, is_goal in entries:
        if body_part not in ("foot", "head"):
            continue
        cell = counts[(tier, body_part, band_index(distance_m))]
        cell[0] += 1
        cell[1] += int(bool(is_goal))
    cells = {}
    for key, (n, goals) in counts.items():
        cells[key] = (n, goals / n if n > 0 else None)
    return ConversionTable(cells=cells)
