"""Empirical spatial shot distributions and skill-scaled synthetic shot
sampling for goals-above-expectation simulations."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .model import (BODY_PARTS, PITCH_X_M, PITCH_Y_M, X_SCALE, Y_SCALE,
                    FeatureVector, XgModel, feature_matrix_from_locations)
from .util import rng_stream

# 1m grid cells; shots exactly on the far lines are folded into the last cell
_MAX_CELL_X = int(PITCH_X_M) - 1
_MAX_CELL_Y = int(PITCH_Y_M) - 1


@dataclass(frozen=True)
class SpatialShotDistribution:
    """Empirical 1m-grid distribution over shot origins.

    cells is a (K, 2) integer array of occupied (x, y) grid cells in meter
    coordinates, cell_probs the matching empirical frequencies, and
    bodypart_mix a (K, 3) array of per-cell (foot, head, other) proportions.
    """

    cells: np.ndarray
    cell_probs: np.ndarray
    bodypart_mix: np.ndarray
    source_n: int

    @cached_property
    def cell_cdf(self) -> np.ndarray:
        return np.cumsum(self.cell_probs)

    def prob_of_cell(self, cx: int, cy: int) -> float:
        match = np.where((self.cells[:, 0] == cx) & (self.cells[:, 1] == cy))[0]
        return float(self.cell_probs[match[0]]) if match.size else 0.0


def _cell_of(x: float, y: float) -> tuple[int, int]:
    cx = min(int(x * X_SCALE), _MAX_CELL_X)
    cy = min(int(y * Y_SCALE), _MAX_CELL_Y)
    return cx, cy


def build_distribution(shots) -> SpatialShotDistribution:
    """Empirical cell frequencies and per-cell body-part mixes for a shot set.

    Cells with zero shots are absent. Cell order is sorted by (x, y) so the
    distribution is a deterministic function of the input multiset.
    """
    shots = list(shots)
    if not shots:
        raise ValueError("cannot build a shot distribution from zero shots")
    counts: dict[tuple[int, int], np.ndarray] = {}
    for shot in shots:
        cell = _cell_of(shot.start_x, shot.start_y)
        bucket = counts.setdefault(cell, np.zeros(3))
        bucket[BODY_PARTS.index(shot.body_part)] += 1
    keys = sorted(counts)
    cells = np.array(keys, dtype=int)
    per_cell = np.array([counts[k].sum() for k in keys])
    mix = np.array([counts[k] / counts[k].sum() for k in keys])
    return SpatialShotDistribution(
        cells=cells,
        cell_probs=per_cell / per_cell.sum(),
        bodypart_mix=mix,
        source_n=len(shots),
    )


def scale_xg(xg_raw: np.ndarray, alpha: float) -> np.ndarray:
    """Skill scaling (1 + alpha/100) * xG, clamped to 1."""
    if alpha < -100.0:
        raise ValueError(f"alpha {alpha} would make probabilities negative")
    return np.minimum(1.0, (1.0 + alpha / 100.0) * np.asarray(xg_raw))


def _sample_arrays(dist: SpatialShotDistribution, model: XgModel, n: int,
                   alpha: float, rng: np.random.Generator):
    """Sample n shots; returns (X, xg_raw, xg_scaled, outcomes).

    Draw order is fixed (cells, in-cell x, in-cell y, body part, outcome)
    so a seed fully determines the result.
    """
    idx = np.searchsorted(dist.cell_cdf, rng.random(n), side="right")
    idx = np.minimum(idx, dist.cells.shape[0] - 1)
    u = rng.random(n)
    v = rng.random(n)
    # uniform within the 1m meter cell, expressed in provider units
    x = (dist.cells[idx, 0] + u) / X_SCALE
    y = (dist.cells[idx, 1] + v) / Y_SCALE
    mix_cum = np.cumsum(dist.bodypart_mix[idx], axis=1)
    bp = np.sum(rng.random(n)[:, None] > mix_cum, axis=1).clip(0, 2)
    X = feature_matrix_from_locations(x, y, bp)
    xg_raw = model.predict(X)
    xg_scaled = scale_xg(xg_raw, alpha)
    outcomes = (rng.random(n) < xg_scaled).astype(int)
    return X, xg_raw, xg_scaled, outcomes


@dataclass(frozen=True)
class SyntheticShot:
    features: FeatureVector
    xg_raw: float
    xg_scaled: float
    outcome: int


def sample_shots(dist: SpatialShotDistribution, model: XgModel, n: int,
                 alpha: float, seed: int) -> list[SyntheticShot]:
    """Sample n synthetic shots and their Bernoulli(xg_scaled) outcomes."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = rng_stream(seed)
    X, xg_raw, xg_scaled, outcomes = _sample_arrays(dist, model, n, alpha, rng)
    return [
        SyntheticShot(
            features=FeatureVector(float(row[0]), float(row[1]),
                                   float(row[2]), float(row[3]),
                                   int(row[4]), int(row[5])),
            xg_raw=float(xg_raw[i]),
            xg_scaled=float(xg_scaled[i]),
            outcome=int(outcomes[i]),
        )
        for i, row in enumerate(X)
    ]


def simulate_gax(dist: SpatialShotDistribution, model: XgModel, alpha: float,
                 n: int, reps: int, seed: int) -> np.ndarray:
    """Per-repetition GAX (sum of outcomes minus sum of raw xG) for `reps`
    independent seasons of n shots each.

    Repetition r uses its own stream derived from (seed, r), so results do
    not depend on execution order.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    out = np.empty(reps)
    for r in range(reps):
        rng = rng_stream(seed, r)
        _, xg_raw, _, outcomes = _sample_arrays(dist, model, n, alpha, rng)
        out[r] = float(outcomes.sum() - xg_raw.sum())
    return out


def overperformance_probability(dist: SpatialShotDistribution, model: XgModel,
                                alpha: float, n: int, reps: int,
                                seed: int) -> tuple[float, float]:
    """Fraction of repetitions where goals strictly exceed cumulative raw xG,
    with its binomial standard error."""
    gax = simulate_gax(dist, model, alpha, n, reps, seed)
    p_hat = float(np.mean(gax > 0.0))
    se = math.sqrt(p_hat * (1.0 - p_hat) / reps)
    return p_hat, se


def consistency_probability(p_season: float, k: int, m: int) -> float:
    """P(X >= k) for X ~ Binomial(m, p_season), computed exactly."""
    if not 0.0 <= p_season <= 1.0:
        raise ValueError("p_season must be in [0, 1]")
    if not 0 <= k <= m:
        raise ValueError("need 0 <= k <= m")
    total = 0.0
    for j in range(k, m + 1):
        total += (math.comb(m, j) * p_season ** j
                  * (1.0 - p_season) ** (m - j))
    return min(1.0, total)
