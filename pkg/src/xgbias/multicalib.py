"""Multi-calibration post-processing: iteratively patch the base model's
predictions until every supported (subgroup, probability-bin) cell is
calibrated, then evaluate shots against explicit average-player baselines."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (POSITIONS, PlayerProfile, ShotDataset, TeamRating,
                   dataset_matrices)
from .model import XgModel, average_ranks
from .subgroups import VOLUME_TIERS, SubgroupKey, assign_groups

logger = logging.getLogger(__name__)

# Log-spaced probability bin edges used for calibration cells.
DEFAULT_BIN_EDGES = (0.00, 0.015, 0.023, 0.034, 0.052, 0.079, 0.12, 0.18,
                     0.27, 0.40, 1.00)
DEFAULT_TOLERANCE = 0.01
DEFAULT_MAX_ITERATIONS = 100
DEFAULT_MIN_SUPPORT = 100
CLAMP_LO = 0.001
CLAMP_HI = 0.999


@dataclass(frozen=True)
class BinSchema:
    edges: tuple = DEFAULT_BIN_EDGES

    def __post_init__(self):
        e = self.edges
        if len(e) < 2 or e[0] != 0.0 or e[-1] != 1.0 or \
                any(a >= b for a, b in zip(e, e[1:])):
            raise ValueError("bin edges must increase strictly from 0 to 1")

    @property
    def n_bins(self) -> int:
        return len(self.edges) - 1

    def bin_of(self, p) -> np.ndarray:
        """Half-open bins [e_i, e_{i+1}); the last bin is closed at 1."""
        idx = np.searchsorted(np.asarray(self.edges), np.asarray(p),
                              side="right") - 1
        return np.clip(idx, 0, self.n_bins - 1)


@dataclass(frozen=True)
class CalibrationUpdate:
    group: SubgroupKey  # pattern; None fields are wildcards
    bin_index: int
    delta: float
    iteration: int


def standard_groups() -> list[SubgroupKey]:
    """The nine position x volume average-player baselines, in fixed order
    (positions outer, volume tiers inner)."""
    return [SubgroupKey(volume_tier=v, position=p, team_tier=None)
            for p in POSITIONS for v in VOLUME_TIERS]


def shot_group_keys(dataset: ShotDataset) -> list[SubgroupKey]:
    """Concrete subgroup key per shot, via the shooter's profile and team."""
    keys = []
    for s in dataset.shots:
        profile = dataset.players.get(s.player_id)
        if profile is None:
            profile = PlayerProfile(s.player_id, 0, 0.0, "midfielder")
        rating = dataset.teams.get(s.team_id)
        if rating is None:
            rating = TeamRating(s.team_id, float("nan"), "other")
        keys.append(assign_groups(profile, rating))
    return keys


@dataclass
class MultiCalibratedModel:
    """Base model plus an ordered, replayable list of per-cell adjustments.

    Prediction is a pure function: start from the base model's output and
    apply, in fit order, every update whose group pattern matches the
    shot's subgroup and whose bin contains the current value.
    """

    base: XgModel
    groups: list[SubgroupKey]
    updates: list[CalibrationUpdate] = field(default_factory=list)
    schema: BinSchema = field(default_factory=BinSchema)
    tolerance: float = DEFAULT_TOLERANCE
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    converged: bool = False

    def replay(self, base_preds: np.ndarray,
               group_keys: list[SubgroupKey]) -> np.ndarray:
        p = np.asarray(base_preds, dtype=float).copy()
        for u in self.updates:
            match = np.fromiter((u.group.matches(k) for k in group_keys),
                                dtype=bool, count=len(group_keys))
            hit = match & (self.schema.bin_of(p) == u.bin_index)
            if np.any(hit):
                p[hit] = np.clip(p[hit] + u.delta, CLAMP_LO, CLAMP_HI)
        return p

    def predict(self, X: np.ndarray,
                group_keys: list[SubgroupKey]) -> np.ndarray:
        """Calibrated predictions using each shot's own subgroup."""
        return self.replay(self.base.predict(X), group_keys)

    def predict_as_group(self, X, baseline: SubgroupKey) -> np.ndarray:
        """Predictions as if every shot were taken by a member of the
        baseline group. X is a feature matrix or a single FeatureVector."""
        if baseline not in self.groups:
            raise ValueError(f"baseline {baseline} was not fitted")
        if hasattr(X, "to_array"):
            X = X.to_array()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.replay(self.base.predict(X), [baseline] * X.shape[0])


def predict_as_group(mc: MultiCalibratedModel, X,
                     baseline: SubgroupKey) -> np.ndarray:
    return mc.predict_as_group(X, baseline)


def fit_multicalibration(base: XgModel, dataset: ShotDataset,
                         groups: list[SubgroupKey] | None = None,
                         schema: BinSchema | None = None,
                         tolerance: float = DEFAULT_TOLERANCE,
                         max_iter: int = DEFAULT_MAX_ITERATIONS,
                         min_support: int = DEFAULT_MIN_SUPPORT,
                         ) -> MultiCalibratedModel:
    """Fit additive per-cell corrections on a dataset with subgroup keys."""
    X, y = dataset_matrices(dataset.shots)
    keys = shot_group_keys(dataset)
    groups = groups if groups is not None else standard_groups()
    schema = schema or BinSchema()
    updates, converged = fit_updates(base.predict(X), y, keys, groups,
                                     schema, tolerance, max_iter,
                                     min_support)
    return MultiCalibratedModel(base=base, groups=groups, updates=updates,
                                schema=schema, tolerance=tolerance,
                                max_iterations=max_iter, converged=converged)


def fit_updates(base_preds: np.ndarray, outcomes: np.ndarray,
                shot_keys: list[SubgroupKey], groups: list[SubgroupKey],
                schema: BinSchema, tolerance: float = DEFAULT_TOLERANCE,
                max_iter: int = DEFAULT_MAX_ITERATIONS,
                min_support: int = DEFAULT_MIN_SUPPORT,
                ) -> tuple[list[CalibrationUpdate], bool]:
    """Iteratively fix the worst-calibrated supported cell.

    Each iteration finds the (group, bin) cell with at least min_support
    shots whose |mean prediction - conversion rate| is largest and above
    tolerance, then shifts every current prediction in that cell by the
    difference (clamped to [0.001, 0.999]) and re-bins. Ties break toward
    the lowest group index, then the lowest bin index.
    """
    p = np.asarray(base_preds, dtype=float).copy()
    y = np.asarray(outcomes, dtype=float)
    n = p.size
    masks = [np.fromiter((g.matches(k) for k in shot_keys), dtype=bool,
                         count=n) for g in groups]

    bins = schema.bin_of(p)
    if not any(
            np.any(np.bincount(bins[m], minlength=schema.n_bins)
                   >= min_support)
            for m in masks if np.any(m)):
        raise ValueError(
            f"no (group, bin) cell reaches min support {min_support}; "
            "dataset too small for the declared groups")

    updates: list[CalibrationUpdate] = []
    converged = False
    for iteration in range(max_iter):
        bins = schema.bin_of(p)
        worst = None  # (violation, group_idx, bin_idx, delta, cell_mask)
        for gi, m in enumerate(masks):
            if not np.any(m):
                continue
            counts = np.bincount(bins[m], minlength=schema.n_bins)
            sum_p = np.bincount(bins[m], weights=p[m],
                                minlength=schema.n_bins)
            sum_y = np.bincount(bins[m], weights=y[m],
                                minlength=schema.n_bins)
            for bi in range(schema.n_bins):
                if counts[bi] < min_support:
                    continue
                mean_pred = sum_p[bi] / counts[bi]
                conv = sum_y[bi] / counts[bi]
                violation = abs(mean_pred - conv)
                if violation <= tolerance:
                    continue
                if worst is None or violation > worst[0]:
                    worst = (violation, gi, bi, conv - mean_pred)
        if worst is None:
            converged = True
            break
        violation, gi, bi, delta = worst
        cell = masks[gi] & (bins == bi)
        p[cell] = np.clip(p[cell] + delta, CLAMP_LO, CLAMP_HI)
        new_violation = abs(float(np.mean(p[cell]) - np.mean(y[cell])))
        if new_violation >= violation:
            # clamping blocked any movement; cell cannot be repaired
            logger.warning("cell (group %d, bin %d) stuck at violation "
                           "%.4f; stopping", gi, bi, violation)
            p[cell] = np.clip(p[cell] - delta, CLAMP_LO, CLAMP_HI)
            break
        updates.append(CalibrationUpdate(group=groups[gi], bin_index=bi,
                                         delta=float(delta),
                                         iteration=iteration))
    return updates, converged


def max_cell_violation(mc: MultiCalibratedModel, dataset: ShotDataset,
                       min_support: int = DEFAULT_MIN_SUPPORT) -> float:
    """Largest |mean prediction - conversion| over supported cells, using
    the model's own calibrated predictions."""
    X, y = dataset_matrices(dataset.shots)
    keys = shot_group_keys(dataset)
    p = mc.predict(X, keys)
    bins = mc.schema.bin_of(p)
    worst = 0.0
    for g in mc.groups:
        m = np.fromiter((g.matches(k) for k in keys), dtype=bool,
                        count=len(keys))
        if not np.any(m):
            continue
        counts = np.bincount(bins[m], minlength=mc.schema.n_bins)
        sum_p = np.bincount(bins[m], weights=p[m],
                            minlength=mc.schema.n_bins)
        sum_y = np.bincount(bins[m], weights=y[m],
                            minlength=mc.schema.n_bins)
        for bi in range(mc.schema.n_bins):
            if counts[bi] < min_support:
                continue
            worst = max(worst, abs(sum_p[bi] / counts[bi]
                                   - sum_y[bi] / counts[bi]))
    return worst


# ---------------------------------------------------------------------------
# Average-player baselines

def group_weights(dataset: ShotDataset,
                  groups: list[SubgroupKey] | None = None,
                  by: str = "players") -> dict[SubgroupKey, float]:
    """Proportion of players (or shots) belonging to each baseline group."""
    groups = groups if groups is not None else standard_groups()
    counts = {g: 0 for g in groups}
    if by == "players":
        for profile in dataset.players.values():
            key = assign_groups(profile,
                                TeamRating(profile.player_id, float("nan"),
                                           "other"))
            for g in groups:
                if g.matches(key):
                    counts[g] += 1
    elif by == "shots":
        for key in shot_group_keys(dataset):
            for g in groups:
                if g.matches(key):
                    counts[g] += 1
    else:
        raise ValueError("by must be 'players' or 'shots'")
    total = sum(counts.values())
    if total == 0:
        raise ValueError("no players or shots to derive weights from")
    return {g: c / total for g, c in counts.items()}


def weighted_average_player(mc: MultiCalibratedModel, X: np.ndarray,
                            weights: dict[SubgroupKey, float]) -> float:
    """Cumulative xG mixing the baseline groups by the given weights."""
    total_w = sum(weights.values())
    if abs(total_w - 1.0) > 1e-9:
        raise ValueError(f"group weights sum to {total_w}, expected 1")
    X = np.atleast_2d(X)
    total = 0.0
    for g, w in weights.items():
        total += w * float(np.sum(mc.predict_as_group(X, g)))
    return total


@dataclass(frozen=True)
class BaselineReport:
    """Cumulative xG and GAX for one shot set under each fitted baseline,
    plus the weighted average player when weights were supplied."""

    n_shots: int
    goals: int
    cum_xg: dict  # SubgroupKey -> float
    gax: dict  # SubgroupKey -> float
    weighted_cum_xg: float | None = None
    weighted_gax: float | None = None
    weights_by: str | None = None

    def rows(self) -> list[dict]:
        out = [{"position": g.position, "volume": g.volume_tier,
                "cum_xg": self.cum_xg[g], "gax": self.gax[g]}
               for g in self.cum_xg]
        if self.weighted_cum_xg is not None:
            out.append({"position": "weighted", "volume": self.weights_by,
                        "cum_xg": self.weighted_cum_xg,
                        "gax": self.weighted_gax})
        return out


def baseline_report(mc: MultiCalibratedModel, X: np.ndarray, goals: int,
                    weights: dict[SubgroupKey, float] | None = None,
                    weights_by: str | None = None) -> BaselineReport:
    """Evaluate a shot set against every fitted baseline group."""
    X = np.atleast_2d(X)
    cum_xg = {}
    gax = {}
    for g in mc.groups:
        cum = float(np.sum(mc.predict_as_group(X, g)))
        cum_xg[g] = cum
        gax[g] = goals - cum
    weighted_cum = weighted_g = None
    if weights is not None:
        weighted_cum = weighted_average_player(mc, X, weights)
        weighted_g = goals - weighted_cum
    return BaselineReport(n_shots=int(X.shape[0]), goals=int(goals),
                          cum_xg=cum_xg, gax=gax,
                          weighted_cum_xg=weighted_cum,
                          weighted_gax=weighted_g, weights_by=weights_by)


def _group_label(g: SubgroupKey) -> str:
    parts = [g.position or "*", g.volume_tier or "*"]
    if g.team_tier:
        parts.append(g.team_tier)
    return "/".join(parts)


# ---------------------------------------------------------------------------
# Season leaderboard

def spearman(a, b) -> float:
    """Rank correlation with average ranks for ties."""
    ra = average_ranks(np.asarray(a, dtype=float))
    rb = average_ranks(np.asarray(b, dtype=float))
    ra = ra - ra.mean()
    rb = rb - rb.mean()
    denom = np.sqrt(np.sum(ra ** 2) * np.sum(rb ** 2))
    return float(np.sum(ra * rb) / denom) if denom > 0 else float("nan")


def gax_leaderboard(season: ShotDataset, base: XgModel,
                    mc: MultiCalibratedModel,
                    min_goals: int = 5) -> list[dict]:
    """Per-player season table under the standard and multi-calibrated
    models (plus provider xG when shots carry it), sorted by standard GAX.

    Players below min_goals goals are excluded; an empty table is valid.
    """
    X, _ = dataset_matrices(season.shots)
    if X.shape[0] == 0:
        return []
    keys = shot_group_keys(season)
    p_std = base.predict(X)
    p_mc = mc.replay(p_std, keys)

    rows: dict[str, dict] = {}
    for i, s in enumerate(season.shots):
        row = rows.setdefault(s.player_id, {
            "player_id": s.player_id,
            "name": season.players.get(s.player_id,
                                       PlayerProfile(s.player_id, 0, 0.0,
                                                     "midfielder")).name,
            "goals": 0, "n_shots": 0,
            "xg_standard": 0.0, "xg_multicalibrated": 0.0,
            "xg_provider": 0.0, "has_provider": True,
        })
        row["goals"] += int(s.is_goal)
        row["n_shots"] += 1
        row["xg_standard"] += float(p_std[i])
        row["xg_multicalibrated"] += float(p_mc[i])
        if s.provider_xg is None:
            row["has_provider"] = False
        else:
            row["xg_provider"] += float(s.provider_xg)

    table = []
    for row in rows.values():
        if row["goals"] < min_goals:
            continue
        row["gax_standard"] = row["goals"] - row["xg_standard"]
        row["gax_multicalibrated"] = row["goals"] - row["xg_multicalibrated"]
        row["pct_over_standard"] = _pct_over(row["goals"],
                                             row["xg_standard"])
        row["pct_over_multicalibrated"] = _pct_over(
            row["goals"], row["xg_multicalibrated"])
        if row.pop("has_provider"):
            row["gax_provider"] = row["goals"] - row["xg_provider"]
            row["pct_over_provider"] = _pct_over(row["goals"],
                                                 row["xg_provider"])
        else:
            row.pop("xg_provider")
        table.append(row)
    table.sort(key=lambda r: (-r["gax_standard"], r["player_id"]))
    return table


def _pct_over(goals: int, xg: float) -> float:
    return 100.0 * (goals - xg) / xg if xg > 0 else float("nan")


# ---------------------------------------------------------------------------
# Serialization

def _key_to_json(g: SubgroupKey) -> dict:
    return {"volume_tier": g.volume_tier, "position": g.position,
            "team_tier": g.team_tier}


def _key_from_json(d: dict) -> SubgroupKey:
    return SubgroupKey(volume_tier=d["volume_tier"], position=d["position"],
                       team_tier=d["team_tier"])


def save_multicalibrated(mc: MultiCalibratedModel, path: str | Path) -> None:
    doc = {
        "base_model": {
            "feature_names": list(mc.base.feature_names),
            "weights": [float(w) for w in mc.base.weights],
            "intercept": float(mc.base.intercept),
            "penalty": float(mc.base.penalty_c),
            "meta": mc.base.meta,
        },
        "bin_edges": list(mc.schema.edges),
        "groups": [_key_to_json(g) for g in mc.groups],
        "updates": [{"group": _key_to_json(u.group), "bin": u.bin_index,
                     "delta": u.delta, "iter": u.iteration}
                    for u in mc.updates],
        "tolerance": mc.tolerance,
        "max_iter": mc.max_iterations,
        "converged": mc.converged,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_multicalibrated(path: str | Path) -> MultiCalibratedModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    bm = doc["base_model"]
    base = XgModel(weights=np.array(bm["weights"], dtype=float),
                   intercept=float(bm["intercept"]),
                   penalty_c=float(bm.get("penalty", 1.0)),
                   meta=bm.get("meta", {}),
                   feature_names=tuple(bm["feature_names"]))
    return MultiCalibratedModel(
        base=base,
        groups=[_key_from_json(d) for d in doc["groups"]],
        updates=[CalibrationUpdate(group=_key_from_json(u["group"]),
                                   bin_index=int(u["bin"]),
                                   delta=float(u["delta"]),
                                   iteration=int(u["iter"]))
                 for u in doc["updates"]],
        schema=BinSchema(edges=tuple(doc["bin_edges"])),
        tolerance=float(doc["tolerance"]),
        max_iterations=int(doc["max_iter"]),
        converged=bool(doc["converged"]),
    )
