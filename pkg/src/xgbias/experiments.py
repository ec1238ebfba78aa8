"""End-to-end simulation experiments: GAX noise floors over (alpha, n)
grids, per-player overperformance profiles, training-set augmentation with
synthetic skilled shots, and skill-mixture training sets."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import ShotDataset, dataset_matrices
from .model import (BODY_PARTS, XgModel, feature_matrix_from_locations,
                    train_logistic)
from .sampler import (SpatialShotDistribution, _sample_arrays,
                      build_distribution, simulate_gax)
from .util import derive_seed, rng_stream

logger = logging.getLogger(__name__)

DEFAULT_ALPHAS = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
DEFAULT_NS = (50, 100, 150, 200, 250, 300)
DEFAULT_REPS = 10_000
MIXTURE_ALPHA_LEVELS = (-5.0, 0.0, 10.0, 20.0)
MAX_RETRAIN_FAILURE_RATE = 0.10


class ExperimentError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Season-level GAX noise floor

@dataclass
class H1Result:
    """Per-cell GAX statistics over a grid of skill boosts and shot counts.

    Arrays are indexed [alpha_index, n_index].
    """

    alphas: tuple
    ns: tuple
    mean_gax: np.ndarray
    std_gax: np.ndarray
    p_overperform: np.ndarray
    se: np.ndarray
    reps: int
    seed: int

    def cell(self, alpha: float, n: int) -> dict:
        ai = self.alphas.index(alpha)
        ni = self.ns.index(n)
        return {
            "mean_gax": float(self.mean_gax[ai, ni]),
            "std_gax": float(self.std_gax[ai, ni]),
            "p_overperform": float(self.p_overperform[ai, ni]),
            "se": float(self.se[ai, ni]),
        }

    def rows(self) -> list[dict]:
        out = []
        for ai, a in enumerate(self.alphas):
            for ni, n in enumerate(self.ns):
                out.append({"alpha": a, "n": n, **self.cell(a, n)})
        return out


def run_h1(model: XgModel, dist: SpatialShotDistribution,
           alphas=DEFAULT_ALPHAS, ns=DEFAULT_NS, reps: int = DEFAULT_REPS,
           seed: int = 0) -> H1Result:
    """Simulate seasons of n shots at skill boost alpha and tabulate the
    GAX distribution per grid cell.

    Each cell gets its own seed stream derived from (seed, cell indices),
    so cells can be computed in any order.
    """
    alphas = tuple(float(a) for a in alphas)
    ns = tuple(int(n) for n in ns)
    shape = (len(alphas), len(ns))
    mean = np.empty(shape)
    std = np.empty(shape)
    p_over = np.empty(shape)
    se = np.empty(shape)
    for ai, alpha in enumerate(alphas):
        for ni, n in enumerate(ns):
            cell_seed = derive_seed(seed, ai, ni)
            gax = simulate_gax(dist, model, alpha, n, reps, cell_seed)
            mean[ai, ni] = gax.mean()
            std[ai, ni] = gax.std(ddof=1)
            p = float(np.mean(gax > 0.0))
            p_over[ai, ni] = p
            se[ai, ni] = np.sqrt(p * (1.0 - p) / reps)
    return H1Result(alphas=alphas, ns=ns, mean_gax=mean, std_gax=std,
                    p_overperform=p_over, se=se, reps=reps, seed=seed)


# ---------------------------------------------------------------------------
# Player-specific shot profiles

@dataclass
class PlayerProfileResult:
    """Overperformance probability deltas against the global shot
    distribution, per player and (alpha, n) cell."""

    alphas: tuple
    ns: tuple
    p_global: np.ndarray
    deltas: dict  # player id -> array[alpha_index, n_index]
    reps: int
    seed: int
    skipped: tuple = ()


def run_player_profiles(model: XgModel, player_shot_sets: dict,
                        alphas=DEFAULT_ALPHAS, ns=DEFAULT_NS,
                        reps: int = DEFAULT_REPS, seed: int = 0,
                        global_shots=None) -> PlayerProfileResult:
    """Compare each player's spatial profile against the global one.

    The global distribution defaults to the union of all players' shots.
    delta[player, alpha, n] = P(GAX > 0 | player profile) − P(GAX > 0 |
    global profile). Players with no shots are skipped with a warning.
    """
    alphas = tuple(float(a) for a in alphas)
    ns = tuple(int(n) for n in ns)
    if global_shots is None:
        global_shots = [s for shots in player_shot_sets.values()
                        for s in shots]
    global_dist = build_distribution(global_shots)

    def grid_for(dist: SpatialShotDistribution, tag: int) -> np.ndarray:
        out = np.empty((len(alphas), len(ns)))
        for ai in range(len(alphas)):
            for ni in range(len(ns)):
                cell_seed = derive_seed(seed, tag, ai, ni)
                gax = simulate_gax(dist, model, alphas[ai], ns[ni], reps,
                                   cell_seed)
                out[ai, ni] = np.mean(gax > 0.0)
        return out

    # Tag 0 is reserved for the global grid; players are numbered from 1 in
    # the sorted order of their ids so results do not depend on dict order.
    p_global = grid_for(global_dist, 0)
    deltas = {}
    skipped = []
    for offset, player_id in enumerate(sorted(player_shot_sets), start=1):
        shots = player_shot_sets[player_id]
        if len(shots) == 0:
            logger.warning("player %s has no shots; skipped", player_id)
            skipped.append(player_id)
            continue
        dist = build_distribution(shots)
        deltas[player_id] = grid_for(dist, offset) - p_global
    return PlayerProfileResult(alphas=alphas, ns=ns, p_global=p_global,
                               deltas=deltas, reps=reps, seed=seed,
                               skipped=tuple(skipped))


# ---------------------------------------------------------------------------
# Training-set augmentation

@dataclass
class AugmentationResult:
    """Evaluation GAX after retraining with m synthetic skilled shots."""

    alpha: float
    m_values: tuple
    mean_gax: np.ndarray
    ci95_low: np.ndarray
    ci95_high: np.ndarray
    runs: int
    failures: tuple
    seed: int

    def rows(self) -> list[dict]:
        return [{"alpha": self.alpha, "m": m,
                 "mean_gax": float(self.mean_gax[i]),
                 "ci95_low": float(self.ci95_low[i]),
                 "ci95_high": float(self.ci95_high[i]),
                 "failures": self.failures[i]}
                for i, m in enumerate(self.m_values)]


def run_training_augmentation(base_train: ShotDataset, eval_shots,
                              alpha: float, m_values, runs: int = 100,
                              seed: int = 0,
                              penalty_c: float = 1.0) -> AugmentationResult:
    """Retrain the model after adding m synthetic shots drawn from the
    evaluation player's own spatial profile, labeled at skill boost alpha,
    and track that player's GAX on their real shots.

    base_train must not contain the evaluation player's shots. m = 0 is
    deterministic (no sampling, a single fit). Runs whose retraining fails
    are discarded; more than 10% failures for any m aborts the experiment.
    """
    m_values = tuple(int(m) for m in m_values)
    if any(m < 0 for m in m_values):
        raise ValueError("m values must be non-negative")
    if runs < 1:
        raise ValueError("runs must be >= 1")

    eval_shots = list(eval_shots)
    X_base, y_base = dataset_matrices(base_train.shots)
    base_model = train_logistic(X_base, y_base, penalty_c=penalty_c)
    player_dist = build_distribution(eval_shots)
    X_eval = feature_matrix_from_locations(
        np.array([s.start_x for s in eval_shots], dtype=float),
        np.array([s.start_y for s in eval_shots], dtype=float),
        np.array([BODY_PARTS.index(s.body_part) for s in eval_shots]))
    goals = float(sum(s.is_goal for s in eval_shots))

    def eval_gax(model: XgModel) -> float:
        return goals - float(np.sum(model.predict(X_eval)))

    gax0 = eval_gax(base_model)
    mean = np.empty(len(m_values))
    lo = np.empty(len(m_values))
    hi = np.empty(len(m_values))
    failures = []
    for mi, m in enumerate(m_values):
        if m == 0:
            mean[mi] = gax0
            lo[mi] = gax0
            hi[mi] = gax0
            failures.append(0)
            continue
        vals = []
        failed = 0
        for r in range(runs):
            rng = rng_stream(derive_seed(seed, mi), r)
            X_synth, _, _, outcomes = _sample_arrays(player_dist, base_model,
                                                     m, alpha, rng)
            X_aug = np.vstack([X_base, X_synth])
            y_aug = np.concatenate([y_base, outcomes.astype(float)])
            try:
                refit = train_logistic(X_aug, y_aug, penalty_c=penalty_c)
            except Exception as exc:
                failed += 1
                logger.warning("retrain failed (m=%d, run %d): %s",
                               m, r, exc)
                continue
            vals.append(eval_gax(refit))
        if failed > MAX_RETRAIN_FAILURE_RATE * runs:
            raise ExperimentError(
                f"{failed}/{runs} retraining failures at m={m}")
        vals = np.asarray(vals)
        mean[mi] = vals.mean()
        half = 1.96 * vals.std(ddof=1) / np.sqrt(vals.size) \
            if vals.size > 1 else 0.0
        lo[mi] = mean[mi] - half
        hi[mi] = mean[mi] + half
        failures.append(failed)
    return AugmentationResult(alpha=float(alpha), m_values=m_values,
                              mean_gax=mean, ci95_low=lo, ci95_high=hi,
                              runs=runs, failures=tuple(failures), seed=seed)


# ---------------------------------------------------------------------------
# Skill-mixture training sets

@dataclass
class MixtureResult:
    """Expected GAX grids per training allocation.

    mean_gax[k][alpha_test_index, n_index] is the average observed GAX of
    test seasons scored by the model trained on allocation k; gt_gax holds
    the same seasons scored by the generator model.
    """

    allocations: tuple  # tuples of proportions over alpha_levels
    alpha_levels: tuple
    test_alphas: tuple
    test_ns: tuple
    mean_gax: list
    se_gax: list
    gt_gax: list
    train_size: int
    reps: int
    seed: int

    def rows(self) -> list[dict]:
        out = []
        for k, props in enumerate(self.allocations):
            label = "/".join(f"{p:g}" for p in props)
            for ti, a in enumerate(self.test_alphas):
                for ni, n in enumerate(self.test_ns):
                    out.append({
                        "allocation": label,
                        "alpha_test": a,
                        "n": n,
                        "mean_gax": float(self.mean_gax[k][ti, ni]),
                        "se": float(self.se_gax[k][ti, ni]),
                        "mean_gax_groundtruth": float(self.gt_gax[k][ti, ni]),
                    })
        return out


def _allocation_counts(allocation, n_levels: int, train_size: int):
    """Convert a shot-count (or proportion) vector into exact counts that
    sum to train_size, preserving proportions."""
    if len(allocation) != n_levels:
        raise ValueError(
            f"allocation has {len(allocation)} entries for {n_levels} "
            "skill levels")
    total = float(sum(allocation))
    if total <= 0 or any(a < 0 for a in allocation):
        raise ValueError("allocation entries must be non-negative with a "
                         "positive sum")
    props = [a / total for a in allocation]
    counts = [int(round(p * train_size)) for p in props]
    counts[int(np.argmax(counts))] += train_size - sum(counts)
    return props, counts


def run_skill_mixture(model: XgModel, dist: SpatialShotDistribution,
                      allocations, alpha_levels=MIXTURE_ALPHA_LEVELS,
                      test_alphas=(0.0, 10.0, 20.0), test_ns=(100,),
                      train_size: int = 100_000, reps: int = DEFAULT_REPS,
                      seed: int = 0,
                      penalty_c: float = 1.0) -> MixtureResult:
    """Train on synthetic shot populations mixing several finishing-skill
    levels, then measure the GAX such models assign to fresh test seasons.

    Allocations are interpreted as proportions over alpha_levels and
    rescaled to train_size shots, so a scaled-down run keeps the same
    population structure. The generator model doubles as the ground truth
    for the comparison grid.
    """
    alpha_levels = tuple(float(a) for a in alpha_levels)
    test_alphas = tuple(float(a) for a in test_alphas)
    test_ns = tuple(int(n) for n in test_ns)
    normalized = []
    mean_out = []
    se_out = []
    gt_out = []
    for k, allocation in enumerate(allocations):
        props, counts = _allocation_counts(allocation, len(alpha_levels),
                                           train_size)
        normalized.append(tuple(props))
        blocks_X = []
        blocks_y = []
        for li, (level, count) in enumerate(zip(alpha_levels, counts)):
            if count == 0:
                continue
            rng = rng_stream(derive_seed(seed, k, li))
            X_l, _, _, y_l = _sample_arrays(dist, model, count, level, rng)
            blocks_X.append(X_l)
            blocks_y.append(y_l.astype(float))
        mixture = train_logistic(np.vstack(blocks_X),
                                 np.concatenate(blocks_y),
                                 penalty_c=penalty_c)
        mean_g = np.empty((len(test_alphas), len(test_ns)))
        se_g = np.empty_like(mean_g)
        gt_g = np.empty_like(mean_g)
        for ti, alpha_t in enumerate(test_alphas):
            for ni, n in enumerate(test_ns):
                cell_seed = derive_seed(seed, k, len(alpha_levels), ti, ni)
                obs = np.empty(reps)
                gt = np.empty(reps)
                for r in range(reps):
                    rng = rng_stream(cell_seed, r)
                    X_t, xg_raw, _, outcomes = _sample_arrays(
                        dist, model, n, alpha_t, rng)
                    goals = float(outcomes.sum())
                    obs[r] = goals - float(np.sum(mixture.predict(X_t)))
                    gt[r] = goals - float(xg_raw.sum())
                mean_g[ti, ni] = obs.mean()
                se_g[ti, ni] = obs.std(ddof=1) / np.sqrt(reps)
                gt_g[ti, ni] = gt.mean()
        mean_out.append(mean_g)
        se_out.append(se_g)
        gt_out.append(gt_g)
    return MixtureResult(allocations=tuple(normalized),
                         alpha_levels=alpha_levels, test_alphas=test_alphas,
                         test_ns=test_ns, mean_gax=mean_out, se_gax=se_out,
                         gt_gax=gt_out, train_size=train_size, reps=reps,
                         seed=seed)
