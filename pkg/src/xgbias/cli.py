"""Command-line entry point: ingestion, training, simulation experiments,
finishing reports, calibration diagnostics, multi-calibration, and
figure-data emission.

Configuration comes from an optional TOML file plus flags; flags win.
Commands that draw random numbers refuse to run without an explicit seed.
Every run writes a manifest (resolved config, input hashes, tool version,
duration, output list) next to its outputs. Exit codes: 0 success, 2
invalid configuration, 3 data errors, 4 numerical non-convergence (partial
outputs are written and flagged in the manifest).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import re
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .data import (NAME_ALIASES, ShotDataset, dataset_matrices,
                   load_club_elo, load_team_ratings, read_cache,
                   stratified_split, write_cache)
from .experiments import (ExperimentError, run_h1, run_player_profiles,
                          run_skill_mixture, run_training_augmentation)
from .goals import ShotFilter, filter_shots, poisson_binomial, \
    tail_probabilities
from .model import (BODY_PARTS, evaluate, goal_geometry, load_model,
                    save_model, train_logistic)
from .multicalib import (MultiCalibratedModel, baseline_report,
                         fit_multicalibration, gax_leaderboard,
                         group_weights, load_multicalibrated,
                         max_cell_violation, save_multicalibrated, spearman,
                         standard_groups)
from .sampler import build_distribution
from .statsbomb import ParseFilters, parse_event_data, select_competitions
from .subgroups import (SubgroupKey, calibration_curve, shot_volume_tiers)
from .util import fmt_float, sha256_file

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

DATA_DIR_ENV = "XGBIAS_DATA_DIR"


class ConfigError(ValueError):
    """Invalid or incomplete run configuration; carries the field name."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class DataError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Small parsing helpers

def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in str(text).split(",") if t.strip() != "")


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in str(text).split(",") if t.strip() != "")


def _parse_allocations(text: str) -> list[tuple[float, ...]]:
    """Semicolon-separated allocations, slash-separated counts:
    "100000/800000/50000/50000;50000/750000/100000/100000"."""
    out = []
    for block in str(text).split(";"):
        if block.strip() == "":
            continue
        out.append(tuple(float(t) for t in block.split("/")))
    if not out:
        raise ConfigError("allocations", "no allocations given")
    return out


def parse_filter_spec(spec: str) -> ShotFilter:
    """Parse "deflected=exclude,band=25-35yd,bodypart=foot+head"."""
    exclude_deflected = False
    body_parts = None
    band = None
    for part in str(spec).split(","):
        part = part.strip()
        if not part:
            continue
        key, sep, val = part.partition("=")
        if not sep:
            raise ConfigError("filters", f"expected key=value, got {part!r}")
        key, val = key.strip(), val.strip()
        if key == "deflected":
            if val not in ("exclude", "keep"):
                raise ConfigError("filters",
                                  f"deflected must be exclude|keep, got {val!r}")
            exclude_deflected = val == "exclude"
        elif key == "bodypart":
            parts_set = frozenset(val.split("+"))
            bad = parts_set - set(BODY_PARTS)
            if bad:
                raise ConfigError("filters",
                                  f"unknown body parts {sorted(bad)}")
            body_parts = parts_set
        elif key == "band":
            m = re.fullmatch(r"([0-9.]+)-([0-9.]+)(m|yd)", val)
            if not m:
                raise ConfigError("filters",
                                  f"band must look like 25-35yd or 5-11m, "
                                  f"got {val!r}")
            band = (float(m.group(1)), float(m.group(2)), m.group(3))
        else:
            raise ConfigError("filters", f"unknown filter key {key!r}")
    return ShotFilter(exclude_deflected=exclude_deflected,
                      body_parts=body_parts, distance_band=band)


def parse_group(text: str) -> SubgroupKey:
    """Parse "attacker/high" into a position x volume baseline key."""
    parts = str(text).split("/")
    if len(parts) != 2:
        raise ConfigError("as_group",
                          f"expected position/volume, got {text!r}")
    return SubgroupKey(volume_tier=parts[1], position=parts[0],
                       team_tier=None)


# ---------------------------------------------------------------------------
# Output helpers

def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return fmt_float(v)
    if v is None:
        return ""
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def write_json(path: Path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (tuple, list)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def write_manifest(out_dir: Path, command: str, cfg: dict,
                   inputs: list[str | Path], outputs: list[str],
                   duration_s: float, partial: bool = False) -> Path:
    """Record everything needed to replay the run and audit its inputs."""
    doc = {
        "command": command,
        "version": __version__,
        "config": {k: _jsonable(v) for k, v in sorted(cfg.items())},
        "inputs": {str(p): sha256_file(p) for p in inputs
                   if p and Path(p).is_file()},
        "outputs": sorted(outputs),
        "duration_s": round(duration_s, 3),
        "partial": partial,
    }
    path = out_dir / "manifest.json"
    write_json(path, doc)
    return path


def verify_manifest(manifest_path: str | Path) -> list[str]:
    """Names of recorded input files whose content hash no longer matches."""
    doc = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    stale = []
    for path, digest in doc.get("inputs", {}).items():
        if not Path(path).is_file() or sha256_file(path) != digest:
            stale.append(path)
    return stale


# ---------------------------------------------------------------------------
# Config resolution

def _toml_tables(doc: dict, command: str) -> dict:
    """Flat keys, then the command's table ("simulate-h1" -> [simulate.h1]),
    later sources winning."""
    merged = {k: v for k, v in doc.items() if not isinstance(v, dict)}
    node = doc
    for part in command.split("-"):
        nxt = node.get(part)
        if not isinstance(nxt, dict):
            return merged
        node = nxt
    merged.update({k: v for k, v in node.items() if not isinstance(v, dict)})
    return merged


_SKIP_ARGS = {"command", "config", "verbose"}


def resolve_config(args: argparse.Namespace, defaults: dict,
                   stochastic: bool) -> dict:
    cfg = dict(defaults)
    if getattr(args, "config", None):
        cfg_path = Path(args.config)
        if not cfg_path.is_file():
            raise ConfigError("config", f"no such file: {cfg_path}")
        with open(cfg_path, "rb") as fh:
            try:
                doc = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError("config", f"invalid TOML: {exc}") from exc
        for key, value in _toml_tables(doc, args.command).items():
            if key not in cfg:
                raise ConfigError(key, "unknown configuration key for "
                                  f"command {args.command}")
            cfg[key] = value
    for key, value in vars(args).items():
        if key in _SKIP_ARGS or key not in cfg:
            continue
        if value is not None:
            cfg[key] = value
    if stochastic and cfg.get("seed") is None:
        raise ConfigError("seed", "this command draws random numbers; "
                          "an explicit --seed is required")
    return cfg


def _require(cfg: dict, field: str):
    value = cfg.get(field)
    if value in (None, ""):
        raise ConfigError(field, "required")
    return value


def _require_file(cfg: dict, field: str) -> Path:
    path = Path(_require(cfg, field))
    if not path.is_file():
        raise ConfigError(field, f"no such file: {path}")
    return path


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg.get("out_dir") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_cache(path: Path) -> ShotDataset:
    try:
        return read_cache(path)
    except (ValueError, KeyError, OSError) as exc:
        raise DataError(f"failed to read cache {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Command implementations. Each returns (inputs, outputs, partial).

def cmd_ingest(cfg: dict) -> tuple[list, list, bool]:
    data_dir = cfg.get("data_dir") or os.environ.get(DATA_DIR_ENV)
    if not data_dir:
        raise ConfigError("data_dir", "give --data-dir or set "
                          f"{DATA_DIR_ENV}")
    root = Path(data_dir)
    if not (root / "competitions.json").is_file():
        raise ConfigError("data_dir",
                          f"{root} does not contain competitions.json")
    out = _out_dir(cfg)
    try:
        selection = select_competitions(
            root,
            competition_ids=_parse_ints(cfg["competitions"]),
            season_names=tuple(str(cfg["seasons"]).split(",")))
        filters = ParseFilters(player_id=cfg.get("player"))
        dataset = parse_event_data(root, selection, filters)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"ingestion failed: {exc}") from exc
    if not dataset.shots:
        raise DataError("no shots survived ingestion filters")

    inputs: list = [root / "competitions.json"]
    if cfg.get("elo_csv"):
        elo_path = _require_file(cfg, "elo_csv")
        inputs.append(elo_path)
        try:
            rows = load_club_elo(elo_path)
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"failed to read ratings {elo_path}: {exc}") \
                from exc
        names = {tid: t.name for tid, t in dataset.teams.items()}
        dataset = replace(dataset,
                          teams=load_team_ratings(rows, names, NAME_ALIASES))

    cache = out / str(cfg["cache_name"])
    write_cache(dataset, cache)
    outputs = [cache.name, cache.with_suffix(".players.csv").name,
               cache.with_suffix(".teams.csv").name,
               cache.with_suffix(".provider_xg.csv").name]
    print(f"ingested {len(dataset.shots)} shots "
          f"({dataset.n_goals} goals) from {len(dataset.players)} players")
    return inputs, outputs, False


def cmd_train(cfg: dict) -> tuple[list, list, bool]:
    cache = _require_file(cfg, "cache")
    out = _out_dir(cfg)
    dataset = _load_cache(cache)
    test_fraction = float(cfg["test_fraction"])
    if test_fraction > 0:
        train_set, test_set = stratified_split(dataset, test_fraction,
                                               int(cfg["seed"]))
    else:
        train_set, test_set = dataset, None
    X, y = dataset_matrices(train_set.shots)
    model = train_logistic(X, y, penalty_c=float(cfg["penalty"]))
    model_path = out / "model.json"
    save_model(model, model_path)

    metrics = {"n_train": int(X.shape[0]),
               "converged": bool(model.meta.get("converged", True)),
               "iterations": model.meta.get("iterations")}
    if test_set is not None:
        X_t, y_t = dataset_matrices(test_set.shots)
        report = evaluate(model, X_t, y_t)
        metrics.update(n_test=report.n_test, auroc=report.auroc,
                       brier=report.brier)
        print(f"held-out AUROC {report.auroc:.4f}  "
              f"Brier {report.brier:.4f}  (n={report.n_test})")
    write_json(out / "metrics.json", metrics)
    partial = not metrics["converged"]
    if partial:
        logger.warning("Newton did not converge in "
                       "%s iterations", model.meta.get("iterations"))
    return [cache], ["model.json", "metrics.json"], partial


def cmd_evaluate(cfg: dict) -> tuple[list, list, bool]:
    cache = _require_file(cfg, "cache")
    model_path = _require_file(cfg, "model")
    out = _out_dir(cfg)
    dataset = _load_cache(cache)
    model = load_model(model_path)
    test_fraction = float(cfg["test_fraction"])
    if test_fraction > 0:
        _, shots = stratified_split(dataset, test_fraction,
                                    int(cfg["seed"]))
    else:
        shots = dataset
    X, y = dataset_matrices(shots.shots)
    report = evaluate(model, X, y)
    write_json(out / "metrics.json",
               {"auroc": report.auroc, "brier": report.brier,
                "n_test": report.n_test})
    print(f"AUROC {report.auroc:.4f}  Brier {report.brier:.4f}  "
          f"(n={report.n_test})")
    return [cache, model_path], ["metrics.json"], False


def cmd_simulate_h1(cfg: dict) -> tuple[list, list, bool]:
    cache = _require_file(cfg, "cache")
    model_path = _require_file(cfg, "model")
    out = _out_dir(cfg)
    dataset = _load_cache(cache)
    model = load_model(model_path)
    dist = build_distribution(dataset.shots)
    result = run_h1(model, dist,
                    alphas=_parse_floats(cfg["alphas"]),
                    ns=_parse_ints(cfg["shots"]),
                    reps=int(cfg["reps"]), seed=int(cfg["seed"]))
    rows = [(r["alpha"], r["n"], r["mean_gax"], r["std_gax"],
             r["p_overperform"], r["se"]) for r in result.rows()]
    write_csv(out / "h1.csv",
              ["alpha", "n", "mean_gax", "std_gax", "p_overperform", "se"],
              rows)
    return [cache, model_path], ["h1.csv"], False


def cmd_simulate_profiles(cfg: dict) -> tuple[list, list, bool]:
    cache = _require_file(cfg, "cache")
    model_path = _require_file(cfg, "model")
    out = _out_dir(cfg)
    dataset = _load_cache(cache)
    model = load_model(model_path)
    if cfg.get("players"):
        wanted = [p.strip() for p in str(cfg["players"]).split(",")]
    else:
        wanted = sorted({s.player_id for s in dataset.shots})
    sets = {pid: dataset.shots_by_player(pid) for pid in wanted}
    result = run_player_profiles(model, sets,
                                 alphas=_parse_floats(cfg["alphas"]),
                                 ns=_parse_ints(cfg["shots"]),
                                 reps=int(cfg["reps"]),
                                 seed=int(cfg["seed"]),
                                 global_shots=dataset.shots)
    rows = []
    for pid in sorted(result.deltas):
        grid = result.deltas[pid]
        for ai, alpha in enumerate(result.alphas):
            for ni, n in enumerate(result.ns):
                rows.append((pid, alpha, n, float(grid[ai, ni]),
                             float(result.p_global[ai, ni])))
    write_csv(out / "profiles.csv",
              ["player_id", "alpha", "n", "delta_probability", "p_global"],
              rows)
    return [cache, model_path], ["profiles.csv"], False


def cmd_simulate_h3a(cfg: dict) -> tuple[list, list, bool]:
    cache = _require_file(cfg, "cache")
    out = _out_dir(cfg)
    dataset = _load_cache(cache)
    target = str(_require(cfg, "target_player"))
    eval_shots = dataset.shots_by_player(target)
    if not eval_shots:
        raise DataError(f"player {target} has no shots in {cache}")
    base_train = dataset.exclude_player(target)
    result = run_training_augmentation(
        base_train, eval_shots, alpha=float(cfg["alpha"]),
        m_values=_parse_ints(cfg["m_values"]), runs=int(cfg["runs"]),
        seed=int(cfg["seed"]), penalty_c=float(cfg["penalty"]))
    rows = [(r["alpha"], r["m"], r["mean_gax"], r["ci95_low"],
             r["ci95_high"], r["failures"]) for r in result.rows()]
    write_csv(out / "augmentation.csv",
              ["alpha", "m", "mean_gax", "ci95_low", "ci95_high",
               "failures"], rows)
    return [cache], ["augmentation.csv"], False


def cmd_simulate_h3b(cfg: dict) -> tuple[list, list, bool]:
    cache = _require_file(cfg, "cache")
    model_path = _require_file(cfg, "model")
    out = _out_dir(cfg)
    dataset = _load_cache(cache)
    model = load_model(model_path)
    dist = build_distribution(dataset.shots)
    train_size = 1_000_000 if cfg.get("full") else int(cfg["train_size"])
    result = run_skill_mixture(
        model, dist, allocations=_parse_allocations(cfg["allocations"]),
        alpha_levels=_parse_floats(cfg["alpha_levels"]),
        test_alphas=_parse_floats(cfg["test_alphas"]),
        test_ns=_parse_ints(cfg["test_ns"]), train_size=train_size,
        reps=int(cfg["reps"]), seed=int(cfg["seed"]),
        penalty_c=float(cfg["penalty"]))
    rows = [(r["allocation"], r["alpha_test"], r["n"], r["mean_gax"],
             r["se"], r["mean_gax_groundtruth"]) for r in result.rows()]
    write_csv(out / "mixture.csv",
              ["allocation", "alpha_test", "n", "mean_gax", "se",
               "mean_gax_groundtruth"], rows)
    return [cache, model_path], ["mixture.csv"], False


def cmd_finishing(cfg: dict) -> tuple[list, list, bool]:
    cache = _require_file(cfg, "cache")
    model_path = _require_file(cfg, "model")
    out = _out_dir(cfg)
    dataset = _load_cache(cache)
    model = load_model(model_path)
    player = str(_require(cfg, "player"))
    shots = dataset.shots_by_player(player)
    if not shots:
        raise DataError(f"player {player} has no shots in {cache}")
    shot_filter = parse_filter_spec(cfg.get("filters") or "")
    X, _ = dataset_matrices(shots)
    xgs = model.predict(X)
    distances = [goal_geometry(s.start_x, s.start_y)[0] for s in shots]
    report = filter_shots(list(zip(shots, xgs)), shot_filter,
                          distances=distances)
    if not report.kept:
        raise DataError("no shots left after filtering")
    kept_shots = [s for s, _ in report.kept]
    kept_xgs = [x for _, x in report.kept]
    dist = poisson_binomial(kept_xgs)
    observed = cfg.get("observed")
    observed = int(observed) if observed is not None \
        else sum(s.is_goal for s in kept_shots)
    tails = tail_probabilities(dist, observed)
    write_csv(out / "dist.csv", ["k", "probability"],
              [(k, float(p)) for k, p in enumerate(dist.pmf)])
    write_json(out / "summary.json", {
        "player": player,
        "n": dist.n_shots,
        "total_xg": dist.total_xg,
        "observed": observed,
        "p_at_most": tails["p_at_most"],
        "p_at_least": tails["p_at_least"],
        "removed": {"deflected": report.removed_deflected,
                    "body_part": report.removed_body_part,
                    "distance": report.removed_distance},
    })
    print(f"{player}: {dist.n_shots} shots, total xG {dist.total_xg:.2f}, "
          f"observed {observed} (p_at_most {tails['p_at_most']:.3f})")
    return [cache, model_path], ["dist.csv", "summary.json"], False


def cmd_calibration(cfg: dict) -> tuple[list, list, bool]:
    cache = _require_file(cfg, "cache")
    model_path = _require_file(cfg, "model")
    out = _out_dir(cfg)
    group_by = str(cfg["group_by"])
    if group_by not in ("volume", "position", "team"):
        raise ConfigError("group_by", "must be volume, position, or team")
    dataset = _load_cache(cache)
    model = load_model(model_path)
    X, y = dataset_matrices(dataset.shots)
    preds = model.predict(X)

    tiers = shot_volume_tiers(dataset)
    levels: dict[str, list[int]] = {}
    for i, shot in enumerate(dataset.shots):
        if group_by == "volume":
            level = tiers[shot.player_id]
        elif group_by == "position":
            profile = dataset.players.get(shot.player_id)
            level = profile.primary_position if profile else "midfielder"
        else:
            rating = dataset.teams.get(shot.team_id)
            level = rating.tier if rating else "other"
        levels.setdefault(level, []).append(i)

    outputs = []
    for level in sorted(levels):
        idx = np.array(levels[level])
        curve = calibration_curve(preds[idx], y[idx],
                                  min_bin_n=int(cfg["min_bin_n"]),
                                  bandwidth=float(cfg["bandwidth"]))
        smoothed_by_bin = {
            int(b): (float(curve.smoothed_x[j]), float(curve.smoothed_y[j]))
            for j, b in enumerate(np.where(~curve.masked)[0])}
        rows = []
        for b in range(curve.n.size):
            sx, sy = smoothed_by_bin.get(b, (None, None))
            rows.append((float(curve.bin_edges[b]),
                         float(curve.bin_edges[b + 1]),
                         int(curve.n[b]),
                         None if curve.n[b] == 0
                         else float(curve.mean_predicted[b]),
                         None if curve.n[b] == 0
                         else float(curve.conversion_rate[b]),
                         bool(curve.masked[b]),
                         sx, sy))
        name = f"curve-{group_by}-{level}.csv"
        write_csv(out / name,
                  ["bin_lo", "bin_hi", "n", "mean_pred", "conv_rate",
                   "masked", "smoothed_x", "smoothed_y"], rows)
        outputs.append(name)
    return [cache, model_path], outputs, False


def cmd_multicalib_fit(cfg: dict) -> tuple[list, list, bool]:
    cache = _require_file(cfg, "cache")
    model_path = _require_file(cfg, "model")
    out = _out_dir(cfg)
    dataset = _load_cache(cache)
    base = load_model(model_path)
    try:
        mc = fit_multicalibration(base, dataset,
                                  tolerance=float(cfg["tolerance"]),
                                  max_iter=int(cfg["max_iter"]),
                                  min_support=int(cfg["min_support"]))
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    save_multicalibrated(mc, out / "multicalib.json")
    violation = max_cell_violation(mc, dataset,
                                   min_support=int(cfg["min_support"]))
    print(f"{len(mc.updates)} updates, converged={mc.converged}, "
          f"max cell violation {violation:.4f}")
    return [cache, model_path], ["multicalib.json"], not mc.converged


def cmd_multicalib_predict(cfg: dict) -> tuple[list, list, bool]:
    cache = _require_file(cfg, "cache")
    mc_path = _require_file(cfg, "mc")
    out = _out_dir(cfg)
    dataset = _load_cache(cache)
    mc = load_multicalibrated(mc_path)
    X, _ = dataset_matrices(dataset.shots)
    base_preds = mc.base.predict(X)
    if cfg.get("as_group"):
        baseline = parse_group(cfg["as_group"])
        if baseline not in mc.groups:
            raise ConfigError("as_group",
                              f"{cfg['as_group']} is not a fitted baseline")
        preds = mc.replay(base_preds, [baseline] * X.shape[0])
    else:
        from .multicalib import shot_group_keys
        preds = mc.replay(base_preds, shot_group_keys(dataset))
    rows = [(s.shot_id, s.player_id, float(base_preds[i]), float(preds[i]))
            for i, s in enumerate(dataset.shots)]
    write_csv(out / "predictions.csv",
              ["shot_id", "player_id", "xg_base", "xg_calibrated"], rows)
    return [cache, mc_path], ["predictions.csv"], False


def cmd_multicalib_baselines(cfg: dict) -> tuple[list, list, bool]:
    cache = _require_file(cfg, "cache")
    mc_path = _require_file(cfg, "mc")
    out = _out_dir(cfg)
    dataset = _load_cache(cache)
    mc = load_multicalibrated(mc_path)
    player = str(_require(cfg, "player"))
    shots = dataset.shots_by_player(player)
    if not shots:
        raise DataError(f"player {player} has no shots in {cache}")
    X, _ = dataset_matrices(shots)
    goals = sum(s.is_goal for s in shots)
    weights_by = str(cfg["weights_by"])
    weights_source = _load_cache(_require_file(cfg, "weights_cache")) \
        if cfg.get("weights_cache") else dataset
    weights = group_weights(weights_source, groups=mc.groups, by=weights_by)
    report = baseline_report(mc, X, goals, weights=weights,
                             weights_by=weights_by)
    rows = [(r["position"], r["volume"], r["cum_xg"], r["gax"])
            for r in report.rows()]
    write_csv(out / "baselines.csv",
              ["position", "volume", "cum_xg", "gax"], rows)
    print(f"{player}: {goals} goals over {len(shots)} shots; weighted "
          f"average-player xG {report.weighted_cum_xg:.2f} "
          f"(GAX {report.weighted_gax:.2f})")
    return [cache, mc_path], ["baselines.csv"], False


def cmd_multicalib_leaderboard(cfg: dict) -> tuple[list, list, bool]:
    cache = _require_file(cfg, "cache")
    mc_path = _require_file(cfg, "mc")
    out = _out_dir(cfg)
    dataset = _load_cache(cache)
    mc = load_multicalibrated(mc_path)
    table = gax_leaderboard(dataset, mc.base, mc,
                            min_goals=int(cfg["min_goals"]))
    header = ["player_id", "name", "goals", "n_shots",
              "xg_standard", "gax_standard", "pct_over_standard",
              "xg_multicalibrated", "gax_multicalibrated",
              "pct_over_multicalibrated",
              "xg_provider", "gax_provider", "pct_over_provider"]
    rows = [tuple(r.get(col) for col in header) for r in table]
    write_csv(out / "leaderboard.csv", header, rows)

    summary = {"n_players": len(table)}
    if table:
        over_std = [r for r in table if r["gax_standard"] > 0]
        over_mc = [r for r in table if r["gax_multicalibrated"] > 0]
        summary.update(
            n_exceed_standard=len(over_std),
            n_exceed_multicalibrated=len(over_mc),
            avg_pct_over_standard=float(np.mean(
                [r["pct_over_standard"] for r in over_std]))
            if over_std else None,
            avg_pct_over_multicalibrated=float(np.mean(
                [r["pct_over_multicalibrated"] for r in over_mc]))
            if over_mc else None,
            spearman_rho=spearman([r["gax_standard"] for r in table],
                                  [r["gax_multicalibrated"] for r in table])
            if len(table) > 1 else None,
        )
    write_json(out / "leaderboard_summary.json", summary)
    return [cache, mc_path], ["leaderboard.csv",
                              "leaderboard_summary.json"], False


FIGURE_COLUMNS = {
    "h1-heatmap": ("h1.csv", ["alpha", "n", "p_overperform"]),
    "h1-table": ("h1.csv", ["alpha", "n", "mean_gax", "std_gax"]),
    "messi-3x3": ("baselines.csv", ["position", "volume", "cum_xg"]),
    "augmentation-curve": ("augmentation.csv",
                           ["m", "mean_gax", "ci95_low", "ci95_high"]),
    "mixture-grid": ("mixture.csv",
                     ["allocation", "alpha_test", "n", "mean_gax",
                      "mean_gax_groundtruth"]),
    "calibration-curve": ("curve-*.csv", ["smoothed_x", "smoothed_y"]),
}


def cmd_figure(cfg: dict) -> tuple[list, list, bool]:
    figure_id = str(_require(cfg, "id"))
    if figure_id not in FIGURE_COLUMNS:
        known = ", ".join(sorted(FIGURE_COLUMNS))
        raise ConfigError("id",
                          f"unknown figure id {figure_id!r}; one of: {known}")
    result = _require_file(cfg, "result")
    out = _out_dir(cfg)
    _, columns = FIGURE_COLUMNS[figure_id]
    with open(result, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in columns if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"{result} lacks columns {missing} needed by "
                            f"figure {figure_id}")
        rows = []
        for row in reader:
            if figure_id == "messi-3x3" and row["position"] == "weighted":
                continue
            if figure_id == "calibration-curve" and not row["smoothed_x"]:
                continue
            rows.append(tuple(row[c] for c in columns))
    name = f"figure-{figure_id}.csv"
    write_csv(out / name, columns, rows)
    return [result], [name], False


# ---------------------------------------------------------------------------
# Command table: defaults + whether a seed is mandatory.

COMMANDS = {
    "ingest": (cmd_ingest, False, {
        "data_dir": None, "competitions": "2,7,9,11,12",
        "seasons": "2015/2016", "player": None, "elo_csv": None,
        "cache_name": "cache.csv", "out_dir": ".", "threads": 1,
    }),
    "train": (cmd_train, True, {
        "cache": None, "penalty": 1.0, "test_fraction": 0.10, "seed": None,
        "out_dir": ".", "threads": 1,
    }),
    "evaluate": (cmd_evaluate, True, {
        "cache": None, "model": None, "test_fraction": 0.10, "seed": None,
        "out_dir": ".", "threads": 1,
    }),
    "simulate-h1": (cmd_simulate_h1, True, {
        "cache": None, "model": None, "alphas": "0,5,10,15,25",
        "shots": "25,50,75,100,125,150", "reps": 10_000, "seed": None,
        "out_dir": ".", "threads": 1,
    }),
    "simulate-profiles": (cmd_simulate_profiles, True, {
        "cache": None, "model": None, "players": None,
        "alphas": "0,5,10,15,25", "shots": "25,50,75,100,125,150",
        "reps": 10_000, "seed": None, "out_dir": ".", "threads": 1,
    }),
    "simulate-h3a": (cmd_simulate_h3a, True, {
        "cache": None, "target_player": None, "alpha": 25.0,
        "m_values": "0,1000,2000,3000,4000,5000", "runs": 100,
        "penalty": 1.0, "seed": None, "out_dir": ".", "threads": 1,
    }),
    "simulate-h3b": (cmd_simulate_h3b, True, {
        "cache": None, "model": None,
        "allocations": ("100000/800000/50000/50000;"
                        "50000/750000/100000/100000;"
                        "50000/650000/100000/200000"),
        "alpha_levels": "-5,0,10,20", "test_alphas": "0,10,20",
        "test_ns": "100", "train_size": 100_000, "full": None,
        "reps": 10_000, "penalty": 1.0, "seed": None, "out_dir": ".",
        "threads": 1,
    }),
    "finishing": (cmd_finishing, False, {
        "cache": None, "model": None, "player": None, "filters": "",
        "observed": None, "out_dir": ".", "threads": 1,
    }),
    "calibration": (cmd_calibration, False, {
        "cache": None, "model": None, "group_by": "volume",
        "bandwidth": 0.02, "min_bin_n": 100, "out_dir": ".", "threads": 1,
    }),
    "multicalib-fit": (cmd_multicalib_fit, False, {
        "cache": None, "model": None, "tolerance": 0.01, "max_iter": 100,
        "min_support": 100, "out_dir": ".", "threads": 1,
    }),
    "multicalib-predict": (cmd_multicalib_predict, False, {
        "cache": None, "mc": None, "as_group": None, "out_dir": ".",
        "threads": 1,
    }),
    "multicalib-baselines": (cmd_multicalib_baselines, False, {
        "cache": None, "mc": None, "player": None, "weights_by": "players",
        "weights_cache": None, "out_dir": ".", "threads": 1,
    }),
    "multicalib-leaderboard": (cmd_multicalib_leaderboard, False, {
        "cache": None, "mc": None, "min_goals": 5, "out_dir": ".",
        "threads": 1,
    }),
    "figure": (cmd_figure, False, {
        "id": None, "result": None, "out_dir": ".", "threads": 1,
    }),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xgbias",
        description="Expected-goals bias analysis toolkit")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="top", required=True)

    def add(sp, name: str, command: str, **kwargs):
        p = sp.add_parser(name, **kwargs)
        p.set_defaults(command=command)
        p.add_argument("--config", help="TOML config file; flags override")
        p.add_argument("--out-dir", dest="out_dir",
                       help="output directory (default: current)")
        p.add_argument("--threads", type=int,
                       help="worker cap; never affects results")
        p.add_argument("-v", "--verbose", action="store_true", default=None)
        return p

    p = add(sub, "ingest", "ingest",
            help="parse provider event JSON into the shot cache")
    p.add_argument("--data-dir", dest="data_dir",
                   help=f"event-data root (default ${DATA_DIR_ENV})")
    p.add_argument("--competitions", help="comma-separated competition ids")
    p.add_argument("--seasons", help="comma-separated season names")
    p.add_argument("--player", help="keep only this player's shots")
    p.add_argument("--elo-csv", dest="elo_csv",
                   help="club ratings CSV for team tiers")
    p.add_argument("--cache-name", dest="cache_name")

    p = add(sub, "train", "train", help="fit the shot-outcome model")
    p.add_argument("--cache")
    p.add_argument("--penalty", type=float)
    p.add_argument("--test-fraction", dest="test_fraction", type=float)
    p.add_argument("--seed", type=int)

    p = add(sub, "evaluate", "evaluate", help="score a saved model")
    p.add_argument("--cache")
    p.add_argument("--model")
    p.add_argument("--test-fraction", dest="test_fraction", type=float)
    p.add_argument("--seed", type=int)

    sim = sub.add_parser("simulate", help="run simulation experiments")
    simsub = sim.add_subparsers(dest="experiment", required=True)

    p = add(simsub, "h1", "simulate-h1",
            help="season GAX noise floor over an (alpha, n) grid")
    for flag in ("--cache", "--model", "--alphas", "--shots"):
        p.add_argument(flag)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)

    p = add(simsub, "profiles", "simulate-profiles",
            help="per-player overperformance vs the global shot profile")
    for flag in ("--cache", "--model", "--players", "--alphas",
                 "--shots"):
        p.add_argument(flag)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)

    p = add(simsub, "h3a", "simulate-h3a",
            help="training-set augmentation with synthetic skilled shots")
    p.add_argument("--cache")
    p.add_argument("--target-player", dest="target_player")
    p.add_argument("--alpha", type=float)
    p.add_argument("--m-values", dest="m_values")
    p.add_argument("--runs", type=int)
    p.add_argument("--penalty", type=float)
    p.add_argument("--seed", type=int)

    p = add(simsub, "h3b", "simulate-h3b",
            help="skill-mixture training populations")
    for flag in ("--cache", "--model", "--allocations", "--alpha-levels",
                 "--test-alphas", "--test-ns"):
        p.add_argument(flag, dest=flag.lstrip("-").replace("-", "_"))
    p.add_argument("--train-size", dest="train_size", type=int)
    p.add_argument("--full", action="store_true", default=None,
                   help="use the full 1,000,000-shot training size")
    p.add_argument("--reps", type=int)
    p.add_argument("--penalty", type=float)
    p.add_argument("--seed", type=int)

    p = add(sub, "finishing", "finishing",
            help="exact goal-count distribution for one player's shots")
    p.add_argument("--cache")
    p.add_argument("--model")
    p.add_argument("--player")
    p.add_argument("--filters",
                   help="e.g. deflected=exclude,band=25-35yd,bodypart=foot")
    p.add_argument("--observed", type=int,
                   help="observed goals (default: from the cache)")

    p = add(sub, "calibration", "calibration",
            help="reliability curves per subgroup")
    p.add_argument("--cache")
    p.add_argument("--model")
    p.add_argument("--group-by", dest="group_by",
                   choices=("volume", "position", "team"))
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--min-bin-n", dest="min_bin_n", type=int)

    mc = sub.add_parser("multicalib", help="multi-calibration commands")
    mcsub = mc.add_subparsers(dest="step", required=True)

    p = add(mcsub, "fit", "multicalib-fit",
            help="fit per-cell corrections on a cached dataset")
    p.add_argument("--cache")
    p.add_argument("--model")
    p.add_argument("--tolerance", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--min-support", dest="min_support", type=int)

    p = add(mcsub, "predict", "multicalib-predict",
            help="calibrated predictions for cached shots")
    p.add_argument("--cache")
    p.add_argument("--mc")
    p.add_argument("--as-group", dest="as_group",
                   help="force one baseline, e.g. attacker/high")

    p = add(mcsub, "baselines", "multicalib-baselines",
            help="average-player baseline grid for one player")
    p.add_argument("--cache")
    p.add_argument("--mc")
    p.add_argument("--player")
    p.add_argument("--weights-by", dest="weights_by",
                   choices=("players", "shots"))
    p.add_argument("--weights-cache", dest="weights_cache",
                   help="derive group weights from this cache instead")

    p = add(mcsub, "leaderboard", "multicalib-leaderboard",
            help="per-player season GAX table under both models")
    p.add_argument("--cache")
    p.add_argument("--mc")
    p.add_argument("--min-goals", dest="min_goals", type=int)

    p = add(sub, "figure", "figure",
            help="project result files into plot-ready tables")
    p.add_argument("--id", help="figure id, e.g. h1-heatmap")
    p.add_argument("--result", help="result CSV produced by another command")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", None)
        else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")

    runner, stochastic, defaults = COMMANDS[args.command]
    start = time.monotonic()
    try:
        cfg = resolve_config(args, defaults, stochastic)
        inputs, outputs, partial = runner(cfg)
    except ConfigError as exc:
        _emit_error("config", exc.field, exc.message)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError, ValueError, KeyError) as exc:
        _emit_error("data", None, str(exc))
        return EXIT_DATA
    except (ExperimentError, np.linalg.LinAlgError) as exc:
        _emit_error("numeric", None, str(exc))
        return EXIT_NUMERIC

    write_manifest(_out_dir(cfg), args.command, cfg,
                   inputs + ([Path(args.config)] if args.config else []),
                   outputs, time.monotonic() - start, partial)
    if partial:
        _emit_error("numeric", None,
                    "run finished without convergence; outputs flagged "
                    "partial in the manifest")
        return EXIT_NUMERIC
    return EXIT_OK


def _emit_error(kind: str, field: str | None, message: str) -> None:
    record = {"error": kind, "message": message}
    if field:
        record["field"] = field
    print(json.dumps(record, sort_keys=True), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
