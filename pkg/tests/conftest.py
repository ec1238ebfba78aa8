"""Shared fixtures: synthetic shot datasets with known generating
parameters, plus discovery of the optional local event-data mirror."""

import os
from pathlib import Path

import numpy as np
import pytest

from xgbias.data import (PlayerProfile, ShotDataset, ShotRecord, TeamRating)
from xgbias.model import (XgModel, feature_matrix_from_locations, sigmoid,
                          train_logistic)
from xgbias.sampler import build_distribution

BODY_PARTS = ("foot", "head", "other")

# Generating parameters for the synthetic corpus. Chosen so the average
# predicted probability sits near a tenth, like real open-play shots.
TRUE_WEIGHTS = np.array([0.02, 0.01, -0.15, -0.8, -0.7, -0.3])
TRUE_INTERCEPT = -0.6


def make_shot(shot_id, player_id="p1", team_id="t1", x=100.0, y=40.0,
              body_part="foot", is_goal=False, minute=10,
              match_id="m1", is_deflected=False, provider_xg=None):
    return ShotRecord(shot_id=str(shot_id), match_id=match_id,
                      player_id=player_id, team_id=team_id, minute=minute,
                      start_x=x, start_y=y, body_part=body_part,
                      is_goal=is_goal, is_open_play=True,
                      is_deflected=is_deflected, provider_xg=provider_xg)


def synthetic_locations(rng, n):
    """Shot origins concentrated in the attacking third."""
    x = rng.uniform(60.0, 120.0, n)
    y = rng.uniform(10.0, 70.0, n)
    bp = rng.integers(0, 3, n)
    return x, y, bp


def build_synthetic_dataset(seed=3, players_per_position=6,
                            shots_per_player=220, goal_boost=None):
    """Dataset whose outcomes are Bernoulli draws from a known model.

    goal_boost maps (position, volume_tier) to an additive probability
    shift, used to inject miscalibration for specific groups.
    """
    rng = np.random.default_rng(seed)
    profiles = (("attacker", 80, 2000.0), ("midfielder", 30, 2200.0),
                ("defender", 6, 2600.0))
    players = {}
    teams = {"t1": TeamRating("t1", 2000.0, "ucl_winner", name="Alpha"),
             "t2": TeamRating("t2", 1500.0, "other", name="Beta")}
    shots = []
    sid = 0
    for pos, n_shots_profile, minutes in profiles:
        for k in range(players_per_position):
            pid = f"{pos}{k}"
            players[pid] = PlayerProfile(pid, n_shots_profile, minutes, pos,
                                         name=pid.title())
            x, y, bp = synthetic_locations(rng, shots_per_player)
            X = feature_matrix_from_locations(x, y, bp)
            p = sigmoid(X @ TRUE_WEIGHTS + TRUE_INTERCEPT)
            if goal_boost:
                p = np.clip(p + goal_boost.get(pos, 0.0), 0.0, 1.0)
            outcomes = rng.random(shots_per_player) < p
            for i in range(shots_per_player):
                shots.append(ShotRecord(
                    shot_id=str(sid), match_id=f"m{sid % 40}",
                    player_id=pid, team_id="t1" if k % 2 else "t2",
                    minute=int(rng.integers(0, 95)),
                    start_x=float(x[i]), start_y=float(y[i]),
                    body_part=BODY_PARTS[bp[i]],
                    is_goal=bool(outcomes[i]), is_open_play=True,
                    is_deflected=bool(rng.random() < 0.02),
                    provider_xg=float(p[i])))
                sid += 1
    return ShotDataset(shots=tuple(shots), players=players, teams=teams,
                       provenance="synthetic")


@pytest.fixture(scope="session")
def synthetic_dataset():
    return build_synthetic_dataset()


@pytest.fixture(scope="session")
def fixture_model():
    """A model with fixed, known coefficients (no training involved)."""
    return XgModel(weights=TRUE_WEIGHTS.copy(), intercept=TRUE_INTERCEPT,
                   penalty_c=1.0, meta={"source": "fixture"},
                   feature_names=("start_x", "start_y", "distance", "angle",
                                  "bodypart_head", "bodypart_other"))


@pytest.fixture(scope="session")
def trained_model(synthetic_dataset):
    from xgbias.data import dataset_matrices
    X, y = dataset_matrices(synthetic_dataset.shots)
    return train_logistic(X, y)


@pytest.fixture(scope="session")
def spatial_dist(synthetic_dataset):
    return build_distribution(synthetic_dataset.shots)


def open_data_root() -> Path | None:
    """Root of a local event-data mirror, if one is configured."""
    root = os.environ.get("XGBIAS_DATA_DIR")
    if root and (Path(root) / "competitions.json").is_file():
        return Path(root)
    return None


@pytest.fixture(scope="session")
def data_root():
    root = open_data_root()
    if root is None:
        pytest.skip("local event-data mirror not available; "
                    "set XGBIAS_DATA_DIR to run data-gated checks")
    return root
