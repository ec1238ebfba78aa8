"""Validated shot dataset: domain types, columnar cache, Club-Elo ratings,
and the stratified train/test split."""

from __future__ import annotations

import csv
import logging
import unicodedata
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .model import BODY_PARTS, PITCH_X, PITCH_Y
from .util import fmt_float, rng_stream

logger = logging.getLogger(__name__)

POSITIONS = ("defender", "midfielder", "attacker")
TEAM_TIERS = ("ucl_winner", "top25", "other")
UCL_ELO_THRESHOLD = 1950.0
TOP_N_TEAMS = 25

CACHE_HEADER = ["shot_id", "match_id", "player_id", "team_id", "minute",
                "start_x", "start_y", "body_part", "is_goal", "is_open_play",
                "is_deflected"]


@dataclass(frozen=True)
class ShotRecord:
    """One shot event in provider coordinates."""

    shot_id: str
    match_id: str
    player_id: str
    team_id: str
    minute: int
    start_x: float
    start_y: float
    body_part: str
    is_goal: bool
    is_open_play: bool
    is_deflected: bool
    is_own_goal: bool = False
    provider_xg: float | None = None  # not part of the cache schema

    def __post_init__(self):
        if not (0.0 <= self.start_x <= PITCH_X
                and 0.0 <= self.start_y <= PITCH_Y):
            raise ValueError(
                f"shot {self.shot_id}: coordinates ({self.start_x}, "
                f"{self.start_y}) outside provider frame")
        if self.body_part not in BODY_PARTS:
            raise ValueError(
                f"shot {self.shot_id}: unknown body part {self.body_part!r}")
        if self.minute < 0:
            raise ValueError(f"shot {self.shot_id}: negative minute")
        if self.is_own_goal and self.is_open_play:
            raise ValueError(
                f"shot {self.shot_id}: own goals are never open-play shots")


@dataclass(frozen=True)
class PlayerProfile:
    player_id: str
    total_shots: int
    total_minutes: float
    primary_position: str
    name: str = ""

    def __post_init__(self):
        if self.total_shots < 0 or self.total_minutes < 0:
            raise ValueError(f"player {self.player_id}: negative totals")
        if self.primary_position not in POSITIONS:
            raise ValueError(
                f"player {self.player_id}: bad position "
                f"{self.primary_position!r}")


@dataclass(frozen=True)
class TeamRating:
    team_id: str
    elo: float
    tier: str
    name: str = ""


@dataclass(frozen=True)
class ShotDataset:
    """Immutable bundle of shots plus player/team metadata."""

    shots: tuple[ShotRecord, ...]
    players: dict[str, PlayerProfile]
    teams: dict[str, TeamRating]
    provenance: str = ""

    def __len__(self) -> int:
        return len(self.shots)

    @property
    def n_goals(self) -> int:
        return sum(s.is_goal for s in self.shots)

    def exclude_player(self, player_id: str) -> "ShotDataset":
        kept = tuple(s for s in self.shots if s.player_id != str(player_id))
        return replace(self, shots=kept,
                       provenance=f"{self.provenance} minus player {player_id}")

    def shots_by_player(self, player_id: str) -> list[ShotRecord]:
        return [s for s in self.shots if s.player_id == str(player_id)]


def dataset_matrices(shots) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix and goal labels for a list of shots."""
    from .model import feature_matrix_from_locations
    shots = list(shots)
    if not shots:
        return np.empty((0, 6)), np.empty(0)
    x = np.array([s.start_x for s in shots])
    y = np.array([s.start_y for s in shots])
    bp = np.array([BODY_PARTS.index(s.body_part) for s in shots])
    labels = np.array([float(s.is_goal) for s in shots])
    return feature_matrix_from_locations(x, y, bp), labels


# ---------------------------------------------------------------------------
# Cache files

def _bool(v: bool) -> str:
    return "true" if v else "false"


def _parse_bool(v: str) -> bool:
    return v.strip().lower() in ("true", "1", "yes")


def write_cache(dataset: ShotDataset, path: str | Path) -> None:
    """Write the shot cache plus player/team sidecar files.

    The main file carries the fixed CACHE_HEADER columns; players and
    teams land next to it as <stem>.players.csv / <stem>.teams.csv so
    experiments never re-parse raw event JSON.
    """
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CACHE_HEADER)
        for s in dataset.shots:
            w.writerow([s.shot_id, s.match_id, s.player_id, s.team_id,
                        s.minute, fmt_float(s.start_x), fmt_float(s.start_y),
                        s.body_part, _bool(s.is_goal), _bool(s.is_open_play),
                        _bool(s.is_deflected)])
    with open(path.with_suffix(".players.csv"), "w", newline="",
              encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["player_id", "total_shots", "total_minutes",
                    "primary_position", "name"])
        for pid in sorted(dataset.players):
            p = dataset.players[pid]
            w.writerow([p.player_id, p.total_shots, fmt_float(p.total_minutes),
                        p.primary_position, p.name])
    with open(path.with_suffix(".teams.csv"), "w", newline="",
              encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["team_id", "elo", "tier", "name"])
        for tid in sorted(dataset.teams):
            t = dataset.teams[tid]
            w.writerow([t.team_id, fmt_float(t.elo), t.tier, t.name])
    xg_rows = [(s.shot_id, s.provider_xg) for s in dataset.shots
               if s.provider_xg is not None]
    if xg_rows:
        with open(path.with_suffix(".provider_xg.csv"), "w", newline="",
                  encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["shot_id", "provider_xg"])
            for sid, xg in xg_rows:
                w.writerow([sid, fmt_float(xg)])


def read_cache(path: str | Path) -> ShotDataset:
    """Load a cached dataset; synthesizes minimal player profiles when the
    players sidecar is missing."""
    path = Path(path)
    provider_xg: dict[str, float] = {}
    xg_path = path.with_suffix(".provider_xg.csv")
    if xg_path.exists():
        with open(xg_path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                provider_xg[row["shot_id"]] = float(row["provider_xg"])

    shots = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            shots.append(ShotRecord(
                shot_id=row["shot_id"],
                match_id=row["match_id"],
                player_id=row["player_id"],
                team_id=row["team_id"],
                minute=int(row["minute"]),
                start_x=float(row["start_x"]),
                start_y=float(row["start_y"]),
                body_part=row["body_part"],
                is_goal=_parse_bool(row["is_goal"]),
                is_open_play=_parse_bool(row["is_open_play"]),
                is_deflected=_parse_bool(row["is_deflected"]),
                provider_xg=provider_xg.get(row["shot_id"]),
            ))

    players: dict[str, PlayerProfile] = {}
    players_path = path.with_suffix(".players.csv")
    if players_path.exists():
        with open(players_path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                players[row["player_id"]] = PlayerProfile(
                    player_id=row["player_id"],
                    total_shots=int(row["total_shots"]),
                    total_minutes=float(row["total_minutes"]),
                    primary_position=row["primary_position"],
                    name=row.get("name", ""),
                )
    else:
        logger.warning("players sidecar missing for %s; synthesizing "
                       "profiles from shot counts", path)
        counts: dict[str, int] = {}
        for s in shots:
            counts[s.player_id] = counts.get(s.player_id, 0) + 1
        players = {pid: PlayerProfile(pid, n, 0.0, "midfielder")
                   for pid, n in counts.items()}

    teams: dict[str, TeamRating] = {}
    teams_path = path.with_suffix(".teams.csv")
    if teams_path.exists():
        with open(teams_path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                teams[row["team_id"]] = TeamRating(
                    team_id=row["team_id"],
                    elo=float(row["elo"]),
                    tier=row["tier"],
                    name=row.get("name", ""),
                )
    else:
        teams = {tid: TeamRating(tid, float("nan"), "other")
                 for tid in {s.team_id for s in shots}}

    return ShotDataset(shots=tuple(shots), players=players, teams=teams,
                       provenance=f"cache:{path}")


# ---------------------------------------------------------------------------
# Club-Elo ratings

# Aliases for provider club names whose Club-Elo spelling differs beyond
# simple normalization. Keys and values are normalized forms.
NAME_ALIASES = {
    "manchester united": "man united",
    "manchester city": "man city",
    "atletico madrid": "atletico",
    "athletic club": "bilbao",
    "athletic bilbao": "bilbao",
    "deportivo la coruna": "la coruna",
    "rc deportivo la coruna": "la coruna",
    "borussia monchengladbach": "gladbach",
    "bayer leverkusen": "leverkusen",
    "bayern munich": "bayern",
    "fc bayern munchen": "bayern",
    "borussia dortmund": "dortmund",
    "paris saint germain": "paris sg",
    "west bromwich albion": "west brom",
    "wolverhampton wanderers": "wolves",
    "queens park rangers": "qpr",
    "internazionale": "inter",
    "inter milan": "inter",
}


def normalize_club_name(name: str) -> str:
    """Lowercase, strip accents and club-form tokens for fuzzy alignment."""
    text = unicodedata.normalize("NFKD", name)
    text = "".join(c for c in text if not unicodedata.combining(c))
    text = text.lower().replace("-", " ").replace(".", " ").replace("'", "")
    drop = {"fc", "afc", "cf", "ac", "as", "ss", "ssc", "sc", "us", "cd",
            "rc", "rcd", "ud", "sd", "club", "de", "1899", "1846", "1909",
            "04", "05"}
    words = [w for w in text.split() if w not in drop]
    return " ".join(words)


def load_club_elo(path: str | Path) -> list[tuple[str, float]]:
    """Read a Club-Elo CSV (Rank,Club,Country,Level,Elo,From,To) into
    (club, elo) rows, keeping the file's order."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            club = row.get("Club", "").strip()
            if not club:
                continue
            try:
                elo = float(row["Elo"])
            except (KeyError, TypeError, ValueError):
                continue
            rows.append((club, elo))
    return rows


def load_team_ratings(elo_rows: list[tuple[str, float]],
                      team_names: dict[str, str],
                      aliases: dict[str, str] | None = None,
                      ) -> dict[str, TeamRating]:
    """Assign every provider team a rating tier.

    Tier rule: ucl_winner iff elo strictly above 1950; top25 iff the club
    ranks in the top 25 by elo and is not a ucl_winner; otherwise other.
    Teams missing from the ratings default to tier `other` and are logged.
    """
    aliases = {**NAME_ALIASES, **(aliases or {})}
    by_norm: dict[str, float] = {}
    for club, elo in elo_rows:
        by_norm.setdefault(normalize_club_name(club), elo)
    top_cut = sorted((e for _, e in elo_rows), reverse=True)[:TOP_N_TEAMS]
    top25_min = top_cut[-1] if top_cut else float("inf")

    ratings: dict[str, TeamRating] = {}
    for team_id, name in team_names.items():
        norm = normalize_club_name(name)
        norm = aliases.get(norm, norm)
        elo = by_norm.get(norm)
        if elo is None:
            logger.info("team %r not found in ratings; tier set to other",
                        name)
            ratings[team_id] = TeamRating(team_id, float("nan"), "other",
                                          name=name)
            continue
        if elo > UCL_ELO_THRESHOLD:
            tier = "ucl_winner"
        elif elo >= top25_min:
            tier = "top25"
        else:
            tier = "other"
        ratings[team_id] = TeamRating(team_id, elo, tier, name=name)
    return ratings


# ---------------------------------------------------------------------------
# Train/test split

def stratified_split(dataset: ShotDataset, test_fraction: float = 0.10,
                     seed: int = 0) -> tuple[ShotDataset, ShotDataset]:
    """Deterministic stratified split preserving the goal/miss ratio.

    The test set gets round(test_fraction * N) shots, goals and misses
    drawn proportionally. Raises on a single-class dataset.
    """
    n = len(dataset.shots)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    goal_idx = [i for i, s in enumerate(dataset.shots) if s.is_goal]
    miss_idx = [i for i, s in enumerate(dataset.shots) if not s.is_goal]
    if not goal_idx or not miss_idx:
        raise ValueError("stratified split needs both goals and misses")

    n_test = round(test_fraction * n)
    n_test_goals = round(test_fraction * len(goal_idx))
    n_test_miss = n_test - n_test_goals
    if n_test_miss < 0 or n_test_miss > len(miss_idx):
        raise ValueError("test fraction incompatible with class balance")

    rng = rng_stream(seed)
    goals = np.array(goal_idx)
    misses = np.array(miss_idx)
    rng.shuffle(goals)
    rng.shuffle(misses)
    test_set = set(goals[:n_test_goals].tolist())
    test_set.update(misses[:n_test_miss].tolist())

    train_shots = tuple(s for i, s in enumerate(dataset.shots)
                        if i not in test_set)
    test_shots = tuple(s for i, s in enumerate(dataset.shots)
                       if i in test_set)
    train = replace(dataset, shots=train_shots,
                    provenance=f"{dataset.provenance} [train]")
    test = replace(dataset, shots=test_shots,
                   provenance=f"{dataset.provenance} [test]")
    return train, test
