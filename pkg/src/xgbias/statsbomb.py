"""Parser for the StatsBomb open-data directory layout.

Expected tree:
    <root>/competitions.json
    <root>/matches/<competition_id>/<season_id>.json
    <root>/events/<match_id>.json

Shots become ShotRecords; Starting XI and Substitution events drive player
minutes and the most-frequent starting position.
"""

from __future__ import annotations

import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path

from .data import PlayerProfile, ShotDataset, ShotRecord, TeamRating
from .model import PITCH_X, PITCH_Y

logger = logging.getLogger(__name__)

# Competition ids of the five major leagues in the open data.
BIG5_COMPETITION_IDS = (2, 7, 9, 11, 12)
MESSI_PLAYER_ID = "5503"
LALIGA_COMPETITION_ID = 11


@dataclass(frozen=True)
class ParseFilters:
    """Shot-selection policy applied during ingestion."""

    open_play_only: bool = True
    exclude_own_goals: bool = True
    player_id: str | None = None


def _map_body_part(name: str | None) -> str:
    if not name:
        return "other"
    if name == "Head":
        return "head"
    if "Foot" in name:
        return "foot"
    return "other"


def _map_position(name: str) -> str:
    # "Back" first so wing backs land with the defenders
    if "Back" in name or name == "Goalkeeper":
        return "defender"
    if "Midfield" in name:
        return "midfielder"
    if any(k in name for k in ("Forward", "Striker", "Wing")):
        return "attacker"
    return "midfielder"


def select_competitions(root: str | Path,
                        competition_ids=None,
                        season_names=None) -> list[tuple[int, int]]:
    """Resolve (competition_id, season_id) pairs from competitions.json.

    Filters are intersected; None means no restriction on that axis.
    """
    comps_path = Path(root) / "competitions.json"
    comps = json.loads(comps_path.read_text(encoding="utf-8"))
    out = []
    for c in comps:
        if competition_ids is not None and \
                c["competition_id"] not in set(competition_ids):
            continue
        if season_names is not None and \
                c["season_name"] not in set(season_names):
            continue
        out.append((c["competition_id"], c["season_id"]))
    return sorted(set(out))


def parse_event_data(root: str | Path,
                     selection: list[tuple[int, int]],
                     filters: ParseFilters = ParseFilters()) -> ShotDataset:
    """Parse the selected competition/season event files into a ShotDataset.

    A malformed file is logged with its path and skipped; parsing
    continues. Emits a warning when nothing survives the filters.
    """
    root = Path(root)
    shots: list[ShotRecord] = []
    minutes: dict[str, float] = defaultdict(float)
    start_positions: dict[str, Counter] = defaultdict(Counter)
    player_names: dict[str, str] = {}
    team_names: dict[str, str] = {}
    n_files = 0
    n_errors = 0

    for comp_id, season_id in selection:
        season_path = root / "matches" / str(comp_id) / f"{season_id}.json"
        try:
            matches = json.loads(season_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            logger.error("failed to read %s: %s", season_path, exc)
            n_errors += 1
            continue
        for match in matches:
            match_id = match["match_id"]
            events_path = root / "events" / f"{match_id}.json"
            n_files += 1
            try:
                n_shots = _parse_match(events_path, str(match_id), filters,
                                       shots, minutes, start_positions,
                                       player_names, team_names)
            except (OSError, json.JSONDecodeError, KeyError,
                    ValueError) as exc:
                logger.error("failed to parse %s: %s", events_path, exc)
                n_errors += 1
                continue
            logger.debug("%s: %d shots kept", events_path.name, n_shots)

    if not shots:
        logger.warning("no shots after filtering (%d files, %d errors)",
                       n_files, n_errors)

    shot_counts = Counter(s.player_id for s in shots)
    players = {}
    involved = set(shot_counts) | set(minutes) | set(start_positions)
    for pid in involved:
        tally = start_positions.get(pid)
        if tally:
            top = max(tally.values())
            position = sorted(p for p, c in tally.items() if c == top)[0]
        else:
            position = "midfielder"  # never started: median prior
        players[pid] = PlayerProfile(
            player_id=pid,
            total_shots=shot_counts.get(pid, 0),
            total_minutes=round(minutes.get(pid, 0.0)),
            primary_position=position,
            name=player_names.get(pid, ""),
        )

    teams = {tid: TeamRating(tid, float("nan"), "other", name=name)
             for tid, name in team_names.items()}

    label = ",".join(f"{c}:{s}" for c, s in selection)
    return ShotDataset(
        shots=tuple(shots),
        players=players,
        teams=teams,
        provenance=f"statsbomb-open:{root}:[{label}]",
    )


def _parse_match(events_path: Path, match_id: str, filters: ParseFilters,
                 shots: list, minutes: dict, start_positions: dict,
                 player_names: dict, team_names: dict) -> int:
    events = json.loads(events_path.read_text(encoding="utf-8"))
    duration = 0.0
    starters: dict[str, float] = {}
    entered: dict[str, float] = {}
    left: dict[str, float] = {}
    kept = 0

    for ev in events:
        ev_minute = float(ev.get("minute", 0))
        duration = max(duration, ev_minute)
        type_name = ev.get("type", {}).get("name")

        if type_name == "Starting XI":
            team = ev.get("team", {})
            team_names[str(team.get("id"))] = team.get("name", "")
            for entry in ev.get("tactics", {}).get("lineup", []):
                pid = str(entry["player"]["id"])
                starters[pid] = 0.0
                player_names[pid] = entry["player"].get("name", "")
                pos = entry.get("position", {}).get("name")
                if pos:
                    start_positions[pid][_map_position(pos)] += 1

        elif type_name == "Substitution":
            pid = str(ev["player"]["id"])
            left[pid] = ev_minute
            repl = ev.get("substitution", {}).get("replacement")
            if repl:
                rid = str(repl["id"])
                entered[rid] = ev_minute
                player_names.setdefault(rid, repl.get("name", ""))

        elif type_name == "Shot":
            shot = _shot_record(ev, match_id, filters)
            if shot is not None:
                shots.append(shot)
                kept += 1

    for pid, start in starters.items():
        minutes[pid] += max(0.0, left.get(pid, duration) - start)
    for pid, start in entered.items():
        minutes[pid] += max(0.0, left.get(pid, duration) - start)
    return kept


def _shot_record(ev: dict, match_id: str,
                 filters: ParseFilters) -> ShotRecord | None:
    shot = ev.get("shot", {})
    if filters.open_play_only and \
            shot.get("type", {}).get("name") != "Open Play":
        return None
    player_id = str(ev.get("player", {}).get("id", "unknown"))
    if filters.player_id is not None and player_id != filters.player_id:
        return None
    loc = ev.get("location")
    if not loc or len(loc) < 2:
        logger.debug("shot %s has no location; skipped", ev.get("id"))
        return None
    x = min(max(float(loc[0]), 0.0), PITCH_X)
    y = min(max(float(loc[1]), 0.0), PITCH_Y)
    return ShotRecord(
        shot_id=str(ev["id"]),
        match_id=match_id,
        player_id=player_id,
        team_id=str(ev.get("team", {}).get("id", "unknown")),
        minute=int(ev.get("minute", 0)),
        start_x=x,
        start_y=y,
        body_part=_map_body_part(shot.get("body_part", {}).get("name")),
        is_goal=shot.get("outcome", {}).get("name") == "Goal",
        is_open_play=shot.get("type", {}).get("name") == "Open Play",
        is_deflected=bool(shot.get("deflected", False)),
        is_own_goal=False,  # own goals are separate event types, never Shots
        provider_xg=shot.get("statsbomb_xg"),
    )
