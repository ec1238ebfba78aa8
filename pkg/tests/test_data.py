"""Dataset types, cache round-trips, Club-Elo tiers, and the stratified split."""

import math

import pytest

from xgbias.data import (
    PlayerProfile,
    ShotDataset,
    ShotRecord,
    TeamRating,
    dataset_matrices,
    load_club_elo,
    load_team_ratings,
    normalize_club_name,
    read_cache,
    stratified_split,
    write_cache,
)

from conftest import make_shot


# -- record validation --------------------------------------------------------

def test_shot_record_valid():
    s = make_shot("s1", x=110.0, y=36.0, is_goal=True)
    assert s.is_goal
    assert s.provider_xg is None


def test_shot_record_rejects_bad_coordinates():
    with pytest.raises(ValueError):
        make_shot("s1", x=-2.0)
    with pytest.raises(ValueError):
        make_shot("s1", y=81.0)


def test_shot_record_rejects_bad_body_part():
    with pytest.raises(ValueError):
        make_shot("s1", body_part="shoulder")


def test_shot_record_rejects_negative_minute():
    with pytest.raises(ValueError):
        make_shot("s1", minute=-1)


def test_shot_record_rejects_open_play_own_goal():
    with pytest.raises(ValueError):
        ShotRecord(shot_id="s", match_id="m", player_id="p", team_id="t",
                   minute=1, start_x=50.0, start_y=40.0, body_part="foot",
                   is_goal=True, is_open_play=True, is_deflected=False,
                   is_own_goal=True)


def test_player_profile_validation():
    PlayerProfile("p", 10, 900.0, "attacker")
    with pytest.raises(ValueError):
        PlayerProfile("p", -1, 900.0, "attacker")
    with pytest.raises(ValueError):
        PlayerProfile("p", 10, 900.0, "keeper")


def test_dataset_views(synthetic_dataset):
    ds = synthetic_dataset
    assert len(ds) == len(ds.shots)
    assert ds.n_goals == sum(s.is_goal for s in ds.shots)
    pid = ds.shots[0].player_id
    mine = ds.shots_by_player(pid)
    assert mine
    assert all(s.player_id == pid for s in mine)
    reduced = ds.exclude_player(pid)
    assert len(reduced) == len(ds) - len(mine)
    assert all(s.player_id != pid for s in reduced.shots)
    # original untouched
    assert len(ds.shots_by_player(pid)) == len(mine)


def test_dataset_matrices_shapes(synthetic_dataset):
    X, y = dataset_matrices(synthetic_dataset.shots[:10])
    assert X.shape == (10, 6)
    assert y.shape == (10,)
    assert set(y) <= {0.0, 1.0}
    X0, y0 = dataset_matrices([])
    assert X0.shape == (0, 6)
    assert y0.shape == (0,)


# -- cache round-trip ------------------------------------------------------------

def test_cache_round_trip_exact(tmp_path, synthetic_dataset):
    path = tmp_path / "shots.csv"
    write_cache(synthetic_dataset, path)
    assert path.exists()
    assert path.with_suffix(".players.csv").exists()
    assert path.with_suffix(".teams.csv").exists()
    assert path.with_suffix(".provider_xg.csv").exists()

    back = read_cache(path)
    assert len(back) == len(synthetic_dataset)
    for a, b in zip(synthetic_dataset.shots, back.shots):
        assert a.shot_id == b.shot_id
        assert a.start_x == b.start_x
        assert a.start_y == b.start_y
        assert a.minute == b.minute
        assert a.body_part == b.body_part
        assert a.is_goal == b.is_goal
        assert a.is_deflected == b.is_deflected
        assert b.provider_xg == pytest.approx(a.provider_xg, rel=1e-12)
    assert set(back.players) == set(synthetic_dataset.players)
    for pid, p in synthetic_dataset.players.items():
        q = back.players[pid]
        assert (q.total_shots, q.primary_position) == (
            p.total_shots, p.primary_position)
        assert q.total_minutes == pytest.approx(p.total_minutes)
    for tid, t in synthetic_dataset.teams.items():
        u = back.teams[tid]
        assert u.tier == t.tier
        assert u.elo == pytest.approx(t.elo)


def test_cache_synthesizes_players_when_sidecar_missing(tmp_path, caplog):
    ds = ShotDataset(
        shots=(make_shot("a", player_id="px"), make_shot("b", player_id="px"),
               make_shot("c", player_id="py")),
        players={}, teams={})
    path = tmp_path / "bare.csv"
    write_cache(ds, path)
    path.with_suffix(".players.csv").unlink()
    path.with_suffix(".teams.csv").unlink()
    with caplog.at_level("WARNING"):
        back = read_cache(path)
    assert back.players["px"].total_shots == 2
    assert back.players["py"].total_shots == 1
    assert back.players["px"].primary_position == "midfielder"
    assert back.teams[ds.shots[0].team_id].tier == "other"
    assert math.isnan(back.teams[ds.shots[0].team_id].elo)
    assert any("sidecar" in r.message for r in caplog.records)


def test_cache_no_provider_xg_file_when_absent(tmp_path):
    ds = ShotDataset(shots=(make_shot("a"),), players={}, teams={})
    path = tmp_path / "noxg.csv"
    write_cache(ds, path)
    assert not path.with_suffix(".provider_xg.csv").exists()
    back = read_cache(path)
    assert back.shots[0].provider_xg is None


# -- club names and tiers -----------------------------------------------------------

def test_normalize_club_name():
    assert normalize_club_name("FC Barcelona") == "barcelona"
    assert normalize_club_name("Atlético Madrid") == "atletico madrid"
    assert normalize_club_name("West-Bromwich Albion") == "west bromwich albion"
    assert normalize_club_name("AS Roma") == "roma"
    assert normalize_club_name("1. FC Köln") == "1 koln"


def test_load_club_elo(tmp_path):
    f = tmp_path / "elo.csv"
    f.write_text("Rank,Club,Country,Level,Elo,From,To\n"
                 "1,Real Madrid,ESP,1,2050.5,2015-01-01,2015-01-07\n"
                 "2,Barcelona,ESP,1,2040.0,2015-01-01,2015-01-07\n"
                 ",,,,,,\n"
                 "3,BadRow,ESP,1,notanumber,2015-01-01,2015-01-07\n",
                 encoding="utf-8")
    rows = load_club_elo(f)
    assert rows == [("Real Madrid", 2050.5), ("Barcelona", 2040.0)]


def test_team_tier_rules():
    # 30 clubs: elo 2000 down to 1710 in steps of 10. Strictly above 1950
    # is ucl_winner (2000..1960, 5 clubs); the rest of the top 25 by elo
    # is top25 (1950..1760); below that other.
    elo_rows = [(f"club{i}", 2000.0 - 10.0 * i) for i in range(30)]
    team_names = {f"t{i}": f"club{i}" for i in range(30)}
    team_names["tx"] = "unknown club"
    ratings = load_team_ratings(elo_rows, team_names)
    assert ratings["t0"].tier == "ucl_winner"      # 2000
    assert ratings["t4"].tier == "ucl_winner"      # 1960
    assert ratings["t5"].tier == "top25"           # 1950: not strictly above
    assert ratings["t24"].tier == "top25"          # 1760: rank 25
    assert ratings["t25"].tier == "other"          # 1750: rank 26
    assert ratings["t29"].tier == "other"
    assert ratings["tx"].tier == "other"
    assert math.isnan(ratings["tx"].elo)


def test_team_tier_alias_resolution():
    elo_rows = [("Man United", 1980.0), ("Inter", 1900.0)]
    team_names = {"t1": "Manchester United", "t2": "Internazionale"}
    ratings = load_team_ratings(elo_rows, team_names)
    assert ratings["t1"].tier == "ucl_winner"
    assert ratings["t1"].elo == 1980.0
    assert ratings["t2"].elo == 1900.0


def test_team_ratings_custom_alias():
    elo_rows = [("Sporting CP", 1800.0), ("Filler", 1500.0)]
    ratings = load_team_ratings(elo_rows, {"t": "Sporting Clube"},
                                aliases={"sporting clube": "sporting cp"})
    assert ratings["t"].elo == 1800.0


# -- stratified split -----------------------------------------------------------------

def test_split_sizes_and_proportions(synthetic_dataset):
    train, test = stratified_split(synthetic_dataset, 0.10, seed=0)
    n = len(synthetic_dataset)
    assert len(test) == round(0.10 * n)
    assert len(train) + len(test) == n
    goal_rate = synthetic_dataset.n_goals / n
    test_rate = test.n_goals / len(test)
    assert abs(test_rate - goal_rate) < 0.02
    # disjoint and exhaustive by shot id
    train_ids = {s.shot_id for s in train.shots}
    test_ids = {s.shot_id for s in test.shots}
    assert not train_ids & test_ids
    assert len(train_ids | test_ids) == n


def test_split_goal_count_is_exactly_proportional(synthetic_dataset):
    train, test = stratified_split(synthetic_dataset, 0.20, seed=3)
    want = round(0.20 * synthetic_dataset.n_goals)
    assert test.n_goals == want


def test_split_deterministic(synthetic_dataset):
    t1, s1 = stratified_split(synthetic_dataset, 0.10, seed=5)
    t2, s2 = stratified_split(synthetic_dataset, 0.10, seed=5)
    assert [a.shot_id for a in s1.shots] == [a.shot_id for a in s2.shots]
    t3, s3 = stratified_split(synthetic_dataset, 0.10, seed=6)
    assert [a.shot_id for a in s1.shots] != [a.shot_id for a in s3.shots]


def test_split_preserves_metadata(synthetic_dataset):
    train, test = stratified_split(synthetic_dataset, 0.10, seed=0)
    assert train.players is synthetic_dataset.players
    assert test.teams is synthetic_dataset.teams
    assert "[train]" in train.provenance
    assert "[test]" in test.provenance


def test_split_rejects_single_class():
    ds = ShotDataset(shots=(make_shot("a"), make_shot("b")),
                     players={}, teams={})
    with pytest.raises(ValueError):
        stratified_split(ds, 0.5)
    with pytest.raises(ValueError):
        stratified_split(ShotDataset(shots=(), players={}, teams={}), 0.5)


def test_team_rating_is_frozen():
    t = TeamRating("t", 1900.0, "top25")
    with pytest.raises(AttributeError):
        t.elo = 2000.0
