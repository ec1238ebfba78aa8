"""Simulation experiment drivers: grids, player profiles, augmentation,
and skill-mixture training."""

import numpy as np
import pytest

import xgbias.experiments as ex
from xgbias.experiments import (
    ExperimentError,
    _allocation_counts,
    run_h1,
    run_player_profiles,
    run_skill_mixture,
    run_training_augmentation,
)

from conftest import make_shot


# -- overperformance grid -------------------------------------------------------

def test_run_h1_shapes_and_accessors(spatial_dist, fixture_model):
    res = run_h1(fixture_model, spatial_dist, alphas=(0.0, 25.0),
                 ns=(50, 100), reps=300, seed=2)
    assert res.mean_gax.shape == (2, 2)
    assert res.p_overperform.shape == (2, 2)
    rows = res.rows()
    assert len(rows) == 4
    assert rows[0]["alpha"] == 0.0 and rows[0]["n"] == 50
    cell = res.cell(25.0, 100)
    assert set(cell) == {"mean_gax", "std_gax", "p_overperform", "se"}
    assert cell["se"] == pytest.approx(
        np.sqrt(cell["p_overperform"] * (1 - cell["p_overperform"]) / 300))


def test_run_h1_deterministic(spatial_dist, fixture_model):
    a = run_h1(fixture_model, spatial_dist, alphas=(10.0,), ns=(60,),
               reps=200, seed=5)
    b = run_h1(fixture_model, spatial_dist, alphas=(10.0,), ns=(60,),
               reps=200, seed=5)
    np.testing.assert_array_equal(a.mean_gax, b.mean_gax)
    np.testing.assert_array_equal(a.p_overperform, b.p_overperform)
    c = run_h1(fixture_model, spatial_dist, alphas=(10.0,), ns=(60,),
               reps=200, seed=6)
    assert not np.array_equal(a.mean_gax, c.mean_gax)


def test_run_h1_monotone_in_alpha(spatial_dist, fixture_model):
    res = run_h1(fixture_model, spatial_dist, alphas=(0.0, 15.0, 30.0),
                 ns=(100,), reps=1500, seed=3)
    p = res.p_overperform[:, 0]
    assert p[1] > p[0] + 0.05
    assert p[2] > p[1] + 0.05
    # mean GAX tracks n * mean_xg * alpha / 100 upward
    m = res.mean_gax[:, 0]
    assert m[0] == pytest.approx(0.0, abs=0.5)
    assert m[2] > m[1] > m[0]


# -- player shot profiles ----------------------------------------------------------

def _profile_shots(prefix, x_lo, x_hi, n=60):
    rng = np.random.default_rng(hash(prefix) % 2 ** 31)
    return [make_shot(f"{prefix}{i}", player_id=prefix,
                      x=float(rng.uniform(x_lo, x_hi)),
                      y=float(rng.uniform(25.0, 55.0)))
            for i in range(n)]


def test_player_profiles_direction(fixture_model):
    close = _profile_shots("close", 110.0, 119.0)
    far = _profile_shots("far", 70.0, 85.0)
    res = run_player_profiles(fixture_model,
                              {"close": close, "far": far},
                              alphas=(20.0,), ns=(100,), reps=2000, seed=4)
    assert res.p_global.shape == (1, 1)
    assert set(res.deltas) == {"close", "far"}
    # at a fixed boost, a close-range profile overperforms more often than
    # the pooled profile; a long-range one less often
    assert res.deltas["close"][0, 0] > 0.02
    assert res.deltas["far"][0, 0] < -0.02


def test_player_profiles_self_comparison_is_noise(fixture_model):
    shots = _profile_shots("solo", 95.0, 115.0)
    res = run_player_profiles(fixture_model, {"solo": shots},
                              alphas=(10.0,), ns=(80,), reps=3000, seed=9)
    # the global pool IS this player's shots; only Monte Carlo noise remains
    assert abs(res.deltas["solo"][0, 0]) < 0.05


def test_player_profiles_skips_empty(fixture_model, caplog):
    shots = _profile_shots("has", 100.0, 115.0)
    with caplog.at_level("WARNING"):
        res = run_player_profiles(fixture_model,
                                  {"has": shots, "none": []},
                                  alphas=(0.0,), ns=(50,), reps=100, seed=1)
    assert res.skipped == ("none",)
    assert "none" not in res.deltas
    assert any("no shots" in r.getMessage() for r in caplog.records)


def test_player_profiles_deterministic(fixture_model):
    shots = {"p": _profile_shots("p", 90.0, 118.0)}
    r1 = run_player_profiles(fixture_model, shots, alphas=(5.0,), ns=(40,),
                             reps=150, seed=8)
    r2 = run_player_profiles(fixture_model, shots, alphas=(5.0,), ns=(40,),
                             reps=150, seed=8)
    np.testing.assert_array_equal(r1.deltas["p"], r2.deltas["p"])
    np.testing.assert_array_equal(r1.p_global, r2.p_global)


# -- training augmentation -----------------------------------------------------------

def test_augmentation_m_zero_is_deterministic(synthetic_dataset):
    eval_shots = synthetic_dataset.shots_by_player("attacker0")
    base = synthetic_dataset.exclude_player("attacker0")
    r1 = run_training_augmentation(base, eval_shots, 25.0, (0,), runs=3,
                                   seed=1)
    r2 = run_training_augmentation(base, eval_shots, 25.0, (0,), runs=3,
                                   seed=99)
    assert r1.mean_gax[0] == r2.mean_gax[0]
    assert r1.ci95_low[0] == r1.mean_gax[0] == r1.ci95_high[0]
    assert r1.failures == (0,)


def test_augmentation_runs_and_rows(synthetic_dataset):
    eval_shots = synthetic_dataset.shots_by_player("attacker1")
    base = synthetic_dataset.exclude_player("attacker1")
    res = run_training_augmentation(base, eval_shots, 25.0, (0, 200),
                                    runs=4, seed=2)
    assert res.m_values == (0, 200)
    rows = res.rows()
    assert len(rows) == 2
    assert rows[1]["m"] == 200
    assert rows[1]["ci95_low"] <= rows[1]["mean_gax"] <= rows[1]["ci95_high"]
    assert np.isfinite(res.mean_gax).all()
    # determinism across identical calls
    res2 = run_training_augmentation(base, eval_shots, 25.0, (0, 200),
                                     runs=4, seed=2)
    np.testing.assert_array_equal(res.mean_gax, res2.mean_gax)


def test_augmentation_validation(synthetic_dataset):
    eval_shots = synthetic_dataset.shots_by_player("attacker0")
    base = synthetic_dataset.exclude_player("attacker0")
    with pytest.raises(ValueError):
        run_training_augmentation(base, eval_shots, 25.0, (-1,), runs=2,
                                  seed=0)
    with pytest.raises(ValueError):
        run_training_augmentation(base, eval_shots, 25.0, (0,), runs=0,
                                  seed=0)


def test_augmentation_aborts_on_failures(synthetic_dataset, monkeypatch):
    real = ex.train_logistic
    calls = {"n": 0}

    def flaky(X, y, **kw):
        calls["n"] += 1
        if calls["n"] == 1:
            return real(X, y, **kw)  # the base fit succeeds
        raise np.linalg.LinAlgError("synthetic failure")

    monkeypatch.setattr(ex, "train_logistic", flaky)
    eval_shots = synthetic_dataset.shots_by_player("attacker0")
    base = synthetic_dataset.exclude_player("attacker0")
    with pytest.raises(ExperimentError):
        run_training_augmentation(base, eval_shots, 25.0, (10,), runs=5,
                                  seed=0)


# -- skill mixtures --------------------------------------------------------------------

def test_allocation_counts():
    props, counts = _allocation_counts((1000, 7000, 1000, 1000), 4, 1000)
    assert props == [0.1, 0.7, 0.1, 0.1]
    assert counts == [100, 700, 100, 100]
    assert sum(counts) == 1000
    # rounding drift lands on the largest share
    _, c = _allocation_counts((1, 1, 1), 3, 100)
    assert sum(c) == 100
    assert sorted(c) == [33, 33, 34]


def test_allocation_counts_validation():
    with pytest.raises(ValueError):
        _allocation_counts((1, 2), 4, 100)
    with pytest.raises(ValueError):
        _allocation_counts((1, -1, 1, 1), 4, 100)
    with pytest.raises(ValueError):
        _allocation_counts((0, 0, 0, 0), 4, 100)


def test_skill_mixture_directions(spatial_dist, fixture_model):
    res = run_skill_mixture(
        fixture_model, spatial_dist,
        allocations=[(0, 1, 0, 0), (0, 0, 0, 1)],
        alpha_levels=(-5.0, 0.0, 10.0, 20.0),
        test_alphas=(0.0, 20.0), test_ns=(50,),
        train_size=3000, reps=150, seed=11)
    assert res.allocations == ((0.0, 1.0, 0.0, 0.0), (0.0, 0.0, 0.0, 1.0))
    # model trained on unboosted shots is nearly unbiased at test alpha 0
    assert abs(res.mean_gax[0][0, 0]) < 1.0
    # and the generator is exactly unbiased there
    assert abs(res.gt_gax[0][0, 0]) < 1.0
    # a model trained only on boosted shots overpredicts unboosted seasons
    assert res.mean_gax[1][0, 0] < res.mean_gax[0][0, 0] - 0.3
    # the generator shows real overperformance on boosted test seasons
    assert res.gt_gax[1][1, 0] > 0.4
    rows = res.rows()
    assert len(rows) == 2 * 2 * 1
    assert rows[0]["allocation"] == "0/1/0/0"
    assert {"mean_gax", "se", "mean_gax_groundtruth"} <= set(rows[0])


def test_skill_mixture_deterministic(spatial_dist, fixture_model):
    kw = dict(allocations=[(1, 1, 1, 1)],
              alpha_levels=(-5.0, 0.0, 10.0, 20.0),
              test_alphas=(10.0,), test_ns=(40,),
              train_size=2000, reps=100, seed=13)
    a = run_skill_mixture(fixture_model, spatial_dist, **kw)
    b = run_skill_mixture(fixture_model, spatial_dist, **kw)
    np.testing.assert_array_equal(a.mean_gax[0], b.mean_gax[0])
    np.testing.assert_array_equal(a.gt_gax[0], b.gt_gax[0])
