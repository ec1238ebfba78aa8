"""Exact goal-count distributions and shot filtering."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xgbias.goals import (
    METERS_PER_YARD,
    FilterReport,
    GoalDistribution,
    ShotFilter,
    filter_shots,
    poisson_binomial,
    tail_probabilities,
)

from conftest import make_shot


def brute_force_pmf(ps):
    """Enumerate all 2^N outcomes; reference oracle for small N."""
    pmf = np.zeros(len(ps) + 1)
    for outcome in itertools.product([0, 1], repeat=len(ps)):
        prob = 1.0
        for p, o in zip(ps, outcome):
            prob *= p if o else (1.0 - p)
        pmf[sum(outcome)] += prob
    return pmf


# -- PMF ----------------------------------------------------------------------

def test_single_shot():
    dist = poisson_binomial([0.3])
    np.testing.assert_allclose(dist.pmf, [0.7, 0.3], atol=1e-15)
    assert dist.n_shots == 1
    assert dist.total_xg == pytest.approx(0.3)


def test_three_shot_hand_case():
    # P(0) = 0.9 * 0.8 * 0.5 = 0.36, P(3) = 0.1 * 0.2 * 0.5 = 0.01,
    # P(1) = 0.1*0.8*0.5 + 0.9*0.2*0.5 + 0.9*0.8*0.5 = 0.49, P(2) = 0.14.
    dist = poisson_binomial([0.1, 0.2, 0.5])
    np.testing.assert_allclose(dist.pmf, [0.36, 0.49, 0.14, 0.01], atol=1e-15)


def test_matches_brute_force():
    rng = np.random.default_rng(17)
    for _ in range(40):
        n = int(rng.integers(1, 13))
        ps = rng.uniform(0.0, 1.0, n)
        got = poisson_binomial(ps).pmf
        want = brute_force_pmf(list(ps))
        assert np.max(np.abs(got - want)) <= 1e-12


def test_identical_probabilities_reduce_to_binomial():
    dist = poisson_binomial([0.25] * 12)
    k = np.arange(13)
    want = np.array([math.comb(12, int(i)) * 0.25 ** i * 0.75 ** (12 - i)
                     for i in k])
    np.testing.assert_allclose(dist.pmf, want, atol=1e-14)


def test_mean_variance_identities():
    rng = np.random.default_rng(23)
    ps = rng.uniform(0.01, 0.6, 300)
    dist = poisson_binomial(ps)
    assert dist.mean() == pytest.approx(float(np.sum(ps)), rel=1e-10)
    assert dist.variance() == pytest.approx(float(np.sum(ps * (1 - ps))),
                                            rel=1e-9)
    assert dist.total_xg == pytest.approx(float(np.sum(ps)))


def test_large_n_stays_normalized():
    rng = np.random.default_rng(31)
    ps = rng.uniform(0.0, 0.35, 2000)
    dist = poisson_binomial(ps)
    assert np.all(dist.pmf >= 0.0)
    assert float(np.sum(dist.pmf)) == pytest.approx(1.0, abs=1e-9)


def test_degenerate_probabilities():
    dist = poisson_binomial([0.0, 1.0, 0.0])
    np.testing.assert_allclose(dist.pmf, [0.0, 1.0, 0.0, 0.0], atol=1e-15)
    empty = poisson_binomial([])
    np.testing.assert_allclose(empty.pmf, [1.0])
    assert empty.n_shots == 0


def test_rejects_out_of_range():
    with pytest.raises(ValueError):
        poisson_binomial([0.2, 1.5])
    with pytest.raises(ValueError):
        poisson_binomial([-0.1])
    with pytest.raises(ValueError):
        poisson_binomial([np.nan])


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=10))
@settings(max_examples=50, deadline=None)
def test_pmf_property_vs_enumeration(ps):
    got = poisson_binomial(ps).pmf
    want = brute_force_pmf(ps)
    assert np.max(np.abs(got - want)) <= 1e-12


def test_monte_carlo_agreement():
    # Sampled goal counts land within 3 standard errors of the exact PMF.
    rng = np.random.default_rng(41)
    ps = rng.uniform(0.05, 0.5, 40)
    dist = poisson_binomial(ps)
    reps = 60_000
    draws = (rng.uniform(size=(reps, 40)) < ps).sum(axis=1)
    for k in range(0, 20):
        p_exact = dist.pmf[k]
        if p_exact < 1e-4:
            continue
        phat = float(np.mean(draws == k))
        se = math.sqrt(p_exact * (1 - p_exact) / reps)
        assert abs(phat - p_exact) <= 3.5 * se


# -- tails ---------------------------------------------------------------------

def test_tails_inclusive_on_both_sides():
    dist = poisson_binomial([0.1, 0.2, 0.5])
    t = tail_probabilities(dist, 1)
    assert t["p_at_most"] == pytest.approx(0.36 + 0.49)
    assert t["p_at_least"] == pytest.approx(0.49 + 0.14 + 0.01)
    assert t["p_at_most"] + t["p_at_least"] == pytest.approx(
        1.0 + dist.pmf[1])


def test_tails_extremes():
    dist = poisson_binomial([0.3, 0.3])
    assert tail_probabilities(dist, 0)["p_at_least"] == pytest.approx(1.0)
    assert tail_probabilities(dist, 2)["p_at_most"] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        tail_probabilities(dist, 3)
    with pytest.raises(ValueError):
        tail_probabilities(dist, -1)


# -- filters --------------------------------------------------------------------

def _pairs(shots):
    return [(s, 0.1) for s in shots]


def test_identity_filter_keeps_everything():
    shots = [make_shot(str(i)) for i in range(5)]
    rep = filter_shots(_pairs(shots), ShotFilter())
    assert len(rep.kept) == 5
    assert (rep.removed_deflected, rep.removed_body_part,
            rep.removed_distance, rep.removed_predicate) == (0, 0, 0, 0)


def test_deflection_filter():
    shots = [make_shot("a"), make_shot("b", is_deflected=True),
             make_shot("c", is_deflected=True)]
    rep = filter_shots(_pairs(shots), ShotFilter(exclude_deflected=True))
    assert [s.shot_id for s, _ in rep.kept] == ["a"]
    assert rep.removed_deflected == 2


def test_body_part_filter():
    shots = [make_shot("a", body_part="foot"),
             make_shot("b", body_part="head"),
             make_shot("c", body_part="other")]
    rep = filter_shots(_pairs(shots),
                       ShotFilter(body_parts=frozenset({"foot", "head"})))
    assert [s.shot_id for s, _ in rep.kept] == ["a", "b"]
    assert rep.removed_body_part == 1


def test_yard_band_conversion():
    band = ShotFilter(distance_band=(25.0, 35.0, "yd")).band_in_meters()
    assert band[0] == pytest.approx(22.86)
    assert band[1] == pytest.approx(32.004)
    assert METERS_PER_YARD == 0.9144


def test_distance_band_half_open():
    shots = [make_shot(str(i)) for i in range(4)]
    dists = [9.99, 10.0, 19.99, 20.0]
    rep = filter_shots(_pairs(shots),
                       ShotFilter(distance_band=(10.0, 20.0, "m")),
                       distances=dists)
    assert [s.shot_id for s, _ in rep.kept] == ["1", "2"]
    assert rep.removed_distance == 2


def test_distance_band_requires_distances():
    with pytest.raises(ValueError):
        filter_shots(_pairs([make_shot("a")]),
                     ShotFilter(distance_band=(10.0, 20.0, "m")))


def test_band_validation():
    with pytest.raises(ValueError):
        ShotFilter(distance_band=(20.0, 10.0, "m")).band_in_meters()
    with pytest.raises(ValueError):
        ShotFilter(distance_band=(10.0, 20.0, "furlong")).band_in_meters()


def test_predicate_filter_and_first_fail_accounting():
    shots = [make_shot("a", body_part="head", is_deflected=True),
             make_shot("b", body_part="head"),
             make_shot("c")]
    flt = ShotFilter(exclude_deflected=True,
                     body_parts=frozenset({"foot"}),
                     predicate=lambda s: s.shot_id != "c",
                     predicate_label="not-c")
    rep = filter_shots(_pairs(shots), flt)
    # "a" fails deflection first, "b" fails body part, "c" the predicate
    assert rep.kept == []
    assert rep.removed_deflected == 1
    assert rep.removed_body_part == 1
    assert rep.removed_predicate == 1


def test_filter_idempotent():
    shots = [make_shot(str(i), is_deflected=(i % 3 == 0)) for i in range(9)]
    flt = ShotFilter(exclude_deflected=True)
    once = filter_shots(_pairs(shots), flt)
    twice = filter_shots(once.kept, flt)
    assert [s.shot_id for s, _ in twice.kept] == [
        s.shot_id for s, _ in once.kept]
    assert twice.removed_deflected == 0


def test_filtered_set_feeds_distribution():
    shots = [make_shot(str(i), is_goal=(i < 2)) for i in range(6)]
    pairs = [(s, 0.2 + 0.05 * i) for i, s in enumerate(shots)]
    rep = filter_shots(pairs, ShotFilter())
    dist = poisson_binomial([xg for _, xg in rep.kept])
    goals = sum(s.is_goal for s, _ in rep.kept)
    tails = tail_probabilities(dist, goals)
    assert 0.0 < tails["p_at_least"] < 1.0
    assert isinstance(rep, FilterReport)
    assert isinstance(dist, GoalDistribution)
