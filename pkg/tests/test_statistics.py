import csv
import io
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from horolab.errors import ParameterError
from horolab.leveled_tree import BitSource, TreeParams, level_counts, sample_window_tree
from horolab.statistics import (
    CSV_COLUMNS,
    all_closed_probability,
    exact_median,
    growth_condition_check,
    marked_edge_budget,
    martingale_track,
    run_folner_experiment,
    simulate_level_counts,
    trial_rng,
)


def pooled_chi_square(a, b, min_count=10):
    """Two-sample chi-square on discrete samples, pooling rare values."""
    ca, cb = Counter(a), Counter(b)
    common = sorted(k for k in set(ca) | set(cb) if ca[k] + cb[k] >= min_count)
    rows = [[ca[k] for k in common], [cb[k] for k in common]]
    rest_a = len(a) - sum(rows[0])
    rest_b = len(b) - sum(rows[1])
    if rest_a + rest_b:
        rows[0].append(rest_a)
        rows[1].append(rest_b)
    return stats.chi2_contingency(rows).pvalue


def test_simulate_full_retention():
    for seed in range(5):
        c = simulate_level_counts(TreeParams(1, 3, 1.0), 8, seed)
        assert c.counts == tuple(3**j for j in range(9))


def test_simulate_deterministic_regardless_of_seed():
    runs = {simulate_level_counts(TreeParams(2, 2, 0.3), 10, seed).counts for seed in range(5)}
    assert runs == {tuple(2**j for j in range(11))}


def test_simulate_root_level_and_height_zero():
    c = simulate_level_counts(TreeParams(2, 3, 0.5), 0, 1, root_level=-4)
    assert c.counts == (1,) and c.base_level == -4
    with pytest.raises(ParameterError):
        simulate_level_counts(TreeParams(2, 3, 0.5), -1, 0)


def test_simulate_truncation():
    c = simulate_level_counts(TreeParams(3, 3, 1.0), 20, 0, cap=1000)
    assert c.truncated and c.counts[-1] <= 1000 and len(c.counts) == 7


@pytest.mark.parametrize("params, height", [(TreeParams(1, 3, 0.5), 3), (TreeParams(1, 2, 0.5), 4)])
def test_counts_match_explicit_trees(params, height):
    trials = 10_000
    sim = [simulate_level_counts(params, height, trial_rng(99, t)).counts for t in range(trials)]
    exp = [level_counts(sample_window_tree(params, 0, height, BitSource(99, 0, t))).counts for t in range(trials)]
    for j in range(1, height + 1):
        p = pooled_chi_square([s[j] for s in sim], [e[j] for e in exp])
        assert p > 0.001, (j, p)


def test_trial_rng_keys():
    a = trial_rng(1, 2, 3).integers(0, 2**32, 4)
    assert np.array_equal(a, trial_rng(1, 2, 3).integers(0, 2**32, 4))
    assert not np.array_equal(a, trial_rng(1, 3, 2).integers(0, 2**32, 4))


# martingale ------------------------------------------------------------------


@pytest.mark.parametrize("params", [TreeParams(2, 3, 0.5), TreeParams(1, 3, 0.5), TreeParams(1, 4, 0.2)])
def test_martingale_increments(params):
    track = martingale_track(params, 16, 10_000, seed=2026)
    assert track.trials == 10_000 and track.discarded == 0
    assert np.all(track.values[:, 0] == 1)
    assert np.all(track.values > 0)
    assert track.increments_ok()
    assert all(row["within_3se"] for row in track.rows())


def test_martingale_expectation_one():
    track = martingale_track(TreeParams(2, 3, 0.5), 12, 10_000, seed=5)
    dev = np.abs(track.mean_normalized[1:] - 1)
    assert np.all(dev <= 3 * track.se_normalized[1:])


def test_martingale_full_retention_is_constant():
    track = martingale_track(TreeParams(1, 3, 1.0), 8, 50, seed=0)
    assert np.all(track.values == 1)
    assert np.all(track.increments == 0)


def test_martingale_extinction_guard():
    with pytest.raises(ParameterError):
        martingale_track(TreeParams(0, 3, 0.5), 5, 100, seed=0)
    track = martingale_track(TreeParams(0, 3, 0.5), 5, 500, seed=0, condition=True)
    assert track.discarded > 0
    assert track.trials + track.discarded == 500
    with pytest.raises(ParameterError):
        martingale_track(TreeParams(2, 3, 0.5), 5, 1, seed=0)


def test_sup_inverse_quantile_stable():
    params = TreeParams(1, 3, 0.5)
    q = [np.quantile(martingale_track(params, h, 10_000, seed=11).sup_inverse, 0.99) for h in (6, 8, 10)]
    assert all(np.isfinite(q))
    assert max(q) / min(q) < 1.5
    assert q[0] <= q[1] <= q[2]  # a sup over more levels can only grow


# growth condition and all-closed probability -------------------------------


def test_growth_condition_examples():
    assert growth_condition_check(TreeParams(2, 3, 0.5), TreeParams(2, 3, 0.5)).satisfied
    assert growth_condition_check(TreeParams(1, 3, 0.5), TreeParams(2, 2, 0.9)).satisfied
    rep = growth_condition_check(TreeParams(2, 3, 0.5), TreeParams(1, 3, 0.5))
    assert not rep.satisfied
    assert str(rep) == "violated: 2.5 vs 2"
    assert growth_condition_check(TreeParams(2, 3, 0.5), TreeParams(1, 3, 0.5), tolerance=0.5).satisfied


def test_marked_edge_budget():
    assert marked_edge_budget(TreeParams(2, 3, 0.5), 1) == 9
    assert marked_edge_budget(TreeParams(2, 3, 0.5), 3) == 3 * 15
    assert marked_edge_budget(TreeParams(1, 4, 0.5), 5) == 4 * 6
    with pytest.raises(ParameterError):
        marked_edge_budget(TreeParams(1, 4, 0.5), -1)


def test_all_closed_probability():
    p = TreeParams(2, 3, 0.5)
    assert all_closed_probability(TreeParams(2, 3, 0), TreeParams(1, 3, 0), 4).probability == 1
    assert all_closed_probability(TreeParams(2, 3, 1), p, 2).probability == 0
    rep = all_closed_probability(TreeParams(1, 3, 0.5), p, 1)
    assert (rep.m_left, rep.m_right) == (6, 9)
    assert rep.probability == Fraction(1, 2**30)
    third = all_closed_probability(TreeParams(2, 3, 0.1), TreeParams(2, 3, 0.1), 1)
    assert third.probability == Fraction(9, 10) ** 36
    assert rep.to_dict()["probability_den"] == 2**30


# Følner experiment ---------------------------------------------------------


def test_folner_deterministic_series():
    p = TreeParams(2, 2, 1.0)
    series = run_folner_experiment(p, p, range(0, 8), 5, seed=1)
    assert [r.median for r in series.rows] == [Fraction(2, 2 * h + 1) for h in range(8)]
    assert all(r.discarded == 0 for r in series.rows)
    assert series.strictly_decreasing()
    assert series.scaled_spread() == 1
    assert not series.exploratory


def test_folner_parallel_matches_serial():
    p = TreeParams(1, 3, 0.5)
    serial = run_folner_experiment(p, p, range(2, 6), 200, seed=3, jobs=1)
    parallel = run_folner_experiment(p, p, range(2, 6), 200, seed=3, jobs=2)
    assert serial.rows == parallel.rows
    assert serial.to_csv() == parallel.to_csv()


def test_folner_flags_and_errors():
    series = run_folner_experiment(TreeParams(2, 3, 0.5), TreeParams(1, 3, 0.5), range(1, 3), 20, seed=0)
    assert series.exploratory
    with pytest.raises(ParameterError):
        run_folner_experiment(TreeParams(0, 3, 0.5), TreeParams(1, 3, 0.5), range(1, 3), 20, seed=0)
    with pytest.raises(ParameterError):
        run_folner_experiment(TreeParams(1, 3, 0.5), TreeParams(1, 3, 0.5), range(1, 3), 0, seed=0)


def test_folner_extinction_discards():
    p = TreeParams(0, 2, 0.6)
    series = run_folner_experiment(p, p, [3], 200, seed=4, allow_extinction=True)
    row = series.rows[0]
    assert row.discarded > 0 and row.trials == 200


def test_folner_random_above_deterministic_floor():
    p = TreeParams(1, 3, 0.5)
    series = run_folner_experiment(p, p, range(1, 5), 300, seed=8)
    for r in series.rows:
        assert r.median > 0
        assert r.q10 <= float(r.median) <= r.q90


def test_folner_csv():
    p = TreeParams(1, 3, 0.5)
    series = run_folner_experiment(p, p, range(1, 4), 50, seed=2)
    rows = list(csv.reader(io.StringIO(series.to_csv())))
    assert rows[0] == CSV_COLUMNS
    assert [int(r[0]) for r in rows[1:]] == [1, 2, 3]
    for r, row in zip(rows[1:], series.rows):
        assert Fraction(int(r[3]), int(r[4])) == row.median
    assert series.to_dict()["rows"][0]["h"] == 1


def test_exact_median():
    assert exact_median([Fraction(3), Fraction(1), Fraction(2)]) == 2
    assert exact_median([Fraction(1), Fraction(2)]) == Fraction(3, 2)
    with pytest.raises(ParameterError):
        exact_median([])


def test_folner_golden_regression():
    # pinned from the first run of the (1,3,0.5) x (1,3,0.5), seed 7, 1000-trial experiment
    p = TreeParams(1, 3, 0.5)
    series = run_folner_experiment(p, p, range(3, 11), 1000, seed=7)
    assert series.rows[0].median == Fraction(18223, 59850)
    assert series.rows[-1].median == Fraction(28844680809353, 261693731615435)
    assert series.scaled_spread() == pytest.approx(1.0860203213080444, rel=1e-12)
