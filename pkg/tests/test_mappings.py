from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from periodic_demand.core import ValidationError
from periodic_demand.mappings import (
    DEFAULT_TAGS, MAX, MEAN, Q2, Q3, CandidateSet, PeriodicDemand, build_candidate_set,
    exact_total, known_tags, load_candidates_csv, map_periodic, raw_statistic,
    register_mapping, save_candidates_csv,
)

matrices = arrays(np.int64, st.tuples(st.integers(1, 12), st.integers(1, 5)),
                  elements=st.integers(0, 1000))


def test_constant_column_fixed_point():
    Y = np.full((4, 1), 4)
    for tag in DEFAULT_TAGS:
        assert map_periodic(Y, tag).values.tolist() == [4]


def test_one_to_four_column():
    Y = np.array([[1], [2], [3], [4]])
    got = {tag: map_periodic(Y, tag).values[0] for tag in DEFAULT_TAGS}
    assert got == {MAX: 4, MEAN: 3, Q2: 3, Q3: 3}
    assert raw_statistic(Y, Q3)[0] == 3.25
    assert raw_statistic(Y, Q2)[0] == 2.5


def test_single_row():
    Y = np.array([[3, 0, 8]])
    for tag in DEFAULT_TAGS:
        assert map_periodic(Y, tag).values.tolist() == [3, 0, 8]


def test_constant_matrix_gives_identical_candidates():
    cands = build_candidate_set(np.full((5, 3), 2))
    assert cands.tags == DEFAULT_TAGS
    assert all(c.values.tolist() == [2, 2, 2] for c in cands)


def test_same_mean_different_spread():
    flat = np.full((5, 1), 10)
    spiky = np.array([[4], [4], [4], [4], [34]])
    a, b = build_candidate_set(flat), build_candidate_set(spiky)
    assert a.get(MEAN).values.tolist() == b.get(MEAN).values.tolist()
    for tag in (MAX, Q2, Q3):
        assert a.get(tag).values.tolist() != b.get(tag).values.tolist()


def test_mean_total_is_exact():
    Y = np.array([[1, 2], [2, 2], [2, 3]])
    assert exact_total(Y, MEAN) == Fraction(12, 3)
    Y = np.array([[1], [1], [2]])
    assert exact_total(Y, MEAN) == Fraction(4, 3)
    assert map_periodic(Y, MEAN).raw_total == Fraction(4, 3)


@settings(max_examples=200, deadline=None)
@given(matrices)
def test_order_statistics_monotone(Y):
    q2, q3, mx = (raw_statistic(Y, t) for t in (Q2, Q3, MAX))
    assert np.all(q2 <= q3) and np.all(q3 <= mx)
    r2, r3, rm = (map_periodic(Y, t).values for t in (Q2, Q3, MAX))
    assert np.all(r2 <= r3) and np.all(r3 <= rm)


@settings(max_examples=200, deadline=None)
@given(matrices)
def test_mean_total_matches_actual_mean_total(Y):
    assert exact_total(Y, MEAN) == Fraction(int(Y.sum()), Y.shape[0])


@settings(max_examples=100, deadline=None)
@given(matrices)
def test_candidates_are_nonnegative_integers_within_range(Y):
    for c in build_candidate_set(Y):
        assert c.values.dtype == np.int64
        assert np.all(c.values >= Y.min(axis=0)) and np.all(c.values <= Y.max(axis=0))


def test_unknown_tag_and_empty_matrix():
    with pytest.raises(ValidationError):
        map_periodic(np.ones((2, 2)), "Q9")
    with pytest.raises(ValidationError):
        map_periodic(np.zeros((0, 2)), MEAN)


def test_register_mapping():
    tag = "MIN_TEST"
    if tag not in known_tags():
        register_mapping(tag, lambda Y: Y.min(axis=0))
    assert map_periodic(np.array([[3], [1]]), tag).values.tolist() == [1]
    with pytest.raises(ValueError):
        register_mapping(tag, lambda Y: Y.min(axis=0))


def test_candidate_set_validation():
    with pytest.raises(ValidationError):
        CandidateSet(())
    c = PeriodicDemand(np.array([1]), MEAN)
    with pytest.raises(ValidationError):
        CandidateSet((c, c))
    with pytest.raises(ValidationError):
        PeriodicDemand(np.array([1.5]), MEAN)


def test_candidates_csv_round_trip(tmp_path):
    cands = build_candidate_set(np.array([[1, 5], [3, 9], [2, 2]]))
    p = tmp_path / "c.csv"
    save_candidates_csv(cands, p)
    back = load_candidates_csv(p, 2)
    assert back.tags == cands.tags
    assert all(a == b for a, b in zip(back, cands))
    p.write_text("mapping,commodity_id,value\nMAX,0,1\n")
    with pytest.raises(ValidationError):
        load_candidates_csv(p, 2)
