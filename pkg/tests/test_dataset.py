"""Tests for ingestion, labels, splits, the synthetic generator, and CSV I/O."""

import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from alphadigger import dataset
from alphadigger.dataset import (
    BlogPost, FeatureRow, PriceBar, SplitSpec, SynthConfig,
    assemble_rows, compute_label, compute_return, generate_synthetic,
    read_posts_csv, read_prices_csv, read_rows_csv, rows_to_arrays, split,
    split_by_day, write_posts_csv, write_prices_csv, write_rows_csv,
)
from alphadigger.errors import ConfigError, DataError, FormatError

D = dt.date


def bar(day, o=100.0, h=101.0, lo=99.0, c=100.5):
    return PriceBar(date=D(2020, 1, day), open=o, high=h, low=lo, close=c)


def post(day, text="hello world", thumbs=1, comments=2, forwards=3):
    return BlogPost(date=D(2020, 1, day), text=text, thumbs=thumbs,
                    comments=comments, forwards=forwards)


class TestInvariants:
    def test_bar_rejects_open_outside_range(self):
        with pytest.raises(DataError):
            PriceBar(date=D(2020, 1, 1), open=102.0, high=101.0, low=99.0, close=100.0)

    def test_bar_rejects_close_outside_range(self):
        with pytest.raises(DataError):
            PriceBar(date=D(2020, 1, 1), open=100.0, high=101.0, low=99.0, close=98.0)

    def test_bar_rejects_non_positive_low(self):
        with pytest.raises(DataError):
            PriceBar(date=D(2020, 1, 1), open=0.0, high=1.0, low=0.0, close=0.5)

    def test_post_rejects_negative_counts(self):
        with pytest.raises(DataError):
            BlogPost(date=D(2020, 1, 1), text="x", thumbs=-1, comments=0, forwards=0)

    def test_post_rejects_blank_text(self):
        with pytest.raises(DataError):
            BlogPost(date=D(2020, 1, 1), text="   ", thumbs=0, comments=0, forwards=0)

    def test_row_rejects_sentiment_outside_unit_interval(self):
        with pytest.raises(DataError):
            FeatureRow(sentiment=1.5, thumbs=0, comments=0, forwards=0,
                       high=1.0, low=0.5, open=0.7, label=0)

    def test_row_rejects_bad_label(self):
        with pytest.raises(DataError):
            FeatureRow(sentiment=0.5, thumbs=0, comments=0, forwards=0,
                       high=1.0, low=0.5, open=0.7, label=2)


class TestReturnsAndLabels:
    def test_return_formula(self):
        assert compute_return(100.0, 103.0) == pytest.approx(0.03)
        assert compute_return(200.0, 190.0) == pytest.approx(-0.05)

    def test_return_rejects_non_positive_price(self):
        with pytest.raises(DataError):
            compute_return(0.0, 1.0)

    def test_label_strictly_positive_return(self):
        assert compute_label(100.0, 100.01) == 1
        assert compute_label(100.0, 100.0) == 0
        assert compute_label(100.0, 99.0) == 0


class TestAssembleRows:
    def test_basic_mapping_and_label(self):
        bars = [bar(1, c=100.0), bar(2, c=101.0), bar(3, c=100.0)]
        ing = assemble_rows([post(1), post(2)], [0.4, 0.6], bars)
        assert ing.skipped == 0
        assert [r.label for r in ing.rows] == [1, 0]
        assert ing.dates == [D(2020, 1, 1), D(2020, 1, 2)]

    def test_non_trading_day_maps_forward(self):
        bars = [bar(1, c=100.0), bar(4, c=101.0), bar(5, c=99.0)]
        ing = assemble_rows([post(2)], [0.5], bars)
        assert ing.skipped == 0
        assert ing.dates == [D(2020, 1, 4)]
        assert ing.rows[0].label == 0

    def test_posts_without_next_bar_are_skipped(self):
        bars = [bar(1, c=100.0), bar(2, c=101.0)]
        ing = assemble_rows([post(2), post(3)], [0.5, 0.5], bars)
        assert ing.rows == []
        assert ing.skipped == 2

    def test_misaligned_sentiments_rejected(self):
        with pytest.raises(DataError):
            assemble_rows([post(1)], [0.5, 0.5], [bar(1), bar(2)])

    def test_unsorted_bars_rejected(self):
        with pytest.raises(DataError):
            assemble_rows([post(1)], [0.5], [bar(2), bar(1)])


class TestSplit:
    def test_round_half_up_train_size(self):
        rows = list(range(5))
        train, test = split(rows, SplitSpec(train_fraction=0.5, shuffle_seed=1))
        # 2.5 rounds half-up to 3
        assert (len(train), len(test)) == (3, 2)

    def test_split_is_seeded(self):
        rows = list(range(100))
        a = split(rows, SplitSpec(train_fraction=0.8, shuffle_seed=3))
        b = split(rows, SplitSpec(train_fraction=0.8, shuffle_seed=3))
        c = split(rows, SplitSpec(train_fraction=0.8, shuffle_seed=4))
        assert a == b
        assert a != c

    def test_full_test_mode(self):
        rows = list(range(4))
        train, test = split(rows, SplitSpec(mode="full-test", train_fraction=0.0))
        assert train == []
        assert test == rows

    def test_empty_rows_rejected(self):
        with pytest.raises(DataError):
            split([], SplitSpec())

    def test_bad_fraction_rejected(self):
        with pytest.raises(ConfigError):
            SplitSpec(train_fraction=1.0)
        with pytest.raises(ConfigError):
            SplitSpec(mode="full-test", train_fraction=0.5)

    @given(st.lists(st.integers(), min_size=1, max_size=200),
           st.floats(min_value=0.05, max_value=0.95),
           st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=200, deadline=None)
    def test_split_is_a_partition(self, rows, fraction, seed):
        train, test = split(rows, SplitSpec(train_fraction=fraction,
                                            shuffle_seed=seed))
        assert len(train) + len(test) == len(rows)
        assert sorted(train + test) == sorted(rows)

    def test_split_by_day_keeps_days_whole(self):
        rows = list(range(12))
        dates = [D(2020, 1, 1 + i // 3) for i in range(12)]
        train, test = split_by_day(rows, dates,
                                   SplitSpec(train_fraction=0.5, shuffle_seed=0))
        by_day = {d: [] for d in set(dates)}
        for r, d in zip(rows, dates):
            by_day[d].append(r)
        for day_rows in by_day.values():
            in_train = [r in train for r in day_rows]
            assert all(in_train) or not any(in_train)

    def test_split_by_day_misaligned_rejected(self):
        with pytest.raises(DataError):
            split_by_day([1, 2], [D(2020, 1, 1)], SplitSpec())


class TestSynthConfig:
    def test_rejects_more_days_than_posts(self):
        with pytest.raises(ConfigError):
            SynthConfig(n_posts=10, n_days=20)

    def test_rejects_overlapping_token_sets(self):
        with pytest.raises(ConfigError):
            SynthConfig(pos_tokens=("up", "x"), neg_tokens=("x", "down"))

    def test_rejects_bad_signal_strength(self):
        with pytest.raises(ConfigError):
            SynthConfig(signal_strength=1.5)


class TestGenerateSynthetic:
    def test_deterministic_for_seed(self):
        cfg = SynthConfig(n_posts=200, n_days=30)
        a = generate_synthetic(cfg, 5)
        b = generate_synthetic(cfg, 5)
        assert a == b
        c = generate_synthetic(cfg, 6)
        assert a != c

    def test_shapes_and_tags(self):
        cfg = SynthConfig(n_posts=300, n_days=40, before_fraction=0.5)
        posts, bars, tags = generate_synthetic(cfg, 1)
        assert len(posts) == 300
        assert len(bars) == 40
        assert len(tags) == 300
        assert set(tags) <= {"before", "during"}
        assert "before" in tags and "during" in tags

    def test_bars_satisfy_invariants_and_are_sorted(self):
        cfg = SynthConfig(n_posts=500, n_days=60)
        _, bars, _ = generate_synthetic(cfg, 2)
        for a, b in zip(bars, bars[1:]):
            assert a.date < b.date
        # PriceBar.__post_init__ already enforces low <= open/close <= high

    def test_posts_use_configured_vocabulary(self):
        cfg = SynthConfig(n_posts=200, n_days=20)
        posts, _, _ = generate_synthetic(cfg, 3)
        vocab = set(cfg.vocab)
        for p in posts:
            assert set(p.text.split()) <= vocab

    def test_zero_shift_keeps_periods_aligned(self):
        """With shift_delta 0 the during-period count distribution matches the
        before period (same means within sampling error)."""
        cfg = SynthConfig(n_posts=20000, n_days=400, shift_delta=0.0)
        posts, _, tags = generate_synthetic(cfg, 4)
        before = [p.thumbs for p, t in zip(posts, tags) if t == "before"]
        during = [p.thumbs for p, t in zip(posts, tags) if t == "during"]
        # day-level latent variance dominates: sd of the period mean is
        # roughly 300 * 0.29 / sqrt(days-in-period)
        assert abs(np.mean(before) - np.mean(during)) < 30.0

    def test_shift_moves_count_means(self):
        cfg = SynthConfig(n_posts=6000, n_days=100, shift_delta=0.5)
        posts, _, tags = generate_synthetic(cfg, 4)
        before = [p.thumbs for p, t in zip(posts, tags) if t == "before"]
        during = [p.thumbs for p, t in zip(posts, tags) if t == "during"]
        # means shift by shift_delta * gap = 150
        assert np.mean(during) - np.mean(before) > 100.0


class TestCsvRoundTrips:
    def test_prices_round_trip(self, tmp_path):
        cfg = SynthConfig(n_posts=100, n_days=25)
        _, bars, _ = generate_synthetic(cfg, 7)
        path = tmp_path / "prices.csv"
        write_prices_csv(path, bars)
        assert read_prices_csv(path) == bars

    def test_posts_round_trip_with_period(self, tmp_path):
        cfg = SynthConfig(n_posts=100, n_days=25)
        posts, _, tags = generate_synthetic(cfg, 7)
        path = tmp_path / "posts.csv"
        write_posts_csv(path, posts, tags)
        got_posts, got_tags = read_posts_csv(path)
        assert got_posts == posts
        assert got_tags == tags

    def test_posts_round_trip_without_period(self, tmp_path):
        posts = [post(1), post(2, text="a b c")]
        path = tmp_path / "posts.csv"
        write_posts_csv(path, posts)
        got_posts, got_tags = read_posts_csv(path)
        assert got_posts == posts
        assert got_tags is None

    def test_rows_round_trip_preserves_sentiment_exactly(self, tmp_path):
        rows = [FeatureRow(sentiment=1 / 3, thumbs=5, comments=2, forwards=0,
                           high=101.5, low=99.0, open=100.0, label=1),
                FeatureRow(sentiment=0.1234567890123456, thumbs=0, comments=0,
                           forwards=9, high=50.0, low=49.0, open=49.5, label=0)]
        path = tmp_path / "rows.csv"
        write_rows_csv(path, rows)
        assert read_rows_csv(path) == rows

    def test_prices_bad_header_rejected(self, tmp_path):
        path = tmp_path / "prices.csv"
        path.write_text("date,open,close\n2020-01-01,1,2\n")
        with pytest.raises(FormatError):
            read_prices_csv(path)

    def test_prices_bad_value_reports_line(self, tmp_path):
        path = tmp_path / "prices.csv"
        path.write_text("date,open,high,low,close\n2020-01-01,1,oops,0.5,1\n")
        with pytest.raises(FormatError, match="line 2"):
            read_prices_csv(path)

    def test_rows_bad_header_rejected(self, tmp_path):
        path = tmp_path / "rows.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(FormatError):
            read_rows_csv(path)


class TestRowsToArrays:
    def test_shapes_and_dtype(self):
        rows = [FeatureRow(sentiment=0.5, thumbs=1, comments=2, forwards=3,
                           high=10.0, low=9.0, open=9.5, label=1)]
        X, y = rows_to_arrays(rows)
        assert X.shape == (1, 7)
        assert X.dtype == np.float64
        assert y.tolist() == [1]
        np.testing.assert_allclose(X[0], [0.5, 1, 2, 3, 10.0, 9.0, 9.5])

    def test_empty_rows(self):
        X, y = rows_to_arrays([])
        assert X.shape == (0, 7)
        assert y.shape == (0,)
