"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

from bisect import bisect_right

import numpy as np
import pytest

from alphadigger import dataset
from alphadigger.dataset import SplitSpec, SynthConfig


def lexicon_scores(posts, cfg: SynthConfig) -> list[float]:
    """Simple planted-token sentiment: (pos + 1) / (pos + neg + 2)."""
    pos, neg = set(cfg.pos_tokens), set(cfg.neg_tokens)
    out = []
    for p in posts:
        toks = p.text.split()
        a = sum(t in pos for t in toks)
        b = sum(t in neg for t in toks)
        out.append((a + 1) / (a + b + 2))
    return out


def build_tabular_task(shift_delta: float, seed: int = 42,
                       signal_strength: float = 0.3):
    """Synthetic tabular task: train/test1 from the before period (day-level
    split) and test2 from the during period."""
    cfg = SynthConfig(n_posts=5000, n_days=250, signal_strength=signal_strength,
                      shift_delta=shift_delta, noise_rate=0.02,
                      before_fraction=0.7)
    posts, bars, tags = dataset.generate_synthetic(cfg, seed)
    scores = lexicon_scores(posts, cfg)
    ing = dataset.assemble_rows(posts, scores, bars)
    bar_dates = [b.date for b in bars]
    kept_tags = [t for p, t in zip(posts, tags)
                 if bisect_right(bar_dates, p.date) < len(bar_dates)]
    assert len(kept_tags) == len(ing.rows)
    before = [(r, d) for r, d, t in zip(ing.rows, ing.dates, kept_tags)
              if t == "before"]
    test2 = [r for r, t in zip(ing.rows, kept_tags) if t == "during"]
    rows = [r for r, _ in before]
    dates = [d for _, d in before]
    train, test1 = dataset.split_by_day(
        rows, dates, SplitSpec(train_fraction=0.8, shuffle_seed=9))
    return train, test1, test2


def accuracy(model, rows) -> float:
    from alphadigger import tabular
    X, y = dataset.rows_to_arrays(rows)
    return float(np.mean(tabular.predict_label(model, X) == y))


@pytest.fixture(scope="session")
def small_rows():
    """A small deterministic FeatureRow sample for fast tabular tests."""
    train, test1, _ = build_tabular_task(0.0, seed=7)
    return train[:600], test1[:200]
