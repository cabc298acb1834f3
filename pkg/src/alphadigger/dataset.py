"""Price/blog ingestion, movement labels, feature rows, splits, and the
seeded synthetic corpus generator with a distribution-shift knob."""

from __future__ import annotations

import bisect
import csv
import datetime as dt
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ConfigError, FormatError

FEATURE_NAMES = ("sentiment", "thumbs", "comments", "forwards", "high", "low", "open")
ROW_HEADER = FEATURE_NAMES + ("label",)


@dataclass(frozen=True)
class PriceBar:
    date: dt.date
    open: float
    high: float
    low: float
    close: float

    def __post_init__(self):
        if not (self.low > 0):
            raise DataError(f"bar {self.date}: low must be positive, got {self.low}")
        if not (self.low <= self.open <= self.high):
            raise DataError(f"bar {self.date}: open {self.open} outside [low, high]")
        if not (self.low <= self.close <= self.high):
            raise DataError(f"bar {self.date}: close {self.close} outside [low, high]")


@dataclass(frozen=True)
class BlogPost:
    date: dt.date
    text: str
    thumbs: int
    comments: int
    forwards: int

    def __post_init__(self):
        if min(self.thumbs, self.comments, self.forwards) < 0:
            raise DataError(f"post {self.date}: counts must be non-negative")
        if not self.text.strip():
            raise DataError(f"post {self.date}: empty text")


@dataclass(frozen=True)
class FeatureRow:
    sentiment: float
    thumbs: int
    comments: int
    forwards: int
    high: float
    low: float
    open: float
    label: int

    def __post_init__(self):
        if not (0.0 <= self.sentiment <= 1.0):
            raise DataError(f"sentiment {self.sentiment} outside [0, 1]")
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label}")
        if self.low > self.high:
            raise DataError(f"low {self.low} > high {self.high}")

    def features(self) -> np.ndarray:
        return np.array(
            [self.sentiment, self.thumbs, self.comments, self.forwards,
             self.high, self.low, self.open],
            dtype=np.float64,
        )


def rows_to_arrays(rows: list[FeatureRow]) -> tuple[np.ndarray, np.ndarray]:
    """Stack FeatureRows into (X, y) float64/int arrays."""
    if not rows:
        return np.zeros((0, len(FEATURE_NAMES))), np.zeros(0, dtype=np.int64)
    X = np.stack([r.features() for r in rows])
    y = np.array([r.label for r in rows], dtype=np.int64)
    return X, y


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "fraction-holdout"  # or "full-test"
    train_fraction: float = 0.8
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.mode not in ("fraction-holdout", "full-test"):
            raise ConfigError(f"unknown split mode {self.mode!r}")
        if self.mode == "fraction-holdout" and not (0.0 < self.train_fraction < 1.0):
            raise ConfigError("fraction-holdout requires 0 < train_fraction < 1")
        if self.mode == "full-test" and self.train_fraction != 0.0:
            raise ConfigError("full-test forces train_fraction = 0")


DEFAULT_POS_TOKENS = ("surge", "rally", "bull", "gain", "upbeat", "strong", "boom", "optimistic")
DEFAULT_NEG_TOKENS = ("slump", "crash", "bear", "loss", "gloomy", "weak", "bust", "pessimistic")
DEFAULT_NEUTRAL_TOKENS = (
    "market", "index", "stock", "share", "volume", "close", "open", "trade",
    "session", "board", "report", "daily", "note", "today", "investor", "fund",
)


@dataclass(frozen=True)
class SynthConfig:
    n_posts: int = 5000
    n_days: int = 250
    pos_tokens: tuple = DEFAULT_POS_TOKENS
    neg_tokens: tuple = DEFAULT_NEG_TOKENS
    neutral_tokens: tuple = DEFAULT_NEUTRAL_TOKENS
    signal_strength: float = 0.9
    shift_delta: float = 0.5
    noise_rate: float = 0.02
    before_fraction: float = 0.7  # fraction of days tagged "before"
    start_date: dt.date = dt.date(2019, 1, 1)

    def __post_init__(self):
        if self.n_posts < 1 or self.n_days < 2:
            raise ConfigError("need n_posts >= 1 and n_days >= 2")
        if self.n_posts < self.n_days:
            raise ConfigError("need n_posts >= n_days")
        if set(self.pos_tokens) & set(self.neg_tokens):
            raise ConfigError("planted positive and negative token sets must be disjoint")
        if not self.pos_tokens or not self.neg_tokens:
            raise ConfigError("planted token sets must be non-empty")
        if not (0.0 <= self.signal_strength <= 1.0):
            raise ConfigError("signal_strength must be in [0, 1]")
        if self.shift_delta < 0:
            raise ConfigError("shift_delta must be >= 0")
        if not (0.0 <= self.noise_rate < 1.0):
            raise ConfigError("noise_rate must be in [0, 1)")
        if not (0.0 < self.before_fraction <= 1.0):
            raise ConfigError("before_fraction must be in (0, 1]")

    @property
    def vocab(self) -> tuple:
        return tuple(self.pos_tokens) + tuple(self.neg_tokens) + tuple(self.neutral_tokens)


@dataclass
class IngestSummary:
    rows: list
    skipped: int
    dates: list  # trading day per row, aligned with rows


def compute_return(p_t: float, p_next: float) -> float:
    """Next-day simple return (p_next - p_t) / p_t."""
    if p_t <= 0:
        raise DataError(f"non-positive price {p_t}")
    return (p_next - p_t) / p_t


def compute_label(p_t: float, p_next: float) -> int:
    """1 iff the next-day return is strictly positive, else 0."""
    return 1 if compute_return(p_t, p_next) > 0 else 0


def _check_bars(bars: list[PriceBar]) -> None:
    for a, b in zip(bars, bars[1:]):
        if b.date <= a.date:
            raise DataError(f"bar dates not strictly increasing at {b.date}")


def assemble_rows(
    posts: list[BlogPost],
    sentiments: list[float],
    bars: list[PriceBar],
) -> IngestSummary:
    """Build one FeatureRow per post from its trading-day bar and next-day close.

    Posts dated on non-trading days map forward to the next bar. Posts with
    no resolvable trading day or no next bar are skipped and counted.
    """
    if len(posts) != len(sentiments):
        raise DataError(f"{len(posts)} posts but {len(sentiments)} sentiments")
    _check_bars(bars)
    dates = [b.date for b in bars]
    rows: list[FeatureRow] = []
    row_dates: list[dt.date] = []
    skipped = 0
    for post, s in zip(posts, sentiments):
        i = bisect.bisect_left(dates, post.date)
        if i >= len(bars) - 1:  # no bar at/after post date with a next bar
            skipped += 1
            continue
        bar, nxt = bars[i], bars[i + 1]
        row_dates.append(bar.date)
        rows.append(FeatureRow(
            sentiment=s,
            thumbs=post.thumbs,
            comments=post.comments,
            forwards=post.forwards,
            high=bar.high,
            low=bar.low,
            open=bar.open,
            label=compute_label(bar.close, nxt.close),
        ))
    return IngestSummary(rows=rows, skipped=skipped, dates=row_dates)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split(rows: list, spec: SplitSpec) -> tuple[list, list]:
    """Seeded shuffle split into (train, test); full-test mode returns ([], rows)."""
    if not rows:
        raise DataError("cannot split empty row list")
    if spec.mode == "full-test":
        return [], list(rows)
    rng = np.random.default_rng(spec.shuffle_seed)
    order = rng.permutation(len(rows))
    n_train = _round_half_up(spec.train_fraction * len(rows))
    train = [rows[i] for i in order[:n_train]]
    test = [rows[i] for i in order[n_train:]]
    return train, test


def split_by_day(rows: list, dates: list, spec: SplitSpec) -> tuple[list, list]:
    """Split whole trading days so same-day rows never straddle the boundary."""
    if not rows:
        raise DataError("cannot split empty row list")
    if len(rows) != len(dates):
        raise DataError("rows and dates misaligned")
    if spec.mode == "full-test":
        return [], list(rows)
    days = sorted(set(dates))
    rng = np.random.default_rng(spec.shuffle_seed)
    order = rng.permutation(len(days))
    n_train = _round_half_up(spec.train_fraction * len(days))
    train_days = {days[i] for i in order[:n_train]}
    train = [r for r, d in zip(rows, dates) if d in train_days]
    test = [r for r, d in zip(rows, dates) if d not in train_days]
    return train, test


# Count-feature geometry for the synthetic generator. A latent day score
# t in [0, 1] drives next-day movement through a middle-band rule
# (label 1 iff 0.25 < t < 0.75), and thumbs/comments are noisy linear
# encodings of t. The band is nonlinear in the counts (no single linear
# threshold can represent it) but greedy axis-aligned splits recover it.
# The during-period shift moves the count means by shift_delta times the
# encoding gap.
_BAND_LO, _BAND_HI = 0.25, 0.75
_BAND_MARGIN = 0.03


def _latent_scores(rng, n: int) -> np.ndarray:
    """Uniform latent scores pushed out of a small margin around the band
    edges, so the planted rule stays recoverable at finite sample sizes."""
    t = rng.random(n) if n != 1 else np.array([rng.random()])
    for edge in (_BAND_LO, _BAND_HI):
        near = np.abs(t - edge) < _BAND_MARGIN
        t = np.where(near, edge + np.sign(t - edge) * _BAND_MARGIN, t)
    return t
_THUMBS_BASE, _THUMBS_GAP, _THUMBS_SD = 50.0, 300.0, 3.0
_COMMENTS_BASE, _COMMENTS_GAP, _COMMENTS_SD = 20.0, 120.0, 1.5
_FORWARDS_MEAN = 3.0


def generate_synthetic(
    cfg: SynthConfig, seed: int
) -> tuple[list[BlogPost], list[PriceBar], list[str]]:
    """Seeded synthetic corpus: posts, bars, and a before/during tag per post.

    Each day has a latent score t in [0, 1]; next-day movement is up exactly
    when t falls inside the middle band (the planted nonlinear rule). Post
    engagement counts encode t and planted positive/negative tokens match the
    movement with probability 0.5 + 0.5 * signal_strength per token. Each post
    is off-topic with probability noise_rate: its counts and text polarity are
    drawn from a fresh uniform latent score unrelated to the day. During-period
    posts have text polarity inverted with probability shift_delta and their
    count means shifted by shift_delta times the cluster gap, so
    shift_delta = 0 makes the two periods statistically identical.
    """
    rng = np.random.default_rng(seed)
    n_before_days = max(1, _round_half_up(cfg.before_fraction * cfg.n_days))

    # Latent day scores and movement directions (last day carries no label).
    n_lab = cfg.n_days - 1
    t_score = _latent_scores(rng, n_lab)
    u = ((t_score > _BAND_LO) & (t_score < _BAND_HI)).astype(np.int64)

    # Bars: the close path follows the planted directions on a coarse tick grid
    # with tight mean reversion, so bar values repeat across many days and a
    # single day's bar never uniquely identifies that day to a classifier.
    tick, anchor = 10.0, 3000.0
    dates = [cfg.start_date + dt.timedelta(days=d) for d in range(cfg.n_days)]
    closes = np.empty(cfg.n_days)
    closes[0] = anchor
    for d in range(n_lab):
        direction = 1 if u[d] == 1 else -1
        toward = (closes[d] - anchor) * direction < 0
        n_ticks = rng.integers(2, 4) if toward else 1
        closes[d + 1] = closes[d] + direction * n_ticks * tick
    bars = []
    # Open/high/low snap to a coarse reporting grid (a multiple of the tick)
    # so the published bar values repeat across many days.
    grid = 5.0 * tick
    for d in range(cfg.n_days):
        lo_raw = closes[d] - tick * rng.integers(0, 2)
        hi_raw = closes[d] + tick * rng.integers(0, 2)
        opn_raw = rng.uniform(lo_raw, hi_raw)
        lo = grid * math.floor(lo_raw / grid)
        hi = grid * math.ceil(hi_raw / grid)
        if hi == lo:
            hi = lo + grid
        opn = min(max(grid * round(opn_raw / grid), lo), hi)
        bars.append(PriceBar(date=dates[d], open=round(opn, 3),
                             high=round(hi, 3), low=round(lo, 3),
                             close=round(closes[d], 3)))

    day_idx = np.sort(rng.integers(0, n_lab, cfg.n_posts))
    posts: list[BlogPost] = []
    tags: list[str] = []
    pos, neg, neu = list(cfg.pos_tokens), list(cfg.neg_tokens), list(cfg.neutral_tokens)
    for d in day_idx:
        during = d >= n_before_days
        shift = cfg.shift_delta if during else 0.0
        # Off-topic posts carry no information about their day.
        if rng.random() < cfg.noise_rate:
            t_eff = float(_latent_scores(rng, 1)[0])
            u_eff = int(_BAND_LO < t_eff < _BAND_HI)
        else:
            t_eff, u_eff = t_score[d], int(u[d])
        # During-period polarity inversion attenuates the text signal.
        invert = during and rng.random() < cfg.shift_delta
        match = (1 - u_eff) if invert else u_eff
        q = 0.5 + 0.5 * cfg.signal_strength
        n_planted = 3 + rng.poisson(2)
        n_neutral = 2 + rng.poisson(3)
        tokens = []
        for _ in range(n_planted):
            hit = rng.random() < q
            side = match if hit else 1 - match
            pool = pos if side == 1 else neg
            tokens.append(pool[rng.integers(0, len(pool))])
        if neu:
            for _ in range(n_neutral):
                tokens.append(neu[rng.integers(0, len(neu))])
        perm = rng.permutation(len(tokens))
        text = " ".join(tokens[i] for i in perm)

        thumbs = max(0, _round_half_up(rng.normal(
            _THUMBS_BASE + _THUMBS_GAP * (t_eff + shift), _THUMBS_SD)))
        comments = max(0, _round_half_up(rng.normal(
            _COMMENTS_BASE + _COMMENTS_GAP * (t_eff + shift), _COMMENTS_SD)))
        forwards = int(rng.poisson(_FORWARDS_MEAN))

        posts.append(BlogPost(date=dates[d], text=text, thumbs=int(thumbs),
                              comments=int(comments), forwards=int(forwards)))
        tags.append("during" if during else "before")
    return posts, bars, tags


# ---------------------------------------------------------------------------
# CSV interfaces

def write_prices_csv(path, bars: list[PriceBar]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["date", "open", "high", "low", "close"])
        for b in bars:
            w.writerow([b.date.isoformat(), b.open, b.high, b.low, b.close])


def read_prices_csv(path) -> list[PriceBar]:
    bars = []
    with open(path, newline="", encoding="utf-8") as f:
        r = csv.DictReader(f)
        if r.fieldnames != ["date", "open", "high", "low", "close"]:
            raise FormatError(f"{path}: expected header date,open,high,low,close")
        for i, rec in enumerate(r, start=2):
            try:
                bars.append(PriceBar(
                    date=dt.date.fromisoformat(rec["date"]),
                    open=float(rec["open"]), high=float(rec["high"]),
                    low=float(rec["low"]), close=float(rec["close"])))
            except (ValueError, TypeError) as e:
                raise FormatError(f"{path}: line {i}: {e}") from e
    _check_bars(bars)
    return bars


def write_posts_csv(path, posts: list[BlogPost], tags: list[str] | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        header = ["date", "text", "thumbs", "comments", "forwards"]
        if tags is not None:
            header.append("period")
        w.writerow(header)
        for i, p in enumerate(posts):
            rec = [p.date.isoformat(), p.text, p.thumbs, p.comments, p.forwards]
            if tags is not None:
                rec.append(tags[i])
            w.writerow(rec)


def read_posts_csv(path) -> tuple[list[BlogPost], list[str] | None]:
    posts, tags = [], []
    with open(path, newline="", encoding="utf-8") as f:
        r = csv.DictReader(f)
        base = ["date", "text", "thumbs", "comments", "forwards"]
        if r.fieldnames is None or r.fieldnames[:5] != base:
            raise FormatError(f"{path}: expected header date,text,thumbs,comments,forwards")
        has_period = "period" in (r.fieldnames or [])
        for i, rec in enumerate(r, start=2):
            try:
                posts.append(BlogPost(
                    date=dt.date.fromisoformat(rec["date"]), text=rec["text"],
                    thumbs=int(rec["thumbs"]), comments=int(rec["comments"]),
                    forwards=int(rec["forwards"])))
            except (ValueError, TypeError, DataError) as e:
                raise FormatError(f"{path}: line {i}: {e}") from e
            if has_period:
                tags.append(rec["period"])
    return posts, (tags if tags else None)


def write_rows_csv(path, rows: list[FeatureRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(ROW_HEADER)
        for r in rows:
            w.writerow([repr(r.sentiment), r.thumbs, r.comments, r.forwards,
                        r.high, r.low, r.open, r.label])


def read_rows_csv(path) -> list[FeatureRow]:
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        r = csv.DictReader(f)
        if tuple(r.fieldnames or ()) != ROW_HEADER:
            raise FormatError(f"{path}: expected header {','.join(ROW_HEADER)}")
        for i, rec in enumerate(r, start=2):
            try:
                rows.append(FeatureRow(
                    sentiment=float(rec["sentiment"]), thumbs=int(rec["thumbs"]),
                    comments=int(rec["comments"]), forwards=int(rec["forwards"]),
                    high=float(rec["high"]), low=float(rec["low"]),
                    open=float(rec["open"]), label=int(rec["label"])))
            except (ValueError, TypeError, DataError) as e:
                raise FormatError(f"{path}: line {i}: {e}") from e
    return rows
