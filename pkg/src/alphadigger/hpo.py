"""Hyperparameter search: grid, random, and Gaussian-process Bayesian
optimization with expected improvement, plus k-fold cross-validated
selection. Objectives are minimized (CV classification error)."""

from __future__ import annotations

import csv
import itertools
import json
import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ConfigError, NumericalError


# ---------------------------------------------------------------------------
# parameter space


@dataclass(frozen=True)
class ContinuousDim:
    name: str
    low: float
    high: float
    log_scale: bool = False
    grid: tuple | None = None  # explicit grid values for grid search

    def __post_init__(self):
        if not self.low < self.high:
            raise ConfigError(f"{self.name}: low must be < high")
        if self.log_scale and self.low <= 0:
            raise ConfigError(f"{self.name}: log scale requires low > 0")

    def sample(self, rng):
        if self.log_scale:
            return float(np.exp(rng.uniform(np.log(self.low), np.log(self.high))))
        return float(rng.uniform(self.low, self.high))

    def grid_values(self):
        if self.grid is None:
            raise ConfigError(f"{self.name}: continuous dimension needs an explicit grid")
        return list(self.grid)

    def encode(self, value):
        if self.log_scale:
            lo, hi = np.log(self.low), np.log(self.high)
            return [(np.log(value) - lo) / (hi - lo)]
        return [(value - self.low) / (self.high - self.low)]

    def decode_unit(self, u: float):
        if self.log_scale:
            lo, hi = np.log(self.low), np.log(self.high)
            return float(np.exp(lo + u * (hi - lo)))
        return float(self.low + u * (self.high - self.low))

    @property
    def encoded_width(self):
        return 1


@dataclass(frozen=True)
class IntDim:
    name: str
    low: int
    high: int
    grid: tuple | None = None

    def __post_init__(self):
        if not self.low < self.high:
            raise ConfigError(f"{self.name}: low must be < high")

    def sample(self, rng):
        return int(rng.integers(self.low, self.high + 1))

    def grid_values(self):
        if self.grid is not None:
            return list(self.grid)
        return list(range(self.low, self.high + 1))

    def encode(self, value):
        return [(value - self.low) / (self.high - self.low)]

    def decode_unit(self, u: float):
        return int(round(self.low + u * (self.high - self.low)))

    @property
    def encoded_width(self):
        return 1


@dataclass(frozen=True)
class CatDim:
    name: str
    choices: tuple

    def __post_init__(self):
        if not self.choices or len(set(self.choices)) != len(self.choices):
            raise ConfigError(f"{self.name}: choices must be non-empty and unique")

    def sample(self, rng):
        return self.choices[int(rng.integers(0, len(self.choices)))]

    def grid_values(self):
        return list(self.choices)

    def encode(self, value):
        vec = [0.0] * len(self.choices)
        vec[self.choices.index(value)] = 1.0
        return vec

    def decode_unit(self, u: float):
        i = min(int(u * len(self.choices)), len(self.choices) - 1)
        return self.choices[i]

    @property
    def encoded_width(self):
        return len(self.choices)


@dataclass(frozen=True)
class ParamSpace:
    dims: tuple

    def __post_init__(self):
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate dimension names")

    def sample(self, rng) -> dict:
        return {d.name: d.sample(rng) for d in self.dims}

    def encode(self, params: dict) -> np.ndarray:
        out = []
        for d in self.dims:
            out.extend(d.encode(params[d.name]))
        return np.array(out)

    def sample_unit(self, rng) -> dict:
        # uniform in the unit cube, decoded per dimension (integers rounded,
        # categoricals bucketed); used for BO candidate sets
        return {d.name: d.decode_unit(float(rng.random())) for d in self.dims}


@dataclass(frozen=True)
class Trial:
    index: int
    params: dict
    objective: float
    wall_time_s: float


@dataclass
class SearchResult:
    trials: list
    total_wall_time_s: float

    @property
    def best(self) -> Trial:
        return min(self.trials, key=lambda t: (t.objective, t.index))


def write_trials_csv(path, result: SearchResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["index", "params_json", "objective", "wall_time_s"])
        for t in result.trials:
            w.writerow([t.index, json.dumps(t.params, sort_keys=True),
                        repr(t.objective), f"{t.wall_time_s:.3f}"])


def _timed(objective, params):
    t0 = time.perf_counter()
    value = float(objective(params))
    elapsed = time.perf_counter() - t0
    if not math.isfinite(value):
        raise DataError(f"objective returned non-finite value {value} at {params}")
    return value, elapsed


# ---------------------------------------------------------------------------
# cross-validation


@dataclass(frozen=True)
class CvConfig:
    k: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise ConfigError("k must be >= 2")


def fold_indices(n: int, cv: CvConfig) -> list[np.ndarray]:
    """Seeded partition into k folds whose sizes differ by at most one."""
    if cv.k > n:
        raise DataError(f"k={cv.k} exceeds {n} rows")
    rng = np.random.default_rng(cv.seed)
    perm = rng.permutation(n)
    return [perm[j::cv.k] for j in range(cv.k)]


def k_fold_cv(X, y, cv: CvConfig, fit_predict) -> float:
    """Mean fold classification error.

    fit_predict(X_train, y_train, X_val) must return predicted labels.
    """
    X = np.asarray(X)
    y = np.asarray(y)
    folds = fold_indices(len(X), cv)
    errors = []
    for j in range(cv.k):
        val = folds[j]
        train = np.concatenate([folds[i] for i in range(cv.k) if i != j])
        preds = np.asarray(fit_predict(X[train], y[train], X[val]))
        errors.append(float(np.mean(preds != y[val])))
    return float(np.mean(errors))


# ---------------------------------------------------------------------------
# searches


def grid_search(space: ParamSpace, objective) -> SearchResult:
    """Exhaustive Cartesian product in dimension order; ties break to the
    lowest trial index."""
    grids = [d.grid_values() for d in space.dims]
    if any(not g for g in grids):
        raise DataError("empty grid dimension")
    trials = []
    total = 0.0
    for index, combo in enumerate(itertools.product(*grids)):
        params = {d.name: v for d, v in zip(space.dims, combo)}
        value, elapsed = _timed(objective, params)
        trials.append(Trial(index, params, value, elapsed))
        total += elapsed
    return SearchResult(trials=trials, total_wall_time_s=total)


def random_search(space: ParamSpace, objective, n_trials: int, seed: int,
                  without_replacement: bool = False) -> SearchResult:
    if n_trials < 1:
        raise ConfigError("n_trials must be >= 1")
    rng = np.random.default_rng(seed)
    if without_replacement:
        if not all(isinstance(d, CatDim) for d in space.dims):
            raise ConfigError("without-replacement sampling needs a fully categorical space")
        combos = list(itertools.product(*(d.choices for d in space.dims)))
        if n_trials > len(combos):
            raise ConfigError("n_trials exceeds the space size")
        picks = rng.permutation(len(combos))[:n_trials]
        draws = [{d.name: v for d, v in zip(space.dims, combos[i])} for i in picks]
    else:
        draws = [space.sample(rng) for _ in range(n_trials)]
    trials = []
    total = 0.0
    for index, params in enumerate(draws):
        value, elapsed = _timed(objective, params)
        trials.append(Trial(index, params, value, elapsed))
        total += elapsed
    return SearchResult(trials=trials, total_wall_time_s=total)


# ---------------------------------------------------------------------------
# Gaussian-process surrogate and expected improvement

_LENGTH_SCALES = (0.1, 0.3, 1.0, 3.0)
_SIGNAL_VARS = (0.5, 1.0, 2.0)
_NOISE_VARS = (1e-6, 1e-4, 1e-2)
_JITTERS = (0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2)


def _rbf(A: np.ndarray, B: np.ndarray, ell: float, s2: float) -> np.ndarray:
    d2 = ((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=2)
    return s2 * np.exp(-d2 / (2.0 * ell * ell))


class GpSurrogate:
    """GP regression with an RBF kernel; hyperparameters chosen by maximum
    marginal likelihood over a small fixed grid."""

    def __init__(self, ell: float = 1.0, s2: float = 1.0, noise: float = 1e-6):
        self.ell = ell
        self.s2 = s2
        self.noise = noise
        self.X: np.ndarray | None = None
        self.y: np.ndarray | None = None
        self._L: np.ndarray | None = None
        self._alpha: np.ndarray | None = None

    def _chol(self, K: np.ndarray) -> np.ndarray:
        for jitter in _JITTERS:
            try:
                return np.linalg.cholesky(K + jitter * np.eye(len(K)))
            except np.linalg.LinAlgError:
                continue
        raise NumericalError("kernel matrix not positive definite after max jitter")

    def _log_marginal(self, ell, s2, noise) -> float:
        K = _rbf(self.X, self.X, ell, s2) + noise * np.eye(len(self.X))
        L = self._chol(K)
        a = np.linalg.solve(L.T, np.linalg.solve(L, self.y))
        return float(-0.5 * self.y @ a - np.sum(np.log(np.diag(L)))
                     - 0.5 * len(self.y) * np.log(2 * np.pi))

    def fit(self, X: np.ndarray, y: np.ndarray, tune: bool = True) -> "GpSurrogate":
        self.X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        self.y = np.asarray(y, dtype=np.float64)
        if len(self.X) and tune:
            best = None
            for ell in _LENGTH_SCALES:
                for s2 in _SIGNAL_VARS:
                    for noise in _NOISE_VARS:
                        lml = self._log_marginal(ell, s2, noise)
                        if best is None or lml > best[0] + 1e-12:
                            best = (lml, ell, s2, noise)
            _, self.ell, self.s2, self.noise = best
        if len(self.X):
            K = _rbf(self.X, self.X, self.ell, self.s2) + self.noise * np.eye(len(self.X))
            self._L = self._chol(K)
            self._alpha = np.linalg.solve(self._L.T, np.linalg.solve(self._L, self.y))
        return self

    def posterior(self, x: np.ndarray) -> tuple[float, float]:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.X is None or len(self.X) == 0:
            return 0.0, self.s2
        k_star = _rbf(self.X, x, self.ell, self.s2)[:, 0]
        mean = float(k_star @ self._alpha)
        v = np.linalg.solve(self._L, k_star)
        var = float(self.s2 - v @ v)
        return mean, max(var, 0.0)


def _norm_cdf(u: float) -> float:
    return 0.5 * (1.0 + math.erf(u / math.sqrt(2.0)))


def _norm_pdf(u: float) -> float:
    return math.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)


def expected_improvement(gp: GpSurrogate, x: np.ndarray, best_observed: float) -> float:
    """EI for minimization: (best - mu) Phi(u) + sigma phi(u), u = (best - mu)/sigma."""
    mean, var = gp.posterior(x)
    sigma = math.sqrt(var)
    improvement = best_observed - mean
    if sigma == 0.0:
        return max(0.0, improvement)
    u = improvement / sigma
    return max(0.0, improvement * _norm_cdf(u) + sigma * _norm_pdf(u))


def bayes_opt(space: ParamSpace, objective, budget: int, n_init: int,
              seed: int, n_candidates: int = 512) -> SearchResult:
    """Seeded random initialization, then EI-maximizing queries over a seeded
    uniform candidate set each round. Surrogate failures fall back to a
    random draw for that round (recorded on the trial params)."""
    if not (budget >= n_init >= 2):
        raise ConfigError("need budget >= n_init >= 2")
    rng = np.random.default_rng(seed)
    trials = []
    total = 0.0

    def run_trial(params, index, fallback=False):
        nonlocal total
        value, elapsed = _timed(objective, params)
        rec = dict(params)
        if fallback:
            rec["__bo_fallback__"] = True
        trials.append(Trial(index, rec, value, elapsed))
        total += elapsed

    for index in range(n_init):
        run_trial(space.sample(rng), index)

    for index in range(n_init, budget):
        Xobs = np.array([space.encode({k: v for k, v in t.params.items()
                                       if not k.startswith("__")}) for t in trials])
        yobs = np.array([t.objective for t in trials])
        y_mean, y_std = float(yobs.mean()), float(yobs.std())
        y_std = y_std if y_std > 0 else 1.0
        yn = (yobs - y_mean) / y_std
        best_n = float(yn.min())
        candidates = [space.sample_unit(rng) for _ in range(n_candidates)]
        try:
            gp = GpSurrogate().fit(Xobs, yn)
            scores = [expected_improvement(gp, space.encode(c), best_n)
                      for c in candidates]
            pick = candidates[int(np.argmax(scores))]
            run_trial(pick, index)
        except NumericalError:
            run_trial(space.sample(rng), index, fallback=True)
    return SearchResult(trials=trials, total_wall_time_s=total)
