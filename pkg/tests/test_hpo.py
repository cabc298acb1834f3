"""Tests for hyperparameter search: parameter spaces, CV folds against an
exhaustive oracle, grid/random search, the GP surrogate against a dense solve,
closed-form expected improvement, and Bayesian optimization convergence."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from alphadigger.errors import ConfigError, DataError
from alphadigger.hpo import (
    CatDim, ContinuousDim, CvConfig, GpSurrogate, IntDim, ParamSpace,
    SearchResult, Trial, _rbf, bayes_opt, expected_improvement, fold_indices,
    grid_search, k_fold_cv, random_search, write_trials_csv,
)


class TestDims:
    def test_continuous_bounds_validated(self):
        with pytest.raises(ConfigError):
            ContinuousDim("x", 1.0, 1.0)
        with pytest.raises(ConfigError):
            ContinuousDim("x", 0.0, 1.0, log_scale=True)

    def test_continuous_log_sampling_in_range(self):
        dim = ContinuousDim("lr", 1e-4, 1e-1, log_scale=True)
        rng = np.random.default_rng(0)
        vals = [dim.sample(rng) for _ in range(200)]
        assert all(1e-4 <= v <= 1e-1 for v in vals)
        # log-uniform: roughly a third of draws per decade
        frac_low = sum(v < 1e-3 for v in vals) / len(vals)
        assert 0.15 < frac_low < 0.5

    def test_continuous_encode_decode_round_trip(self):
        for dim in (ContinuousDim("a", 2.0, 10.0),
                    ContinuousDim("b", 0.01, 100.0, log_scale=True)):
            for v in (dim.low, dim.high, dim.decode_unit(0.37)):
                u = dim.encode(v)[0]
                assert dim.decode_unit(u) == pytest.approx(v, rel=1e-12)

    def test_continuous_grid_required_for_grid_search(self):
        with pytest.raises(ConfigError):
            ContinuousDim("a", 0.0, 1.0).grid_values()
        assert ContinuousDim("a", 0.0, 1.0, grid=(0.1, 0.9)).grid_values() == [0.1, 0.9]

    def test_int_dim(self):
        dim = IntDim("n", 3, 6)
        assert dim.grid_values() == [3, 4, 5, 6]
        assert IntDim("n", 3, 100, grid=(10, 20)).grid_values() == [10, 20]
        assert dim.decode_unit(0.0) == 3
        assert dim.decode_unit(1.0) == 6

    def test_cat_dim(self):
        dim = CatDim("kind", ("a", "b", "c"))
        assert dim.encode("b") == [0.0, 1.0, 0.0]
        assert dim.decode_unit(0.99) == "c"
        with pytest.raises(ConfigError):
            CatDim("kind", ("a", "a"))

    def test_space_rejects_duplicate_names(self):
        with pytest.raises(ConfigError):
            ParamSpace((IntDim("n", 1, 2), IntDim("n", 3, 4)))


class TestFolds:
    @given(st.integers(min_value=2, max_value=12),
           st.integers(min_value=12, max_value=400),
           st.integers(min_value=0, max_value=1000))
    @settings(max_examples=200, deadline=None)
    def test_folds_partition_with_balanced_sizes(self, k, n, seed):
        folds = fold_indices(n, CvConfig(k=k, seed=seed))
        assert len(folds) == k
        all_idx = np.concatenate(folds)
        assert sorted(all_idx.tolist()) == list(range(n))
        sizes = [len(f) for f in folds]
        assert max(sizes) - min(sizes) <= 1

    def test_k_larger_than_n_rejected(self):
        with pytest.raises(DataError):
            fold_indices(3, CvConfig(k=5))

    def test_k_below_two_rejected(self):
        with pytest.raises(ConfigError):
            CvConfig(k=1)

    def test_cv_error_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(30, 2))
        y = (X[:, 0] > 0).astype(np.int64)
        cv = CvConfig(k=3, seed=5)

        def fit_predict(Xtr, ytr, Xval):
            # threshold classifier on feature 0 at the training mean
            thr = Xtr[:, 0][ytr == 1].mean() - 0.5
            return (Xval[:, 0] > thr).astype(np.int64)

        got = k_fold_cv(X, y, cv, fit_predict)
        folds = fold_indices(len(X), cv)
        errs = []
        for j in range(cv.k):
            val = folds[j]
            train = np.concatenate([folds[i] for i in range(cv.k) if i != j])
            preds = fit_predict(X[train], y[train], X[val])
            errs.append(np.mean(preds != y[val]))
        assert got == pytest.approx(np.mean(errs), abs=1e-15)

    def test_cv_selection_matches_oracle_on_three_candidates(self):
        """CV picks the same candidate as brute-force evaluation."""
        rng = np.random.default_rng(11)
        X = rng.normal(size=(60, 2))
        y = ((X[:, 0] + 0.3 * X[:, 1]) > 0).astype(np.int64)
        cv = CvConfig(k=4, seed=2)
        candidates = [0.0, 0.3, 10.0]  # slope on feature 1

        def make_fit_predict(slope):
            def fit_predict(Xtr, ytr, Xval):
                return ((Xval[:, 0] + slope * Xval[:, 1]) > 0).astype(np.int64)
            return fit_predict

        scores = [k_fold_cv(X, y, cv, make_fit_predict(c)) for c in candidates]
        assert candidates[int(np.argmin(scores))] == 0.3


class TestGridSearch:
    def test_exact_global_minimum_11x11(self):
        xs = tuple(np.linspace(0.0, 1.0, 11))
        space = ParamSpace((ContinuousDim("x", 0.0, 1.0, grid=xs),
                            ContinuousDim("y", 0.0, 1.0, grid=xs)))

        def objective(p):
            return (p["x"] - 0.3) ** 2 + (p["y"] - 0.7) ** 2

        result = grid_search(space, objective)
        assert len(result.trials) == 121
        best = result.best
        # xs[3] is the closest grid point to 0.3 (up to linspace rounding)
        assert best.params["x"] == pytest.approx(0.3, abs=1e-12)
        assert best.params["y"] == pytest.approx(0.7, abs=1e-12)
        assert best.objective == min(t.objective for t in result.trials)
        assert best.objective == pytest.approx(0.0, abs=1e-12)

    def test_enumeration_is_lexicographic(self):
        space = ParamSpace((CatDim("a", ("p", "q")), CatDim("b", ("u", "v"))))
        result = grid_search(space, lambda p: 0.0)
        combos = [(t.params["a"], t.params["b"]) for t in result.trials]
        assert combos == list(itertools.product("pq", "uv"))

    def test_ties_break_to_lowest_index(self):
        space = ParamSpace((CatDim("a", ("p", "q", "r")),))
        result = grid_search(space, lambda p: 1.0)
        assert result.best.index == 0

    def test_empty_grid_rejected(self):
        space = ParamSpace((IntDim("n", 1, 5, grid=()),))
        with pytest.raises(DataError):
            grid_search(space, lambda p: 0.0)

    def test_non_finite_objective_rejected(self):
        space = ParamSpace((CatDim("a", ("p",)),))
        with pytest.raises(DataError):
            grid_search(space, lambda p: float("nan"))


class TestRandomSearch:
    def space(self):
        return ParamSpace((ContinuousDim("x", 0.0, 1.0),
                           IntDim("n", 1, 10)))

    def test_seeded_and_reproducible(self):
        obj = lambda p: p["x"]
        a = random_search(self.space(), obj, 10, seed=4)
        b = random_search(self.space(), obj, 10, seed=4)
        assert [t.params for t in a.trials] == [t.params for t in b.trials]
        c = random_search(self.space(), obj, 10, seed=5)
        assert [t.params for t in a.trials] != [t.params for t in c.trials]

    def test_without_replacement_visits_unique_combos(self):
        space = ParamSpace((CatDim("a", ("p", "q")), CatDim("b", ("u", "v"))))
        result = random_search(space, lambda p: 0.0, 4, seed=0,
                               without_replacement=True)
        combos = {(t.params["a"], t.params["b"]) for t in result.trials}
        assert len(combos) == 4

    def test_without_replacement_needs_categorical_space(self):
        with pytest.raises(ConfigError):
            random_search(self.space(), lambda p: 0.0, 2, seed=0,
                          without_replacement=True)

    def test_too_many_trials_without_replacement(self):
        space = ParamSpace((CatDim("a", ("p", "q")),))
        with pytest.raises(ConfigError):
            random_search(space, lambda p: 0.0, 3, seed=0,
                          without_replacement=True)


class TestGpSurrogate:
    def test_posterior_matches_dense_solve(self):
        rng = np.random.default_rng(6)
        X = rng.uniform(size=(12, 2))
        y = np.sin(X[:, 0] * 3) + 0.1 * rng.normal(size=12)
        gp = GpSurrogate(ell=0.5, s2=1.2, noise=1e-4)
        gp.fit(X, y, tune=False)
        for _ in range(10):
            x = rng.uniform(size=2)
            mean, var = gp.posterior(x)
            K = _rbf(X, X, 0.5, 1.2) + 1e-4 * np.eye(12)
            k_star = _rbf(X, x[None, :], 0.5, 1.2)[:, 0]
            Kinv = np.linalg.inv(K)
            want_mean = k_star @ Kinv @ y
            want_var = 1.2 - k_star @ Kinv @ k_star
            assert mean == pytest.approx(want_mean, abs=1e-8)
            assert var == pytest.approx(max(want_var, 0.0), abs=1e-8)

    def test_empty_prior(self):
        gp = GpSurrogate(s2=2.0)
        gp.fit(np.zeros((0, 1)), np.zeros(0))
        assert gp.posterior(np.array([0.5])) == (0.0, 2.0)

    def test_tuning_picks_reasonable_noise_for_noisy_data(self):
        rng = np.random.default_rng(7)
        X = rng.uniform(size=(30, 1))
        y = rng.normal(size=30)  # pure noise
        gp = GpSurrogate().fit(X, y)
        assert gp.noise == 1e-2  # largest grid value

    def test_interpolates_smooth_function(self):
        X = np.linspace(0, 1, 15)[:, None]
        y = np.sin(4 * X[:, 0])
        gp = GpSurrogate().fit(X, y)
        mean, _ = gp.posterior(np.array([0.5]))
        assert mean == pytest.approx(np.sin(2.0), abs=0.05)


class TestExpectedImprovement:
    def test_closed_form_at_zero_improvement(self):
        """With mu = best and sigma = 1, EI = phi(0) = 1/sqrt(2 pi)."""

        class Fixed:
            def posterior(self, x):
                return 0.0, 1.0

        ei = expected_improvement(Fixed(), np.zeros(1), best_observed=0.0)
        assert ei == pytest.approx(0.3989422804014327, abs=1e-12)

    def test_closed_form_general(self):
        class Fixed:
            def __init__(self, mean, var):
                self.mean, self.var = mean, var

            def posterior(self, x):
                return self.mean, self.var

        best, mean, sigma = 0.2, -0.1, 0.5
        u = (best - mean) / sigma
        phi = math.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)
        Phi = 0.5 * (1 + math.erf(u / math.sqrt(2)))
        want = (best - mean) * Phi + sigma * phi
        ei = expected_improvement(Fixed(mean, sigma ** 2), np.zeros(1), best)
        assert ei == pytest.approx(want, abs=1e-12)

    def test_zero_variance_returns_plain_improvement(self):
        class Fixed:
            def posterior(self, x):
                return 0.3, 0.0

        assert expected_improvement(Fixed(), np.zeros(1), 0.5) == pytest.approx(0.2)
        assert expected_improvement(Fixed(), np.zeros(1), 0.1) == 0.0


class TestBayesOpt:
    def test_converges_on_1d_quadratic_for_most_seeds(self):
        space = ParamSpace((ContinuousDim("x", 0.0, 1.0),))

        def objective(p):
            return (p["x"] - 0.42) ** 2

        wins = 0
        for seed in range(20):
            result = bayes_opt(space, objective, budget=15, n_init=5, seed=seed)
            if result.best.objective <= 1e-2:
                wins += 1
        assert wins >= 18

    def test_budget_validation(self):
        space = ParamSpace((ContinuousDim("x", 0.0, 1.0),))
        with pytest.raises(ConfigError):
            bayes_opt(space, lambda p: 0.0, budget=3, n_init=4, seed=0)
        with pytest.raises(ConfigError):
            bayes_opt(space, lambda p: 0.0, budget=3, n_init=1, seed=0)

    def test_reproducible_for_seed(self):
        space = ParamSpace((ContinuousDim("x", 0.0, 1.0),))
        obj = lambda p: (p["x"] - 0.5) ** 2
        a = bayes_opt(space, obj, budget=8, n_init=3, seed=9)
        b = bayes_opt(space, obj, budget=8, n_init=3, seed=9)
        assert [t.params for t in a.trials] == [t.params for t in b.trials]

    def test_improves_over_initial_draws(self):
        space = ParamSpace((ContinuousDim("x", 0.0, 1.0),))
        obj = lambda p: abs(p["x"] - 0.77)
        result = bayes_opt(space, obj, budget=20, n_init=4, seed=1)
        init_best = min(t.objective for t in result.trials[:4])
        assert result.best.objective <= init_best


class TestTrialsCsv:
    def test_schema_and_round_trip_values(self, tmp_path):
        result = SearchResult(
            trials=[Trial(0, {"x": 0.5}, 0.25, 0.01),
                    Trial(1, {"x": 0.1, "kind": "rf"}, 0.9, 0.02)],
            total_wall_time_s=0.03)
        path = tmp_path / "trials.csv"
        write_trials_csv(path, result)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "index,params_json,objective,wall_time_s"
        assert lines[1].startswith('0,"{""x"": 0.5}",0.25,')
        assert len(lines) == 3
