"""Two-phase experiment orchestration: sentiment-model training on the
period-1 corpus, feature-row assembly for periods 2-3, the model-by-optimizer
HPO grid with k-fold CV, and report emission."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dataset, hpo, metrics, tabular, text as textmod
from .dataset import FeatureRow, SynthConfig
from .errors import DataError, ConfigError
from .hpo import ParamSpace, ContinuousDim, IntDim, CvConfig
from .seqnn import ModelConfig, SentimentModel, TrainRun, train_sentiment, predict_sentiment
from .text import TextPipeline

log = logging.getLogger(__name__)

OPTIMIZERS = ("grid", "random", "bo")


def fan_out_seed(master_seed: int, component: str) -> int:
    """Stable per-component sub-seed: adding components never perturbs
    existing streams."""
    digest = hashlib.sha256(f"{master_seed}:{component}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


# Shipped default search spaces, sized so that grid search stays tractable
# while covering the useful range of each hyperparameter.
def default_space(kind: str) -> ParamSpace:
    if kind == "rf":
        return ParamSpace(dims=(
            IntDim("n_trees", 20, 200, grid=(30, 60, 120)),
            IntDim("max_depth", 3, 12, grid=(4, 8)),
            ContinuousDim("feature_fraction", 0.3, 1.0, grid=(0.5, 1.0)),
        ))
    if kind in ("gbdt-level", "gbdt-leaf"):
        dims = [
            IntDim("rounds", 10, 120, grid=(20, 40)),
            ContinuousDim("learning_rate", 0.03, 0.5, log_scale=True,
                          grid=(0.1, 0.3)),
            ContinuousDim("reg_lambda", 0.0, 10.0, grid=(0.0, 1.0)),
        ]
        if kind == "gbdt-level":
            dims.append(IntDim("max_depth", 2, 8, grid=(3, 5)))
        else:
            dims.append(IntDim("n_leaves", 4, 64, grid=(15, 31)))
        return ParamSpace(dims=tuple(dims))
    if kind == "svm":
        return ParamSpace(dims=(
            ContinuousDim("C", 1e-3, 100.0, log_scale=True,
                          grid=(0.01, 0.1, 1.0, 10.0, 100.0)),
        ))
    raise ConfigError(f"no default space for model kind {kind!r}")


def _coerce_params(kind: str, params: dict) -> dict:
    out = {}
    for k, v in params.items():
        if k.startswith("__"):
            continue
        if k in ("n_trees", "max_depth", "n_leaves", "rounds", "max_iter"):
            out[k] = int(round(v))
        else:
            out[k] = float(v)
    return out


def label_posts(posts, bars):
    """Movement label per post via its trading-day bar; returns (kept, labels, skipped)."""
    import bisect
    dates = [b.date for b in bars]
    kept, labels = [], []
    skipped = 0
    for post in posts:
        i = bisect.bisect_left(dates, post.date)
        if i >= len(bars) - 1:
            skipped += 1
            continue
        kept.append(post)
        labels.append(dataset.compute_label(bars[i].close, bars[i + 1].close))
    return kept, np.array(labels, dtype=np.float64), skipped


# ---------------------------------------------------------------------------
# phase 1


@dataclass
class Phase1Result:
    model: SentimentModel
    pipeline: TextPipeline
    test_accuracy: float
    history: object
    embedding_tokens: list
    skipped_posts: int


def run_phase1(posts, bars, *, tokenizer: str = "whitespace",
               embedding: textmod.EmbeddingTable | None = None,
               embedding_tokens: list | None = None,
               embed_dim: int = 16, hidden_sizes=(8, 4), n_heads: int = 2,
               train_embeddings: bool = True, run: TrainRun | None = None,
               train_fraction: float = 0.9, master_seed: int = 0) -> Phase1Result:
    """Train the sentiment model on the period-1 corpus with a 90/10 split."""
    kept, labels, skipped = label_posts(posts, bars)
    if not kept:
        raise DataError("no phase-1 posts with resolvable labels")
    token_lists = [textmod.tokenize(p.text, tokenizer) for p in kept]

    if embedding is None:
        # synthetic random table over the observed corpus vocabulary
        tokens = sorted({t for toks in token_lists for t in toks})
        rng = np.random.default_rng(fan_out_seed(master_seed, "embedding"))
        vectors = rng.normal(0.0, 1.0, (len(tokens), embed_dim))
        matrix = np.zeros((len(tokens) + 2, embed_dim))
        matrix[textmod.UNK_INDEX] = vectors.mean(axis=0) if len(tokens) else 0.0
        matrix[2:] = vectors
        embedding = textmod.EmbeddingTable(dimension=embed_dim, matrix=matrix)
        embedding_tokens = tokens
    elif embedding_tokens is None:
        raise ConfigError("embedding_tokens required with a preloaded table")

    vocab = textmod.build_vocab(embedding_tokens)
    stats = textmod.compute_max_tokens([len(t) for t in token_lists])
    pipe = TextPipeline(vocab=vocab, max_tokens=stats.max_tokens, tokenizer=tokenizer)
    X = pipe.encode_texts([p.text for p in kept])

    split_spec = dataset.SplitSpec(
        mode="fraction-holdout", train_fraction=train_fraction,
        shuffle_seed=fan_out_seed(master_seed, "phase1-split"))
    idx_train, idx_test = dataset.split(list(range(len(kept))), split_spec)
    idx_train, idx_test = np.array(idx_train), np.array(idx_test)

    config = ModelConfig(
        vocab_size=vocab.size, embed_dim=embedding.dimension,
        hidden_sizes=tuple(hidden_sizes), n_heads=n_heads,
        max_tokens=stats.max_tokens, train_embeddings=train_embeddings)
    model = SentimentModel.initialize(
        config, seed=fan_out_seed(master_seed, "phase1-init"),
        embedding=embedding.matrix)
    run = run or TrainRun(seed=fan_out_seed(master_seed, "phase1-train"))
    history = train_sentiment(model, X[idx_train], labels[idx_train], run)

    if len(idx_test):
        probs = model.forward(X[idx_test])
        test_acc = float(np.mean((probs >= 0.5).astype(np.float64) == labels[idx_test]))
    else:
        test_acc = float("nan")
    return Phase1Result(model=model, pipeline=pipe, test_accuracy=test_acc,
                        history=history, embedding_tokens=list(embedding_tokens),
                        skipped_posts=skipped)


def build_rows(posts, bars, model: SentimentModel, pipe: TextPipeline):
    """Score posts with the sentiment model and assemble feature rows."""
    scores = predict_sentiment(model, [p.text for p in posts], pipe)
    return dataset.assemble_rows(posts, [float(s) for s in scores], bars)


# ---------------------------------------------------------------------------
# phase 2


@dataclass
class CellResult:
    model_kind: str
    optimizer: str
    search: hpo.SearchResult
    best_params: dict
    report1: metrics.ClassReport
    report2: metrics.ClassReport
    shift: metrics.ShiftReport
    fitted_model: object
    test1_accuracy: float
    test2_accuracy: float


def _make_objective(kind: str, X, y, cv: CvConfig, seed: int):
    def objective(params):
        cfg = tabular.FitConfig(kind=kind, params=_coerce_params(kind, params),
                                seed=seed)

        def fit_predict(Xtr, ytr, Xval):
            model = tabular.fit_model(Xtr, ytr, cfg)
            return tabular.predict_label(model, Xval)

        return hpo.k_fold_cv(X, y, cv, fit_predict)

    return objective


def run_cell(kind: str, optimizer: str, train_rows, test1_rows, test2_rows,
             *, space: ParamSpace | None = None, cv: CvConfig | None = None,
             random_trials: int = 10, bo_budget: int = 12, bo_init: int = 4,
             master_seed: int = 0) -> CellResult:
    """One (model, optimizer) cell: HPO with k-fold CV on the training rows,
    refit of the best parameters on the full training set, evaluation on
    both test sets."""
    if optimizer not in OPTIMIZERS:
        raise ConfigError(f"unknown optimizer {optimizer!r}; choose from {OPTIMIZERS}")
    space = space or default_space(kind)
    cv = cv or CvConfig(k=5, seed=fan_out_seed(master_seed, f"cv:{kind}:{optimizer}"))
    Xtr, ytr = dataset.rows_to_arrays(train_rows)
    X1, y1 = dataset.rows_to_arrays(test1_rows)
    X2, y2 = dataset.rows_to_arrays(test2_rows)
    fit_seed = fan_out_seed(master_seed, f"fit:{kind}:{optimizer}")
    objective = _make_objective(kind, Xtr, ytr, cv, fit_seed)

    if optimizer == "grid":
        search = hpo.grid_search(space, objective)
    elif optimizer == "random":
        search = hpo.random_search(space, objective, random_trials,
                                   seed=fan_out_seed(master_seed, f"rs:{kind}"))
    else:
        search = hpo.bayes_opt(space, objective, budget=bo_budget, n_init=bo_init,
                               seed=fan_out_seed(master_seed, f"bo:{kind}"))

    best_params = _coerce_params(kind, search.best.params)
    cfg = tabular.FitConfig(kind=kind, params=best_params, seed=fit_seed)
    model = tabular.fit_model(Xtr, ytr, cfg)
    preds1 = tabular.predict_label(model, X1)
    preds2 = tabular.predict_label(model, X2)
    r1 = metrics.report_from_predictions(preds1, y1)
    r2 = metrics.report_from_predictions(preds2, y2)
    return CellResult(
        model_kind=kind, optimizer=optimizer, search=search,
        best_params=best_params, report1=r1, report2=r2,
        shift=metrics.shift_report(r1, r2, model=kind, optimizer=optimizer),
        fitted_model=model,
        test1_accuracy=r1.accuracy, test2_accuracy=r2.accuracy)


def run_grid(cells, train_rows, test1_rows, test2_rows, *, spaces=None,
             cv_k: int = 5, random_trials: int = 10, bo_budget: int = 12,
             bo_init: int = 4, master_seed: int = 0, threads: int = 1):
    """All (model, optimizer) cells; cells are independent, so they may run
    on a thread pool, and results are merged in cell order."""
    spaces = spaces or {}
    # leakage guard: a row object may appear in exactly one of the three sets
    ids_train = {id(r) for r in train_rows}
    ids_1 = {id(r) for r in test1_rows}
    ids_2 = {id(r) for r in test2_rows}
    if (ids_train & ids_1) or (ids_train & ids_2) or (ids_1 & ids_2):
        raise DataError("train/test row sets overlap")

    def work(cell):
        kind, optimizer = cell
        return run_cell(
            kind, optimizer, train_rows, test1_rows, test2_rows,
            space=spaces.get(kind), cv=CvConfig(
                k=cv_k, seed=fan_out_seed(master_seed, f"cv:{kind}:{optimizer}")),
            random_trials=random_trials, bo_budget=bo_budget, bo_init=bo_init,
            master_seed=master_seed)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, cells))
    else:
        results = [work(c) for c in cells]
    order = sorted(range(len(cells)), key=lambda i: (cells[i][0], cells[i][1]))
    return [results[i] for i in order]


# ---------------------------------------------------------------------------
# report emission


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def emit_reports(results: list[CellResult], out_dir, phase1=None) -> list[str]:
    """Write the delimited outputs; byte-deterministic given the results.

    Wall-clock timings go to timings.csv only, so the accuracy artifacts are
    byte-identical across reruns with the same config and seed.
    """
    import os
    os.makedirs(out_dir, exist_ok=True)
    os.makedirs(os.path.join(out_dir, "reports"), exist_ok=True)
    written = []

    def path(name):
        written.append(name)
        return os.path.join(out_dir, name)

    with open(path("results_grid.csv"), "w", encoding="utf-8", newline="") as f:
        f.write("model,optimizer,n_trials,best_cv_error,test1_accuracy,test2_accuracy\n")
        for r in results:
            f.write(f"{r.model_kind},{r.optimizer},{len(r.search.trials)},"
                    f"{_fmt(r.search.best.objective)},{_fmt(r.test1_accuracy)},"
                    f"{_fmt(r.test2_accuracy)}\n")

    with open(path("timings.csv"), "w", encoding="utf-8", newline="") as f:
        f.write("model,optimizer,running_time_s\n")
        for r in results:
            f.write(f"{r.model_kind},{r.optimizer},{r.search.total_wall_time_s:.3f}\n")

    with open(path("class_reports.csv"), "w", encoding="utf-8", newline="") as f:
        f.write("model,optimizer,split,label,precision,recall,f1,support\n")
        for r in results:
            for split_name, rep in (("test1", r.report1), ("test2", r.report2)):
                for lab, lm in rep.per_label().items():
                    f.write(f"{r.model_kind},{r.optimizer},{split_name},{lab},"
                            f"{_fmt(lm.precision)},{_fmt(lm.recall)},{_fmt(lm.f1)},"
                            f"{lm.support}\n")

    with open(path("shift_report.csv"), "w", encoding="utf-8", newline="") as f:
        f.write("model,optimizer,label,"
                "precision_test1,recall_test1,f1_test1,"
                "precision_test2,recall_test2,f1_test2,"
                "delta_precision,delta_recall,delta_f1,"
                "delta_accuracy,label1_more_robust\n")
        for r in results:
            s = r.shift
            for lab in (0, 1):
                m1 = r.report1.per_label()[lab]
                m2 = r.report2.per_label()[lab]
                dp = (s.delta_precision0, s.delta_precision1)[lab]
                dr = (s.delta_recall0, s.delta_recall1)[lab]
                df = (s.delta_f1_0, s.delta_f1_1)[lab]
                robust = "" if s.label1_more_robust is None else str(s.label1_more_robust).lower()
                f.write(f"{r.model_kind},{r.optimizer},{lab},"
                        f"{_fmt(m1.precision)},{_fmt(m1.recall)},{_fmt(m1.f1)},"
                        f"{_fmt(m2.precision)},{_fmt(m2.recall)},{_fmt(m2.f1)},"
                        f"{_fmt(dp)},{_fmt(dr)},{_fmt(df)},"
                        f"{_fmt(s.delta_accuracy)},{robust}\n")

    for r in results:
        for split_name, rep in (("test1", r.report1), ("test2", r.report2)):
            name = f"reports/{r.model_kind}_{r.optimizer}_{split_name}.json"
            with open(path(name), "w", encoding="utf-8") as f:
                f.write(metrics.report_json(r.model_kind, r.optimizer, split_name,
                                            rep, r.search.total_wall_time_s))
        hpo.write_trials_csv(path(f"reports/trials_{r.model_kind}_{r.optimizer}.csv"),
                             r.search)
        tabular.save_model(r.fitted_model,
                           path(f"reports/model_{r.model_kind}_{r.optimizer}.json"))
    return written


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def save_text_context(path, pipe: TextPipeline, tokens: list) -> None:
    doc = {"format_version": 1, "tokenizer": pipe.tokenizer,
           "max_tokens": pipe.max_tokens, "tokens": tokens}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)


def load_text_context(path) -> TextPipeline:
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    vocab = textmod.build_vocab(doc["tokens"])
    return TextPipeline(vocab=vocab, max_tokens=int(doc["max_tokens"]),
                        tokenizer=doc["tokenizer"])


# ---------------------------------------------------------------------------
# full experiment


def load_experiment_data(cfg):
    """Per-period posts plus the shared bar series, per the config's data mode."""
    if cfg.data_mode == "synthetic":
        posts, bars, tags = dataset.generate_synthetic(
            cfg.synth, fan_out_seed(cfg.master_seed, "synthetic"))
        before = [p for p, t in zip(posts, tags) if t == "before"]
        during = [p for p, t in zip(posts, tags) if t == "during"]
        # the before period is split by day into the NLP corpus (period 1)
        # and the movement-prediction period (period 2)
        before_days = sorted({p.date for p in before})
        n1 = max(1, int(round(cfg.nlp_fraction * len(before_days))))
        p1_days = set(before_days[:n1])
        period1 = [p for p in before if p.date in p1_days]
        period2 = [p for p in before if p.date not in p1_days]
        return period1, period2, during, bars
    bars = dataset.read_prices_csv(cfg.prices_path)
    periods = []
    for path in cfg.posts_paths:
        posts, _ = dataset.read_posts_csv(path)
        periods.append(posts)
    return periods[0], periods[1], periods[2], bars


@dataclass
class ExperimentResult:
    phase1: Phase1Result
    cells: list
    artifacts: list
    stage_times: dict
    counts: dict


def run_experiment(cfg, threads: int = 1, out_dir: str | None = None) -> ExperimentResult:
    """End-to-end run: phase 1, row assembly, the HPO grid, reports, figures."""
    import os
    from . import figures as figs

    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    config_doc = cfg.raw or {}
    stage_times: dict = {}
    # incomplete manifest first so an interrupted run is visibly unfinished
    write_manifest(out_dir, config_doc=config_doc, artifacts=[],
                   stage_times=stage_times, complete=False)

    t0 = time.perf_counter()
    period1, period2, period3, bars = load_experiment_data(cfg)
    stage_times["data"] = time.perf_counter() - t0

    embedding = embedding_tokens = None
    if cfg.embedding != "random":
        embedding, embedding_tokens = textmod.load_embedding_file(cfg.embedding)

    t0 = time.perf_counter()
    phase1 = run_phase1(
        period1, bars, tokenizer=cfg.tokenizer, embedding=embedding,
        embedding_tokens=embedding_tokens, embed_dim=cfg.embed_dim,
        hidden_sizes=cfg.hidden_sizes, n_heads=cfg.n_heads,
        train_embeddings=cfg.train_embeddings,
        run=TrainRun(epochs=cfg.epochs, batch_size=cfg.batch_size,
                     learning_rate=cfg.learning_rate,
                     seed=fan_out_seed(cfg.master_seed, "phase1-train")),
        master_seed=cfg.master_seed)
    stage_times["phase1"] = time.perf_counter() - t0
    phase1.model.save(os.path.join(out_dir, "sentiment_model.json"))
    save_text_context(os.path.join(out_dir, "text_context.json"),
                      phase1.pipeline, phase1.embedding_tokens)

    t0 = time.perf_counter()
    ingest2 = build_rows(period2, bars, phase1.model, phase1.pipeline)
    ingest3 = build_rows(period3, bars, phase1.model, phase1.pipeline)
    split_spec = dataset.SplitSpec(
        mode="fraction-holdout", train_fraction=cfg.train_fraction,
        shuffle_seed=fan_out_seed(cfg.master_seed, "phase2-split"))
    if cfg.split_unit == "day":
        train_rows, test1_rows = dataset.split_by_day(
            ingest2.rows, ingest2.dates, split_spec)
    else:
        train_rows, test1_rows = dataset.split(ingest2.rows, split_spec)
    test2_rows = ingest3.rows
    dataset.write_rows_csv(os.path.join(out_dir, "rows_train.csv"), train_rows)
    dataset.write_rows_csv(os.path.join(out_dir, "rows_test1.csv"), test1_rows)
    dataset.write_rows_csv(os.path.join(out_dir, "rows_test2.csv"), test2_rows)
    stage_times["rows"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    cells = run_grid(list(cfg.cells), train_rows, test1_rows, test2_rows,
                     cv_k=cfg.cv_k, random_trials=cfg.random_trials,
                     bo_budget=cfg.bo_budget, bo_init=cfg.bo_init,
                     master_seed=cfg.master_seed, threads=threads)
    stage_times["phase2"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    artifacts = emit_reports(cells, out_dir)
    artifacts += ["sentiment_model.json", "text_context.json",
                  "rows_train.csv", "rows_test1.csv", "rows_test2.csv"]
    artifacts.append(figs.plot_accuracy_grid(cells, out_dir))
    artifacts.append(figs.plot_shift_deltas(cells, out_dir))
    artifacts.append(figs.plot_training_history(phase1.history, out_dir))
    stage_times["reports"] = time.perf_counter() - t0

    write_manifest(out_dir, config_doc=config_doc, artifacts=artifacts,
                   stage_times=stage_times, complete=True)
    counts = {"period1_posts": len(period1), "period2_posts": len(period2),
              "period3_posts": len(period3), "train_rows": len(train_rows),
              "test1_rows": len(test1_rows), "test2_rows": len(test2_rows),
              "skipped_phase1": phase1.skipped_posts,
              "skipped_phase2": ingest2.skipped + ingest3.skipped}
    return ExperimentResult(phase1=phase1, cells=cells, artifacts=artifacts,
                            stage_times=stage_times, counts=counts)


def write_manifest(out_dir, *, config_doc: dict, artifacts: list[str],
                   stage_times: dict, complete: bool) -> None:
    import os
    from . import __version__
    config_hash = hashlib.sha256(
        json.dumps(config_doc, sort_keys=True, default=str).encode()).hexdigest()
    doc = {
        "config_hash": config_hash,
        "complete": complete,
        "stage_wall_times_s": {k: round(v, 3) for k, v in stage_times.items()},
        "artifacts": {
            name: sha256_file(os.path.join(out_dir, name))
            for name in sorted(artifacts)
            if os.path.exists(os.path.join(out_dir, name))
        },
        "versions": {"alphadigger": __version__, "numpy": np.__version__},
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
