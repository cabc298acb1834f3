"""Command-line front end.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error. Each command
prints exactly one JSON summary line on stdout; logs go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import dataset, hpo, metrics, pipeline, tabular
from .config import load_config
from .errors import AlphaDiggerError, ConfigError
from .hpo import CvConfig
from .seqnn import SentimentModel

log = logging.getLogger("alphadigger")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML experiment config")
    p.add_argument("--seed", type=int, help="master seed override")
    p.add_argument("--out", help="output directory override")
    p.add_argument("--threads", type=int,
                   default=int(os.environ.get("ALPHA_DIGGER_THREADS", "1")),
                   help="worker thread cap (default $ALPHA_DIGGER_THREADS or 1)")
    p.add_argument("--verbose", "-v", action="count", default=0)
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="SECTION.KEY=VALUE", help="config override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alphadigger",
        description="Two-phase sentiment-to-stock-movement prediction pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic corpus")
    _add_common(p)

    p = sub.add_parser("train-sentiment", help="phase 1: train the sentiment model")
    _add_common(p)

    p = sub.add_parser("score", help="score texts with a trained sentiment model")
    _add_common(p)
    p.add_argument("--model", required=True, help="sentiment_model.json path")
    p.add_argument("--context", help="text_context.json path (default: sibling of --model)")
    p.add_argument("--in", dest="infile", required=True, help="posts.csv to score")
    p.add_argument("--out-file", dest="outfile", required=True, help="scores.csv output")

    p = sub.add_parser("train-predict", help="fit one movement classifier, no HPO")
    _add_common(p)
    p.add_argument("--train", required=True, help="training rows.csv")
    p.add_argument("--test", help="evaluation rows.csv")
    p.add_argument("--kind", required=True, choices=tabular.MODEL_KINDS)
    p.add_argument("--params", default="{}", help="hyperparameters as JSON")

    p = sub.add_parser("hpo", help="hyperparameter search for one model kind")
    _add_common(p)
    p.add_argument("--train", required=True, help="training rows.csv")
    p.add_argument("--kind", required=True, choices=tabular.MODEL_KINDS)
    p.add_argument("--optimizer", required=True, choices=pipeline.OPTIMIZERS)
    p.add_argument("--trials", type=int, default=10, help="random-search trials")
    p.add_argument("--budget", type=int, default=12, help="BO budget")
    p.add_argument("--init", type=int, default=4, help="BO initial random trials")
    p.add_argument("--cv-k", type=int, default=5)

    p = sub.add_parser("evaluate", help="evaluate a saved classifier on rows")
    _add_common(p)
    p.add_argument("--model", required=True, help="classifier model.json")
    p.add_argument("--rows", required=True, help="rows.csv with labels")

    p = sub.add_parser("run", help="full two-phase experiment")
    _add_common(p)
    return parser


def _require_config(args):
    if not args.config:
        raise ConfigError("--config is required for this command")
    if not os.path.exists(args.config):
        raise ConfigError(f"config file not found: {args.config}")
    cfg = load_config(args.config, args.overrides)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.out:
        cfg.out_dir = args.out
    return cfg


def cmd_gen_data(args) -> dict:
    cfg = _require_config(args)
    posts, bars, tags = dataset.generate_synthetic(
        cfg.synth, pipeline.fan_out_seed(cfg.master_seed, "synthetic"))
    os.makedirs(cfg.out_dir, exist_ok=True)
    posts_path = os.path.join(cfg.out_dir, "posts.csv")
    prices_path = os.path.join(cfg.out_dir, "prices.csv")
    dataset.write_posts_csv(posts_path, posts, tags)
    dataset.write_prices_csv(prices_path, bars)
    return {"posts": len(posts), "bars": len(bars),
            "before": tags.count("before"), "during": tags.count("during"),
            "posts_csv": posts_path, "prices_csv": prices_path}


def cmd_train_sentiment(args) -> dict:
    cfg = _require_config(args)
    period1, _, _, bars = pipeline.load_experiment_data(cfg)
    from .seqnn import TrainRun
    from . import figures, text as textmod
    embedding = embedding_tokens = None
    if cfg.embedding != "random":
        embedding, embedding_tokens = textmod.load_embedding_file(cfg.embedding)
    result = pipeline.run_phase1(
        period1, bars, tokenizer=cfg.tokenizer, embedding=embedding,
        embedding_tokens=embedding_tokens, embed_dim=cfg.embed_dim,
        hidden_sizes=cfg.hidden_sizes, n_heads=cfg.n_heads,
        train_embeddings=cfg.train_embeddings,
        run=TrainRun(epochs=cfg.epochs, batch_size=cfg.batch_size,
                     learning_rate=cfg.learning_rate,
                     seed=pipeline.fan_out_seed(cfg.master_seed, "phase1-train")),
        master_seed=cfg.master_seed)
    os.makedirs(cfg.out_dir, exist_ok=True)
    model_path = os.path.join(cfg.out_dir, "sentiment_model.json")
    result.model.save(model_path)
    pipeline.save_text_context(os.path.join(cfg.out_dir, "text_context.json"),
                               result.pipeline, result.embedding_tokens)
    figures.plot_training_history(result.history, cfg.out_dir)
    return {"model": model_path, "test_accuracy": result.test_accuracy,
            "epochs": len(result.history.loss),
            "final_train_accuracy": result.history.accuracy[-1],
            "skipped_posts": result.skipped_posts}


def cmd_score(args) -> dict:
    model = SentimentModel.load(args.model)
    context_path = args.context or os.path.join(os.path.dirname(args.model) or ".",
                                                "text_context.json")
    if not os.path.exists(context_path):
        raise ConfigError(f"text context not found: {context_path}")
    pipe = pipeline.load_text_context(context_path)
    posts, _ = dataset.read_posts_csv(args.infile)
    from .seqnn import predict_sentiment
    scores = predict_sentiment(model, [p.text for p in posts], pipe)
    with open(args.outfile, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["score"])
        for s in scores:
            w.writerow([repr(float(s))])
    return {"scored": len(scores), "out": args.outfile}


def cmd_train_predict(args) -> dict:
    rows = dataset.read_rows_csv(args.train)
    X, y = dataset.rows_to_arrays(rows)
    try:
        params = json.loads(args.params)
    except json.JSONDecodeError as e:
        raise ConfigError(f"--params is not valid JSON: {e}")
    seed = args.seed if args.seed is not None else 0
    cfg = tabular.FitConfig(kind=args.kind, params=params, seed=seed)
    model = tabular.fit_model(X, y, cfg)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    model_path = os.path.join(out_dir, f"model_{args.kind}.json")
    tabular.save_model(model, model_path)
    summary = {"kind": args.kind, "model": model_path,
               "train_accuracy": float(np.mean(tabular.predict_label(model, X) == y))}
    if args.test:
        rows_t = dataset.read_rows_csv(args.test)
        Xt, yt = dataset.rows_to_arrays(rows_t)
        rep = metrics.report_from_predictions(tabular.predict_label(model, Xt), yt)
        report_path = os.path.join(out_dir, f"report_{args.kind}.json")
        with open(report_path, "w", encoding="utf-8") as f:
            f.write(metrics.report_json(args.kind, "none", "test", rep, 0.0))
        summary.update(test_accuracy=rep.accuracy, report=report_path)
    return summary


def cmd_hpo(args) -> dict:
    rows = dataset.read_rows_csv(args.train)
    X, y = dataset.rows_to_arrays(rows)
    seed = args.seed if args.seed is not None else 0
    space = pipeline.default_space(args.kind)
    objective = pipeline._make_objective(
        args.kind, X, y, CvConfig(k=args.cv_k, seed=pipeline.fan_out_seed(seed, "cv")),
        pipeline.fan_out_seed(seed, "fit"))
    if args.optimizer == "grid":
        search = hpo.grid_search(space, objective)
    elif args.optimizer == "random":
        search = hpo.random_search(space, objective, args.trials, seed=seed)
    else:
        search = hpo.bayes_opt(space, objective, budget=args.budget,
                               n_init=args.init, seed=seed)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    trials_path = os.path.join(out_dir, "trials.csv")
    hpo.write_trials_csv(trials_path, search)
    best = search.best
    return {"kind": args.kind, "optimizer": args.optimizer,
            "trials": len(search.trials), "best_objective": best.objective,
            "best_params": best.params, "wall_time_s": round(search.total_wall_time_s, 3),
            "trials_csv": trials_path}


def cmd_evaluate(args) -> dict:
    model = tabular.load_model(args.model)
    rows = dataset.read_rows_csv(args.rows)
    X, y = dataset.rows_to_arrays(rows)
    rep = metrics.report_from_predictions(tabular.predict_label(model, X), y)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, "report.json")
    with open(report_path, "w", encoding="utf-8") as f:
        f.write(metrics.report_json(model.config.kind, "none", "eval", rep, 0.0))
    return {"accuracy": rep.accuracy, "rows": len(rows), "report": report_path}


def cmd_run(args) -> dict:
    cfg = _require_config(args)
    result = pipeline.run_experiment(cfg, threads=max(1, args.threads))
    return {
        "out_dir": cfg.out_dir,
        "phase1_test_accuracy": result.phase1.test_accuracy,
        "cells": [
            {"model": c.model_kind, "optimizer": c.optimizer,
             "test1_accuracy": c.test1_accuracy, "test2_accuracy": c.test2_accuracy,
             "running_time_s": round(c.search.total_wall_time_s, 3)}
            for c in result.cells
        ],
        "counts": result.counts,
        "stage_times_s": {k: round(v, 3) for k, v in result.stage_times.items()},
    }


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-sentiment": cmd_train_sentiment,
    "score": cmd_score,
    "train-predict": cmd_train_predict,
    "hpo": cmd_hpo,
    "evaluate": cmd_evaluate,
    "run": cmd_run,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code not in (0, None) else EXIT_OK
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = _COMMANDS[args.command](args)
    except ConfigError as e:
        print(json.dumps({"error": str(e), "kind": "config"}))
        log.error("config error: %s", e)
        return EXIT_CONFIG
    except AlphaDiggerError as e:
        print(json.dumps({"error": str(e), "kind": "runtime",
                          "stage": args.command}))
        log.error("runtime failure in %s: %s", args.command, e)
        return EXIT_RUNTIME
    except OSError as e:
        print(json.dumps({"error": str(e), "kind": "io", "stage": args.command}))
        log.error("I/O failure in %s: %s", args.command, e)
        return EXIT_RUNTIME
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
