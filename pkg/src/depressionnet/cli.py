"""Command-line entry point.

    depressionnet [--seed N] [--jobs N] [--config FILE] <subcommand> ...

Subcommands: ingest, fit-topics, features, summarize, train, evaluate, cv,
study, predict. Exit status is 0 on success, 2 for missing files and 1 for
any other error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter
from dataclasses import fields, replace
from pathlib import Path

import yaml

from . import harness
from .behavior import extract_features, load_lexicons, load_stopwords
from .corpus import (DEPRESSED, NON_DEPRESSED, derive_seed, filter_users, is_english,
                     load_timelines, user_to_dict, write_timelines)
from .harness import RunConfig
from .model import Ablation, ModelConfig
from .summarize import HttpAbstractor, HttpEmbedder, Summarizer
from .topicmodel import TopicModel, all_top_words, fit as fit_lda, prepare_docs

log = logging.getLogger("depressionnet")

ENV_EMBED_URL = "DEPRESSIONNET_EMBED_URL"
ENV_ABSTRACT_URL = "DEPRESSIONNET_ABSTRACT_URL"

CONFIG_SCHEMA = {
    "seed": None,
    "jobs": None,
    "paths": {"data", "lexicons", "embedding_file", "checkpoint_dir"},
    "providers": {"embed_url", "abstract_url", "embed_dim", "timeout", "retries"},
    "run": {f.name for f in fields(RunConfig)} - {"model", "ablation", "seed"},
    "model": {f.name for f in fields(ModelConfig)} - {"seed"},
    "ablation": {f.name for f in fields(Ablation)},
}


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    """Parse and validate a YAML pipeline config; unknown keys are errors."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    cfg = yaml.safe_load(path.read_text()) or {}
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    for key, value in cfg.items():
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"{path}: unknown key {key!r}")
        allowed = CONFIG_SCHEMA[key]
        if allowed is None:
            continue
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: section {key!r} must be a mapping")
        for sub in value:
            if sub not in allowed:
                raise ConfigError(f"{path}: unknown key {key}.{sub}")
    for key, value in (cfg.get("paths") or {}).items():
        if key != "checkpoint_dir" and value is not None and not Path(value).exists():
            raise FileNotFoundError(f"config paths.{key}: no such path {value}")
    return cfg


# ---------------------------------------------------------------- wiring

def _run_config(args, cfg) -> RunConfig:
    run = dict(cfg.get("run") or {})
    model = dict(cfg.get("model") or {})
    paths = cfg.get("paths") or {}
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    if paths.get("lexicons"):
        run.setdefault("lexicon_dir", paths["lexicons"])
    if paths.get("embedding_file"):
        run.setdefault("embedding_file", paths["embedding_file"])
    for name in ("epochs", "batch_size", "input_mode", "lda_iters"):
        value = getattr(args, name, None)
        if value is not None:
            run[name] = value
    if getattr(args, "lexicons", None):
        run["lexicon_dir"] = args.lexicons
    model["seed"] = derive_seed(seed, "model")
    return RunConfig(model=ModelConfig(**model), ablation=Ablation(**(cfg.get("ablation") or {})),
                     seed=seed, **run)


def _providers(cfg):
    prov = cfg.get("providers") or {}
    embed_url = os.environ.get(ENV_EMBED_URL) or prov.get("embed_url")
    abstract_url = os.environ.get(ENV_ABSTRACT_URL) or prov.get("abstract_url")
    kw = {k: prov[k] for k in ("timeout", "retries") if k in prov}
    embedder = HttpEmbedder(embed_url, prov.get("embed_dim", 768), **kw) if embed_url else None
    abstractor = HttpAbstractor(abstract_url, **kw) if abstract_url else None
    return embedder, abstractor


def _corpus(args, cfg):
    path = getattr(args, "corpus", None) or (cfg.get("paths") or {}).get("data")
    if not path:
        raise ConfigError("no corpus given (positional argument or paths.data)")
    return load_timelines(path)


def _write(path, text):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------- subcommands

def cmd_ingest(args, cfg):
    users = load_timelines(args.data)
    kept = filter_users(users, args.min_posts, args.max_followers,
                        None if args.no_language_filter else is_english)
    write_timelines(kept, args.out)
    stats = {
        "input": len(users),
        "kept": len(kept),
        "excluded": len(users) - len(kept),
        "kept_per_class": {k or "unlabelled": v for k, v in
                           sorted(Counter(u.label for u in kept).items(), key=lambda kv: str(kv[0]))},
    }
    _write(str(args.out) + ".stats.json", json.dumps(stats, indent=1, sort_keys=True) + "\n")
    print(json.dumps(stats, sort_keys=True))


def _fit_topics(users, run: RunConfig):
    depressed = [u for u in users if u.label == DEPRESSED]
    docs = prepare_docs([t.text for u in depressed for t in u.tweets], load_stopwords())
    return fit_lda(docs, K=run.topics, alpha=run.lda_alpha, beta=run.lda_beta,
                   iters=run.lda_iters, seed=derive_seed(run.seed, "lda"))


def cmd_fit_topics(args, cfg):
    run = _run_config(args, cfg)
    if args.k is not None:
        run = replace(run, topics=args.k)
    model = _fit_topics(_corpus(args, cfg), run)
    _write(args.out, model.to_json() + "\n")


def cmd_features(args, cfg):
    run = _run_config(args, cfg)
    lex = load_lexicons(args.lexicons or run.lexicon_dir)
    users = _corpus(args, cfg)
    if args.fit_topics:
        tm = _fit_topics(users, run)
        if args.topic_model:
            _write(args.topic_model, tm.to_json() + "\n")
    elif args.topic_model:
        if not Path(args.topic_model).is_file():
            raise FileNotFoundError(f"topic model not found: {args.topic_model}")
        tm = TopicModel.from_json(Path(args.topic_model).read_text())
    else:
        raise ConfigError("features needs --topic-model FILE or --fit-topics")
    words = all_top_words(tm, min(run.topic_top_words, len(tm.vocab)))
    lines = []
    for u in users:
        rec = {"user_id": u.user_id, "label": {DEPRESSED: 1, NON_DEPRESSED: 0}.get(u.label)}
        rec.update(extract_features(u, lex, words).to_dict())
        lines.append(json.dumps(rec, sort_keys=True, ensure_ascii=False))
    _write(args.out, "".join(line + "\n" for line in lines))


def cmd_summarize(args, cfg):
    run = _run_config(args, cfg)
    embedder, abstractor = _providers(cfg)
    pipeline = harness.FeaturePipeline(run, stopwords=frozenset(),
                                       embedder=embedder, abstractor=abstractor)
    lines = []
    for u in _corpus(args, cfg):
        rec = {"user_id": u.user_id, **pipeline.summary(u).to_dict()}
        lines.append(json.dumps(rec, sort_keys=True, ensure_ascii=False))
    _write(args.out, "".join(line + "\n" for line in lines))


def _checkpoint_dir(args, cfg):
    d = getattr(args, "checkpoint", None) or (cfg.get("paths") or {}).get("checkpoint_dir")
    if not d:
        raise ConfigError("no checkpoint directory (--checkpoint or paths.checkpoint_dir)")
    return Path(d)


def cmd_train(args, cfg):
    run = _run_config(args, cfg)
    embedder, abstractor = _providers(cfg)
    users = _corpus(args, cfg)
    valid = load_timelines(args.valid) if args.valid else None
    result = harness.train(run, users, valid, embedder=embedder, abstractor=abstractor)
    out = _checkpoint_dir(args, cfg)
    harness.save_fitted(result.fitted, out, step=len(result.history))
    _write(out / "history.json", harness.history_json(result.history) + "\n")
    final = result.history[result.best_epoch] if result.history else None
    print(json.dumps({"epochs": len(result.history), "best_epoch": result.best_epoch,
                      "train": final["train"] if final else None}, sort_keys=True))


def _load(args, cfg):
    embedder, abstractor = _providers(cfg)
    return harness.load_fitted(_checkpoint_dir(args, cfg), embedder=embedder, abstractor=abstractor)


def cmd_evaluate(args, cfg):
    fitted = _load(args, cfg)
    metrics = harness.evaluate(fitted, _corpus(args, cfg))
    text = json.dumps(metrics.to_dict(), sort_keys=True)
    if args.out:
        _write(args.out, text + "\n")
    print(text)


def cmd_predict(args, cfg):
    fitted = _load(args, cfg)
    for user_id, label, score in fitted.predict(_corpus(args, cfg), args.threshold):
        print(f"{user_id}\t{label}\t{score:.6f}")


def cmd_cv(args, cfg):
    run = _run_config(args, cfg)
    jobs = args.jobs if args.jobs is not None else cfg.get("jobs", 1)
    result = harness.cross_validate(run, _corpus(args, cfg), args.k, jobs=jobs)
    text = result.to_csv()
    if args.out:
        _write(args.out, text)
    if args.plan_out:
        _write(args.plan_out, result.plan.to_json() + "\n")
    sys.stdout.write(text)


def cmd_study(args, cfg):
    run = _run_config(args, cfg)
    users = _corpus(args, cfg)
    if args.kind == "input-mode":
        rows = harness.input_mode_study(run, users)
    else:
        rows = harness.ablation_study(run, users)
    text = harness.study_table(rows)
    if args.out:
        _write(args.out, text)
    sys.stdout.write(text)


# ---------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="depressionnet", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=None, help="root seed (default: config or 0)")
    p.add_argument("--jobs", type=int, default=None, help="parallel folds for cv (default 1)")
    p.add_argument("--config", default=None, help="YAML pipeline config")
    p.add_argument("--log-file", default=None, help="timestamped log sidecar")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="filter a raw JSONL corpus")
    s.add_argument("data")
    s.add_argument("out")
    s.add_argument("--min-posts", type=int, default=10)
    s.add_argument("--max-followers", type=int, default=5000)
    s.add_argument("--no-language-filter", action="store_true")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("fit-topics", help="fit LDA on depressed users' tweets")
    s.add_argument("corpus", nargs="?")
    s.add_argument("out")
    s.add_argument("--k", type=int, default=None)
    s.add_argument("--lda-iters", type=int, default=None)
    s.set_defaults(func=cmd_fit_topics)

    s = sub.add_parser("features", help="behavior feature vectors per user")
    s.add_argument("corpus", nargs="?")
    s.add_argument("out")
    s.add_argument("--lexicons", default=None)
    s.add_argument("--topic-model", default=None)
    s.add_argument("--fit-topics", action="store_true")
    s.add_argument("--lda-iters", type=int, default=None)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("summarize", help="extractive + abstractive summaries")
    s.add_argument("corpus", nargs="?")
    s.add_argument("out")
    s.add_argument("--input-mode", default=None)
    s.set_defaults(func=cmd_summarize)

    for name, func in (("train", cmd_train), ("evaluate", cmd_evaluate), ("predict", cmd_predict)):
        s = sub.add_parser(name)
        s.add_argument("corpus", nargs="?")
        s.add_argument("--checkpoint", default=None)
        s.add_argument("--lexicons", default=None)
        s.set_defaults(func=func)
        if name == "train":
            s.add_argument("--valid", default=None)
            s.add_argument("--epochs", type=int, default=None)
            s.add_argument("--batch-size", type=int, default=None)
            s.add_argument("--input-mode", default=None)
            s.add_argument("--lda-iters", type=int, default=None)
        if name == "evaluate":
            s.add_argument("--out", default=None)
        if name == "predict":
            s.add_argument("--threshold", type=float, default=0.5)

    s = sub.add_parser("cv", help="k-fold cross-validation")
    s.add_argument("corpus", nargs="?")
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--out", default=None)
    s.add_argument("--plan-out", default=None)
    s.add_argument("--epochs", type=int, default=None)
    s.add_argument("--lda-iters", type=int, default=None)
    s.add_argument("--lexicons", default=None)
    s.set_defaults(func=cmd_cv)

    s = sub.add_parser("study", help="input-mode or ablation comparison table")
    s.add_argument("corpus", nargs="?")
    s.add_argument("--kind", choices=("input-mode", "ablation"), default="input-mode")
    s.add_argument("--out", default=None)
    s.add_argument("--epochs", type=int, default=None)
    s.add_argument("--lda-iters", type=int, default=None)
    s.add_argument("--lexicons", default=None)
    s.set_defaults(func=cmd_study)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.log_file:
        handler = logging.FileHandler(args.log_file)
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        logging.getLogger().addHandler(handler)
        logging.getLogger().setLevel(logging.INFO)
    try:
        cfg = load_config(args.config) if args.config else {}
        log.info("running %s", args.command)
        args.func(args, cfg)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, KeyError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
