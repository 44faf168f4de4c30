"""Training loop, metrics, cross-validation and the ablation / input-mode studies."""
from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import tensor as T
from .behavior import extract_features, load_lexicons, load_stopwords
from .corpus import derive_seed, fold_users, kfold, split
from .layers import EmbeddingTable
from .model import (DEPRESSED_INDEX, Ablation, Batch, DepressionNet, ModelConfig, Standardizer,
                    build_behavior_sequence, loss)
from .summarize import INPUT_MODES, ConcatenateAbstractor, HashingEmbedder, Summarizer
from .topicmodel import TopicModel, all_top_words, fit as fit_lda, prepare_docs

log = logging.getLogger(__name__)

ABLATIONS = {
    "full": Ablation(),
    "drop_S": Ablation(drop_S=True),
    "drop_E": Ablation(drop_E=True),
    "drop_D": Ablation(drop_D=True),
    "drop_T": Ablation(drop_T=True),
    "drop_behavior": Ablation(drop_behavior=True),
    "drop_summary": Ablation(drop_summary=True),
}


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    batch_size: int = 16
    epochs: int = 200
    seed: int = 0
    input_mode: str = "summary"
    ablation: Ablation = field(default_factory=Ablation)
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    topics: int = 5
    topic_top_words: int = 5
    lda_alpha: float = 0.1
    lda_beta: float = 0.01
    lda_iters: int = 500
    embedding_file: Optional[str] = None
    lexicon_dir: Optional[str] = None
    metric: str = "euclidean"
    hash_dim: int = 64

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)
        if isinstance(self.ablation, dict):
            self.ablation = Ablation(**self.ablation)
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.input_mode not in INPUT_MODES:
            raise ValueError(f"input_mode must be one of {INPUT_MODES}")

    def to_dict(self):
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d


# ---------------------------------------------------------------- metrics

@dataclass
class Metrics:
    precision: float
    recall: float
    f1: float
    accuracy: float
    confusion: tuple  # (TP, FP, FN, TN), positive class = depressed
    macro_f1: float = 0.0
    zero_division: tuple = ()

    @classmethod
    def from_confusion(cls, tp, fp, fn, tn):
        n = tp + fp + fn + tn
        if n == 0:
            raise ValueError("cannot compute metrics on an empty set")
        flags = []

        def ratio(a, b, name):
            if b == 0:
                flags.append(name)
                return 0.0
            return a / b

        p = ratio(tp, tp + fp, "precision")
        r = ratio(tp, tp + fn, "recall")
        f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
        # negative-class scores for the macro average
        pn = tn / (tn + fn) if tn + fn else 0.0
        rn = tn / (tn + fp) if tn + fp else 0.0
        f1n = 0.0 if pn + rn == 0 else 2 * pn * rn / (pn + rn)
        return cls(p, r, f1, (tp + tn) / n, (tp, fp, fn, tn), (f1 + f1n) / 2, tuple(flags))

    @classmethod
    def from_predictions(cls, predicted_dep, actual_dep):
        tp = fp = fn = tn = 0
        for p, a in zip(predicted_dep, actual_dep):
            if p and a:
                tp += 1
            elif p:
                fp += 1
            elif a:
                fn += 1
            else:
                tn += 1
        return cls.from_confusion(tp, fp, fn, tn)

    def to_dict(self):
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "accuracy": self.accuracy, "macro_f1": self.macro_f1,
                "confusion": list(self.confusion), "zero_division": list(self.zero_division)}


METRIC_FIELDS = ("accuracy", "precision", "recall", "f1", "macro_f1")


# ---------------------------------------------------------------- feature pipeline

class FeaturePipeline:
    """Everything fitted from training users only: topic words, scaler and
    the summary vocabulary. ``touched`` records every user id read while fitting."""

    def __init__(self, config: RunConfig, lexicons=None, stopwords=None,
                 embedder=None, abstractor=None):
        self.config = config
        self.lexicons = lexicons if lexicons is not None else load_lexicons(config.lexicon_dir)
        self.stopwords = stopwords if stopwords is not None else load_stopwords()
        mc = config.model
        self.summarizer = Summarizer(
            mode=config.input_mode, m=mc.m, n_max=mc.n_max,
            seed=derive_seed(config.seed, "summarize"), metric=config.metric,
            embedder=embedder or HashingEmbedder(config.hash_dim, derive_seed(config.seed, "hash") % 2**63),
            abstractor=abstractor or ConcatenateAbstractor())
        self.topic_model = None
        self.topic_words = None
        self.scaler = Standardizer()
        self.touched = set()
        self._summaries = {}

    def summary(self, user):
        s = self._summaries.get(user.user_id)
        if s is None:
            s = self._summaries[user.user_id] = self.summarizer(user)
        return s

    def fit(self, train_users):
        c = self.config
        self.touched |= {u.user_id for u in train_users}
        depressed = [u for u in train_users if u.is_depressed]
        docs = prepare_docs([t.text for u in depressed for t in u.tweets], self.stopwords)
        if not docs:
            raise ValueError("no depressed training tweets to fit the topic model on")
        self.topic_model = fit_lda(docs, K=c.topics, alpha=c.lda_alpha, beta=c.lda_beta,
                                   iters=c.lda_iters, seed=derive_seed(c.seed, "lda"))
        n_words = min(c.topic_top_words, len(self.topic_model.vocab))
        self.topic_words = all_top_words(self.topic_model, n_words)
        self.scaler.fit([self.features(u).arrays() for u in train_users])
        return self

    def features(self, user):
        return extract_features(user, self.lexicons, self.topic_words)

    def vocabulary(self, train_users):
        self.touched |= {u.user_id for u in train_users}
        return sorted({tok for u in train_users for tok in self.summary(u).tokens})

    def encode(self, users, table: EmbeddingTable):
        n_max = self.config.model.n_max
        ids = np.stack([table.ids(self.summary(u).tokens, max(n_max, self.config.model.window))
                        for u in users])
        seqs = [build_behavior_sequence(self.features(u), self.scaler).steps for u in users]
        behavior = [np.stack([s[m] for s in seqs]) for m in range(4)]
        return Batch(ids, behavior)


def _subset(batch: Batch, idx):
    return Batch(batch.token_ids[idx], [b[idx] for b in batch.behavior])


@dataclass
class Fitted:
    model: DepressionNet
    pipeline: FeaturePipeline
    config: RunConfig

    def probabilities(self, users, ablation=None):
        """(N, 2) array of (p_depressed, p_non_depressed)."""
        batch = self.pipeline.encode(users, self.model.embeddings)
        return self.probabilities_batch(batch, ablation)

    def probabilities_batch(self, batch, ablation=None):
        ablation = ablation if ablation is not None else self.config.ablation
        out = []
        with T.no_grad():
            for start in range(0, len(batch), 64):
                idx = np.arange(start, min(start + 64, len(batch)))
                out.append(self.model(_subset(batch, idx), ablation).data)
        return np.concatenate(out) if out else np.zeros((0, 2))

    def predict(self, users, threshold=0.5):
        p = self.probabilities(users)[:, DEPRESSED_INDEX]
        return [(u.user_id, "depressed" if s >= threshold else "non_depressed", float(s))
                for u, s in zip(users, p)]


@dataclass
class TrainResult:
    fitted: Fitted
    history: list
    best_epoch: Optional[int] = None


def build_model(config: RunConfig, pipeline: FeaturePipeline, train_users):
    mc = config.model
    rng = np.random.default_rng(derive_seed(config.seed, "init"))
    if config.embedding_file:
        table = EmbeddingTable.from_word2vec(config.embedding_file, mc.train_embeddings, rng)
        if table.dim != mc.embed_dim:
            raise ValueError(f"embedding file has dimension {table.dim}, config says {mc.embed_dim}")
    else:
        table = EmbeddingTable.random(pipeline.vocabulary(train_users), mc.embed_dim, rng,
                                      mc.train_embeddings)
    dims = [len(a) for a in pipeline.scaler.means]
    return DepressionNet(mc, dims, table, rng)


def _metrics_from_probs(probs, labels):
    return Metrics.from_predictions(probs[:, DEPRESSED_INDEX] >= 0.5, labels)


def train(config: RunConfig, train_users, valid_users=None, lexicons=None, embedder=None,
          abstractor=None) -> TrainResult:
    """Mini-batch Adam; keeps the parameters of the epoch with the best
    validation F1 (training F1 when no validation users are given)."""
    train_users = list(train_users)
    if not train_users:
        raise ValueError("empty training set")
    if any(u.label is None for u in train_users):
        raise ValueError("training users must be labelled")
    pipeline = FeaturePipeline(config, lexicons, embedder=embedder, abstractor=abstractor).fit(train_users)
    model = build_model(config, pipeline, train_users)
    fitted = Fitted(model, pipeline, config)
    history = []
    if config.epochs == 0:
        return TrainResult(fitted, history)

    params = model.params()
    state = T.AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    batch = pipeline.encode(train_users, model.embeddings)
    labels = np.array([u.is_depressed for u in train_users])
    valid_users = list(valid_users or [])
    vbatch = pipeline.encode(valid_users, model.embeddings) if valid_users else None
    vlabels = np.array([u.is_depressed for u in valid_users])
    best_score, best_state, best_epoch = -1.0, None, None

    for epoch in range(config.epochs):
        order = np.random.default_rng(derive_seed(config.seed, f"epoch:{epoch}")).permutation(len(train_users))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            for p in params:
                p.grad = None
            with T.Graph() as g:
                batch_loss = loss(model(_subset(batch, idx), config.ablation), labels[idx])
                g.backward(batch_loss)
            T.adam_step(params, [p.grad for p in params], state)
            total += float(batch_loss.data) * len(idx)
        train_m = _metrics_from_probs(fitted.probabilities_batch(batch), labels)
        record = {"epoch": epoch, "loss": total / len(order), "train": train_m.to_dict()}
        score = train_m.f1
        if vbatch is not None:
            val_m = _metrics_from_probs(fitted.probabilities_batch(vbatch), vlabels)
            record["valid"] = val_m.to_dict()
            score = val_m.f1
        history.append(record)
        if score >= best_score:
            best_score, best_state, best_epoch = score, model.state(), epoch
    model.load_state(best_state)
    return TrainResult(fitted, history, best_epoch)


def evaluate(fitted: Fitted, users, ablation=None) -> Metrics:
    users = list(users)
    if not users:
        raise ValueError("cannot evaluate on an empty set")
    if any(u.label is None for u in users):
        raise ValueError("evaluation users must be labelled")
    probs = fitted.probabilities(users, ablation)
    return _metrics_from_probs(probs, [u.is_depressed for u in users])


# ---------------------------------------------------------------- cross-validation

@dataclass
class CVResult:
    folds: list  # Metrics per fold
    plan: object
    touched: list = field(default_factory=list)  # user ids read while fitting each fold

    def mean(self, name):
        return float(np.mean([getattr(m, name) for m in self.folds]))

    def std(self, name):
        return float(np.std([getattr(m, name) for m in self.folds]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fold", *METRIC_FIELDS, "tp", "fp", "fn", "tn"])
        for i, m in enumerate(self.folds):
            w.writerow([i, *(f"{getattr(m, k):.6f}" for k in METRIC_FIELDS), *m.confusion])
        totals = np.sum([m.confusion for m in self.folds], axis=0)
        w.writerow(["mean±std", *(f"{self.mean(k):.6f}±{self.std(k):.6f}" for k in METRIC_FIELDS),
                    *(int(t) for t in totals)])
        return buf.getvalue()


def _run_fold(args):
    config, users, plan, i = args
    train_users, held = fold_users(users, plan, i)
    result = train(replace(config, seed=derive_seed(config.seed, f"fold:{i}")), train_users)
    return evaluate(result.fitted, held), sorted(result.fitted.pipeline.touched)


def cross_validate(config: RunConfig, users, k: int = 5, jobs: int = 1) -> CVResult:
    """Refit features + model on each training portion; score the held-out fold."""
    users = list(users)
    plan = kfold(users, k, derive_seed(config.seed, "kfold"))
    tasks = [(config, users, plan, i) for i in range(k)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_fold, tasks))
    else:
        results = [_run_fold(t) for t in tasks]
    return CVResult([m for m, _ in results], plan, [t for _, t in results])


# ---------------------------------------------------------------- studies

@dataclass
class StudyRow:
    name: str
    metrics: Metrics
    train_accuracy: float

    def to_dict(self):
        return {"name": self.name, "train_accuracy": self.train_accuracy, **self.metrics.to_dict()}


def _holdout(config, users, **overrides):
    train_users, test_users = split(users, 0.8, derive_seed(config.seed, "split"))
    cfg = replace(config, **overrides)
    result = train(cfg, train_users)
    train_acc = evaluate(result.fitted, train_users).accuracy
    return evaluate(result.fitted, test_users), train_acc


def input_mode_study(config: RunConfig, users, modes=INPUT_MODES) -> list:
    """Same split and seeds for every mode; only the tweet selection changes."""
    rows = []
    for mode in modes:
        m, acc = _holdout(config, users, input_mode=mode)
        rows.append(StudyRow(mode, m, acc))
    return rows


def ablation_study(config: RunConfig, users, names=tuple(ABLATIONS)) -> list:
    rows = []
    for name in names:
        m, acc = _holdout(config, users, ablation=ABLATIONS[name])
        rows.append(StudyRow(name, m, acc))
    return rows


def study_table(rows) -> str:
    """CSV with one row per configuration and identical columns."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", *METRIC_FIELDS, "train_accuracy", "tp", "fp", "fn", "tn"])
    for r in rows:
        w.writerow([r.name, *(f"{getattr(r.metrics, k):.6f}" for k in METRIC_FIELDS),
                    f"{r.train_accuracy:.6f}", *r.metrics.confusion])
    return buf.getvalue()


def history_json(history) -> str:
    return json.dumps(history, indent=1, sort_keys=True)


# ---------------------------------------------------------------- checkpoints

def save_fitted(fitted: Fitted, directory, step: int = 0):
    """Directory with params.bin/params.json (tensor checkpoint), config.json
    and pipeline.json (vocabulary, scaler, topic words, topic model)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    T.save_checkpoint(directory / "params", fitted.model.state(), fitted.config.seed, step)
    (directory / "config.json").write_text(json.dumps(fitted.config.to_dict(), indent=1, sort_keys=True))
    pl = fitted.pipeline
    (directory / "pipeline.json").write_text(json.dumps({
        "vocabulary": fitted.model.embeddings.words,
        "modality_dims": fitted.model.modality_dims,
        "scaler": pl.scaler.to_dict(),
        "topic_words": pl.topic_words,
        "topic_model": json.loads(pl.topic_model.to_json()) if pl.topic_model else None,
    }, sort_keys=True))


def load_fitted(directory, lexicons=None, embedder=None, abstractor=None) -> Fitted:
    directory = Path(directory)
    for name in ("params.json", "params.bin", "config.json", "pipeline.json"):
        if not (directory / name).is_file():
            raise FileNotFoundError(f"checkpoint file missing: {directory / name}")
    config = RunConfig(**json.loads((directory / "config.json").read_text()))
    meta = json.loads((directory / "pipeline.json").read_text())
    pipeline = FeaturePipeline(config, lexicons, embedder=embedder, abstractor=abstractor)
    pipeline.scaler = Standardizer.from_dict(meta["scaler"])
    pipeline.topic_words = meta["topic_words"]
    if meta["topic_model"] is not None:
        pipeline.topic_model = TopicModel.from_json(json.dumps(meta["topic_model"]))
    state, _ = T.load_checkpoint(directory / "params")
    named = dict(state)
    table = EmbeddingTable(meta["vocabulary"], named["embeddings.matrix"], config.model.train_embeddings)
    model = DepressionNet(config.model, meta["modality_dims"], table)
    model.load_state(state)
    return Fitted(model, pipeline, config)
