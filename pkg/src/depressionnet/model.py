"""Two-branch late-fusion classifier: summary text branch (CNN -> BiGRU ->
attention) and behavior branch (stacked BiGRU over modality timesteps)."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import tensor as T
from .behavior import MODALITIES
from .layers import (AdditiveAttention, BiGRU, CNNBlock, Dense, EmbeddingTable, Module,
                     StackedBiGRU, attention, final_states)

DEPRESSED_INDEX = 0  # probability pair is (p_depressed, p_non_depressed)


@dataclass
class ModelConfig:
    embed_dim: int = 300
    window: int = 3
    pool: int = 4
    filters: int = 64
    summary_hidden: int = 32
    behavior_layers: int = 2
    behavior_hidden: int = 64
    behavior_proj: int = 32
    behavior_fc: int = 128
    fusion_widths: tuple = (64, 32)
    classes: int = 2
    m: int = 20
    n_max: int = 100
    seed: int = 0
    attention: str = "per_dim"  # or "additive"
    behavior_axis: str = "modality"  # or "feature"
    train_embeddings: bool = True

    def __post_init__(self):
        self.fusion_widths = tuple(self.fusion_widths)
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, int) and not isinstance(v, bool) and f.name != "seed" and v <= 0:
                raise ValueError(f"ModelConfig.{f.name} must be positive")
        if any(w <= 0 for w in self.fusion_widths):
            raise ValueError("fusion widths must be positive")
        if self.classes != 2:
            raise ValueError("only binary classification is supported")
        if self.attention not in ("per_dim", "additive"):
            raise ValueError(f"unknown attention {self.attention!r}")
        if self.behavior_axis not in ("modality", "feature"):
            raise ValueError(f"unknown behavior_axis {self.behavior_axis!r}")

    def to_dict(self):
        d = asdict(self)
        d["fusion_widths"] = list(self.fusion_widths)
        return d


# ---------------------------------------------------------------- behavior input

class NotFittedError(RuntimeError):
    pass


@dataclass
class Standardizer:
    """Per-feature (x - mean) / std for each modality, std floored at 1e-8."""
    means: list = field(default_factory=list)
    stds: list = field(default_factory=list)
    floor: float = 1e-8

    @property
    def fitted(self):
        return bool(self.means)

    def fit(self, feature_arrays):
        """``feature_arrays``: one list of 4 modality arrays per training user."""
        if not feature_arrays:
            raise ValueError("cannot fit a scaler on zero users")
        self.means, self.stds = [], []
        for m in range(len(MODALITIES)):
            X = np.stack([fa[m] for fa in feature_arrays])
            self.means.append(X.mean(axis=0))
            self.stds.append(X.std(axis=0))
        return self

    def transform(self, arrays):
        if not self.fitted:
            raise NotFittedError("scaler is not fitted")
        return [(np.asarray(a, dtype=np.float64) - mu) / np.maximum(sd, self.floor)
                for a, mu, sd in zip(arrays, self.means, self.stds)]

    def to_dict(self):
        return {"means": [m.tolist() for m in self.means],
                "stds": [s.tolist() for s in self.stds], "floor": self.floor}

    @classmethod
    def from_dict(cls, d):
        return cls([np.array(m) for m in d["means"]], [np.array(s) for s in d["stds"]], d["floor"])


@dataclass
class BehaviorSequence:
    """Standardized modality vectors in fixed order [social, emotional, domain, topic]."""
    steps: list

    def __post_init__(self):
        if len(self.steps) != 4:
            raise ValueError("a behavior sequence has exactly 4 timesteps")
        for s in self.steps:
            if not np.all(np.isfinite(s)):
                raise ValueError("non-finite behavior feature")


def build_behavior_sequence(feats, scaler: Standardizer) -> BehaviorSequence:
    """Standardize one user's features; the learned projection to a common
    width happens inside the network."""
    return BehaviorSequence(scaler.transform(feats.arrays()))


# ---------------------------------------------------------------- network

@dataclass
class Ablation:
    drop_S: bool = False
    drop_E: bool = False
    drop_D: bool = False
    drop_T: bool = False
    drop_behavior: bool = False
    drop_summary: bool = False

    def dropped_modalities(self):
        return [self.drop_S, self.drop_E, self.drop_D, self.drop_T]


@dataclass
class Batch:
    token_ids: np.ndarray  # (B, N) int
    behavior: list  # 4 arrays (B, d_m)

    def __len__(self):
        return self.token_ids.shape[0]


class DepressionNet(Module):
    def __init__(self, config: ModelConfig, modality_dims, embeddings: EmbeddingTable, rng=None):
        self.config = config
        c = config
        rng = rng or np.random.default_rng(c.seed)
        self.modality_dims = list(modality_dims)
        self.embeddings = embeddings
        self.cnn = CNNBlock(embeddings.dim, c.filters, rng, c.window, c.pool)
        self.bigru = BiGRU(c.filters, c.summary_hidden, rng)
        self.attn = AdditiveAttention(self.bigru.out_dim, rng) if c.attention == "additive" else None
        if c.behavior_axis == "modality":
            self.proj = [Dense(d, c.behavior_proj, rng) for d in self.modality_dims]
        else:
            self.proj = [Dense(1, c.behavior_proj, rng)]
        self.stacked = StackedBiGRU(c.behavior_proj, c.behavior_hidden, rng, c.behavior_layers)
        self.behavior_fc = Dense(2 * c.behavior_hidden, c.behavior_fc, rng)
        self.fused_width = 2 * min(self.bigru.out_dim, c.behavior_fc)
        fusion, width = [], self.fused_width
        for w in c.fusion_widths:
            fusion.append(Dense(width, w, rng))
            width = w
        self.fusion = fusion
        self.out = Dense(width, c.classes, rng)

    # -- branches
    def summary_branch(self, token_ids):
        X = self.embeddings(token_ids)
        H = self.bigru(self.cnn(X))
        if self.attn is None:
            s, _ = attention(H)
        else:
            s, _ = self.attn(H)
        return s

    def behavior_branch(self, steps, ablation: Ablation):
        dropped = ablation.dropped_modalities()
        if self.config.behavior_axis == "modality":
            seq = []
            for x, proj, drop in zip(steps, self.proj, dropped):
                p = proj(x)
                seq.append(p * 0.0 if drop else p)
            X = T.stack(seq, axis=1)
        else:
            cols, mask = [], []
            for x, drop in zip(steps, dropped):
                cols.append(x.data)
                mask.extend([0.0 if drop else 1.0] * x.shape[1])
            flat = np.concatenate(cols, axis=1)[:, :, None]  # (B, F, 1)
            X = self.proj[0](T.Tensor(flat)) * np.array(mask)[None, :, None]
        H = self.stacked(X)
        return T.relu(self.behavior_fc(final_states(H, self.config.behavior_hidden)))

    def forward(self, batch: Batch, ablation: Ablation | None = None):
        """(B, 2) class probabilities (p_depressed, p_non_depressed)."""
        ablation = ablation or Ablation()
        B = len(batch)
        if ablation.drop_summary:
            s = T.Tensor(np.zeros((B, self.bigru.out_dim)))
        else:
            s = self.summary_branch(batch.token_ids)
        if ablation.drop_behavior:
            b = T.Tensor(np.zeros((B, self.config.behavior_fc)))
        else:
            b = self.behavior_branch([T.Tensor(x) for x in batch.behavior], ablation)
        target = self.fused_width // 2
        # the wider representation is max-pooled down to the narrower width
        if s.shape[1] > target:
            s = T.adaptive_maxpool(s, target)
        if b.shape[1] > target:
            b = T.adaptive_maxpool(b, target)
        h = T.concat([s, b], axis=-1)
        for layer in self.fusion:
            h = T.relu(layer(h))
        return T.softmax(self.out(h), axis=-1)

    __call__ = forward

    # -- checkpoint helpers
    def state(self):
        return [(n, p.data.copy()) for n, p in self.named_params()]

    def load_state(self, state):
        named = dict(self.named_params())
        for name, arr in state:
            if name not in named:
                raise KeyError(f"unknown parameter {name}")
            if named[name].shape != arr.shape:
                raise T.ShapeError(f"{name}: checkpoint shape {arr.shape} vs {named[name].shape}")
            named[name].data[...] = arr


def one_hot(labels_dep):
    """Targets from booleans (True = depressed)."""
    y = np.zeros((len(labels_dep), 2))
    for i, dep in enumerate(labels_dep):
        y[i, DEPRESSED_INDEX if dep else 1 - DEPRESSED_INDEX] = 1.0
    return y


def loss(probs, labels_dep):
    """Mean cross-entropy -log p[label]."""
    return T.cross_entropy(probs, one_hot(labels_dep))


def predict_label(p_dep: float, threshold: float = 0.5):
    """depressed iff p_dep >= threshold (boundary counts as depressed)."""
    return ("depressed" if p_dep >= threshold else "non_depressed"), float(p_dep)


def save_config(path, config: ModelConfig, extra=None):
    d = {"model": config.to_dict()}
    if extra:
        d.update(extra)
    Path(path).write_text(json.dumps(d, indent=1, sort_keys=True))
