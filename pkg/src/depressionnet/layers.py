"""Neural building blocks: word embeddings, the CNN block, GRU / BiGRU,
stacked BiGRU with residual connections, and attention pooling.

Sequence tensors are batch-first: (B, T, D).
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from . import tensor as T
from .summarize import OOV_TOKEN
from .tensor import Tensor


class Module:
    """Parameter container; parameters are yielded in attribute order."""

    def named_params(self, prefix=""):
        for key, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + key, value
            elif isinstance(value, Module):
                yield from value.named_params(f"{prefix}{key}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_params(f"{prefix}{key}.{i}.")

    def params(self):
        return [p for _, p in self.named_params()]


class Dense(Module):
    def __init__(self, n_in, n_out, rng, bias=True):
        self.W = T.glorot_uniform(rng, (n_in, n_out), n_in, n_out)
        self.b = T.zeros((n_out,)) if bias else None

    def __call__(self, x):
        y = T.matmul(x, self.W)
        return y if self.b is None else y + self.b


# ---------------------------------------------------------------- embeddings

class EmbeddingTable(Module):
    """Row 0 is the out-of-vocabulary row; word i of ``words`` is row i + 1."""

    def __init__(self, words, matrix, trainable=True):
        words = list(words)
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.shape[0] != len(words) + 1:
            raise T.ShapeError(f"embedding matrix has {matrix.shape[0]} rows for {len(words)} words + OOV")
        self.words = words
        self.index = {w: i + 1 for i, w in enumerate(words)}
        self.matrix = Tensor(matrix, requires_grad=trainable, name="embedding")

    @property
    def dim(self):
        return self.matrix.shape[1]

    @classmethod
    def random(cls, words, dim, rng, trainable=True):
        words = [w for w in dict.fromkeys(words) if w != OOV_TOKEN]
        a = np.sqrt(6.0 / (len(words) + 1 + dim))
        return cls(words, rng.uniform(-a, a, size=(len(words) + 1, dim)), trainable)

    @classmethod
    def from_word2vec(cls, path, trainable=True, rng=None):
        words, rows = read_word2vec(path)
        dim = rows.shape[1]
        rng = rng or np.random.default_rng(0)
        oov = rng.uniform(-0.05, 0.05, size=(1, dim))
        return cls(words, np.vstack([oov, rows]), trainable)

    def ids(self, tokens, length=None):
        ids = [self.index.get(t, 0) for t in tokens]
        if length is not None:
            ids = (ids + [0] * length)[:length]
        return np.array(ids, dtype=np.int64)

    def __call__(self, ids):
        return T.embedding_lookup(self.matrix, ids)


def read_word2vec(path):
    """word2vec text format: header ``V E`` then ``word v1 ... vE`` per line."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: first line must be 'V E'")
        V, E = int(header[0]), int(header[1])
        words, rows = [], []
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(" ")
            if not parts or not parts[0]:
                continue
            if len(parts) != E + 1:
                raise ValueError(f"{path}:{lineno}: expected {E} values after the word")
            words.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
    if len(words) != V:
        raise ValueError(f"{path}: header declares {V} words, found {len(words)}")
    return words, np.array(rows, dtype=np.float64).reshape(V, E)


def write_word2vec(path, words, matrix):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(words)} {matrix.shape[1]}\n")
        for w, row in zip(words, matrix):
            fh.write(w + " " + " ".join(repr(float(v)) for v in row) + "\n")


def embed_summary(summary, table: EmbeddingTable, min_len: int = 3):
    """(N, E) matrix for one summary; short summaries are right-padded with
    the OOV row up to ``min_len``."""
    tokens = list(summary.tokens)
    if not tokens:
        raise ValueError("empty summary")
    return table(table.ids(tokens, max(len(tokens), min_len)))


# ---------------------------------------------------------------- CNN block

class CNNBlock(Module):
    """conv1d(window) -> ReLU -> maxpool(pool) -> dense; (B, N, E) -> (B, T, out)
    with T = (N - window + 1) // pool."""

    def __init__(self, emb_dim, filters, rng, window=3, pool=4, out_dim=None):
        self.window = window
        self.pool = pool
        out_dim = out_dim or filters
        self.conv_w = T.glorot_uniform(rng, (window, emb_dim, filters), window * emb_dim, filters)
        self.conv_b = T.zeros((filters,))
        self.fc = Dense(filters, out_dim, rng)

    def __call__(self, X):
        if X.shape[1] < self.window:
            raise T.ShapeError(f"cnn_block: sequence length {X.shape[1]} < window {self.window}")
        h = T.relu(T.conv1d(X, self.conv_w, self.conv_b))
        return self.fc(T.maxpool1d(h, self.pool))


def cnn_output_length(n, window=3, pool=4):
    return (n - window + 1) // pool


# ---------------------------------------------------------------- GRU

class GruParams(Module):
    def __init__(self, n_in, hidden, rng):
        self.hidden = hidden
        for gate in ("z", "r", "h"):
            setattr(self, f"W_{gate}", T.glorot_uniform(rng, (n_in, hidden), n_in, hidden))
            setattr(self, f"U_{gate}", T.glorot_uniform(rng, (hidden, hidden), hidden, hidden))
            setattr(self, f"b_{gate}", T.zeros((hidden,)))

    def zero_(self):
        for p in self.params():
            p.data[...] = 0.0


def _gru_update(xz, xr, xh, h, p):
    z = T.sigmoid(xz + T.matmul(h, p.U_z))
    r = T.sigmoid(xr + T.matmul(h, p.U_r))
    cand = T.tanh(xh + T.matmul(r * h, p.U_h))
    return h + z * (cand - h)  # (1 - z) * h + z * cand


def gru_cell(x, h, p: GruParams):
    """One GRU step: h' = (1 - z) * h + z * tanh(W_h x + U_h (r * h) + b_h)."""
    x, h = T.as_tensor(x), T.as_tensor(h)
    if x.shape[-1] != p.W_z.shape[0] or h.shape[-1] != p.hidden:
        raise T.ShapeError(f"gru_cell: x {x.shape} / h {h.shape} do not fit params "
                           f"({p.W_z.shape[0]} -> {p.hidden})")
    return _gru_update(T.matmul(x, p.W_z) + p.b_z, T.matmul(x, p.W_r) + p.b_r,
                       T.matmul(x, p.W_h) + p.b_h, h, p)


def run_gru(X, p: GruParams, reverse=False):
    """Hidden state at every step of (B, T, D); with ``reverse`` the scan runs
    from the last step and outputs stay aligned with input positions."""
    X = T.as_tensor(X)
    if X.ndim != 3 or X.shape[1] == 0:
        raise T.ShapeError(f"gru: expected non-empty (B, T, D) input, got {X.shape}")
    B, L, _ = X.shape
    xz = T.matmul(X, p.W_z) + p.b_z
    xr = T.matmul(X, p.W_r) + p.b_r
    xh = T.matmul(X, p.W_h) + p.b_h
    h = T.Tensor(np.zeros((B, p.hidden)))
    states = [None] * L
    steps = range(L - 1, -1, -1) if reverse else range(L)
    for t in steps:
        h = _gru_update(xz[:, t], xr[:, t], xh[:, t], h, p)
        states[t] = h
    return T.stack(states, axis=1)


class BiGRU(Module):
    def __init__(self, n_in, hidden, rng):
        self.hidden = hidden
        self.fwd = GruParams(n_in, hidden, rng)
        self.bwd = GruParams(n_in, hidden, rng)

    @property
    def out_dim(self):
        return 2 * self.hidden

    def __call__(self, X):
        return T.concat([run_gru(X, self.fwd), run_gru(X, self.bwd, reverse=True)], axis=-1)


def final_states(H, hidden):
    """Forward state after the last step concatenated with backward state
    after the first step: (B, T, 2H) -> (B, 2H)."""
    return T.concat([H[:, -1, :hidden], H[:, 0, hidden:]], axis=-1)


class StackedBiGRU(Module):
    """BiGRU layers; from the second layer on, each layer's input is added to
    its output (identity if widths match, learned projection otherwise)."""

    def __init__(self, n_in, hidden, rng, layers=2):
        if layers < 1:
            raise ValueError("layers must be at least 1")
        self.hidden = hidden
        self.layers = []
        self.proj = []
        width = n_in
        for i in range(layers):
            self.layers.append(BiGRU(width, hidden, rng))
            if i > 0 and width != 2 * hidden:
                self.proj.append(Dense(width, 2 * hidden, rng, bias=False))
            else:
                self.proj.append(None)
            width = 2 * hidden

    def __call__(self, X):
        H = X
        for i, (layer, proj) in enumerate(zip(self.layers, self.proj)):
            out = layer(H)
            if i > 0:
                out = out + (H if proj is None else proj(H))
            H = out
        return H


# ---------------------------------------------------------------- attention

def attention(H):
    """Per-dimension softmax over time: a = softmax_t(tanh(H)), s = sum_t a * H.

    Returns (s (B, D), a (B, T, D)).
    """
    H = T.as_tensor(H)
    a = T.softmax(T.tanh(H), axis=1)
    return T.sum(a * H, axis=1), a


class AdditiveAttention(Module):
    """Learned-context variant: one scalar weight per time step."""

    def __init__(self, dim, rng):
        self.W = T.glorot_uniform(rng, (dim, dim), dim, dim)
        self.b = T.zeros((dim,))
        self.v = T.glorot_uniform(rng, (dim, 1), dim, 1)

    def __call__(self, H):
        scores = T.matmul(T.tanh(T.matmul(H, self.W) + self.b), self.v)  # (B, T, 1)
        a = T.softmax(scores, axis=1)
        return T.sum(a * H, axis=1), a
