"""Latent Dirichlet Allocation fitted by collapsed Gibbs sampling."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.special import gammaln

from .behavior import URL_TOKEN, USER_TOKEN, load_stopwords, tokenize


@dataclass
class TopicModel:
    K: int
    vocab: list
    phi: np.ndarray
    theta: np.ndarray
    seed: int
    alpha: float = 0.1
    beta: float = 0.01
    iters: int = 500
    loglik: list = field(default_factory=list)

    @property
    def word_index(self) -> dict:
        return {w: i for i, w in enumerate(self.vocab)}

    def to_json(self) -> str:
        return json.dumps({
            "K": self.K, "vocab": self.vocab, "phi": self.phi.tolist(),
            "theta": self.theta.tolist(), "seed": self.seed, "alpha": self.alpha,
            "beta": self.beta, "iters": self.iters,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TopicModel":
        obj = json.loads(text)
        return cls(K=obj["K"], vocab=list(obj["vocab"]), phi=np.array(obj["phi"], dtype=np.float64),
                   theta=np.array(obj["theta"], dtype=np.float64).reshape(-1, obj["K"]),
                   seed=obj["seed"], alpha=obj["alpha"], beta=obj["beta"], iters=obj["iters"])


def prepare_docs(texts, stopwords=None) -> list[list[str]]:
    """Tokenize texts, drop stop words, sentinels and non-alphabetic tokens,
    and discard documents left empty."""
    if stopwords is None:
        stopwords = load_stopwords()
    docs = []
    for text in texts:
        toks = [t for t in tokenize(text)
                if t not in stopwords and t not in (URL_TOKEN, USER_TOKEN)
                and any(c.isalpha() for c in t)]
        if toks:
            docs.append(toks)
    return docs


@njit(cache=True)
def _sweep(w, d, z, ndk, nkw, nk, u, alpha, beta, vbeta):
    K = nk.shape[0]
    cum = np.empty(K)
    for i in range(w.shape[0]):
        wi, di, k = w[i], d[i], z[i]
        ndk[di, k] -= 1
        nkw[k, wi] -= 1
        nk[k] -= 1
        total = 0.0
        for t in range(K):
            total += (ndk[di, t] + alpha) * (nkw[t, wi] + beta) / (nk[t] + vbeta)
            cum[t] = total
        r = u[i] * total
        k = 0
        while k < K - 1 and cum[k] <= r:
            k += 1
        z[i] = k
        ndk[di, k] += 1
        nkw[k, wi] += 1
        nk[k] += 1


def _log_joint(ndk, nkw, nk, alpha, beta):
    """log p(w, z) with topic-word and doc-topic multinomials integrated out."""
    K, V = nkw.shape
    D = ndk.shape[0]
    lw = K * (gammaln(V * beta) - V * gammaln(beta))
    lw += np.sum(gammaln(nkw + beta)) - np.sum(gammaln(nk + V * beta))
    lz = D * (gammaln(K * alpha) - K * gammaln(alpha))
    lz += np.sum(gammaln(ndk + alpha)) - np.sum(gammaln(ndk.sum(axis=1) + K * alpha))
    return float(lw + lz)


def fit(docs, K: int = 5, alpha: float = 0.1, beta: float = 0.01, iters: int = 500,
        seed: int = 0) -> TopicModel:
    if K < 1:
        raise ValueError("K must be at least 1")
    if not docs:
        raise ValueError("no documents to fit")
    for j, doc in enumerate(docs):
        if not doc:
            raise ValueError(f"document {j} is empty")
    vocab = sorted({tok for doc in docs for tok in doc})
    if not vocab:
        raise ValueError("empty vocabulary")
    index = {t: i for i, t in enumerate(vocab)}
    V, D = len(vocab), len(docs)
    w = np.array([index[t] for doc in docs for t in doc], dtype=np.int64)
    d = np.repeat(np.arange(D, dtype=np.int64), [len(doc) for doc in docs])
    n_tokens = w.size

    rng = np.random.default_rng(seed)
    z = rng.integers(K, size=n_tokens).astype(np.int64)
    ndk = np.zeros((D, K), dtype=np.int64)
    nkw = np.zeros((K, V), dtype=np.int64)
    np.add.at(ndk, (d, z), 1)
    np.add.at(nkw, (z, w), 1)
    nk = nkw.sum(axis=1)

    loglik = []
    for _ in range(iters):
        _sweep(w, d, z, ndk, nkw, nk, rng.random(n_tokens), alpha, beta, V * beta)
        assert nkw.sum() == n_tokens
        loglik.append(_log_joint(ndk, nkw, nk, alpha, beta))

    phi = (nkw + beta) / (nk[:, None] + V * beta)
    theta = (ndk + alpha) / (ndk.sum(axis=1, keepdims=True) + K * alpha)
    return TopicModel(K=K, vocab=vocab, phi=phi, theta=theta, seed=seed, alpha=alpha,
                      beta=beta, iters=iters, loglik=loglik)


def top_words(model: TopicModel, topic: int, n: int = 5) -> list[str]:
    """The ``n`` most probable words of ``topic``; equal probabilities are
    ordered lexicographically."""
    if not 0 <= topic < model.K:
        raise IndexError(f"topic {topic} out of range for K={model.K}")
    if n > len(model.vocab):
        raise ValueError(f"asked for {n} words from a vocabulary of {len(model.vocab)}")
    row = model.phi[topic]
    order = sorted(range(len(model.vocab)), key=lambda i: (-row[i], model.vocab[i]))
    return [model.vocab[i] for i in order[:n]]


def all_top_words(model: TopicModel, n: int = 5) -> list[str]:
    """Concatenated top words of every topic (length K*n), the topic feature order."""
    return [w for k in range(model.K) for w in top_words(model, k, n)]
