"""Extractive (k-means centroid) then abstractive condensation of a user's tweets."""
from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
import requests

from .behavior import tokenize
from .corpus import derive_seed

log = logging.getLogger(__name__)

OOV_TOKEN = "<unk>"
INPUT_MODES = ("summary", "first_m", "last_m", "random_m")


class ProviderError(RuntimeError):
    pass


@dataclass(frozen=True)
class Summary:
    tokens: tuple
    source_tweet_ids: tuple = ()

    def to_dict(self):
        return {"tokens": list(self.tokens), "source_tweet_ids": list(self.source_tweet_ids)}


class EmbeddingProvider(Protocol):
    dimension: int

    def embed(self, texts: Sequence[str]) -> list: ...


class AbstractiveProvider(Protocol):
    def condense(self, texts: Sequence[str], n_max: int) -> list: ...


# ---------------------------------------------------------------- providers

class HashingEmbedder:
    """Signed feature hashing of tweet tokens; no network, fully reproducible."""

    def __init__(self, dimension: int = 64, seed: int = 0):
        self.dimension = dimension
        self._key = seed.to_bytes(8, "little", signed=False)

    def _slot(self, token):
        h = int.from_bytes(hashlib.blake2b(token.encode(), key=self._key, digest_size=8).digest(),
                           "little")
        return h % self.dimension, 1.0 if (h >> 63) & 1 else -1.0

    def embed(self, texts):
        out = np.zeros((len(texts), self.dimension))
        for i, text in enumerate(texts):
            for tok in tokenize(text):
                j, sign = self._slot(tok)
                out[i, j] += sign
        return out


class ConcatenateAbstractor:
    """Fallback condenser: tokens of the selected tweets in order, cut at ``n_max``."""

    def condense(self, texts, n_max):
        out = []
        for text in texts:
            out.extend(tokenize(text))
            if len(out) >= n_max:
                break
        return out[:n_max]


class _HttpClient:
    def __init__(self, url: str, timeout: float = 10.0, retries: int = 2, backoff: float = 0.5):
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff

    def post(self, payload: dict) -> dict:
        last = None
        for attempt in range(self.retries + 1):
            try:
                resp = requests.post(self.url, json=payload, timeout=self.timeout)
                resp.raise_for_status()
                return resp.json()
            except (requests.RequestException, ValueError) as exc:
                last = exc
                if attempt < self.retries:
                    time.sleep(self.backoff * (2 ** attempt))
        raise ProviderError(f"{self.url}: {last}") from last


class HttpEmbedder(_HttpClient):
    """POST ``{"texts": [...]}`` and expect ``{"vectors": [[...], ...]}``."""

    def __init__(self, url, dimension: int, **kw):
        super().__init__(url, **kw)
        self.dimension = dimension

    def embed(self, texts):
        body = self.post({"texts": list(texts)})
        vectors = body.get("vectors") if isinstance(body, dict) else None
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProviderError(f"{self.url}: expected {len(texts)} vectors in response")
        return np.asarray(vectors, dtype=np.float64)


class HttpAbstractor(_HttpClient):
    """POST ``{"texts": [...]}`` and expect ``{"summary": "..."}``."""

    def condense(self, texts, n_max):
        body = self.post({"texts": list(texts)})
        summary = body.get("summary") if isinstance(body, dict) else None
        if not isinstance(summary, str):
            raise ProviderError(f"{self.url}: response has no 'summary' string")
        return tokenize(summary)[:n_max]


# ---------------------------------------------------------------- k-means

def inertia(points, assignments, centroids) -> float:
    diff = points - centroids[assignments]
    return float(np.sum(diff * diff))


def _sq_dists(points, centroids):
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def kmeans_pp_init(points, k, rng):
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return points[chosen].copy()


def kmeans(points, k: int, seed: int = 0, max_iters: int = 100):
    """Lloyd's algorithm from k-means++ seeds.

    Returns ``(assignments, centroids)``. An emptied cluster keeps its previous
    centroid. Inertia is checked to be non-increasing at every iteration.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points ({n})")
    if not np.all(np.isfinite(points)):
        raise ValueError("points must be finite")
    rng = np.random.default_rng(seed)
    centroids = kmeans_pp_init(points, k, rng)
    assign = _sq_dists(points, centroids).argmin(axis=1)
    prev = inertia(points, assign, centroids)
    for _ in range(max_iters):
        for j in range(k):
            members = points[assign == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
        new_assign = _sq_dists(points, centroids).argmin(axis=1)
        cur = inertia(points, new_assign, centroids)
        assert cur <= prev * (1 + 1e-12) + 1e-12, "k-means inertia increased"
        prev = cur
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    return assign, centroids


# ---------------------------------------------------------------- pipeline

def _embed(provider, texts, ids):
    try:
        vecs = np.asarray(provider.embed(texts), dtype=np.float64)
    except Exception as exc:
        raise ProviderError(
            f"embedding failed for batch of {len(texts)} tweets ({ids[0]} .. {ids[-1]}): {exc}"
        ) from exc
    if vecs.ndim != 2 or vecs.shape[0] != len(texts) or not np.all(np.isfinite(vecs)):
        raise ProviderError(f"embedding provider returned bad shape {vecs.shape} for "
                            f"{len(texts)} tweets ({ids[0]} .. {ids[-1]})")
    return vecs


def extract(tweets, provider, m: int = 20, seed: int = 0, metric: str = "euclidean"):
    """Pick the tweet nearest each of ``m`` k-means centroids; result keeps
    the input's chronological order."""
    tweets = list(tweets)
    if not tweets:
        raise ValueError("no tweets to extract from")
    if m < 1:
        raise ValueError("m must be at least 1")
    if m >= len(tweets):
        return tweets
    vecs = _embed(provider, [t.text for t in tweets], [t.id for t in tweets])
    if metric == "cosine":
        norms = np.linalg.norm(vecs, axis=1, keepdims=True)
        vecs = vecs / np.where(norms > 0, norms, 1.0)
    elif metric != "euclidean":
        raise ValueError(f"unknown metric {metric!r}")
    _, centroids = kmeans(vecs, m, seed=seed)
    nearest = _sq_dists(vecs, centroids).argmin(axis=0)
    return [tweets[i] for i in sorted(set(int(i) for i in nearest))]


def abstractive(selected, provider=None, n_max: int = 100) -> Summary:
    """Condense the selected tweets; falls back to ordered concatenation when
    the provider errors out or returns nothing."""
    selected = list(selected)
    if not selected:
        raise ValueError("no tweets selected")
    texts = [t.text for t in selected]
    fallback = ConcatenateAbstractor()
    tokens = None
    if provider is not None and not isinstance(provider, ConcatenateAbstractor):
        try:
            tokens = list(provider.condense(texts, n_max))
        except Exception as exc:  # provider outage is not fatal
            log.warning("abstractive provider failed (%s); using concatenation fallback", exc)
            tokens = None
        if tokens is not None and len(tokens) > n_max:
            raise ProviderError(f"abstractive provider returned {len(tokens)} > {n_max} tokens")
    if not tokens:
        tokens = fallback.condense(texts, n_max) or [OOV_TOKEN]
    return Summary(tuple(tokens), tuple(t.id for t in selected))


def select_tweets(tweets, mode: str, m: int, seed: int = 0, embedder=None, metric="euclidean"):
    """Tweets fed to the text branch for one input mode."""
    tweets = list(tweets)
    if mode == "summary":
        return extract(tweets, embedder or HashingEmbedder(), m, seed, metric)
    if mode == "first_m":
        return tweets[:m]
    if mode == "last_m":
        return tweets[-m:]
    if mode == "random_m":
        if m >= len(tweets):
            return tweets
        idx = np.random.default_rng(seed).choice(len(tweets), size=m, replace=False)
        return [tweets[i] for i in sorted(idx)]
    raise ValueError(f"unknown input mode {mode!r}; expected one of {INPUT_MODES}")


@dataclass
class Summarizer:
    mode: str = "summary"
    m: int = 20
    n_max: int = 100
    seed: int = 0
    metric: str = "euclidean"
    embedder: object = field(default_factory=HashingEmbedder)
    abstractor: object = field(default_factory=ConcatenateAbstractor)

    def __call__(self, user) -> Summary:
        seed = derive_seed(self.seed, f"select:{self.mode}:{user.user_id}")
        chosen = select_tweets(user.tweets, self.mode, self.m, seed, self.embedder, self.metric)
        return abstractive(chosen, self.abstractor, self.n_max)
