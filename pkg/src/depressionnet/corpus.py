"""User timeline ingestion, dataset filters and deterministic partitions."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

DEPRESSED = "depressed"
NON_DEPRESSED = "non_depressed"
_LABEL_FROM_JSON = {1: DEPRESSED, 0: NON_DEPRESSED, None: None}
_LABEL_TO_JSON = {DEPRESSED: 1, NON_DEPRESSED: 0, None: None}


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Tweet:
    id: str
    text: str
    created_at: datetime
    is_retweet: bool = False

    def __post_init__(self):
        if not self.text.strip():
            raise CorpusError(f"tweet {self.id}: empty text")


@dataclass(frozen=True)
class UserRecord:
    user_id: str
    label: Optional[str]
    followers_count: int
    friends_count: int
    tweets: tuple = ()

    @property
    def is_depressed(self) -> bool:
        return self.label == DEPRESSED


@dataclass(frozen=True)
class FoldPlan:
    seed: int
    folds: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "folds": [list(f) for f in self.folds]})

    @classmethod
    def from_json(cls, text: str) -> "FoldPlan":
        obj = json.loads(text)
        return cls(seed=obj["seed"], folds=[list(f) for f in obj["folds"]])


def derive_seed(root: int, purpose: str) -> int:
    """Stable 63-bit seed from a root seed and a purpose string."""
    digest = hashlib.sha256(f"{root}:{purpose}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def parse_timestamp(value: str) -> datetime:
    if not isinstance(value, str):
        raise CorpusError(f"created_at must be an ISO-8601 string, got {value!r}")
    text = value.strip()
    if text.endswith("Z") or text.endswith("z"):
        text = text[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(text)
    except ValueError as exc:
        raise CorpusError(f"unparseable created_at {value!r}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).replace(microsecond=0)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def sort_tweets(tweets: Iterable[Tweet]) -> tuple:
    # ties on created_at fall back to the tweet id
    return tuple(sorted(tweets, key=lambda t: (t.created_at, t.id)))


def _require(obj, key, kind, lineno):
    if key not in obj:
        raise CorpusError(f"line {lineno}: missing required field {key!r}")
    value = obj[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise CorpusError(f"line {lineno}: field {key!r} must be an integer")
    if kind is str and not isinstance(value, str):
        raise CorpusError(f"line {lineno}: field {key!r} must be a string")
    if kind is list and not isinstance(value, list):
        raise CorpusError(f"line {lineno}: field {key!r} must be a list")
    return value


def user_from_dict(obj: dict, lineno: int = 0) -> UserRecord:
    if not isinstance(obj, dict):
        raise CorpusError(f"line {lineno}: expected a JSON object")
    user_id = _require(obj, "user_id", str, lineno)
    if "label" not in obj:
        raise CorpusError(f"line {lineno}: missing required field 'label'")
    if obj["label"] not in _LABEL_FROM_JSON or isinstance(obj["label"], bool):
        raise CorpusError(f"line {lineno}: label must be 0, 1 or null")
    followers = _require(obj, "followers_count", int, lineno)
    friends = _require(obj, "friends_count", int, lineno)
    if followers < 0 or friends < 0:
        raise CorpusError(f"line {lineno}: negative profile count")
    tweets = []
    for j, tw in enumerate(_require(obj, "tweets", list, lineno)):
        if not isinstance(tw, dict):
            raise CorpusError(f"line {lineno}: tweet {j} is not an object")
        tid = _require(tw, "id", str, lineno)
        text = _require(tw, "text", str, lineno)
        is_rt = tw.get("is_retweet", False)
        if not isinstance(is_rt, bool):
            raise CorpusError(f"line {lineno}: tweet {tid}: is_retweet must be boolean")
        try:
            tweets.append(Tweet(tid, text, parse_timestamp(_require(tw, "created_at", str, lineno)), is_rt))
        except CorpusError as exc:
            raise CorpusError(f"line {lineno}: {exc}") from None
    return UserRecord(user_id, _LABEL_FROM_JSON[obj["label"]], followers, friends, sort_tweets(tweets))


def user_to_dict(user: UserRecord) -> dict:
    return {
        "user_id": user.user_id,
        "label": _LABEL_TO_JSON[user.label],
        "followers_count": user.followers_count,
        "friends_count": user.friends_count,
        "tweets": [
            {"id": t.id, "text": t.text, "created_at": format_timestamp(t.created_at),
             "is_retweet": t.is_retweet}
            for t in user.tweets
        ],
    }


def load_timelines(path) -> list[UserRecord]:
    """Read a JSON Lines corpus, one user per line. Blank lines are skipped."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such corpus file: {path}")
    users, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: malformed JSON ({exc.msg})") from None
            user = user_from_dict(obj, lineno)
            if user.user_id in seen:
                raise CorpusError(f"line {lineno}: duplicate user_id {user.user_id!r}")
            seen.add(user.user_id)
            users.append(user)
    return users


def write_timelines(users: Iterable[UserRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for u in users:
            fh.write(json.dumps(user_to_dict(u), ensure_ascii=False) + "\n")


def is_english(user: UserRecord, threshold: float = 0.6) -> bool:
    """Heuristic language check: share of ASCII letters among all letters.

    Replaceable; pass any ``UserRecord -> bool`` to :func:`filter_users`.
    """
    letters = ascii_letters = 0
    for t in user.tweets:
        for ch in t.text:
            if ch.isalpha():
                letters += 1
                ascii_letters += ch.isascii()
    return letters > 0 and ascii_letters / letters >= threshold


def filter_users(users, min_posts: int = 10, max_followers: int = 5000,
                 language_predicate: Optional[Callable[[UserRecord], bool]] = None):
    """Keep users with at least ``min_posts`` tweets and at most
    ``max_followers`` followers (both bounds inclusive)."""
    return [
        u for u in users
        if len(u.tweets) >= min_posts and u.followers_count <= max_followers
        and (language_predicate is None or language_predicate(u))
    ]


def _permutation(n, seed):
    return np.random.default_rng(seed).permutation(n)


def split(users, train_fraction: float = 0.8, seed: int = 0):
    """Seeded shuffle split. |train| = round(train_fraction * N), half up,
    kept within [1, N-1] so neither side is empty."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    users = list(users)
    if len(users) < 2:
        raise ValueError(f"need at least 2 users to split, got {len(users)}")
    n_train = min(max(math.floor(train_fraction * len(users) + 0.5), 1), len(users) - 1)
    order = _permutation(len(users), seed)
    train_idx = sorted(order[:n_train])
    test_idx = sorted(order[n_train:])
    return [users[i] for i in train_idx], [users[i] for i in test_idx]


def kfold(users, k: int = 5, seed: int = 0) -> FoldPlan:
    """Seeded k-way partition; the first N mod k folds get one extra user."""
    if k < 2:
        raise ValueError("k must be at least 2")
    users = list(users)
    if len(users) < k:
        raise ValueError(f"cannot make {k} folds from {len(users)} users")
    order = _permutation(len(users), seed)
    base, extra = divmod(len(users), k)
    folds, pos = [], 0
    for i in range(k):
        size = base + (i < extra)
        folds.append([users[j].user_id for j in order[pos:pos + size]])
        pos += size
    return FoldPlan(seed=seed, folds=folds)


def fold_users(users, plan: FoldPlan, fold: int):
    """(train, held_out) user lists for one fold, both in input order."""
    held = set(plan.folds[fold])
    return [u for u in users if u.user_id not in held], [u for u in users if u.user_id in held]
