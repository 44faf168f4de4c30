"""Deterministic synthetic corpus with class-distinct vocabularies and
behavior offsets. Used as the end-to-end overfit fixture."""
from __future__ import annotations

from datetime import datetime, timedelta, timezone

import numpy as np

from .corpus import DEPRESSED, NON_DEPRESSED, Tweet, UserRecord, sort_tweets

DEPRESSED_WORDS = [
    "sad", "tired", "alone", "lonely", "hopeless", "empty", "insomnia", "exhausted",
    "worthless", "cry", "crying", "pain", "hurt", "prozac", "sertraline", "numb",
    "guilty", "awake", "drained", "dark",
]
CONTROL_WORDS = [
    "happy", "fun", "game", "team", "sunny", "beach", "party", "friends", "win",
    "excited", "smile", "laugh", "weekend", "great", "love", "joy", "trip", "concert",
    "pizza", "goal",
]
SHARED_WORDS = [
    "today", "coffee", "work", "city", "music", "movie", "phone", "news", "bus",
    "rain", "lunch", "class", "book", "week", "home", "street", "tv", "morning",
    "dinner", "weather", "monday", "email", "traffic", "shop",
]
DEPRESSED_EMOJI = ["\U0001F622", "\U0001F62D", "\U0001F614"]
CONTROL_EMOJI = ["\U0001F600", "\U0001F602", "\U0001F389"]

_START = datetime(2020, 1, 1, tzinfo=timezone.utc)


def _tweet_text(rng, depressed):
    words = DEPRESSED_WORDS if depressed else CONTROL_WORDS
    emoji = DEPRESSED_EMOJI if depressed else CONTROL_EMOJI
    n_class = int(rng.integers(1, 3))
    n_shared = int(rng.integers(3, 6))
    toks = list(rng.choice(words, size=n_class)) + list(rng.choice(SHARED_WORDS, size=n_shared))
    if depressed and rng.random() < 0.5:
        toks.insert(0, "i")
    if rng.random() < 0.3:
        toks.append(str(rng.choice(emoji)))
    rng.shuffle(toks)
    return " ".join(toks)


def make_user(rng, user_id, depressed, n_tweets):
    hours = (rng.integers(0, 5, size=n_tweets) if depressed
             else rng.integers(9, 21, size=n_tweets))
    days = np.sort(rng.integers(0, 120, size=n_tweets))
    tweets = []
    for j in range(n_tweets):
        ts = _START + timedelta(days=int(days[j]), hours=int(hours[j]),
                                minutes=int(rng.integers(60)))
        tweets.append(Tweet(f"{user_id}-t{j:03d}", _tweet_text(rng, depressed), ts,
                            bool(rng.random() < (0.1 if depressed else 0.3))))
    followers = int(rng.integers(20, 300) if depressed else rng.integers(400, 2000))
    friends = int(rng.integers(20, 300) if depressed else rng.integers(300, 1500))
    return UserRecord(user_id, DEPRESSED if depressed else NON_DEPRESSED, followers, friends,
                      sort_tweets(tweets))


def make_separable_users(n_users: int = 40, tweets_per_user: int = 30, seed: int = 2021):
    """``n_users`` users, alternating depressed / non-depressed."""
    rng = np.random.default_rng(seed)
    return [make_user(rng, f"u{i:03d}", i % 2 == 0, tweets_per_user) for i in range(n_users)]
