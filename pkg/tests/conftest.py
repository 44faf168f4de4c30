import json
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

from depressionnet.corpus import DEPRESSED, NON_DEPRESSED, Tweet, UserRecord, sort_tweets
from depressionnet.synthetic import make_separable_users

DATA = Path(__file__).parent / "data"
T0 = datetime(2021, 3, 1, tzinfo=timezone.utc)


def tweet(i, text, hour=12, minute=0, retweet=False, day=0, uid="u"):
    ts = T0 + timedelta(days=day, hours=hour, minutes=minute)
    return Tweet(f"{uid}-{i:03d}", text, ts, retweet)


def user(uid, texts, label=DEPRESSED, followers=100, friends=50, hours=None):
    hours = hours or [12] * len(texts)
    tweets = [tweet(i, t, hour=h, uid=uid) for i, (t, h) in enumerate(zip(texts, hours))]
    return UserRecord(uid, label, followers, friends, sort_tweets(tweets))


def raw_user(uid, n_tweets=12, followers=100, label=1, text="hello there world"):
    return {
        "user_id": uid, "label": label, "followers_count": followers, "friends_count": 3,
        "tweets": [{"id": f"{uid}-{i}", "text": f"{text} {i}",
                    "created_at": f"2021-01-{1 + i % 28:02d}T10:00:00Z", "is_retweet": False}
                   for i in range(n_tweets)],
    }


def write_jsonl(path, objs):
    Path(path).write_text("".join(json.dumps(o) + "\n" for o in objs))
    return path


@pytest.fixture
def toy_lexicons():
    from depressionnet.behavior import load_lexicons
    return load_lexicons(DATA / "toy_lexicons")


@pytest.fixture(scope="session")
def synthetic_users():
    return make_separable_users()


__all__ = ["DEPRESSED", "NON_DEPRESSED", "DATA", "tweet", "user", "raw_user", "write_jsonl"]


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
