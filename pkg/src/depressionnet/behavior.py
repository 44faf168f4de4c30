"""Tokenization, lexicon loading and the four per-user behavior vectors
(social, emotional, domain-specific, topic)."""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .corpus import UserRecord

FP_SINGULAR = ("i", "me", "my", "mine", "myself")
FP_PLURAL = ("we", "us", "our", "ours", "ourselves")

SYMPTOM_FILES = (
    "01_depressed_mood.txt",
    "02_loss_of_interest.txt",
    "03_appetite_weight.txt",
    "04_sleep.txt",
    "05_psychomotor.txt",
    "06_fatigue.txt",
    "07_worthlessness_guilt.txt",
    "08_concentration.txt",
    "09_suicidal_thoughts.txt",
)
POLARITIES = ("pos", "neu", "neg")

URL_TOKEN = "<url>"
USER_TOKEN = "<user>"

_EMOJI_BASE = (
    "\U0001F1E6-\U0001F1FF\U0001F300-\U0001F64F\U0001F680-\U0001F6FF"
    "\U0001F700-\U0001FAFF\u2600-\u27BF\u2B50\u2B55"
)
_EMOJI_MOD = "\uFE0F\U0001F3FB-\U0001F3FF"
_EMOJI = f"[{_EMOJI_BASE}][{_EMOJI_MOD}]*(?:\u200D[{_EMOJI_BASE}][{_EMOJI_MOD}]*)*"
_TOKEN_RE = re.compile(
    rf"(?P<url>(?:https?://|www\.)\S+)"
    rf"|(?P<user>@\w+)"
    rf"|(?P<emoji>{_EMOJI})"
    rf"|(?P<word>\w+(?:['\u2019]\w+)*)",
    re.IGNORECASE,
)


class LexiconError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens; URLs and @mentions become ``<url>``/``<user>``,
    emoji sequences stay whole, punctuation is dropped."""
    out = []
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        if kind == "url":
            out.append(URL_TOKEN)
        elif kind == "user":
            out.append(USER_TOKEN)
        elif kind == "emoji":
            out.append(m.group())
        else:
            out.append(m.group().lower().replace("\u2019", "'"))
    return out


def is_emoji(token: str) -> bool:
    return bool(token) and re.fullmatch(_EMOJI, token) is not None


def user_tokens(user: UserRecord) -> list[list[str]]:
    return [tokenize(t.text) for t in user.tweets]


# ---------------------------------------------------------------- lexicons

def _phrase_key(phrase: str, source) -> str:
    toks = [t for t in tokenize(phrase)]
    if not toks:
        raise LexiconError(f"{source}: entry {phrase!r} has no tokens")
    if len(toks) > 2:
        raise LexiconError(f"{source}: entry {phrase!r} longer than two words is not supported")
    return "-".join(toks)


def _emoji_key(code: str, source) -> str:
    parts = [p for p in re.split(r"[\s,\-_]+", code.strip()) if p]
    try:
        return "".join(chr(int(p.upper().removeprefix("U+"), 16)) for p in parts)
    except ValueError:
        raise LexiconError(f"{source}: bad codepoint sequence {code!r}") from None


@dataclass
class Lexicons:
    vad: dict = field(default_factory=dict)
    emoji_polarity: dict = field(default_factory=dict)
    symptoms: list = field(default_factory=list)
    antidepressants: frozenset = frozenset()
    fp_singular: frozenset = frozenset(FP_SINGULAR)
    fp_plural: frozenset = frozenset(FP_PLURAL)

    def emoji_class(self, token: str):
        pol = self.emoji_polarity.get(token)
        if pol is None:
            pol = self.emoji_polarity.get(token.replace("\uFE0F", ""))
        return pol


def _read_lines(path: Path):
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if line and not line.startswith("#"):
            yield lineno, line


def read_vad(path) -> dict:
    path = Path(path)
    vad = {}
    for i, (lineno, line) in enumerate(_read_lines(path)):
        cols = line.split("\t")
        if len(cols) != 4:
            raise LexiconError(f"{path}:{lineno}: expected word<TAB>v<TAB>a<TAB>d")
        try:
            vad[cols[0].strip().lower()] = tuple(float(c) for c in cols[1:])
        except ValueError:
            if i == 0:
                continue  # header row
            raise LexiconError(f"{path}:{lineno}: non-numeric VAD score") from None
    return vad


def read_emoji(path) -> dict:
    path = Path(path)
    table = {}
    for lineno, line in _read_lines(path):
        cols = line.split("\t")
        if len(cols) != 2 or cols[1].strip() not in POLARITIES:
            raise LexiconError(f"{path}:{lineno}: expected codepoints<TAB>pos|neu|neg")
        table[_emoji_key(cols[0], f"{path}:{lineno}")] = cols[1].strip()
    return table


def read_word_list(path) -> frozenset:
    path = Path(path)
    return frozenset(_phrase_key(line, f"{path}:{n}") for n, line in _read_lines(path))


def load_lexicons(directory=None) -> Lexicons:
    """Load ``vad.tsv``, ``emoji.tsv``, ``antidepressants.txt`` and the nine
    ``symptoms/*.txt`` lists from ``directory`` (default: bundled assets)."""
    if directory is None:
        directory = resources.files("depressionnet") / "assets" / "lexicons"
    directory = Path(str(directory))
    if not directory.is_dir():
        raise FileNotFoundError(f"lexicon directory not found: {directory}")
    for name in ("vad.tsv", "emoji.tsv", "antidepressants.txt"):
        if not (directory / name).is_file():
            raise FileNotFoundError(f"missing lexicon file: {directory / name}")
    missing = [n for n in SYMPTOM_FILES if not (directory / "symptoms" / n).is_file()]
    if missing:
        raise FileNotFoundError(
            f"missing symptom lexicon files in {directory / 'symptoms'}: expected all of "
            + ", ".join(SYMPTOM_FILES) + "; missing " + ", ".join(missing))
    symptoms = [read_word_list(directory / "symptoms" / n) for n in SYMPTOM_FILES]
    for name, words in zip(SYMPTOM_FILES, symptoms):
        if not words:
            raise LexiconError(f"symptom list {name} is empty")
    return Lexicons(
        vad=read_vad(directory / "vad.tsv"),
        emoji_polarity=read_emoji(directory / "emoji.tsv"),
        symptoms=symptoms,
        antidepressants=read_word_list(directory / "antidepressants.txt"),
    )


def load_stopwords(path=None) -> frozenset:
    if path is None:
        path = resources.files("depressionnet") / "assets" / "stopwords.txt"
    return frozenset(line for _, line in _read_lines(Path(str(path))))


# ---------------------------------------------------------------- features

@dataclass
class SocialVector:
    posting_time_hist: list
    followers: int
    friends: int
    n_tweets: int
    n_retweets: int
    mean_tweet_len: float

    def to_array(self):
        return np.array(list(self.posting_time_hist) + [
            self.followers, self.friends, self.n_tweets, self.n_retweets, self.mean_tweet_len],
            dtype=np.float64)


@dataclass
class EmotionVector:
    vad_sum: list
    emoji_counts: list
    fp_singular: int
    fp_plural: int

    def to_array(self):
        return np.array(list(self.vad_sum) + list(self.emoji_counts)
                        + [self.fp_singular, self.fp_plural], dtype=np.float64)


@dataclass
class DomainVector:
    symptom_counts: list
    antidepressant_count: int

    def to_array(self):
        return np.array(list(self.symptom_counts) + [self.antidepressant_count], dtype=np.float64)


@dataclass
class TopicVector:
    word_counts: list

    def to_array(self):
        return np.array(self.word_counts, dtype=np.float64)


MODALITIES = ("social", "emotional", "domain", "topic")


@dataclass
class BehaviorFeatures:
    social: SocialVector
    emotional: EmotionVector
    domain: DomainVector
    topic: TopicVector

    def arrays(self) -> list:
        return [self.social.to_array(), self.emotional.to_array(),
                self.domain.to_array(), self.topic.to_array()]

    def to_dict(self) -> dict:
        return {
            "social": {
                "posting_time_hist": list(self.social.posting_time_hist),
                "followers": self.social.followers,
                "friends": self.social.friends,
                "n_tweets": self.social.n_tweets,
                "n_retweets": self.social.n_retweets,
                "mean_tweet_len": self.social.mean_tweet_len,
            },
            "emotional": {
                "vad_sum": list(self.emotional.vad_sum),
                "emoji_counts": list(self.emotional.emoji_counts),
                "fp_singular": self.emotional.fp_singular,
                "fp_plural": self.emotional.fp_plural,
            },
            "domain": {
                "symptom_counts": list(self.domain.symptom_counts),
                "antidepressant_count": self.domain.antidepressant_count,
            },
            "topic": {"word_counts": list(self.topic.word_counts)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BehaviorFeatures":
        return cls(SocialVector(**d["social"]), EmotionVector(**d["emotional"]),
                   DomainVector(**d["domain"]), TopicVector(**d["topic"]))


def social_features(user: UserRecord) -> SocialVector:
    if not user.tweets:
        raise ValueError(f"user {user.user_id} has no tweets")
    hist = [0] * 24
    lengths = []
    for t in user.tweets:
        hist[t.created_at.hour] += 1
        lengths.append(len(tokenize(t.text)))
    return SocialVector(
        posting_time_hist=hist,
        followers=user.followers_count,
        friends=user.friends_count,
        n_tweets=len(user.tweets),
        n_retweets=sum(t.is_retweet for t in user.tweets),
        mean_tweet_len=sum(lengths) / len(lengths),
    )


def _count_matches(tokens, phrases) -> int:
    n = sum(tok in phrases for tok in tokens)
    n += sum(f"{a}-{b}" in phrases for a, b in zip(tokens, tokens[1:]))
    return n


def emotional_features(user: UserRecord, lex: Lexicons) -> EmotionVector:
    vad = [0.0, 0.0, 0.0]
    emoji = dict.fromkeys(POLARITIES, 0)
    sing = plur = 0
    for toks in user_tokens(user):
        tweet_vad = [0.0, 0.0, 0.0]
        for tok in toks:
            scores = lex.vad.get(tok)
            if scores is not None:
                for i in range(3):
                    tweet_vad[i] += scores[i]
            elif is_emoji(tok):
                pol = lex.emoji_class(tok)
                if pol is not None:
                    emoji[pol] += 1
            sing += tok in lex.fp_singular
            plur += tok in lex.fp_plural
        for i in range(3):
            vad[i] += tweet_vad[i]
    return EmotionVector(vad, [emoji[p] for p in POLARITIES], sing, plur)


def domain_features(user: UserRecord, lex: Lexicons) -> DomainVector:
    counts = [0] * len(lex.symptoms)
    anti = 0
    for toks in user_tokens(user):
        for j, words in enumerate(lex.symptoms):
            counts[j] += _count_matches(toks, words)
        anti += _count_matches(toks, lex.antidepressants)
    return DomainVector(counts, anti)


def topic_features(user: UserRecord, topic_words) -> TopicVector:
    if not topic_words:
        raise ValueError("topic_words is empty")
    counts = Counter(tok for toks in user_tokens(user) for tok in toks)
    return TopicVector([counts[w] for w in topic_words])


def extract_features(user: UserRecord, lex: Lexicons, topic_words) -> BehaviorFeatures:
    return BehaviorFeatures(
        social_features(user),
        emotional_features(user, lex),
        domain_features(user, lex),
        topic_features(user, topic_words),
    )
