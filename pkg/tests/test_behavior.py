import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depressionnet.behavior import (FP_PLURAL, FP_SINGULAR, SYMPTOM_FILES, BehaviorFeatures,
                                    Lexicons, LexiconError, domain_features,
                                    emotional_features, extract_features, load_lexicons,
                                    load_stopwords, read_word_list, social_features,
                                    tokenize, topic_features)
from depressionnet.corpus import UserRecord, load_timelines, sort_tweets

from .conftest import DATA, tweet, user

GOLDEN_TOPIC_WORDS = ["prozac", "insomnia", "sad", "tired", "sleep"]


# ---------------------------------------------------------------- tokenizer

@pytest.mark.parametrize("text, tokens", [
    ("I love MY dog", ["i", "love", "my", "dog"]),
    ("see http://x.co 😀", ["see", "<url>", "😀"]),
    ("", []),
    ("@Someone can’t sleep!!", ["<user>", "can't", "sleep"]),
    ("www.example.org,fine", ["<url>"]),
    ("tired😢😢", ["tired", "😢", "😢"]),
    ("self-harm", ["self", "harm"]),
    ("👍🏽 ok", ["👍🏽", "ok"]),
])
def test_tokenize_examples(text, tokens):
    assert tokenize(text) == tokens


@settings(max_examples=100, deadline=None)
@given(st.text(max_size=80))
def test_tokenize_is_total_and_lowercase(text):
    for tok in tokenize(text):
        assert tok and not any(c.isspace() for c in tok)
        assert tok == tok.lower()


# ---------------------------------------------------------------- lexicons

def test_bundled_lexicons_load():
    lex = load_lexicons()
    assert len(lex.symptoms) == 9 and all(lex.symptoms)
    assert all(w == w.lower() for w in lex.vad)
    assert "prozac" in lex.antidepressants
    assert "the" in load_stopwords()


def test_missing_symptom_files_listed(tmp_path):
    for name in ("vad.tsv", "emoji.tsv", "antidepressants.txt"):
        (tmp_path / name).write_bytes((DATA / "toy_lexicons" / name).read_bytes())
    (tmp_path / "symptoms").mkdir()
    with pytest.raises(FileNotFoundError) as err:
        load_lexicons(tmp_path)
    for name in SYMPTOM_FILES:
        assert name in str(err.value)


def test_missing_vad_file_named(tmp_path):
    with pytest.raises(FileNotFoundError, match="vad.tsv"):
        load_lexicons(tmp_path)


def test_empty_symptom_list_rejected(tmp_path):
    import shutil
    shutil.copytree(DATA / "toy_lexicons", tmp_path / "lex")
    (tmp_path / "lex" / "symptoms" / SYMPTOM_FILES[4]).write_text("# nothing here\n")
    with pytest.raises(LexiconError, match=SYMPTOM_FILES[4]):
        load_lexicons(tmp_path / "lex")


def test_phrases_longer_than_two_words_rejected(tmp_path):
    (tmp_path / "l.txt").write_text("cannot fall asleep\n")
    with pytest.raises(LexiconError):
        read_word_list(tmp_path / "l.txt")


def test_toy_lexicon_contents(toy_lexicons):
    assert toy_lexicons.vad == {"happy": (8.0, 5.0, 6.0), "sad": (2.0, 4.0, 3.0),
                                "tired": (3.5, 2.0, 3.0)}
    assert toy_lexicons.emoji_polarity == {"😀": "pos", "😐": "neu", "😢": "neg"}
    assert toy_lexicons.symptoms[3] == {"insomnia", "can't-sleep"}


def test_pronoun_lists():
    assert FP_SINGULAR == ("i", "me", "my", "mine", "myself")
    assert FP_PLURAL == ("we", "us", "our", "ours", "ourselves")


# ---------------------------------------------------------------- social

def test_posting_hist():
    u = user("a", ["x y", "x", "x"], hours=[1, 1, 23])
    u = replace(u, tweets=sort_tweets([replace(t, created_at=t.created_at.replace(minute=m))
                                       for t, m in zip(u.tweets, [0, 30, 0])]))
    s = social_features(u)
    assert s.posting_time_hist[1] == 2 and s.posting_time_hist[23] == 1
    assert sum(s.posting_time_hist) == s.n_tweets == 3


def test_all_retweets_and_mean_length():
    tweets = (tweet(0, "a b c d", retweet=True), tweet(1, "a b c d e f", retweet=True))
    s = social_features(UserRecord("r", None, 1, 2, tweets))
    assert s.n_retweets == s.n_tweets == 2
    assert s.mean_tweet_len == 5.0


def test_no_tweets_rejected():
    with pytest.raises(ValueError):
        social_features(UserRecord("e", None, 0, 0, ()))


# ---------------------------------------------------------------- emotional / domain / topic

def test_vad_is_additive_per_token():
    lex = Lexicons(vad={"happy": (8.0, 5.0, 6.0)})
    assert emotional_features(user("h", ["happy happy"]), lex).vad_sum == [16.0, 10.0, 12.0]


def test_pronoun_and_emoji_tallies(toy_lexicons):
    e = emotional_features(user("p", ["I love my dog", "😀 then 😐"]), toy_lexicons)
    assert (e.fp_singular, e.fp_plural) == (2, 0)
    assert e.emoji_counts == [1, 1, 0]


def test_emoji_with_variation_selector(toy_lexicons):
    e = emotional_features(user("v", ["\U0001F600\uFE0F"]), toy_lexicons)
    assert e.emoji_counts == [1, 0, 0]


def test_symptom_counts():
    lex = Lexicons(symptoms=[frozenset({"insomnia"})] + [frozenset({"zzz"})] * 8,
                   antidepressants=frozenset({"prozac"}))
    d = domain_features(user("s", ["insomnia again insomnia", "prozac", "prozac prozac"]), lex)
    assert d.symptom_counts[0] == 2 and len(d.symptom_counts) == 9
    assert d.antidepressant_count == 3
    assert domain_features(user("z", ["nothing here"]), lex).symptom_counts == [0] * 9


def test_bigram_phrases_match(toy_lexicons):
    d = domain_features(user("b", ["I can't sleep", "can't really sleep"]), toy_lexicons)
    assert d.symptom_counts[3] == 1


def test_topic_counts():
    u = user("t", ["sad day", "so sad"])
    assert topic_features(u, ["sad"]).word_counts == [2]
    assert topic_features(u, ["happy", "fun"]).word_counts == [0, 0]
    assert topic_features(u, ["sad", "day", "sad"]).word_counts == [2, 1, 2]
    with pytest.raises(ValueError):
        topic_features(u, [])


def test_golden_features_by_hand(toy_lexicons):
    """Every count below is worked out by hand from golden_user.jsonl."""
    (u,) = load_timelines(DATA / "golden_user.jsonl")
    f = extract_features(u, toy_lexicons, ["sad", "insomnia", "prozac", "tired", "sad"])
    hist = [0] * 24
    hist[1], hist[13], hist[23] = 2, 1, 2
    assert f.social.posting_time_hist == hist
    assert (f.social.n_tweets, f.social.n_retweets, f.social.mean_tweet_len) == (5, 1, 7.8)
    assert f.emotional.vad_sum == [13.5, 11.0, 12.0]
    assert f.emotional.emoji_counts == [1, 1, 1]
    assert (f.emotional.fp_singular, f.emotional.fp_plural) == (3, 2)
    assert f.domain.symptom_counts == [1, 0, 0, 3, 0, 1, 1, 0, 2]
    assert f.domain.antidepressant_count == 3
    assert f.topic.word_counts == [1, 2, 3, 1, 1]


def golden_record(lex):
    (u,) = load_timelines(DATA / "golden_user.jsonl")
    rec = {"user_id": u.user_id, "label": 1}
    rec.update(extract_features(u, lex, GOLDEN_TOPIC_WORDS).to_dict())
    return json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n"


def test_golden_file_byte_for_byte(toy_lexicons):
    assert golden_record(toy_lexicons) == (DATA / "golden_features.jsonl").read_text("utf-8")


def test_features_dict_round_trip(toy_lexicons):
    (u,) = load_timelines(DATA / "golden_user.jsonl")
    f = extract_features(u, toy_lexicons, GOLDEN_TOPIC_WORDS)
    g = BehaviorFeatures.from_dict(f.to_dict())
    for a, b in zip(f.arrays(), g.arrays()):
        np.testing.assert_array_equal(a, b)
    assert [len(a) for a in f.arrays()] == [29, 8, 10, 5]


# ---------------------------------------------------------------- properties

words = st.sampled_from(["i", "we", "sad", "happy", "tired", "insomnia", "prozac", "can't",
                         "sleep", "self-harm", "dog", "😀", "😢", "😐", "http://a.b"])
tweet_texts = st.lists(st.lists(words, min_size=1, max_size=8).map(" ".join),
                       min_size=1, max_size=8)


TOY = load_lexicons(DATA / "toy_lexicons")


def _features(u, lex=TOY):
    return extract_features(u, lex, ["sad", "sleep", "dog", "sad"])


@settings(max_examples=60, deadline=None)
@given(tweet_texts, st.randoms(use_true_random=False))
def test_features_invariant_to_tweet_order(texts, rnd):
    u = user("p", texts, hours=[(3 * i) % 24 for i in range(len(texts))])
    shuffled = list(u.tweets)
    rnd.shuffle(shuffled)
    v = replace(u, tweets=tuple(shuffled))
    for a, b in zip(_features(u).arrays(), _features(v).arrays()):
        np.testing.assert_array_equal(a, b)


@settings(max_examples=60, deadline=None)
@given(tweet_texts, tweet_texts)
def test_count_features_are_additive(texts_a, texts_b):
    a = user("a", texts_a, hours=[i % 24 for i in range(len(texts_a))])
    b = user("b", texts_b, hours=[(5 + i) % 24 for i in range(len(texts_b))])
    both = replace(a, tweets=sort_tweets(a.tweets + tuple(replace(t, id="b" + t.id) for t in b.tweets)))
    fa, fb, fab = (_features(x) for x in (a, b, both))
    assert fab.social.posting_time_hist == [x + y for x, y in zip(fa.social.posting_time_hist,
                                                                   fb.social.posting_time_hist)]
    assert fab.social.n_tweets == fa.social.n_tweets + fb.social.n_tweets
    assert fab.social.n_retweets == fa.social.n_retweets + fb.social.n_retweets
    np.testing.assert_allclose(fab.emotional.vad_sum,
                               np.add(fa.emotional.vad_sum, fb.emotional.vad_sum), rtol=1e-12)
    for name in ("emotional", "domain", "topic"):
        x, y, xy = (getattr(f, name).to_array() for f in (fa, fb, fab))
        if name == "emotional":
            x, y, xy = x[3:], y[3:], xy[3:]
        np.testing.assert_array_equal(xy, x + y)


@settings(max_examples=60, deadline=None)
@given(tweet_texts)
def test_features_non_negative_and_empty_vad(texts):
    u = user("n", texts)
    for arr in _features(u).arrays():
        assert np.all(arr >= 0)
    assert emotional_features(u, Lexicons()).vad_sum == [0.0, 0.0, 0.0]
