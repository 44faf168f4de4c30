"""Independent reference computations shared by unit and acceptance tests."""
import itertools

import numpy as np

from depressionnet.topicmodel import top_words

PLANT_A = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel"]
PLANT_B = ["india", "juliet", "kilo", "lima", "mike", "november", "oscar", "papa"]


def brute_force_two_means(points):
    """Exhaustive optimum over every split of the points into two non-empty groups."""
    n = len(points)
    best = np.inf
    for mask in itertools.product([0, 1], repeat=n - 1):
        labels = np.array((0,) + mask)  # point 0 fixed in group 0 removes mirror duplicates
        if labels.sum() == 0:
            continue
        cost = 0.0
        for g in (0, 1):
            grp = points[labels == g]
            cost += ((grp - grp.mean(axis=0)) ** 2).sum()
        best = min(best, cost)
    return best


def two_blobs(rng, n=None, dim=2):
    n = n or int(rng.integers(4, 9))
    n_a = int(rng.integers(1, n))
    a = rng.normal(0.0, 1.0, size=(n_a, dim))
    b = rng.normal(0.0, 1.0, size=(n - n_a, dim)) + rng.choice([-1, 1], size=dim) * 12.0
    return rng.permutation(np.vstack([a, b]))


def planted_corpus(seed, n_per_topic=50, doc_len=12):
    """Disjoint vocabularies A and B; the planted assignment is the oracle."""
    rng = np.random.default_rng(seed)
    docs = [list(rng.choice(PLANT_A, doc_len)) for _ in range(n_per_topic)]
    docs += [list(rng.choice(PLANT_B, doc_len)) for _ in range(n_per_topic)]
    order = rng.permutation(len(docs))
    return [docs[i] for i in order]


def recovers_planted(model, n=5):
    tops = [set(top_words(model, k, n)) for k in range(model.K)]
    return sorted(t <= set(PLANT_A) for t in tops) == [False, True] and \
        all(t <= set(PLANT_A) or t <= set(PLANT_B) for t in tops)
