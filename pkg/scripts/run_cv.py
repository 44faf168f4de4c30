"""k-fold cross-validation on a timeline corpus (synthetic by default)."""
import argparse
import time

from depressionnet.corpus import load_timelines
from depressionnet.harness import RunConfig, cross_validate
from depressionnet.synthetic import make_separable_users


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--corpus", default=None, help="JSONL timelines; synthetic if omitted")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None)
    a = p.parse_args()
    users = load_timelines(a.corpus) if a.corpus else make_separable_users()
    start = time.perf_counter()
    result = cross_validate(RunConfig(epochs=a.epochs, seed=a.seed), users, a.k, a.jobs)
    text = result.to_csv()
    print(text, end="")
    print(f"# {len(users)} users, {a.k} folds, {time.perf_counter() - start:.1f}s")
    if a.out:
        with open(a.out, "w") as f:
            f.write(text)


if __name__ == "__main__":
    main()
