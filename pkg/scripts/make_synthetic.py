"""Write the deterministic synthetic corpus as timeline JSONL."""
import argparse

from depressionnet.corpus import write_timelines
from depressionnet.synthetic import make_separable_users


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("out")
    p.add_argument("--users", type=int, default=40)
    p.add_argument("--tweets", type=int, default=30)
    p.add_argument("--seed", type=int, default=2021)
    a = p.parse_args()
    users = make_separable_users(a.users, a.tweets, a.seed)
    write_timelines(users, a.out)
    print(f"wrote {len(users)} users to {a.out}")


if __name__ == "__main__":
    main()
