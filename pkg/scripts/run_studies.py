"""Input-mode and ablation comparison tables on one 80/20 split."""
import argparse
from pathlib import Path

from depressionnet.corpus import load_timelines
from depressionnet.harness import RunConfig, ablation_study, input_mode_study, study_table
from depressionnet.synthetic import make_separable_users


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--corpus", default=None, help="JSONL timelines; synthetic if omitted")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=None)
    a = p.parse_args()
    users = load_timelines(a.corpus) if a.corpus else make_separable_users()
    config = RunConfig(epochs=a.epochs, seed=a.seed)
    for name, study in (("input_modes", input_mode_study), ("ablations", ablation_study)):
        table = study_table(study(config, users))
        print(f"## {name}\n{table}")
        if a.out_dir:
            Path(a.out_dir).mkdir(parents=True, exist_ok=True)
            (Path(a.out_dir) / f"{name}.csv").write_text(table)


if __name__ == "__main__":
    main()
