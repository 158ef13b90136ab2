#!/usr/bin/env python3
"""Sweep the per-class prototype budget K_max on the two-mode world.

Each distinct K value runs muprocl over the same seed block, then the script
prints median Last per K. With two visual modes per class the useful budget
is three prototypes (bare prompt plus one per mode); selection stops adding
rows once coverage gain falls under the threshold, so K=4/8/16 usually pick
identical banks and land on identical numbers.

Usage:
    python3 scripts/run_kmax_sweep.py --out /tmp/kmax
    python3 scripts/run_kmax_sweep.py --out /tmp/kmax --values 1,2,4 --seeds 3
"""

import argparse
import statistics
import sys
from collections import defaultdict
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from muprocl.cli import main as cli_main
from muprocl.continual import read_summary_csv

CONFIG = """\
[data]
num_classes = 4
modes_per_class = 2
feature_dim = 8
n_in = 16
mode_cosine_cap = 0.05
latent_noise = 0.3
train_per_mode = 20
test_per_mode = 50
prompt_noise = 0.02

[protocol]
methods = muprocl
B = 2
C = 2
memory_capacity = 20

[train]
epochs = 120
batch_size = 16
hidden_sizes = 32
learning_rate = 0.02
decay_epochs = 60, 90
scale = 30

[sweep]
sweep_param = k_max
sweep_values = {values}
n_seeds = {seeds}
"""


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--values", default="1,2,4,8,16",
                    help="comma-separated K_max values")
    ap.add_argument("--seeds", type=int, default=5, help="seeds per value")
    ap.add_argument("--seed", type=int, default=0, help="first seed")
    ap.add_argument("--jobs", type=int, default=1, help="parallel workers")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg_path = out / "kmax.cfg"
    cfg_path.write_text(CONFIG.format(values=args.values, seeds=args.seeds))

    rc = cli_main(["sweep", str(cfg_path), "--seed", str(args.seed),
                   "--out", str(out), "--jobs", str(args.jobs)])
    if rc != 0:
        return rc

    by_k = defaultdict(list)
    for row in read_summary_csv(out / "summary.csv"):
        label = row["run_id"].split("-", 1)[0]   # "k_max4" from "k_max4-muprocl-seed0"
        by_k[int(label.removeprefix("k_max"))].append(float(row["last"]))
    print()
    print(f"{'K_max':>6s} {'med Last':>9s}   per-seed Last")
    for k in sorted(by_k):
        seeds_str = " ".join(f"{v:.3f}" for v in by_k[k])
        print(f"{k:6d} {statistics.median(by_k[k]):9.3f}   {seeds_str}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
