#!/usr/bin/env python3
"""Paired lingocl vs muprocl comparison on the two-mode synthetic world.

Runs both methods over a block of shared seeds, then prints per-method
medians for Last and forgetting, plus the paired gap. The default settings
use a sharp scoring temperature (scale=14) where a single bare-prompt target
has to average two visual modes while the multi-prototype bank keeps one
direction per mode; that is the regime where the gap is visible.

Pass --modes 1 for the unimodal control: there the candidate prompts all
collapse onto the bare direction during dedup and both methods train against
byte-identical banks, so the gap vanishes.

Usage:
    python3 scripts/run_polysemy_comparison.py --out /tmp/polysemy
    python3 scripts/run_polysemy_comparison.py --out /tmp/control --modes 1
"""

import argparse
import statistics
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from muprocl.cli import main as cli_main
from muprocl.continual import read_summary_csv

CONFIG = """\
[data]
num_classes = 4
modes_per_class = {modes}
feature_dim = 8
n_in = 16
mode_cosine_cap = 0.05
latent_noise = 0.3
train_per_mode = 20
test_per_mode = 50
prompt_noise = 0.02

[protocol]
methods = lingocl, muprocl
B = 2
C = 2
memory_capacity = 20

[train]
epochs = {epochs}
batch_size = 16
hidden_sizes = 32
learning_rate = 0.05
decay_epochs = 60, 90
scale = 14
"""


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--seeds", type=int, default=5, help="number of paired seeds")
    ap.add_argument("--first-seed", type=int, default=0)
    ap.add_argument("--modes", type=int, default=2, help="visual modes per class")
    ap.add_argument("--epochs", type=int, default=120)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg_path = out / "comparison.cfg"
    cfg_path.write_text(CONFIG.format(modes=args.modes, epochs=args.epochs))

    last = {"lingocl": [], "muprocl": []}
    forg = {"lingocl": [], "muprocl": []}
    for seed in range(args.first_seed, args.first_seed + args.seeds):
        run_dir = out / f"seed{seed}"
        rc = cli_main(["run", str(cfg_path), "--seed", str(seed),
                       "--out", str(run_dir)])
        if rc != 0:
            return rc
        for row in read_summary_csv(run_dir / "summary.csv"):
            method = row["run_id"].rsplit("-seed", 1)[0]
            last[method].append(float(row["last"]))
            forg[method].append(float(row["forgetting"]))

    print()
    print(f"{'method':10s} {'med Last':>9s} {'med F':>9s}   per-seed Last")
    for name in ("lingocl", "muprocl"):
        seeds_str = " ".join(f"{v:.3f}" for v in last[name])
        print(f"{name:10s} {statistics.median(last[name]):9.3f} "
              f"{statistics.median(forg[name]):9.3f}   {seeds_str}")
    gap = statistics.median(last["muprocl"]) - statistics.median(last["lingocl"])
    print(f"\nmedian Last gap (muprocl - lingocl): {gap:+.3f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
