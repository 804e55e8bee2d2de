"""ATSC fine-tuning accuracy against the fraction of labelled train data.

    python3 scripts/labeled_fraction_curve.py --dataset R14.jsonl --config run.cfg --seeds 1 2 3

Prints one CSV row per (seed, fraction) and a mean row per fraction.
"""

import argparse
import csv
import statistics
import sys

from opinion_miner.config import RunConfig
from opinion_miner.corpus import load_dataset
from opinion_miner.evaluation import FRACTIONS, labeled_fraction_curve


def main_():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dataset", required=True)
    ap.add_argument("--config", required=True)
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    ap.add_argument("--fractions", type=float, nargs="+", default=list(FRACTIONS))
    args = ap.parse_args()
    cfg = RunConfig.from_file(args.config)
    dataset = load_dataset(args.dataset)
    backend = cfg.build_backend()
    out = csv.writer(sys.stdout)
    out.writerow(["seed", "fraction", "n_train", "accuracy"])
    by_fraction = {f: [] for f in args.fractions}
    for seed in args.seeds:
        for r in labeled_fraction_curve(dataset, backend, seed, args.fractions, epochs=cfg.finetune_epochs,
                                        batch_size=cfg.finetune_batch_size,
                                        learning_rate=cfg.finetune_learning_rate):
            by_fraction[r.fraction].append(r.accuracy)
            out.writerow([seed, r.fraction, r.n_train, f"{r.accuracy:.4f}"])
    for f, accs in by_fraction.items():
        out.writerow(["mean", f, "", f"{statistics.fmean(accs):.4f}"])
    return 0


if __name__ == "__main__":
    sys.exit(main_())
