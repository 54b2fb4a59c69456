"""Minority-class F2 of CE against the imbalance-aware losses.

Trains the tiny model on ambiguous-minority synthetic data for a few seeds
(roughly 10 s per run).

Run: python demos/loss_comparison.py [n_seeds]
"""

import sys

import numpy as np

from battag.config import trend_experiment
from battag.training import train

LOSSES = {
    "CE": {"family": "CE"},
    "WCE": {"family": "WCE", "weight_scheme": "wce-optimal"},
    "CECLA": {"family": "CECLA", "gamma": 1, "lambda": 20, "weight_scheme": "array"},
    "PBP": {"family": "PBP", "gamma": 0, "lambda": 8, "weight_scheme": "ee"},
}


def main(n_seeds=3):
    print("seed  " + "  ".join(f"{k:>6s}" for k in LOSSES))
    for seed in range(n_seeds):
        row = []
        for loss in LOSSES.values():
            rec = train(trend_experiment(loss, seed=seed), write=False)
            row.append(rec.final.eval.f2[int(np.argmin(rec.class_counts))])
        print(f"{seed:4d}  " + "  ".join(f"{v:6.3f}" for v in row))


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 3)
