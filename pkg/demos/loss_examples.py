"""Single-token loss values and the weight matrices they use.

Run: python demos/loss_examples.py
"""

import numpy as np

from battag.objectives import DatasetStats, LossBatch, LossSpec, loss_value, make_weights


def one_token(family, probs, true, weights=None):
    spec = LossSpec(family, weights=weights, log_base="base10")
    return loss_value(spec, LossBatch.from_ids([true], [probs]))


def main():
    p1, p2 = [0.4, 0.3, 0.3], [0.4, 0.5, 0.1]
    print("true class 0, two predictions with the same p_true:")
    for family in ("CE", "CECL", "PBP"):
        print(f"  {family:5s} {one_token(family, p1, 0):.4f}  {one_token(family, p2, 0):.4f}")

    w = make_weights("wce-optimal", DatasetStats((20, 2, 1)))
    p = [0.1, 0.5, 0.4]
    print(f"WCE at counts (20,2,1): true 0 -> {one_token('WCE', p, 0, w):.4f}, true 1 -> {one_token('WCE', p, 1, w):.4f}")

    stats = DatasetStats((7, 2, 1))
    np.set_printoptions(precision=4, suppress=True)
    print("array weights for (7,2,1), divided by N:")
    print(make_weights("array", stats).scaled(1 / stats.N).A)


if __name__ == "__main__":
    main()
