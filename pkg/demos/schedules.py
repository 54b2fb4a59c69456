"""Learning-rate variants around the warmup peak.

Run: python demos/schedules.py
"""

import numpy as np

from battag.schedule import named_variant


def main():
    steps = [100, 1000, 3999, 4000, 4001, 10000, 20000]
    print("variant  alpha   beta   " + "  ".join(f"{s:>9d}" for s in steps))
    for name in ("v1", "v2", "v3", "v4", "v5"):
        s = named_variant(name)
        vals = "  ".join(f"{s(x):9.3e}" for x in steps)
        print(f"{name:7s}  {str(s.alpha):6s} {str(s.effective_beta):6s} {vals}")

    printed = named_variant("v3", beta=-1 / 22)
    peak = int(np.argmax([printed(x) for x in range(1, 8001)])) + 1
    print(f"\nv3 with warmup exponent -1/22 instead of -1/26 peaks at step {peak}, not 4000")


if __name__ == "__main__":
    main()
