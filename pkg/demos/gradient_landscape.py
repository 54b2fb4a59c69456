"""Where the aggregated gradient changes sign as lambda and gamma vary.

Run: python demos/gradient_landscape.py
"""

from battag.gradcheck import grad_check
from battag.objectives import DatasetStats, LossSpec, gradient_root, make_weights, sign_boundary


def main():
    stats = DatasetStats((21, 2, 1))
    weights = make_weights("ee", stats)
    print("lambda  boundary  root(gamma=0)  root(gamma=1, natural)  root(gamma=1, base10)")
    for lam in (1, 8, 9, 12, 20, 30):
        roots = [
            gradient_root(LossSpec("WCECL", g, lam, weights, base), stats, 0)
            for g, base in ((0, "natural"), (1, "natural"), (1, "base10"))
        ]
        print(f"{lam:6d}  {sign_boundary(lam):8.5f}  " + "  ".join(f"{r:12.5f}" for r in roots))

    print("\nquick finite-difference check (5 batches per configuration):")
    report = grad_check(n_batches=5)
    print(f"  {len(report)} checks, all passed: {all(r.passed for r in report)}")


if __name__ == "__main__":
    main()
