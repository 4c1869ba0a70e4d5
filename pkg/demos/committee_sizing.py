"""Committee sizing walkthrough.

Prints the chance that a random committee is captured by the adversary, then
the smallest committee that keeps that chance under the default target for
the replica counts used in the evaluation sweeps.

    python3 demos/committee_sizing.py
"""

from __future__ import annotations

from proteus.committee import DEFAULT_PF_TARGET, failure_probability, min_committee_size


def main() -> None:
    n, f = 100, 33
    print(f"n={n}, f={f}: capture probability by committee size")
    for c in (10, 20, 30, 40, 50):
        print(f"  c={c:3d}  pf={float(failure_probability(n, f, c)):.3e}")
    print(f"\nsmallest c with pf <= {DEFAULT_PF_TARGET:g}")
    for n in (40, 70, 100, 130, 200):
        c = min_committee_size(n, pf_target=DEFAULT_PF_TARGET)
        print(f"  n={n:3d}  c={c:2d}  pf={float(failure_probability(n, (n - 1) // 3, c)):.2e}")


if __name__ == "__main__":
    main()
