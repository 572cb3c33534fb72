"""Re-measure the frozen regression constants of the property suite.

Reports the maximum observed value of each measured constant over a seeded
corpus; the values frozen in beamkam.lemma_suite.FROZEN must sit above these
with comfortable headroom.

Run:  python3 benchmarks/calibrate.py [--seed 0] [--count 2000]
"""

import argparse
import sys

from beamkam import lemma_suite


def main(argv=None):
    parser = argparse.ArgumentParser()
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--count", type=int, default=2000)
    args = parser.parse_args(argv)
    measured = lemma_suite.measure_constants(seed=args.seed,
                                             n_per_check=args.count)
    print(f"{'constant':<28}{'measured max':>14}{'frozen':>10}{'headroom':>10}")
    ok = True
    for name, value in measured.items():
        frozen = lemma_suite.FROZEN[name]
        head = frozen / value if value > 0 else float("inf")
        flag = "" if frozen > value else "  <-- FROZEN VALUE TOO LOW"
        ok = ok and frozen > value
        print(f"{name:<28}{value:>14.4f}{frozen:>10.2f}{head:>9.1f}x{flag}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
