"""Finite-difference check of every parameter gradient for every variant on the tiny fixture."""
import sys

from eagps.cli import run_gradcheck
from eagps.config import VARIANTS, HyperConfig


def main():
    failed = False
    for variant in VARIANTS:
        hyper = HyperConfig(d=8, alpha=4, beta=2, eta=2, gamma=0.4, variant=variant, loss_mode="all-prefixes")
        rep = run_gradcheck(hyper)
        name, err = rep.worst
        print(f"{variant:<10s} {'PASS' if rep.passed else 'FAIL'}  worst {name} {err:.2e}")
        failed |= not rep.passed
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
