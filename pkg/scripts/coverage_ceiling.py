"""How many held-out targets on the planted-pattern data are reachable from training at all.

A test target whose transition (last input item -> target) never occurs in the
training split cannot be learned, which caps Recall@N for any model.
"""
import argparse

import numpy as np

from eagps.data import build_sequences, split_train_test, synth_dataset


def coverage(seqs):
    seen = {(a, b) for s in seqs.train for a, b in zip(s.items, s.items[1:])}
    return sum((s.items[-2], s.items[-1]) in seen for s in seqs.test) / len(seqs.test)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--users", type=int, default=50)
    p.add_argument("--items", type=int, default=200)
    p.add_argument("--length", type=int, default=10)
    p.add_argument("--seeds", type=int, default=200)
    args = p.parse_args()
    values = []
    for seed in range(args.seeds):
        log = synth_dataset(args.users, args.items, args.length, 0.0, seed)
        values.append(coverage(split_train_test(build_sequences(log, min_item_freq=1), 0.8, seed=0)))
    values = np.array(values)
    print(f"data seed 0 coverage: {values[0]:.2f}")
    print(f"over {args.seeds} data seeds: mean {values.mean():.3f}, P(coverage >= 0.9) = {(values >= 0.9).mean():.2f}")


if __name__ == "__main__":
    main()
