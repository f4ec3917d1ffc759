"""Wall-clock ratio wall(1.0)/wall(0.5) as the training set grows.

Every batch re-encodes the full training graph, so once the training split
spans several batches the epoch cost grows faster than linearly; this script
shows where that happens.

    python scripts/benchmark_scaling.py --users 50,320,640,1280
"""
import argparse

from eagps.config import HyperConfig
from eagps.data import build_sequences, split_train_test, synth_dataset
from eagps.evaluator import benchmark


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--users", default="50,320,640,1280")
    p.add_argument("--items", type=int, default=200)
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--batch", type=int, default=256)
    args = p.parse_args()
    hyper = HyperConfig(batch_size=args.batch)
    print("users\ttrain_seqs\twall@0.5\twall@1.0\tratio\tea_flops@1.0")
    for n_users in (int(x) for x in args.users.split(",")):
        seqs = split_train_test(build_sequences(synth_dataset(n_users, args.items, 10, 0.0, 0), min_item_freq=1))
        half, full = benchmark(hyper, seqs, ratios=(0.5, 1.0), epochs=args.epochs, repeats=args.repeats)
        print(f"{n_users}\t{len(seqs.train)}\t{half.wall_seconds:.3f}\t{full.wall_seconds:.3f}\t"
              f"{full.wall_seconds / half.wall_seconds:.2f}\t{full.ea_flops_total}")


if __name__ == "__main__":
    main()
