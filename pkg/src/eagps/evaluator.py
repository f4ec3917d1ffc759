"""Ranking metrics, closed-form parameter counts and the scaling benchmark."""
from __future__ import annotations

import csv
import json
import math
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .attention import flop_count
from .config import HyperConfig, variant_spec
from .trainer import build_variant, eval_prefix


def rank_of(scores, target: int) -> int:
    """1 + #strictly higher scores + #equal scores at a smaller index."""
    scores = np.asarray(scores)
    s = scores[target]
    return 1 + int(np.sum(scores > s)) + int(np.sum(scores[:target] == s))


def recall_at_n(scores, target: int, n: int) -> int:
    if n < 1:
        raise ValueError("n must be >= 1")
    return int(rank_of(scores, target) <= n)


def mrr_at_n(scores, target: int, n: int) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    r = rank_of(scores, target)
    return 1.0 / r if r <= n else 0.0


@dataclass
class MetricsReport:
    recall_at: dict
    mrr_at: dict
    n_evaluated: int

    def rows(self):
        for n in sorted(self.recall_at):
            yield {"metric": "recall", "n": n, "value": self.recall_at[n]}
            yield {"metric": "mrr", "n": n, "value": self.mrr_at[n]}


def evaluate(model, test, ns=(5, 10)) -> MetricsReport:
    """Hold out each test sequence's last item and rank it against every item.

    ``model`` needs a ``score(prefixes) -> (len(prefixes), m)`` method.
    """
    if not test:
        raise ValueError("no test sequences")
    prefixes, targets = zip(*(eval_prefix(s) for s in test))
    scores = np.asarray(model.score(list(prefixes)))
    recall = {n: 0.0 for n in ns}
    mrr = {n: 0.0 for n in ns}
    for row, target in zip(scores, targets):
        r = rank_of(row, target)
        for n in ns:
            if r <= n:
                recall[n] += 1.0
                mrr[n] += 1.0 / r
    k = len(targets)
    return MetricsReport({n: v / k for n, v in recall.items()}, {n: v / k for n, v in mrr.items()}, k)


def param_count(hyper: HyperConfig, m: int, n: int, max_len: int) -> int:
    """Closed-form number of learnable scalars for the configured variant."""
    spec = variant_spec(hyper.variant)
    d, d1, alpha = hyper.d, hyper.prompt_dim, hyper.alpha
    total = (m + n) * d + 2 * d * m + m
    if spec.attention == "EA":
        total += 2 * alpha * d
    if spec.attention is not None:
        total += d * d + 2 * d
    if spec.decoder != "maxpool":
        total += max_len * d1 + d1 * d + d
    if spec.decoder in ("prompt", "relative"):
        total += 2 * d * d + d + d
    return total


@dataclass
class BenchRecord:
    data_ratio: float
    wall_seconds: float
    param_count: int
    flops: list = field(default_factory=list)
    n_sequences: int = 0
    items_processed: int = 0
    ea_flops_total: int = 0
    threads: int = 1

    def to_dict(self):
        out = {k: getattr(self, k) for k in
               ("data_ratio", "wall_seconds", "param_count", "n_sequences", "items_processed",
                "ea_flops_total", "threads")}
        for f in self.flops:
            out[f"flops_{f.mechanism.value}"] = f.multiply_adds
        return out


def benchmark(hyper: HyperConfig, seqs, ratios=(0.2, 0.4, 0.6, 0.8, 1.0), epochs: int = 3,
              repeats: int = 3) -> list:
    """Train a fixed epoch budget on growing prefixes of the training split and time it."""
    out = []
    max_len = seqs.max_len
    for ratio in ratios:
        k = max(1, math.ceil(ratio * len(seqs.train) - 1e-9))
        subset = seqs.train[:k]
        times = []
        with threadpool_limits(limits=1):
            for _ in range(repeats):
                model = build_variant(hyper, subset, seqs.m_items, seqs.n_users, max_len)
                start = time.perf_counter()
                model.fit(epochs)
                times.append(time.perf_counter() - start)
        items = sum(len(s.items) for s in subset)
        mean_len = max(1, round(items / k))
        flops = [flop_count(mech, mean_len, hyper.d, hyper.alpha) for mech in ("SA", "LA", "EA")]
        out.append(BenchRecord(
            data_ratio=ratio,
            wall_seconds=statistics.median(times),
            param_count=model.store.count(),
            flops=flops,
            n_sequences=k,
            items_processed=items,
            ea_flops_total=4 * items * hyper.alpha * hyper.d,
        ))
    return out


def write_jsonl(rows, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def write_csv(rows, path) -> None:
    rows = list(rows)
    keys = []
    for row in rows:
        keys.extend(k for k in row if k not in keys)
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(rows)

