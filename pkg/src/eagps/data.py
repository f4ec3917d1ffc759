"""Interaction logs, sequence construction, splits, batching and the on-disk bundle."""
from __future__ import annotations

import io
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, EmptyDataError, ParseError
from .numerics import rng_for

ONE_YEAR = 31536000


@dataclass(frozen=True)
class InteractionLog:
    records: list  # (user_id, item_id, timestamp)

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True)
class SequenceRecord:
    user_index: int
    items: tuple
    seq_id: int = 0

    @property
    def positions(self) -> tuple:
        return tuple(range(1, len(self.items) + 1))

    @property
    def length(self) -> int:
        return len(self.items)

    def prefix(self, k: int) -> "SequenceRecord":
        return SequenceRecord(self.user_index, self.items[:k], self.seq_id)


class Vocab:
    """Dense, insertion-ordered id <-> index map."""

    def __init__(self, ids=()):
        self.ids: list[str] = []
        self.index: dict[str, int] = {}
        for i in ids:
            self.add(i)

    def add(self, key: str) -> int:
        if key not in self.index:
            self.index[key] = len(self.ids)
            self.ids.append(key)
        return self.index[key]

    def __len__(self):
        return len(self.ids)

    def __getitem__(self, key: str) -> int:
        return self.index[key]

    def id_of(self, index: int) -> str:
        return self.ids[index]

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.ids == other.ids


@dataclass
class SequenceSet:
    sequences: list
    n_users: int
    m_items: int
    user_vocab: Vocab
    item_vocab: Vocab
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)

    @property
    def n_interactions(self) -> int:
        return sum(s.length for s in self.sequences)

    @property
    def max_len(self) -> int:
        return max(s.length for s in self.sequences)


def parse_interactions(source) -> InteractionLog:
    """Read ``user \\t item \\t timestamp`` lines; blank lines are skipped."""
    if isinstance(source, str):
        source = io.StringIO(source)
    records = []
    for lineno, raw in enumerate(source, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(f"expected 3 tab-separated fields, got {len(fields)}", lineno)
        user, item, ts = fields
        if not user or not item:
            raise ParseError("empty user or item id", lineno)
        try:
            t = int(ts)
        except ValueError:
            raise ParseError(f"timestamp {ts!r} is not an integer", lineno) from None
        if t < 0:
            raise ParseError("negative timestamp", lineno)
        records.append((user, item, t))
    if not records:
        raise EmptyDataError("no interactions in input")
    return InteractionLog(records)


def _segment(events, window_seconds):
    fragments, current, start = [], [], None
    for item, ts in events:
        if current and ts - start > window_seconds:
            fragments.append(current)
            current = []
        if not current:
            start = ts
        current.append((item, ts))
    if current:
        fragments.append(current)
    return fragments


def build_sequences(log: InteractionLog, min_seq_len: int = 3, min_item_freq: int = 5,
                    window_seconds: int = ONE_YEAR) -> SequenceSet:
    """Sort, filter and fragment per-user histories into position-annotated sequences.

    The item-frequency and sequence-length filters are applied alternately
    until neither removes anything.
    """
    if not log.records:
        raise EmptyDataError("empty interaction log")
    per_user: dict[str, list] = defaultdict(list)
    for user, item, ts in log.records:
        per_user[user].append((item, ts))
    # stable sort keeps input order among equal timestamps
    events = {u: sorted(ev, key=lambda e: e[1]) for u, ev in per_user.items()}

    while True:
        freq = Counter(item for ev in events.values() for item, _ in ev)
        filtered = {u: [e for e in ev if freq[e[0]] >= min_item_freq] for u, ev in events.items()}
        kept = {}
        for u, ev in filtered.items():
            frags = [f for f in _segment(ev, window_seconds) if len(f) >= min_seq_len]
            if frags:
                kept[u] = [e for f in frags for e in f]
        unchanged = kept.keys() == events.keys() and all(len(kept[u]) == len(events[u]) for u in kept)
        events = kept
        if unchanged:
            break
    if not events:
        raise EmptyDataError("every interaction was filtered out")

    users, items = Vocab(), Vocab()
    for user, item, _ in log.records:
        if user in events:
            users.add(user)
    surviving = {item for ev in events.values() for item, _ in ev}
    for _, item, _ in log.records:
        if item in surviving:
            items.add(item)

    sequences = []
    for user in users.ids:
        for frag in _segment(events[user], window_seconds):
            sequences.append(SequenceRecord(users[user], tuple(items[i] for i, _ in frag), len(sequences)))
    return SequenceSet(sequences, len(users), len(items), users, items)


def split_train_test(seqs: SequenceSet, ratio: float = 0.8, seed: int = 0) -> SequenceSet:
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio must lie in (0, 1), got {ratio}")
    total = len(seqs.sequences)
    if total < 2:
        raise EmptyDataError("need at least two sequences to split")
    perm = np.random.default_rng(seed).permutation(total)
    n_train = math.ceil(ratio * total - 1e-9)
    train = [seqs.sequences[i] for i in perm[:n_train]]
    test = [seqs.sequences[i] for i in perm[n_train:]]
    return replace(seqs, train=train, test=test)


def make_batches(train: list, batch_size: int, seed: int, epoch: int = 0) -> list:
    if batch_size < 1:
        raise ConfigError("batch size must be positive")
    if not train:
        raise EmptyDataError("no training sequences to batch")
    order = rng_for(seed, epoch).permutation(len(train))
    return [[train[i] for i in order[k:k + batch_size]] for k in range(0, len(order), batch_size)]


def synth_dataset(n_users: int, m_items: int, seq_len: int, noise: float, seed: int) -> InteractionLog:
    """Planted-pattern log: each user walks the cycle ``j -> j+1 (mod m)``.

    Each step is independently replaced by a uniform random item with
    probability ``noise``; the walk itself continues along the cycle.
    """
    if m_items < seq_len + 1:
        raise ConfigError("synthetic data needs m_items >= seq_len + 1")
    rng = np.random.default_rng(seed)
    records = []
    for u in range(n_users):
        start = int(rng.integers(m_items))
        t0 = 1_000_000 + u
        for step in range(seq_len):
            item = (start + step) % m_items
            if noise > 0 and rng.random() < noise:
                item = int(rng.integers(m_items))
            records.append((f"u{u}", f"i{item}", t0 + 60 * step))
    return InteractionLog(records)


# dataset bundle ------------------------------------------------------------

def write_bundle(seqs: SequenceSet, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "sequences.tsv").open("w", encoding="utf-8") as fh:
        for s in seqs.sequences:
            fh.write(f"{s.user_index}\t{','.join(map(str, s.items))}\n")
    for name, vocab in (("vocab_users.tsv", seqs.user_vocab), ("vocab_items.tsv", seqs.item_vocab)):
        with (out / name).open("w", encoding="utf-8") as fh:
            for i, key in enumerate(vocab.ids):
                fh.write(f"{i}\t{key}\n")
    train_ids = {s.seq_id for s in seqs.train}
    with (out / "split.tsv").open("w", encoding="utf-8") as fh:
        for s in seqs.sequences:
            fh.write(f"{s.seq_id}\t{'train' if s.seq_id in train_ids else 'test'}\n")


def _read_vocab(path):
    vocab = Vocab()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        idx, key = line.split("\t", 1)
        if int(idx) != lineno - 1:
            raise ParseError(f"{path.name}: non-dense index {idx}", lineno)
        vocab.add(key)
    return vocab


def read_bundle(in_dir) -> SequenceSet:
    src = Path(in_dir)
    users = _read_vocab(src / "vocab_users.tsv")
    items = _read_vocab(src / "vocab_items.tsv")
    sequences = []
    for lineno, line in enumerate((src / "sequences.tsv").read_text(encoding="utf-8").splitlines(), start=1):
        try:
            u, joined = line.split("\t")
            sequences.append(SequenceRecord(int(u), tuple(int(x) for x in joined.split(",")), lineno - 1))
        except ValueError:
            raise ParseError("sequences.tsv: malformed row", lineno) from None
    train, test = [], []
    for line in (src / "split.tsv").read_text(encoding="utf-8").splitlines():
        sid, part = line.split("\t")
        (train if part == "train" else test).append(sequences[int(sid)])
    return SequenceSet(sequences, len(users), len(items), users, items, train, test)
