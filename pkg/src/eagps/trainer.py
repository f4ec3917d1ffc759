"""Prediction head, cross-entropy objective, variant wiring and the training loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .config import HyperConfig, variant_spec
from .data import SequenceRecord, make_batches
from .decoder import decode
from .encoder import encode
from .errors import ConfigError, NonFiniteError
from .graph import build_graph
from .numerics import ParamStore, adam_step, rng_for, xavier_init

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


@dataclass
class PredictionHead:
    w_6: object  # 2d x m
    b_6: object  # 1 x m


def predict(h_s, head: PredictionHead):
    """Row-wise softmax of ``H W_6 + b_6``: one distribution over all items per row."""
    h_s = ad.as_var(h_s)
    if h_s.shape[1] != ad.value_of(head.w_6).shape[0]:
        raise ConfigError("representation width does not match the prediction head")
    return ad.softmax_rows(ad.add(ad.matmul(h_s, head.w_6), head.b_6))


def loss(probs, targets):
    """Mean negative log-likelihood of the targets (floored at 1e-12)."""
    probs = ad.as_var(probs)
    targets = np.asarray(targets, dtype=np.intp)
    picked = ad.pick(probs, np.arange(targets.size), targets)
    return ad.mul(ad.sum(ad.log(ad.add(picked, PROB_FLOOR))), -1.0 / targets.size)


def make_training_examples(seqs, loss_mode: str = "last-item"):
    out = []
    for s in seqs:
        if loss_mode == "last-item":
            out.append((s.prefix(len(s.items) - 1), s.items[-1]))
        elif loss_mode == "all-prefixes":
            out.extend((s.prefix(i), s.items[i]) for i in range(2, len(s.items)))
        else:
            raise ConfigError(f"unknown loss mode {loss_mode!r}")
    return out


def param_shapes(hyper: HyperConfig, m: int, n: int, max_len: int) -> dict:
    """Every learnable tensor of the configured variant, in initialisation order."""
    spec = variant_spec(hyper.variant)
    d, d1 = hyper.d, hyper.prompt_dim
    shapes = {"item_emb": (m, d), "user_emb": (n, d)}
    if spec.attention == "EA":
        for h in range(hyper.beta):
            shapes[f"mem_k.{h}"] = (hyper.alpha, hyper.d_head)
            shapes[f"mem_v.{h}"] = (hyper.alpha, hyper.d_head)
    if spec.attention is not None:
        shapes["w1"] = (d, d)
        shapes["ln_gain"] = (1, d)
        shapes["ln_bias"] = (1, d)
    if spec.decoder != "maxpool":
        shapes["prompt_table"] = (max_len, d1)
        shapes["w_c"] = (d1, d)
        shapes["b_c"] = (1, d)
    if spec.decoder in ("prompt", "relative"):
        shapes["w2"] = (2 * d, d)
        shapes["b2"] = (1, d)
        shapes["mask_token"] = (1, d)
    shapes["w6"] = (2 * d, m)
    shapes["b6"] = (1, m)
    return shapes


def init_params(hyper: HyperConfig, m: int, n: int, max_len: int) -> ParamStore:
    store = ParamStore()
    rng = rng_for(hyper.init_seed)
    for name, (rows, cols) in param_shapes(hyper, m, n, max_len).items():
        if name in ("b_c", "b2", "b6", "ln_bias"):
            value = np.zeros((rows, cols))
        elif name == "ln_gain":
            value = np.ones((rows, cols))
        else:
            value = xavier_init(rows, cols, rng)
        store.add(name, value)
    return store


def memory_penalty(store: ParamStore, coef: float):
    names = [k for k in store.names() if k.startswith("mem_")]
    if not names or coef == 0:
        return None
    total = None
    for k in names:
        v = store.var(k)
        sq = ad.sum(ad.mul(v, v))
        total = sq if total is None else ad.add(total, sq)
    return ad.mul(total, coef)


class Model:
    """One configured variant bound to a training graph and its parameters."""

    def __init__(self, hyper: HyperConfig, train, m_items: int, n_users: int, max_len: int = 0,
                 store: ParamStore | None = None):
        longest = max((len(s.items) for s in train), default=1)
        if hyper.max_len and hyper.max_len < longest:
            raise ConfigError(f"max_len={hyper.max_len} is shorter than a training sequence ({longest})")
        self.hyper = hyper
        self.m_items = m_items
        self.n_users = n_users
        self.max_len = hyper.max_len or max(max_len, longest)
        self.train = list(train)
        self.graph = build_graph(self.train, m_items, n_users)
        self.store = store if store is not None else init_params(hyper, m_items, n_users, self.max_len)
        self.epoch = 0

    @property
    def spec(self):
        return variant_spec(self.hyper.variant)

    def head(self) -> PredictionHead:
        return PredictionHead(self.store.var("w6"), self.store.var("b6"))

    def forward(self, sequences, training=False, epoch=0, batch_index=0):
        enc = encode(self.graph, self.store, self.hyper, self.train, training=training,
                     dropout_key=(self.hyper.dropout_seed, epoch, batch_index))
        h = decode(enc, sequences, self.store, self.hyper, training=training, epoch=epoch)
        return predict(h, self.head())

    def objective(self, examples, training=False, epoch=0, batch_index=0):
        prefixes = [p for p, _ in examples]
        targets = [t for _, t in examples]
        value = loss(self.forward(prefixes, training, epoch, batch_index), targets)
        penalty = memory_penalty(self.store, self.hyper.ea_l2)
        return value if penalty is None else ad.add(value, penalty)

    def score(self, prefixes, chunk: int = 512) -> np.ndarray:
        """Eval-mode probabilities over all items, one row per prefix."""
        rows = []
        for k in range(0, len(prefixes), chunk):
            rows.append(self.forward(prefixes[k:k + chunk], training=False).value)
        return np.vstack(rows)

    def examples(self):
        return make_training_examples(self.train, self.hyper.loss_mode)

    def train_epoch(self, epoch: int | None = None) -> float:
        epoch = self.epoch if epoch is None else epoch
        batches = make_batches(self.examples(), self.hyper.batch_size, self.hyper.shuffle_seed, epoch)
        mean = train_epoch(self, batches, epoch)
        self.epoch = epoch + 1
        return mean

    def fit(self, epochs: int | None = None, on_epoch=None) -> list:
        epochs = self.hyper.epochs if epochs is None else epochs
        history = []
        for _ in range(epochs):
            value = self.train_epoch()
            history.append(value)
            if on_epoch is not None:
                on_epoch(self.epoch, value)
        return history


def train_epoch(model: Model, batches, epoch: int = 0) -> float:
    """One pass of forward, backward and Adam over ``batches`` of (prefix, target) examples."""
    total, count = 0.0, 0
    for b, batch in enumerate(batches):
        model.store.zero_grad()
        obj = model.objective(batch, training=True, epoch=epoch, batch_index=b)
        value = float(obj.value)
        if not np.isfinite(value):
            norms = {k: float(np.linalg.norm(v)) for k, v in model.store.values.items()}
            raise NonFiniteError(f"non-finite loss at epoch {epoch}, batch {b}; parameter norms {norms}")
        obj.backward()
        adam_step(model.store, model.hyper.lr)
        total += value * len(batch)
        count += len(batch)
    log.debug("epoch %d loss %.6f", epoch, total / count)
    return total / count


def build_variant(hyper: HyperConfig, train, m_items: int, n_users: int, max_len: int = 0) -> Model:
    variant_spec(hyper.variant)
    return Model(hyper, train, m_items, n_users, max_len)


def model_for(hyper: HyperConfig, seqs) -> Model:
    """Model over a split :class:`~eagps.data.SequenceSet`, sized for its longest sequence."""
    return build_variant(hyper, seqs.train, seqs.m_items, seqs.n_users, seqs.max_len)


def eval_prefix(s: SequenceRecord) -> tuple:
    return s.prefix(len(s.items) - 1), s.items[-1]
