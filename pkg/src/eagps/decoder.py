"""Positional-prompt decoder: prompts, template, sequential masking, soft attention.

Sequences of a batch are processed as one ragged stack: row ``i`` of the stack
belongs to sequence ``k`` when ``offsets[k] <= i < offsets[k+1]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .config import HyperConfig, variant_spec
from .errors import DimensionError, PositionRangeError
from .numerics import rng_for


@dataclass
class DecoderParams:
    prompt_base: object  # max_len x d1, one row per absolute position (or offset)
    w_c: object  # d1 x d
    b_c: object  # 1 x d
    w_2: object = None  # 2d x d
    b_2: object = None  # 1 x d
    mask_token: object = None  # 1 x d

    @classmethod
    def from_store(cls, store):
        get = lambda name: store.var(name) if name in store else None  # noqa: E731
        return cls(get("prompt_table"), get("w_c"), get("b_c"), get("w2"), get("b2"), get("mask_token"))

    @property
    def max_len(self) -> int:
        return ad.value_of(self.prompt_base).shape[0]


@dataclass
class PromptTemplate:
    rows: np.ndarray
    masked_rows: np.ndarray
    mask_flags: np.ndarray


def project_prompts(positions, params: DecoderParams):
    """Gather prompt rows by 1-based position and apply the kernel-1 convolution (a per-row affine map)."""
    pos = np.asarray(positions, dtype=np.intp)
    if pos.size and (pos.min() < 1 or pos.max() > params.max_len):
        raise PositionRangeError(f"position outside 1..{params.max_len}")
    base = ad.take_rows(params.prompt_base, pos - 1)
    return ad.add(ad.matmul(base, params.w_c), params.b_c)


def build_template(e_seq, e_prompt, params: DecoderParams):
    e_seq, e_prompt = ad.as_var(e_seq), ad.as_var(e_prompt)
    if e_seq.shape != e_prompt.shape:
        raise DimensionError(f"sequence rows {e_seq.shape} vs prompt rows {e_prompt.shape}")
    return ad.relu(ad.add(ad.matmul(ad.concat_cols([e_seq, e_prompt]), params.w_2), params.b_2))


def mask_count(t: int, gamma: float) -> int:
    return min(math.floor(gamma * t + 1e-9), t - 1)


def mask_indices(t: int, gamma: float, rng) -> np.ndarray:
    """Indices to mask, drawn without replacement from all rows except the last."""
    k = mask_count(t, gamma)
    if k <= 0:
        return np.zeros(0, dtype=np.intp)
    return np.sort(rng.choice(t - 1, size=k, replace=False))


def sequential_mask(template, gamma: float, mask_token, seed, training: bool = True) -> PromptTemplate:
    rows = np.asarray(ad.value_of(template))
    t = rows.shape[0]
    flags = np.zeros(t, dtype=np.int64)
    if training:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        flags[mask_indices(t, gamma, rng)] = 1
    masked = np.where(flags[:, None] == 1, np.reshape(ad.value_of(mask_token), (1, -1)), rows)
    return PromptTemplate(rows, masked, flags)


def soft_attention_segments(rows, offsets, standard_softmax: bool = False):
    """Weight every row by exp(cos(row, last row of its segment)) / sqrt(sum of those exps).

    With ``standard_softmax`` the denominator is the plain sum instead.
    Returns one pooled row per segment.
    """
    rows = ad.as_var(rows)
    offsets = np.asarray(offsets, dtype=np.intp)
    lengths = np.diff(offsets)
    seg = np.repeat(np.arange(lengths.size), lengths)
    unit = ad.l2_normalize_rows(rows)
    query = ad.take_rows(unit, (offsets[1:] - 1)[seg])
    f = ad.sum(ad.mul(unit, query), axis=1, keepdims=True)
    ex = ad.exp(f)
    total = ad.take_rows(ad.segment_sum(ex, offsets), seg)
    weights = ad.div(ex, total if standard_softmax else ad.sqrt(total))
    return ad.segment_sum(ad.mul(weights, rows), offsets), weights


def soft_attention(masked, standard_softmax: bool = False):
    masked = ad.as_var(masked)
    out, _ = soft_attention_segments(masked, [0, masked.shape[0]], standard_softmax)
    return out


@dataclass
class RaggedBatch:
    items: np.ndarray
    offsets: np.ndarray
    positions: np.ndarray  # 1-based absolute positions
    offsets_from_end: np.ndarray  # t_k - i for row i (1-based), so the last row is 0
    users: np.ndarray

    @classmethod
    def of(cls, sequences):
        lengths = np.array([len(s.items) for s in sequences], dtype=np.intp)
        if lengths.size == 0 or lengths.min() < 1:
            raise ValueError("every decoded sequence needs at least one item")
        offsets = np.concatenate([[0], np.cumsum(lengths)])
        positions = np.concatenate([np.arange(1, t + 1) for t in lengths])
        items = np.concatenate([np.asarray(s.items, dtype=np.intp) for s in sequences])
        users = np.array([s.user_index for s in sequences], dtype=np.intp)
        return cls(items, offsets, positions, np.repeat(lengths, lengths) - positions, users)


def decode(enc, sequences, store, hyper: HyperConfig, training: bool = False, epoch: int = 0):
    """Sequence-level representations ``[E_X | E_u]`` of width 2d, one row per sequence."""
    kind = variant_spec(hyper.variant).decoder
    batch = RaggedBatch.of(sequences)
    e_seq = ad.take_rows(enc.e_items_final, batch.items)

    if kind == "maxpool":
        pooled = ad.segment_max(e_seq, batch.offsets)
    else:
        params = DecoderParams.from_store(store)
        if kind == "relative":
            prompts = project_prompts(batch.offsets_from_end + 1, params)
        else:
            prompts = project_prompts(batch.positions, params)
        if kind == "additive":
            lengths = np.diff(batch.offsets).reshape(-1, 1).astype(np.float64)
            pooled = ad.div(ad.segment_sum(ad.add(e_seq, prompts), batch.offsets), lengths)
        else:
            template = build_template(e_seq, prompts, params)
            if training and hyper.gamma > 0:
                flags = np.zeros((template.shape[0], 1))
                for k, s in enumerate(sequences):
                    rng = rng_for(hyper.mask_seed, epoch, s.seq_id, len(s.items))
                    flags[batch.offsets[k] + mask_indices(len(s.items), hyper.gamma, rng)] = 1.0
                template = ad.add(ad.mul(template, 1.0 - flags), ad.mul(flags, params.mask_token))
            pooled, _ = soft_attention_segments(template, batch.offsets, hyper.softmax_soft_attention)
    return ad.concat_cols([pooled, ad.take_rows(enc.e_users_final, batch.users)])
