"""Global weighting kernels: self, linear and external attention.

All functions accept arrays or :class:`~eagps.autodiff.Var` inputs and return
``Var`` results, so the same code serves inference, tests and training.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from . import autodiff as ad
from .errors import ConfigError, DimensionError


class Mechanism(str, Enum):
    SA = "SA"
    LA = "LA"
    EA = "EA"


@dataclass
class ExternalMemory:
    m_k: object  # alpha x d_head
    m_v: object  # alpha x d_head

    def __post_init__(self):
        if ad.value_of(self.m_k).shape != ad.value_of(self.m_v).shape:
            raise DimensionError("key and value memories must have the same shape")

    @property
    def alpha(self) -> int:
        return ad.value_of(self.m_k).shape[0]

    @property
    def d_head(self) -> int:
        return ad.value_of(self.m_k).shape[1]


@dataclass(frozen=True)
class FlopCount:
    mechanism: Mechanism
    multiply_adds: int


def self_attention(e):
    """A = softmax(E E^T / sqrt(d)) over rows, Z = A E."""
    e = ad.as_var(e)
    d = e.shape[1]
    a = ad.softmax_rows((e @ e.T) * (1.0 / math.sqrt(d)))
    return a @ e, a


def linear_attention(e):
    """A = softmax(E^T E / sqrt(d)) over rows (d x d), Z = E A."""
    e = ad.as_var(e)
    d = e.shape[1]
    a = ad.softmax_rows((e.T @ e) * (1.0 / math.sqrt(d)))
    return e @ a, a


def external_attention(e, mem: ExternalMemory):
    """A = l2-normalise rows of E M_k^T / sqrt(d_head), Z = A M_v.

    Row-local: applying it to a stack of sequences equals applying it per sequence.
    """
    e = ad.as_var(e)
    if e.shape[1] != mem.d_head:
        raise DimensionError(f"input width {e.shape[1]} != memory width {mem.d_head}")
    scores = (e @ ad.transpose(mem.m_k)) * (1.0 / math.sqrt(mem.d_head))
    a = ad.l2_normalize_rows(scores)
    return a @ mem.m_v, a


def multi_head_external_attention(e, mems, w1):
    """Split columns into one block per memory, attend, concatenate, project by ``w1``."""
    e = ad.as_var(e)
    beta = len(mems)
    d = e.shape[1]
    if beta < 1 or d % beta:
        raise ConfigError(f"{beta} heads do not divide embedding size {d}")
    step = d // beta
    heads = [external_attention(ad.slice_cols(e, h * step, (h + 1) * step), mem)[0]
             for h, mem in enumerate(mems)]
    z = heads[0] if beta == 1 else ad.concat_cols(heads)
    return z @ w1


def flop_count(mechanism, n: int, d: int, alpha: int = 0) -> FlopCount:
    """Multiply-adds of the two matrix products inside one attention call."""
    mechanism = Mechanism(mechanism)
    if n < 1 or d < 1 or (mechanism is Mechanism.EA and alpha < 1):
        raise ValueError("flop_count needs positive sizes")
    if mechanism is Mechanism.SA:
        count = 4 * n * n * d
    elif mechanism is Mechanism.LA:
        count = 4 * n * d * d
    else:
        count = 4 * n * alpha * d
    return FlopCount(mechanism, count)
