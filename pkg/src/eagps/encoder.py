"""External attentive graph convolution: propagation, residual fusion, layer mean."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .attention import ExternalMemory, linear_attention, multi_head_external_attention, self_attention
from .config import HyperConfig, variant_spec
from .errors import DimensionError
from .graph import SequentialGraph
from .numerics import dropout_mask, rng_for


@dataclass
class NodeEmbeddings:
    e_items: ad.Var
    e_users: ad.Var
    layer_index: int = 0


@dataclass
class EncoderOutput:
    e_users_final: ad.Var
    e_items_final: ad.Var
    per_layer: list
    # item-half tensors fed into the layer norm, one per propagated layer
    fused_inputs: list = field(default_factory=list)


def propagate_layer(graph: SequentialGraph, prev: NodeEmbeddings) -> NodeEmbeddings:
    """One multiplication of the stacked [items; users] embedding by the normalised adjacency."""
    items, users = ad.as_var(prev.e_items), ad.as_var(prev.e_users)
    if items.shape[0] != graph.m_items or users.shape[0] != graph.n_users:
        raise DimensionError(
            f"embeddings ({items.shape[0]} items, {users.shape[0]} users) do not match graph "
            f"({graph.m_items} items, {graph.n_users} users)")
    out = ad.spmm(graph.normalized, ad.concat_rows([items, users]))
    m = graph.m_items
    return NodeEmbeddings(ad.slice_rows(out, 0, m), ad.slice_rows(out, m, graph.n_nodes), prev.layer_index + 1)


def fuse_external(item_layer, z_hat, delta=1.0, gain=None, bias=None):
    item_layer = ad.as_var(item_layer)
    d = item_layer.shape[1]
    gain = np.ones((1, d)) if gain is None else gain
    bias = np.zeros((1, d)) if bias is None else bias
    return ad.layer_norm(ad.add(item_layer, ad.mul(z_hat, delta)), gain, bias)


def combine_layers(per_layer) -> EncoderOutput:
    """Uniform 1/(1+eta) average of user and item embeddings over all layers."""
    w = 1.0 / len(per_layer)
    users = per_layer[0].e_users
    items = per_layer[0].e_items
    for layer in per_layer[1:]:
        users = ad.add(users, layer.e_users)
        items = ad.add(items, layer.e_items)
    return EncoderOutput(ad.mul(users, w), ad.mul(items, w), list(per_layer))


def memories(store, beta: int):
    return [ExternalMemory(store.var(f"mem_k.{h}"), store.var(f"mem_v.{h}")) for h in range(beta)]


def external_refinement(items, sequences, store, hyper: HyperConfig, attention: str):
    """Attend within each sequence's item rows and scatter-sum the results per item."""
    m = items.shape[0]
    w1 = store.var("w1")
    if attention == "EA":
        # external attention is row-local, so every sequence can be processed in one stack
        flat = np.concatenate([np.asarray(s.items, dtype=np.intp) for s in sequences])
        z = multi_head_external_attention(ad.take_rows(items, flat), memories(store, hyper.beta), w1)
        return ad.scatter_rows(z, flat, m)
    kernel = self_attention if attention == "SA" else linear_attention
    parts, flat = [], []
    for s in sequences:
        idx = np.asarray(s.items, dtype=np.intp)
        parts.append(kernel(ad.take_rows(items, idx))[0])
        flat.append(idx)
    z = ad.matmul(ad.concat_rows(parts), w1)
    return ad.scatter_rows(z, np.concatenate(flat), m)


def encode(graph: SequentialGraph, store, hyper: HyperConfig, sequences, training: bool = False,
           dropout_key=None, force_layer_norm: bool = False) -> EncoderOutput:
    """Run ``eta`` propagation layers with optional external refinement and average them.

    ``sequences`` are the graph's training sequences over which the external
    encoder attends. ``dropout_key`` (a tuple of ints) seeds dropout when
    training. ``force_layer_norm`` applies the layer norm even when the variant
    has no external encoder (used to compare the two paths).
    """
    attention = variant_spec(hyper.variant).attention
    layer = NodeEmbeddings(store.var("item_emb"), store.var("user_emb"), 0)
    per_layer = [layer]
    fused_inputs = []
    for l in range(1, hyper.eta + 1):
        nxt = propagate_layer(graph, layer)
        items, users = nxt.e_items, nxt.e_users
        if training and hyper.dropout > 0:
            key = tuple(dropout_key or ()) + (l,)
            items = ad.mul(items, dropout_mask(items.shape, hyper.dropout, rng_for(*key, 0)))
            users = ad.mul(users, dropout_mask(users.shape, hyper.dropout, rng_for(*key, 1)))
        if attention is not None:
            z_hat = external_refinement(items, sequences, store, hyper, attention)
            pre = ad.add(items, ad.mul(z_hat, hyper.delta))
            fused_inputs.append(pre)
            items = ad.layer_norm(pre, store.var("ln_gain"), store.var("ln_bias"))
        else:
            fused_inputs.append(items)
            if force_layer_norm:
                gain = store.var("ln_gain") if "ln_gain" in store else np.ones((1, hyper.d))
                bias = store.var("ln_bias") if "ln_bias" in store else np.zeros((1, hyper.d))
                items = ad.layer_norm(items, gain, bias)
        layer = NodeEmbeddings(items, users, l)
        per_layer.append(layer)
    out = combine_layers(per_layer)
    out.fused_inputs = fused_inputs
    return out
