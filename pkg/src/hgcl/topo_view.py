"""Topology-guided view: node-level attention within each meta-path, semantic attention across them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import MetaPathAdjacency
from .layers import fan_in_bias, glorot, glorot_vector, linear, semantic_attention


def metapath_attention_aggregate(
    h: Tensor,
    adj: MetaPathAdjacency,
    s: Tensor,
    score_act: str = "leaky_relu",
    agg_act: str = "elu",
) -> Tensor:
    """Aggregate each node's meta-path neighbors with attention ``score_act(s . [h_i || h_j])``."""
    n, d = h.shape
    if adj.num_nodes != n:
        raise ValueError(f"adjacency covers {adj.num_nodes} nodes, features have {n}")
    if s.shape != (2 * d,):
        raise ValueError(f"attention vector must have shape ({2 * d},), got {s.shape}")
    lengths = np.diff(adj.indptr)
    if np.any(lengths == 0):
        raise ValueError(f"meta-path {adj.metapath.name!r}: empty neighbor set")
    centers, neighbors = adj.edge_arrays()
    # s . [h_i || h_j] == h_i . s_left + h_j . s_right
    s_left = ad.reshape(ad.gather_rows(s, np.arange(d)), (d, 1))
    s_right = ad.reshape(ad.gather_rows(s, np.arange(d, 2 * d)), (d, 1))
    u = ad.reshape(ad.matmul(h, s_left), (n,))
    v = ad.reshape(ad.matmul(h, s_right), (n,))
    scores = ad.activation(ad.add(ad.gather_rows(u, centers), ad.gather_rows(v, neighbors)), score_act)
    gamma = ad.segment_softmax(scores, adj.indptr)
    weighted = ad.mul(ad.reshape(gamma, (-1, 1)), ad.gather_rows(h, neighbors))
    return ad.activation(ad.segment_sum(weighted, adj.indptr), agg_act)


def fuse_across_metapaths(reps: Sequence[Tensor], queries: Sequence[Tensor], weight: Tensor, bias: Tensor,
                          act: str = "tanh") -> tuple[Tensor, Tensor]:
    """Semantic attention over meta-path representations; returns (Z_topo, eta)."""
    return semantic_attention(reps, queries, weight, bias, act)


def init_topo_params(in_dim: int, metapath_names: Sequence[str], hidden: int, out_dim: int,
                     rng: np.random.Generator) -> dict[str, Tensor]:
    p: dict[str, Tensor] = {
        "topo.in.W": glorot(rng, in_dim, hidden),
        "topo.in.b": fan_in_bias(rng, in_dim, hidden),
    }
    for m in metapath_names:
        p[f"topo.mp.{m}.s"] = glorot_vector(rng, 2 * hidden)
    p["topo.sem.W"] = glorot(rng, hidden, hidden)
    p["topo.sem.b"] = fan_in_bias(rng, hidden, hidden)
    for m in metapath_names:
        p[f"topo.sem.q.{m}"] = glorot_vector(rng, hidden)
    p["topo.out.W"] = glorot(rng, hidden, out_dim)
    p["topo.out.b"] = fan_in_bias(rng, hidden, out_dim)
    for name, t in p.items():
        t.name = name
    return p


@dataclass
class TopoViewOutput:
    z: Tensor
    eta: Tensor
    per_metapath: list[Tensor]


def topo_forward(
    params: Mapping[str, Tensor],
    target_features: np.ndarray,
    adjacencies: Sequence[MetaPathAdjacency],
    activations: Mapping[str, str] | None = None,
) -> TopoViewOutput:
    act = {"attention": "leaky_relu", "aggregate": "elu", "semantic": "tanh"}
    act.update(activations or {})
    if not adjacencies:
        raise ValueError("topology-guided view needs at least one meta-path")
    h = linear(Tensor(target_features), params["topo.in.W"], params["topo.in.b"])
    reps, queries = [], []
    for adj in adjacencies:
        name = adj.metapath.name
        key = f"topo.mp.{name}.s"
        if key not in params:
            raise KeyError(f"meta-path {name!r} has no attention vector")
        reps.append(metapath_attention_aggregate(h, adj, params[key], act["attention"], act["aggregate"]))
        queries.append(params[f"topo.sem.q.{name}"])
    fused, eta = fuse_across_metapaths(reps, queries, params["topo.sem.W"], params["topo.sem.b"], act["semantic"])
    z = linear(fused, params["topo.out.W"], params["topo.out.b"])
    return TopoViewOutput(z=z, eta=eta, per_metapath=reps)
