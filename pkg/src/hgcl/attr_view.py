"""Attribute-guided view: similarity-regenerated graphs, type-wise GraphSAGE, two-stage attention."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Tensor
from .graph import HeteroGraph
from .layers import fan_in_bias, glorot, glorot_vector, linear, semantic_attention


def cosine_similarity(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"cosine_similarity: dimension mismatch {x.shape} vs {y.shape}")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        return 0.0
    return float(np.dot(x / nx, y / ny))


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


def cosine_similarity_matrix(x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    """Pairwise cosine similarities; rows with zero norm are similar to nothing (0)."""
    ux = _unit_rows(np.asarray(x, dtype=np.float64))
    uy = ux if y is None else _unit_rows(np.asarray(y, dtype=np.float64))
    if ux.shape[1] != uy.shape[1]:
        raise ValueError(f"cosine_similarity_matrix: dimension mismatch {ux.shape[1]} vs {uy.shape[1]}")
    return ux @ uy.T


def build_homogeneous_graph(x: np.ndarray, eps: float) -> sp.csr_matrix:
    """Symmetric boolean adjacency linking distinct rows with cosine similarity >= eps.

    Zero-norm rows stay isolated even at ``eps = 0``.
    """
    if eps < 0:
        raise ValueError(f"homogeneous threshold must be nonnegative, got {eps}")
    x = np.asarray(x, dtype=np.float64)
    s = cosine_similarity_matrix(x)
    live = np.linalg.norm(x, axis=1) > 0
    keep = (s >= eps) & live[:, None] & live[None, :]
    np.fill_diagonal(keep, False)
    keep &= keep.T  # guard against asymmetric rounding in the product
    return sp.csr_matrix(keep)


def neighbor_mean(adj: sp.csr_matrix, x: np.ndarray) -> np.ndarray:
    """Mean neighbor attributes; an isolated node falls back to its own row."""
    deg = np.asarray(adj.sum(axis=1)).ravel()
    agg = np.asarray(adj.astype(np.float64) @ x)
    out = np.array(x, dtype=np.float64)
    has = deg > 0
    out[has] = agg[has] / deg[has, None]
    return out


def sage_encode(adj: sp.csr_matrix, x: np.ndarray, weight: Tensor, bias: Tensor | None = None,
                act: str = "elu") -> Tensor:
    """One mean-aggregator GraphSAGE layer: act([x_i || mean_{N(i)} x_j] W + b)."""
    x = np.asarray(x, dtype=np.float64)
    if adj.shape != (x.shape[0], x.shape[0]):
        raise ValueError(f"sage_encode: adjacency {adj.shape} does not match {x.shape[0]} rows")
    if weight.shape[0] != 2 * x.shape[1]:
        raise ValueError(f"sage_encode: weight expects {weight.shape[0]} inputs, got 2 x {x.shape[1]}")
    features = Tensor(np.hstack([x, neighbor_mean(adj, x)]))
    return ad.activation(linear(features, weight, bias), act)


def build_hetero_edges(h_t: np.ndarray, h_f: np.ndarray, w_t: np.ndarray, w_f: np.ndarray,
                       eps_r: float) -> tuple[np.ndarray, np.ndarray]:
    """(target, other) index pairs whose projected cosine similarity is >= eps_r.

    Pairs are sorted by target index, then by other-type index. Rows whose
    projection is the zero vector take part in no pair.
    """
    p_t = np.asarray(h_t) @ np.asarray(w_t)
    p_f = np.asarray(h_f) @ np.asarray(w_f)
    keep = cosine_similarity_matrix(p_t, p_f) >= eps_r
    keep &= (np.linalg.norm(p_t, axis=1) > 0)[:, None] & (np.linalg.norm(p_f, axis=1) > 0)[None, :]
    centers, others = np.nonzero(keep)
    return centers.astype(np.int64), others.astype(np.int64)


def hetero_attention_aggregate(
    h_target: Tensor,
    h_other: Tensor,
    weight: Tensor,
    centers: np.ndarray,
    others: np.ndarray,
    score_act: str = "leaky_relu",
    agg_act: str = "elu",
) -> tuple[Tensor, np.ndarray]:
    """Attention over each target node's other-type neighbors.

    ``centers``/``others`` must be grouped by center. Scores are
    ``score_act(h_i W h_j)``, normalised per target node; the output row is
    ``agg_act(sum_j alpha_ij h_j)``. Target nodes with no neighbors get a zero
    row and are reported ``False`` in the returned mask.
    """
    n = h_target.shape[0]
    centers = np.asarray(centers, dtype=np.int64)
    others = np.asarray(others, dtype=np.int64)
    if centers.size and np.any(np.diff(centers) < 0):
        raise ValueError("hetero_attention_aggregate: pairs must be grouped by target node")
    counts = np.bincount(centers, minlength=n)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    has_neighbors = counts > 0
    if not centers.size:
        return Tensor(np.zeros((n, h_other.shape[1]))), has_neighbors

    left = ad.gather_rows(ad.matmul(h_target, weight), centers)
    right = ad.gather_rows(h_other, others)
    scores = ad.activation(ad.sum(ad.mul(left, right), axis=1), score_act)
    alpha = ad.segment_softmax(scores, np.unique(indptr))
    weighted = ad.mul(ad.reshape(alpha, (-1, 1)), right)
    z = ad.activation(ad.segment_sum(weighted, indptr), agg_act)
    if not has_neighbors.all():
        z = ad.mul(z, has_neighbors.astype(np.float64)[:, None])
    return z, has_neighbors


def semantic_fuse(groups, queries, weight, bias, act: str = "tanh") -> tuple[Tensor, Tensor]:
    """Type-level attention fusion; returns (Z_attr, beta)."""
    return semantic_attention(groups, queries, weight, bias, act)


# ---------------------------------------------------------------- full view


@dataclass
class AttrInputs:
    """Attribute-derived structure that stays fixed during training."""

    node_types: tuple[str, ...]
    target_type: str
    features: dict[str, np.ndarray]
    homogeneous: dict[str, sp.csr_matrix]
    thresholds: dict[str, float]


def prepare_attr_inputs(g: HeteroGraph, eps_f: Mapping[str, float]) -> AttrInputs:
    homo = {t: build_homogeneous_graph(g.attributes[t], eps_f[t]) for t in g.node_types}
    return AttrInputs(
        node_types=g.node_types,
        target_type=g.target_type,
        features={t: np.asarray(g.attributes[t]) for t in g.node_types},
        homogeneous=homo,
        thresholds=dict(eps_f),
    )


def init_attr_params(inputs: AttrInputs, hidden: int, out_dim: int, rng: np.random.Generator) -> dict[str, Tensor]:
    p: dict[str, Tensor] = {}
    for t in inputs.node_types:
        d = inputs.features[t].shape[1]
        p[f"attr.sage.{t}.W"] = glorot(rng, 2 * d, hidden)
        p[f"attr.sage.{t}.b"] = fan_in_bias(rng, 2 * d, hidden)
    for t in inputs.node_types:
        p[f"attr.proj.{t}"] = glorot(rng, hidden, hidden)
    p["attr.att.W"] = glorot(rng, hidden, hidden)
    p["attr.sem.W"] = glorot(rng, hidden, hidden)
    p["attr.sem.b"] = fan_in_bias(rng, hidden, hidden)
    for t in inputs.node_types:
        p[f"attr.sem.q.{t}"] = glorot_vector(rng, hidden)
    p["attr.out.W"] = glorot(rng, hidden, out_dim)
    p["attr.out.b"] = fan_in_bias(rng, hidden, out_dim)
    for name, t in p.items():
        t.name = name
    return p


@dataclass
class AttrViewOutput:
    z: Tensor
    beta: Tensor
    hetero_edges: dict[str, tuple[np.ndarray, np.ndarray]]
    no_neighbors: dict[str, np.ndarray] = field(default_factory=dict)


def attr_forward(
    params: Mapping[str, Tensor],
    inputs: AttrInputs,
    eps_r: Mapping[str, float],
    activations: Mapping[str, str] | None = None,
    hetero_edges: Mapping[str, tuple[np.ndarray, np.ndarray]] | None = None,
) -> AttrViewOutput:
    """Full attribute-guided forward pass.

    Heterogeneous edges are regenerated from the current representations
    unless ``hetero_edges`` pins them (gradient checks need a fixed structure).
    """
    act = {"encoder": "elu", "attention": "leaky_relu", "aggregate": "elu", "semantic": "tanh"}
    act.update(activations or {})
    t = inputs.target_type
    hs = {
        f: sage_encode(inputs.homogeneous[f], inputs.features[f],
                       params[f"attr.sage.{f}.W"], params[f"attr.sage.{f}.b"], act["encoder"])
        for f in inputs.node_types
    }
    projected_t = ad.matmul(hs[t], params[f"attr.proj.{t}"])
    groups, queries = [hs[t]], [params[f"attr.sem.q.{t}"]]
    edges_used, flagged = {}, {}
    for f in inputs.node_types:
        if f == t:
            continue
        projected_f = ad.matmul(hs[f], params[f"attr.proj.{f}"])
        if hetero_edges is not None and f in hetero_edges:
            centers, others = hetero_edges[f]
        else:
            centers, others = build_hetero_edges(
                hs[t].data, hs[f].data, params[f"attr.proj.{t}"].data, params[f"attr.proj.{f}"].data, eps_r[f]
            )
        z_f, has = hetero_attention_aggregate(
            projected_t, projected_f, params["attr.att.W"], centers, others, act["attention"], act["aggregate"]
        )
        edges_used[f] = (centers, others)
        flagged[f] = ~has
        groups.append(z_f)
        queries.append(params[f"attr.sem.q.{f}"])
    fused, beta = semantic_fuse(groups, queries, params["attr.sem.W"], params["attr.sem.b"], act["semantic"])
    z = linear(fused, params["attr.out.W"], params["attr.out.b"])
    return AttrViewOutput(z=z, beta=beta, hetero_edges=edges_used, no_neighbors=flagged)
