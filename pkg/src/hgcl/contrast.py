"""Positive/negative sample selection and the reciprocal contrastive loss."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import MetaPathAdjacency

SAMPLING_MODES = ("joint", "topology", "attribute")


def topological_correlation(i: int, j: int, deltas: Mapping[str, float],
                            adjacencies: Sequence[MetaPathAdjacency]) -> float:
    """Weighted count of meta-paths under which ``j`` neighbors ``i``."""
    total = 0.0
    for adj in adjacencies:
        nbrs = adj.neighbors(i)
        k = np.searchsorted(nbrs, j)
        if k < nbrs.size and nbrs[k] == j:
            total += deltas[adj.metapath.name]
    return total


def correlation_matrix(adjacencies: Sequence[MetaPathAdjacency], deltas: Mapping[str, float]) -> np.ndarray:
    if not adjacencies:
        raise ValueError("correlation_matrix: no meta-path adjacencies")
    n = adjacencies[0].num_nodes
    t = np.zeros((n, n))
    for adj in adjacencies:
        delta = deltas[adj.metapath.name]
        if not 0.0 <= delta <= 1.0:
            raise ValueError(f"meta-path weight for {adj.metapath.name!r} must be in [0, 1], got {delta}")
        c, j = adj.edge_arrays()
        t[c, j] += delta
    return t


@dataclass
class SampleSets:
    """Per-node positives as a boolean matrix; every other node is a negative."""

    positive: np.ndarray  # (N, N) bool, zero diagonal
    similarity: np.ndarray
    correlation: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.positive.shape[0]

    @property
    def negative(self) -> np.ndarray:
        neg = ~self.positive
        np.fill_diagonal(neg, False)
        return neg

    def positives(self, i: int) -> list[int]:
        return np.flatnonzero(self.positive[i]).tolist()

    def negatives(self, i: int) -> list[int]:
        row = ~self.positive[i]
        row[i] = False
        return np.flatnonzero(row).tolist()

    def counts(self) -> tuple[np.ndarray, np.ndarray]:
        pos = self.positive.sum(axis=1)
        return pos, (self.num_nodes - 1) - pos

    def to_csv(self, path: str | Path) -> None:
        """Diagnostic export: node, positives, negatives."""
        pos, neg = self.counts()
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "positives", "negatives"])
            for i in range(self.num_nodes):
                w.writerow([i, int(pos[i]), int(neg[i])])


def select_samples(similarity: np.ndarray, correlation: np.ndarray, eps_a: float, eps_t: float,
                   mode: str = "joint") -> SampleSets:
    """Positives need similarity >= eps_a and correlation >= eps_t (``joint``).

    ``topology`` / ``attribute`` modes keep only one of the two conditions.
    """
    similarity = np.asarray(similarity, dtype=np.float64)
    correlation = np.asarray(correlation, dtype=np.float64)
    if similarity.ndim != 2 or similarity.shape[0] != similarity.shape[1] or similarity.shape != correlation.shape:
        raise ValueError("select_samples: similarity and correlation must be equal-sized square matrices")
    if mode not in SAMPLING_MODES:
        raise ValueError(f"unknown sampling mode {mode!r}; choose from {SAMPLING_MODES}")
    attr_ok = similarity >= eps_a
    topo_ok = correlation >= eps_t
    if mode == "joint":
        pos = attr_ok & topo_ok
    elif mode == "topology":
        pos = topo_ok
    else:
        pos = attr_ok
    pos = pos.copy()
    np.fill_diagonal(pos, False)
    return SampleSets(positive=pos, similarity=similarity, correlation=correlation)


def view_contrastive_loss(z: Tensor, z_other: Tensor, positive: np.ndarray, tau: float) -> Tensor:
    """Per-view contrastive loss, averaged over nodes.

    For node i the numerator sums exp-similarities to its intra-view positives
    and to its cross-view positives plus its own cross-view counterpart; the
    denominator sums over every other node in both views plus the cross-view
    counterpart. Similarities are cosine / tau.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    if z.shape != z_other.shape:
        raise ValueError(f"view representations must be row-aligned: {z.shape} vs {z_other.shape}")
    n = z.shape[0]
    positive = np.asarray(positive, dtype=bool)
    if positive.shape != (n, n):
        raise ValueError(f"positive mask must be ({n}, {n}), got {positive.shape}")
    eye = np.eye(n)
    pos = positive.astype(np.float64) * (1.0 - eye)
    zn = ad.l2_normalize_rows(z)
    zo = ad.l2_normalize_rows(z_other)
    intra = ad.exp(ad.scale(ad.matmul(zn, ad.transpose(zn)), 1.0 / tau))
    cross = ad.exp(ad.scale(ad.matmul(zn, ad.transpose(zo)), 1.0 / tau))
    num = ad.add(ad.sum(ad.mul(intra, pos), axis=1), ad.sum(ad.mul(cross, pos + eye), axis=1))
    den = ad.add(ad.sum(ad.mul(intra, 1.0 - eye), axis=1), ad.sum(cross, axis=1))
    return ad.mean(ad.sub(ad.log(den), ad.log(num)))


def final_loss(z_topo: Tensor, z_attr: Tensor, samples: SampleSets | np.ndarray, tau: float,
               lam: float) -> Tensor:
    """lam * loss(topo vs attr) + (1 - lam) * loss(attr vs topo)."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"view-balance weight must be in [0, 1], got {lam}")
    positive = samples.positive if isinstance(samples, SampleSets) else samples
    a = view_contrastive_loss(z_topo, z_attr, positive, tau)
    b = view_contrastive_loss(z_attr, z_topo, positive, tau)
    return ad.add(ad.scale(a, lam), ad.scale(b, 1.0 - lam))
