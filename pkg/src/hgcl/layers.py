"""Parameter initialisation and the building blocks shared by both view encoders."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, name: str | None = None) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)), requires_grad=True, name=name)


def glorot_vector(rng: np.random.Generator, size: int, name: str | None = None) -> Tensor:
    limit = np.sqrt(6.0 / (size + 1))
    return Tensor(rng.uniform(-limit, limit, size=size), requires_grad=True, name=name)


def fan_in_bias(rng: np.random.Generator, fan_in: int, size: int, name: str | None = None) -> Tensor:
    # nonzero so all-zero inputs (fully masked attributes) still give nonzero embeddings
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return Tensor(rng.uniform(-bound, bound, size=size), requires_grad=True, name=name)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    y = ad.matmul(x, weight)
    return y if bias is None else ad.add(y, bias)


def semantic_attention(
    groups: Sequence[Tensor],
    queries: Sequence[Tensor],
    weight: Tensor,
    bias: Tensor,
    act: str = "tanh",
) -> tuple[Tensor, Tensor]:
    """Fuse same-shaped representation groups with softmax group weights.

    Group ``k`` scores ``mean_i q_k . act(z_i W + b)``; the weights are the
    softmax of the scores over groups and the output is the weighted sum.
    Returns ``(fused, weights)``.
    """
    if not groups:
        raise ValueError("semantic_attention: need at least one group")
    if len(groups) != len(queries):
        raise ValueError("semantic_attention: one query vector per group is required")
    shape = groups[0].shape
    for z in groups:
        if z.shape != shape:
            raise ValueError(f"semantic_attention: group shapes differ ({z.shape} vs {shape})")
    every_row = np.ones(shape[0], dtype=bool)
    scores = []
    for z, q in zip(groups, queries):
        hidden = ad.activation(linear(z, weight, bias), act)
        pooled = ad.masked_mean_rows(hidden, every_row)
        scores.append(ad.reshape(ad.sum(ad.mul(pooled, q)), (1,)))
    weights = ad.softmax(ad.concat(scores, axis=0))
    fused = None
    for k, z in enumerate(groups):
        term = ad.mul(ad.gather_rows(weights, [k]), z)
        fused = term if fused is None else ad.add(fused, term)
    return fused, weights
