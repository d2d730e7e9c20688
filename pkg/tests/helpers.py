"""Independent oracles and fixture builders shared by the test modules."""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

from hgcl.autodiff import Tensor
from hgcl.graph import HeteroGraph, MetaPath, build_graph

FD_STEP = 1e-5
FD_TOL = 1e-4


# ---------------------------------------------------------------- finite differences


def numerical_grad(f: Callable[[], float], x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central differences of the scalar ``f()`` w.r.t. ``x`` (mutated in place, then restored)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max elementwise |a - n| / max(|a| + |n|, 1e-3); the floor avoids blow-ups near zero."""
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-3)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def gradcheck(build: Callable[[], Tensor], params: Sequence[Tensor]) -> float:
    """Worst relative error between backprop and central differences over ``params``."""
    from hgcl import autodiff as ad

    for p in params:
        p.zero_grad()
    out = build()
    ad.backward(out)
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        numeric = numerical_grad(lambda: float(build().data), p.data)
        worst = max(worst, relative_error(a, numeric))
    return worst


# ---------------------------------------------------------------- meta-path oracle


def _steps(g: HeteroGraph, relation: str, a: str, b: str) -> dict[int, set[int]]:
    """Adjacency lists from type ``a`` to type ``b`` built by scanning the raw edge list."""
    r = g.relation(relation)
    out: dict[int, set[int]] = {i: set() for i in range(g.node_counts[a])}
    for s, d in r.edges.tolist():
        if r.source == r.target:
            out[s].add(d)
            out[d].add(s)
        elif (r.source, r.target) == (a, b):
            out[s].add(d)
        else:
            out[d].add(s)
    return out


def brute_force_metapath_neighbors(g: HeteroGraph, m: MetaPath) -> list[list[int]]:
    """Enumerate every node sequence instantiating ``m`` by depth-first search."""
    steps = [_steps(g, rel, m.type_sequence[k], m.type_sequence[k + 1])
             for k, rel in enumerate(m.relation_sequence)]
    result = []
    for i in range(g.num_targets):
        reached = {i}
        stack = [(i, 0)]
        while stack:
            node, depth = stack.pop()
            if depth == len(steps):
                reached.add(node)
                continue
            for nxt in steps[depth][node]:
                stack.append((nxt, depth + 1))
        result.append(sorted(reached))
    return result


def random_hetero_graph(seed: int, max_nodes: int = 50) -> HeteroGraph:
    """Target type P with auxiliaries A and S, relations P-A, P-S and a same-type P-P.

    Meta-paths cover length 1, 2 and 4 compositions including a non-palindromic one.
    """
    rng = np.random.default_rng(seed)
    n = {t: int(rng.integers(1, max_nodes + 1)) for t in ("P", "A", "S")}
    attrs = {t: rng.normal(size=(n[t], 3)) for t in n}

    def edges(a, b, p):
        mask = rng.random((n[a], n[b])) < p
        return np.argwhere(mask)

    rels = [
        ("P-A", "P", "A", edges("P", "A", rng.uniform(0.0, 0.15))),
        ("P-S", "P", "S", edges("P", "S", rng.uniform(0.0, 0.1))),
        ("P-P", "P", "P", edges("P", "P", rng.uniform(0.0, 0.05))),
    ]
    mps = [
        MetaPath("PAP", ("P", "A", "P"), ("P-A", "P-A")),
        MetaPath("PSP", ("P", "S", "P"), ("P-S", "P-S")),
        MetaPath("PP", ("P", "P"), ("P-P",)),
        MetaPath("PAPSP", ("P", "A", "P", "S", "P"), ("P-A", "P-A", "P-S", "P-S")),
    ]
    labels = rng.integers(0, 3, size=n["P"])
    return build_graph(["P", "A", "S"], attrs, rels, "P", labels=labels, metapaths=mps, name=f"rand{seed}")


# ---------------------------------------------------------------- sampling oracle


def brute_force_samples(sim: np.ndarray, corr: np.ndarray, eps_a: float, eps_t: float):
    """Per-pair evaluation of the positive rule; returns (positives, negatives) as lists of sets."""
    n = sim.shape[0]
    pos, neg = [], []
    for i in range(n):
        p, q = set(), set()
        for j in range(n):
            if j == i:
                continue
            if sim[i][j] >= eps_a and corr[i][j] >= eps_t:
                p.add(j)
            else:
                q.add(j)
        pos.append(p)
        neg.append(q)
    return pos, neg


def brute_force_correlation(g: HeteroGraph, deltas: dict[str, float]) -> np.ndarray:
    n = g.num_targets
    t = np.zeros((n, n))
    for m in g.metapaths:
        for i, nbrs in enumerate(brute_force_metapath_neighbors(g, m)):
            for j in nbrs:
                t[i, j] += deltas[m.name]
    return t


# ---------------------------------------------------------------- loss oracle


def scalar_loss(z: np.ndarray, z_other: np.ndarray, positives: Sequence[set], tau: float) -> float:
    """Per-node loops over the definition with math.exp; no vectorisation shared with the library."""
    import math

    def cos(a, b):
        return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))

    n = z.shape[0]
    total = 0.0
    for i in range(n):
        num = sum(math.exp(cos(z[i], z[j]) / tau) for j in positives[i])
        num += sum(math.exp(cos(z[i], z_other[j]) / tau) for j in set(positives[i]) | {i})
        den = sum(math.exp(cos(z[i], z[j]) / tau) for j in range(n) if j != i)
        den += sum(math.exp(cos(z[i], z_other[j]) / tau) for j in range(n))
        total += -math.log(num / den)
    return total / n


def all_pairs(n: int):
    return [(i, j) for i, j in itertools.product(range(n), repeat=2) if i != j]
