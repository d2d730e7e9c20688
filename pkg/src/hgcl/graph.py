"""Heterogeneous graph model, dataset directory I/O, meta-path expansion and perturbation.

Dataset directory layout::

    schema.json            node types, relations, target type, meta-paths
    nodes_<type>.csv       index[,label],f0,f1,...   (header row required)
    edges_<relation>.csv   source,target             (header row required)

All indices are 0-based. Relations are stored directed as given; a meta-path
may traverse a relation in either direction.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp


class DatasetError(ValueError):
    """Base class for dataset validation failures; message names file and line."""

    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None):
        self.path = str(path) if path is not None else None
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class MissingFileError(DatasetError):
    pass


class DimensionMismatchError(DatasetError):
    pass


class IndexOutOfRangeError(DatasetError):
    pass


class NonFiniteAttributeError(DatasetError):
    pass


class SchemaError(DatasetError):
    pass


@dataclass(frozen=True)
class Relation:
    name: str
    source: str
    target: str
    edges: np.ndarray  # (E, 2) int64, columns = (source index, target index)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])


@dataclass(frozen=True)
class MetaPath:
    name: str
    type_sequence: tuple[str, ...]
    relation_sequence: tuple[str, ...]

    @property
    def length(self) -> int:
        return len(self.relation_sequence)

    def is_palindromic(self) -> bool:
        return (self.type_sequence == self.type_sequence[::-1]
                and self.relation_sequence == self.relation_sequence[::-1])

    def to_dict(self) -> dict:
        return {"name": self.name, "types": list(self.type_sequence), "relations": list(self.relation_sequence)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "MetaPath":
        return cls(d["name"], tuple(d["types"]), tuple(d["relations"]))


@dataclass(frozen=True)
class HeteroGraph:
    node_types: tuple[str, ...]
    node_counts: dict[str, int]
    attributes: dict[str, np.ndarray]
    relations: tuple[Relation, ...]
    target_type: str
    labels: np.ndarray | None = None
    metapaths: tuple[MetaPath, ...] = ()
    name: str = "graph"

    def __post_init__(self):
        for x in self.attributes.values():
            x.setflags(write=False)
        for r in self.relations:
            r.edges.setflags(write=False)
        if self.labels is not None:
            self.labels.setflags(write=False)
        validate_graph(self)

    @property
    def num_nodes(self) -> int:
        return int(sum(self.node_counts.values()))

    @property
    def num_edges(self) -> int:
        return int(sum(r.num_edges for r in self.relations))

    @property
    def num_targets(self) -> int:
        return self.node_counts[self.target_type]

    def relation(self, name: str) -> Relation:
        for r in self.relations:
            if r.name == name:
                return r
        raise KeyError(f"unknown relation {name!r}")

    def metapath(self, name: str) -> MetaPath:
        for m in self.metapaths:
            if m.name == name:
                return m
        raise KeyError(f"unknown meta-path {name!r}")


def build_graph(
    node_types: Sequence[str],
    attributes: Mapping[str, np.ndarray],
    relations: Iterable[tuple[str, str, str, np.ndarray]],
    target_type: str,
    labels=None,
    metapaths: Iterable[MetaPath] = (),
    name: str = "graph",
) -> HeteroGraph:
    """Convenience constructor from plain arrays; relations are (name, source, target, edges)."""
    attrs = {t: np.array(attributes[t], dtype=np.float64, ndmin=2) for t in node_types}
    rels = tuple(
        Relation(n, s, d, np.asarray(e, dtype=np.int64).reshape(-1, 2).copy()) for n, s, d, e in relations
    )
    return HeteroGraph(
        node_types=tuple(node_types),
        node_counts={t: int(attrs[t].shape[0]) for t in node_types},
        attributes=attrs,
        relations=rels,
        target_type=target_type,
        labels=None if labels is None else np.asarray(labels, dtype=np.int64).copy(),
        metapaths=tuple(metapaths),
        name=name,
    )


def validate_graph(g: HeteroGraph) -> None:
    types = set(g.node_types)
    if len(types) != len(g.node_types):
        raise SchemaError("duplicate node type names")
    if g.target_type not in types:
        raise SchemaError(f"target type {g.target_type!r} is not a declared node type")
    if len(g.node_types) + len({r.name for r in g.relations}) < 2:
        raise SchemaError("a heterogeneous graph needs |node types| + |edge types| >= 2")
    for t in g.node_types:
        n = g.node_counts.get(t)
        if n is None or n < 0:
            raise SchemaError(f"missing or negative node count for type {t!r}")
        x = g.attributes.get(t)
        if x is None or x.ndim != 2 or x.shape[0] != n:
            raise DimensionMismatchError(f"attribute matrix for type {t!r} must have {n} rows")
        if not np.all(np.isfinite(x)):
            raise NonFiniteAttributeError(f"attribute matrix for type {t!r} contains NaN/Inf")
    names = set()
    for r in g.relations:
        if r.name in names:
            raise SchemaError(f"duplicate relation name {r.name!r}")
        names.add(r.name)
        if r.source not in types or r.target not in types:
            raise SchemaError(f"relation {r.name!r} references an unknown node type")
        e = r.edges
        if e.ndim != 2 or e.shape[1] != 2:
            raise DimensionMismatchError(f"relation {r.name!r} edges must be an (E, 2) array")
        if e.size:
            if e[:, 0].min() < 0 or e[:, 0].max() >= g.node_counts[r.source]:
                raise IndexOutOfRangeError(f"relation {r.name!r}: source index out of range")
            if e[:, 1].min() < 0 or e[:, 1].max() >= g.node_counts[r.target]:
                raise IndexOutOfRangeError(f"relation {r.name!r}: target index out of range")
    if g.labels is not None and g.labels.shape != (g.num_targets,):
        raise DimensionMismatchError(
            f"labels must cover exactly the {g.num_targets} nodes of target type {g.target_type!r}"
        )
    for m in g.metapaths:
        validate_metapath(g, m)


def validate_metapath(g: HeteroGraph, m: MetaPath) -> None:
    if m.length < 1 or len(m.type_sequence) != m.length + 1:
        raise SchemaError(f"meta-path {m.name!r}: needs l >= 1 relations and l + 1 types")
    if m.type_sequence[0] != g.target_type or m.type_sequence[-1] != g.target_type:
        raise SchemaError(f"meta-path {m.name!r} must start and end at target type {g.target_type!r}")
    for k, rel_name in enumerate(m.relation_sequence):
        a, b = m.type_sequence[k], m.type_sequence[k + 1]
        try:
            r = g.relation(rel_name)
        except KeyError:
            raise SchemaError(f"meta-path {m.name!r} references unknown relation {rel_name!r}") from None
        if (r.source, r.target) not in ((a, b), (b, a)):
            raise SchemaError(
                f"meta-path {m.name!r}: relation {rel_name!r} ({r.source}->{r.target}) does not connect {a}->{b}"
            )


# ---------------------------------------------------------------- statistics


def density(g: HeteroGraph) -> float:
    """Total edges over squared total node count."""
    n = g.num_nodes
    return g.num_edges / (n * n) if n else 0.0


def density_from_counts(node_counts: Mapping[str, int], edge_counts: Mapping[str, int]) -> float:
    n = sum(node_counts.values())
    return sum(edge_counts.values()) / (n * n) if n else 0.0


def format_density(d: float, decimals: int = 5) -> str:
    # truncation, not rounding: Yelp's 0.0023555 is tabulated as 0.00235
    q = 10**decimals
    return f"{math.floor(d * q + 1e-9) / q:.{decimals}f}"


def graph_statistics(g: HeteroGraph) -> dict:
    return {
        "name": g.name,
        "node_counts": {t: g.node_counts[t] for t in g.node_types},
        "edge_counts": {r.name: r.num_edges for r in g.relations},
        "metapaths": [m.name for m in g.metapaths],
        "target_type": g.target_type,
        "density": density(g),
    }


def load_statistics(path: str | Path) -> dict:
    """Read a counts-only statistics JSON (name, node_counts, edge_counts, metapaths)."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise MissingFileError("statistics file not found", path) from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    for key in ("node_counts", "edge_counts"):
        if key not in raw:
            raise SchemaError(f"missing key {key!r}", path)
    stats = {
        "name": raw.get("name", path.stem),
        "node_counts": {k: int(v) for k, v in raw["node_counts"].items()},
        "edge_counts": {k: int(v) for k, v in raw["edge_counts"].items()},
        "metapaths": list(raw.get("metapaths", [])),
        "target_type": raw.get("target_type"),
    }
    stats["density"] = density_from_counts(stats["node_counts"], stats["edge_counts"])
    return stats


def format_statistics_table(rows: Sequence[Mapping]) -> str:
    """Render dataset statistics as Datasets | Nodes | Edges | Meta-paths | Density."""
    header = ["Datasets", "Nodes", "Edges", "Meta-paths", "Density"]
    cells = []
    for s in rows:
        nodes = [f"{t}:{n}" for t, n in s["node_counts"].items()]
        edges = [f"{r}:{n}" for r, n in s["edge_counts"].items()]
        mps = list(s["metapaths"])
        height = max(len(nodes), len(edges), len(mps), 1)
        pad = lambda xs: xs + [""] * (height - len(xs))  # noqa: E731
        block = list(zip(
            pad([s["name"]]), pad(nodes), pad(edges), pad(mps), pad([format_density(s["density"])])
        ))
        cells.append(block)
    widths = [len(h) for h in header]
    for block in cells:
        for line in block:
            widths = [max(w, len(c)) for w, c in zip(widths, line)]
    fmt = lambda line: "| " + " | ".join(c.ljust(w) for c, w in zip(line, widths)) + " |"  # noqa: E731
    rule = "+-" + "-+-".join("-" * w for w in widths) + "-+"
    out = [rule, fmt(header), rule]
    for block in cells:
        out.extend(fmt(line) for line in block)
        out.append(rule)
    return "\n".join(out)


# ---------------------------------------------------------------- meta-paths


@dataclass(frozen=True)
class MetaPathAdjacency:
    """CSR neighbor sets over target nodes; row ``i`` lists N_i sorted ascending."""

    metapath: MetaPath
    indptr: np.ndarray
    indices: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.indptr.size - 1

    @property
    def num_pairs(self) -> int:
        return int(self.indices.size)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def neighbor_sets(self) -> list[list[int]]:
        return [self.neighbors(i).tolist() for i in range(self.num_nodes)]

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(center, neighbor) pairs grouped by center, in CSR order."""
        centers = np.repeat(np.arange(self.num_nodes), np.diff(self.indptr))
        return centers, self.indices

    def to_dense(self) -> np.ndarray:
        n = self.num_nodes
        a = np.zeros((n, n), dtype=bool)
        c, j = self.edge_arrays()
        a[c, j] = True
        return a


def relation_matrix(g: HeteroGraph, relation: str, from_type: str, to_type: str) -> sp.csr_matrix:
    """Boolean adjacency from ``from_type`` rows to ``to_type`` columns along ``relation``."""
    r = g.relation(relation)
    e = r.edges
    data = np.ones(e.shape[0], dtype=np.int64)
    fwd = sp.csr_matrix((data, (e[:, 0], e[:, 1])), shape=(g.node_counts[r.source], g.node_counts[r.target]))
    if r.source == r.target:
        # same-type relations have no inherent direction inside a meta-path
        m = fwd + fwd.T
    elif (r.source, r.target) == (from_type, to_type):
        m = fwd
    elif (r.target, r.source) == (from_type, to_type):
        m = fwd.T
    else:
        raise SchemaError(f"relation {relation!r} does not connect {from_type}->{to_type}")
    m = sp.csr_matrix(m)
    m.data[:] = 1
    return m


def meta_path_neighbors(g: HeteroGraph, m: MetaPath) -> MetaPathAdjacency:
    """Target nodes reachable from each target node along ``m``, self included."""
    validate_metapath(g, m)
    reach = None
    for k, rel in enumerate(m.relation_sequence):
        step = relation_matrix(g, rel, m.type_sequence[k], m.type_sequence[k + 1])
        reach = step if reach is None else reach @ step
        reach.data[:] = 1  # membership only, not path counts
        reach.eliminate_zeros()
    n = g.num_targets
    reach = sp.csr_matrix(reach + sp.identity(n, dtype=np.int64, format="csr"))
    reach.sum_duplicates()
    reach.sort_indices()
    return MetaPathAdjacency(m, reach.indptr.astype(np.int64), reach.indices.astype(np.int64))


# ---------------------------------------------------------------- perturbation


def perturb_edges(g: HeteroGraph, p: float, seed: int) -> HeteroGraph:
    """Drop each edge independently with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"edge deletion probability must be in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    rels = []
    for r in g.relations:
        keep = rng.random(r.num_edges) >= p
        rels.append(replace(r, edges=r.edges[keep].copy()))
    return replace(g, relations=tuple(rels), attributes=dict(g.attributes))


def mask_attributes(g: HeteroGraph, ratio: float, seed: int) -> HeteroGraph:
    """Zero a random ``floor(ratio * dim)`` subset of each node's attribute dimensions."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"masking ratio must be in [0, 1], got {ratio}")
    rng = np.random.default_rng(seed)
    attrs = {}
    for t in g.node_types:
        x = np.array(g.attributes[t])
        n, dim = x.shape
        k = math.floor(ratio * dim + 1e-9)
        if k and n:
            chosen = np.argsort(rng.random((n, dim)), axis=1)[:, :k]
            np.put_along_axis(x, chosen, 0.0, axis=1)
        attrs[t] = x
    return replace(g, attributes=attrs)


# ---------------------------------------------------------------- dataset I/O


def _read_csv(path: Path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    if not path.is_file():
        raise MissingFileError("required file not found", path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DimensionMismatchError("missing header row", path, 1) from None
        rows = [(reader.line_num, row) for row in reader if row]
    return header, rows


def _parse_int(text: str, path: Path, line: int, what: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise DimensionMismatchError(f"{what} {text!r} is not an integer", path, line) from None


def _load_nodes(path: Path, node_type: str, is_target: bool):
    header, rows = _read_csv(path)
    if not header or header[0] != "index":
        raise DimensionMismatchError("first header column must be 'index'", path, 1)
    has_label = len(header) > 1 and header[1] == "label"
    first_feature = 2 if has_label else 1
    dim = len(header) - first_feature
    x = np.empty((len(rows), dim), dtype=np.float64)
    labels = np.empty(len(rows), dtype=np.int64) if has_label else None
    for k, (line, row) in enumerate(rows):
        if len(row) != len(header):
            raise DimensionMismatchError(f"expected {len(header)} columns, found {len(row)}", path, line)
        idx = _parse_int(row[0], path, line, "node index")
        if idx != k:
            raise IndexOutOfRangeError(f"node index {idx} out of sequence (expected {k})", path, line)
        if has_label:
            labels[k] = _parse_int(row[1], path, line, "label")
        try:
            vals = [float(v) for v in row[first_feature:]]
        except ValueError:
            raise DimensionMismatchError("non-numeric attribute value", path, line) from None
        if not all(math.isfinite(v) for v in vals):
            raise NonFiniteAttributeError("NaN/Inf attribute value", path, line)
        x[k] = vals
    if not is_target:
        labels = None
    return x, labels


def _load_edges(path: Path, n_src: int, n_dst: int) -> np.ndarray:
    header, rows = _read_csv(path)
    if len(header) != 2:
        raise DimensionMismatchError("edge file header must have exactly two columns", path, 1)
    edges = np.empty((len(rows), 2), dtype=np.int64)
    for k, (line, row) in enumerate(rows):
        if len(row) != 2:
            raise DimensionMismatchError(f"expected 2 columns, found {len(row)}", path, line)
        s = _parse_int(row[0], path, line, "source index")
        d = _parse_int(row[1], path, line, "destination index")
        if not 0 <= s < n_src:
            raise IndexOutOfRangeError(f"source index out of range: {s} (count {n_src})", path, line)
        if not 0 <= d < n_dst:
            raise IndexOutOfRangeError(f"destination index out of range: {d} (count {n_dst})", path, line)
        edges[k] = (s, d)
    return edges


def load_graph(directory: str | Path) -> HeteroGraph:
    directory = Path(directory)
    schema_path = directory / "schema.json"
    if not schema_path.is_file():
        raise MissingFileError("required file not found", schema_path)
    try:
        schema = json.loads(schema_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg}", schema_path, exc.lineno) from None
    for key in ("node_types", "relations", "target_type"):
        if key not in schema:
            raise SchemaError(f"missing key {key!r}", schema_path)
    node_types = list(schema["node_types"])
    target = schema["target_type"]
    if target not in node_types:
        raise SchemaError(f"target type {target!r} is not a declared node type", schema_path)

    attrs, labels = {}, None
    for t in node_types:
        x, lab = _load_nodes(directory / f"nodes_{t}.csv", t, t == target)
        attrs[t] = x
        if lab is not None:
            labels = lab
    counts = {t: attrs[t].shape[0] for t in node_types}
    declared = schema.get("node_counts")
    if declared:
        for t, n in declared.items():
            if counts.get(t) != int(n):
                raise DimensionMismatchError(
                    f"schema declares {n} nodes of type {t!r}, nodes file has {counts.get(t)}", schema_path
                )

    relations = []
    for rd in schema["relations"]:
        name, s, d = rd["name"], rd["source"], rd["target"]
        if s not in counts or d not in counts:
            raise SchemaError(f"relation {name!r} references an unknown node type", schema_path)
        edges = _load_edges(directory / f"edges_{name}.csv", counts[s], counts[d])
        relations.append(Relation(name, s, d, edges))

    metapaths = tuple(MetaPath.from_dict(m) for m in schema.get("metapaths", []))
    try:
        return HeteroGraph(
            node_types=tuple(node_types),
            node_counts=counts,
            attributes=attrs,
            relations=tuple(relations),
            target_type=target,
            labels=labels,
            metapaths=metapaths,
            name=schema.get("name", directory.name),
        )
    except DatasetError as exc:
        if exc.path is None:
            raise type(exc)(str(exc), schema_path) from None
        raise


def save_graph(g: HeteroGraph, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    schema = {
        "name": g.name,
        "node_types": list(g.node_types),
        "target_type": g.target_type,
        "node_counts": {t: g.node_counts[t] for t in g.node_types},
        "relations": [{"name": r.name, "source": r.source, "target": r.target} for r in g.relations],
        "metapaths": [m.to_dict() for m in g.metapaths],
    }
    (directory / "schema.json").write_text(json.dumps(schema, indent=2) + "\n", encoding="utf-8")
    for t in g.node_types:
        x = g.attributes[t]
        with_label = t == g.target_type and g.labels is not None
        with (directory / f"nodes_{t}.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["index"] + (["label"] if with_label else []) + [f"f{k}" for k in range(x.shape[1])])
            for i in range(x.shape[0]):
                w.writerow([i] + ([int(g.labels[i])] if with_label else []) + [repr(float(v)) for v in x[i]])
    for r in g.relations:
        with (directory / f"edges_{r.name}.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["source", "target"])
            w.writerows(r.edges.tolist())
