"""Configuration, preprocessing, the training loop, checkpoints and embedding export."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from . import autodiff as ad
from .attr_view import AttrInputs, attr_forward, cosine_similarity_matrix, init_attr_params, prepare_attr_inputs
from .autodiff import Tensor
from .contrast import SAMPLING_MODES, SampleSets, correlation_matrix, final_loss, select_samples, view_contrastive_loss
from .graph import HeteroGraph, MetaPathAdjacency, meta_path_neighbors
from .optim import Adam
from .seeding import rng_for
from .topo_view import init_topo_params, topo_forward

log = logging.getLogger(__name__)

VIEWS = ("both", "topo", "attr")


class ConfigError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 200
    lr: float = 1e-4
    hidden_dim: int = 128
    out_dim: int = 64
    tau: float = 0.4
    lam: float = 0.5
    eps_a: float = 0.5
    eps_t: float = 1.0
    # a float applies to every node type; a mapping overrides per type
    eps_f: float | dict[str, float] = 0.5
    eps_r: float | dict[str, float] = 0.5
    # meta-paths missing from the mapping get default_delta
    deltas: dict[str, float] = field(default_factory=dict)
    default_delta: float = 1.0
    encoder_activation: str = "elu"
    attention_activation: str = "leaky_relu"
    aggregate_activation: str = "elu"
    semantic_activation: str = "tanh"
    seed: int = 0
    patience: int = 20
    min_rel_improvement: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    views: str = "both"
    sampling: str = "joint"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.epochs < 0 or self.patience < 0:
            raise ConfigError("epochs and patience must be nonnegative")
        if self.hidden_dim <= 0 or self.out_dim <= 0:
            raise ConfigError("dimensions must be positive")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lam must be in [0, 1]")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        for name in ("eps_f", "eps_r"):
            v = getattr(self, name)
            vals = v.values() if isinstance(v, Mapping) else [v]
            if any(x < 0 for x in vals):
                raise ConfigError(f"{name} thresholds must be nonnegative")
        if self.eps_t < 0:
            raise ConfigError("eps_t must be nonnegative")
        for k, d in {**self.deltas, "<default>": self.default_delta}.items():
            if not 0.0 <= d <= 1.0:
                raise ConfigError(f"meta-path weight {k!r} must be in [0, 1]")
        if self.views not in VIEWS:
            raise ConfigError(f"views must be one of {VIEWS}")
        if self.sampling not in SAMPLING_MODES:
            raise ConfigError(f"sampling must be one of {SAMPLING_MODES}")

    # per-type / per-meta-path lookups
    def eps_f_for(self, node_type: str) -> float:
        return float(self.eps_f.get(node_type, 0.5) if isinstance(self.eps_f, Mapping) else self.eps_f)

    def eps_r_for(self, node_type: str) -> float:
        return float(self.eps_r.get(node_type, 0.5) if isinstance(self.eps_r, Mapping) else self.eps_r)

    def delta_for(self, metapath: str) -> float:
        return float(self.deltas.get(metapath, self.default_delta))

    def activations(self) -> dict[str, str]:
        return {
            "encoder": self.encoder_activation,
            "attention": self.attention_activation,
            "aggregate": self.aggregate_activation,
            "semantic": self.semantic_activation,
        }

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(raw)

    @classmethod
    def compact(cls, **changes) -> "TrainConfig":
        """Per-view 32 dims so the concatenated embedding is 64 wide."""
        return cls(out_dim=32, **changes)


# ---------------------------------------------------------------- preprocessing


@dataclass
class Prepared:
    attr: AttrInputs
    adjacencies: list[MetaPathAdjacency]
    similarity: np.ndarray
    samples: SampleSets
    eps_r: dict[str, float]


def preprocess(g: HeteroGraph, cfg: TrainConfig) -> Prepared:
    """Everything that depends on the data but not on learnable parameters."""
    if not g.metapaths:
        raise ConfigError(f"graph {g.name!r} declares no meta-paths")
    eps_f = {t: cfg.eps_f_for(t) for t in g.node_types}
    eps_r = {t: cfg.eps_r_for(t) for t in g.node_types}
    adjs = [meta_path_neighbors(g, m) for m in g.metapaths]
    deltas = {m.name: cfg.delta_for(m.name) for m in g.metapaths}
    sim = cosine_similarity_matrix(g.attributes[g.target_type])
    corr = correlation_matrix(adjs, deltas)
    samples = select_samples(sim, corr, cfg.eps_a, cfg.eps_t, cfg.sampling)
    return Prepared(prepare_attr_inputs(g, eps_f), adjs, sim, samples, eps_r)


# ---------------------------------------------------------------- model


def init_params(g: HeteroGraph, cfg: TrainConfig, prepared: Prepared) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    if cfg.views in ("both", "attr"):
        params.update(init_attr_params(prepared.attr, cfg.hidden_dim, cfg.out_dim, rng_for(cfg.seed, "init.attr")))
    if cfg.views in ("both", "topo"):
        params.update(init_topo_params(
            g.attributes[g.target_type].shape[1], [m.name for m in g.metapaths], cfg.hidden_dim, cfg.out_dim,
            rng_for(cfg.seed, "init.topo"),
        ))
    return params


@dataclass
class ForwardResult:
    loss: Tensor
    z_attr: Tensor | None
    z_topo: Tensor | None
    beta: np.ndarray | None = None
    eta: np.ndarray | None = None


def forward(params: Mapping[str, Tensor], g: HeteroGraph, cfg: TrainConfig, prepared: Prepared,
            hetero_edges=None) -> ForwardResult:
    acts = cfg.activations()
    z_attr = z_topo = None
    beta = eta = None
    if cfg.views in ("both", "attr"):
        out = attr_forward(params, prepared.attr, prepared.eps_r, acts, hetero_edges)
        z_attr, beta = out.z, out.beta.data.copy()
    if cfg.views in ("both", "topo"):
        out = topo_forward(params, g.attributes[g.target_type], prepared.adjacencies, acts)
        z_topo, eta = out.z, out.eta.data.copy()
    pos = prepared.samples.positive
    if cfg.views == "both":
        loss = final_loss(z_topo, z_attr, pos, cfg.tau, cfg.lam)
    elif cfg.views == "topo":
        loss = view_contrastive_loss(z_topo, z_topo, pos, cfg.tau)
    else:
        loss = view_contrastive_loss(z_attr, z_attr, pos, cfg.tau)
    return ForwardResult(loss, z_attr, z_topo, beta, eta)


@dataclass
class TrainedModel:
    config: TrainConfig
    params: dict[str, np.ndarray]
    z_attr: np.ndarray | None
    z_topo: np.ndarray | None
    loss_history: list[float]
    beta: np.ndarray | None = None
    eta: np.ndarray | None = None
    stopped_early: bool = False

    @property
    def embeddings(self) -> np.ndarray:
        parts = [z for z in (self.z_attr, self.z_topo) if z is not None]
        return np.hstack(parts)


def train(
    g: HeteroGraph,
    cfg: TrainConfig,
    prepared: Prepared | None = None,
    on_epoch: Callable[[int, float], None] | None = None,
) -> TrainedModel:
    """Full-batch training; the loss is minimised with Adam."""
    prepared = prepared or preprocess(g, cfg)
    params = init_params(g, cfg, prepared)
    opt = Adam(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
    history: list[float] = []
    best = np.inf
    stale = 0
    stopped = False
    for epoch in range(cfg.epochs):
        opt.zero_grad()
        try:
            res = forward(params, g, cfg, prepared)
        except ValueError as exc:
            raise TrainingError(f"epoch {epoch}: {exc}") from exc
        value = float(res.loss.data)
        if not np.isfinite(value):
            op = ad.first_nonfinite_op(res.loss)
            raise TrainingError(f"epoch {epoch}: loss is {value}; first non-finite value produced by op {op!r}")
        ad.backward(res.loss)
        opt.step()
        history.append(value)
        if on_epoch is not None:
            on_epoch(epoch, value)
        improved = not np.isfinite(best) or best - value > cfg.min_rel_improvement * abs(best)
        if improved:
            best = value
            stale = 0
        else:
            stale += 1
            if cfg.patience and stale >= cfg.patience:
                log.info("early stop at epoch %d (loss %.6f)", epoch, value)
                stopped = True
                break
    final = forward(params, g, cfg, prepared)
    return TrainedModel(
        config=cfg,
        params={k: p.data.copy() for k, p in params.items()},
        z_attr=None if final.z_attr is None else final.z_attr.data.copy(),
        z_topo=None if final.z_topo is None else final.z_topo.data.copy(),
        loss_history=history,
        beta=final.beta,
        eta=final.eta,
        stopped_early=stopped,
    )


# ---------------------------------------------------------------- persistence


def export_embeddings(model: TrainedModel | np.ndarray, path: str | Path) -> None:
    """CSV with header ``node_index,v0..v{d-1}``; values written with full precision."""
    z = model.embeddings if isinstance(model, TrainedModel) else np.asarray(model)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node_index"] + [f"v{k}" for k in range(z.shape[1])])
        for i, row in enumerate(z):
            w.writerow([i] + [repr(float(v)) for v in row])


def read_embeddings(path: str | Path) -> np.ndarray:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "node_index":
            raise ValueError(f"{path}: first header column must be 'node_index'")
        rows = [r for r in reader if r]
    z = np.empty((len(rows), len(header) - 1))
    for k, r in enumerate(rows):
        if int(r[0]) != k:
            raise ValueError(f"{path}:{k + 2}: node_index {r[0]} out of sequence")
        z[k] = [float(v) for v in r[1:]]
    return z


def save_loss_history(model: TrainedModel, path: str | Path) -> None:
    h = model.config.hash()
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss", "config_hash"])
        for e, v in enumerate(model.loss_history):
            w.writerow([e, repr(v), h])


def save_checkpoint(model: TrainedModel, path: str | Path) -> None:
    """npz of little-endian float64 tensors plus the producing config as JSON."""
    arrays = {f"param/{k}": np.ascontiguousarray(v, dtype="<f8") for k, v in model.params.items()}
    if model.z_attr is not None:
        arrays["z_attr"] = np.ascontiguousarray(model.z_attr, dtype="<f8")
    if model.z_topo is not None:
        arrays["z_topo"] = np.ascontiguousarray(model.z_topo, dtype="<f8")
    arrays["loss_history"] = np.asarray(model.loss_history, dtype="<f8")
    arrays["config_json"] = np.array(model.config.to_json())
    arrays["config_hash"] = np.array(model.config.hash())
    with Path(path).open("wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str | Path) -> TrainedModel:
    with np.load(path, allow_pickle=False) as data:
        cfg = TrainConfig.from_dict(json.loads(str(data["config_json"])))
        params = {k[len("param/"):]: data[k].astype(np.float64) for k in data.files if k.startswith("param/")}
        return TrainedModel(
            config=cfg,
            params=params,
            z_attr=data["z_attr"].copy() if "z_attr" in data.files else None,
            z_topo=data["z_topo"].copy() if "z_topo" in data.files else None,
            loss_history=data["loss_history"].tolist(),
        )
