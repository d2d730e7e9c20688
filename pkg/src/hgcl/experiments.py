"""Experiment suites built on train + evaluate: robustness curves, ablations and sweeps."""

from __future__ import annotations

import csv
import itertools
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .evaluation import DEFAULT_RATIOS, EvalReport, evaluate_classification, evaluate_clustering
from .graph import HeteroGraph, mask_attributes, perturb_edges
from .seeding import int_seed
from .trainer import TrainConfig, TrainedModel, train

log = logging.getLogger(__name__)

PERTURBATIONS = ("edge_deletion", "attribute_masking")
DEFAULT_LEVELS = (0.25, 0.5, 0.75)
ABLATIONS: dict[str, dict] = {
    "HGCL": {},
    "HGCL_topo": {"views": "topo"},
    "HGCL_attr": {"views": "attr"},
    "HGCL_samp_t": {"sampling": "topology"},
    "HGCL_samp_a": {"sampling": "attribute"},
}


def max_workers() -> int:
    """Worker cap from ``HGCL_THREADS`` (default 1, i.e. run in-process)."""
    raw = os.environ.get("HGCL_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"HGCL_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def _ordered_map(fn: Callable, jobs: Sequence[tuple]) -> list:
    """Apply ``fn(*job)`` to every job; results come back in job order regardless of workers."""
    workers = min(max_workers(), len(jobs))
    if workers <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def run_pipeline(
    g: HeteroGraph,
    cfg: TrainConfig,
    ratios: Sequence[float] = DEFAULT_RATIOS,
    repeats: int = 10,
    label: str = "HGCL",
    clustering: bool = False,
) -> tuple[TrainedModel, list[EvalReport]]:
    """Train on ``g`` then evaluate the concatenated embedding; evaluation seeds follow ``cfg.seed``."""
    if g.labels is None:
        raise ValueError(f"graph {g.name!r} has no target labels to evaluate against")
    model = train(g, cfg)
    reports = [evaluate_classification(model.embeddings, g.labels, ratios, repeats, cfg.seed,
                                       label=label, config_hash=cfg.hash())]
    if clustering:
        reports.append(evaluate_clustering(model.embeddings, g.labels, repeats=repeats, seed=cfg.seed,
                                           label=label, config_hash=cfg.hash()))
    return model, reports


def _classify_only(g, cfg, ratios, repeats, label) -> EvalReport:
    return run_pipeline(g, cfg, ratios, repeats, label)[1][0]


# ---------------------------------------------------------------- robustness


def perturb(g: HeteroGraph, perturbation: str, level: float, seed: int) -> HeteroGraph:
    """Level 0 returns ``g`` itself so the unperturbed cell is the plain pipeline."""
    if perturbation not in PERTURBATIONS:
        raise ValueError(f"perturbation must be one of {PERTURBATIONS}, got {perturbation!r}")
    if level == 0:
        return g
    stream_seed = int_seed(seed, f"robustness.{perturbation}.{float(level)!r}")
    if perturbation == "edge_deletion":
        return perturb_edges(g, level, stream_seed)
    return mask_attributes(g, level, stream_seed)


def robustness_suite(
    g: HeteroGraph,
    cfg: TrainConfig,
    perturbation: str,
    levels: Sequence[float] = DEFAULT_LEVELS,
    ratios: Sequence[float] = DEFAULT_RATIOS,
    repeats: int = 10,
) -> list[EvalReport]:
    """One classification report per level: perturb, retrain from scratch, evaluate."""
    jobs = []
    for level in levels:
        if not 0.0 <= level <= 1.0:
            raise ValueError(f"perturbation level must be in [0, 1], got {level}")
        jobs.append((perturb(g, perturbation, level, cfg.seed), cfg, tuple(ratios), repeats,
                     f"{perturbation}@{float(level):g}"))
    reports = _ordered_map(_classify_only, jobs)
    for level, rep in zip(levels, reports):
        rep.metadata.update({"perturbation": perturbation, "level": repr(float(level))})
    return reports


def write_degradation_csv(reports: Sequence[EvalReport], path: str | Path) -> None:
    """Long format: perturbation, level, ratio, macro_f1, micro_f1 (means and stds)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["perturbation", "level", "ratio", "macro_f1", "macro_f1_std", "micro_f1", "micro_f1_std",
                    "config_hash"])
        for rep in reports:
            for ratio, m in rep.classification.items():
                w.writerow([rep.metadata["perturbation"], rep.metadata["level"], repr(ratio),
                            repr(m["macro_f1"][0]), repr(m["macro_f1"][1]),
                            repr(m["micro_f1"][0]), repr(m["micro_f1"][1]), rep.config_hash])


# ---------------------------------------------------------------- ablation


def ablation_configs(cfg: TrainConfig, variants: Sequence[str] | None = None) -> dict[str, TrainConfig]:
    variants = list(variants or ABLATIONS)
    unknown = [v for v in variants if v not in ABLATIONS]
    if unknown:
        raise ValueError(f"unknown ablation variant(s): {', '.join(unknown)}")
    return {v: cfg.replace(**ABLATIONS[v]) for v in variants}


def ablation_suite(
    g: HeteroGraph,
    cfg: TrainConfig,
    variants: Sequence[str] | None = None,
    ratios: Sequence[float] = DEFAULT_RATIOS,
    repeats: int = 10,
) -> list[EvalReport]:
    configs = ablation_configs(cfg, variants)
    jobs = [(g, c, tuple(ratios), repeats, name) for name, c in configs.items()]
    reports = _ordered_map(_classify_only, jobs)
    for name, rep in zip(configs, reports):
        rep.metadata["variant"] = name
    return reports


# ---------------------------------------------------------------- sensitivity sweep


def grid_values(start: float, stop: float, step: float) -> list[float]:
    """Inclusive arithmetic grid without float drift (0.2 * 3 is 0.6, not 0.6000000000000001)."""
    n = int(round((stop - start) / step))
    return [round(start + k * step, 10) for k in range(n + 1)]


def delta_grid(metapaths: Sequence[str], values: Sequence[float]) -> list[dict[str, float]]:
    """Cartesian product of ``values`` over the meta-paths."""
    return [dict(zip(metapaths, combo)) for combo in itertools.product(values, repeat=len(metapaths))]


@dataclass
class SweepTable:
    deltas: list[dict[str, float]]
    eps_a: list[float]
    # values[i, j]: mean Macro-F1 (averaged over ratios) for deltas[i], eps_a[j]
    values: np.ndarray
    config_hash: str

    def to_csv(self, path: str | Path) -> None:
        """Long format, one row per cell; heatmap-ready."""
        names = sorted({k for d in self.deltas for k in d})
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([f"delta_{n}" for n in names] + ["eps_a", "mean_macro_f1", "config_hash"])
            for i, d in enumerate(self.deltas):
                for j, e in enumerate(self.eps_a):
                    w.writerow([repr(d[n]) for n in names] + [repr(e), repr(float(self.values[i, j])),
                                                               self.config_hash])

    def format(self) -> str:
        head = "deltas".ljust(28) + "".join(f"eps_a={e:<8g}" for e in self.eps_a)
        lines = [head]
        for i, d in enumerate(self.deltas):
            key = ",".join(f"{k}={v:g}" for k, v in sorted(d.items()))
            lines.append(key.ljust(28) + "".join(f"{v:<14.4f}" for v in self.values[i]))
        return "\n".join(lines) + "\n"


def parameter_sweep(
    g: HeteroGraph,
    cfg: TrainConfig,
    deltas: Sequence[Mapping[str, float]],
    eps_a: Sequence[float],
    ratios: Sequence[float] = DEFAULT_RATIOS,
    repeats: int = 10,
) -> SweepTable:
    if not deltas or not eps_a:
        raise ValueError("sweep grid must be non-empty")
    configs = [cfg.replace(deltas={**cfg.deltas, **d}, eps_a=float(e)) for d in deltas for e in eps_a]
    for c in configs:
        c.validate()
    jobs = [(g, c, tuple(ratios), repeats, "HGCL") for c in configs]
    reports = _ordered_map(_classify_only, jobs)
    values = np.array([r.mean_macro_f1() for r in reports]).reshape(len(deltas), len(eps_a))
    return SweepTable([dict(d) for d in deltas], [float(e) for e in eps_a], values, cfg.hash())
