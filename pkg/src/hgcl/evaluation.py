"""Node classification and clustering protocols over learned embeddings."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.cluster import KMeans
from sklearn.linear_model import SGDClassifier
from sklearn.metrics import adjusted_rand_score, f1_score, normalized_mutual_info_score
from sklearn.preprocessing import StandardScaler

from .seeding import int_seed, rng_for

log = logging.getLogger(__name__)

DEFAULT_RATIOS = (0.2, 0.4, 0.6, 0.8)


@dataclass
class EvalReport:
    task: str
    label: str = "HGCL"
    # ratio -> metric -> (mean, std)
    classification: dict[float, dict[str, tuple[float, float]]] = field(default_factory=dict)
    # metric -> (mean, std)
    clustering: dict[str, tuple[float, float]] = field(default_factory=dict)
    repeats: int = 0
    seed: int = 0
    config_hash: str = ""
    metadata: dict[str, str] = field(default_factory=dict)

    def macro_f1(self, ratio: float) -> float:
        return self.classification[ratio]["macro_f1"][0]

    def mean_macro_f1(self) -> float:
        return float(np.mean([m["macro_f1"][0] for m in self.classification.values()]))

    def rows(self) -> list[dict]:
        base = {"task": self.task, "label": self.label, "repeats": self.repeats, "seed": self.seed,
                "config_hash": self.config_hash}
        out = []
        for ratio, metrics in self.classification.items():
            for metric, (mean, std) in metrics.items():
                out.append({**base, "ratio": ratio, "metric": metric, "mean": mean, "std": std})
        for metric, (mean, std) in self.clustering.items():
            out.append({**base, "ratio": "", "metric": metric, "mean": mean, "std": std})
        return out


REPORT_FIELDS = ["task", "label", "ratio", "metric", "mean", "std", "repeats", "seed", "config_hash"]


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def write_reports_csv(reports: Iterable[EvalReport], path: str | Path, extra: dict[str, list] | None = None) -> None:
    """One row per (report, ratio, metric); ``extra`` adds per-report columns (e.g. perturbation level)."""
    reports = list(reports)
    extra = extra or {}
    fields = list(extra) + REPORT_FIELDS
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for k, rep in enumerate(reports):
            for row in rep.rows():
                row.update({name: values[k] for name, values in extra.items()})
                w.writerow({key: _fmt(val) for key, val in row.items()})


def format_summary(reports: Sequence[EvalReport]) -> str:
    lines = []
    for rep in reports:
        lines.append(f"[{rep.task}] {rep.label}  (repeats={rep.repeats}, seed={rep.seed}, config={rep.config_hash})")
        for ratio, m in rep.classification.items():
            lines.append(
                f"  train {ratio:.0%}: Macro-F1 {m['macro_f1'][0]:.4f} +/- {m['macro_f1'][1]:.4f}   "
                f"Micro-F1 {m['micro_f1'][0]:.4f} +/- {m['micro_f1'][1]:.4f}"
            )
        for metric, (mean, std) in rep.clustering.items():
            lines.append(f"  {metric.upper()}: {mean:.4f} +/- {std:.4f}")
        for k, v in rep.metadata.items():
            lines.append(f"  {k}: {v}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- metrics


def macro_f1(y_true, y_pred) -> float:
    return float(f1_score(y_true, y_pred, average="macro", labels=np.unique(y_true), zero_division=0))


def micro_f1(y_true, y_pred) -> float:
    return float(f1_score(y_true, y_pred, average="micro", zero_division=0))


def majority_class_macro_f1(labels) -> float:
    """Macro-F1 of always predicting the most frequent class."""
    labels = np.asarray(labels)
    values, counts = np.unique(labels, return_counts=True)
    return macro_f1(labels, np.full_like(labels, values[np.argmax(counts)]))


# ---------------------------------------------------------------- classification


def fit_linear_classifier(x: np.ndarray, y: np.ndarray, seed: int):
    """One-vs-rest linear hinge-loss classifier trained by seeded SGD on standardised inputs."""
    scaler = StandardScaler().fit(x)
    clf = SGDClassifier(loss="hinge", alpha=1e-4, max_iter=1000, tol=1e-4, random_state=seed)
    clf.fit(scaler.transform(x), y)
    return lambda q: clf.predict(scaler.transform(q))


def _split(rng: np.random.Generator, n: int, ratio: float, labels: np.ndarray, max_tries: int = 100):
    n_train = int(round(ratio * n))
    if not 0 < n_train < n:
        raise ValueError(f"training ratio {ratio} leaves an empty split for {n} nodes")
    classes = np.unique(labels)
    for attempt in range(max_tries):
        perm = rng.permutation(n)
        train, test = perm[:n_train], perm[n_train:]
        if np.unique(labels[train]).size == classes.size:
            return np.sort(train), np.sort(test)
        log.info("ratio %.2f: split %d misses a class in training; resampling", ratio, attempt)
    raise RuntimeError(f"could not draw a training split with every class at ratio {ratio}")


def evaluate_classification(
    z: np.ndarray,
    labels,
    ratios: Sequence[float] = DEFAULT_RATIOS,
    repeats: int = 10,
    seed: int = 0,
    node_subset=None,
    label: str = "HGCL",
    config_hash: str = "",
) -> EvalReport:
    """Macro/Micro-F1 of a linear classifier trained on a ``ratio`` fraction, tested on the rest.

    ``node_subset`` restricts the protocol to those nodes (e.g. a held-out test set).
    """
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.shape != (z.shape[0],):
        raise ValueError(f"labels must cover all {z.shape[0]} embedded nodes")
    if node_subset is not None:
        idx = np.asarray(node_subset, dtype=np.int64)
        z, labels = z[idx], labels[idx]
    report = EvalReport(task="classification", label=label, repeats=repeats, seed=seed, config_hash=config_hash)
    report.metadata["classifier"] = "one-vs-rest linear hinge loss, SGD"
    for ratio in ratios:
        rng = rng_for(seed, f"splits.{ratio!r}")
        macs, mics = [], []
        for r in range(repeats):
            train, test = _split(rng, labels.size, ratio, labels)
            predict = fit_linear_classifier(z[train], labels[train], int_seed(seed, f"classifier.{ratio!r}.{r}"))
            pred = predict(z[test])
            macs.append(macro_f1(labels[test], pred))
            mics.append(micro_f1(labels[test], pred))
        report.classification[float(ratio)] = {
            "macro_f1": (float(np.mean(macs)), float(np.std(macs))),
            "micro_f1": (float(np.mean(mics)), float(np.std(mics))),
        }
    return report


def evaluate_majority_baseline(
    labels,
    ratios: Sequence[float] = DEFAULT_RATIOS,
    repeats: int = 10,
    seed: int = 0,
    node_subset=None,
) -> EvalReport:
    """Predict the training split's most frequent class, on exactly the splits
    :func:`evaluate_classification` draws for the same ``seed``."""
    labels = np.asarray(labels)
    if node_subset is not None:
        labels = labels[np.asarray(node_subset, dtype=np.int64)]
    report = EvalReport(task="classification", label="majority", repeats=repeats, seed=seed)
    for ratio in ratios:
        rng = rng_for(seed, f"splits.{ratio!r}")
        macs, mics = [], []
        for _ in range(repeats):
            train, test = _split(rng, labels.size, ratio, labels)
            values, counts = np.unique(labels[train], return_counts=True)
            pred = np.full(test.size, values[np.argmax(counts)])
            macs.append(macro_f1(labels[test], pred))
            mics.append(micro_f1(labels[test], pred))
        report.classification[float(ratio)] = {
            "macro_f1": (float(np.mean(macs)), float(np.std(macs))),
            "micro_f1": (float(np.mean(mics)), float(np.std(mics))),
        }
    return report


# ---------------------------------------------------------------- clustering


def evaluate_clustering(
    z: np.ndarray,
    labels,
    k: int | None = None,
    repeats: int = 10,
    seed: int = 0,
    label: str = "HGCL",
    config_hash: str = "",
) -> EvalReport:
    """Mean NMI / ARI of ``repeats`` seeded k-means++ runs against ``labels``."""
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels)
    k = k or int(np.unique(labels).size)
    nmis, aris = [], []
    for r in range(repeats):
        km = KMeans(n_clusters=k, init="k-means++", n_init=1, max_iter=300, random_state=int_seed(seed, f"kmeans.{r}"))
        pred = km.fit_predict(z)
        nmis.append(normalized_mutual_info_score(labels, pred, average_method="arithmetic"))
        aris.append(adjusted_rand_score(labels, pred))
    report = EvalReport(task="clustering", label=label, repeats=repeats, seed=seed, config_hash=config_hash)
    report.clustering = {
        "nmi": (float(np.mean(nmis)), float(np.std(nmis))),
        "ari": (float(np.mean(aris)), float(np.std(aris))),
    }
    report.metadata["nmi_normalization"] = "arithmetic mean of entropies"
    return report
