"""Accuracy-by-SNR, top-k, confusion matrices, burst sweeps and McNemar's test."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .dataset import Dataset, truncate_dataset
from .training import predict_proba
from .zoo import Model

BURST_LENGTHS = (1024, 512, 256, 128, 64, 32, 16)
TOP_KS = (1, 2, 5)
OVERALL = "Overall"


@dataclass
class SnrAccuracyTable:
    """Per-SNR accuracy plus the micro-averaged and best-SNR figures."""

    by_snr: Dict[int, Tuple[float, int]]
    average: float
    maximum: float

    def accuracy(self, snr: int) -> float:
        return self.by_snr[snr][0]

    @property
    def snrs(self) -> List[int]:
        return sorted(self.by_snr)


def accuracy_by_snr(predictions, labels, snrs) -> SnrAccuracyTable:
    pred = np.asarray(predictions).reshape(-1)
    lab = np.asarray(labels).reshape(-1)
    snr = np.asarray(snrs).reshape(-1)
    if not (len(pred) == len(lab) == len(snr)):
        raise ValueError("predictions, labels and snrs must have equal length")
    if len(pred) == 0:
        return SnrAccuracyTable({}, math.nan, math.nan)
    correct = pred == lab
    table = {}
    for s in np.unique(snr):
        sel = snr == s
        table[int(s)] = (float(correct[sel].mean()), int(sel.sum()))
    return SnrAccuracyTable(table, float(correct.mean()), max(a for a, _ in table.values()))


def top_k_hits(probabilities: np.ndarray, labels, k: int) -> np.ndarray:
    """Boolean hit vector; ties in probability go to the lower class index."""
    probs = np.asarray(probabilities)
    n = probs.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in 1..{n}, got {k}")
    lab = np.asarray(labels).reshape(-1)
    # stable sort on -p keeps lower indices first among equal probabilities
    order = np.argsort(-probs, axis=-1, kind="stable")[:, :k]
    return (order == lab[:, None]).any(axis=1)


@dataclass
class TopKReport:
    k: int
    overall: float
    by_snr: Dict[int, float]
    by_group: Dict[str, float] = field(default_factory=dict)
    by_group_snr: Dict[str, Dict[int, float]] = field(default_factory=dict)


def top_k_accuracy(probabilities, labels, k: int, snrs=None, group_map: Optional[Sequence[str]] = None) -> TopKReport:
    """Top-k accuracy overall, per SNR and per modulation group.

    ``group_map[c]`` names the group of class ``c``.
    """
    hits = top_k_hits(probabilities, labels, k)
    lab = np.asarray(labels).reshape(-1)
    snr = np.zeros_like(lab) if snrs is None else np.asarray(snrs).reshape(-1)
    by_snr = {int(s): float(hits[snr == s].mean()) for s in np.unique(snr)}
    report = TopKReport(k, float(hits.mean()) if len(hits) else math.nan, by_snr)
    if group_map is not None:
        groups = np.asarray(group_map, dtype=object)[lab]
        for g in dict.fromkeys(group_map):
            sel = groups == g
            if not sel.any():
                continue
            report.by_group[g] = float(hits[sel].mean())
            report.by_group_snr[g] = {int(s): float(hits[sel & (snr == s)].mean()) for s in np.unique(snr[sel])}
    return report


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (n, n) int64, row = true class
    proportions: np.ndarray  # row-normalised; unsupported rows stay zero
    supported: np.ndarray  # rows with at least one sample

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    def accuracy(self) -> float:
        total = self.counts.sum()
        return float(np.trace(self.counts) / total) if total else math.nan


def confusion_matrix(predictions, labels, n_classes: int) -> ConfusionMatrix:
    pred = np.asarray(predictions, dtype=np.int64).reshape(-1)
    lab = np.asarray(labels, dtype=np.int64).reshape(-1)
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (lab, pred), 1)
    support = counts.sum(axis=1)
    supported = support > 0
    props = np.zeros((n_classes, n_classes), dtype=np.float64)
    props[supported] = counts[supported] / support[supported, None]
    return ConfusionMatrix(counts, props, supported)


def confusion_by_snr(predictions, labels, snrs, n_classes: int) -> Dict[int, ConfusionMatrix]:
    pred, lab, snr = (np.asarray(a).reshape(-1) for a in (predictions, labels, snrs))
    return {int(s): confusion_matrix(pred[snr == s], lab[snr == s], n_classes) for s in np.unique(snr)}


@dataclass
class McNemarResult:
    n01: int
    n10: int
    statistic: float
    p_value: float


def mcnemar_test(correct_a, correct_b) -> McNemarResult:
    """Continuity-corrected McNemar test on paired correctness flags.

    ``n01`` counts cases only ``b`` got right, ``n10`` cases only ``a`` got right.
    """
    a = np.asarray(correct_a, dtype=bool).reshape(-1)
    b = np.asarray(correct_b, dtype=bool).reshape(-1)
    if a.shape != b.shape:
        raise ValueError("correctness vectors must have equal length")
    n01 = int(np.sum(~a & b))
    n10 = int(np.sum(a & ~b))
    disc = n01 + n10
    if disc == 0:
        return McNemarResult(n01, n10, 0.0, 1.0)
    stat = (abs(n01 - n10) - 1.0) ** 2 / disc
    # chi-square(1) survival function
    p = math.erfc(math.sqrt(stat / 2.0))
    return McNemarResult(n01, n10, stat, min(max(p, 0.0), 1.0))


@dataclass
class Evaluation:
    """Everything computed for one model on one test set."""

    model: str
    probabilities: np.ndarray
    labels: np.ndarray
    snrs: np.ndarray
    class_names: List[str]
    groups: List[str]

    @property
    def predictions(self) -> np.ndarray:
        return self.probabilities.argmax(axis=-1)

    def snr_table(self) -> SnrAccuracyTable:
        return accuracy_by_snr(self.predictions, self.labels, self.snrs)

    def topk(self, ks: Sequence[int] = TOP_KS) -> List[TopKReport]:
        n = self.probabilities.shape[-1]
        return [top_k_accuracy(self.probabilities, self.labels, k, self.snrs, self._group_map(n)) for k in ks if k <= n]

    def confusion(self) -> ConfusionMatrix:
        return confusion_matrix(self.predictions, self.labels, self.probabilities.shape[-1])

    def correct(self) -> np.ndarray:
        return self.predictions == self.labels

    def _group_map(self, n: int) -> List[str]:
        # head may be wider than the dataset's class table (24-way presets)
        return list(self.groups) + ["Unused"] * (n - len(self.groups))


def evaluate(model: Model, ds: Dataset, name: str = "", batch_size: int = 256) -> Evaluation:
    probs = predict_proba(model, ds.iq, batch_size)
    return Evaluation(name or model.spec.name, probs, ds.labels, ds.snrs, list(ds.class_names), list(ds.groups))


@dataclass
class BurstResult:
    length: int
    table: SnrAccuracyTable
    by_group: Dict[str, SnrAccuracyTable]


def burst_sweep(model: Model, test_set: Dataset, lengths: Sequence[int] = BURST_LENGTHS, seed: int = 0) -> List[BurstResult]:
    """Evaluate the same weights on random contiguous bursts of each length."""
    if model.spec.kind != "xvector":
        raise ValueError("burst sweep needs a variable-length (xvector) model")
    results = []
    for n in lengths:
        if n > test_set.frame_len:
            raise ValueError(f"burst length {n} exceeds frame length {test_set.frame_len}")
        rng = np.random.default_rng([seed, n])
        ds = truncate_dataset(test_set, n, rng)
        ev = evaluate(model, ds)
        pred = ev.predictions
        by_group = {}
        groups = np.asarray(ds.groups, dtype=object)[ds.labels]
        for g in dict.fromkeys(ds.groups):
            sel = groups == g
            if sel.any():
                by_group[g] = accuracy_by_snr(pred[sel], ds.labels[sel], ds.snrs[sel])
        results.append(BurstResult(n, accuracy_by_snr(pred, ds.labels, ds.snrs), by_group))
    return results
