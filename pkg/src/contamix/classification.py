"""MAP clustering, good/bad flagging and agreement with known labels.

Cluster labels are 1-based (``1..G``); ``0`` is reserved for "no cluster"
(e.g. generated noise in :mod:`contamix.datagen`).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

GOOD_THRESHOLD = 0.5
EXHAUSTIVE_MAX = 8


def map_assign(Z) -> np.ndarray:
    """1-based index of the largest posterior per row; ties go to the lowest index."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    return np.argmax(Z, axis=1) + 1


def v_at_map(Z, V) -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if Z.shape != V.shape:
        raise ValueError("Z and V must have the same shape")
    idx = np.argmax(Z, axis=1)
    return V[np.arange(V.shape[0]), idx]


def detect_bad(Z, V, threshold: float = GOOD_THRESHOLD) -> np.ndarray:
    """Flag rows whose good-point probability in their MAP cluster is ``<= threshold``."""
    return v_at_map(Z, V) <= threshold


@dataclass
class ObservationLabel:
    row_id: object
    cluster: int
    is_bad: bool
    z_max: float
    v_at_map: float

    def to_dict(self):
        return {
            "row_id": self.row_id,
            "cluster": self.cluster,
            "is_bad": self.is_bad,
            "z_max": self.z_max,
            "v_at_map": self.v_at_map,
        }


def label_observations(Z, V, row_ids=None, threshold=GOOD_THRESHOLD):
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    clusters = map_assign(Z)
    vm = v_at_map(Z, V)
    bad = vm <= threshold
    zmax = Z.max(axis=1)
    if row_ids is None:
        row_ids = range(1, Z.shape[0] + 1)
    return [
        ObservationLabel(rid, int(c), bool(b), float(zm), float(v))
        for rid, c, b, zm, v in zip(row_ids, clusters, bad, zmax, vm)
    ]


def _contingency(truth, labels):
    classes = sorted(set(truth), key=str)
    clusters = sorted(set(labels))
    ci = {c: i for i, c in enumerate(classes)}
    ki = {k: j for j, k in enumerate(clusters)}
    table = np.zeros((len(classes), len(clusters)), dtype=int)
    for t, lab in zip(truth, labels):
        table[ci[t], ki[lab]] += 1
    return classes, clusters, table


def best_matching(truth, labels):
    """Cluster -> class mapping maximizing agreement.

    Exhaustive over permutations when both sides have at most eight levels,
    otherwise solved as a linear assignment problem. Returns
    ``(mapping, matched_count)``; unmatched clusters are absent from the map.
    """
    classes, clusters, table = _contingency(truth, labels)
    k = max(len(classes), len(clusters))
    if k == 0:
        return {}, 0
    padded = np.zeros((k, k), dtype=int)
    padded[: table.shape[0], : table.shape[1]] = table
    if k <= EXHAUSTIVE_MAX:
        best_perm, best_val = None, -1
        for perm in itertools.permutations(range(k)):
            val = sum(padded[perm[j], j] for j in range(k))
            if val > best_val:
                best_perm, best_val = perm, val
        pairs = [(best_perm[j], j) for j in range(k)]
    else:
        rows, cols = linear_sum_assignment(-padded)
        pairs = list(zip(rows, cols))
        best_val = int(padded[rows, cols].sum())
    mapping = {
        clusters[j]: classes[i]
        for i, j in pairs
        if i < len(classes) and j < len(clusters)
    }
    return mapping, int(best_val)


def misallocation_count(labels, truth, mode: str = "merged", bad=None) -> int:
    """Misallocated observations under the best cluster-to-class matching.

    ``mode="merged"`` counts every row in its MAP cluster; ``"good-only"``
    drops rows flagged in ``bad`` first.
    """
    labels = list(np.asarray(labels).tolist())
    truth = list(np.asarray(truth).tolist())
    if len(labels) != len(truth):
        raise ValueError("labels and truth differ in length")
    if mode == "good-only":
        if bad is None:
            raise ValueError("good-only mode needs bad flags")
        keep = ~np.asarray(bad, dtype=bool)
        if keep.shape[0] != len(labels):
            raise ValueError("bad flags differ in length")
        labels = [lab for lab, k in zip(labels, keep) if k]
        truth = [t for t, k in zip(truth, keep) if k]
    elif mode != "merged":
        raise ValueError(f"unknown mode {mode!r}")
    _, matched = best_matching(truth, labels)
    return len(labels) - matched


def confusion_tables(truth, clusters, bad, G=None):
    """Truth-by-cluster tables: all rows together, and with bad rows split out.

    Returns a dict with ``merged`` and ``separate`` entries, each holding
    ``rows`` (classes), ``columns`` and ``counts``.
    """
    truth = np.asarray(truth).tolist()
    clusters = np.asarray(clusters, dtype=int)
    bad = np.asarray(bad, dtype=bool)
    classes = sorted(set(truth), key=str)
    G = int(clusters.max()) if G is None else int(G)
    cols = list(range(1, G + 1))
    merged = np.zeros((len(classes), G), dtype=int)
    separate = np.zeros((len(classes), G + 1), dtype=int)
    ci = {c: i for i, c in enumerate(classes)}
    for t, c, b in zip(truth, clusters, bad):
        merged[ci[t], c - 1] += 1
        separate[ci[t], G if b else c - 1] += 1
    return {
        "merged": {"rows": classes, "columns": cols, "counts": merged.tolist()},
        "separate": {"rows": classes, "columns": cols + ["bad"], "counts": separate.tolist()},
    }


def adjusted_rand_index(a, b) -> float:
    """Adjusted Rand index between two labelings."""
    _, _, table = _contingency(list(a), list(b))
    n = table.sum()

    def comb2(x):
        x = np.asarray(x, dtype=float)
        return np.sum(x * (x - 1) / 2)

    sum_cells = comb2(table)
    sum_rows = comb2(table.sum(axis=1))
    sum_cols = comb2(table.sum(axis=0))
    total = n * (n - 1) / 2
    if total == 0:
        return 1.0
    expected = sum_rows * sum_cols / total
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))
