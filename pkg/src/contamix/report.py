"""Run reports: assembly from a ranked sweep and lossless JSON round trips."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .classification import (
    GOOD_THRESHOLD,
    ObservationLabel,
    confusion_tables,
    label_observations,
    misallocation_count,
)
from .selection import RankedResults


@dataclass
class ModelSummary:
    structure: str
    G: int
    m: int
    bic: float
    loglik: float
    converged: bool = True
    iterations: int = 0


@dataclass
class ComponentEstimate:
    pi: float
    alpha: float
    mu: list
    sigma: list
    eta: float


@dataclass
class Report:
    """Everything a sweep produces, as plain Python values."""

    best: ModelSummary
    ranking: list
    labels: list
    components: list
    confusion: dict | None = None
    misallocations: dict | None = None
    warnings: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def n_bad(self) -> int:
        return sum(lab.is_bad for lab in self.labels)

    def to_dict(self) -> dict:
        return {
            "best": asdict(self.best),
            "ranking": [asdict(r) for r in self.ranking],
            "labels": [lab.to_dict() for lab in self.labels],
            "components": [asdict(c) for c in self.components],
            "confusion": self.confusion,
            "misallocations": self.misallocations,
            "warnings": list(self.warnings),
            "failures": list(self.failures),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        return cls(
            best=ModelSummary(**d["best"]),
            ranking=[ModelSummary(**r) for r in d["ranking"]],
            labels=[ObservationLabel(**lab) for lab in d["labels"]],
            components=[ComponentEstimate(**c) for c in d["components"]],
            confusion=d.get("confusion"),
            misallocations=d.get("misallocations"),
            warnings=list(d.get("warnings", [])),
            failures=list(d.get("failures", [])),
            meta=dict(d.get("meta", {})),
        )

    def to_json(self, indent=2) -> str:
        # repr-exact floats; non-finite values are written as JSON strings
        return json.dumps(_jsonable(self.to_dict()), indent=indent, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "Report":
        return cls.from_dict(_unjsonable(json.loads(text)))

    def write_labels_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["row_id", "cluster", "is_bad", "z_max", "v_at_map"])
            for lab in self.labels:
                w.writerow([lab.row_id, lab.cluster, int(lab.is_bad), repr(lab.z_max), repr(lab.v_at_map)])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


_NONFINITE = {"inf": math.inf, "-inf": -math.inf, "nan": math.nan}


def _unjsonable(obj):
    if isinstance(obj, dict):
        return {k: _unjsonable(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_unjsonable(v) for v in obj]
    if isinstance(obj, str) and obj in _NONFINITE:
        return _NONFINITE[obj]
    return obj


def summarize(entry) -> ModelSummary:
    r = entry.result
    return ModelSummary(
        entry.structure.value, int(entry.G), int(entry.m), float(entry.bic),
        float(r.loglik), bool(r.converged), int(r.iterations),
    )


def build_report(
    ranked: RankedResults,
    row_ids=None,
    truth=None,
    threshold: float = GOOD_THRESHOLD,
    meta: dict | None = None,
) -> Report:
    """Assemble a :class:`Report` for the BIC-best model of a sweep."""
    best = ranked.best
    res = best.result
    Z, V = res.posteriors.z, res.posteriors.v
    labels = label_observations(Z, V, row_ids, threshold)
    psi = res.params
    sigmas = psi.sigmas()
    comps = [
        ComponentEstimate(
            float(psi.pi[g]), float(psi.alpha[g]), psi.mu[g].tolist(),
            np.asarray(sigmas[g]).tolist(), float(psi.eta[g]),
        )
        for g in range(psi.G)
    ]
    confusion = misalloc = None
    if truth is not None:
        clusters = np.array([lab.cluster for lab in labels])
        bad = np.array([lab.is_bad for lab in labels])
        truth = [str(t) for t in truth]
        confusion = confusion_tables(truth, clusters, bad, psi.G)
        misalloc = {
            "merged": misallocation_count(clusters, truth, "merged"),
            "good_only": misallocation_count(clusters, truth, "good-only", bad),
        }
    failures = [
        {"structure": f.structure.value, "G": f.G, "error": f.error} for f in ranked.failures
    ]
    return Report(
        best=summarize(best),
        ranking=[summarize(e) for e in ranked.entries],
        labels=labels,
        components=comps,
        confusion=confusion,
        misallocations=misalloc,
        warnings=list(res.warnings),
        failures=failures,
        meta=dict(meta or {}),
    )
