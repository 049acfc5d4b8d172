"""End-to-end replication runs: synthetic noise, perturbed crabs and wine."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .classification import (
    adjusted_rand_index,
    detect_bad,
    map_assign,
    misallocation_count,
)
from .datagen import (
    CRAB_PERTURBATIONS,
    CRAB_PERTURBED_ROW,
    sample_gpcm,
    two_cluster_scenario,
)
from .ecm import FitConfig, fit
from .exceptions import DataError
from .io import DataMatrix, ingest_csv
from .report import Report, _jsonable, build_report
from .selection import SweepGrid, pair_seed, sweep
from .structures import ALL_STRUCTURES, StructureId

logger = logging.getLogger(__name__)

EXPERIMENTS = ("synthetic-noise", "crabs", "wine")
CRABS_COLUMNS = ("RW", "CL")
CRABS_LABEL = "sex"
WINE_LABEL = "cultivar"


@dataclass
class Replication:
    """Per-run rows, summary statistics and, for sweeps, the full report."""

    experiment: str
    summary: dict
    rows: list
    report: Report | None = None
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "experiment": self.experiment,
            "summary": self.summary,
            "rows": self.rows,
            "report": None if self.report is None else self.report.to_dict(),
            "config": self.config,
        }

    def to_json(self, indent=2):
        return json.dumps(_jsonable(self.to_dict()), indent=indent, allow_nan=False)


def _config_dict(cfg: FitConfig):
    return {
        "epsilon": cfg.epsilon, "eta_star": cfg.eta_star, "alpha_star": cfg.alpha_star,
        "seed": cfg.seed, "restarts": cfg.restarts,
    }


# ---------------------------------------------------------------------------
# Synthetic noise


def _synthetic_one(args):
    seed, cfg = args
    sample = sample_gpcm(two_cluster_scenario(seed))
    X = sample.X
    run_cfg = replace(cfg, seed=seed)
    eve = fit(X, StructureId.EVE, 2, replace(run_cfg, seed=pair_seed(seed, StructureId.EVE, 2)))
    n = X.shape[0]
    eve_bic = 2 * eve.loglik - eve.n_params * np.log(n)
    gpcm = sweep(X, SweepGrid(ALL_STRUCTURES, (2, 3), run_cfg, gaussian=True))
    z, v = eve.posteriors.z, eve.posteriors.v
    clusters = map_assign(z)
    bad = detect_bad(z, v)
    noise = sample.true_bad
    good = ~noise
    return {
        "seed": seed,
        "eve_bic": float(eve_bic),
        "eve_loglik": float(eve.loglik),
        "best_gpcm": f"{gpcm.best.structure.value}-{gpcm.best.G}",
        "best_gpcm_bic": float(gpcm.best.bic),
        "eve_beats_gpcm": bool(eve_bic > gpcm.best.bic),
        "noise_recall": float(bad[noise].mean()),
        "flagged_bad": int(bad.sum()),
        "ari_good": adjusted_rand_index(sample.true_component[good], clusters[good]),
        "_plot": (X, clusters, bad),
    }


def synthetic_noise(seeds=range(10), cfg: FitConfig = FitConfig(), n_jobs: int = 1, plot=None) -> Replication:
    """Two rotated clusters plus 20 uniform noise points, once per seed.

    Each seed fits EVE with G = 2 as a contaminated mixture and every
    Gaussian-mixture structure with G in {2, 3}, then records noise recall,
    the adjusted Rand index on the good points and the BIC comparison.
    """
    jobs = [(int(s), cfg) for s in seeds]
    if n_jobs == 1 or len(jobs) == 1:
        rows = [_synthetic_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=None if n_jobs < 1 else n_jobs) as pool:
            rows = list(pool.map(_synthetic_one, jobs))
    if plot is not None and rows:
        from .plotting import emit_svg_scatter

        X, cl, bad = rows[0]["_plot"]
        emit_svg_scatter(X, cl, bad, plot, title=f"EVE, G = 2 (seed {rows[0]['seed']})")
    for r in rows:
        del r["_plot"]
    summary = {
        "seeds": len(rows),
        "median_noise_recall": float(np.median([r["noise_recall"] for r in rows])),
        "median_ari_good": float(np.median([r["ari_good"] for r in rows])),
        "eve_wins": int(sum(r["eve_beats_gpcm"] for r in rows)),
    }
    return Replication("synthetic-noise", summary, rows, config=_config_dict(cfg))


# ---------------------------------------------------------------------------
# Crabs


def load_crabs(path) -> DataMatrix:
    """Blue crabs: ``RW`` and ``CL`` as features, ``sex`` as truth.

    A file holding both species (column ``sp``) is reduced to the blue ones.
    """
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        header = [c.strip() for c in next(csv.reader(fh), [])]
    data = ingest_csv(path, CRABS_COLUMNS, CRABS_LABEL)
    if "sp" in header:
        species = ingest_csv(path, CRABS_COLUMNS, "sp").labels
        keep = np.array([s == "B" for s in species])
        data = DataMatrix(
            data.values[keep], [r for r, k in zip(data.row_ids, keep) if k],
            data.columns, [lab for lab, k in zip(data.labels, keep) if k],
        )
    if data.n <= CRAB_PERTURBED_ROW:
        raise DataError(f"crabs data needs more than {CRAB_PERTURBED_ROW} rows, got {data.n}")
    return data


def crabs(path, cfg: FitConfig = FitConfig(), values=CRAB_PERTURBATIONS, plot=None) -> Replication:
    """VVV with G = 2 on the blue crabs with the 25th carapace length perturbed."""
    from .datagen import perturb_observation

    data = load_crabs(path)
    cl_dim = data.columns.index("CL")
    rows = []
    for value in values:
        X = perturb_observation(data.values, CRAB_PERTURBED_ROW, cl_dim, value)
        res = fit(X, StructureId.VVV, 2, replace(cfg, seed=pair_seed(cfg.seed, StructureId.VVV, 2)))
        z, v = res.posteriors.z, res.posteriors.v
        clusters = map_assign(z)
        bad = detect_bad(z, v)
        g_out = clusters[CRAB_PERTURBED_ROW] - 1
        rows.append({
            "value": float(value),
            "misallocated": misallocation_count(clusters, data.labels),
            "eta_outlier_group": float(res.params.eta[g_out]),
            "outlier_flagged": bool(bad[CRAB_PERTURBED_ROW]),
            "loglik": float(res.loglik),
        })
    counts = [r["misallocated"] for r in rows]
    etas = [r["eta_outlier_group"] for r in rows]
    summary = {
        "misallocation_constant": len(set(counts)) == 1,
        "misallocated": counts,
        "eta_strictly_decreasing": bool(all(a > b for a, b in zip(etas, etas[1:]))),
        "outlier_always_flagged": all(r["outlier_flagged"] for r in rows),
    }
    if plot is not None:
        from .plotting import plot_eta_curve

        plot_eta_curve([r["value"] for r in rows], etas, plot, xlabel="perturbed carapace length")
    return Replication("crabs", summary, rows, config=_config_dict(cfg))


# ---------------------------------------------------------------------------
# Wine


def wine(path, cfg: FitConfig = FitConfig(), structures=ALL_STRUCTURES, g_values=(1, 2, 3, 4),
         n_jobs: int = 1, plot=None) -> Replication:
    """Full structure x G sweep on the 13 wine measurements with ``cultivar`` as truth."""
    data = ingest_csv(path, None, WINE_LABEL)
    if data.p != 13:
        logger.warning("wine data has %d features, expected 13", data.p)
    ranked = sweep(data.values, SweepGrid(structures, g_values, cfg), n_jobs=n_jobs)
    report = build_report(ranked, data.row_ids, data.labels, meta={"columns": data.columns})
    bad_by_class: dict = {}
    for lab, t in zip(report.labels, data.labels):
        if lab.is_bad:
            bad_by_class[t] = bad_by_class.get(t, 0) + 1
    summary = {
        "best_model": f"{report.best.structure}-{report.best.G}",
        "best_G": report.best.G,
        "misallocated_merged": report.misallocations["merged"],
        "misallocated_good_only": report.misallocations["good_only"],
        "flagged_bad": report.n_bad,
        "bad_by_class": bad_by_class,
    }
    if plot is not None:
        from .plotting import plot_bic_grid

        plot_bic_grid(report.ranking, plot)
    return Replication("wine", summary, [asdict(r) for r in report.ranking], report, _config_dict(cfg))


def replicate(experiment: str, cfg: FitConfig = FitConfig(), data=None, n_jobs: int = 1,
              seeds=None, plot=None) -> Replication:
    """Dispatch one of the bundled experiments by name."""
    if experiment == "synthetic-noise":
        return synthetic_noise(range(10) if seeds is None else seeds, cfg, n_jobs, plot)
    if data is None:
        raise DataError(f"experiment {experiment!r} needs a dataset CSV (--input)")
    if experiment == "crabs":
        return crabs(data, cfg, plot=plot)
    if experiment == "wine":
        return wine(data, cfg, n_jobs=n_jobs, plot=plot)
    raise ValueError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
