"""Parameter counting, BIC and the structure x G model sweep."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .ecm import FitConfig, FitResult, fit, fit_gpcm
from .exceptions import ContamixError, FitError
from .structures import ALL_STRUCTURES, StructureId, as_structure, sigma_param_count

logger = logging.getLogger(__name__)


def count_free_params(structure, G: int, p: int, contaminated: bool = True) -> int:
    """Free parameters: covariances, means, weights and (if contaminated) alpha and eta."""
    m = sigma_param_count(structure, G, p) + G * p + (G - 1)
    if contaminated:
        m += 2 * G
    return m


def bic(loglik: float, m: int, n: int) -> float:
    """``2 loglik - m log n``; larger is better."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return 2.0 * loglik - m * math.log(n)


@dataclass
class SweepGrid:
    structures: tuple
    g_values: tuple
    config: FitConfig = field(default_factory=FitConfig)
    gaussian: bool = False

    def __post_init__(self):
        self.structures = tuple(as_structure(s) for s in self.structures)
        self.g_values = tuple(int(g) for g in self.g_values)
        if not self.structures or not self.g_values:
            raise ValueError("sweep grid must be non-empty")
        if min(self.g_values) < 1:
            raise ValueError("numbers of components must be at least 1")

    def pairs(self):
        return [(s, g) for s in self.structures for g in self.g_values]


@dataclass
class RankedEntry:
    structure: StructureId
    G: int
    result: FitResult
    m: int
    bic: float

    @property
    def loglik(self) -> float:
        return self.result.loglik


@dataclass
class FailedFit:
    structure: StructureId
    G: int
    error: str


@dataclass
class RankedResults:
    entries: list
    failures: list
    n: int

    @property
    def best(self) -> RankedEntry:
        return self.entries[0]

    def __len__(self):
        return len(self.entries)

    def get(self, structure, G):
        s = as_structure(structure)
        for e in self.entries:
            if e.structure is s and e.G == G:
                return e
        return None


def pair_seed(seed: int, structure, G: int) -> int:
    """Per-model seed derived from the run seed; independent of scheduling."""
    idx = ALL_STRUCTURES.index(as_structure(structure))
    ss = np.random.SeedSequence([int(seed), idx, int(G)])
    return int(ss.generate_state(1)[0])


def _fit_one(args):
    X, structure, G, cfg, gaussian = args
    cfg = replace(cfg, seed=pair_seed(cfg.seed, structure, G))
    try:
        if gaussian:
            return fit_gpcm(X, structure, G, cfg)
        return fit(X, structure, G, cfg)
    except (ContamixError, np.linalg.LinAlgError, ValueError) as exc:
        return FailedFit(as_structure(structure), G, f"{type(exc).__name__}: {exc}")


def rank(fits, n: int) -> RankedResults:
    """Order successful fits by BIC (descending); ties keep (structure, G) order."""
    entries, failures = [], []
    for item in fits:
        if isinstance(item, FailedFit):
            failures.append(item)
            continue
        m = item.n_params
        entries.append(RankedEntry(item.structure, item.G, item, m, bic(item.loglik, m, n)))
    entries.sort(key=lambda e: -e.bic)
    return RankedResults(entries, failures, n)


def sweep(X, grid: SweepGrid, n_jobs: int = 1) -> RankedResults:
    """Fit every (structure, G) pair of the grid and rank the fits by BIC.

    Failed fits are recorded in ``failures`` instead of aborting the sweep.
    Results do not depend on ``n_jobs``: each pair draws its own seed.
    """
    X = np.asarray(X, dtype=float)
    jobs = [(X, s, g, grid.config, grid.gaussian) for s, g in grid.pairs()]
    if n_jobs == 1 or len(jobs) == 1:
        fits = [_fit_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=None if n_jobs < 1 else n_jobs) as pool:
            fits = list(pool.map(_fit_one, jobs))
    for f in fits:
        if isinstance(f, FailedFit):
            logger.warning("fit %s G=%d failed: %s", f.structure.value, f.G, f.error)
    ranked = rank(fits, X.shape[0])
    if not ranked.entries:
        raise FitError("every model in the sweep failed to fit")
    return ranked
