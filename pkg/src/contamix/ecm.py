"""ECM fitting of a single (structure, G) mixture of contaminated Gaussians.

One iteration is an E-step (component and good-point posteriors), CM-step 1
(weights, good proportions, means, covariances with ``eta`` held fixed) and
CM-step 2 (``eta``). Fits start from the corresponding Gaussian mixture
(GPCM) solution, which this module also fits by running the same engine with
every point forced to be good.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.special import logsumexp

from .exceptions import (
    ComponentDeathError,
    ContamixError,
    FactorizationError,
    FitError,
    UnderflowError,
)
from .gaussian import LOG_2PI, CovMatrix
from .params import EPS_ALPHA, EPS_ETA, ModelParams
from .structures import ScatterSet, StructureId, as_structure, update_sigmas

logger = logging.getLogger(__name__)

DEATH_FRACTION = 1e-8
FACTOR_RIDGE = 1e-10
SMALL_CLUSTER_RIDGE = 1e-8
MONOTONE_SLACK = 1e-8


@dataclass(frozen=True)
class FitConfig:
    """Settings for one ECM fit.

    ``epsilon`` is the Aitken tolerance, ``eta_star`` the upper bound on the
    inflation parameters and ``alpha_star`` the lower bound on the proportion
    of good points. ``alpha_fixed``/``eta_fixed`` pin those parameters
    instead of estimating them. ``contaminated_starts`` lists extra
    ``(alpha, eta)`` starting values tried next to the degenerate warm start
    (``alpha = 1 - 1e-6``, ``eta = 1 + 1e-6``), each applied to the
    ``warm_candidates`` best distinct Gaussian-mixture solutions; the best
    final likelihood wins.
    """

    epsilon: float = 1e-5
    eta_star: float = 1000.0
    alpha_star: float = 0.5
    max_iter: int = 1000
    seed: int = 0
    restarts: int = 10
    kmeans_starts: int = 1
    alpha_fixed: float | None = None
    eta_fixed: float | None = None
    contaminated_starts: tuple = ((0.999, 1.01), (0.9, 10.0))
    warm_candidates: int = 3
    partition_starts: bool = True

    def __post_init__(self):
        if not self.eta_star > 1:
            raise ValueError("eta_star must exceed 1")
        if not 0 <= self.alpha_star < 1:
            raise ValueError("alpha_star must lie in [0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.restarts < 0 or self.kmeans_starts < 0 or self.restarts + self.kmeans_starts < 1:
            raise ValueError("at least one initialization start is required")
        if self.alpha_fixed is not None and not 0 < self.alpha_fixed < 1:
            raise ValueError("alpha_fixed must lie in (0, 1)")
        if self.eta_fixed is not None and not self.eta_fixed > 1:
            raise ValueError("eta_fixed must exceed 1")


@dataclass
class Posteriors:
    """Component responsibilities ``z`` and good-point probabilities ``v``, both (n, G)."""

    z: np.ndarray
    v: np.ndarray


@dataclass
class FitResult:
    structure: StructureId
    G: int
    params: ModelParams
    posteriors: Posteriors
    loglik_trace: list
    converged: bool
    iterations: int
    warnings: list = field(default_factory=list)
    gaussian: bool = False
    gpcm_loglik: float | None = None

    @property
    def loglik(self) -> float:
        return self.loglik_trace[-1]

    @property
    def n(self) -> int:
        return self.posteriors.z.shape[0]

    @property
    def n_params(self) -> int:
        from .selection import count_free_params

        return count_free_params(self.structure, self.G, self.params.p, contaminated=not self.gaussian)

    @property
    def bic(self) -> float:
        from .selection import bic

        return bic(self.loglik, self.n_params, self.n)


# ---------------------------------------------------------------------------
# E-step


def _component_terms(X, psi: ModelParams):
    """Per-component log good/bad terms and squared distances, each (n, G)."""
    n, p = X.shape
    G = psi.G
    log_phi = np.empty((n, G))
    delta = np.empty((n, G))
    base = np.empty(G)
    for g, cov in enumerate(psi.covs()):
        y = cov.whiten((X - psi.mu[g]).T)
        delta[:, g] = np.einsum("ij,ij->j", y, y)
        base[g] = -0.5 * (p * LOG_2PI + cov.logdet)
        log_phi[:, g] = base[g] - 0.5 * delta[:, g]
    return log_phi, delta, base


def e_step(X, psi: ModelParams, gaussian=False):
    """Posterior expectations and observed-data log-likelihood.

    Returns ``(Posteriors, loglik)``. With ``gaussian=True`` the model is the
    plain Gaussian mixture and ``v`` is identically one.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    log_phi, delta, base = _component_terms(X, psi)
    if gaussian:
        log_f = log_phi
        v = np.ones_like(log_phi)
    else:
        alpha, eta = psi.alpha, psi.eta
        good = np.log(alpha) + log_phi
        bad = np.log1p(-alpha) + base - 0.5 * p * np.log(eta) - 0.5 * delta / eta
        log_f = np.logaddexp(good, bad)
        v = np.exp(good - log_f)
    log_w = np.log(psi.pi) + log_f
    log_p = logsumexp(log_w, axis=1)
    bad_rows = np.flatnonzero(~np.isfinite(log_p))
    if bad_rows.size:
        raise UnderflowError(int(bad_rows[0]))
    z = np.exp(log_w - log_p[:, None])
    z /= z.sum(axis=1, keepdims=True)
    np.clip(v, 0.0, 1.0, out=v)
    return Posteriors(z=z, v=v), float(log_p.sum())


def loglik(X, psi: ModelParams, gaussian=False) -> float:
    return e_step(X, psi, gaussian)[1]


# ---------------------------------------------------------------------------
# CM-steps


def alpha_objective(alpha, zcol, vcol):
    zcol = np.asarray(zcol, dtype=float)
    vcol = np.asarray(vcol, dtype=float)
    return float(np.sum(zcol * (vcol * np.log(alpha) + (1 - vcol) * np.log1p(-alpha))))


def update_alpha(zcol, vcol, alpha_star, eps=EPS_ALPHA) -> float:
    """Maximize the good-proportion term of Q over ``(alpha_star, 1)``.

    The objective is concave, so the constrained maximizer is the clamped
    stationary point ``sum(z v) / sum(z)``.
    """
    zcol = np.asarray(zcol, dtype=float)
    vcol = np.asarray(vcol, dtype=float)
    total = zcol.sum()
    if not total > 0:
        raise ComponentDeathError(-1, float(total))
    a = float(np.dot(zcol, vcol) / total)
    return float(np.clip(a, alpha_star + eps, 1.0 - eps))


def eta_objective(eta, A, B, p):
    """The eta-dependent part of Q for one component."""
    return -0.5 * p * A * np.log(eta) - 0.5 * B / eta


def update_eta(A, B, p, eta_star, eps=EPS_ETA) -> float:
    """Maximize :func:`eta_objective` over ``(1, eta_star)``.

    ``A = sum z (1 - v)`` and ``B = sum z (1 - v) delta``. The objective is
    unimodal with its peak at ``B / (p A)``.
    """
    if not A > 0:
        return 1.0 + eps
    return float(np.clip(B / (p * A), 1.0 + eps, eta_star))


def _weighted_scatter(X, w, mu):
    W = np.empty((w.shape[1], X.shape[1], X.shape[1]))
    for g in range(w.shape[1]):
        d = X - mu[g]
        W[g] = (d * w[:, g, None]).T @ d
    return W


def cm_step1(X, post: Posteriors, psi_prev: ModelParams, cfg: FitConfig, gaussian=False,
             diagnostics=None) -> ModelParams:
    """Update weights, good proportions, means and covariances (``eta`` held fixed)."""
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    z, v = post.z, post.v
    notes = [] if diagnostics is None else diagnostics
    ng = z.sum(axis=0)
    for g in np.flatnonzero(ng < DEATH_FRACTION * n):
        raise ComponentDeathError(int(g), float(ng[g]))
    pi = ng / n
    pi = pi / pi.sum()
    G = z.shape[1]

    if gaussian:
        alpha = np.full(G, 1.0 - EPS_ALPHA)
        w = z
    else:
        if cfg.alpha_fixed is not None:
            alpha = np.full(G, cfg.alpha_fixed)
        else:
            alpha = np.array([update_alpha(z[:, g], v[:, g], cfg.alpha_star) for g in range(G)])
        w = z * (v + (1.0 - v) / psi_prev.eta)
    s = w.sum(axis=0)
    mu = (w.T @ X) / s[:, None]
    W = _weighted_scatter(X, w, mu)
    for g in np.flatnonzero(ng < p + 1):
        W[g] += SMALL_CLUSTER_RIDGE * np.trace(W[g]) / p * np.eye(p)
        msg = f"small cluster: component {g} has effective size below p + 1"
        if msg not in notes:
            notes.append(msg)

    structure = psi_prev.structure
    prev = psi_prev.decomps if psi_prev is not None else None
    ridge = FACTOR_RIDGE
    for _ in range(6):
        decs = update_sigmas(structure, ScatterSet(W, ng), prev, diagnostics=notes)
        new = ModelParams(structure, pi, alpha, mu, decs, psi_prev.eta.copy())
        try:
            new.covs()
            return new
        except FactorizationError:
            for g in range(G):
                W[g] += ridge * np.trace(W[g]) / p * np.eye(p)
            ridge *= 100.0
            msg = "ridge added after covariance factorization failure"
            if msg not in notes:
                notes.append(msg)
    raise FactorizationError("covariance update failed to factorize after regularization")


def cm_step2(X, post: Posteriors, psi1: ModelParams, cfg: FitConfig) -> np.ndarray:
    """Update the inflation parameters given the CM-step 1 estimates."""
    if cfg.eta_fixed is not None:
        return np.full(psi1.G, cfg.eta_fixed)
    X = np.asarray(X, dtype=float)
    _, delta, _ = _component_terms(X, psi1)
    bad_w = post.z * (1.0 - post.v)
    A = bad_w.sum(axis=0)
    B = np.sum(bad_w * delta, axis=0)
    return np.array([update_eta(a, b, psi1.p, cfg.eta_star) for a, b in zip(A, B)])


# ---------------------------------------------------------------------------
# Convergence


def aitken_check(l_r, l_r1, l_r2, epsilon):
    """Aitken-accelerated convergence test on three consecutive log-likelihoods.

    Returns ``(converged, l_inf)`` where ``l_inf`` estimates the asymptotic
    maximum. A non-increasing step (``l_r1 - l_r < 1e-14``) counts as
    converged.
    """
    denom = l_r1 - l_r
    if denom < 1e-14:
        return True, l_r2
    a = (l_r2 - l_r1) / denom
    if a >= 1.0:
        return False, np.inf
    l_inf = l_r1 + (l_r2 - l_r1) / (1.0 - a)
    gap = l_inf - l_r1
    return bool(0.0 <= gap < epsilon), float(l_inf)


# ---------------------------------------------------------------------------
# Driver


def _iterate(X, psi: ModelParams, cfg: FitConfig, gaussian: bool, G: int) -> FitResult:
    notes: list = []
    post, ll = e_step(X, psi, gaussian)
    trace = [ll]
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        psi1 = cm_step1(X, post, psi, cfg, gaussian=gaussian, diagnostics=notes)
        if gaussian:
            psi = psi1
        else:
            psi = replace(psi1, eta=cm_step2(X, post, psi1, cfg))
        post, ll = e_step(X, psi, gaussian)
        if ll < trace[-1] - MONOTONE_SLACK * max(1.0, abs(trace[-1])):
            msg = f"log-likelihood decreased at iteration {it}"
            if msg not in notes:
                notes.append(msg)
        trace.append(ll)
        if len(trace) >= 3 and aitken_check(*trace[-3:], cfg.epsilon)[0]:
            converged = True
            break
    return FitResult(
        structure=psi.structure, G=G, params=psi, posteriors=post, loglik_trace=trace,
        converged=converged, iterations=it, warnings=notes, gaussian=gaussian,
    )


def _partition_start(X, labels, G, structure, cfg):
    z = np.zeros((X.shape[0], G))
    z[np.arange(X.shape[0]), labels] = 1.0
    if np.any(z.sum(axis=0) < 1):
        raise ComponentDeathError(int(np.argmin(z.sum(axis=0))), 0.0)
    p = X.shape[1]
    placeholder = ModelParams(
        structure, np.full(G, 1.0 / G), np.full(G, 1.0 - EPS_ALPHA), np.zeros((G, p)),
        [_unit_decomp(p)] * G, np.full(G, 1.0 + EPS_ETA),
    )
    post = Posteriors(z=z, v=np.ones_like(z))
    return cm_step1(X, post, replace(placeholder), cfg, gaussian=True, diagnostics=[])


def _unit_decomp(p):
    from .structures import EigenDecomposition

    return EigenDecomposition(1.0, np.ones(p), np.eye(p))


def _initial_partitions(X, G, cfg: FitConfig, rng):
    n = X.shape[0]
    parts = []
    if G == 1:
        return [np.zeros(n, dtype=int)]
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Xs = (X - X.mean(axis=0)) / scale
    for _ in range(cfg.kmeans_starts):
        try:
            with warnings.catch_warnings(), np.errstate(invalid="ignore", divide="ignore"):
                warnings.simplefilter("ignore")
                _, labels = kmeans2(Xs, G, minit="++", seed=rng)
        except Exception:  # noqa: BLE001 - kmeans is only a seeding heuristic
            continue
        parts.append(labels)
    for _ in range(cfg.restarts):
        parts.append(rng.integers(0, G, size=n))
    return parts


def _gpcm_solutions(X, structure, G, cfg: FitConfig, rng, partition_starts=None):
    """All successful Gaussian-mixture EM runs, best first.

    When ``partition_starts`` is a list, the one-M-step starting parameters
    of every partition are appended to it.
    """
    X = np.asarray(X, dtype=float)
    structure = as_structure(structure)
    if X.shape[0] < G:
        raise ValueError(f"need at least G={G} observations, got {X.shape[0]}")
    results = []
    errors = []
    for labels in _initial_partitions(X, G, cfg, rng):
        try:
            psi0 = _partition_start(X, labels, G, structure, cfg)
            if partition_starts is not None:
                partition_starts.append(psi0)
            res = _iterate(X, psi0, cfg, gaussian=True, G=G)
        except (ContamixError, np.linalg.LinAlgError, ValueError) as exc:
            errors.append(str(exc))
            continue
        res.gpcm_loglik = res.loglik
        results.append(res)
    if not results:
        raise FitError(
            f"all Gaussian-mixture starts failed for {structure.value}, G={G}: "
            + "; ".join(sorted(set(errors))[:3])
        )
    # stable sort keeps the first-found run among ties
    results.sort(key=lambda r: -r.loglik)
    return results


def fit_gpcm(X, structure, G: int, cfg: FitConfig = FitConfig(), rng=None) -> FitResult:
    """Fit the Gaussian mixture with the given covariance structure by EM.

    Every start is a hard partition (k-means on standardized data, then
    uniformly random ones) followed by one M-step; the best final
    log-likelihood is kept.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    return _gpcm_solutions(X, structure, G, cfg, rng)[0]


def _distinct(results, k, tol=1e-6):
    out = []
    for r in results:
        if all(abs(r.loglik - o.loglik) > tol * max(1.0, abs(o.loglik)) for o in out):
            out.append(r)
        if len(out) == k:
            break
    return out


def degenerate_start(params: ModelParams) -> ModelParams:
    """Contaminated parameters that reproduce a Gaussian-mixture fit."""
    return replace(
        params,
        alpha=np.full(params.G, 1.0 - EPS_ALPHA),
        eta=np.full(params.G, 1.0 + EPS_ETA),
    )


def init_from_gpcm(X, structure, G: int, cfg: FitConfig = FitConfig(), rng=None) -> ModelParams:
    """Warm start: the best Gaussian-mixture fit with ``alpha ~ 1`` and ``eta ~ 1``."""
    return degenerate_start(fit_gpcm(X, structure, G, cfg, rng).params)


def _contaminate(params: ModelParams, alpha0, eta0, cfg: FitConfig) -> ModelParams:
    return replace(
        params,
        alpha=np.full(params.G, max(alpha0, cfg.alpha_star + EPS_ALPHA)),
        eta=np.full(params.G, min(eta0, cfg.eta_star)),
    )


def _pin(params: ModelParams, cfg: FitConfig) -> ModelParams:
    if cfg.alpha_fixed is None and cfg.eta_fixed is None:
        return params
    return replace(
        params,
        alpha=params.alpha if cfg.alpha_fixed is None else np.full(params.G, cfg.alpha_fixed),
        eta=params.eta if cfg.eta_fixed is None else np.full(params.G, cfg.eta_fixed),
    )


def fit(X, structure, G: int, cfg: FitConfig = FitConfig(), init: ModelParams | None = None) -> FitResult:
    """Fit a mixture of contaminated Gaussians by ECM.

    Without ``init`` the fit is warm-started from the Gaussian-mixture
    solution of the same structure. Besides the degenerate start that
    reproduces that solution exactly, the starts in
    ``cfg.contaminated_starts`` are run from the means and covariances of
    the best few distinct Gaussian-mixture local maxima; the run ending at
    the highest log-likelihood is returned. Because the
    degenerate run is monotone, the result never falls below the
    Gaussian-mixture likelihood.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D array")
    structure = as_structure(structure)
    if X.shape[0] < G:
        raise ValueError(f"need at least G={G} observations, got {X.shape[0]}")
    gpcm_ll = None
    if init is None:
        rng = np.random.default_rng(cfg.seed)
        partition_starts: list = []
        solutions = _gpcm_solutions(X, structure, G, cfg, rng, partition_starts)
        gpcm_ll = solutions[0].loglik
        starts = [degenerate_start(solutions[0].params)]
        if cfg.alpha_fixed is None or cfg.eta_fixed is None:
            warm = [sol.params for sol in _distinct(solutions, cfg.warm_candidates)]
            for a0, e0 in cfg.contaminated_starts:
                for params in warm:
                    starts.append(_contaminate(params, a0, e0, cfg))
            if cfg.partition_starts:
                a0, e0 = cfg.contaminated_starts[-1]
                starts.extend(_contaminate(ps, a0, e0, cfg) for ps in partition_starts)
    else:
        if init.structure is not structure or init.G != G:
            raise ValueError("initial parameters do not match the requested model")
        starts = [init]
    best = None
    errors = []
    for psi0 in starts:
        try:
            res = _iterate(X, _pin(psi0, cfg), cfg, gaussian=False, G=G)
        except (ComponentDeathError, FactorizationError, UnderflowError) as exc:
            errors.append(exc)
            continue
        if best is None or res.loglik > best.loglik:
            best = res
    if best is None:
        raise errors[0]
    best.gpcm_loglik = gpcm_ll
    return best
