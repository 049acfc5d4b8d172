"""Log-space Gaussian, contaminated Gaussian and mixture densities.

All evaluation goes through a Cholesky factor of the covariance; no explicit
inverse is ever formed. Functions accept a single observation (shape ``(p,)``)
or a batch (shape ``(n, p)``) and return a scalar or an ``(n,)`` array
accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .exceptions import FactorizationError

LOG_2PI = np.log(2.0 * np.pi)


class CovMatrix:
    """Symmetric positive-definite matrix with a cached Cholesky factor."""

    def __init__(self, entries, *, check_symmetry=True):
        a = np.array(entries, dtype=float, copy=True)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise FactorizationError(f"covariance must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise FactorizationError("covariance has non-finite entries")
        if check_symmetry:
            scale = max(np.max(np.abs(a)), np.finfo(float).tiny)
            if np.max(np.abs(a - a.T)) > 1e-12 * scale:
                raise FactorizationError("covariance is not symmetric")
        a = 0.5 * (a + a.T)
        try:
            chol = np.linalg.cholesky(a)
        except np.linalg.LinAlgError as exc:
            raise FactorizationError("covariance is not positive definite") from exc
        if not np.all(np.diag(chol) > 0):
            raise FactorizationError("covariance is not positive definite")
        self.entries = a
        self.chol = chol
        self.entries.flags.writeable = False
        self.chol.flags.writeable = False

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def logdet(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self.chol))))

    def whiten(self, diff):
        """Solve ``L y = diff`` for the lower Cholesky factor ``L``."""
        return solve_triangular(self.chol, diff, lower=True, check_finite=False)

    def solve(self, b):
        y = self.whiten(b)
        return solve_triangular(self.chol.T, y, lower=False, check_finite=False)

    def __repr__(self):
        return f"CovMatrix({self.entries.tolist()!r})"


def as_cov(sigma) -> CovMatrix:
    return sigma if isinstance(sigma, CovMatrix) else CovMatrix(sigma)


def _prepare(x, mu, cov: CovMatrix):
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    single = x.ndim == 1
    xs = np.atleast_2d(x)
    if mu.ndim != 1 or xs.shape[1] != mu.shape[0] or mu.shape[0] != cov.dim:
        raise ValueError(
            f"dimension mismatch: x {x.shape}, mu {mu.shape}, sigma {cov.entries.shape}"
        )
    return xs, mu, single


def mahalanobis_sq(x, mu, sigma):
    """Squared Mahalanobis distance ``(x - mu)' sigma^{-1} (x - mu)``."""
    cov = as_cov(sigma)
    xs, mu, single = _prepare(x, mu, cov)
    y = cov.whiten((xs - mu).T)
    d = np.einsum("ij,ij->j", y, y)
    return float(d[0]) if single else d


def log_gaussian_pdf(x, mu, sigma):
    """Log density of the multivariate normal ``N(mu, sigma)`` at ``x``."""
    cov = as_cov(sigma)
    xs, mu, single = _prepare(x, mu, cov)
    y = cov.whiten((xs - mu).T)
    delta = np.einsum("ij,ij->j", y, y)
    out = -0.5 * (cov.dim * LOG_2PI + cov.logdet + delta)
    return float(out[0]) if single else out


def _contaminated_terms(delta, logdet, p, alpha, eta):
    """Log of the good and bad weighted terms from precomputed distances."""
    base = -0.5 * (p * LOG_2PI + logdet)
    good = np.log(alpha) + base - 0.5 * delta
    bad = np.log1p(-alpha) + base - 0.5 * p * np.log(eta) - 0.5 * delta / eta
    return good, bad


@dataclass
class ComponentParams:
    """One contaminated Gaussian component: weight, good proportion, mean,
    covariance of the good points and inflation of the bad ones."""

    pi: float
    alpha: float
    mu: np.ndarray
    sigma: CovMatrix
    eta: float

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma = as_cov(self.sigma)
        if not self.pi > 0:
            raise ValueError(f"pi must be positive, got {self.pi}")
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.eta >= 1:
            raise ValueError(f"eta must be at least 1, got {self.eta}")


def contaminated_log_pdf(x, comp: ComponentParams):
    """Log of ``alpha N(x; mu, sigma) + (1 - alpha) N(x; mu, eta sigma)``."""
    cov = comp.sigma
    xs, mu, single = _prepare(x, comp.mu, cov)
    delta = mahalanobis_sq(xs, mu, cov)
    if comp.alpha >= 1.0:
        out = -0.5 * (cov.dim * LOG_2PI + cov.logdet + delta)
    else:
        good, bad = _contaminated_terms(delta, cov.logdet, cov.dim, comp.alpha, comp.eta)
        out = np.logaddexp(good, bad)
    return float(out[0]) if single else out


def mixture_log_pdf(x, psi):
    """Log density of a mixture of contaminated Gaussians.

    ``psi`` is anything exposing ``components()`` that yields
    :class:`ComponentParams` (e.g. :class:`contamix.params.ModelParams`) or a
    plain sequence of :class:`ComponentParams`.
    """
    comps = list(psi.components()) if hasattr(psi, "components") else list(psi)
    total = sum(c.pi for c in comps)
    if abs(total - 1.0) > 1e-10:
        raise ValueError(f"mixing weights sum to {total}, not 1")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    terms = np.stack(
        [np.log(c.pi) + np.atleast_1d(contaminated_log_pdf(x, c)) for c in comps]
    )
    out = logsumexp(terms, axis=0)
    return float(out[0]) if single else out
