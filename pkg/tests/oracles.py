"""Independent reference implementations used as test oracles.

Nothing here imports the fitting code: the covariance objective is minimized
by generic numerical optimization and the Gaussian mixture EM is written out
from scratch with scipy densities.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp
from scipy.stats import multivariate_normal


def random_scatter(rng, G=2, p=2, n_range=(4.0, 60.0)):
    """Random full-rank scattering matrices with matching effective sizes."""
    n = rng.uniform(*n_range, size=G)
    W = []
    for ng in n:
        k = max(int(np.ceil(ng)), p + 1)
        a = rng.normal(size=(k, p)) * rng.uniform(0.2, 3.0, size=p)
        rot = np.linalg.qr(rng.normal(size=(p, p)))[0]
        W.append((a @ rot).T @ (a @ rot) * (ng / k))
    return np.array(W), n


def objective(sigmas, W, n):
    total = 0.0
    for s, w, ng in zip(sigmas, W, n):
        sign, logdet = np.linalg.slogdet(s)
        if sign <= 0:
            return np.inf
        total += ng * logdet + np.trace(np.linalg.solve(s, w))
    return float(total)


def _rot(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s], [s, c]])


def _layout(code, G):
    """Positions of (log volume, log shape, angle) for each component in the vector."""
    vol, shape, orient = code
    idx = 0
    lv = [idx] * G if vol == "E" else list(range(idx, idx + G))
    idx = max(lv) + 1
    if shape == "I":
        sh = [None] * G
    else:
        sh = [idx] * G if shape == "E" else list(range(idx, idx + G))
        idx = max(sh) + 1
    if orient == "I" or shape == "I":
        th = [None] * G
    else:
        th = [idx] * G if orient == "E" else list(range(idx, idx + G))
        idx = max(th) + 1
    return lv, sh, th, idx


def _build(theta, layout, G):
    lv, sh, th, _ = layout
    out = []
    for g in range(G):
        lam = np.exp(theta[lv[g]])
        s = 0.0 if sh[g] is None else theta[sh[g]]
        a = 0.0 if th[g] is None else theta[th[g]]
        r = _rot(a)
        out.append(lam * r @ np.diag([np.exp(s), np.exp(-s)]) @ r.T)
    return out


def numerical_minimum(code, W, n, rng, starts=12):
    """Smallest objective over multi-start quasi-Newton runs (p = 2 only)."""
    G = W.shape[0]
    layout = _layout(code, G)
    dim = layout[3]

    lv, sh, th, _ = layout

    def f(theta):
        # analytic 2 x 2: log|S| = 2 log lam, tr(S^-1 W) in the rotated frame
        total = 0.0
        for g in range(G):
            loglam = theta[lv[g]]
            s = 0.0 if sh[g] is None else theta[sh[g]]
            a = 0.0 if th[g] is None else theta[th[g]]
            c, si = np.cos(a), np.sin(a)
            w = W[g]
            r11 = c * c * w[0, 0] + 2 * c * si * w[0, 1] + si * si * w[1, 1]
            r22 = si * si * w[0, 0] - 2 * c * si * w[0, 1] + c * c * w[1, 1]
            total += 2 * n[g] * loglam + np.exp(-loglam) * (r11 * np.exp(-s) + r22 * np.exp(s))
        return total

    seeds = []
    # moment-based start: per-group log volume, log shape and principal angle
    base = np.zeros(dim)
    for g, (w, ng) in enumerate(zip(W, n)):
        vals, vecs = np.linalg.eigh(w / ng)
        base[layout[0][g]] = 0.5 * np.log(vals).sum()
        if layout[1][g] is not None:
            base[layout[1][g]] = 0.5 * np.log(vals[1] / vals[0])
        if layout[2][g] is not None:
            base[layout[2][g]] = np.arctan2(vecs[1, 1], vecs[0, 1])
    seeds.append(base)
    for _ in range(starts):
        seeds.append(base + rng.normal(scale=1.0, size=dim))
    runs = [minimize(f, x0, method="BFGS", options={"gtol": 1e-10, "maxiter": 2000}) for x0 in seeds]
    top = min(runs, key=lambda r: r.fun)
    polish = minimize(f, top.x, method="Nelder-Mead",
                      options={"xatol": 1e-12, "fatol": 1e-13, "maxiter": 4000})
    best = min(top.fun, polish.fun)
    # report the objective of the generic formula at the optimum found
    x = polish.x if polish.fun <= top.fun else top.x
    return min(best, objective(_build(x, layout, G), W, n))


# ---------------------------------------------------------------------------
# Plain Gaussian mixture EM


def gmm_loglik(X, pi, mu, sigma):
    terms = np.column_stack(
        [np.log(pi[g]) + multivariate_normal(mu[g], sigma[g]).logpdf(X) for g in range(len(pi))]
    )
    return float(logsumexp(terms, axis=1).sum())


def plain_gmm_em(X, pi, mu, sigma, iters=2000, tol=1e-12):
    """Unconstrained (VVV) Gaussian mixture EM from the given start."""
    pi, mu, sigma = np.array(pi, float), np.array(mu, float), np.array(sigma, float)
    G = len(pi)
    prev = -np.inf
    for _ in range(iters):
        terms = np.column_stack(
            [np.log(pi[g]) + multivariate_normal(mu[g], sigma[g]).logpdf(X) for g in range(G)]
        )
        ll = logsumexp(terms, axis=1)
        z = np.exp(terms - ll[:, None])
        cur = ll.sum()
        if abs(cur - prev) < tol:
            break
        prev = cur
        ng = z.sum(axis=0)
        pi = ng / ng.sum()
        mu = (z.T @ X) / ng[:, None]
        for g in range(G):
            d = X - mu[g]
            sigma[g] = (z[:, g, None] * d).T @ d / ng[g]
    return gmm_loglik(X, pi, mu, sigma), pi, mu, sigma
