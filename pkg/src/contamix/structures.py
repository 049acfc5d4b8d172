"""Eigen-decomposed covariance structures and their constrained updates.

Every component covariance is written ``lam * Gamma @ diag(delta) @ Gamma.T``
with ``prod(delta) == 1``. The fourteen structure codes constrain volume
(``lam``), shape (``delta``) and orientation (``Gamma``) to be equal across
components (``E``), variable (``V``), or identity (``I``).

:func:`update_sigmas` minimizes

    F({Sigma_g}) = sum_g n_g log|Sigma_g| + tr(W_g Sigma_g^{-1})

under a structure's equality pattern, given weighted scattering matrices
``W_g`` and effective sizes ``n_g``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .exceptions import FactorizationError

INNER_TOL = 1e-8
INNER_MAX_ITER = 100
SCATTER_RIDGE = 1e-8


class StructureId(str, enum.Enum):
    EII = "EII"
    VII = "VII"
    EEI = "EEI"
    VEI = "VEI"
    EVI = "EVI"
    VVI = "VVI"
    EEE = "EEE"
    VEE = "VEE"
    EVE = "EVE"
    EEV = "EEV"
    VVE = "VVE"
    VEV = "VEV"
    EVV = "EVV"
    VVV = "VVV"

    @property
    def volume(self) -> str:
        return self.value[0]

    @property
    def shape(self) -> str:
        return self.value[1]

    @property
    def orientation(self) -> str:
        return self.value[2]

    @property
    def iterative(self) -> bool:
        return self in _ITERATIVE

    def __str__(self):
        return self.value


ALL_STRUCTURES = tuple(StructureId)
_ITERATIVE = frozenset(
    {StructureId.VEI, StructureId.VEE, StructureId.EVE, StructureId.VVE, StructureId.VEV}
)


def as_structure(code) -> StructureId:
    try:
        return StructureId(str(code).upper())
    except ValueError:
        raise ValueError(f"unknown covariance structure {code!r}") from None


@dataclass(frozen=True)
class EigenDecomposition:
    """Volume ``lam``, unit-determinant shape ``delta`` and orientation ``gamma``."""

    lam: float
    delta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        delta = np.asarray(self.delta, dtype=float)
        gamma = np.asarray(self.gamma, dtype=float)
        p = delta.shape[0]
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"volume must be positive, got {self.lam}")
        if delta.ndim != 1 or np.any(delta <= 0):
            raise ValueError("shape entries must be positive")
        if abs(np.sum(np.log(delta))) > 1e-8 * max(1.0, p):
            raise ValueError("shape matrix must have unit determinant")
        if gamma.shape != (p, p) or not np.allclose(gamma.T @ gamma, np.eye(p), atol=1e-10):
            raise ValueError("orientation must be an orthogonal matrix")
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "gamma", gamma)

    @property
    def dim(self) -> int:
        return self.delta.shape[0]

    def compose(self) -> np.ndarray:
        return compose(self)

    def scaled(self, factor: float) -> "EigenDecomposition":
        return EigenDecomposition(self.lam * factor, self.delta, self.gamma)


def compose(d: EigenDecomposition) -> np.ndarray:
    """Return ``lam * Gamma diag(delta) Gamma'`` as a symmetric array."""
    s = d.lam * (d.gamma * d.delta) @ d.gamma.T
    return 0.5 * (s + s.T)


def _canonical_vectors(vecs: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis for the span of ``vecs``' columns."""
    k = vecs.shape[1]
    if k == 1:
        v = vecs[:, 0].copy()
    else:
        # Gram-Schmidt on the columns of the projector: basis-independent.
        proj = vecs @ vecs.T
        basis = []
        for col in proj.T:
            w = col - sum((b @ col) * b for b in basis)
            norm = np.linalg.norm(w)
            if norm > 1e-8:
                basis.append(w / norm)
            if len(basis) == k:
                break
        v = np.column_stack(basis)
        v, _ = np.linalg.qr(v)
    v = v.reshape(vecs.shape[0], -1)
    for j in range(v.shape[1]):
        nz = np.flatnonzero(np.abs(v[:, j]) > 1e-12)
        if nz.size and v[nz[0], j] < 0:
            v[:, j] = -v[:, j]
    order = sorted(range(v.shape[1]), key=lambda j: tuple(-v[:, j]))
    return v[:, order]


def _eig_desc(a: np.ndarray, canonical=True):
    """Eigenvalues (decreasing) and eigenvectors of a symmetric matrix."""
    vals, vecs = np.linalg.eigh(0.5 * (a + a.T))
    vals = vals[::-1]
    vecs = vecs[:, ::-1]
    if not canonical:
        return vals, vecs
    out = np.empty_like(vecs)
    i = 0
    p = len(vals)
    scale = max(abs(vals[0]), np.finfo(float).tiny)
    while i < p:
        j = i + 1
        while j < p and abs(vals[j] - vals[i]) <= 1e-10 * scale:
            j += 1
        out[:, i:j] = _canonical_vectors(vecs[:, i:j])
        i = j
    return vals, out


def decompose(sigma) -> EigenDecomposition:
    """Split a symmetric positive-definite matrix into volume, shape and orientation."""
    a = np.asarray(getattr(sigma, "entries", sigma), dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise FactorizationError(f"expected a square matrix, got shape {a.shape}")
    vals, vecs = _eig_desc(a)
    if not np.all(np.isfinite(vals)) or vals[-1] <= 0:
        raise FactorizationError("matrix is not positive definite")
    logs = np.log(vals)
    loglam = logs.mean()
    return EigenDecomposition(np.exp(loglam), np.exp(logs - loglam), vecs)


def sigma_param_count(structure, G: int, p: int) -> int:
    """Number of free covariance parameters across ``G`` components."""
    s = as_structure(structure)
    if G < 1 or p < 1:
        raise ValueError("G and p must be positive")
    rot = p * (p - 1) // 2
    return {
        StructureId.EII: 1,
        StructureId.VII: G,
        StructureId.EEI: p,
        StructureId.VEI: G + p - 1,
        StructureId.EVI: 1 + G * (p - 1),
        StructureId.VVI: G * p,
        StructureId.EEE: p * (p + 1) // 2,
        StructureId.VEE: G + p - 1 + rot,
        StructureId.EVE: 1 + G * (p - 1) + rot,
        StructureId.EEV: p + G * rot,
        StructureId.VVE: G * p + rot,
        StructureId.VEV: G + p - 1 + G * rot,
        StructureId.EVV: 1 + G * (p - 1) + G * rot,
        StructureId.VVV: G * p * (p + 1) // 2,
    }[s]


@dataclass
class ScatterSet:
    """Weighted scattering matrices ``W`` (G, p, p) and effective sizes ``n`` (G,)."""

    W: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.n = np.asarray(self.n, dtype=float)
        if self.W.ndim == 2:
            self.W = self.W[None]
        if self.W.ndim != 3 or self.W.shape[1] != self.W.shape[2]:
            raise ValueError(f"W must have shape (G, p, p), got {self.W.shape}")
        if self.n.shape != (self.W.shape[0],):
            raise ValueError("n must hold one effective size per scattering matrix")
        if np.any(self.n <= 0):
            raise ValueError("effective sizes must be positive")
        self.W = 0.5 * (self.W + np.swapaxes(self.W, 1, 2))

    @property
    def G(self) -> int:
        return self.W.shape[0]

    @property
    def p(self) -> int:
        return self.W.shape[1]


def scatter_objective(sigmas, scatter: ScatterSet) -> float:
    """``sum_g n_g log|Sigma_g| + tr(W_g Sigma_g^{-1})`` for explicit matrices."""
    total = 0.0
    for s, w, n in zip(sigmas, scatter.W, scatter.n):
        s = compose(s) if isinstance(s, EigenDecomposition) else np.asarray(s)
        sign, logdet = np.linalg.slogdet(s)
        if sign <= 0:
            return np.inf
        total += n * logdet + np.trace(np.linalg.solve(s, w))
    return float(total)


@dataclass
class _Notes:
    messages: list = field(default_factory=list)

    def add(self, msg):
        if msg not in self.messages:
            self.messages.append(msg)


def _geo_mean(x, axis=-1):
    return np.exp(np.mean(np.log(x), axis=axis))


def _diag_decomp(lam, diag_shape):
    """Axis-aligned decomposition; ``gamma`` is the permutation sorting the shape."""
    order = np.argsort(-diag_shape, kind="stable")
    p = diag_shape.shape[0]
    return EigenDecomposition(lam, diag_shape[order], np.eye(p)[:, order])


def _unit_det(d):
    """Rescale a positive vector to unit product; returns (scale, unit vector)."""
    g = _geo_mean(d)
    return g, d / g


def _spd_check(W, n, notes):
    """Ridge-regularize scattering matrices too degenerate for the update."""
    W = W.copy()
    p = W.shape[1]
    for g in range(W.shape[0]):
        tr = np.trace(W[g])
        if tr <= 0 or not np.isfinite(tr):
            raise FactorizationError(f"scattering matrix {g} has no spread")
        degenerate = n[g] < p
        if not degenerate:
            try:
                np.linalg.cholesky(W[g])
            except np.linalg.LinAlgError:
                degenerate = True
        if degenerate:
            W[g] = W[g] + SCATTER_RIDGE * tr / p * np.eye(p)
            notes.add(f"ridge added to degenerate scattering matrix of component {g}")
    return W


def _mm_orientation(gamma, W, A, omega):
    """One majorization-minimization step for a shared orientation.

    Decreases ``sum_g tr(W_g Gamma diag(1/A_g) Gamma')`` over orthogonal Gamma.
    """
    F = np.zeros_like(gamma)
    for w, a, om in zip(W, A, omega):
        F += (om * gamma - w @ gamma) / a
    u, _, vt = np.linalg.svd(F)
    return u @ vt


def _jacobi_sweep(gamma, W, A):
    """One cyclic sweep of exact plane-rotation updates of a shared orientation.

    With ``A`` fixed, ``sum_g tr(W_g Gamma diag(1/A_g) Gamma')`` restricted to
    a rotation by ``theta`` of columns ``(i, j)`` is ``c + P cos 2theta + Q
    sin 2theta``, so each rotation is minimized in closed form. Unlike the
    majorization step this is insensitive to the spread of the eigenvalues
    of ``W_g``.
    """
    gamma = gamma.copy()
    B = np.einsum("ki,gkl,lj->gij", gamma, W, gamma)
    inv = 1.0 / A
    p = gamma.shape[0]
    for i in range(p - 1):
        for j in range(i + 1, p):
            diff = inv[:, i] - inv[:, j]
            P = 0.5 * np.sum((B[:, i, i] - B[:, j, j]) * diff)
            Q = np.sum(B[:, i, j] * diff)
            r = np.hypot(P, Q)
            if r == 0.0:
                continue
            # current angle is 0 with value P; skip if already optimal
            if P <= -r * (1.0 - 1e-15):
                continue
            theta = 0.5 * np.arctan2(-Q, -P)
            c, s = np.cos(theta), np.sin(theta)
            gi, gj = gamma[:, i].copy(), gamma[:, j].copy()
            gamma[:, i], gamma[:, j] = c * gi + s * gj, -s * gi + c * gj
            bi, bj = B[:, :, i].copy(), B[:, :, j].copy()
            B[:, :, i], B[:, :, j] = c * bi + s * bj, -s * bi + c * bj
            bi, bj = B[:, i, :].copy(), B[:, j, :].copy()
            B[:, i, :], B[:, j, :] = c * bi + s * bj, -s * bi + c * bj
    return gamma


def _shared_orientation_update(W, n, prev_gamma, variable_volume, tol, max_iter, notes):
    """EVE (equal volume) and VVE (variable volume) with a common orientation."""
    G, p, _ = W.shape
    ntot = n.sum()
    omega = np.array([np.linalg.eigvalsh(w)[-1] for w in W])

    def diag_terms(gamma):
        d = np.einsum("ji,gjk,ki->gi", gamma, W, gamma)
        d = np.maximum(d, np.finfo(float).tiny)
        if variable_volume:
            A = d / n[:, None]
        else:
            geo = _geo_mean(d)
            lam = geo.sum() / ntot
            A = lam * d / geo[:, None]
        return A

    def objective(gamma, A):
        d = np.einsum("ji,gjk,ki->gi", gamma, W, gamma)
        return float(np.sum(n * np.sum(np.log(A), axis=1)) + np.sum(d / A))

    candidates = [_eig_desc(W.sum(axis=0), canonical=False)[1], np.eye(p)]
    candidates += [_eig_desc(w, canonical=False)[1] for w in W]
    if prev_gamma is not None:
        candidates.insert(0, prev_gamma)
    best = None
    for gamma in candidates:
        A = diag_terms(gamma)
        f = objective(gamma, A)
        if best is None or f < best[0]:
            best = (f, gamma, A)
    f_old, gamma, A = best
    converged = False
    for _ in range(max_iter):
        f_start = f_old
        # majorization step, then an exact rotation sweep; each is kept only if it helps
        for step in (lambda g, a: _mm_orientation(g, W, a, omega), lambda g, a: _jacobi_sweep(g, W, a)):
            new_gamma = step(gamma, A)
            new_A = diag_terms(new_gamma)
            f_new = objective(new_gamma, new_A)
            if f_new <= f_old:
                gamma, A, f_old = new_gamma, new_A, f_new
        if f_start - f_old < tol:
            converged = True
            break
    if not converged:
        notes.add("orientation update hit the inner iteration cap")
    out = []
    if variable_volume:
        for a in A:
            lam, shape = _unit_det(a)
            out.append(EigenDecomposition(lam, shape, gamma))
    else:
        lam = _geo_mean(A[0])
        for a in A:
            out.append(EigenDecomposition(lam, a / lam, gamma))
    return out


def _variable_volume_shared_shape(W, n, eig, prev_shape, tol, max_iter, notes):
    """Alternating volume/shape updates for VEI, VEE and VEV.

    ``eig[g]`` holds the eigenvalues of ``W_g`` expressed in the orientation
    used for that component (diagonal of W_g for VEI, eigenvalues of W_g for
    VEV). For VEE ``eig`` is None and the shared matrix is updated directly.
    """
    G, p, _ = W.shape
    if eig is None:
        # VEE: Sigma_g = lam_g C with |C| = 1.
        if prev_shape is None:
            c = W.sum(axis=0)
            c = c / np.exp(np.linalg.slogdet(c)[1] / p)
        else:
            c = prev_shape
        f_old = np.inf
        converged = False
        for _ in range(max_iter):
            cinv_w = np.array([np.linalg.solve(c, w) for w in W])
            lams = np.trace(cinv_w, axis1=1, axis2=2) / (p * n)
            f_new = float(np.sum(n * p * np.log(lams)) + p * n.sum())
            if f_old - f_new < tol:
                converged = True
                break
            f_old = f_new
            s = np.tensordot(1.0 / lams, W, axes=1)
            c = s / np.exp(np.linalg.slogdet(s)[1] / p)
            c = 0.5 * (c + c.T)
        if not converged:
            notes.add("shape/volume alternation hit the inner iteration cap")
        return lams, c
    # VEI / VEV: shape is a positive vector in a per-component frame.
    shape = np.ones(p) if prev_shape is None else np.asarray(prev_shape, dtype=float)
    f_old = np.inf
    converged = False
    for _ in range(max_iter):
        lams = np.sum(eig / shape, axis=1) / (p * n)
        f_new = float(np.sum(n * p * np.log(lams)) + p * n.sum())
        if f_old - f_new < tol:
            converged = True
            break
        f_old = f_new
        s = np.sum(eig / lams[:, None], axis=0)
        shape = s / _geo_mean(s)
    if not converged:
        notes.add("shape/volume alternation hit the inner iteration cap")
    return lams, shape


def update_sigmas(structure, scatter: ScatterSet, prev=None, *, tol=INNER_TOL,
                  max_iter=INNER_MAX_ITER, diagnostics=None):
    """Constrained minimizer of ``sum_g n_g log|Sigma_g| + tr(W_g Sigma_g^{-1})``.

    Parameters
    ----------
    structure : StructureId or str
        One of the fourteen covariance structure codes.
    scatter : ScatterSet
        Weighted scattering matrices and effective component sizes.
    prev : list of EigenDecomposition, optional
        Previous estimates, used as warm start by the iterative structures
        (VEI, VEE, EVE, VVE, VEV). With a warm start the returned objective
        never exceeds the objective at ``prev``.
    diagnostics : list, optional
        Receives human-readable notes (ridge regularization, inner-loop cap).

    Returns
    -------
    list of EigenDecomposition
        One per component. Shared factors are the same objects across
        components, so equality constraints hold bit for bit.
    """
    s = as_structure(structure)
    notes = _Notes()
    n = scatter.n
    W = _spd_check(scatter.W, n, notes)
    G, p, _ = W.shape
    ntot = n.sum()
    eye = np.eye(p)
    out: list[EigenDecomposition]

    if s is StructureId.EII:
        lam = np.trace(W.sum(axis=0)) / (p * ntot)
        d = EigenDecomposition(lam, np.ones(p), eye)
        out = [d] * G
    elif s is StructureId.VII:
        lams = np.trace(W, axis1=1, axis2=2) / (p * n)
        out = [EigenDecomposition(lam, np.ones(p), eye) for lam in lams]
    elif s is StructureId.EEI:
        lam, shape = _unit_det(np.diagonal(W.sum(axis=0)) / ntot)
        d = _diag_decomp(lam, shape)
        out = [d] * G
    elif s is StructureId.VEI:
        prev_shape = None
        if prev is not None:
            prev_shape = np.diag(compose(prev[0])) / prev[0].lam
        diags = np.diagonal(W, axis1=1, axis2=2)
        lams, shape = _variable_volume_shared_shape(W, n, diags, prev_shape, tol, max_iter, notes)
        base = _diag_decomp(1.0, shape)
        out = [EigenDecomposition(lam, base.delta, base.gamma) for lam in lams]
    elif s is StructureId.EVI:
        diags = np.diagonal(W, axis1=1, axis2=2)
        geo = _geo_mean(diags)
        lam = geo.sum() / ntot
        out = [_diag_decomp(lam, d / g) for d, g in zip(diags, geo)]
    elif s is StructureId.VVI:
        out = []
        for w, ng in zip(W, n):
            lam, shape = _unit_det(np.diag(w) / ng)
            out.append(_diag_decomp(lam, shape))
    elif s is StructureId.EEE:
        d = decompose(W.sum(axis=0) / ntot)
        out = [d] * G
    elif s is StructureId.VEE:
        prev_c = None
        if prev is not None:
            prev_c = compose(prev[0]) / prev[0].lam
        lams, c = _variable_volume_shared_shape(W, n, None, prev_c, tol, max_iter, notes)
        base = decompose(c)
        out = [EigenDecomposition(lam * base.lam, base.delta, base.gamma) for lam in lams]
    elif s in (StructureId.EVE, StructureId.VVE):
        prev_gamma = None if prev is None else prev[0].gamma
        out = _shared_orientation_update(
            W, n, prev_gamma, s is StructureId.VVE, tol, max_iter, notes
        )
    elif s is StructureId.EEV:
        pairs = [_eig_desc(w) for w in W]
        total = np.sum([vals for vals, _ in pairs], axis=0)
        geo, shape = _unit_det(np.maximum(total, np.finfo(float).tiny))
        lam = geo / ntot
        out = [EigenDecomposition(lam, shape, vecs) for _, vecs in pairs]
    elif s is StructureId.VEV:
        pairs = [_eig_desc(w) for w in W]
        eig = np.maximum(np.array([vals for vals, _ in pairs]), np.finfo(float).tiny)
        prev_shape = None if prev is None else prev[0].delta
        lams, shape = _variable_volume_shared_shape(W, n, eig, prev_shape, tol, max_iter, notes)
        out = [EigenDecomposition(lam, shape, vecs) for lam, (_, vecs) in zip(lams, pairs)]
    elif s is StructureId.EVV:
        mats = []
        geos = []
        for w in W:
            d = decompose(w)
            geos.append(d.lam)
            mats.append(d)
        lam = np.sum(geos) / ntot
        out = [EigenDecomposition(lam, d.delta, d.gamma) for d in mats]
    elif s is StructureId.VVV:
        out = [decompose(w / ng) for w, ng in zip(W, n)]
    else:  # pragma: no cover
        raise AssertionError(s)

    if diagnostics is not None:
        diagnostics.extend(m for m in notes.messages if m not in diagnostics)
    return out


def satisfies_pattern(structure, decs, atol=0.0) -> bool:
    """Check a list of decompositions against a structure's equality pattern."""
    s = as_structure(structure)
    p = decs[0].dim
    eye = np.eye(p)

    def same(vals):
        return all(np.allclose(v, vals[0], rtol=0, atol=atol) for v in vals[1:])

    lams = [d.lam for d in decs]
    if s.volume == "E" and not same(lams):
        return False
    # volume-free shape-orientation matrices; identical factors give identical matrices
    mats = [(d.gamma * d.delta) @ d.gamma.T for d in decs]
    if s.shape == "I":
        return all(np.allclose(m, eye, atol=max(atol, 1e-10)) for m in mats)
    if s.orientation == "I":
        if any(np.max(np.abs(m - np.diag(np.diag(m)))) > max(atol, 1e-10) for m in mats):
            return False
        if s.shape == "E":
            return same([np.diag(m) for m in mats])
        return True
    if s.shape == "E" and not same([np.sort(d.delta) for d in decs]):
        return False
    if s.shape == "E" and s.orientation == "E":
        return same(mats)
    if s.orientation == "E":
        return same([np.abs(d.gamma) for d in decs])
    return True


def project_structure(structure, decs):
    """Nearest structure-feasible decompositions, by averaging constrained factors.

    Used to canonicalize warm starts before fitting a constrained model.
    """
    s = as_structure(structure)
    G = len(decs)
    p = decs[0].dim
    eye = np.eye(p)
    mats = [compose(d) for d in decs]
    lams = np.array([d.lam for d in decs])
    if s is StructureId.VVV:
        return list(decs)
    if s.shape == "I":
        if s.volume == "E":
            d = EigenDecomposition(lams.mean(), np.ones(p), eye)
            return [d] * G
        return [EigenDecomposition(lam, np.ones(p), eye) for lam in lams]
    if s.orientation == "I":
        shapes = np.array([np.diag(m) / _geo_mean(np.diag(m)) for m in mats])
        vols = np.array([_geo_mean(np.diag(m)) for m in mats])
        if s.shape == "E":
            shape = shapes.mean(axis=0)
            shape = shape / _geo_mean(shape)
            base = _diag_decomp(1.0, shape)
            if s.volume == "E":
                d = EigenDecomposition(vols.mean(), base.delta, base.gamma)
                return [d] * G
            return [EigenDecomposition(v, base.delta, base.gamma) for v in vols]
        lam = vols.mean()
        return [
            _diag_decomp(lam if s.volume == "E" else v, sh) for v, sh in zip(vols, shapes)
        ]
    if s is StructureId.EEE:
        d = decompose(np.mean(mats, axis=0))
        return [d] * G
    if s.orientation == "E":
        gamma = decompose(np.mean(mats, axis=0)).gamma
        diag = np.array([np.diag(gamma.T @ m @ gamma) for m in mats])
        vols = _geo_mean(diag)
        shapes = diag / vols[:, None]
        if s.shape == "E":
            shape = shapes.mean(axis=0)
            shape = shape / _geo_mean(shape)
            shapes = np.broadcast_to(shape, shapes.shape)
        if s.volume == "E":
            vols = np.full(G, vols.mean())
        if s.shape == "E":
            shared = shapes[0].copy()
            return [EigenDecomposition(v, shared, gamma) for v in vols]
        return [EigenDecomposition(v, sh.copy(), gamma) for v, sh in zip(vols, shapes)]
    # variable orientation: EEV, VEV, EVV
    vols = lams if s.volume == "V" else np.full(G, lams.mean())
    if s.shape == "E":
        shape = np.mean([d.delta for d in decs], axis=0)
        shape = shape / _geo_mean(shape)
        return [EigenDecomposition(v, shape, d.gamma) for v, d in zip(vols, decs)]
    return [EigenDecomposition(v, d.delta, d.gamma) for v, d in zip(vols, decs)]
