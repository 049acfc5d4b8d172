"""Parameter containers for mixtures of contaminated Gaussians."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gaussian import ComponentParams, CovMatrix
from .structures import EigenDecomposition, StructureId, as_structure, compose

# Offsets keeping alpha and eta strictly inside their open intervals.
EPS_ALPHA = 1e-6
EPS_ETA = 1e-6


@dataclass
class ModelParams:
    """Full parameter set of a G-component model.

    Attributes
    ----------
    structure : StructureId
    pi, alpha, eta : ndarray, shape (G,)
        Mixing weights, proportions of good points and inflation factors.
    mu : ndarray, shape (G, p)
    decomps : list of EigenDecomposition
        Covariances of the good points.
    """

    structure: StructureId
    pi: np.ndarray
    alpha: np.ndarray
    mu: np.ndarray
    decomps: list
    eta: np.ndarray
    _covs: list = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.structure = as_structure(self.structure)
        self.pi = np.asarray(self.pi, dtype=float)
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.eta = np.asarray(self.eta, dtype=float)
        self.mu = np.atleast_2d(np.asarray(self.mu, dtype=float))
        self.decomps = list(self.decomps)
        G = self.pi.shape[0]
        if not (self.alpha.shape == self.eta.shape == (G,) and self.mu.shape[0] == G
                and len(self.decomps) == G):
            raise ValueError("inconsistent number of components in parameters")
        if any(d.dim != self.mu.shape[1] for d in self.decomps):
            raise ValueError("covariance and mean dimensions disagree")

    @property
    def G(self) -> int:
        return self.pi.shape[0]

    @property
    def p(self) -> int:
        return self.mu.shape[1]

    def sigmas(self) -> np.ndarray:
        return np.array([compose(d) for d in self.decomps])

    def covs(self) -> list:
        """Factorized covariances (cached; parameters are treated as immutable)."""
        if self._covs is None:
            self._covs = [CovMatrix(s) for s in self.sigmas()]
        return self._covs

    def components(self):
        for g, cov in enumerate(self.covs()):
            yield ComponentParams(
                pi=float(self.pi[g]), alpha=float(self.alpha[g]), mu=self.mu[g],
                sigma=cov, eta=float(self.eta[g]),
            )

    def to_dict(self) -> dict:
        return {
            "structure": self.structure.value,
            "pi": self.pi.tolist(),
            "alpha": self.alpha.tolist(),
            "eta": self.eta.tolist(),
            "mu": self.mu.tolist(),
            "sigma": [s.tolist() for s in self.sigmas()],
            "decomposition": [
                {"lambda": d.lam, "delta": d.delta.tolist(), "gamma": d.gamma.tolist()}
                for d in self.decomps
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        decs = [
            EigenDecomposition(d["lambda"], np.array(d["delta"]), np.array(d["gamma"]))
            for d in data["decomposition"]
        ]
        return cls(
            structure=data["structure"], pi=data["pi"], alpha=data["alpha"],
            mu=data["mu"], decomps=decs, eta=data["eta"],
        )
