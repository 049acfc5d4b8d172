"""Seeded data generators for the simulation and perturbation experiments."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .params import ModelParams
from .structures import EigenDecomposition, compose

_ROT = np.array([[np.sqrt(3) / 2, 0.5], [-0.5, np.sqrt(3) / 2]])

# Two-component equal-volume, variable-shape, equal-orientation scenario.
TWO_CLUSTER_MEANS = (np.array([-2.0, -2.0]), np.array([2.0, 2.0]))
TWO_CLUSTER_DECOMPS = (
    EigenDecomposition(1.0, np.array([1 / 0.7, 0.7]), _ROT),
    EigenDecomposition(1.0, np.array([1 / 0.3, 0.3]), _ROT),
)

# Replacement values for the carapace length of the 25th crab.
CRAB_PERTURBATIONS = (-15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
CRAB_PERTURBED_ROW = 24


@dataclass
class ComponentSpec:
    mean: np.ndarray
    decomposition: EigenDecomposition
    size: int

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        if self.size < 1:
            raise ValueError("component size must be at least 1")


@dataclass
class ScenarioSpec:
    components: list
    noise_count: int = 0
    noise_bounds: tuple = ((-10.0, 10.0), (-10.0, 10.0))
    seed: int = 0

    def __post_init__(self):
        for lo, hi in self.noise_bounds:
            if not lo < hi:
                raise ValueError(f"invalid noise interval ({lo}, {hi})")


def two_cluster_scenario(seed=0, size=90, noise_count=20) -> ScenarioSpec:
    """Two rotated elliptical clusters of ``size`` points plus uniform noise on [-10, 10]^2."""
    comps = [
        ComponentSpec(m, d, size) for m, d in zip(TWO_CLUSTER_MEANS, TWO_CLUSTER_DECOMPS)
    ]
    return ScenarioSpec(comps, noise_count, ((-10.0, 10.0), (-10.0, 10.0)), seed)


@dataclass
class LabeledSample:
    """Data with generating labels: component (1-based, 0 = noise) and bad flag."""

    X: np.ndarray
    true_component: np.ndarray
    true_bad: np.ndarray
    columns: list = field(default=None)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.true_component = np.asarray(self.true_component, dtype=int)
        self.true_bad = np.asarray(self.true_bad, dtype=bool)
        if self.columns is None:
            self.columns = [f"x{j + 1}" for j in range(self.X.shape[1])]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([*self.columns, "true_component", "true_bad"])
            for row, c, b in zip(self.X, self.true_component, self.true_bad):
                w.writerow([*(repr(float(x)) for x in row), int(c), int(b)])


def _mvn(rng, mean, sigma, size):
    """Normal draws as ``mean + L e`` with ``L`` the Cholesky factor of ``sigma``."""
    chol = np.linalg.cholesky(sigma)
    return mean + rng.standard_normal((size, mean.shape[0])) @ chol.T


def sample_gpcm(spec: ScenarioSpec) -> LabeledSample:
    """Gaussian clusters from the scenario, followed by its uniform noise."""
    rng = np.random.default_rng(spec.seed)
    xs, comp = [], []
    for g, c in enumerate(spec.components, start=1):
        xs.append(_mvn(rng, c.mean, compose(c.decomposition), c.size))
        comp.append(np.full(c.size, g))
    sample = LabeledSample(np.vstack(xs), np.concatenate(comp), np.zeros(sum(c.size for c in spec.components), bool))
    if spec.noise_count:
        sample = add_uniform_noise(sample, spec.noise_count, spec.noise_bounds, rng)
    return sample


def add_uniform_noise(sample: LabeledSample, count: int, bounds, seed) -> LabeledSample:
    """Append ``count`` points uniform on the box ``bounds``, labelled as bad noise."""
    if count < 0:
        raise ValueError("count must be non-negative")
    if count == 0:
        return sample
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    bounds = np.asarray(bounds, dtype=float)
    if bounds.shape != (sample.X.shape[1], 2):
        raise ValueError("need one (low, high) interval per variable")
    noise = rng.uniform(bounds[:, 0], bounds[:, 1], size=(count, bounds.shape[0]))
    return LabeledSample(
        np.vstack([sample.X, noise]),
        np.concatenate([sample.true_component, np.zeros(count, int)]),
        np.concatenate([sample.true_bad, np.ones(count, bool)]),
        sample.columns,
    )


def perturb_observation(X, row: int, dim: int, value: float) -> np.ndarray:
    """Copy of ``X`` with the single cell ``X[row, dim]`` replaced by ``value``."""
    X = np.array(X, dtype=float, copy=True)
    if not (-X.shape[0] <= row < X.shape[0]) or not (-X.shape[1] <= dim < X.shape[1]):
        raise IndexError(f"cell ({row}, {dim}) outside a {X.shape} matrix")
    X[row, dim] = value
    return X


def sample_contaminated(psi: ModelParams, n: int, seed) -> LabeledSample:
    """Draw from the contaminated mixture, recording component and good/bad status."""
    rng = np.random.default_rng(seed)
    comp = rng.choice(psi.G, size=n, p=psi.pi)
    bad = rng.random(n) >= psi.alpha[comp]
    X = np.empty((n, psi.p))
    sigmas = psi.sigmas()
    for g in range(psi.G):
        for is_bad in (False, True):
            idx = np.flatnonzero((comp == g) & (bad == is_bad))
            if idx.size:
                scale = psi.eta[g] if is_bad else 1.0
                X[idx] = _mvn(rng, psi.mu[g], scale * sigmas[g], idx.size)
    return LabeledSample(X, comp + 1, bad)
