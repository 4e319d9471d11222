"""Seed-addressable i.i.d. low-disorder environments.

A field pins a backbone kernel p0, a disorder strength epsilon, a finitely
supported perturbation law for the per-site fluctuation vector xi(x, .) and a
master seed.  Sites are never stored: the atom at x is a counter-based hash
of (seed, x), so lookups are deterministic, independent across sites and
identical between the python, numpy and numba paths.  Shifting the field is
an offset of the hash key, which realizes the canonical shift of the
environment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np

from ._rng import counter_u01, site_u01_array, spawn_seeds
from .kernels import TransitionKernel, direction_vectors

_TOL = 1e-12


@dataclass(frozen=True)
class PerturbationLaw:
    """Finitely supported law of xi(0, .) with zero row sums.

    atoms: (n, 2d) values in [-1, 1], each row summing to 0 (probability
    conservation); weights: (n,) probabilities.  The mean vector and the
    covariance matrix C[e, e'] = Cov(xi(0,e), xi(0,e')) are precomputed.
    """

    dimension: int
    atoms: np.ndarray
    weights: np.ndarray
    mean: np.ndarray = dc_field(init=False, repr=False)
    covariance: np.ndarray = dc_field(init=False, repr=False)
    cum_weights: np.ndarray = dc_field(init=False, repr=False)

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if atoms.ndim != 2 or atoms.shape[1] != 2 * self.dimension:
            raise ValueError("atoms must have shape (n, 2d)")
        if weights.shape != (atoms.shape[0],):
            raise ValueError("one weight per atom required")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > _TOL:
            raise ValueError("weights must be >= 0 and sum to 1")
        if np.any(np.abs(atoms) > 1.0 + _TOL):
            raise ValueError("atom entries must lie in [-1, 1]")
        row_sums = atoms.sum(axis=1)
        if np.any(np.abs(row_sums) > _TOL):
            raise ValueError(f"atom rows must sum to 0, got {row_sums}")
        mean = weights @ atoms
        centered = atoms - mean
        cov = (centered * weights[:, None]).T @ centered
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "cum_weights", np.cumsum(weights))

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    def centered_atoms(self) -> np.ndarray:
        """xi-bar rows: atoms minus the law mean."""
        return self.atoms - self.mean

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({"dimension": self.dimension,
                       "atoms": [{"xi": a.tolist(), "w": float(w)}
                                 for a, w in zip(self.atoms, self.weights)]},
                      fh, indent=1)

    @classmethod
    def from_json(cls, path) -> "PerturbationLaw":
        with open(path) as fh:
            doc = json.load(fh)
        atoms = np.array([a["xi"] for a in doc["atoms"]], dtype=float)
        weights = np.array([a["w"] for a in doc["atoms"]], dtype=float)
        return cls(dimension=int(doc["dimension"]), atoms=atoms, weights=weights)


def make_perturbation_law(atoms, weights) -> PerturbationLaw:
    """Validated law with mean and covariance precomputed."""
    atoms = np.asarray(atoms, dtype=float)
    if atoms.ndim != 2 or atoms.shape[1] % 2:
        raise ValueError("atoms must have shape (n, 2d)")
    return PerturbationLaw(dimension=atoms.shape[1] // 2, atoms=atoms,
                           weights=np.asarray(weights, dtype=float))


def zero_law(dimension: int) -> PerturbationLaw:
    """Degenerate law with a single all-zero atom (no disorder shape)."""
    return make_perturbation_law(np.zeros((1, 2 * dimension)), np.array([1.0]))


def two_atom_drift_law() -> PerturbationLaw:
    """The d = 2 two-atom reference law: mean (0.75, -0.75, 0, 0).

    Both atoms push mass from -e1 to +e1 (drift contribution 1.5 epsilon)
    and flip a +-0.5 exchange between +e2 and -e2 with equal weights.
    """
    atoms = np.array([[0.75, -0.75, 0.5, -0.5],
                      [0.75, -0.75, -0.5, 0.5]])
    return make_perturbation_law(atoms, np.array([0.5, 0.5]))


@dataclass(frozen=True)
class SiteConfig:
    """Environment row at one site: omega = p0 + eps * xi, with xi-bar."""

    omega: np.ndarray
    xi: np.ndarray
    xi_bar: np.ndarray
    atom_index: int

    def local_drift(self) -> np.ndarray:
        d = self.omega.size // 2
        return self.omega @ direction_vectors(d).astype(float)


@dataclass(frozen=True)
class EnvironmentField:
    """Virtual i.i.d. environment omega(x, e) = p0(e) + eps * xi(x, e)."""

    p0: TransitionKernel
    epsilon: float
    law: PerturbationLaw
    master_seed: int
    origin: tuple = ()

    def __post_init__(self):
        if self.law.dimension != self.p0.dimension:
            raise ValueError("law and kernel dimensions differ")
        if not self.p0.strictly_elliptic:
            raise ValueError("backbone kernel must be strictly elliptic")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        kappa = self.p0.probs.min() - self.epsilon
        if self.epsilon > 0 and kappa <= 0:
            raise ValueError(
                f"epsilon = {self.epsilon} >= min p0 = {self.p0.probs.min()}: "
                "disorder too large for the backbone")
        rows = self.p0.probs[None, :] + self.epsilon * self.law.atoms
        if np.any(rows <= 0) or np.any(rows >= 1):
            raise ValueError("a perturbed row leaves (0, 1)")
        if not self.origin:
            object.__setattr__(self, "origin", (0,) * self.p0.dimension)
        elif len(self.origin) != self.p0.dimension:
            raise ValueError("origin dimension mismatch")

    @property
    def dimension(self) -> int:
        return self.p0.dimension

    @property
    def kappa(self) -> float:
        return float(self.p0.probs.min() - self.epsilon)

    def shifted(self, x: Sequence[int]) -> "EnvironmentField":
        """Field viewed from x: lookups at y return this field at x + y."""
        new_origin = tuple(o + int(c) for o, c in zip(self.origin, x))
        return EnvironmentField(self.p0, self.epsilon, self.law,
                                self.master_seed, new_origin)

    def with_seed(self, seed: int) -> "EnvironmentField":
        return EnvironmentField(self.p0, self.epsilon, self.law, int(seed),
                                self.origin)

    def replica_seeds(self, n: int, salt: int = 0) -> np.ndarray:
        """Seeds for n independent environment replicas of this field."""
        return spawn_seeds(self.master_seed, n, salt)

    def atom_index(self, x: Sequence[int]) -> int:
        coords = tuple(int(c) + o for c, o in zip(x, self.origin))
        u = counter_u01(self.master_seed, *coords)
        i = int(np.searchsorted(self.law.cum_weights, u, side="right"))
        return min(i, self.law.n_atoms - 1)

    def atom_window(self, lo: Sequence[int], hi: Sequence[int]) -> np.ndarray:
        """Atom indices on the box prod_i [lo_i, hi_i] (inclusive)."""
        axes = [np.arange(int(l) + o, int(h) + o + 1)
                for l, h, o in zip(lo, hi, self.origin)]
        grids = np.meshgrid(*axes, indexing="ij")
        coords = np.stack(grids, axis=-1)
        u = site_u01_array(self.master_seed, coords)
        idx = np.searchsorted(self.law.cum_weights, u, side="right")
        return np.minimum(idx, self.law.n_atoms - 1).astype(np.int64)


def site_omega(field: EnvironmentField, x: Sequence[int]) -> SiteConfig:
    """Deterministic lookup of the environment row at site x."""
    ai = field.atom_index(x)
    xi = field.law.atoms[ai]
    return SiteConfig(omega=field.p0.probs + field.epsilon * xi,
                      xi=xi.copy(), xi_bar=xi - field.law.mean, atom_index=ai)


def p_epsilon(field: EnvironmentField) -> TransitionKernel:
    """The averaged kernel p0 + eps * E[xi(0, .)]."""
    return TransitionKernel(field.p0.probs + field.epsilon * field.law.mean)


def ellipticity_kappa(field: EnvironmentField) -> float:
    """kappa = min_e p0(e) - epsilon (> 0 enforced at construction)."""
    return field.kappa


def check_ld(field: EnvironmentField) -> tuple[bool, float]:
    """Whether the annealed drift satisfies E[d(0, omega)] . e1 >= epsilon.

    Returns (satisfied, margin) with margin = E[d] . e1 - epsilon; the margin
    is surfaced rather than a validity ruling because the verification
    experiments may legitimately probe either side of the boundary.
    """
    mean_drift = p_epsilon(field).drift()
    margin = float(mean_drift[0] - field.epsilon)
    return margin >= 0.0, margin


@dataclass
class OmegaWindow:
    """Materialized environment rows on a box, ready for exact solvers.

    probs has shape (2d, *box_shape); lo is the lattice point of grid index
    (0, ..., 0).  kappa_min is the smallest row entry actually present (the
    sharpest uniform-ellipticity constant for this realization).
    """

    lo: tuple
    probs: np.ndarray

    @property
    def dimension(self) -> int:
        return self.probs.ndim - 1

    @property
    def shape(self) -> tuple:
        return self.probs.shape[1:]

    @property
    def kappa_min(self) -> float:
        return float(self.probs.min())

    def grid_index(self, x: Sequence[int]) -> tuple:
        idx = tuple(int(c) - l for c, l in zip(x, self.lo))
        if any(i < 0 or i >= s for i, s in zip(idx, self.shape)):
            raise KeyError(f"site {tuple(x)} outside window")
        return idx

    def contains(self, x: Sequence[int]) -> bool:
        return all(0 <= int(c) - l < s
                   for c, l, s in zip(x, self.lo, self.shape))

    def row(self, x: Sequence[int]) -> np.ndarray:
        return self.probs[(slice(None),) + self.grid_index(x)].copy()

    def copy(self) -> "OmegaWindow":
        return OmegaWindow(lo=self.lo, probs=self.probs.copy())

    def validate_rows(self, tol: float = _TOL) -> None:
        sums = self.probs.sum(axis=0)
        if np.any(self.probs < 0) or np.any(np.abs(sums - 1.0) > tol):
            raise ValueError("window rows are not probability vectors")


def omega_window(field: EnvironmentField, lo: Sequence[int],
                 hi: Sequence[int]) -> OmegaWindow:
    """Materialize omega over the box prod_i [lo_i, hi_i]."""
    atom_idx = field.atom_window(lo, hi)
    xi = field.law.atoms[atom_idx]          # (*shape, 2d)
    probs = field.p0.probs + field.epsilon * xi
    probs = np.moveaxis(probs, -1, 0).copy()
    return OmegaWindow(lo=tuple(int(c) for c in lo), probs=probs)


def uniform_window(p: TransitionKernel, lo: Sequence[int],
                   hi: Sequence[int]) -> OmegaWindow:
    """Homogeneous window with the same row everywhere (no disorder)."""
    shape = tuple(int(h) - int(l) + 1 for l, h in zip(lo, hi))
    probs = np.broadcast_to(
        p.probs.reshape((-1,) + (1,) * len(shape)), (p.probs.size,) + shape
    ).copy()
    return OmegaWindow(lo=tuple(int(c) for c in lo), probs=probs)
