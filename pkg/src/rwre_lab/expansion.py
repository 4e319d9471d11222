"""Closed-form first-order predictions: invariant-density expansion on a
box, its explicit 2d specialization, and the velocity expansion.

The first-order density of a box configuration is

    1 + eps * sum_{z in B} sum_e xi_bar(z, e) J(z + e),

where J is a potential-kernel table of the reversed averaged kernel (either
the eps-dependent or the backbone one; the two differ at second order).
Because xi_bar is centered, predictions average to exactly 1 under the
product law on the box.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .environment import PerturbationLaw
from .kernels import (PotentialKernelTable, TransitionKernel,
                      direction_vectors, potential_kernel_fourier)
from .measures import decode_config

Site = tuple[int, ...]


@dataclass
class ExpansionPrediction:
    """Per-configuration first-order densities on a box.

    Configuration ids use the same mixed-radix code as DensityEstimate, so
    measured ratios and predictions join on configuration_id.
    """

    box: tuple
    densities: np.ndarray
    epsilon: float
    order: str
    kernel_method: str

    def to_csv(self, path) -> None:
        n_atoms = round(len(self.densities) ** (1.0 / max(len(self.box), 1)))
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["configuration_id", "atoms", "predicted_density"])
            for code, v in enumerate(self.densities):
                atoms = decode_config(code, len(self.box), n_atoms)
                wr.writerow([code, "|".join(map(str, atoms)), f"{v:.17g}"])


def density_first_order(atom_indices: Sequence[int], box: Sequence[Site],
                        law: PerturbationLaw, epsilon: float,
                        J: PotentialKernelTable) -> float:
    """First-order invariant density of one box configuration.

    Raises KeyError when the J table does not cover {z + e : z in B, e}.
    """
    xi_bar = law.centered_atoms()
    dirs = direction_vectors(law.dimension)
    val = 0.0
    for z, ai in zip(box, atom_indices):
        for e in range(2 * law.dimension):
            ze = tuple(int(c) + int(v) for c, v in zip(z, dirs[e]))
            val += xi_bar[ai, e] * J(ze)
    return 1.0 + epsilon * val


def box_density_predictions(box: Sequence[Site], law: PerturbationLaw,
                            epsilon: float, J: PotentialKernelTable
                            ) -> ExpansionPrediction:
    """First-order densities for every configuration of the box."""
    n_conf = law.n_atoms ** len(box)
    dens = np.empty(n_conf)
    for code in range(n_conf):
        idx = decode_config(code, len(box), law.n_atoms)
        dens[code] = density_first_order(idx, box, law, epsilon, J)
    return ExpansionPrediction(
        box=tuple(tuple(int(c) for c in z) for z in box), densities=dens,
        epsilon=epsilon, order="first", kernel_method=J.method)


def pair_density_2d(xi_bar_at_z1: Sequence[float], epsilon: float) -> float:
    """Closed-form first-order density for the box {(0,0), (0,1)} over the
    symmetric 2d backbone, as a function of the centered fluctuation at
    (0, 1).

    1 - (4/pi)(xb(e1) + xb(-e1)) eps + (8/pi - 4) xb(e2) eps.  There is no
    xb(-e2) term because J vanishes at the origin; the site (0,0) never
    contributes because J is constant (-1) over its neighbors and xb rows
    sum to zero.
    """
    xb = np.asarray(xi_bar_at_z1, dtype=float)
    if xb.shape != (4,):
        raise ValueError("expected the four direction components at z1")
    return float(1.0
                 - (4.0 / math.pi) * (xb[0] + xb[1]) * epsilon
                 + (8.0 / math.pi - 4.0) * xb[2] * epsilon)


@dataclass
class VelocityPrediction:
    """Velocity expansion v = d0 + eps d1 + eps^2 d2.

    d2 is the vector sum_{e, e'} e' C(e', e) J(e) with J the potential
    kernel of the reversed averaged kernel; a scalar reading of that double
    sum would be type-inconsistent with v - d0 - eps d1, and the vector form
    is validated against the brute-force one-site average in
    velocity_q_average_oracle.
    """

    d0: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    epsilon: float

    @property
    def v(self) -> np.ndarray:
        return self.d0 + self.epsilon * self.d1 + self.epsilon ** 2 * self.d2


def velocity_expansion(p0: TransitionKernel, law: PerturbationLaw,
                       epsilon: float, J_ref: PotentialKernelTable
                       ) -> VelocityPrediction:
    """Second-order velocity prediction from the law's covariance."""
    d = p0.dimension
    dirs = direction_vectors(d).astype(float)
    d0 = p0.drift()
    d1 = law.mean @ dirs
    C = law.covariance
    d2 = np.zeros(d)
    for e in range(2 * d):
        ev = tuple(int(c) for c in dirs[e])
        d2 += J_ref(ev) * (C[:, e] @ dirs)
    return VelocityPrediction(d0=d0, d1=d1, d2=d2, epsilon=epsilon)


def velocity_q_average_oracle(p0: TransitionKernel, law: PerturbationLaw,
                              epsilon: float, J_ref: PotentialKernelTable
                              ) -> np.ndarray:
    """Integrate the local drift against the one-site first-order density.

    Enumerates the single-site configuration alphabet: sum over atoms of
    weight * density * drift(p0 + eps xi).  Equals d0 + eps d1 + eps^2 d2
    up to exactly representable arithmetic, which pins down the vector
    reading of d2.
    """
    d = p0.dimension
    dirs = direction_vectors(d).astype(float)
    xi_bar = law.centered_atoms()
    v = np.zeros(d)
    for a in range(law.n_atoms):
        dens = 1.0 + epsilon * sum(
            xi_bar[a, e] * J_ref(tuple(int(c) for c in dirs[e]))
            for e in range(2 * d))
        row = p0.probs + epsilon * law.atoms[a]
        v += law.weights[a] * dens * (row @ dirs)
    return v


@dataclass
class KernelGapResult:
    """Distance between the eps-averaged and backbone potential kernels."""

    x: tuple
    epsilon: float
    j_eps: float
    j_zero: float
    gap: float
    quad_tol: float
    rate_model: str


def j_epsilon_vs_j0_gap(p0: TransitionKernel, law: PerturbationLaw,
                        epsilon: float, x: Sequence[int],
                        grid: int | None = None) -> KernelGapResult:
    """|J_{(p_eps)*}(x) - J_{(p0)*}(x)| by Fourier quadrature of both.

    The expected small-eps rate is eps * log eps when the backbone is
    drift-free in d = 2 and plain eps otherwise; the tag records which
    family applies.
    """
    if grid is None:
        grid = 1024 if p0.dimension == 2 else 128
    pe = TransitionKernel(p0.probs + epsilon * law.mean)
    j0, t0 = potential_kernel_fourier(p0, x, grid)
    je, te = potential_kernel_fourier(pe, x, grid)
    drift_free = bool(np.allclose(p0.drift(), 0.0, atol=1e-14))
    model = ("eps*log(eps)" if drift_free and p0.dimension == 2 else "eps")
    return KernelGapResult(x=tuple(int(c) for c in x), epsilon=epsilon,
                           j_eps=je, j_zero=j0, gap=abs(je - j0),
                           quad_tol=t0 + te, rate_model=model)
