"""Nearest-neighbor transition kernels and their potential kernels.

A kernel assigns a probability to each of the 2d unit directions, ordered
(+e1, -e1, +e2, -e2, ...).  The potential kernel of the reversed walk,

    J(x) = lim_n sum_{k<=n} (p_k(0,-x) - p_k(0,0)),

is computed three ways: brute-force truncated sums (the oracle), tensor
midpoint quadrature of the Fourier inversion formula, and, for the simple
symmetric 2d kernel, the classical exact recursion.  All three agree within
their reported tolerances; J(0) = 0 for every method.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _fast

_SUM_TOL = 1e-12


@dataclass(frozen=True)
class Direction:
    """One of the 2d unit directions; negation is an involution."""

    axis: int
    sign: int

    def __post_init__(self):
        if self.sign not in (-1, 1) or self.axis < 0:
            raise ValueError(f"bad direction ({self.axis}, {self.sign})")

    @property
    def index(self) -> int:
        return 2 * self.axis + (0 if self.sign > 0 else 1)

    def vector(self, dimension: int) -> np.ndarray:
        v = np.zeros(dimension, dtype=np.int64)
        v[self.axis] = self.sign
        return v

    def __neg__(self) -> "Direction":
        return Direction(self.axis, -self.sign)


def directions(dimension: int) -> list[Direction]:
    """The 2d directions in index order (+e1, -e1, +e2, -e2, ...)."""
    return [Direction(a, s) for a in range(dimension) for s in (1, -1)]


def direction_vectors(dimension: int) -> np.ndarray:
    """(2d, d) int array of unit vectors in index order."""
    return np.stack([e.vector(dimension) for e in directions(dimension)])


@dataclass(frozen=True)
class TransitionKernel:
    """Jump probabilities over the 2d unit directions."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", p)
        if p.ndim != 1 or p.size % 2 != 0 or p.size == 0:
            raise ValueError("probs must have length 2d")
        if np.any(p < 0):
            raise ValueError("negative jump probability")
        if abs(p.sum() - 1.0) > _SUM_TOL:
            raise ValueError(f"probabilities sum to {p.sum()}, not 1")

    @property
    def dimension(self) -> int:
        return self.probs.size // 2

    @property
    def strictly_elliptic(self) -> bool:
        return bool(self.probs.min() > 0.0)

    def prob(self, e: Direction) -> float:
        return float(self.probs[e.index])

    def drift(self) -> np.ndarray:
        """sum_e e p(e)."""
        return self.probs @ direction_vectors(self.dimension).astype(float)

    def reversed(self) -> "TransitionKernel":
        return reverse_kernel(self)


def symmetric_kernel(dimension: int) -> TransitionKernel:
    """The simple symmetric kernel p(e) = 1/(2d)."""
    return TransitionKernel(np.full(2 * dimension, 1.0 / (2 * dimension)))


def kernel_from_axis_probs(pairs: Sequence[tuple[float, float]]) -> TransitionKernel:
    """Build a kernel from (p(+e_i), p(-e_i)) pairs."""
    return TransitionKernel(np.asarray(pairs, dtype=float).reshape(-1))


def reverse_kernel(p: TransitionKernel) -> TransitionKernel:
    """The time-reversed kernel p*(e) = p(-e)."""
    q = p.probs.copy()
    q[0::2], q[1::2] = p.probs[1::2], p.probs[0::2]
    return TransitionKernel(q)


@dataclass
class NStepTable:
    """Exact n-step probabilities p_n(0, y) on |y|_inf <= radius."""

    n: int
    radius: int
    values: np.ndarray  # shape (2R+1,)*d

    def prob(self, y: Sequence[int]) -> float:
        idx = tuple(int(c) + self.radius for c in y)
        return float(self.values[idx])

    def total(self) -> float:
        return float(self.values.sum())


def nstep_probability(p: TransitionKernel, n: int, radius: int | None = None
                      ) -> NStepTable:
    """Exact discrete convolution power of the one-step kernel.

    With radius >= n nothing reaches the boundary and the entries sum to 1
    exactly; a smaller radius truncates (absorbing boundary) and is only
    allowed when requested explicitly.
    """
    if n < 0:
        raise ValueError("step count must be >= 0")
    d = p.dimension
    if radius is None:
        radius = n
    shape = (2 * radius + 1,) * d
    cur = np.zeros(shape)
    cur[(radius,) * d] = 1.0
    nxt = np.zeros_like(cur)
    for _ in range(n):
        nxt[:] = 0.0
        for e in directions(d):
            w = p.probs[e.index]
            if w == 0.0:
                continue
            src = [slice(None)] * d
            dst = [slice(None)] * d
            if e.sign > 0:
                src[e.axis] = slice(0, -1)
                dst[e.axis] = slice(1, None)
            else:
                src[e.axis] = slice(1, None)
                dst[e.axis] = slice(0, -1)
            nxt[tuple(dst)] += w * cur[tuple(src)]
        cur, nxt = nxt, cur
    return NStepTable(n=n, radius=radius, values=cur)


@dataclass
class PotentialKernelTable:
    """Values of J(x) for |x|_inf <= radius, with the method's error estimate.

    ``kernel`` records the reversed kernel p*: the table holds the potential
    kernel of that reversed walk, evaluated from the forward kernel's n-step
    probabilities.
    """

    kernel: TransitionKernel
    radius: int
    values: np.ndarray  # shape (2R+1,)*d
    method: str
    tolerance: float
    entry_tolerance: np.ndarray | None = field(default=None, repr=False)

    def covers(self, x: Sequence[int]) -> bool:
        return max(abs(int(c)) for c in x) <= self.radius if len(x) else True

    def __call__(self, x: Sequence[int]) -> float:
        if not self.covers(x):
            raise KeyError(f"point {tuple(x)} outside table radius {self.radius}")
        idx = tuple(int(c) + self.radius for c in x)
        return float(self.values[idx])

    def points(self) -> Iterable[tuple[tuple[int, ...], float]]:
        d = self.kernel.dimension
        for idx in np.ndindex(*self.values.shape):
            yield tuple(int(i) - self.radius for i in idx), float(self.values[idx])

    def to_csv(self, path) -> None:
        d = self.kernel.dimension
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow([f"x{i + 1}" for i in range(d)] + ["J", "method", "tol"])
            for x, v in self.points():
                wr.writerow(list(x) + [f"{v:.17g}", self.method,
                                       f"{self.tolerance:.17g}"])

    def to_json(self, path) -> None:
        entries = [{"x": list(x), "J": v} for x, v in self.points()]
        with open(path, "w") as fh:
            json.dump({"method": self.method, "radius": self.radius,
                       "tolerance": self.tolerance,
                       "kernel_reversed": self.kernel.probs.tolist(),
                       "values": entries}, fh, indent=1)


def _window_points(radius: int, d: int) -> np.ndarray:
    grids = np.meshgrid(*([np.arange(-radius, radius + 1)] * d), indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=-1).astype(np.int64)


# -- truncated-sum method ----------------------------------------------------

def _truncated_sums(p: TransitionKernel, xs: np.ndarray, n_max: int,
                    window_radius: int | None):
    d = p.dimension
    if not p.strictly_elliptic:
        raise ValueError("kernel must be strictly elliptic")
    if window_radius is None:
        # choose a radius with negligible escape under a Hoeffding bound,
        # capped by memory; the sweep tracks the actual escape anyway
        want = int(math.ceil(math.sqrt(2.0 * n_max * math.log(8.0 * (n_max + 1) / 1e-9))))
        cap = 900 if d == 2 else 170
        window_radius = min(max(want, 8), cap)
    if d == 2:
        sums, escaped = _fast.homogeneous_power_sums_2d(
            p.probs, n_max, window_radius, np.asarray(xs, dtype=np.int64))
    elif d == 3:
        sums, escaped = _fast.homogeneous_power_sums_3d(
            p.probs, n_max, window_radius, np.asarray(xs, dtype=np.int64))
    else:
        raise ValueError("truncated sums implemented for d in (2, 3)")
    return sums, escaped, window_radius


def _truncated_value_and_tail(sums_x: np.ndarray, escaped: np.ndarray):
    """Average the last two partial sums; estimate the tail empirically.

    Parity makes consecutive partial sums oscillate around the limit in the
    recurrent case; the two-term average suppresses that.  The tail estimate
    compares the smoothed sums one octave apart (the smoothed remainder
    decays like ~1/n) and adds the cumulative escaped mass.
    """
    n_max = len(sums_x) - 1
    value = 0.5 * (sums_x[n_max] + sums_x[n_max - 1])
    half = max(n_max // 2, 1)
    value_half = 0.5 * (sums_x[half] + sums_x[half - 1])
    drift_est = abs(value - value_half)
    osc = abs(sums_x[n_max] - sums_x[n_max - 1])
    tail = 2.0 * drift_est + 0.5 * osc + float(np.sum(escaped)) + 1e-12
    return float(value), float(tail)


def potential_kernel_truncated(p: TransitionKernel, x: Sequence[int],
                               n_max: int, window_radius: int | None = None
                               ) -> tuple[float, float]:
    """Partial sum sum_{k<=n_max} (p_k(0,-x) - p_k(0,0)) and a tail estimate.

    Brute-force oracle for the other methods; in the recurrent 2d case the
    sequence converges slowly and the reported tail stays honest rather than
    small.
    """
    xs = np.asarray([list(x)], dtype=np.int64)
    sums, escaped, _ = _truncated_sums(p, xs, n_max, window_radius)
    return _truncated_value_and_tail(sums[:, 0], escaped)


def potential_kernel_table_truncated(p: TransitionKernel, radius: int,
                                     n_max: int,
                                     window_radius: int | None = None
                                     ) -> PotentialKernelTable:
    """Truncated-sum J table on |x|_inf <= radius (one convolution sweep)."""
    d = p.dimension
    xs = _window_points(radius, d)
    sums, escaped, _ = _truncated_sums(p, xs, n_max, window_radius)
    shape = (2 * radius + 1,) * d
    values = np.zeros(shape)
    tols = np.zeros(shape)
    for q, x in enumerate(xs):
        v, t = _truncated_value_and_tail(sums[:, q], escaped)
        idx = tuple(int(c) + radius for c in x)
        values[idx] = v
        tols[idx] = t
    return PotentialKernelTable(kernel=reverse_kernel(p), radius=radius,
                                values=values, method="truncated-sum",
                                tolerance=float(tols.max()),
                                entry_tolerance=tols)


# -- Fourier method ----------------------------------------------------------

def _fourier_grid_sum(p: TransitionKernel, x: np.ndarray, n: int) -> float:
    """Midpoint tensor quadrature of the inversion integrals at one point.

    The grid excludes the 2^d cells nearest the corners of [0, 2pi]^d, where
    the denominator of the recurrent case vanishes; both integrands stay
    bounded there, so the exclusion is consistent with the O(h^2) midpoint
    error and is removed by Richardson extrapolation in the caller.
    """
    d = p.dimension
    plus = p.probs[0::2]
    minus = p.probs[1::2]
    r = np.sqrt(plus * minus)
    h = 2.0 * math.pi / n
    th = (np.arange(n) + 0.5) * h
    c = np.cos(th)
    shape = [1] * d
    D = 1.0 + np.zeros((n,) * d)
    for j in range(d):
        sh = shape.copy()
        sh[j] = n
        D = D - 2.0 * r[j] * c.reshape(sh)
    phase = np.zeros((n,) * d)
    for j in range(d):
        sh = shape.copy()
        sh[j] = n
        phase = phase + float(x[j]) * th.reshape(sh)
    cosph = np.cos(phase)
    # corner cells: first and last index along every axis simultaneously
    corner_value = 0.0
    for corner in np.ndindex(*((2,) * d)):
        idx = tuple(0 if b == 0 else n - 1 for b in corner)
        corner_value += (cosph[idx] - 1.0) / D[idx]
    term2 = ((cosph - 1.0) / D).sum() - corner_value
    pref = float(np.prod((minus / plus) ** (x / 2.0)) - 1.0)
    if pref != 0.0:
        corner1 = 0.0
        for corner in np.ndindex(*((2,) * d)):
            idx = tuple(0 if b == 0 else n - 1 for b in corner)
            corner1 += cosph[idx] / D[idx]
        term1 = pref * ((cosph / D).sum() - corner1)
    else:
        term1 = 0.0
    return (term1 + term2) * (h / (2.0 * math.pi)) ** d


def potential_kernel_fourier(p: TransitionKernel, x: Sequence[int],
                             grid: int | None = None) -> tuple[float, float]:
    """J(x) by Fourier inversion with Richardson extrapolation.

    Evaluates the two inversion integrals on midpoint grids of ``grid`` and
    ``2 * grid`` points per axis (default 512 in d = 2, 96 in d = 3);
    returns (value, error estimate).  Rejects d = 1 and non-elliptic kernels.
    """
    if p.dimension < 2:
        raise ValueError("Fourier inversion requires d >= 2")
    if not p.strictly_elliptic:
        raise ValueError("kernel must be strictly elliptic")
    if grid is None:
        grid = 512 if p.dimension == 2 else 96
    xv = np.asarray(list(x), dtype=np.int64)
    if xv.size != p.dimension:
        raise ValueError("point dimension mismatch")
    coarse = _fourier_grid_sum(p, xv, grid)
    fine = _fourier_grid_sum(p, xv, 2 * grid)
    value = (4.0 * fine - coarse) / 3.0
    return value, abs(fine - coarse) + 1e-12


def potential_kernel_table_fourier(p: TransitionKernel, radius: int,
                                   grid: int | None = None
                                   ) -> PotentialKernelTable:
    """Fourier J table on |x|_inf <= radius."""
    d = p.dimension
    shape = (2 * radius + 1,) * d
    values = np.zeros(shape)
    tols = np.zeros(shape)
    for x in _window_points(radius, d):
        v, t = potential_kernel_fourier(p, x, grid)
        idx = tuple(int(c) + radius for c in x)
        values[idx] = v
        tols[idx] = t
    return PotentialKernelTable(kernel=reverse_kernel(p), radius=radius,
                                values=values, method="fourier",
                                tolerance=float(tols.max()),
                                entry_tolerance=tols)


# -- exact 2d recursion ------------------------------------------------------

def _ssrw2d_octant(radius: int) -> np.ndarray:
    """Classical recursion for the 2d simple-symmetric potential kernel a(x).

    Seeds a(0,0) = 0, a(1,0) = 1, a(1,1) = 4/pi; diagonal values follow the
    closed form a(n,n) = (4/pi) sum_{k<=n} 1/(2k-1) (the mean-value relation
    alone underdetermines the diagonal); interior points propagate column by
    column through the discrete mean-value property with dihedral symmetry.
    J(x) = -a(x).
    """
    R = radius
    a = np.full((R + 2, R + 2), np.nan)
    a[0, 0] = 0.0
    if R >= 1:
        a[1, 0] = 1.0
    for nn in range(1, R + 2):
        a[nn, nn] = (4.0 / math.pi) * sum(1.0 / (2 * k - 1)
                                          for k in range(1, nn + 1))
    for m in range(1, R + 1):
        # a(m+1, j) for j <= m from the mean-value relation at (m, j)
        a[m + 1, 0] = 4.0 * a[m, 0] - a[m - 1, 0] - 2.0 * a[m, 1]
        for j in range(1, m):
            a[m + 1, j] = 4.0 * a[m, j] - a[m - 1, j] - a[m, j + 1] - a[m, j - 1]
        if m >= 1:
            a[m + 1, m] = 2.0 * a[m, m] - a[m, m - 1]
    return a


def potential_kernel_table_2d_ssrw(radius: int) -> PotentialKernelTable:
    """Exact-recursion J table for the simple symmetric 2d kernel."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    oct_a = _ssrw2d_octant(radius)
    n = 2 * radius + 1
    values = np.zeros((n, n))
    for x1 in range(-radius, radius + 1):
        for x2 in range(-radius, radius + 1):
            i, j = abs(x1), abs(x2)
            if j > i:
                i, j = j, i
            values[x1 + radius, x2 + radius] = -oct_a[i, j]
    # error growth of the mean-value propagation is ~4^radius * eps
    tol = max(4.0 ** radius * 1e-15, 1e-12)
    return PotentialKernelTable(kernel=symmetric_kernel(2), radius=radius,
                                values=values, method="recursion-2d",
                                tolerance=tol)


def potential_kernel_2d_ssrw(x: Sequence[int], radius: int | None = None
                             ) -> float:
    """J(x) for the 2d simple symmetric kernel via the exact recursion."""
    r = max(abs(int(c)) for c in x) if len(x) else 0
    if radius is not None and r > radius:
        raise KeyError(f"point {tuple(x)} outside requested radius {radius}")
    return potential_kernel_table_2d_ssrw(radius if radius is not None else r)(x)


def phi_eps(p: TransitionKernel, v: Sequence[int]) -> float:
    """prod_i sqrt(p(-e_i)/p(e_i))^(v_i)."""
    if not p.strictly_elliptic:
        raise ValueError("kernel must be strictly elliptic")
    plus = p.probs[0::2]
    minus = p.probs[1::2]
    vv = np.asarray(list(v), dtype=float)
    if vv.size != p.dimension:
        raise ValueError("point dimension mismatch")
    return float(np.prod(np.sqrt(minus / plus) ** vv))
