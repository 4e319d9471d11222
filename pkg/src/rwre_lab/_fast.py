"""numba kernels: hashed-environment walkers, killed-Green stencils and
homogeneous convolution sweeps.

All functions are deterministic given their integer seeds; the hash mirrors
``_rng.counter_hash`` bit for bit.  Heavy loops are compiled with
``nogil=True`` so thread pools can run independent replicas concurrently;
results are reduced in replica order by the callers, which keeps outputs
independent of the worker count.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_U = np.uint64
_GOLD = _U(0x9E3779B97F4A7C15)
_M1 = _U(0xBF58476D1CE4E5B9)
_M2 = _U(0x94D049BB133111EB)
_M3 = _U(0xD6E8FEB86659FD93)
_INV53 = 2.0 ** -53


@njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> _U(30))) * _M1
    z = (z ^ (z >> _U(27))) * _M2
    return z ^ (z >> _U(31))


@njit(cache=True, inline="always")
def _u01_2(seed, a, b):
    h = _mix(_U(seed) + _GOLD)
    h = _mix(h ^ (_U(a) * _M3 + _GOLD))
    h = _mix(h ^ (_U(b) * _M3 + _GOLD))
    return (h >> _U(11)) * _INV53


@njit(cache=True, inline="always")
def _site_u01_2d(seed, x1, x2):
    return _u01_2(seed, x1, x2)


@njit(cache=True, inline="always")
def _atom_index(u, cum_weights):
    i = 0
    while u >= cum_weights[i] and i < cum_weights.shape[0] - 1:
        i += 1
    return i


@njit(cache=True, inline="always")
def _atom_at_2d(env_seed, x1, x2, cum_weights):
    return _atom_index(_site_u01_2d(env_seed, x1, x2), cum_weights)


@njit(cache=True, inline="always")
def _step_2d(env_seed, walk_seed, k, x1, x2, p0, atoms, eps, cum_weights):
    """One quenched step from (x1, x2); returns (new_x1, new_x2, drift1, drift2)."""
    ai = _atom_at_2d(env_seed, x1, x2, cum_weights)
    w0 = p0[0] + eps * atoms[ai, 0]
    w1 = p0[1] + eps * atoms[ai, 1]
    w2 = p0[2] + eps * atoms[ai, 2]
    w3 = p0[3] + eps * atoms[ai, 3]
    u = _u01_2(walk_seed, k, 7)
    if u < w0:
        x1 += 1
    elif u < w0 + w1:
        x1 -= 1
    elif u < w0 + w1 + w2:
        x2 += 1
    else:
        x2 -= 1
    return x1, x2, w0 - w1, w2 - w3


@njit(cache=True, nogil=True)
def walk_box_counts(env_seed, walk_seed, p0, atoms, cum_weights, eps,
                    n_steps, burn_in, box, n_atoms):
    """Environmental-process occupation counts of box configurations.

    box: (m, 2) int64 offsets. The configuration index at step k is the
    mixed-radix code of the atom indices at X_k + box[i]. Counts cover steps
    burn_in <= k < n_steps. Also accumulates the local drift sum and final
    position for velocity/martingale diagnostics.
    """
    m = box.shape[0]
    n_conf = 1
    for _ in range(m):
        n_conf *= n_atoms
    counts = np.zeros(n_conf, dtype=np.int64)
    x1 = np.int64(0)
    x2 = np.int64(0)
    drift1 = 0.0
    drift2 = 0.0
    for k in range(n_steps):
        if k >= burn_in:
            code = 0
            radix = 1
            for i in range(m):
                ai = _atom_at_2d(env_seed, x1 + box[i, 0], x2 + box[i, 1],
                                 cum_weights)
                code += radix * ai
                radix *= n_atoms
            counts[code] += 1
        x1, x2, d1, d2 = _step_2d(env_seed, walk_seed, k, x1, x2, p0, atoms,
                                  eps, cum_weights)
        if k >= burn_in:
            drift1 += d1
            drift2 += d2
    return counts, x1, x2, drift1, drift2


@njit(cache=True, nogil=True)
def walk_velocity(env_seed, walk_seed, p0, atoms, cum_weights, eps,
                  n_steps, burn_in):
    """Returns (dx1, dx2, drift_sum1, drift_sum2) over the post-burn-in leg."""
    x1 = np.int64(0)
    x2 = np.int64(0)
    b1 = np.int64(0)
    b2 = np.int64(0)
    drift1 = 0.0
    drift2 = 0.0
    for k in range(n_steps):
        if k == burn_in:
            b1 = x1
            b2 = x2
        x1, x2, d1, d2 = _step_2d(env_seed, walk_seed, k, x1, x2, p0, atoms,
                                  eps, cum_weights)
        if k >= burn_in:
            drift1 += d1
            drift2 += d2
    return x1 - b1, x2 - b2, drift1, drift2


@njit(cache=True, nogil=True)
def walk_box_exit(env_seed, walk_seed, p0, atoms, cum_weights, eps,
                  back, front, side, step_cap):
    """Walk until exit from {-back <= x1 <= front, |x2| <= side}.

    Returns (exit_code, steps, x1, x2); exit_code 1 = front (x1 > front),
    0 = elsewhere (back or side), -1 = step cap hit.
    """
    x1 = np.int64(0)
    x2 = np.int64(0)
    for k in range(step_cap):
        x1, x2, _, _ = _step_2d(env_seed, walk_seed, k, x1, x2, p0, atoms,
                                eps, cum_weights)
        if x1 > front:
            return 1, k + 1, x1, x2
        if x1 < -back or x2 > side or x2 < -side:
            return 0, k + 1, x1, x2
    return -1, step_cap, x1, x2


@njit(cache=True, nogil=True)
def walk_geometric_counts(env_seed, walk_seed, p0, atoms, cum_weights, eps,
                          tau, box, n_atoms):
    """Configuration counts along one killed trajectory.

    Counts configurations at steps k = 1 .. tau-1 (counts_tail) and records
    the k = 0 configuration index separately so callers can form both the
    strict (k >= 1) and origin-inclusive occupation averages.
    """
    m = box.shape[0]
    n_conf = 1
    for _ in range(m):
        n_conf *= n_atoms
    counts = np.zeros(n_conf, dtype=np.int64)
    x1 = np.int64(0)
    x2 = np.int64(0)
    code0 = 0
    radix = 1
    for i in range(m):
        ai = _atom_at_2d(env_seed, box[i, 0], box[i, 1], cum_weights)
        code0 += radix * ai
        radix *= n_atoms
    for k in range(tau - 1):
        x1, x2, _, _ = _step_2d(env_seed, walk_seed, k, x1, x2, p0, atoms,
                                eps, cum_weights)
        code = 0
        radix = 1
        for i in range(m):
            ai = _atom_at_2d(env_seed, x1 + box[i, 0], x2 + box[i, 1],
                             cum_weights)
            code += radix * ai
            radix *= n_atoms
        counts[code] += 1
    return counts, code0


@njit(cache=True, nogil=True)
def killed_green_visits(env_seed, walk_seed, p0, atoms, cum_weights, eps,
                        delta, source1, source2, targets, n_traj):
    """Monte Carlo visit counts before an independent geometric time.

    tau has P(tau = n) = (1-delta) delta^(n-1) on n >= 1 and is drawn by
    inverse CDF from the walk stream. Returns (sum_visits, sum_sq, tau_sum)
    with per-target first and second moments for stderr formation.
    """
    nt = targets.shape[0]
    s1 = np.zeros(nt)
    s2 = np.zeros(nt)
    tau_sum = 0.0
    log_delta = np.log(delta)
    visits = np.zeros(nt)
    for j in range(n_traj):
        for i in range(nt):
            visits[i] = 0.0
        u = _u01_2(walk_seed, j, 11)
        tau = 1 + np.int64(np.floor(np.log1p(-u) / log_delta))
        tau_sum += tau
        x1 = np.int64(source1)
        x2 = np.int64(source2)
        traj_seed = np.int64((_U(walk_seed) ^ _mix(_U(j) * _M3)) >> _U(1))
        for k in range(tau):
            for i in range(nt):
                if x1 == targets[i, 0] and x2 == targets[i, 1]:
                    visits[i] += 1.0
            if k < tau - 1:
                x1, x2, _, _ = _step_2d(env_seed, traj_seed, k, x1, x2,
                                        p0, atoms, eps, cum_weights)
        for i in range(nt):
            s1[i] += visits[i]
            s2[i] += visits[i] * visits[i]
    return s1, s2, tau_sum


@njit(cache=True, nogil=True)
def green_column(omega, ti, tj, deltas, L, acc):
    """Accumulate g_delta(., target) = sum_k delta^k P^k(., target).

    omega: (4, n1, n2) row probabilities ordered (+e1, -e1, +e2, -e2).
    acc: (len(deltas), n1, n2), overwritten. The active window around the
    target grows one cell per step, so the absorbing boundary is exact as
    long as the window radius is >= L + 1 around the target.
    """
    n1 = omega.shape[1]
    n2 = omega.shape[2]
    nd = deltas.shape[0]
    w = np.zeros((n1, n2))
    w2 = np.zeros((n1, n2))
    acc[:] = 0.0
    w[ti, tj] = 1.0
    for m in range(nd):
        acc[m, ti, tj] = 1.0
    dpow = np.ones(nd)
    for k in range(1, L + 1):
        lo1 = max(ti - k, 1)
        hi1 = min(ti + k, n1 - 2)
        lo2 = max(tj - k, 1)
        hi2 = min(tj + k, n2 - 2)
        for m in range(nd):
            dpow[m] *= deltas[m]
        for i in range(lo1, hi1 + 1):
            for j in range(lo2, hi2 + 1):
                v = (omega[0, i, j] * w[i + 1, j]
                     + omega[1, i, j] * w[i - 1, j]
                     + omega[2, i, j] * w[i, j + 1]
                     + omega[3, i, j] * w[i, j - 1])
                w2[i, j] = v
                for m in range(nd):
                    acc[m, i, j] += dpow[m] * v
        tmp = w
        w = w2
        w2 = tmp


@njit(cache=True, nogil=True)
def green_column_cells(omega, ti, tj, deltas, L, cells):
    """Like green_column but accumulates only the requested cells.

    cells: (nc, 2) grid indices. Returns (nd, nc) array. Cuts memory traffic
    roughly in half for solvers that only need a handful of entries.
    """
    n1 = omega.shape[1]
    n2 = omega.shape[2]
    nd = deltas.shape[0]
    nc = cells.shape[0]
    w = np.zeros((n1, n2))
    w2 = np.zeros((n1, n2))
    out = np.zeros((nd, nc))
    w[ti, tj] = 1.0
    for c in range(nc):
        if cells[c, 0] == ti and cells[c, 1] == tj:
            for m in range(nd):
                out[m, c] = 1.0
    dpow = np.ones(nd)
    for k in range(1, L + 1):
        lo1 = max(ti - k, 1)
        hi1 = min(ti + k, n1 - 2)
        lo2 = max(tj - k, 1)
        hi2 = min(tj + k, n2 - 2)
        for m in range(nd):
            dpow[m] *= deltas[m]
        for i in range(lo1, hi1 + 1):
            for j in range(lo2, hi2 + 1):
                w2[i, j] = (omega[0, i, j] * w[i + 1, j]
                            + omega[1, i, j] * w[i - 1, j]
                            + omega[2, i, j] * w[i, j + 1]
                            + omega[3, i, j] * w[i, j - 1])
        tmp = w
        w = w2
        w2 = tmp
        for c in range(nc):
            v = w[cells[c, 0], cells[c, 1]]
            if v != 0.0:
                for m in range(nd):
                    out[m, c] += dpow[m] * v
    return out


@njit(cache=True, nogil=True)
def green_row(omega, si, sj, deltas, L, acc):
    """Accumulate g_delta(source, .) = sum_k delta^k P^k(source, .).

    Forward iteration u_{k+1}(y) = sum_e u_k(y-e) omega(y-e, e); exact while
    the window radius is >= L + 1 around the source.
    """
    n1 = omega.shape[1]
    n2 = omega.shape[2]
    nd = deltas.shape[0]
    w = np.zeros((n1, n2))
    w2 = np.zeros((n1, n2))
    acc[:] = 0.0
    w[si, sj] = 1.0
    for m in range(nd):
        acc[m, si, sj] = 1.0
    dpow = np.ones(nd)
    for k in range(1, L + 1):
        lo1 = max(si - k, 1)
        hi1 = min(si + k, n1 - 2)
        lo2 = max(sj - k, 1)
        hi2 = min(sj + k, n2 - 2)
        for m in range(nd):
            dpow[m] *= deltas[m]
        for i in range(lo1, hi1 + 1):
            for j in range(lo2, hi2 + 1):
                v = (omega[0, i - 1, j] * w[i - 1, j]
                     + omega[1, i + 1, j] * w[i + 1, j]
                     + omega[2, i, j - 1] * w[i, j - 1]
                     + omega[3, i, j + 1] * w[i, j + 1])
                w2[i, j] = v
                for m in range(nd):
                    acc[m, i, j] += dpow[m] * v
        tmp = w
        w = w2
        w2 = tmp


@njit(cache=True, nogil=True)
def homogeneous_power_sums_2d(probs, n_max, radius, xs):
    """Partial sums S_n(x) = sum_{k<=n} (p_k(0,-x) - p_k(0,0)) for xs.

    Single convolution sweep of the homogeneous kernel on an absorbing window
    of the given radius; escaped[k] tracks the cumulative probability lost to
    the boundary, which bounds the entrywise truncation error at step k.
    Returns (sums, escaped) with sums of shape (n_max + 1, len(xs)).
    """
    n = 2 * radius + 1
    c = radius
    nx = xs.shape[0]
    w = np.zeros((n, n))
    w2 = np.zeros((n, n))
    w[c, c] = 1.0
    sums = np.zeros((n_max + 1, nx))
    escaped = np.zeros(n_max + 1)
    for q in range(nx):
        if xs[q, 0] == 0 and xs[q, 1] == 0:
            sums[0, q] = 0.0
        else:
            sums[0, q] = -1.0
    mass = 1.0
    for k in range(1, n_max + 1):
        lo = max(c - k, 1)
        hi = min(c + k, n - 2)
        mass_k = 0.0
        for i in range(lo, hi + 1):
            for j in range(lo, hi + 1):
                v = (probs[0] * w[i - 1, j] + probs[1] * w[i + 1, j]
                     + probs[2] * w[i, j - 1] + probs[3] * w[i, j + 1])
                w2[i, j] = v
                mass_k += v
        tmp = w
        w = w2
        w2 = tmp
        escaped[k] = 1.0 - mass_k
        mass = mass_k
        p00 = w[c, c]
        for q in range(nx):
            i = c - xs[q, 0]
            j = c - xs[q, 1]
            sums[k, q] = sums[k - 1, q] + (w[i, j] - p00)
    return sums, escaped


@njit(cache=True, nogil=True)
def homogeneous_power_sums_3d(probs, n_max, radius, xs):
    """3d analogue of homogeneous_power_sums_2d."""
    n = 2 * radius + 1
    c = radius
    nx = xs.shape[0]
    w = np.zeros((n, n, n))
    w2 = np.zeros((n, n, n))
    w[c, c, c] = 1.0
    sums = np.zeros((n_max + 1, nx))
    escaped = np.zeros(n_max + 1)
    for q in range(nx):
        if xs[q, 0] == 0 and xs[q, 1] == 0 and xs[q, 2] == 0:
            sums[0, q] = 0.0
        else:
            sums[0, q] = -1.0
    for k in range(1, n_max + 1):
        lo = max(c - k, 1)
        hi = min(c + k, n - 2)
        mass_k = 0.0
        for i in range(lo, hi + 1):
            for j in range(lo, hi + 1):
                for l in range(lo, hi + 1):
                    v = (probs[0] * w[i - 1, j, l] + probs[1] * w[i + 1, j, l]
                         + probs[2] * w[i, j - 1, l] + probs[3] * w[i, j + 1, l]
                         + probs[4] * w[i, j, l - 1] + probs[5] * w[i, j, l + 1])
                    w2[i, j, l] = v
                    mass_k += v
        tmp = w
        w = w2
        w2 = tmp
        escaped[k] = 1.0 - mass_k
        p0 = w[c, c, c]
        for q in range(nx):
            sums[k, q] = sums[k - 1, q] + (
                w[c - xs[q, 0], c - xs[q, 1], c - xs[q, 2]] - p0)
    return sums, escaped


@njit(cache=True, nogil=True)
def mu_delta_batch(env_seeds, walk_seeds, taus, p0, atoms, cum_weights, eps,
                   box, n_atoms):
    """Sum of walk_geometric_counts over a batch of fresh environments.

    Returns (counts_tail, counts_origin, n_empty) where counts_tail pools
    steps 1 .. tau-1, counts_origin pools the k = 0 configuration and
    n_empty counts trajectories with tau = 1 (empty occupation window).
    """
    m = box.shape[0]
    n_conf = 1
    for _ in range(m):
        n_conf *= n_atoms
    tail = np.zeros(n_conf, dtype=np.int64)
    origin = np.zeros(n_conf, dtype=np.int64)
    n_empty = 0
    for r in range(env_seeds.shape[0]):
        counts, code0 = walk_geometric_counts(
            env_seeds[r], walk_seeds[r], p0, atoms, cum_weights, eps,
            taus[r], box, n_atoms)
        tail += counts
        origin[code0] += 1
        if taus[r] == 1:
            n_empty += 1
    return tail, origin, n_empty


@njit(cache=True, nogil=True)
def velocity_batch(env_seeds, walk_seeds, p0, atoms, cum_weights, eps,
                   n_steps, burn_in):
    """Per-replica displacement and drift sums over the post-burn-in leg."""
    n = env_seeds.shape[0]
    out = np.zeros((n, 4))
    for r in range(n):
        dx1, dx2, dr1, dr2 = walk_velocity(env_seeds[r], walk_seeds[r], p0,
                                           atoms, cum_weights, eps, n_steps,
                                           burn_in)
        out[r, 0] = dx1
        out[r, 1] = dx2
        out[r, 2] = dr1
        out[r, 3] = dr2
    return out


@njit(cache=True, nogil=True)
def exit_batch(env_seeds, walk_seeds, p0, atoms, cum_weights, eps,
               back, front, side, step_cap):
    """Per-trajectory exit codes and final positions for the slab test."""
    n = env_seeds.shape[0]
    codes = np.zeros(n, dtype=np.int64)
    steps = np.zeros(n, dtype=np.int64)
    finals = np.zeros((n, 2), dtype=np.int64)
    for r in range(n):
        code, k, x1, x2 = walk_box_exit(env_seeds[r], walk_seeds[r], p0,
                                        atoms, cum_weights, eps, back, front,
                                        side, step_cap)
        codes[r] = code
        steps[r] = k
        finals[r, 0] = x1
        finals[r, 1] = x2
    return codes, steps, finals


@njit(cache=True, nogil=True)
def geometric_taus(seed, n, delta):
    """n iid geometric times, P(tau = k) = (1-delta) delta^(k-1), k >= 1."""
    out = np.empty(n, dtype=np.int64)
    log_delta = np.log(delta)
    for i in range(n):
        u = _u01_2(seed, i, 13)
        out[i] = 1 + np.int64(np.floor(np.log1p(-u) / log_delta))
    return out
