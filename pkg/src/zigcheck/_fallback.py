"""Pure numpy/scipy implementations of the numerical kernels.

Signatures and random-number consumption mirror ``_kernels.pyx`` exactly, so
both backends produce the same results for the same inputs and seed.
Sparse matrices are passed as raw CSR arrays (``indptr, indices, data``).
"""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

BACKEND = "python"

# values below this are flushed to zero after each product (subnormals are slow)
TINY = 1e-300


def _csr(indptr, indices, data, n):
    return sp.csr_matrix((data, indices, indptr), shape=(n, n))


def _mv(m, x):
    y = m @ x
    y[np.abs(y) < TINY] = 0.0
    return y


def uniformized_series(indptr, indices, data, v0, lefts, rights, weights, offsets):
    """Poisson-weighted sums of the iterates ``v_k = M^k v0``.

    Row ``j`` of the result is ``sum_{k=lefts[j]}^{rights[j]} w_jk v_k`` with
    ``w_jk = weights[offsets[j] + k - lefts[j]]``.
    """
    n = v0.shape[0]
    m = _csr(indptr, indices, data, n)
    npts = lefts.shape[0]
    out = np.zeros((npts, n))
    if npts == 0:
        return out
    kmax = int(rights.max())
    v = np.array(v0, dtype=np.float64)
    for k in range(kmax + 1):
        for j in range(npts):
            if lefts[j] <= k <= rights[j]:
                out[j] += weights[offsets[j] + k - lefts[j]] * v
        if k < kmax:
            v = _mv(m, v)
    return out


def power_iterate(indptr, indices, data, x0, tol, max_iter):
    """Iterate ``x <- M x`` (M = P^T) until the relative max-norm change is <= tol.

    Returns ``(x, iterations, last_change)``; ``iterations == max_iter`` and a
    change above ``tol`` signal non-convergence.
    """
    n = x0.shape[0]
    m = _csr(indptr, indices, data, n)
    x = np.array(x0, dtype=np.float64)
    delta = math.inf
    it = 0
    while it < max_iter:
        y = _mv(m, x)
        s = y.sum()
        if s > 0:
            y /= s
        delta = float(np.max(np.abs(y - x)) / max(np.max(np.abs(y)), 1e-300))
        x = y
        it += 1
        if delta <= tol:
            break
    return x, it, delta


def gauss_seidel(indptr, indices, data, diag, b, x0, tol, max_iter, normalize):
    """Gauss-Seidel sweeps for ``(D + L + U) x = b``.

    ``indptr/indices/data`` hold the off-diagonal part, ``diag`` the diagonal.
    With ``normalize`` the iterate is rescaled to sum 1 after every sweep,
    which turns the method into a solver for the singular balance equations.
    Convergence: max-norm change relative to max-norm of the iterate.
    """
    n = x0.shape[0]
    off = _csr(indptr, indices, data, n)
    lower = sp.tril(off, k=-1, format="csr") + sp.diags(diag)
    lower = sp.csr_matrix(lower)
    upper = sp.triu(off, k=1, format="csr")
    x = np.array(x0, dtype=np.float64)
    delta = math.inf
    it = 0
    while it < max_iter:
        rhs = b - upper @ x
        y = sp.linalg.spsolve_triangular(lower, rhs, lower=True)
        if normalize:
            s = y.sum()
            if s != 0:
                y /= s
        scale = max(float(np.max(np.abs(y))), 1e-300)
        delta = float(np.max(np.abs(y - x))) / scale
        x = y
        it += 1
        if delta <= tol:
            break
    return x, it, delta


def _pick(indptr, cum, s, target):
    lo = int(indptr[s])
    hi = int(indptr[s + 1])
    for k in range(lo, hi):
        if cum[k] > target:
            return k
    return hi - 1


def sim_state_at(indptr, dst, cum, exit_rate, starts, t_end, bitgen):
    """Final state of one path per entry of ``starts`` after ``t_end`` time units."""
    gen = np.random.Generator(bitgen)
    out = np.empty(starts.shape[0], dtype=np.int64)
    for p in range(starts.shape[0]):
        s = int(starts[p])
        t = 0.0
        while True:
            r = exit_rate[s]
            if r <= 0.0:
                break
            t += -math.log1p(-gen.random()) / r
            if t >= t_end:
                break
            k = _pick(indptr, cum, s, gen.random() * r)
            s = int(dst[k])
        out[p] = s
    return out


def sim_sojourn(indptr, dst, cum, exit_rate, inside, start, t_cap, n_paths, bitgen):
    """Time spent inside ``inside`` before first exit, per path, capped at ``t_cap``."""
    gen = np.random.Generator(bitgen)
    out = np.empty(n_paths)
    for p in range(n_paths):
        s = int(start)
        t = 0.0
        while True:
            r = exit_rate[s]
            if r <= 0.0:
                t = t_cap
                break
            t += -math.log1p(-gen.random()) / r
            if t >= t_cap:
                t = t_cap
                break
            k = _pick(indptr, cum, s, gen.random() * r)
            s = int(dst[k])
            if not inside[s]:
                break
        out[p] = t
    return out


def sim_long_run(indptr, dst, cum, exit_rate, comp, is_reset, start, t_burn, horizon, n_batches, bitgen):
    """One long path; per-batch Comp occupation time and reset counts.

    Observation window ``[t_burn, horizon)`` is split into ``n_batches`` equal
    batches. Returns ``(comp_time, resets_all, resets_useful)`` arrays.
    """
    gen = np.random.Generator(bitgen)
    width = (horizon - t_burn) / n_batches
    comp_time = np.zeros(n_batches)
    resets_all = np.zeros(n_batches)
    resets_useful = np.zeros(n_batches)
    s = int(start)
    t = 0.0
    while t < horizon:
        r = exit_rate[s]
        t_next = horizon if r <= 0.0 else t - math.log1p(-gen.random()) / r
        if t_next > horizon:
            t_next = horizon
        if comp[s] and t_next > t_burn:
            a = t if t > t_burn else t_burn
            bi = min(int((a - t_burn) / width), n_batches - 1)
            while a < t_next:
                edge = t_burn + (bi + 1) * width if bi < n_batches - 1 else horizon
                b = t_next if t_next < edge else edge
                if b > a:
                    comp_time[bi] += b - a
                    a = b
                bi += 1
        t = t_next
        if t >= horizon:
            break
        k = _pick(indptr, cum, s, gen.random() * r)
        if is_reset[k] and t >= t_burn:
            bi = min(int((t - t_burn) / width), n_batches - 1)
            resets_all[bi] += 1.0
            if comp[s]:
                resets_useful[bi] += 1.0
        s = int(dst[k])
    return comp_time, resets_all, resets_useful
