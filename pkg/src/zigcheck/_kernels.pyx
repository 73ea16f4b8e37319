# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numerical kernels (see ``_fallback.py`` for the reference semantics)."""
import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport fabs, log1p, INFINITY
from numpy.random cimport bitgen_t

cnp.import_array()

BACKEND = "cython"

cdef double TINY = 1e-300


cdef inline bitgen_t* _rng(object bitgen) except NULL:
    return <bitgen_t*> PyCapsule_GetPointer(bitgen.capsule, "BitGenerator")


cdef inline void _matvec(const cnp.int64_t* indptr, const cnp.int64_t* indices, const double* data,
                         const double* x, double* y, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, k
    cdef double acc
    for i in range(n):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * x[indices[k]]
        # subnormal operands are very slow on most FPUs
        if -TINY < acc < TINY:
            acc = 0.0
        y[i] = acc


def uniformized_series(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
                       const double[::1] data, const double[::1] v0,
                       const cnp.int64_t[::1] lefts, const cnp.int64_t[::1] rights,
                       const double[::1] weights, const cnp.int64_t[::1] offsets):
    cdef Py_ssize_t n = v0.shape[0], npts = lefts.shape[0]
    out_arr = np.zeros((npts, n))
    if npts == 0 or n == 0:
        return out_arr
    cdef double[:, ::1] out = out_arr
    cdef double[::1] va = np.array(v0, dtype=np.float64)
    cdef double[::1] wa = np.empty(n)
    cdef double* v = &va[0]
    cdef double* w = &wa[0]
    cdef double* tmp
    cdef double* row
    cdef const cnp.int64_t* ip = &indptr[0]
    cdef const cnp.int64_t* ix = NULL
    cdef const double* d = NULL
    if indices.shape[0] > 0:
        ix = &indices[0]
        d = &data[0]
    cdef Py_ssize_t kmax = 0, k, j, i
    cdef double wt
    for j in range(npts):
        if rights[j] > kmax:
            kmax = rights[j]
    with nogil:
        for k in range(kmax + 1):
            for j in range(npts):
                if lefts[j] <= k <= rights[j]:
                    wt = weights[offsets[j] + k - lefts[j]]
                    row = &out[j, 0]
                    for i in range(n):
                        row[i] += wt * v[i]
            if k < kmax:
                _matvec(ip, ix, d, v, w, n)
                tmp = v
                v = w
                w = tmp
    return out_arr


def power_iterate(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
                  const double[::1] data, const double[::1] x0, double tol, Py_ssize_t max_iter):
    cdef Py_ssize_t n = x0.shape[0], i, it = 0
    xa = np.array(x0, dtype=np.float64)
    ya = np.empty(n)
    if n == 0:
        return xa, 0, 0.0
    cdef double[::1] xv = xa
    cdef double[::1] yv = ya
    cdef double* x = &xv[0]
    cdef double* y = &yv[0]
    cdef double* tmp
    cdef const cnp.int64_t* ip = &indptr[0]
    cdef const cnp.int64_t* ix = NULL
    cdef const double* d = NULL
    if indices.shape[0] > 0:
        ix = &indices[0]
        d = &data[0]
    cdef double s, dd, dmax, ymax, delta = INFINITY
    with nogil:
        while it < max_iter:
            _matvec(ip, ix, d, x, y, n)
            s = 0.0
            for i in range(n):
                s = s + y[i]
            if s > 0:
                for i in range(n):
                    y[i] = y[i] / s
            dmax = 0.0
            ymax = 0.0
            for i in range(n):
                dd = fabs(y[i] - x[i])
                if dd > dmax:
                    dmax = dd
                if fabs(y[i]) > ymax:
                    ymax = fabs(y[i])
            if ymax < 1e-300:
                ymax = 1e-300
            delta = dmax / ymax
            tmp = x
            x = y
            y = tmp
            it += 1
            if delta <= tol:
                break
    # x points at whichever buffer holds the latest iterate
    return (xa if x == &xv[0] else ya), it, delta


def gauss_seidel(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
                 const double[::1] data, const double[::1] diag, const double[::1] b,
                 const double[::1] x0, double tol, Py_ssize_t max_iter, bint normalize):
    cdef Py_ssize_t n = x0.shape[0], i, k, it = 0
    cdef double[::1] x = np.array(x0, dtype=np.float64)
    cdef double[::1] prev = np.empty(n)
    cdef double acc, d, dmax, xmax, s, delta = INFINITY
    with nogil:
        while it < max_iter:
            for i in range(n):
                prev[i] = x[i]
            for i in range(n):
                acc = b[i]
                for k in range(indptr[i], indptr[i + 1]):
                    acc = acc - data[k] * x[indices[k]]
                x[i] = acc / diag[i]
            if normalize:
                s = 0.0
                for i in range(n):
                    s = s + x[i]
                if s != 0:
                    for i in range(n):
                        x[i] = x[i] / s
            it += 1
            dmax = 0.0
            xmax = 0.0
            for i in range(n):
                d = fabs(x[i] - prev[i])
                if d > dmax:
                    dmax = d
                if fabs(x[i]) > xmax:
                    xmax = fabs(x[i])
            if xmax < 1e-300:
                xmax = 1e-300
            delta = dmax / xmax
            if delta <= tol:
                break
    return np.asarray(x), it, delta


cdef inline Py_ssize_t _pick(const cnp.int64_t[::1] indptr, const double[::1] cum,
                             Py_ssize_t s, double target) noexcept nogil:
    cdef Py_ssize_t k
    for k in range(indptr[s], indptr[s + 1]):
        if cum[k] > target:
            return k
    return indptr[s + 1] - 1


def sim_state_at(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] dst,
                 const double[::1] cum, const double[::1] exit_rate,
                 const cnp.int64_t[::1] starts, double t_end, object bitgen):
    cdef bitgen_t *rng = _rng(bitgen)
    cdef Py_ssize_t npaths = starts.shape[0], p, s, k
    out_arr = np.empty(npaths, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    cdef double t, r
    with bitgen.lock, nogil:
        for p in range(npaths):
            s = starts[p]
            t = 0.0
            while True:
                r = exit_rate[s]
                if r <= 0.0:
                    break
                t = t + (-log1p(-rng.next_double(rng.state)) / r)
                if t >= t_end:
                    break
                k = _pick(indptr, cum, s, rng.next_double(rng.state) * r)
                s = dst[k]
            out[p] = s
    return out_arr


def sim_sojourn(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] dst,
                const double[::1] cum, const double[::1] exit_rate,
                const cnp.uint8_t[::1] inside, Py_ssize_t start, double t_cap,
                Py_ssize_t n_paths, object bitgen):
    cdef bitgen_t *rng = _rng(bitgen)
    cdef Py_ssize_t p, s, k
    out_arr = np.empty(n_paths)
    cdef double[::1] out = out_arr
    cdef double t, r
    with bitgen.lock, nogil:
        for p in range(n_paths):
            s = start
            t = 0.0
            while True:
                r = exit_rate[s]
                if r <= 0.0:
                    t = t_cap
                    break
                t = t + (-log1p(-rng.next_double(rng.state)) / r)
                if t >= t_cap:
                    t = t_cap
                    break
                k = _pick(indptr, cum, s, rng.next_double(rng.state) * r)
                s = dst[k]
                if not inside[s]:
                    break
            out[p] = t
    return out_arr


def sim_long_run(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] dst,
                 const double[::1] cum, const double[::1] exit_rate,
                 const cnp.uint8_t[::1] comp, const cnp.uint8_t[::1] is_reset,
                 Py_ssize_t start, double t_burn, double horizon, Py_ssize_t n_batches,
                 object bitgen):
    cdef bitgen_t *rng = _rng(bitgen)
    ct_arr = np.zeros(n_batches)
    ra_arr = np.zeros(n_batches)
    ru_arr = np.zeros(n_batches)
    cdef double[::1] comp_time = ct_arr
    cdef double[::1] resets_all = ra_arr
    cdef double[::1] resets_useful = ru_arr
    cdef double width = (horizon - t_burn) / n_batches
    cdef double t = 0.0, t_next, r, a, b, edge
    cdef Py_ssize_t s = start, k, bi
    with bitgen.lock, nogil:
        while t < horizon:
            r = exit_rate[s]
            if r <= 0.0:
                t_next = horizon
            else:
                t_next = t - log1p(-rng.next_double(rng.state)) / r
            if t_next > horizon:
                t_next = horizon
            if comp[s] and t_next > t_burn:
                a = t if t > t_burn else t_burn
                bi = <Py_ssize_t>((a - t_burn) / width)
                if bi > n_batches - 1:
                    bi = n_batches - 1
                while a < t_next:
                    if bi < n_batches - 1:
                        edge = t_burn + (bi + 1) * width
                    else:
                        edge = horizon
                    b = t_next if t_next < edge else edge
                    if b > a:
                        comp_time[bi] += b - a
                        a = b
                    bi += 1
            t = t_next
            if t >= horizon:
                break
            k = _pick(indptr, cum, s, rng.next_double(rng.state) * r)
            if is_reset[k] and t >= t_burn:
                bi = <Py_ssize_t>((t - t_burn) / width)
                if bi > n_batches - 1:
                    bi = n_batches - 1
                resets_all[bi] += 1.0
                if comp[s]:
                    resets_useful[bi] += 1.0
            s = dst[k]
    return ct_arr, ra_arr, ru_arr
