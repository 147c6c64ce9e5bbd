# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for disambiguation: distance matrix and threshold clustering."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

# Linkage codes shared with the pure-Python fallback.
cdef enum:
    SINGLE = 0
    COMPLETE = 1
    AVERAGE = 2


cdef inline Py_ssize_t _shared(const long long[:] ptr, const long long[:] idx,
                               Py_ssize_t a, Py_ssize_t b) nogil:
    # Intersection size of two sorted, de-duplicated index runs.
    cdef Py_ssize_t i = ptr[a], ie = ptr[a + 1], j = ptr[b], je = ptr[b + 1], n = 0
    while i < ie and j < je:
        if idx[i] == idx[j]:
            n += 1
            i += 1
            j += 1
        elif idx[i] < idx[j]:
            i += 1
        else:
            j += 1
    return n


def distance_matrix(const int[:] name_key, const int[:] first_initial,
                    const unsigned long long[:] initial_mask,
                    const long long[:] co_ptr, const long long[:] co_idx,
                    const long long[:] as_ptr, const long long[:] as_idx,
                    const long long[:] fu_ptr, const long long[:] fu_idx,
                    const long long[:] gr_ptr, const long long[:] gr_idx,
                    const double[:] w):
    cdef Py_ssize_t n = name_key.shape[0], a, b
    cdef double s, part
    cdef bint forced
    out_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for a in range(n):
            for b in range(a + 1, n):
                forced = False
                s = 0.0
                if name_key[a] >= 0 and name_key[b] >= 0:
                    if name_key[a] == name_key[b]:
                        s += w[0]
                    else:
                        forced = True
                elif first_initial[a] >= 0 and first_initial[b] >= 0:
                    if name_key[a] < 0 and name_key[b] < 0:
                        if first_initial[a] == first_initial[b]:
                            s += w[1]
                    elif name_key[a] < 0:
                        if (initial_mask[b] >> first_initial[a]) & 1ULL:
                            s += w[1]
                    else:
                        if (initial_mask[a] >> first_initial[b]) & 1ULL:
                            s += w[1]
                if forced:
                    out[a, b] = 1.0
                    out[b, a] = 1.0
                    continue
                part = w[2] * _shared(co_ptr, co_idx, a, b)
                s += part if part < w[3] else w[3]
                part = w[4] * _shared(as_ptr, as_idx, a, b)
                s += part if part < w[5] else w[5]
                if _shared(fu_ptr, fu_idx, a, b) > 0:
                    s += w[6]
                part = w[7] * _shared(gr_ptr, gr_idx, a, b)
                s += part if part < w[8] else w[8]
                out[a, b] = 1.0 / (1.0 + s)
                out[b, a] = out[a, b]
    return out_arr


cdef inline void _row_nn(double[:, ::1] d, const unsigned char[:] active, Py_ssize_t n,
                         Py_ssize_t i, double* best, Py_ssize_t* arg) nogil:
    # Nearest active neighbour j > i; smallest j wins ties.
    cdef Py_ssize_t j
    best[0] = 1e300
    arg[0] = -1
    for j in range(i + 1, n):
        if active[j] and d[i, j] < best[0]:
            best[0] = d[i, j]
            arg[0] = j


def cluster_threshold(double[:, ::1] dist, double threshold, int linkage):
    """Merge closest clusters while their linkage distance is <= threshold.

    ``dist`` is modified in place.  Returns, per row, the index of the
    smallest row in its cluster.
    """
    cdef Py_ssize_t n = dist.shape[0], i, j, k, bi, bj
    cdef double best, v, dki, dkj, ni_d, nj_d
    labels_arr = np.arange(n, dtype=np.int64)
    cdef long long[:] labels = labels_arr
    size_arr = np.ones(n, dtype=np.int64)
    cdef long long[:] size = size_arr
    active_arr = np.ones(n, dtype=np.uint8)
    cdef unsigned char[:] active = active_arr
    nn_d_arr = np.empty(n, dtype=np.float64)
    cdef double[:] nn_d = nn_d_arr
    nn_i_arr = np.empty(n, dtype=np.int64)
    cdef long long[:] nn_i = nn_i_arr
    cdef Py_ssize_t tmp_arg

    with nogil:
        for i in range(n):
            _row_nn(dist, active, n, i, &nn_d[i], &tmp_arg)
            nn_i[i] = tmp_arg
        while True:
            bi = -1
            best = 1e300
            for i in range(n):
                if active[i] and nn_i[i] >= 0 and nn_d[i] < best:
                    best = nn_d[i]
                    bi = i
            if bi < 0 or best > threshold:
                break
            bj = nn_i[bi]
            ni_d = <double>size[bi]
            nj_d = <double>size[bj]
            for k in range(n):
                if not active[k] or k == bi or k == bj:
                    continue
                dki = dist[k, bi]
                dkj = dist[k, bj]
                if linkage == SINGLE:
                    v = dki if dki < dkj else dkj
                elif linkage == COMPLETE:
                    v = dki if dki > dkj else dkj
                else:
                    v = (ni_d * dki + nj_d * dkj) / (ni_d + nj_d)
                dist[k, bi] = v
                dist[bi, k] = v
            active[bj] = 0
            size[bi] += size[bj]
            for k in range(n):
                if labels[k] == bj:
                    labels[k] = bi
            _row_nn(dist, active, n, bi, &nn_d[bi], &tmp_arg)
            nn_i[bi] = tmp_arg
            for k in range(bi):
                if not active[k]:
                    continue
                if nn_i[k] == bi or nn_i[k] == bj:
                    _row_nn(dist, active, n, k, &nn_d[k], &tmp_arg)
                    nn_i[k] = tmp_arg
                elif dist[k, bi] < nn_d[k] or (dist[k, bi] == nn_d[k] and bi < nn_i[k]):
                    nn_d[k] = dist[k, bi]
                    nn_i[k] = bi
            for k in range(bi + 1, bj):
                if active[k] and nn_i[k] == bj:
                    _row_nn(dist, active, n, k, &nn_d[k], &tmp_arg)
                    nn_i[k] = tmp_arg
    return labels_arr
