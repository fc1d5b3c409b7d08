# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``capclust._fallback`` (same contracts)."""
import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, pow, sqrt
from libc.stdlib cimport free, malloc

cnp.import_array()

cdef double EPS = 1e-12


cdef int _clip(double* xs, double* ys, long* lab, int n,
               double* ox, double* oy, long* ol, double* f,
               double dx, double dy, double c, double inv, long label) noexcept nogil:
    # returns the new vertex count; -1 means "unchanged" (nothing cut away)
    cdef int e, q, m = 0
    cdef double fmax = -INFINITY, fmin = INFINITY, t, fp, fq
    for e in range(n):
        f[e] = (2.0 * (xs[e] * dx + ys[e] * dy) - c) * inv
        if f[e] > fmax:
            fmax = f[e]
        if f[e] < fmin:
            fmin = f[e]
    if fmax <= EPS:
        return -1
    if fmin > EPS:
        return 0
    for e in range(n):
        q = e + 1 if e + 1 < n else 0
        fp = f[e]
        fq = f[q]
        if fp <= EPS:
            ox[m] = xs[e]
            oy[m] = ys[e]
            ol[m] = lab[e]
            m += 1
            if fq > EPS:
                t = fp / (fp - fq)
                ox[m] = xs[e] + t * (xs[q] - xs[e])
                oy[m] = ys[e] + t * (ys[q] - ys[e])
                ol[m] = label
                m += 1
        elif fq <= EPS:
            t = fp / (fp - fq)
            ox[m] = xs[e] + t * (xs[q] - xs[e])
            oy[m] = ys[e] + t * (ys[q] - ys[e])
            ol[m] = lab[e]
            m += 1
    return m


def power_cells(sites, heights, domain, order):
    cdef double[:, ::1] S = np.ascontiguousarray(sites, dtype=np.float64)
    cdef double[::1] H = np.ascontiguousarray(heights, dtype=np.float64)
    cdef double[:, ::1] D = np.ascontiguousarray(domain, dtype=np.float64)
    cdef long[:, ::1] O = np.ascontiguousarray(order, dtype=np.int64)
    cdef int k = S.shape[0]
    cdef int md = D.shape[0]
    cdef int cap = md + k + 4
    cdef int i, j, idx, n, m, e
    cdef double xi, yi, hi, hmax, slack, dx, dy, r2, r, lower, far, d2, c, inv
    cdef double *xs
    cdef double *ys
    cdef long *lab
    cdef double *xb
    cdef double *yb
    cdef long *lb
    cdef double *f
    cdef double *tmpd
    cdef long *tmpl
    cdef cnp.ndarray[cnp.float64_t, ndim=2] verts
    cdef cnp.ndarray[cnp.int64_t, ndim=1] labels

    hmax = H[0]
    for i in range(1, k):
        if H[i] > hmax:
            hmax = H[i]
    xs = <double*> malloc(cap * sizeof(double))
    ys = <double*> malloc(cap * sizeof(double))
    xb = <double*> malloc(cap * sizeof(double))
    yb = <double*> malloc(cap * sizeof(double))
    f = <double*> malloc(cap * sizeof(double))
    lab = <long*> malloc(cap * sizeof(long))
    lb = <long*> malloc(cap * sizeof(long))
    if not (xs and ys and xb and yb and f and lab and lb):
        free(xs); free(ys); free(xb); free(yb); free(f); free(lab); free(lb)
        raise MemoryError()
    cells = []
    try:
        for i in range(k):
            xi = S[i, 0]
            yi = S[i, 1]
            hi = H[i]
            n = md
            for e in range(md):
                xs[e] = D[e, 0] - xi
                ys[e] = D[e, 1] - yi
                lab[e] = -1
            slack = hmax - hi
            with nogil:
                for idx in range(k):
                    j = O[i, idx]
                    if j == i:
                        continue
                    dx = S[j, 0] - xi
                    dy = S[j, 1] - yi
                    r2 = dx * dx + dy * dy
                    r = sqrt(r2)
                    lower = 0.5 * (r - slack / r)
                    if lower > 0.0:
                        far = 0.0
                        for e in range(n):
                            d2 = xs[e] * xs[e] + ys[e] * ys[e]
                            if d2 > far:
                                far = d2
                        if lower * lower > far:
                            break
                    c = r2 + hi - H[j]
                    inv = 1.0 / (2.0 * r)
                    m = _clip(xs, ys, lab, n, xb, yb, lb, f, dx, dy, c, inv, j)
                    if m == -1:
                        continue
                    n = m
                    tmpd = xs; xs = xb; xb = tmpd
                    tmpd = ys; ys = yb; yb = tmpd
                    tmpl = lab; lab = lb; lb = tmpl
                    if n == 0:
                        break
            if n < 3:
                cells.append(None)
                continue
            verts = np.empty((n, 2), dtype=np.float64)
            labels = np.empty(n, dtype=np.int64)
            for e in range(n):
                verts[e, 0] = xs[e] + xi
                verts[e, 1] = ys[e] + yi
                labels[e] = lab[e]
            cells.append((verts, labels))
    finally:
        free(xs); free(ys); free(xb); free(yb); free(f); free(lab); free(lb)
    return cells


def argmin_power(points, sites, heights, double alpha):
    cdef double[:, ::1] P = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, ::1] S = np.ascontiguousarray(sites, dtype=np.float64)
    cdef double[::1] H = np.ascontiguousarray(heights, dtype=np.float64)
    cdef Py_ssize_t n = P.shape[0]
    cdef Py_ssize_t k = S.shape[0]
    owner_arr = np.empty(n, dtype=np.int64)
    best_arr = np.empty(n, dtype=np.float64)
    cdef long[::1] owner = owner_arr
    cdef double[::1] best = best_arr
    cdef Py_ssize_t i, j, bj
    cdef double dx, dy, d2, pw, bv
    cdef bint square = alpha == 2.0
    with nogil:
        for i in range(n):
            bv = INFINITY
            bj = 0
            for j in range(k):
                dx = P[i, 0] - S[j, 0]
                dy = P[i, 1] - S[j, 1]
                d2 = dx * dx + dy * dy
                if square:
                    pw = d2 - H[j]
                else:
                    pw = pow(sqrt(d2), alpha) - H[j]
                if pw < bv:
                    bv = pw
                    bj = j
            owner[i] = bj
            best[i] = bv
    return owner_arr, best_arr


# indexed binary min-heap over node ids

cdef inline void _sift_up(double* key, int* heap, int* pos, int h) noexcept nogil:
    cdef int v = heap[h], parent
    while h > 0:
        parent = (h - 1) >> 1
        if key[heap[parent]] <= key[v]:
            break
        heap[h] = heap[parent]
        pos[heap[h]] = h
        h = parent
    heap[h] = v
    pos[v] = h


cdef inline void _sift_down(double* key, int* heap, int* pos, int size, int h) noexcept nogil:
    cdef int v = heap[h], child
    while True:
        child = 2 * h + 1
        if child >= size:
            break
        if child + 1 < size and key[heap[child + 1]] < key[heap[child]]:
            child += 1
        if key[v] <= key[heap[child]]:
            break
        heap[h] = heap[child]
        pos[heap[h]] = h
        h = child
    heap[h] = v
    pos[v] = h


cdef inline void _push_or_decrease(double* key, int* heap, int* pos, int* size,
                                   int v, double d) noexcept nogil:
    key[v] = d
    if pos[v] < 0:
        heap[size[0]] = v
        pos[v] = size[0]
        size[0] += 1
    _sift_up(key, heap, pos, pos[v])


cdef inline int _pop(double* key, int* heap, int* pos, int* size) noexcept nogil:
    cdef int top = heap[0]
    size[0] -= 1
    pos[top] = -2
    if size[0] > 0:
        heap[0] = heap[size[0]]
        pos[heap[0]] = 0
        _sift_down(key, heap, pos, size[0], 0)
    return top


def transport_ssp(supply, demand, cost):
    cdef long[::1] rs = np.array(supply, dtype=np.int64)
    cdef long[::1] rd = np.array(demand, dtype=np.int64)
    cdef double[:, ::1] C = np.ascontiguousarray(cost, dtype=np.float64)
    cdef int n = C.shape[0]
    cdef int k = C.shape[1]
    cdef int sink = n + k
    cdef int V = n + k + 1
    flow_arr = np.zeros((n, k), dtype=np.int64)
    cdef long[:, ::1] flow = flow_arr
    pot_arr = np.zeros(V, dtype=np.float64)
    cdef double[::1] pot = pot_arr
    dist_arr = np.empty(V, dtype=np.float64)
    cdef double[::1] dist = dist_arr
    prev_arr = np.empty(V, dtype=np.int32)
    cdef int[::1] prev = prev_arr
    heap_arr = np.empty(V, dtype=np.int32)
    cdef int[::1] heap = heap_arr
    pos_arr = np.empty(V, dtype=np.int32)
    cdef int[::1] pos = pos_arr
    cdef int size, u, v, i, j, jj
    cdef long remaining = 0, amount
    cdef double d, nd, pu, dt
    cdef bint ok = True
    for i in range(n):
        remaining += rs[i]
    with nogil:
        while remaining > 0:
            size = 0
            for v in range(V):
                dist[v] = INFINITY
                prev[v] = -1
                pos[v] = -1
            for i in range(n):
                if rs[i] > 0:
                    d = -pot[i]
                    if d < 0.0:
                        d = 0.0
                    _push_or_decrease(&dist[0], &heap[0], &pos[0], &size, i, d)
            while size > 0:
                u = _pop(&dist[0], &heap[0], &pos[0], &size)
                if u == sink:
                    break
                d = dist[u]
                pu = pot[u]
                if u < n:
                    for j in range(k):
                        v = n + j
                        if pos[v] == -2:
                            continue
                        nd = C[u, j] + pu - pot[v]
                        if nd < 0.0:
                            nd = 0.0
                        nd += d
                        if nd < dist[v]:
                            prev[v] = u
                            _push_or_decrease(&dist[0], &heap[0], &pos[0], &size, v, nd)
                else:
                    j = u - n
                    if rd[j] > 0 and pos[sink] != -2:
                        nd = pu - pot[sink]
                        if nd < 0.0:
                            nd = 0.0
                        nd += d
                        if nd < dist[sink]:
                            prev[sink] = u
                            _push_or_decrease(&dist[0], &heap[0], &pos[0], &size, sink, nd)
                    for i in range(n):
                        if flow[i, j] > 0 and pos[i] != -2:
                            nd = -C[i, j] + pu - pot[i]
                            if nd < 0.0:
                                nd = 0.0
                            nd += d
                            if nd < dist[i]:
                                prev[i] = u
                                _push_or_decrease(&dist[0], &heap[0], &pos[0], &size, i, nd)
            if pos[sink] != -2:
                ok = False
                break
            dt = dist[sink]
            for v in range(V):
                if pos[v] == -2:
                    pot[v] += dist[v]
                else:
                    pot[v] += dt
            jj = prev[sink] - n
            amount = rd[jj]
            v = prev[sink]
            while True:
                i = prev[v]
                u = prev[i]
                if u == -1:
                    if rs[i] < amount:
                        amount = rs[i]
                    break
                if flow[i, u - n] < amount:
                    amount = flow[i, u - n]
                v = u
            rd[jj] -= amount
            v = prev[sink]
            while True:
                i = prev[v]
                flow[i, v - n] += amount
                u = prev[i]
                if u == -1:
                    rs[i] -= amount
                    break
                flow[i, u - n] -= amount
                v = u
            remaining -= amount
    if not ok:
        raise RuntimeError("no augmenting path; supply and demand are inconsistent")
    return flow_arr, pot_arr[n:n + k].copy()
