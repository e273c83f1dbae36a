# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled point location and field evaluation kernels.

Mirrors ``_core_py`` exactly (same statuses, same tie rules); the Python
module is the fallback when this extension is not built.
"""
from libc.math cimport log, sqrt, INFINITY
from libc.stdint cimport int64_t

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef extern from "<time.h>" nogil:
    cdef struct timespec:
        long tv_sec
        long tv_nsec
    int clock_gettime(int clk_id, timespec *tp)
    int CLOCK_MONOTONIC

cdef enum:
    # locate statuses
    FOUND = 0
    EXITED = 1
    WALK_FAILED = 2
    # query statuses, kept in sync with field.STATUS_*
    Q_OK = 0
    Q_INSIDE = 1
    Q_AT_ORIGIN = 2
    Q_NO_COVERAGE = 3
    VISIT_CAP = 8192
    VISIT_MASK = 8191
    LINEAR_VISITS = 48
    MAX_STEPS = 4096


cdef inline void bary(const double[:, ::1] B, int64_t t, double y0, double y1, double y2,
                      double* lam) noexcept nogil:
    cdef double d0 = y0 - B[t, 9]
    cdef double d1 = y1 - B[t, 10]
    cdef double d2 = y2 - B[t, 11]
    lam[1] = B[t, 0] * d0 + B[t, 1] * d1 + B[t, 2] * d2
    lam[2] = B[t, 3] * d0 + B[t, 4] * d1 + B[t, 5] * d2
    lam[3] = B[t, 6] * d0 + B[t, 7] * d1 + B[t, 8] * d2
    lam[0] = 1.0 - lam[1] - lam[2] - lam[3]


cdef struct Visited:
    int64_t list[MAX_STEPS + 1]
    int64_t slots[VISIT_CAP]
    int n


cdef inline void hash_put(Visited* v, int64_t t) noexcept nogil:
    cdef int64_t h = (t * <int64_t>2654435761) & VISIT_MASK
    while v.slots[h] != -1:
        h = (h + 1) & VISIT_MASK
    v.slots[h] = t


cdef inline void visited_add(Visited* v, int64_t t) noexcept nogil:
    cdef int i
    v.list[v.n] = t
    v.n += 1
    if v.n == LINEAR_VISITS + 1:
        # long walk: switch from linear scans to a hash set
        for i in range(VISIT_CAP):
            v.slots[i] = -1
        for i in range(v.n):
            hash_put(v, v.list[i])
    elif v.n > LINEAR_VISITS + 1:
        hash_put(v, t)


cdef inline bint visited_has(Visited* v, int64_t t) noexcept nogil:
    cdef int i
    cdef int64_t h
    if v.n <= LINEAR_VISITS:
        for i in range(v.n):
            if v.list[i] == t:
                return True
        return False
    h = (t * <int64_t>2654435761) & VISIT_MASK
    while v.slots[h] != -1:
        if v.slots[h] == t:
            return True
        h = (h + 1) & VISIT_MASK
    return False


cdef int64_t walk(const double[:, ::1] B, const int64_t[:, ::1] nbr, double y0, double y1, double y2,
                  int64_t start, double eps, int* status, int* steps, int* exit_face,
                  double* lam) noexcept nogil:
    cdef Visited vis
    cdef int64_t t = start, nxt
    cdef int k, best
    cdef double worst
    vis.n = 0
    steps[0] = 0
    visited_add(&vis, t)
    while True:
        bary(B, t, y0, y1, y2, lam)
        best = -1
        worst = -eps
        for k in range(4):
            if lam[k] < worst:
                nxt = nbr[t, k]
                if nxt >= 0 and visited_has(&vis, nxt):
                    continue
                worst = lam[k]
                best = k
        if best < 0:
            # all coordinates within tolerance, or every negative face leads back
            if lam[0] >= -eps and lam[1] >= -eps and lam[2] >= -eps and lam[3] >= -eps:
                status[0] = FOUND
            else:
                status[0] = WALK_FAILED
            return t
        nxt = nbr[t, best]
        if nxt < 0:
            status[0] = EXITED
            exit_face[0] = best
            return t
        if steps[0] >= MAX_STEPS:
            status[0] = WALK_FAILED
            return t
        t = nxt
        steps[0] += 1
        visited_add(&vis, t)


cdef int64_t brute(const double[:, ::1] B, double y0, double y1, double y2, double eps,
                   double* lam) noexcept nogil:
    cdef int64_t t, n = B.shape[0]
    for t in range(n):
        bary(B, t, y0, y1, y2, lam)
        if lam[0] >= -eps and lam[1] >= -eps and lam[2] >= -eps and lam[3] >= -eps:
            return t
    return -1


cdef inline double det3(double ax, double ay, double az, double bx, double by, double bz,
                        double cx, double cy, double cz) noexcept nogil:
    return ax * (by * cz - bz * cy) - ay * (bx * cz - bz * cx) + az * (bx * cy - by * cx)


cdef bint radial_exit(const double[:, ::1] verts, const int64_t[:, ::1] tets, int64_t t, int face,
                      double y0, double y1, double y2) noexcept nogil:
    """True if the ray from y = 0 through the point passes through the exit face."""
    # orientation is irrelevant: only sign agreement matters
    cdef int64_t a = tets[t, 1 if face == 0 else 0]
    cdef int64_t b = tets[t, 2 if face <= 1 else 1]
    cdef int64_t c = tets[t, 2 if face == 3 else 3]
    cdef double s0 = det3(verts[a, 0], verts[a, 1], verts[a, 2], verts[b, 0], verts[b, 1], verts[b, 2], y0, y1, y2)
    cdef double s1 = det3(verts[b, 0], verts[b, 1], verts[b, 2], verts[c, 0], verts[c, 1], verts[c, 2], y0, y1, y2)
    cdef double s2 = det3(verts[c, 0], verts[c, 1], verts[c, 2], verts[a, 0], verts[a, 1], verts[a, 2], y0, y1, y2)
    return (s0 >= 0 and s1 >= 0 and s2 >= 0) or (s0 <= 0 and s1 <= 0 and s2 <= 0)


cdef int64_t locate_full(const double[:, ::1] B, const int64_t[:, ::1] nbr, const double[:, ::1] verts,
                         const int64_t[:, ::1] tets, bint star, double y0, double y1, double y2,
                         int64_t start, double eps, int* status, int* steps, double* lam) noexcept nogil:
    cdef int exit_face = -1
    cdef int64_t t = walk(B, nbr, y0, y1, y2, start, eps, status, steps, &exit_face, lam)
    if status[0] == FOUND:
        return t
    if status[0] == EXITED and star and radial_exit(verts, tets, t, exit_face, y0, y1, y2):
        return -1
    t = brute(B, y0, y1, y2, eps, lam)
    status[0] = FOUND if t >= 0 else EXITED
    return t


def locate(const double[:, ::1] B, const int64_t[:, ::1] nbr, const double[:, ::1] verts,
           const int64_t[:, ::1] tets, bint star, double y0, double y1, double y2,
           int64_t start, double eps=1e-12):
    """Returns (tet or -1, status, walk steps)."""
    cdef int status = 0, steps = 0
    cdef double lam[4]
    cdef int64_t t
    if start < 0 or start >= B.shape[0]:
        start = 0
    t = locate_full(B, nbr, verts, tets, star, y0, y1, y2, start, eps, &status, &steps, lam)
    return t, status, steps


def walk_only(const double[:, ::1] B, const int64_t[:, ::1] nbr, double y0, double y1, double y2,
              int64_t start, double eps=1e-12):
    """Plain walk without fallback. Returns (tet, status, steps, exit_face)."""
    cdef int status = 0, steps = 0, face = -1
    cdef double lam[4]
    cdef int64_t t = walk(B, nbr, y0, y1, y2, start, eps, &status, &steps, &face, lam)
    return t, status, steps, face


def brute_locate(const double[:, ::1] B, double y0, double y1, double y2, double eps=1e-12):
    cdef double lam[4]
    return brute(B, y0, y1, y2, eps, lam)


cdef inline long long now_ns() noexcept nogil:
    cdef timespec ts
    clock_gettime(CLOCK_MONOTONIC, &ts)
    return <long long>ts.tv_sec * 1000000000 + ts.tv_nsec


def query_batch(const double[:, ::1] points, const double[::1] origin, double scale,
                const double[:, ::1] B, const int64_t[:, ::1] nbr, const double[:, ::1] verts,
                const int64_t[:, ::1] tets, bint star, const double[::1] V,
                const double[:, ::1] vgrad, const double[:, ::1] tgrad, int grad_mode,
                int64_t hint, bint warm, bint use_hint, int64_t default_start,
                double[::1] h_out, double[:, ::1] g_out, int64_t[::1] tet_out,
                int[::1] status_out, int[::1] steps_out,
                long long[::1] time_out=None, double eps=1e-12):
    """Evaluate the field at many points.

    ``warm``: each point's walk starts at the previous result (rolling hint).
    ``use_hint``: if False every walk starts at ``default_start``.
    ``grad_mode``: 0 interpolated vertex gradients, 1 per-tet P1 gradient.
    Returns the final hint.
    """
    cdef Py_ssize_t i, n = points.shape[0]
    cdef double q0, q1, q2, r2, y0, y1, y2, val, gy, gv0, gv1, gv2
    cdef double a0, a1, a2, qa, inv_s = 1.0 / scale
    cdef double lam[4]
    cdef int status, steps, k
    cdef int64_t t, start, vk
    cdef long long t0 = 0
    cdef bint timed = time_out is not None
    if hint < 0 or hint >= B.shape[0]:
        hint = default_start
    with nogil:
        for i in range(n):
            if timed:
                t0 = now_ns()
            start = hint if use_hint else default_start
            q0 = (points[i, 0] - origin[0]) * inv_s
            q1 = (points[i, 1] - origin[1]) * inv_s
            q2 = (points[i, 2] - origin[2]) * inv_s
            r2 = q0 * q0 + q1 * q1 + q2 * q2
            g_out[i, 0] = 0.0
            g_out[i, 1] = 0.0
            g_out[i, 2] = 0.0
            if r2 < 1e-24:
                h_out[i] = INFINITY
                tet_out[i] = -1
                status_out[i] = Q_AT_ORIGIN
                steps_out[i] = 0
                if timed:
                    time_out[i] = now_ns() - t0
                continue
            y0 = q0 / r2
            y1 = q1 / r2
            y2 = q2 / r2
            t = locate_full(B, nbr, verts, tets, star, y0, y1, y2, start, eps, &status, &steps, lam)
            steps_out[i] = steps
            tet_out[i] = t
            if t < 0:
                h_out[i] = -INFINITY
                status_out[i] = Q_INSIDE
                if timed:
                    time_out[i] = now_ns() - t0
                continue
            val = 0.0
            gv0 = 0.0
            gv1 = 0.0
            gv2 = 0.0
            for k in range(4):
                vk = tets[t, k]
                val += lam[k] * V[vk]
                if grad_mode == 0:
                    gv0 += lam[k] * vgrad[vk, 0]
                    gv1 += lam[k] * vgrad[vk, 1]
                    gv2 += lam[k] * vgrad[vk, 2]
            if grad_mode != 0:
                gv0 = tgrad[t, 0]
                gv1 = tgrad[t, 1]
                gv2 = tgrad[t, 2]
            # h = -ln(|y| V); grad_y h = -(y/|y|^2 + grad V / V) and y/|y|^2 = q
            h_out[i] = -log(sqrt(y0 * y0 + y1 * y1 + y2 * y2) * val)
            a0 = -(q0 + gv0 / val)
            a1 = -(q1 + gv1 / val)
            a2 = -(q2 + gv2 / val)
            # pull back through the symmetric inversion Jacobian and the frame scale
            qa = q0 * a0 + q1 * a1 + q2 * a2
            g_out[i, 0] = (a0 * r2 - 2.0 * q0 * qa) / (r2 * r2) * inv_s
            g_out[i, 1] = (a1 * r2 - 2.0 * q1 * qa) / (r2 * r2) * inv_s
            g_out[i, 2] = (a2 * r2 - 2.0 * q2 * qa) / (r2 * r2) * inv_s
            status_out[i] = Q_OK
            if warm:
                hint = t
            if timed:
                time_out[i] = now_ns() - t0
    return hint
