"""Pure-Python point location and field evaluation.

Same contract as the compiled ``_core`` extension; used when it is not built
or when ``SADF_PURE_PYTHON=1`` is set.
"""
import math
import time

import numpy as np

FOUND, EXITED, WALK_FAILED = 0, 1, 2
Q_OK, Q_INSIDE, Q_AT_ORIGIN, Q_NO_COVERAGE = 0, 1, 2, 3
MAX_STEPS = 4096

_FACE_VERTS = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))


def _bary(B, t, y0, y1, y2):
    row = B[t]
    d0, d1, d2 = y0 - row[9], y1 - row[10], y2 - row[11]
    l1 = row[0] * d0 + row[1] * d1 + row[2] * d2
    l2 = row[3] * d0 + row[4] * d1 + row[5] * d2
    l3 = row[6] * d0 + row[7] * d1 + row[8] * d2
    return (1.0 - l1 - l2 - l3, l1, l2, l3)


def _walk(B, nbr, y0, y1, y2, start, eps):
    t = start
    visited = {t}
    steps = 0
    while True:
        lam = _bary(B, t, y0, y1, y2)
        best, worst = -1, -eps
        row = nbr[t]
        for k in range(4):
            if lam[k] < worst:
                nxt = row[k]
                if nxt >= 0 and nxt in visited:
                    continue
                worst, best = lam[k], k
        if best < 0:
            ok = min(lam) >= -eps
            return t, (FOUND if ok else WALK_FAILED), steps, -1, lam
        nxt = row[best]
        if nxt < 0:
            return t, EXITED, steps, best, lam
        if steps >= MAX_STEPS:
            return t, WALK_FAILED, steps, -1, lam
        t = int(nxt)
        steps += 1
        visited.add(t)


def _brute(B, y0, y1, y2, eps):
    d = np.array([y0, y1, y2]) - B[:, 9:12]
    # same arithmetic order as the scalar path
    l1 = B[:, 0] * d[:, 0] + B[:, 1] * d[:, 1] + B[:, 2] * d[:, 2]
    l2 = B[:, 3] * d[:, 0] + B[:, 4] * d[:, 1] + B[:, 5] * d[:, 2]
    l3 = B[:, 6] * d[:, 0] + B[:, 7] * d[:, 1] + B[:, 8] * d[:, 2]
    l0 = 1.0 - l1 - l2 - l3
    ok = (l0 >= -eps) & (l1 >= -eps) & (l2 >= -eps) & (l3 >= -eps)
    hits = np.flatnonzero(ok)
    if len(hits) == 0:
        return -1, None
    t = int(hits[0])
    return t, _bary(B, t, y0, y1, y2)


def _det3(a, b, c):
    return (a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
            + a[2] * (b[0] * c[1] - b[1] * c[0]))


def _radial_exit(verts, tets, t, face, y):
    a, b, c = (verts[tets[t, k]] for k in _FACE_VERTS[face])
    s0, s1, s2 = _det3(a, b, y), _det3(b, c, y), _det3(c, a, y)
    return (s0 >= 0 and s1 >= 0 and s2 >= 0) or (s0 <= 0 and s1 <= 0 and s2 <= 0)


def _locate_full(B, nbr, verts, tets, star, y0, y1, y2, start, eps):
    t, status, steps, face, lam = _walk(B, nbr, y0, y1, y2, start, eps)
    if status == FOUND:
        return t, status, steps, lam
    if status == EXITED and star and _radial_exit(verts, tets, t, face, (y0, y1, y2)):
        return -1, EXITED, steps, None
    t, lam = _brute(B, y0, y1, y2, eps)
    return t, (FOUND if t >= 0 else EXITED), steps, lam


def locate(B, nbr, verts, tets, star, y0, y1, y2, start, eps=1e-12):
    if start < 0 or start >= len(B):
        start = 0
    t, status, steps, _ = _locate_full(B, nbr, verts, tets, star, y0, y1, y2, start, eps)
    return t, status, steps


def walk_only(B, nbr, y0, y1, y2, start, eps=1e-12):
    t, status, steps, face, _ = _walk(B, nbr, y0, y1, y2, start, eps)
    return t, status, steps, face


def brute_locate(B, y0, y1, y2, eps=1e-12):
    return _brute(B, y0, y1, y2, eps)[0]


def query_batch(points, origin, scale, B, nbr, verts, tets, star, V, vgrad, tgrad, grad_mode,
                hint, warm, use_hint, default_start, h_out, g_out, tet_out, status_out,
                steps_out, time_out=None, eps=1e-12):
    inv_s = 1.0 / scale
    if hint < 0 or hint >= len(B):
        hint = default_start
    o0, o1, o2 = float(origin[0]), float(origin[1]), float(origin[2])
    for i in range(len(points)):
        t0 = time.perf_counter_ns() if time_out is not None else 0
        start = hint if use_hint else default_start
        px, py, pz = points[i]
        q0, q1, q2 = (px - o0) * inv_s, (py - o1) * inv_s, (pz - o2) * inv_s
        r2 = q0 * q0 + q1 * q1 + q2 * q2
        g_out[i] = 0.0
        if r2 < 1e-24:
            h_out[i], tet_out[i], status_out[i], steps_out[i] = math.inf, -1, Q_AT_ORIGIN, 0
            if time_out is not None:
                time_out[i] = time.perf_counter_ns() - t0
            continue
        y0, y1, y2 = q0 / r2, q1 / r2, q2 / r2
        t, _, steps, lam = _locate_full(B, nbr, verts, tets, star, y0, y1, y2, start, eps)
        steps_out[i] = steps
        tet_out[i] = t
        if t < 0:
            h_out[i], status_out[i] = -math.inf, Q_INSIDE
            if time_out is not None:
                time_out[i] = time.perf_counter_ns() - t0
            continue
        val = gv0 = gv1 = gv2 = 0.0
        for k in range(4):
            vk = tets[t, k]
            val += lam[k] * V[vk]
            if grad_mode == 0:
                gv0 += lam[k] * vgrad[vk, 0]
                gv1 += lam[k] * vgrad[vk, 1]
                gv2 += lam[k] * vgrad[vk, 2]
        if grad_mode != 0:
            gv0, gv1, gv2 = tgrad[t, 0], tgrad[t, 1], tgrad[t, 2]
        h_out[i] = -math.log(math.sqrt(y0 * y0 + y1 * y1 + y2 * y2) * val)
        a0, a1, a2 = -(q0 + gv0 / val), -(q1 + gv1 / val), -(q2 + gv2 / val)
        qa = q0 * a0 + q1 * a1 + q2 * a2
        r4 = r2 * r2
        g_out[i, 0] = (a0 * r2 - 2.0 * q0 * qa) / r4 * inv_s
        g_out[i, 1] = (a1 * r2 - 2.0 * q1 * qa) / r4 * inv_s
        g_out[i, 2] = (a2 * r2 - 2.0 * q2 * qa) / r4 * inv_s
        status_out[i] = Q_OK
        if warm:
            hint = t
        if time_out is not None:
            time_out[i] = time.perf_counter_ns() - t0
    return hint
