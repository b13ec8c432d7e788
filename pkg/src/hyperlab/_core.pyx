# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled leapfrog kernel for the coupled wave / Klein-Gordon system.

The numpy module ``_core_py`` implements the same arithmetic in the same
order and is used when this extension is not built.
"""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport fabs

cnp.import_array()


def leapfrog_step(double[:, ::1] u_new, const double[:, ::1] u0,
                  const double[:, ::1] u1, const double[:, ::1] u2,
                  double[:, ::1] v_new, const double[:, ::1] v0,
                  const double[:, ::1] v1, const double[:, ::1] v2,
                  const double[:, ::1] fu, const double[:, ::1] fv,
                  const double[::1] c, double dx, double dt,
                  Py_ssize_t i0, Py_ssize_t i1, Py_ssize_t j0, Py_ssize_t j1,
                  const Py_ssize_t[::1] jlo, const Py_ssize_t[::1] jhi,
                  bint forced, int num_threads=1):
    """Advance both fields one step on rows [i0, i1), row i covering columns [jlo[i], jhi[i]).

    [j0, j1) is the bounding column range; the forcing arrays have the shape
    of the bounding box (i1 - i0, j1 - j0).

    ``u0, u1, u2`` are the levels n, n-1, n-2 (same for v). ``c`` packs
    A0 A1 A2 R Q00 Q01 Q02 Q11 Q12 Q22 P00 P01 P02 P11 P12 P22.
    Returns the sup norm of the two new levels over the box.
    """
    cdef Py_ssize_t i, j
    cdef double inv2dt = 1.0 / (2.0 * dt)
    cdef double inv2dx = 1.0 / (2.0 * dx)
    cdef double invdx2 = 1.0 / (dx * dx)
    cdef double dt2 = dt * dt
    cdef double A0 = c[0], A1 = c[1], A2 = c[2], R = c[3]
    cdef double Q00 = c[4], Q01 = c[5], Q02 = c[6], Q11 = c[7], Q12 = c[8], Q22 = c[9]
    cdef double P00 = c[10], P01 = c[11], P02 = c[12], P11 = c[13], P12 = c[14], P22 = c[15]
    cdef double ut, ux, uy, lapu, vv, vt, vx, vy, lapv, su, sv, gu, gv, a, b
    cdef Py_ssize_t nrow = i1 - i0
    if nrow <= 0 or j1 <= j0:
        return 0.0
    cdef double[::1] rowmax = np.zeros(nrow)

    for i in prange(i0, i1, nogil=True, num_threads=num_threads, schedule="static"):
        rowmax[i - i0] = 0.0
        for j in range(jlo[i], jhi[i]):
            ut = (3.0 * u0[i, j] - 4.0 * u1[i, j] + u2[i, j]) * inv2dt
            ux = (u0[i + 1, j] - u0[i - 1, j]) * inv2dx
            uy = (u0[i, j + 1] - u0[i, j - 1]) * inv2dx
            lapu = (u0[i + 1, j] + u0[i - 1, j] + u0[i, j + 1] + u0[i, j - 1] - 4.0 * u0[i, j]) * invdx2
            vv = v0[i, j]
            vt = (3.0 * vv - 4.0 * v1[i, j] + v2[i, j]) * inv2dt
            vx = (v0[i + 1, j] - v0[i - 1, j]) * inv2dx
            vy = (v0[i, j + 1] - v0[i, j - 1]) * inv2dx
            lapv = (v0[i + 1, j] + v0[i - 1, j] + v0[i, j + 1] + v0[i, j - 1] - 4.0 * vv) * invdx2
            su = vv * (A0 * vt + A1 * vx + A2 * vy + R * vv) + (
                Q00 * vt * vt + Q11 * vx * vx + Q22 * vy * vy
                + 2.0 * (Q01 * vt * vx + Q02 * vt * vy + Q12 * vx * vy))
            sv = (P00 * ut * ut + P11 * ux * ux + P22 * uy * uy
                  + 2.0 * (P01 * ut * ux + P02 * ut * uy + P12 * ux * uy))
            if forced:
                gu = lapu + su + fu[i - i0, j - j0]
                gv = lapv - vv + sv + fv[i - i0, j - j0]
            else:
                gu = lapu + su
                gv = lapv - vv + sv
            a = 2.0 * u0[i, j] - u1[i, j] + dt2 * gu
            b = 2.0 * vv - v1[i, j] + dt2 * gv
            u_new[i, j] = a
            v_new[i, j] = b
            a = fabs(a)
            b = fabs(b)
            if a != a or b != b:
                # NaN poisons the sup so the detector sees it
                rowmax[i - i0] = a + b
            elif a > rowmax[i - i0] and rowmax[i - i0] == rowmax[i - i0]:
                rowmax[i - i0] = a
            if b > rowmax[i - i0] and rowmax[i - i0] == rowmax[i - i0]:
                rowmax[i - i0] = b
    return float(np.max(rowmax))


# 1D second-order central weights on offsets -2..2 for derivatives 0..3
cdef double W1D[4][5]
W1D[0][:] = [0.0, 0.0, 1.0, 0.0, 0.0]
W1D[1][:] = [0.0, -0.5, 0.0, 0.5, 0.0]
W1D[2][:] = [0.0, 1.0, -2.0, 1.0, 0.0]
W1D[3][:] = [-0.5, 1.0, 0.0, -1.0, 0.5]

DEF MAXLEV = 16


def stencil_jets(levels, const Py_ssize_t[::1] ii, const Py_ssize_t[::1] jj,
                 const double[:, :, ::1] W, double dx,
                 const int[::1] kt, const int[::1] k1, const int[::1] k2,
                 int num_threads=1):
    """Jets from 5x5 spatial stencils and per-point time weights.

    ``levels`` is a sequence of C-contiguous (n, m) arrays, ``W`` has shape
    (npts, nderiv + 1, nlev). Returns out[q, p] = d_t^kt d_1^k1 d_2^k2 at point p
    for the q-th derivative triple.
    """
    cdef Py_ssize_t nlev = len(levels)
    if nlev > MAXLEV:
        raise ValueError("too many levels")
    cdef Py_ssize_t npts = ii.shape[0], nq = kt.shape[0]
    cdef Py_ssize_t n = 0, m = 0
    cdef const double* ptrs[MAXLEV]
    cdef const double[:, ::1] mv
    cdef Py_ssize_t l
    keep = []
    for l in range(nlev):
        mv = levels[l]
        keep.append(mv)
        if l == 0:
            n = mv.shape[0]
            m = mv.shape[1]
        elif mv.shape[0] != n or mv.shape[1] != m:
            raise ValueError("levels differ in shape")
        ptrs[l] = &mv[0, 0]
    out_arr = np.zeros((nq, npts))
    cdef double[:, ::1] out = out_arr
    cdef double[4] scale
    cdef int maxk = 0
    cdef Py_ssize_t q, p, a, b, i, j, base
    for q in range(nq):
        if k1[q] + k2[q] > maxk:
            maxk = k1[q] + k2[q]
    if maxk > 3:
        raise ValueError("spatial order above 3")
    if jj.shape[0] != npts or W.shape[0] != npts or W.shape[2] != nlev:
        raise ValueError("W must have shape (npts, nderiv + 1, nlev) matching ii, jj and levels")
    for q in range(nq):
        if kt[q] < 0 or kt[q] >= W.shape[1]:
            raise ValueError("time derivative order exceeds the weights")
    scale[0] = 1.0
    for a in range(1, 4):
        scale[a] = scale[a - 1] / dx
    cdef double row[5][4]
    cdef double S[4][4]
    cdef double acc, w
    for p in prange(npts, nogil=True, num_threads=num_threads, schedule="static"):
        i = ii[p]
        j = jj[p]
        if i < 2 or j < 2 or i > n - 3 or j > m - 3:
            continue
        for l in range(nlev):
            base = (i - 2) * m + (j - 2)
            for a in range(5):
                for b in range(maxk + 1):
                    acc = 0.0
                    for q in range(5):
                        acc = acc + W1D[b][q] * ptrs[l][base + a * m + q]
                    row[a][b] = acc
            for a in range(maxk + 1):
                for b in range(maxk + 1 - a):
                    acc = 0.0
                    for q in range(5):
                        acc = acc + W1D[a][q] * row[q][b]
                    S[a][b] = acc * scale[a + b]
            for q in range(nq):
                w = W[p, kt[q], l]
                out[q, p] += w * S[k1[q]][k2[q]]
    return out_arr
