# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled geometry kernels. Same contract as ``molbench._geom_fallback``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, atan2, fabs, NAN, M_PI

cnp.import_array()

cdef double COLLINEAR_EPS = 1e-8
cdef double ZERO_LENGTH = 1e-12
cdef double RAD2DEG = 180.0 / M_PI


cdef inline void _sub(const double[:, ::1] p, Py_ssize_t a, Py_ssize_t b, double* out) nogil:
    out[0] = p[a, 0] - p[b, 0]
    out[1] = p[a, 1] - p[b, 1]
    out[2] = p[a, 2] - p[b, 2]


cdef inline void _cross(const double* u, const double* v, double* out) nogil:
    out[0] = u[1] * v[2] - u[2] * v[1]
    out[1] = u[2] * v[0] - u[0] * v[2]
    out[2] = u[0] * v[1] - u[1] * v[0]


cdef inline double _dot(const double* u, const double* v) nogil:
    return u[0] * v[0] + u[1] * v[1] + u[2] * v[2]


cdef inline double _norm(const double* u) nogil:
    return sqrt(_dot(u, u))


cdef inline double _dist(const double[:, ::1] p, Py_ssize_t a, Py_ssize_t b) nogil:
    cdef double d[3]
    _sub(p, a, b, d)
    return _norm(d)


cdef inline double _angle(const double[:, ::1] p, Py_ssize_t i, Py_ssize_t j, Py_ssize_t k, bint* degenerate) nogil:
    cdef double u[3]
    cdef double v[3]
    cdef double c[3]
    _sub(p, i, j, u)
    _sub(p, k, j, v)
    if _norm(u) <= ZERO_LENGTH or _norm(v) <= ZERO_LENGTH:
        degenerate[0] = True
        return NAN
    _cross(u, v, c)
    return atan2(_norm(c), _dot(u, v)) * RAD2DEG


cdef inline double _dihedral(const double[:, ::1] p, Py_ssize_t i, Py_ssize_t j, Py_ssize_t k, Py_ssize_t l, bint* degenerate) nogil:
    cdef double b1[3]
    cdef double b2[3]
    cdef double b3[3]
    cdef double n1[3]
    cdef double n2[3]
    cdef double l1, l2, l3, m1, m2, phi
    _sub(p, j, i, b1)
    _sub(p, k, j, b2)
    _sub(p, l, k, b3)
    _cross(b1, b2, n1)
    _cross(b2, b3, n2)
    l1 = _norm(b1)
    l2 = _norm(b2)
    l3 = _norm(b3)
    m1 = _norm(n1)
    m2 = _norm(n2)
    if (l1 <= ZERO_LENGTH or l2 <= ZERO_LENGTH or l3 <= ZERO_LENGTH
            or m1 <= COLLINEAR_EPS * l1 * l2 or m2 <= COLLINEAR_EPS * l2 * l3):
        degenerate[0] = True
        return NAN
    phi = atan2(l2 * _dot(b1, n2), _dot(n1, n2)) * RAD2DEG
    if phi <= -180.0:
        phi = 180.0
    return phi


def bond_lengths(pos, pairs):
    cdef const double[:, ::1] p = np.ascontiguousarray(pos, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] ix = np.ascontiguousarray(np.asarray(pairs, dtype=np.int64).reshape(-1, 2))
    cdef Py_ssize_t n = ix.shape[0], m
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for m in range(n):
            o[m] = _dist(p, ix[m, 0], ix[m, 1])
    return out


def bond_angles(pos, triples):
    cdef const double[:, ::1] p = np.ascontiguousarray(pos, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] ix = np.ascontiguousarray(np.asarray(triples, dtype=np.int64).reshape(-1, 3))
    cdef Py_ssize_t n = ix.shape[0], m
    cdef bint deg
    out = np.empty(n, dtype=np.float64)
    mask = np.zeros(n, dtype=np.uint8)
    cdef double[::1] o = out
    cdef cnp.uint8_t[::1] mk = mask
    with nogil:
        for m in range(n):
            deg = False
            o[m] = _angle(p, ix[m, 0], ix[m, 1], ix[m, 2], &deg)
            mk[m] = deg
    return out, mask


def dihedrals(pos, quads):
    cdef const double[:, ::1] p = np.ascontiguousarray(pos, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] ix = np.ascontiguousarray(np.asarray(quads, dtype=np.int64).reshape(-1, 4))
    cdef Py_ssize_t n = ix.shape[0], m
    cdef bint deg
    out = np.empty(n, dtype=np.float64)
    mask = np.zeros(n, dtype=np.uint8)
    cdef double[::1] o = out
    cdef cnp.uint8_t[::1] mk = mask
    with nogil:
        for m in range(n):
            deg = False
            o[m] = _dihedral(p, ix[m, 0], ix[m, 1], ix[m, 2], ix[m, 3], &deg)
            mk[m] = deg
    return out, mask


def angle_wrap(a, b):
    d = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    return np.minimum(d, 180.0 - d)


def torsion_wrap(a, b):
    d = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    return np.minimum(d, 360.0 - d)


def deviations(pos_a, pos_b, pairs, triples, quads):
    cdef const double[:, ::1] pa = np.ascontiguousarray(pos_a, dtype=np.float64)
    cdef const double[:, ::1] pb = np.ascontiguousarray(pos_b, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] bx = np.ascontiguousarray(np.asarray(pairs, dtype=np.int64).reshape(-1, 2))
    cdef const cnp.int64_t[:, ::1] ax = np.ascontiguousarray(np.asarray(triples, dtype=np.int64).reshape(-1, 3))
    cdef const cnp.int64_t[:, ::1] tx = np.ascontiguousarray(np.asarray(quads, dtype=np.int64).reshape(-1, 4))
    cdef Py_ssize_t nb = bx.shape[0], na = ax.shape[0], nt = tx.shape[0], m
    cdef double x, y, d
    cdef bint dega, degb

    dr = np.empty(nb, dtype=np.float64)
    dth = np.empty(na, dtype=np.float64)
    raw = np.empty(na, dtype=np.float64)
    adeg = np.zeros(na, dtype=np.uint8)
    dph = np.empty(nt, dtype=np.float64)
    tdeg = np.zeros(nt, dtype=np.uint8)
    cdef double[::1] o_dr = dr, o_dth = dth, o_raw = raw, o_dph = dph
    cdef cnp.uint8_t[::1] o_ad = adeg, o_td = tdeg

    with nogil:
        for m in range(nb):
            o_dr[m] = fabs(_dist(pa, bx[m, 0], bx[m, 1]) - _dist(pb, bx[m, 0], bx[m, 1]))
        for m in range(na):
            dega = False
            degb = False
            x = _angle(pa, ax[m, 0], ax[m, 1], ax[m, 2], &dega)
            y = _angle(pb, ax[m, 0], ax[m, 1], ax[m, 2], &degb)
            if dega or degb:
                o_ad[m] = 1
                o_raw[m] = NAN
                o_dth[m] = NAN
            else:
                d = fabs(x - y)
                o_raw[m] = d
                o_dth[m] = d if d < 180.0 - d else 180.0 - d
        for m in range(nt):
            dega = False
            degb = False
            x = _dihedral(pa, tx[m, 0], tx[m, 1], tx[m, 2], tx[m, 3], &dega)
            y = _dihedral(pb, tx[m, 0], tx[m, 1], tx[m, 2], tx[m, 3], &degb)
            if dega or degb:
                o_td[m] = 1
                o_dph[m] = NAN
            else:
                d = fabs(x - y)
                o_dph[m] = d if d < 360.0 - d else 360.0 - d
    return dr, dth, raw, adeg, dph, tdeg
