# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False, language_level=3
"""Compiled 3-d convolution kernels.

Same contracts as conv_numpy: cross-correlation on pre-padded, C-contiguous
inputs.  Threading comes from OpenMP; every thread owns a disjoint slice of
the output, so results are bitwise reproducible for any thread count.
"""

from cython.parallel import parallel, prange

cimport openmp
from libc.stdlib cimport free, malloc
from libc.string cimport memset

ctypedef fused real:
    float
    double

DEF TW = 32    # forward output tile width
DEF VW = 16    # dot-product vector accumulator width
DEF KMAX = 9


def set_num_threads(n):
    openmp.omp_set_num_threads(int(n))


def get_max_threads():
    return openmp.omp_get_max_threads()


# ---------------------------------------------------------------------------
# forward

cdef inline void _fwd_rows(const real *xb, const real *wb, real *ob,
                           Py_ssize_t c, Py_ssize_t k, Py_ssize_t jb,
                           Py_ssize_t zo, Py_ssize_t yo, Py_ssize_t wo,
                           Py_ssize_t xsd, Py_ssize_t xsh, Py_ssize_t xsw,
                           Py_ssize_t osf, int stride) nogil:
    # accumulate up to four output rows out[j0:j0+jb, zo, yo, :] for one sample;
    # xb = &xp[i,0,0,0,0], wb = &w[j0,0,0,0,0], ob = &out[i,j0,zo,yo,0]
    cdef real acc[4 * TW]
    cdef Py_ssize_t x0, blk, ci, kz, ky, kx, t, jj
    cdef Py_ssize_t wsj = c * k * k * k
    cdef const real *row
    cdef const real *wr
    cdef real w0, w1, w2, w3
    for x0 in range(0, wo, TW):
        blk = min(TW, wo - x0)
        for t in range(4 * TW):
            acc[t] = 0
        for ci in range(c):
            for kz in range(k):
                for ky in range(k):
                    row = (xb + ci * xsd + (zo * stride + kz) * xsh
                           + (yo * stride + ky) * xsw + x0 * stride)
                    wr = wb + ci * k * k * k + kz * k * k + ky * k
                    if jb == 4:
                        for kx in range(k):
                            w0 = wr[kx]
                            w1 = wr[wsj + kx]
                            w2 = wr[2 * wsj + kx]
                            w3 = wr[3 * wsj + kx]
                            if stride == 1:
                                if blk == TW:
                                    for t in range(TW):
                                        acc[t] += w0 * row[t + kx]
                                        acc[TW + t] += w1 * row[t + kx]
                                        acc[2 * TW + t] += w2 * row[t + kx]
                                        acc[3 * TW + t] += w3 * row[t + kx]
                                else:
                                    for t in range(blk):
                                        acc[t] += w0 * row[t + kx]
                                        acc[TW + t] += w1 * row[t + kx]
                                        acc[2 * TW + t] += w2 * row[t + kx]
                                        acc[3 * TW + t] += w3 * row[t + kx]
                            else:
                                for t in range(blk):
                                    acc[t] += w0 * row[t * stride + kx]
                                    acc[TW + t] += w1 * row[t * stride + kx]
                                    acc[2 * TW + t] += w2 * row[t * stride + kx]
                                    acc[3 * TW + t] += w3 * row[t * stride + kx]
                    else:
                        for jj in range(jb):
                            for kx in range(k):
                                w0 = wr[jj * wsj + kx]
                                for t in range(blk):
                                    acc[jj * TW + t] += w0 * row[t * stride + kx]
        for jj in range(jb):
            for t in range(blk):
                ob[jj * osf + x0 + t] += acc[jj * TW + t]


def conv3d_forward(real[:, :, :, :, ::1] xp, real[:, :, :, :, ::1] w, int stride,
                   real[:, :, :, :, ::1] out):
    """out[n,f,zo,yo,xo] += sum over (c,kz,ky,kx) of w * padded input."""
    cdef Py_ssize_t n = xp.shape[0], c = xp.shape[1]
    cdef Py_ssize_t f = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t do_ = out.shape[2], ho = out.shape[3], wo = out.shape[4]
    cdef Py_ssize_t xsd = xp.shape[2] * xp.shape[3] * xp.shape[4]
    cdef Py_ssize_t xsh = xp.shape[3] * xp.shape[4]
    cdef Py_ssize_t xsw = xp.shape[4]
    cdef Py_ssize_t osf = do_ * ho * wo
    cdef Py_ssize_t i, zo, yo, j
    for i in range(n):
        for zo in prange(do_, schedule='static', nogil=True):
            for yo in range(ho):
                for j in range(0, f, 4):
                    _fwd_rows(&xp[i, 0, 0, 0, 0], &w[j, 0, 0, 0, 0],
                              &out[i, j, zo, yo, 0], c, k, min(4, f - j),
                              zo, yo, wo, xsd, xsh, xsw, osf, stride)


# ---------------------------------------------------------------------------
# weight gradient

cdef inline void _gw_plane_k3(const real *g, const real *x, Py_ssize_t ho,
                              Py_ssize_t wo, Py_ssize_t gs, Py_ssize_t xs,
                              real *out) nogil:
    # out[0:3] += dots of the (yo, xo) planes at the three kx offsets, stride 1
    cdef real a0[VW]
    cdef real a1[VW]
    cdef real a2[VW]
    cdef real s0 = 0, s1 = 0, s2 = 0
    cdef Py_ssize_t yo, t0, t
    cdef Py_ssize_t wf = wo - (wo % VW)
    cdef const real *rg
    cdef const real *rx
    for t in range(VW):
        a0[t] = 0
        a1[t] = 0
        a2[t] = 0
    for yo in range(ho):
        rg = g + yo * gs
        rx = x + yo * xs
        for t0 in range(0, wf, VW):
            for t in range(VW):
                a0[t] += rg[t0 + t] * rx[t0 + t]
                a1[t] += rg[t0 + t] * rx[t0 + t + 1]
                a2[t] += rg[t0 + t] * rx[t0 + t + 2]
        for t0 in range(wf, wo):
            s0 += rg[t0] * rx[t0]
            s1 += rg[t0] * rx[t0 + 1]
            s2 += rg[t0] * rx[t0 + 2]
    for t in range(VW):
        s0 += a0[t]
        s1 += a1[t]
        s2 += a2[t]
    out[0] += s0
    out[1] += s1
    out[2] += s2


cdef inline void _gw_plane_k5(const real *g, const real *x, Py_ssize_t ho,
                              Py_ssize_t wo, Py_ssize_t gs, Py_ssize_t xs,
                              real *out) nogil:
    cdef real a0[VW]
    cdef real a1[VW]
    cdef real a2[VW]
    cdef real a3[VW]
    cdef real a4[VW]
    cdef real s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0
    cdef Py_ssize_t yo, t0, t
    cdef Py_ssize_t wf = wo - (wo % VW)
    cdef const real *rg
    cdef const real *rx
    for t in range(VW):
        a0[t] = 0
        a1[t] = 0
        a2[t] = 0
        a3[t] = 0
        a4[t] = 0
    for yo in range(ho):
        rg = g + yo * gs
        rx = x + yo * xs
        for t0 in range(0, wf, VW):
            for t in range(VW):
                a0[t] += rg[t0 + t] * rx[t0 + t]
                a1[t] += rg[t0 + t] * rx[t0 + t + 1]
                a2[t] += rg[t0 + t] * rx[t0 + t + 2]
                a3[t] += rg[t0 + t] * rx[t0 + t + 3]
                a4[t] += rg[t0 + t] * rx[t0 + t + 4]
        for t0 in range(wf, wo):
            s0 += rg[t0] * rx[t0]
            s1 += rg[t0] * rx[t0 + 1]
            s2 += rg[t0] * rx[t0 + 2]
            s3 += rg[t0] * rx[t0 + 3]
            s4 += rg[t0] * rx[t0 + 4]
    for t in range(VW):
        s0 += a0[t]
        s1 += a1[t]
        s2 += a2[t]
        s3 += a3[t]
        s4 += a4[t]
    out[0] += s0
    out[1] += s1
    out[2] += s2
    out[3] += s3
    out[4] += s4


cdef inline void _gw_plane_any(const real *g, const real *x, Py_ssize_t ho,
                               Py_ssize_t wo, Py_ssize_t gs, Py_ssize_t xs,
                               Py_ssize_t k, int stride, real *out) nogil:
    cdef real accv[KMAX * VW]
    cdef Py_ssize_t yo, t0, t, kx, blk
    cdef const real *rg
    cdef const real *rx
    cdef real s
    for t in range(k * VW):
        accv[t] = 0
    for yo in range(ho):
        rg = g + yo * gs
        rx = x + yo * stride * xs
        for t0 in range(0, wo, VW):
            blk = min(VW, wo - t0)
            for kx in range(k):
                if stride == 1:
                    for t in range(blk):
                        accv[kx * VW + t] += rg[t0 + t] * rx[t0 + t + kx]
                else:
                    for t in range(blk):
                        accv[kx * VW + t] += rg[t0 + t] * rx[(t0 + t) * stride + kx]
    for kx in range(k):
        s = 0
        for t in range(VW):
            s += accv[kx * VW + t]
        out[kx] += s


def conv3d_backward_w(real[:, :, :, :, ::1] xp, real[:, :, :, :, ::1] gy, int stride,
                      real[:, :, :, :, ::1] gw):
    """Weight gradient; gw must arrive zeroed."""
    cdef Py_ssize_t n = xp.shape[0], c = xp.shape[1]
    cdef Py_ssize_t f = gw.shape[0], k = gw.shape[2]
    cdef Py_ssize_t do_ = gy.shape[2], ho = gy.shape[3], wo = gy.shape[4]
    cdef Py_ssize_t xsd = xp.shape[2] * xp.shape[3] * xp.shape[4]
    cdef Py_ssize_t xsh = xp.shape[3] * xp.shape[4]
    cdef Py_ssize_t xsw = xp.shape[4]
    cdef Py_ssize_t i, j, zo, ci, kz, ky
    cdef const real *gplane
    cdef const real *xrow
    if k > KMAX:
        raise ValueError(f"kernel size {k} above compiled limit {KMAX}")
    for j in prange(f, schedule='static', nogil=True):
        for i in range(n):
            for zo in range(do_):
                gplane = &gy[i, j, zo, 0, 0]
                for ci in range(c):
                    for kz in range(k):
                        for ky in range(k):
                            xrow = (&xp[i, ci, 0, 0, 0]
                                    + (zo * stride + kz) * xsh + ky * xsw)
                            if stride == 1 and k == 3:
                                _gw_plane_k3(gplane, xrow, ho, wo, wo, xsw,
                                             &gw[j, ci, kz, ky, 0])
                            elif stride == 1 and k == 5:
                                _gw_plane_k5(gplane, xrow, ho, wo, wo, xsw,
                                             &gw[j, ci, kz, ky, 0])
                            else:
                                _gw_plane_any(gplane, xrow, ho, wo, wo, xsw,
                                              k, stride, &gw[j, ci, kz, ky, 0])


# ---------------------------------------------------------------------------
# input gradient (scatter form, any stride)

def conv3d_backward_x(real[:, :, :, :, ::1] gy, real[:, :, :, :, ::1] w, int stride,
                      real[:, :, :, :, ::1] gxp):
    """Input gradient scattered into the zeroed padded buffer gxp."""
    cdef Py_ssize_t n = gy.shape[0], f = gy.shape[1]
    cdef Py_ssize_t c = w.shape[1], k = w.shape[2]
    cdef Py_ssize_t do_ = gy.shape[2], ho = gy.shape[3], wo = gy.shape[4]
    cdef Py_ssize_t i, ci, j, zo, yo, kz, ky, kx, xo
    cdef real wv
    cdef real *gxrow
    cdef const real *grow
    for i in range(n):
        for ci in prange(c, schedule='static', nogil=True):
            for j in range(f):
                for zo in range(do_):
                    for kz in range(k):
                        for yo in range(ho):
                            for ky in range(k):
                                gxrow = &gxp[i, ci, zo * stride + kz, yo * stride + ky, 0]
                                grow = &gy[i, j, zo, yo, 0]
                                for kx in range(k):
                                    wv = w[j, ci, kz, ky, kx]
                                    if stride == 1:
                                        for xo in range(wo):
                                            gxrow[xo + kx] += wv * grow[xo]
                                    else:
                                        for xo in range(wo):
                                            gxrow[xo * stride + kx] += wv * grow[xo]
