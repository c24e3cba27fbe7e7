# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled trajectory steppers (per-path loops).

Mirrors `_pure` function by function: same discretization, same update
order, same recorded output.  States are (P, d) complex; operator tables
and noise layouts match the pure backend.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt, fabs

BACKEND = "compiled"

ctypedef double complex cplx


cdef inline double _norm(cplx[::1] v, Py_ssize_t d) noexcept:
    cdef double acc = 0.0
    cdef Py_ssize_t a
    for a in range(d):
        acc += v[a].real * v[a].real + v[a].imag * v[a].imag
    return sqrt(acc)


cdef inline void _matvec(cplx[:, ::1] m, cplx[::1] v, cplx[::1] out,
                         Py_ssize_t d) noexcept:
    cdef Py_ssize_t a, b
    cdef cplx acc
    for a in range(d):
        acc = 0
        for b in range(d):
            acc = acc + m[a, b] * v[b]
        out[a] = acc


cdef inline double _re_inner(cplx[::1] u, cplx[::1] v, Py_ssize_t d) noexcept:
    cdef double acc = 0.0
    cdef Py_ssize_t a
    for a in range(d):
        acc += u[a].real * v[a].real + u[a].imag * v[a].imag
    return acc


cdef inline cplx _inner(cplx[::1] u, cplx[::1] v, Py_ssize_t d) noexcept:
    cdef cplx acc = 0
    cdef Py_ssize_t a
    for a in range(d):
        acc = acc + u[a].conjugate() * v[a]
    return acc


# ---------------------------------------------------------------------------
# white-noise schemes

def ito_white(psi0, h, a_ops, a_sq, double coupling, xi_in, w, double dt,
              out_idx):
    cdef cplx[:, ::1] psi = np.array(psi0, dtype=complex)
    cdef cplx[:, ::1] hm = np.ascontiguousarray(h, dtype=complex)
    cdef cplx[:, :, ::1] am = np.ascontiguousarray(a_ops, dtype=complex)
    cdef cplx[:, :, ::1] am2 = np.ascontiguousarray(a_sq, dtype=complex)
    cdef double[:, :, ::1] wv = np.ascontiguousarray(w, dtype=float)
    cdef long[::1] oi = np.ascontiguousarray(out_idx, dtype=np.int64)
    cdef cplx xi = xi_in
    cdef double xr = xi.real, ax2 = xi.real ** 2 + xi.imag ** 2
    cdef double sg = sqrt(coupling)
    cdef Py_ssize_t p_n = psi.shape[0], d = psi.shape[1]
    cdef Py_ssize_t n = am.shape[0], m = wv.shape[2] - 1, k_out = oi.shape[0]
    out_arr = np.empty((p_n, k_out, d), dtype=complex)
    cdef cplx[:, :, ::1] out = out_arr
    scratch = np.empty((n, d), dtype=complex)
    cdef cplx[:, ::1] apsi = scratch
    cdef cplx[::1] newpsi = np.empty(d, dtype=complex)
    cdef cplx[::1] tmp = np.empty(d, dtype=complex)
    cdef double[::1] expv = np.empty(n)
    cdef Py_ssize_t p, k, i, a, ptr
    cdef double dw, nrm, sum_e2, sum_dw_e
    cdef cplx coef

    for p in range(p_n):
        ptr = 0
        if k_out > 0 and oi[0] == 0:
            for a in range(d):
                out[p, 0, a] = psi[p, a]
            ptr = 1
        for k in range(m):
            for i in range(n):
                _matvec(am[i], psi[p], apsi[i], d)
                expv[i] = _re_inner(psi[p], apsi[i], d)
            _matvec(hm, psi[p], tmp, d)
            sum_e2 = 0.0
            sum_dw_e = 0.0
            for i in range(n):
                sum_e2 += expv[i] * expv[i]
                sum_dw_e += wv[p, i, k] * dt * expv[i]
            for a in range(d):
                newpsi[a] = psi[p, a] \
                    - 1j * tmp[a] * dt \
                    - (sg * xr * sum_dw_e
                       + 0.5 * coupling * dt * xr * xr * sum_e2) * psi[p, a]
            for i in range(n):
                dw = wv[p, i, k] * dt
                coef = sg * xi * dw + coupling * dt * xi * xr * expv[i]
                _matvec(am2[i], psi[p], tmp, d)
                for a in range(d):
                    newpsi[a] = newpsi[a] + coef * apsi[i, a] \
                        - 0.5 * coupling * dt * ax2 * tmp[a]
            nrm = _norm(newpsi, d)
            if nrm < 1e-12:
                raise FloatingPointError("state norm collapsed below 1e-12 "
                                         "(step too large)")
            for a in range(d):
                psi[p, a] = newpsi[a] / nrm
            if ptr < k_out and oi[ptr] == k + 1:
                for a in range(d):
                    out[p, ptr, a] = psi[p, a]
                ptr += 1
    return out_arr


cdef void _strat_rhs_c(cplx[::1] psi, cplx[:, ::1] hm, cplx[:, :, ::1] am,
                       cplx[:, :, ::1] am2, double coupling, cplx xi,
                       double[::1] w_k, cplx[::1] f, cplx[:, ::1] apsi,
                       cplx[::1] tmp, double[::1] expv,
                       Py_ssize_t n, Py_ssize_t d) noexcept:
    cdef double xr = xi.real
    cdef double sg = sqrt(coupling)
    cdef Py_ssize_t i, a
    cdef double sum_we = 0.0, sum_e2 = 0.0, sum_exp2 = 0.0, e2
    cdef cplx coef
    _matvec(hm, psi, f, d)
    for a in range(d):
        f[a] = -1j * f[a]
    for i in range(n):
        _matvec(am[i], psi, apsi[i], d)
        expv[i] = _re_inner(psi, apsi[i], d)
        sum_we += w_k[i] * expv[i]
        sum_e2 += expv[i] * expv[i]
    for i in range(n):
        coef = sg * xi * w_k[i] + 2.0 * coupling * xr * xi * expv[i]
        _matvec(am2[i], psi, tmp, d)
        e2 = _re_inner(psi, tmp, d)
        sum_exp2 += e2
        for a in range(d):
            f[a] = f[a] + coef * apsi[i, a] - coupling * xr * xi * tmp[a]
    for a in range(d):
        f[a] = f[a] + (coupling * xr * xr * (sum_exp2 - 2.0 * sum_e2)
                       - sg * xr * sum_we) * psi[a]


def heun_white(psi0, h, a_ops, a_sq, double coupling, xi_in, w, double dt,
               out_idx):
    cdef cplx[:, ::1] psi = np.array(psi0, dtype=complex)
    cdef cplx[:, ::1] hm = np.ascontiguousarray(h, dtype=complex)
    cdef cplx[:, :, ::1] am = np.ascontiguousarray(a_ops, dtype=complex)
    cdef cplx[:, :, ::1] am2 = np.ascontiguousarray(a_sq, dtype=complex)
    cdef double[:, :, ::1] wv = np.ascontiguousarray(w, dtype=float)
    cdef long[::1] oi = np.ascontiguousarray(out_idx, dtype=np.int64)
    cdef cplx xi = xi_in
    cdef Py_ssize_t p_n = psi.shape[0], d = psi.shape[1]
    cdef Py_ssize_t n = am.shape[0], m = wv.shape[2] - 1, k_out = oi.shape[0]
    out_arr = np.empty((p_n, k_out, d), dtype=complex)
    cdef cplx[:, :, ::1] out = out_arr
    cdef cplx[:, ::1] apsi = np.empty((n, d), dtype=complex)
    cdef cplx[::1] tmp = np.empty(d, dtype=complex)
    cdef cplx[::1] f0 = np.empty(d, dtype=complex)
    cdef cplx[::1] f1 = np.empty(d, dtype=complex)
    cdef cplx[::1] pred = np.empty(d, dtype=complex)
    cdef double[::1] expv = np.empty(n)
    cdef double[::1] w_k = np.empty(n)
    cdef Py_ssize_t p, k, i, a, ptr
    cdef double nrm

    for p in range(p_n):
        ptr = 0
        if k_out > 0 and oi[0] == 0:
            for a in range(d):
                out[p, 0, a] = psi[p, a]
            ptr = 1
        for k in range(m):
            for i in range(n):
                w_k[i] = wv[p, i, k]
            _strat_rhs_c(psi[p], hm, am, am2, coupling, xi, w_k, f0,
                         apsi, tmp, expv, n, d)
            for a in range(d):
                pred[a] = psi[p, a] + dt * f0[a]
            _strat_rhs_c(pred, hm, am, am2, coupling, xi, w_k, f1,
                         apsi, tmp, expv, n, d)
            for a in range(d):
                psi[p, a] = psi[p, a] + 0.5 * dt * (f0[a] + f1[a])
            nrm = _norm(psi[p], d)
            if nrm < 1e-12:
                raise FloatingPointError("state norm collapsed below 1e-12")
            for a in range(d):
                psi[p, a] = psi[p, a] / nrm
            if ptr < k_out and oi[ptr] == k + 1:
                for a in range(d):
                    out[p, ptr, a] = psi[p, a]
                ptr += 1
    return out_arr


# ---------------------------------------------------------------------------
# commuting-family nonlinear scheme (joint eigenbasis amplitudes)

cdef void _commuting_rhs_c(cplx[::1] b, double[:, ::1] lam, double[:, ::1] f_k,
                           double[::1] w_k, double coupling, cplx xi,
                           cplx[::1] f, double[::1] prob, double[::1] expv,
                           double[::1] lam_f_lam_cache, bint use_cache,
                           Py_ssize_t n, Py_ssize_t d) noexcept:
    cdef double xr = xi.real
    cdef double sg = sqrt(coupling)
    cdef Py_ssize_t i, j, a
    cdef double tot = 0.0, w_exp = 0.0, s_f_s = 0.0, e_ij
    cdef cplx coef
    for a in range(d):
        prob[a] = b[a].real * b[a].real + b[a].imag * b[a].imag
        tot += prob[a]
    for a in range(d):
        prob[a] /= tot
    for i in range(n):
        expv[i] = 0.0
        for a in range(d):
            expv[i] += lam[i, a] * prob[a]
        w_exp += w_k[i] * expv[i]
    for i in range(n):
        for j in range(n):
            e_ij = 0.0
            for a in range(d):
                e_ij += lam[i, a] * lam[j, a] * prob[a]
            s_f_s += e_ij * f_k[i, j]
    for a in range(d):
        coef = -sg * xr * w_exp + 2.0 * coupling * xr * xr * s_f_s
        for i in range(n):
            coef = coef + sg * xi * lam[i, a] * w_k[i]
        if use_cache:
            coef = coef - 2.0 * coupling * xr * xi * lam_f_lam_cache[a]
        f[a] = coef * b[a]


def heun_commuting(b0, lam_in, f_series, double coupling, xi_in, w, double dt,
                   out_idx):
    cdef cplx[:, ::1] b = np.array(b0, dtype=complex)
    cdef double[:, ::1] lam = np.ascontiguousarray(lam_in, dtype=float)
    cdef double[:, :, ::1] fs = np.ascontiguousarray(f_series, dtype=float)
    cdef double[:, :, ::1] wv = np.ascontiguousarray(w, dtype=float)
    cdef long[::1] oi = np.ascontiguousarray(out_idx, dtype=np.int64)
    cdef cplx xi = xi_in
    cdef Py_ssize_t p_n = b.shape[0], d = b.shape[1]
    cdef Py_ssize_t n = lam.shape[0], m = wv.shape[2] - 1, k_out = oi.shape[0]
    # lam_f_lam[k, a] = sum_ij lam_ia F_ij(t_k) lam_ja, deterministic
    lam_np = np.asarray(lam_in, dtype=float)
    lfl_arr = np.einsum("nd,knm,md->kd", lam_np,
                        np.asarray(f_series, dtype=float), lam_np)
    cdef double[:, ::1] lfl = np.ascontiguousarray(lfl_arr)
    out_arr = np.empty((p_n, k_out, d), dtype=complex)
    cdef cplx[:, :, ::1] out = out_arr
    cdef cplx[::1] f0 = np.empty(d, dtype=complex)
    cdef cplx[::1] f1 = np.empty(d, dtype=complex)
    cdef cplx[::1] pred = np.empty(d, dtype=complex)
    cdef double[::1] prob = np.empty(d)
    cdef double[::1] expv = np.empty(n)
    cdef double[::1] w_k = np.empty(n)
    cdef Py_ssize_t p, k, i, a, ptr
    cdef double nrm

    for p in range(p_n):
        ptr = 0
        if k_out > 0 and oi[0] == 0:
            for a in range(d):
                out[p, 0, a] = b[p, a]
            ptr = 1
        for k in range(m):
            for i in range(n):
                w_k[i] = wv[p, i, k]
            _commuting_rhs_c(b[p], lam, fs[k], w_k, coupling, xi, f0,
                             prob, expv, lfl[k], True, n, d)
            for a in range(d):
                pred[a] = b[p, a] + dt * f0[a]
            for i in range(n):
                w_k[i] = wv[p, i, k + 1]
            _commuting_rhs_c(pred, lam, fs[k + 1], w_k, coupling, xi, f1,
                             prob, expv, lfl[k + 1], True, n, d)
            for a in range(d):
                b[p, a] = b[p, a] + 0.5 * dt * (f0[a] + f1[a])
            nrm = _norm(b[p], d)
            if nrm < 1e-12:
                raise FloatingPointError("state norm collapsed below 1e-12")
            for a in range(d):
                b[p, a] = b[p, a] / nrm
            if ptr < k_out and oi[ptr] == k + 1:
                for a in range(d):
                    out[p, ptr, a] = b[p, a]
                ptr += 1
    return out_arr


# ---------------------------------------------------------------------------
# norm-preserving memory unraveling (interaction picture)

cdef void _memory_rhs_c(cplx[::1] chi, cplx[:, :, ::1] a_k,
                        cplx[:, :, ::1] w_hat_k, double[::1] w_k,
                        double coupling, cplx xi, cplx[::1] f,
                        cplx[:, ::1] achi, cplx[:, ::1] wchi, cplx[::1] tmp,
                        Py_ssize_t n, Py_ssize_t d) noexcept:
    cdef double xr = xi.real, xim = xi.imag
    cdef double sg = sqrt(coupling)
    cdef Py_ssize_t i, a
    cdef double nrm2 = 0.0, sum_w_alpha = 0.0, b_sa_exp = 0.0
    cdef double alpha, omega, anti, comm
    cdef cplx exp_aw, exp_wa, coef
    for a in range(d):
        nrm2 += chi[a].real * chi[a].real + chi[a].imag * chi[a].imag
        f[a] = 0
    for i in range(n):
        _matvec(a_k[i], chi, achi[i], d)
        _matvec(w_hat_k[i], chi, wchi[i], d)
        alpha = _re_inner(chi, achi[i], d) / nrm2
        omega = _re_inner(chi, wchi[i], d) / nrm2
        sum_w_alpha += w_k[i] * alpha
        # A_i (W_i chi) and W_i (A_i chi)
        _matvec(a_k[i], wchi[i], tmp, d)
        exp_aw = _inner(chi, tmp, d) / nrm2
        for a in range(d):
            f[a] = f[a] + sg * xi * w_k[i] * achi[i, a] \
                - 2.0 * coupling * xr * xi * (tmp[a] - omega * achi[i, a]
                                              - alpha * wchi[i, a])
        _matvec(w_hat_k[i], achi[i], tmp, d)
        exp_wa = _inner(chi, tmp, d) / nrm2
        anti = exp_aw.real + exp_wa.real
        comm = exp_aw.imag - exp_wa.imag
        b_sa_exp += -(xr * xr * (anti - 4.0 * alpha * omega) - xim * xr * comm)
    for a in range(d):
        f[a] = f[a] - (sg * xr * sum_w_alpha + coupling * b_sa_exp) * chi[a]


def heun_memory(chi0, a_hat, w_hat, double coupling, xi_in, w, double dt,
                out_idx):
    cdef cplx[:, ::1] chi = np.array(chi0, dtype=complex)
    cdef cplx[:, :, :, ::1] ah = np.ascontiguousarray(a_hat, dtype=complex)
    cdef cplx[:, :, :, ::1] wh = np.ascontiguousarray(w_hat, dtype=complex)
    cdef double[:, :, ::1] wv = np.ascontiguousarray(w, dtype=float)
    cdef long[::1] oi = np.ascontiguousarray(out_idx, dtype=np.int64)
    cdef cplx xi = xi_in
    cdef Py_ssize_t p_n = chi.shape[0], d = chi.shape[1]
    cdef Py_ssize_t n = ah.shape[1], m = wv.shape[2] - 1, k_out = oi.shape[0]
    out_arr = np.empty((p_n, k_out, d), dtype=complex)
    norms_arr = np.empty((p_n, k_out))
    drift_arr = np.zeros(p_n)
    cdef cplx[:, :, ::1] out = out_arr
    cdef double[:, ::1] norms = norms_arr
    cdef double[::1] drift = drift_arr
    cdef cplx[:, ::1] achi = np.empty((n, d), dtype=complex)
    cdef cplx[:, ::1] wchi = np.empty((n, d), dtype=complex)
    cdef cplx[::1] tmp = np.empty(d, dtype=complex)
    cdef cplx[::1] f0 = np.empty(d, dtype=complex)
    cdef cplx[::1] f1 = np.empty(d, dtype=complex)
    cdef cplx[::1] pred = np.empty(d, dtype=complex)
    cdef double[::1] w_k = np.empty(n)
    cdef Py_ssize_t p, k, i, a, ptr
    cdef double nrm

    for p in range(p_n):
        ptr = 0
        if k_out > 0 and oi[0] == 0:
            for a in range(d):
                out[p, 0, a] = chi[p, a]
            norms[p, 0] = _norm(chi[p], d)
            ptr = 1
        for k in range(m):
            for i in range(n):
                w_k[i] = wv[p, i, k]
            _memory_rhs_c(chi[p], ah[k], wh[k], w_k, coupling, xi, f0,
                          achi, wchi, tmp, n, d)
            for a in range(d):
                pred[a] = chi[p, a] + dt * f0[a]
            for i in range(n):
                w_k[i] = wv[p, i, k + 1]
            _memory_rhs_c(pred, ah[k + 1], wh[k + 1], w_k, coupling, xi, f1,
                          achi, wchi, tmp, n, d)
            for a in range(d):
                chi[p, a] = chi[p, a] + 0.5 * dt * (f0[a] + f1[a])
            nrm = _norm(chi[p], d)
            if fabs(nrm - 1.0) > drift[p]:
                drift[p] = fabs(nrm - 1.0)
            if ptr < k_out and oi[ptr] == k + 1:
                for a in range(d):
                    out[p, ptr, a] = chi[p, a]
                norms[p, ptr] = nrm
                ptr += 1
    return out_arr, norms_arr, drift_arr


# ---------------------------------------------------------------------------
# linear memory-drift scheme (interaction picture, unnormalized)

def heun_linear_memory(phi0, a_hat, g_det, double coupling, xi_in, w,
                       double dt, out_idx):
    cdef cplx[:, ::1] phi = np.array(phi0, dtype=complex)
    cdef cplx[:, :, :, ::1] ah = np.ascontiguousarray(a_hat, dtype=complex)
    cdef cplx[:, :, ::1] gd = np.ascontiguousarray(g_det, dtype=complex)
    cdef double[:, :, ::1] wv = np.ascontiguousarray(w, dtype=float)
    cdef long[::1] oi = np.ascontiguousarray(out_idx, dtype=np.int64)
    cdef cplx xi = xi_in
    cdef double sg = sqrt(coupling)
    cdef Py_ssize_t p_n = phi.shape[0], d = phi.shape[1]
    cdef Py_ssize_t n = ah.shape[1], m = wv.shape[2] - 1, k_out = oi.shape[0]
    out_arr = np.empty((p_n, k_out, d), dtype=complex)
    cdef cplx[:, :, ::1] out = out_arr
    cdef cplx[::1] f0 = np.empty(d, dtype=complex)
    cdef cplx[::1] f1 = np.empty(d, dtype=complex)
    cdef cplx[::1] pred = np.empty(d, dtype=complex)
    cdef cplx[::1] tmp = np.empty(d, dtype=complex)
    cdef Py_ssize_t p, k, i, a, ptr

    for p in range(p_n):
        ptr = 0
        if k_out > 0 and oi[0] == 0:
            for a in range(d):
                out[p, 0, a] = phi[p, a]
            ptr = 1
        for k in range(m):
            _matvec(gd[k], phi[p], f0, d)
            for i in range(n):
                _matvec(ah[k, i], phi[p], tmp, d)
                for a in range(d):
                    f0[a] = f0[a] + sg * xi * wv[p, i, k] * tmp[a]
            for a in range(d):
                pred[a] = phi[p, a] + dt * f0[a]
            _matvec(gd[k + 1], pred, f1, d)
            for i in range(n):
                _matvec(ah[k + 1, i], pred, tmp, d)
                for a in range(d):
                    f1[a] = f1[a] + sg * xi * wv[p, i, k + 1] * tmp[a]
            for a in range(d):
                phi[p, a] = phi[p, a] + 0.5 * dt * (f0[a] + f1[a])
            if ptr < k_out and oi[ptr] == k + 1:
                for a in range(d):
                    out[p, ptr, a] = phi[p, a]
                ptr += 1
    return out_arr
