"""Pure-numpy trajectory steppers, batched over an ensemble of paths.

Reference implementations of the hot per-step loops; the Cython module
`_core` mirrors these exactly (same discretization, per-path loops).  All
states are complex arrays of shape (P, d); noise enters as (P, N, M+1)
samples (white schemes consume the first M columns as scaled increments).

Recorded output is thinned to the requested knot indices `out_idx`
(sorted, values in 0..M) so ensemble memory stays bounded.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def _expectations(states, ops):
    """<A_i> per path: states (P,d), ops (N,d,d) -> (P,N) real, plus A_i|psi>."""
    apsi = np.einsum("nde,pe->pnd", ops, states)
    exp = np.einsum("pd,pnd->pn", states.conj(), apsi).real
    return exp, apsi


def _record(store, states, k, out_idx, ptr):
    if ptr < len(out_idx) and out_idx[ptr] == k:
        store[:, ptr, :] = states
        return ptr + 1
    return ptr


def ito_white(psi0, h, a_ops, a_sq, coupling, xi, w, dt, out_idx):
    """Euler-Maruyama steps of the Ito white-noise equation, renormalizing
    after each step.  w holds scaled increments dW/dt.  Returns (P, K, d)."""
    psi = np.array(psi0, dtype=complex)
    m = w.shape[2] - 1
    xr, ax2 = xi.real, abs(xi) ** 2
    sg = np.sqrt(coupling)
    out = np.empty((psi.shape[0], len(out_idx), psi.shape[1]), dtype=complex)
    ptr = _record(out, psi, 0, out_idx, 0)
    for k in range(m):
        exp, apsi = _expectations(psi, a_ops)
        asq_psi = np.einsum("nde,pe->pnd", a_sq, psi)
        dw = w[:, :, k] * dt                                    # (P, N)
        stoch = sg * np.einsum("pn,pnd->pd", dw, xi * apsi)
        stoch -= sg * xr * np.sum(dw * exp, axis=1)[:, None] * psi
        drift = -1j * (psi @ h.T) * dt
        drift -= 0.5 * coupling * dt * ax2 * asq_psi.sum(axis=1)
        drift += coupling * dt * xi * xr * np.einsum("pn,pnd->pd", exp, apsi)
        drift -= 0.5 * coupling * dt * xr * xr * np.sum(exp * exp, axis=1)[:, None] * psi
        psi = psi + stoch + drift
        nrm = np.linalg.norm(psi, axis=1)
        if np.any(nrm < 1e-12):
            raise FloatingPointError("state norm collapsed below 1e-12 "
                                     "(step too large)")
        psi = psi / nrm[:, None]
        ptr = _record(out, psi, k + 1, out_idx, ptr)
    return out


def _strat_rhs(psi, h, a_ops, a_sq, coupling, xi, w_k):
    """Right side of the Stratonovich white-noise equation at noise values w_k."""
    xr = xi.real
    sg = np.sqrt(coupling)
    exp, apsi = _expectations(psi, a_ops)
    asq_psi = np.einsum("nde,pe->pnd", a_sq, psi)
    exp2 = np.einsum("pd,pnd->pn", psi.conj(), asq_psi).real
    f = -1j * (psi @ h.T)
    f += sg * np.einsum("pn,pnd->pd", w_k, xi * apsi)
    f -= sg * xr * np.sum(w_k * exp, axis=1)[:, None] * psi
    f -= coupling * xr * xi * asq_psi.sum(axis=1)
    f += 2.0 * coupling * xr * xi * np.einsum("pn,pnd->pd", exp, apsi)
    f += coupling * xr * xr * (np.sum(exp2, axis=1)
                               - 2.0 * np.sum(exp * exp, axis=1))[:, None] * psi
    return f


def heun_white(psi0, h, a_ops, a_sq, coupling, xi, w, dt, out_idx):
    """Heun (predictor-corrector) steps of the Stratonovich white-noise
    equation with the increment frozen across the step; renormalizes."""
    psi = np.array(psi0, dtype=complex)
    m = w.shape[2] - 1
    out = np.empty((psi.shape[0], len(out_idx), psi.shape[1]), dtype=complex)
    ptr = _record(out, psi, 0, out_idx, 0)
    for k in range(m):
        w_k = w[:, :, k]
        f0 = _strat_rhs(psi, h, a_ops, a_sq, coupling, xi, w_k)
        pred = psi + dt * f0
        f1 = _strat_rhs(pred, h, a_ops, a_sq, coupling, xi, w_k)
        psi = psi + 0.5 * dt * (f0 + f1)
        nrm = np.linalg.norm(psi, axis=1)
        if np.any(nrm < 1e-12):
            raise FloatingPointError("state norm collapsed below 1e-12")
        psi = psi / nrm[:, None]
        ptr = _record(out, psi, k + 1, out_idx, ptr)
    return out


def _commuting_rhs(b, lam, f_k, w_k, coupling, xi):
    xr = xi.real
    sg = np.sqrt(coupling)
    prob = np.abs(b) ** 2
    prob /= prob.sum(axis=1)[:, None]
    exp = prob @ lam.T                                          # (P, N)
    exp_aa = np.einsum("nd,md,pd->pnm", lam, lam, prob)         # (P, N, N)
    lam_w = np.einsum("nd,pn->pd", lam, w_k)
    w_exp = np.sum(w_k * exp, axis=1)
    lam_f_lam = np.einsum("nd,nm,md->d", lam, f_k, lam)
    s_f_s = np.einsum("pnm,nm->p", exp_aa, f_k)
    coef = sg * (xi * lam_w - xr * w_exp[:, None])
    coef -= 2.0 * coupling * xr * (xi * lam_f_lam[None, :] - xr * s_f_s[:, None])
    return coef * b


def heun_commuting(b0, lam, f_series, coupling, xi, w, dt, out_idx):
    """Heun steps of the nonlinear commuting-family equation in the joint
    eigenbasis (amplitudes b_a), renormalizing each step.  f_series holds
    the running kernel integral at every knot, shape (M+1, N, N)."""
    b = np.array(b0, dtype=complex)
    m = w.shape[2] - 1
    out = np.empty((b.shape[0], len(out_idx), b.shape[1]), dtype=complex)
    ptr = _record(out, b, 0, out_idx, 0)
    for k in range(m):
        f0 = _commuting_rhs(b, lam, f_series[k], w[:, :, k], coupling, xi)
        pred = b + dt * f0
        f1 = _commuting_rhs(pred, lam, f_series[k + 1], w[:, :, k + 1],
                            coupling, xi)
        b = b + 0.5 * dt * (f0 + f1)
        nrm = np.linalg.norm(b, axis=1)
        if np.any(nrm < 1e-12):
            raise FloatingPointError("state norm collapsed below 1e-12")
        b = b / nrm[:, None]
        ptr = _record(out, b, k + 1, out_idx, ptr)
    return out


def _memory_rhs(chi, a_k, w_hat_k, w_k, coupling, xi):
    """Drift of the norm-preserving memory unraveling, interaction picture."""
    xr, xim = xi.real, xi.imag
    sg = np.sqrt(coupling)
    nrm2 = np.einsum("pd,pd->p", chi.conj(), chi).real
    achi = np.einsum("nde,pe->pnd", a_k, chi)
    wchi = np.einsum("nde,pe->pnd", w_hat_k, chi)
    alpha = np.einsum("pd,pnd->pn", chi.conj(), achi).real / nrm2[:, None]
    omega = np.einsum("pd,pnd->pn", chi.conj(), wchi).real / nrm2[:, None]
    aw_chi = np.einsum("nde,pne->pnd", a_k, wchi)
    wa_chi = np.einsum("nde,pne->pnd", w_hat_k, achi)
    # noise coupling
    f = sg * np.einsum("pn,pnd->pd", w_k, xi * achi)
    f -= sg * xr * np.sum(w_k * alpha, axis=1)[:, None] * chi
    # operator part of the deterministic order-coupling drift
    det = aw_chi - omega[:, :, None] * achi - alpha[:, :, None] * wchi
    f -= 2.0 * coupling * xr * xi * det.sum(axis=1)
    # subtract the expectation of the self-adjoint piece
    exp_aw = np.einsum("pd,pnd->pn", chi.conj(), aw_chi) / nrm2[:, None]
    exp_wa = np.einsum("pd,pnd->pn", chi.conj(), wa_chi) / nrm2[:, None]
    anti = (exp_aw + exp_wa).real
    comm = (exp_aw - exp_wa).imag
    b_sa_exp = -(xr * xr * np.sum(anti - 4.0 * alpha * omega, axis=1)
                 - xim * xr * np.sum(comm, axis=1))
    f -= coupling * b_sa_exp[:, None] * chi
    return f


def heun_memory(chi0, a_hat, w_hat, coupling, xi, w, dt, out_idx):
    """Heun steps of the norm-preserving memory unraveling in the
    interaction picture.  a_hat/w_hat are (M+1, N, d, d) operator tables.

    Returns (states (P,K,d), norms (P,K), max |norm-1| per path)."""
    chi = np.array(chi0, dtype=complex)
    m = w.shape[2] - 1
    p = chi.shape[0]
    out = np.empty((p, len(out_idx), chi.shape[1]), dtype=complex)
    norms = np.empty((p, len(out_idx)))
    drift = np.zeros(p)
    ptr = 0
    if len(out_idx) and out_idx[0] == 0:
        out[:, 0, :] = chi
        norms[:, 0] = np.linalg.norm(chi, axis=1)
        ptr = 1
    for k in range(m):
        f0 = _memory_rhs(chi, a_hat[k], w_hat[k], w[:, :, k], coupling, xi)
        pred = chi + dt * f0
        f1 = _memory_rhs(pred, a_hat[k + 1], w_hat[k + 1], w[:, :, k + 1],
                         coupling, xi)
        chi = chi + 0.5 * dt * (f0 + f1)
        nrm = np.linalg.norm(chi, axis=1)
        drift = np.maximum(drift, np.abs(nrm - 1.0))
        if ptr < len(out_idx) and out_idx[ptr] == k + 1:
            out[:, ptr, :] = chi
            norms[:, ptr] = nrm
            ptr += 1
    return out, norms, drift


def heun_linear_memory(phi0, a_hat, g_det, coupling, xi, w, dt, out_idx):
    """Heun steps of the linear memory-drift equation (interaction picture,
    no renormalization).  g_det is the precomputed deterministic drift
    matrix at every knot, shape (M+1, d, d).  Returns (P, K, d)."""
    phi = np.array(phi0, dtype=complex)
    m = w.shape[2] - 1
    sg = np.sqrt(coupling)
    out = np.empty((phi.shape[0], len(out_idx), phi.shape[1]), dtype=complex)
    ptr = _record(out, phi, 0, out_idx, 0)

    def rhs(state, k):
        achi = np.einsum("nde,pe->pnd", a_hat[k], state)
        f = sg * xi * np.einsum("pn,pnd->pd", w[:, :, k], achi)
        return f + np.einsum("de,pe->pd", g_det[k], state)

    for k in range(m):
        f0 = rhs(phi, k)
        f1 = rhs(phi + dt * f0, k + 1)
        phi = phi + 0.5 * dt * (f0 + f1)
        ptr = _record(out, phi, k + 1, out_idx, ptr)
    return out
