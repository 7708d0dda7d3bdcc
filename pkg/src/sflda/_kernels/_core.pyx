# cython: language_level=3
"""Compiled kernels: the hot inner loops behind the smoother grid search and
the Fisher-scoring M-step. Semantics and status codes mirror `_pure` exactly;
tests assert numerical equivalence between the two backends."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, isfinite, log

cnp.import_array()

BACKEND_NAME = "compiled"

cdef double LOG_2PI = 1.8378770664093453


# ---------------------------------------------------------------------------
# dense LU with partial pivoting (systems here are at most ~65 x 65)
# ---------------------------------------------------------------------------

cdef int _lu_factor(double[:, ::1] a, int[::1] piv) noexcept nogil:
    cdef int n = a.shape[0]
    cdef int i, j, k, p
    cdef double mx, tmp, mult
    for k in range(n):
        p = k
        mx = fabs(a[k, k])
        for i in range(k + 1, n):
            if fabs(a[i, k]) > mx:
                mx = fabs(a[i, k])
                p = i
        piv[k] = p
        if mx == 0.0 or not isfinite(mx):
            return -1
        if p != k:
            for j in range(n):
                tmp = a[k, j]
                a[k, j] = a[p, j]
                a[p, j] = tmp
        for i in range(k + 1, n):
            a[i, k] /= a[k, k]
            mult = a[i, k]
            for j in range(k + 1, n):
                a[i, j] -= mult * a[k, j]
    return 0


cdef void _lu_solve(double[:, ::1] lu, int[::1] piv, double[::1] b) noexcept nogil:
    cdef int n = lu.shape[0]
    cdef int i, j
    cdef double s, tmp
    for i in range(n):
        if piv[i] != i:
            tmp = b[i]
            b[i] = b[piv[i]]
            b[piv[i]] = tmp
    for i in range(n):
        s = b[i]
        for j in range(i):
            s -= lu[i, j] * b[j]
        b[i] = s
    for i in range(n - 1, -1, -1):
        s = b[i]
        for j in range(i + 1, n):
            s -= lu[i, j] * b[j]
        b[i] = s / lu[i, i]


# ---------------------------------------------------------------------------
# penalized smoother over a zeta grid
# ---------------------------------------------------------------------------

def smooth_grid(Phi, x, pen, zetas, int max_iter=100, double rtol=1e-10,
                double var_floor=1e-12, double init_ridge=1e-8):
    """See `_pure.smooth_grid`; identical contract and status codes."""
    cdef double[:, ::1] phi = np.ascontiguousarray(Phi, dtype=np.float64)
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] pn = np.ascontiguousarray(pen, dtype=np.float64)
    cdef double[::1] zt = np.ascontiguousarray(zetas, dtype=np.float64)
    cdef int n = phi.shape[0]
    cdef int m = phi.shape[1]
    cdef int g = zt.shape[0]

    omega_np = np.zeros((g, m), dtype=np.float64)
    sigma2_np = np.zeros(g, dtype=np.float64)
    gic_np = np.full(g, np.nan, dtype=np.float64)
    iters_np = np.zeros(g, dtype=np.int32)
    status_np = np.zeros(g, dtype=np.int32)
    cdef double[:, ::1] omega = omega_np
    cdef double[::1] sigma2 = sigma2_np
    cdef double[::1] gic = gic_np
    cdef int[::1] iters = iters_np
    cdef int[::1] status = status_np

    cdef double[:, ::1] gram = np.zeros((m, m), dtype=np.float64)
    cdef double[::1] b = np.zeros(m, dtype=np.float64)
    cdef double[:, ::1] amat = np.zeros((m, m), dtype=np.float64)
    cdef int[::1] piv = np.zeros(m, dtype=np.int32)
    cdef double[::1] sol = np.zeros(m, dtype=np.float64)
    cdef double[::1] wprev = np.zeros(m, dtype=np.float64)
    cdef double[::1] w0 = np.zeros(m, dtype=np.float64)
    cdef double[::1] resid = np.zeros(n, dtype=np.float64)

    cdef double[::1] u1 = np.zeros(m, dtype=np.float64)
    cdef double[::1] u3 = np.zeros(m, dtype=np.float64)
    cdef double[::1] kw = np.zeros(m, dtype=np.float64)
    cdef double[:, ::1] m2 = np.zeros((m, m), dtype=np.float64)
    cdef double[:, ::1] qmat = np.zeros((m + 1, m + 1), dtype=np.float64)
    cdef double[:, ::1] rmat = np.zeros((m + 1, m + 1), dtype=np.float64)
    cdef int[::1] piv1 = np.zeros(m + 1, dtype=np.int32)
    cdef double[::1] col = np.zeros(m + 1, dtype=np.float64)

    cdef int i, j, k, gi, it, ok
    cdef double s, rss, s0, sprev, snew, coeff, dw, ds, wscale, ri
    cdef double s2, qf, s4, tr, gval

    with nogil:
        for i in range(m):
            for j in range(m):
                s = 0.0
                for k in range(n):
                    s += phi[k, i] * phi[k, j]
                gram[i, j] = s
            s = 0.0
            for k in range(n):
                s += phi[k, i] * xv[k]
            b[i] = s

        # ridge-stabilized OLS start shared by every zeta
        for i in range(m):
            for j in range(m):
                amat[i, j] = gram[i, j]
            amat[i, i] += init_ridge
        ok = _lu_factor(amat, piv)
        if ok == 0:
            for i in range(m):
                w0[i] = b[i]
            _lu_solve(amat, piv, w0)
            for i in range(m):
                if not isfinite(w0[i]):
                    ok = -1
                    break
        if ok != 0:
            for gi in range(g):
                status[gi] = 1
        else:
            rss = 0.0
            for k in range(n):
                s = xv[k]
                for j in range(m):
                    s -= phi[k, j] * w0[j]
                rss += s * s
            s0 = rss / n
            if s0 < var_floor:
                s0 = var_floor

            for gi in range(g):
                for i in range(m):
                    wprev[i] = w0[i]
                    omega[gi, i] = w0[i]
                sprev = s0
                sigma2[gi] = s0
                status[gi] = 2
                for it in range(1, max_iter + 1):
                    iters[gi] = it
                    coeff = n * zt[gi] * sprev
                    for i in range(m):
                        for j in range(m):
                            amat[i, j] = gram[i, j] + coeff * pn[i, j]
                    if _lu_factor(amat, piv) != 0:
                        status[gi] = 1
                        break
                    for i in range(m):
                        sol[i] = b[i]
                    _lu_solve(amat, piv, sol)
                    ok = 1
                    for i in range(m):
                        if not isfinite(sol[i]):
                            ok = 0
                            break
                    if ok == 0:
                        status[gi] = 1
                        break
                    rss = 0.0
                    for k in range(n):
                        s = xv[k]
                        for j in range(m):
                            s -= phi[k, j] * sol[j]
                        resid[k] = s
                        rss += s * s
                    snew = rss / n
                    if snew < var_floor:
                        snew = var_floor
                    if not isfinite(snew):
                        status[gi] = 1
                        break
                    dw = 0.0
                    wscale = 1e-300
                    for i in range(m):
                        s = fabs(sol[i] - wprev[i])
                        if s > dw:
                            dw = s
                        if fabs(sol[i]) > wscale:
                            wscale = fabs(sol[i])
                        wprev[i] = sol[i]
                        omega[gi, i] = sol[i]
                    ds = fabs(snew - sprev)
                    sprev = snew
                    sigma2[gi] = snew
                    if dw <= rtol * wscale and ds <= rtol * snew:
                        status[gi] = 0
                        break

                if status[gi] != 0:
                    continue

                # criterion value at the converged fit
                s2 = sigma2[gi]
                qf = 1.0 / (n * s2)
                for k in range(n):
                    s = xv[k]
                    for j in range(m):
                        s -= phi[k, j] * omega[gi, j]
                    resid[k] = s
                s4 = 0.0
                for k in range(n):
                    ri = resid[k]
                    s4 += ri * ri * ri * ri
                for i in range(m):
                    s = 0.0
                    for k in range(n):
                        s += phi[k, i] * resid[k]
                    u1[i] = s
                    s = 0.0
                    for k in range(n):
                        s += phi[k, i] * resid[k] * resid[k] * resid[k]
                    u3[i] = s
                for i in range(m):
                    for j in range(m):
                        s = 0.0
                        for k in range(n):
                            s += phi[k, i] * resid[k] * resid[k] * phi[k, j]
                        m2[i, j] = s
                for i in range(m):
                    s = 0.0
                    for j in range(m):
                        s += pn[i, j] * omega[gi, j]
                    kw[i] = s
                for i in range(m):
                    for j in range(m):
                        qmat[i, j] = qf * (m2[i, j] / s2 - zt[gi] * kw[i] * u1[j])
                        rmat[i, j] = qf * (gram[i, j] + n * zt[gi] * s2 * pn[i, j])
                for i in range(m):
                    s = qf * (u3[i] / (2.0 * s2 * s2) - u1[i] / (2.0 * s2))
                    qmat[i, m] = s
                    qmat[m, i] = s
                    s = qf * u1[i] / s2
                    rmat[i, m] = s
                    rmat[m, i] = s
                qmat[m, m] = qf * (s4 / (4.0 * s2 * s2 * s2) - n / (4.0 * s2))
                rmat[m, m] = qf * n / (2.0 * s2)

                if _lu_factor(rmat, piv1) != 0:
                    status[gi] = 3
                    continue
                tr = 0.0
                ok = 1
                for j in range(m + 1):
                    for i in range(m + 1):
                        col[i] = qmat[i, j]
                    _lu_solve(rmat, piv1, col)
                    if not isfinite(col[j]):
                        ok = 0
                        break
                    tr += col[j]
                if ok == 0:
                    status[gi] = 3
                    continue
                gval = n * (LOG_2PI + log(s2)) + n + 2.0 * tr
                gic[gi] = gval

    return omega_np, sigma2_np, gic_np, iters_np, status_np


# ---------------------------------------------------------------------------
# multinomial logistic kernels
# ---------------------------------------------------------------------------

cdef double _objective(double[:, ::1] z, double[:, ::1] resp, double[:, ::1] beta,
                       double[:, ::1] kmat, double n1lam, double[::1] eta) noexcept nogil:
    cdef int n = z.shape[0]
    cdef int q = z.shape[1]
    cdef int lm1 = beta.shape[0]
    cdef int i, j, k
    cdef double obj = 0.0
    cdef double mx, lse, s, quad
    for i in range(n):
        mx = 0.0
        for k in range(lm1):
            s = 0.0
            for j in range(q):
                s += z[i, j] * beta[k, j]
            eta[k] = s
            if s > mx:
                mx = s
        lse = exp(-mx)
        for k in range(lm1):
            lse += exp(eta[k] - mx)
        lse = mx + log(lse)
        for k in range(lm1):
            obj += resp[i, k] * eta[k]
        obj -= lse
    quad = 0.0
    for k in range(lm1):
        for i in range(q):
            s = 0.0
            for j in range(q):
                s += kmat[i, j] * beta[k, j]
            quad += beta[k, i] * s
    return obj - 0.5 * n1lam * quad


cdef void _score_info(double[:, ::1] z, double[:, ::1] resp, double[:, ::1] beta,
                      double[:, ::1] kmat, double n1lam,
                      double[::1] grad, double[:, ::1] info,
                      double[::1] eta, double[::1] prob, double[:, ::1] zz) noexcept nogil:
    cdef int n = z.shape[0]
    cdef int q = z.shape[1]
    cdef int lm1 = beta.shape[0]
    cdef int p = lm1 * q
    cdef int i, j, k, l, a
    cdef double mx, lse, s, w, coef
    for i in range(p):
        grad[i] = 0.0
        for j in range(p):
            info[i, j] = 0.0
    for a in range(n):
        mx = 0.0
        for k in range(lm1):
            s = 0.0
            for j in range(q):
                s += z[a, j] * beta[k, j]
            eta[k] = s
            if s > mx:
                mx = s
        lse = exp(-mx)
        for k in range(lm1):
            lse += exp(eta[k] - mx)
        lse = mx + log(lse)
        for k in range(lm1):
            prob[k] = exp(eta[k] - lse)
        for i in range(q):
            for j in range(q):
                zz[i, j] = z[a, i] * z[a, j]
        for k in range(lm1):
            coef = resp[a, k] - prob[k]
            for j in range(q):
                grad[k * q + j] += coef * z[a, j]
            for l in range(k, lm1):
                if k == l:
                    w = prob[k] * (1.0 - prob[l])
                else:
                    w = -prob[k] * prob[l]
                for i in range(q):
                    for j in range(q):
                        info[k * q + i, l * q + j] += w * zz[i, j]
    # penalty contributions and the symmetric mirror
    for k in range(lm1):
        for i in range(q):
            s = 0.0
            for j in range(q):
                s += kmat[i, j] * beta[k, j]
            grad[k * q + i] -= n1lam * s
        for i in range(q):
            for j in range(q):
                info[k * q + i, k * q + j] += n1lam * kmat[i, j]
    for k in range(lm1):
        for l in range(k + 1, lm1):
            for i in range(q):
                for j in range(q):
                    info[l * q + i, k * q + j] = info[k * q + j, l * q + i]


def mn_objective(Z, R, beta, K, n1, lam):
    """See `_pure.mn_objective`."""
    cdef double[:, ::1] z = np.ascontiguousarray(Z, dtype=np.float64)
    cdef double[:, ::1] resp = np.ascontiguousarray(R, dtype=np.float64)
    cdef double[:, ::1] bt = np.ascontiguousarray(beta, dtype=np.float64)
    cdef double[:, ::1] kmat = np.ascontiguousarray(K, dtype=np.float64)
    cdef double[::1] eta = np.zeros(bt.shape[0], dtype=np.float64)
    return _objective(z, resp, bt, kmat, float(n1) * float(lam), eta)


def mn_score_info(Z, R, beta, K, n1, lam):
    """See `_pure.mn_score_info`."""
    cdef double[:, ::1] z = np.ascontiguousarray(Z, dtype=np.float64)
    cdef double[:, ::1] resp = np.ascontiguousarray(R, dtype=np.float64)
    cdef double[:, ::1] bt = np.ascontiguousarray(beta, dtype=np.float64)
    cdef double[:, ::1] kmat = np.ascontiguousarray(K, dtype=np.float64)
    cdef int lm1 = bt.shape[0]
    cdef int q = bt.shape[1]
    cdef int p = lm1 * q
    grad_np = np.zeros(p, dtype=np.float64)
    info_np = np.zeros((p, p), dtype=np.float64)
    cdef double[::1] grad = grad_np
    cdef double[:, ::1] info = info_np
    cdef double[::1] eta = np.zeros(lm1, dtype=np.float64)
    cdef double[::1] prob = np.zeros(lm1, dtype=np.float64)
    cdef double[:, ::1] zz = np.zeros((q, q), dtype=np.float64)
    _score_info(z, resp, bt, kmat, float(n1) * float(lam), grad, info, eta, prob, zz)
    return grad_np, info_np


def mn_mstep(Z, R, beta0, K, n1, lam, int max_iter=100, double gtol=1e-8,
             double min_step=2.0**-30):
    """See `_pure.mn_mstep`; identical contract and status codes."""
    cdef double[:, ::1] z = np.ascontiguousarray(Z, dtype=np.float64)
    cdef double[:, ::1] resp = np.ascontiguousarray(R, dtype=np.float64)
    cdef double[:, ::1] kmat = np.ascontiguousarray(K, dtype=np.float64)
    beta_np = np.array(beta0, dtype=np.float64, copy=True, order="C")
    cdef double[:, ::1] beta = beta_np
    cdef int lm1 = beta.shape[0]
    cdef int q = beta.shape[1]
    cdef int p = lm1 * q
    cdef double n1lam = float(n1) * float(lam)

    cand_np = np.zeros((lm1, q), dtype=np.float64)
    cdef double[:, ::1] cand = cand_np
    cdef double[::1] grad = np.zeros(p, dtype=np.float64)
    cdef double[:, ::1] info = np.zeros((p, p), dtype=np.float64)
    cdef double[::1] direction = np.zeros(p, dtype=np.float64)
    cdef int[::1] piv = np.zeros(p, dtype=np.int32)
    cdef double[::1] eta = np.zeros(lm1, dtype=np.float64)
    cdef double[::1] prob = np.zeros(lm1, dtype=np.float64)
    cdef double[:, ::1] zz = np.zeros((q, q), dtype=np.float64)

    cdef double obj, gnorm, step, cand_obj
    cdef int it, i, j, k, status

    obj = _objective(z, resp, beta, kmat, n1lam, eta)
    gnorm = 0.0
    with nogil:
        status = 1
        it = 0
        while it < max_iter:
            _score_info(z, resp, beta, kmat, n1lam, grad, info, eta, prob, zz)
            gnorm = 0.0
            for i in range(p):
                if fabs(grad[i]) > gnorm:
                    gnorm = fabs(grad[i])
            if gnorm <= gtol * (1.0 + fabs(obj)):
                status = 0
                break
            if _lu_factor(info, piv) != 0:
                status = 3
                break
            for i in range(p):
                direction[i] = grad[i]
            _lu_solve(info, piv, direction)
            for i in range(p):
                if not isfinite(direction[i]):
                    status = 3
                    break
            if status == 3:
                break
            step = 1.0
            while True:
                for k in range(lm1):
                    for j in range(q):
                        cand[k, j] = beta[k, j] + step * direction[k * q + j]
                cand_obj = _objective(z, resp, cand, kmat, n1lam, eta)
                if cand_obj >= obj and isfinite(cand_obj):
                    for k in range(lm1):
                        for j in range(q):
                            beta[k, j] = cand[k, j]
                    obj = cand_obj
                    break
                step *= 0.5
                if step < min_step:
                    status = 2
                    break
            if status == 2:
                break
            it += 1
        if status == 1:
            # iteration cap: report converged if the gradient is now small
            _score_info(z, resp, beta, kmat, n1lam, grad, info, eta, prob, zz)
            gnorm = 0.0
            for i in range(p):
                if fabs(grad[i]) > gnorm:
                    gnorm = fabs(grad[i])
            if gnorm <= gtol * (1.0 + fabs(obj)):
                status = 0

    return beta_np, it, status, obj, gnorm
